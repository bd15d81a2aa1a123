#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "aurum/error.hpp"
#include "aurum/mae.hpp"
#include "json.hpp"
#include "mae_layout.hpp"

namespace aurum {
namespace fs = std::filesystem;
using json = nlohmann::json;

namespace detail {

std::vector<SectionSpec> section_layout(const MaeConfig& c) {
  const std::size_t d = c.embed_dim;
  const std::size_t hidden = c.mlp_hidden();
  std::vector<SectionSpec> out;
  auto block = [&](const std::string& prefix) {
    out.push_back({prefix + ".ln1.gamma", 1, d, Init::Ones});
    out.push_back({prefix + ".ln1.beta", 1, d, Init::Zeros});
    out.push_back({prefix + ".attn.qkv.weight", d, 3 * d, Init::XavierUniform});
    out.push_back({prefix + ".attn.qkv.bias", 1, 3 * d, Init::Zeros});
    out.push_back({prefix + ".attn.proj.weight", d, d, Init::XavierUniform});
    out.push_back({prefix + ".attn.proj.bias", 1, d, Init::Zeros});
    out.push_back({prefix + ".ln2.gamma", 1, d, Init::Ones});
    out.push_back({prefix + ".ln2.beta", 1, d, Init::Zeros});
    out.push_back({prefix + ".mlp.fc1.weight", d, hidden, Init::XavierUniform});
    out.push_back({prefix + ".mlp.fc1.bias", 1, hidden, Init::Zeros});
    out.push_back({prefix + ".mlp.fc2.weight", hidden, d, Init::XavierUniform});
    out.push_back({prefix + ".mlp.fc2.bias", 1, d, Init::Zeros});
  };
  out.push_back({"embed.weight", c.token_dim, d, Init::XavierUniform});
  out.push_back({"embed.bias", 1, d, Init::Zeros});
  for (std::size_t i = 0; i < c.encoder_depth; ++i) block("encoder.blocks." + std::to_string(i));
  out.push_back({"encoder.norm.gamma", 1, d, Init::Ones});
  out.push_back({"encoder.norm.beta", 1, d, Init::Zeros});
  out.push_back({"decoder.embed.weight", d, d, Init::XavierUniform});
  out.push_back({"decoder.embed.bias", 1, d, Init::Zeros});
  out.push_back({"decoder.mask_token", 1, d, Init::SmallNormal});
  for (std::size_t i = 0; i < c.decoder_depth; ++i) block("decoder.blocks." + std::to_string(i));
  out.push_back({"decoder.norm.gamma", 1, d, Init::Ones});
  out.push_back({"decoder.norm.beta", 1, d, Init::Zeros});
  out.push_back({"decoder.head.weight", d, c.token_dim, Init::XavierUniform});
  out.push_back({"decoder.head.bias", 1, c.token_dim, Init::Zeros});
  return out;
}

}  // namespace detail

json mae_config_to_json(const MaeConfig& c) {
  return json{{"token_dim", c.token_dim},       {"embed_dim", c.embed_dim},
              {"encoder_depth", c.encoder_depth}, {"decoder_depth", c.decoder_depth},
              {"heads", c.heads},               {"mlp_ratio", c.mlp_ratio},
              {"mask_ratio", c.mask_ratio},     {"loss_scope", loss_scope_name(c.loss_scope)},
              {"deep_decoder", c.deep_decoder}, {"epochs", c.epochs},
              {"batch_size", c.batch_size},     {"learning_rate", c.learning_rate},
              {"seed", c.seed}};
}

MaeConfig mae_config_from_json(const json& j) {
  MaeConfig c;
  c.token_dim = j.at("token_dim").get<std::size_t>();
  c.embed_dim = j.at("embed_dim").get<std::size_t>();
  c.encoder_depth = j.at("encoder_depth").get<std::size_t>();
  c.decoder_depth = j.at("decoder_depth").get<std::size_t>();
  c.heads = j.at("heads").get<std::size_t>();
  c.mlp_ratio = j.at("mlp_ratio").get<double>();
  c.mask_ratio = j.at("mask_ratio").get<double>();
  c.loss_scope = parse_loss_scope(j.at("loss_scope").get<std::string>());
  c.deep_decoder = j.at("deep_decoder").get<bool>();
  c.epochs = j.at("epochs").get<std::size_t>();
  c.batch_size = j.at("batch_size").get<std::size_t>();
  c.learning_rate = j.at("learning_rate").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

namespace {

constexpr std::array<char, 4> kCheckpointMagic{'M', 'A', 'E', '1'};


void fnv(std::uint64_t& h, const void* data, std::size_t n) {
  const auto* bytes = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= bytes[i];
    h *= 0x100000001B3ULL;
  }
}

}  // namespace

const nn::Tensor<float>& MaeCheckpoint::section(const std::string& name) const {
  for (const auto& s : sections) {
    if (s.name == name) return s.tensor;
  }
  throw FormatError("checkpoint has no section '" + name + "'");
}

std::uint64_t MaeCheckpoint::fingerprint() const {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  const std::string cfg = mae_config_to_json(config).dump();
  fnv(h, cfg.data(), cfg.size());
  for (const auto* v : {&normalization.min, &normalization.max}) fnv(h, v->data(), v->size() * sizeof(double));
  for (const auto& s : sections) {
    fnv(h, s.name.data(), s.name.size());
    fnv(h, s.tensor.data(), s.tensor.size() * sizeof(float));
  }
  return h;
}

MaeCheckpoint init_checkpoint(const MaeConfig& config, BandStats normalization,
                              std::vector<std::string> band_names) {
  config.validate();
  MaeCheckpoint ckpt;
  ckpt.config = config;
  ckpt.normalization = std::move(normalization);
  ckpt.band_names = std::move(band_names);
  const auto layout = detail::section_layout(config);
  for (std::size_t i = 0; i < layout.size(); ++i) {
    const auto& spec = layout[i];
    nn::Tensor<float> t(spec.rows, spec.cols);
    Rng rng = Rng::derive(config.seed, 0x1000 + i);
    switch (spec.init) {
      case detail::Init::Zeros:
        break;
      case detail::Init::Ones:
        t.fill(1.0f);
        break;
      case detail::Init::XavierUniform: {
        const double limit = std::sqrt(6.0 / static_cast<double>(spec.rows + spec.cols));
        for (auto& v : t.values()) v = static_cast<float>(rng.uniform(-limit, limit));
        break;
      }
      case detail::Init::SmallNormal:
        for (auto& v : t.values()) v = static_cast<float>(rng.normal(0.0, 0.02));
        break;
    }
    ckpt.sections.push_back({spec.name, std::move(t)});
  }
  return ckpt;
}

void save_checkpoint(const MaeCheckpoint& ckpt, const fs::path& path) {
  json header{{"format_version", ckpt.format_version}, {"config", mae_config_to_json(ckpt.config)}};
  header["normalization"] = {{"band_min", ckpt.normalization.min},
                             {"band_max", ckpt.normalization.max},
                             {"band_names", ckpt.band_names}};
  json dir = json::array();
  std::size_t offset = 0;
  for (const auto& s : ckpt.sections) {
    dir.push_back({{"name", s.name},
                   {"shape", {s.tensor.rows(), s.tensor.cols()}},
                   {"offset", offset}});
    offset += s.tensor.size() * sizeof(float);
  }
  header["sections"] = std::move(dir);
  const std::string text = header.dump();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write checkpoint " + path.string());
  const auto len = static_cast<std::uint32_t>(text.size());
  out.write(kCheckpointMagic.data(), 4);
  out.write(reinterpret_cast<const char*>(&len), sizeof len);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& s : ckpt.sections) {
    out.write(reinterpret_cast<const char*>(s.tensor.data()),
              static_cast<std::streamsize>(s.tensor.size() * sizeof(float)));
  }
  if (!out) throw IoError("short write to " + path.string());
}

MaeCheckpoint load_checkpoint(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  std::array<char, 4> magic{};
  in.read(magic.data(), 4);
  if (in.gcount() != 4 || magic != kCheckpointMagic) {
    throw FormatError(path.string() + " does not start with the MAE1 magic");
  }
  std::uint32_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof len);
  std::string text(len, '\0');
  in.read(text.data(), len);
  if (static_cast<std::uint32_t>(in.gcount()) != len) throw TruncationError(path.string() + ": short header");
  std::vector<char> payload((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  MaeCheckpoint ckpt;
  try {
    const json header = json::parse(text);
    ckpt.format_version = header.at("format_version").get<int>();
    if (ckpt.format_version != MaeCheckpoint::kFormatVersion) {
      throw VersionError(path.string() + ": checkpoint format_version " +
                         std::to_string(ckpt.format_version) + " is not supported");
    }
    ckpt.config = mae_config_from_json(header.at("config"));
    const json& norm = header.at("normalization");
    ckpt.normalization.min = norm.at("band_min").get<std::vector<double>>();
    ckpt.normalization.max = norm.at("band_max").get<std::vector<double>>();
    ckpt.band_names = norm.at("band_names").get<std::vector<std::string>>();
    for (const auto& entry : header.at("sections")) {
      const auto shape = entry.at("shape").get<std::vector<std::size_t>>();
      const auto offset = entry.at("offset").get<std::size_t>();
      if (shape.size() != 2) throw FormatError(path.string() + ": sections must be rank 2");
      const std::size_t bytes = shape[0] * shape[1] * sizeof(float);
      if (offset + bytes > payload.size()) {
        throw TruncationError(path.string() + ": section " + entry.at("name").get<std::string>() +
                              " extends past the payload");
      }
      std::vector<float> vals(shape[0] * shape[1]);
      std::memcpy(vals.data(), payload.data() + offset, bytes);
      ckpt.sections.push_back({entry.at("name").get<std::string>(),
                               nn::Tensor<float>(shape[0], shape[1], std::move(vals))});
    }
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": bad checkpoint header (" + e.what() + ")");
  }
  ckpt.config.validate();
  for (const auto& spec : detail::section_layout(ckpt.config)) {
    const auto& t = ckpt.section(spec.name);
    if (t.rows() != spec.rows || t.cols() != spec.cols) {
      throw FormatError(path.string() + ": section " + spec.name + " has shape " + t.shape_string());
    }
  }
  return ckpt;
}

}  // namespace aurum
