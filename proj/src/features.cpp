#include "aurum/features.hpp"

#include <array>
#include <cstdint>
#include <fstream>
#include <unordered_map>

#include "aurum/error.hpp"
#include "json.hpp"

namespace aurum {
namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {
constexpr std::array<char, 4> kFeatureMagic{'E', 'M', 'B', '1'};
}

const char* feature_mode_name(FeatureMode mode) noexcept {
  return mode == FeatureMode::Raw ? "raw" : "embeddings";
}

FeatureMode parse_feature_mode(const std::string& text) {
  if (text == "raw") return FeatureMode::Raw;
  if (text == "embeddings") return FeatureMode::Embeddings;
  throw ParameterError("feature mode must be 'raw' or 'embeddings', got '" + text + "'");
}

std::vector<int> EmbeddingMatrix::labels() const {
  std::vector<int> out(rows, 0);
  for (const auto& img : images) {
    for (std::size_t r = 0; r < img.row_count; ++r) {
      out[img.first_row + r] = img.label == Label::Gold ? 1 : 0;
    }
  }
  return out;
}

EmbeddingMatrix EmbeddingMatrix::select(std::span<const std::string> image_ids) const {
  std::unordered_map<std::string, const ImageRows*> by_id;
  for (const auto& img : images) by_id.emplace(img.image_id, &img);
  EmbeddingMatrix out;
  out.cols = cols;
  out.mode = mode;
  for (const auto& id : image_ids) {
    const auto it = by_id.find(id);
    if (it == by_id.end()) throw ParameterError("feature matrix has no image '" + id + "'");
    const ImageRows& src = *it->second;
    out.images.push_back({src.image_id, src.label, out.rows, src.row_count});
    out.values.insert(out.values.end(),
                      values.begin() + static_cast<std::ptrdiff_t>(src.first_row * cols),
                      values.begin() + static_cast<std::ptrdiff_t>((src.first_row + src.row_count) * cols));
    out.rows += src.row_count;
  }
  return out;
}

void EmbeddingMatrix::append(const EmbeddingMatrix& other) {
  if (rows == 0 && images.empty()) {
    cols = other.cols;
    mode = other.mode;
  }
  if (other.cols != cols) {
    throw ShapeError("cannot append features of width " + std::to_string(other.cols) + " to width " +
                     std::to_string(cols));
  }
  for (const auto& img : other.images) {
    images.push_back({img.image_id, img.label, rows + img.first_row, img.row_count});
  }
  values.insert(values.end(), other.values.begin(), other.values.end());
  rows += other.rows;
}

void EmbeddingMatrix::validate() const {
  if (values.size() != rows * cols) throw ShapeError("feature payload does not match rows x cols");
  std::size_t next = 0;
  for (const auto& img : images) {
    if (img.first_row != next) throw FormatError("feature image ranges must be contiguous");
    next += img.row_count;
  }
  if (next != rows) throw FormatError("feature image ranges do not cover every row");
}

void write_features(const EmbeddingMatrix& features, const fs::path& path) {
  features.validate();
  json meta{{"rows", features.rows}, {"cols", features.cols}, {"mode", feature_mode_name(features.mode)}};
  json imgs = json::array();
  for (const auto& img : features.images) {
    imgs.push_back({{"image_id", img.image_id},
                    {"label", label_name(img.label)},
                    {"first_row", img.first_row},
                    {"row_count", img.row_count}});
  }
  meta["images"] = std::move(imgs);
  const std::string header = meta.dump();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write features to " + path.string());
  const auto len = static_cast<std::uint32_t>(header.size());
  out.write(kFeatureMagic.data(), 4);
  out.write(reinterpret_cast<const char*>(&len), sizeof len);
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  out.write(reinterpret_cast<const char*>(features.values.data()),
            static_cast<std::streamsize>(features.values.size() * sizeof(float)));
  if (!out) throw IoError("short write to " + path.string());
}

EmbeddingMatrix read_features(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open features " + path.string());
  std::array<char, 4> magic{};
  in.read(magic.data(), 4);
  if (in.gcount() != 4 || magic != kFeatureMagic) {
    throw FormatError(path.string() + " does not start with the EMB1 magic");
  }
  std::uint32_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof len);
  std::string header(len, '\0');
  in.read(header.data(), len);
  if (static_cast<std::uint32_t>(in.gcount()) != len) throw TruncationError(path.string() + ": short header");
  EmbeddingMatrix m;
  try {
    const json meta = json::parse(header);
    m.rows = meta.at("rows").get<std::size_t>();
    m.cols = meta.at("cols").get<std::size_t>();
    m.mode = parse_feature_mode(meta.at("mode").get<std::string>());
    for (const auto& img : meta.at("images")) {
      m.images.push_back({img.at("image_id").get<std::string>(),
                          parse_label(img.at("label").get<std::string>()),
                          img.at("first_row").get<std::size_t>(), img.at("row_count").get<std::size_t>()});
    }
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": bad feature header (" + e.what() + ")");
  }
  m.values.resize(m.rows * m.cols);
  in.read(reinterpret_cast<char*>(m.values.data()),
          static_cast<std::streamsize>(m.values.size() * sizeof(float)));
  if (static_cast<std::size_t>(in.gcount()) != m.values.size() * sizeof(float)) {
    throw TruncationError(path.string() + ": feature payload shorter than rows x cols");
  }
  m.validate();
  return m;
}

}  // namespace aurum
