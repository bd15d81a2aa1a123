#include "aurum/mae.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <sstream>

#include "aurum/adam.hpp"
#include "aurum/error.hpp"
#include "aurum/parallel.hpp"
#include "mae_layout.hpp"

namespace aurum {

using nn::Graph;
using nn::Parameter;
using nn::Tensor;
using nn::Var;

const char* loss_scope_name(LossScope scope) noexcept {
  return scope == LossScope::AllTokens ? "all_tokens" : "masked_only";
}

LossScope parse_loss_scope(const std::string& text) {
  if (text == "all_tokens") return LossScope::AllTokens;
  if (text == "masked_only") return LossScope::MaskedOnly;
  throw ParameterError("loss scope must be all_tokens or masked_only, got '" + text + "'");
}

std::size_t MaeConfig::mlp_hidden() const noexcept {
  return static_cast<std::size_t>(std::lround(mlp_ratio * static_cast<double>(embed_dim)));
}

void MaeConfig::validate() const {
  if (token_dim != kTokenDim) {
    throw ParameterError("token_dim must be " + std::to_string(kTokenDim) + " (8x8x3)");
  }
  if (embed_dim == 0 || heads == 0 || embed_dim % heads != 0) {
    throw ParameterError("embed_dim must be a positive multiple of heads");
  }
  if (embed_dim % 2 != 0) throw ParameterError("embed_dim must be even for the sin/cos code");
  if (encoder_depth == 0 || decoder_depth == 0) throw ParameterError("depths must be >= 1");
  if (deep_decoder && decoder_depth < encoder_depth) {
    throw ParameterError("deep decoder profile needs decoder_depth >= encoder_depth");
  }
  if (!(mask_ratio > 0.0 && mask_ratio < 1.0)) throw ParameterError("mask_ratio must lie in (0, 1)");
  if (!(mlp_ratio > 0.0) || mlp_hidden() == 0) throw ParameterError("mlp_ratio must be positive");
  if (batch_size == 0) throw ParameterError("batch_size must be >= 1");
  if (!(learning_rate > 0.0)) throw ParameterError("learning_rate must be positive");
}

MaeConfig MaeConfig::fixture() {
  MaeConfig c;
  c.embed_dim = 32;
  c.encoder_depth = 2;
  c.decoder_depth = 3;
  c.heads = 4;
  c.mlp_ratio = 2.0;
  c.epochs = 20;
  c.batch_size = 1;
  c.learning_rate = 1e-2;
  return c;
}

std::size_t mask_count(std::size_t total, double ratio) {
  return static_cast<std::size_t>(std::floor(ratio * static_cast<double>(total) + 0.5));
}

MaskPlan make_mask(std::size_t total, double ratio, Rng& rng) {
  if (!(ratio > 0.0 && ratio < 1.0)) {
    throw ParameterError("mask ratio must lie in (0, 1), got " + std::to_string(ratio));
  }
  if (total == 0) throw ParameterError("mask needs at least one token");
  MaskPlan plan;
  plan.total = total;
  plan.masked = rng.choice_without_replacement(total, mask_count(total, ratio));
  std::sort(plan.masked.begin(), plan.masked.end());
  std::vector<bool> hidden(total, false);
  for (std::size_t i : plan.masked) hidden[i] = true;
  for (std::size_t i = 0; i < total; ++i) {
    if (!hidden[i]) plan.visible.push_back(i);
  }
  return plan;
}

MaskPlan no_mask(std::size_t total) {
  MaskPlan plan;
  plan.total = total;
  plan.visible.resize(total);
  std::iota(plan.visible.begin(), plan.visible.end(), std::size_t{0});
  return plan;
}

namespace {

void check_mask(const MaskPlan& mask, std::size_t tokens) {
  if (mask.total != tokens || mask.masked.size() + mask.visible.size() != tokens) {
    throw ContractError("mask covers " + std::to_string(mask.total) + " positions (" +
                        std::to_string(mask.masked.size()) + " masked + " +
                        std::to_string(mask.visible.size()) + " visible) but the grid has " +
                        std::to_string(tokens) + " tokens");
  }
  std::vector<bool> seen(tokens, false);
  for (const auto* list : {&mask.masked, &mask.visible}) {
    for (std::size_t i : *list) {
      if (i >= tokens || seen[i]) throw ContractError("mask positions do not partition the grid");
      seen[i] = true;
    }
  }
}

}  // namespace

std::vector<double> positional_code(std::size_t dim, const TokenIndex& index) {
  const std::size_t pairs = dim / 2;
  const std::size_t freqs = std::max<std::size_t>(1, (pairs + 2) / 3);
  const double axis_pos[3] = {static_cast<double>(index.row_block),
                              static_cast<double>(index.col_block), static_cast<double>(index.group)};
  std::vector<double> code(dim, 0.0);
  for (std::size_t p = 0; p < pairs; ++p) {
    const std::size_t axis = p % 3;
    const std::size_t j = p / 3;
    const double angle =
        axis_pos[axis] / std::pow(10000.0, static_cast<double>(j) / static_cast<double>(freqs));
    code[2 * p] = std::sin(angle);
    code[2 * p + 1] = std::cos(angle);
  }
  return code;
}

// --- model ---------------------------------------------------------------------

template <class T>
MaeModel<T>::MaeModel(const MaeCheckpoint& checkpoint) : config_(checkpoint.config) {
  config_.validate();
  const auto layout = detail::section_layout(config_);
  params_.reserve(layout.size());
  auto find = [&](const std::string& name) {
    for (std::size_t i = 0; i < layout.size(); ++i) {
      if (layout[i].name == name) return i;
    }
    throw FormatError("layout has no section " + name);
  };
  for (const auto& spec : layout) {
    const Tensor<float>& src = checkpoint.section(spec.name);
    if (src.rows() != spec.rows || src.cols() != spec.cols) {
      throw FormatError("checkpoint section " + spec.name + " has shape " + src.shape_string() +
                        ", config implies [" + std::to_string(spec.rows) + "x" +
                        std::to_string(spec.cols) + "]");
    }
    params_.emplace_back(spec.name, nn::tensor_cast<T>(src));
  }
  embed_w_ = find("embed.weight");
  embed_b_ = find("embed.bias");
  enc_norm_g_ = find("encoder.norm.gamma");
  enc_norm_b_ = find("encoder.norm.beta");
  dec_embed_w_ = find("decoder.embed.weight");
  dec_embed_b_ = find("decoder.embed.bias");
  mask_token_ = find("decoder.mask_token");
  dec_norm_g_ = find("decoder.norm.gamma");
  dec_norm_b_ = find("decoder.norm.beta");
  head_w_ = find("decoder.head.weight");
  head_b_ = find("decoder.head.bias");
  auto make_block = [&](const std::string& prefix) {
    return Block{find(prefix + ".ln1.gamma"),     find(prefix + ".ln1.beta"),
                 find(prefix + ".attn.qkv.weight"), find(prefix + ".attn.qkv.bias"),
                 find(prefix + ".attn.proj.weight"), find(prefix + ".attn.proj.bias"),
                 find(prefix + ".ln2.gamma"),     find(prefix + ".ln2.beta"),
                 find(prefix + ".mlp.fc1.weight"), find(prefix + ".mlp.fc1.bias"),
                 find(prefix + ".mlp.fc2.weight"), find(prefix + ".mlp.fc2.bias")};
  };
  for (std::size_t i = 0; i < config_.encoder_depth; ++i) {
    encoder_.push_back(make_block("encoder.blocks." + std::to_string(i)));
  }
  for (std::size_t i = 0; i < config_.decoder_depth; ++i) {
    decoder_.push_back(make_block("decoder.blocks." + std::to_string(i)));
  }
}

template <class T>
std::vector<Parameter<T>*> MaeModel<T>::parameters() {
  std::vector<Parameter<T>*> out;
  for (auto& p : params_) out.push_back(&p);
  return out;
}

template <class T>
void MaeModel<T>::freeze() {
  for (auto& p : params_) p.requires_grad = false;
}

template <class T>
void MaeModel<T>::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

template <class T>
Var<T> MaeModel<T>::p(Graph<T>& g, std::size_t index) {
  return g.param(params_[index]);
}

template <class T>
Var<T> MaeModel<T>::block(Graph<T>& g, Var<T> x, const Block& b) {
  const std::size_t dim = config_.embed_dim;
  const std::size_t heads = config_.heads;
  const std::size_t head_dim = dim / heads;
  const T scale = static_cast<T>(1.0 / std::sqrt(static_cast<double>(head_dim)));

  Var<T> h = nn::layer_norm(x, p(g, b.ln1_gamma), p(g, b.ln1_beta));
  Var<T> qkv = nn::add_row(nn::matmul(h, p(g, b.qkv_w)), p(g, b.qkv_b));
  std::vector<Var<T>> outputs;
  outputs.reserve(heads);
  for (std::size_t i = 0; i < heads; ++i) {
    Var<T> q = nn::slice_cols(qkv, i * head_dim, head_dim);
    Var<T> k = nn::slice_cols(qkv, dim + i * head_dim, head_dim);
    Var<T> v = nn::slice_cols(qkv, 2 * dim + i * head_dim, head_dim);
    Var<T> attn = nn::softmax(nn::matmul_nt(q, k, scale));
    outputs.push_back(nn::matmul(attn, v));
  }
  Var<T> merged = heads == 1 ? outputs.front() : nn::concat_cols(outputs);
  x = nn::add(x, nn::add_row(nn::matmul(merged, p(g, b.proj_w)), p(g, b.proj_b)));

  h = nn::layer_norm(x, p(g, b.ln2_gamma), p(g, b.ln2_beta));
  h = nn::gelu(nn::add_row(nn::matmul(h, p(g, b.fc1_w)), p(g, b.fc1_b)));
  h = nn::add_row(nn::matmul(h, p(g, b.fc2_w)), p(g, b.fc2_b));
  return nn::add(x, h);
}

template <class T>
Tensor<T> MaeModel<T>::positions(const TokenGrid& shape, std::span<const std::size_t> rows) const {
  Tensor<T> out(rows.size(), config_.embed_dim);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto code = positional_code(config_.embed_dim, shape.index_of(rows[r]));
    for (std::size_t c = 0; c < code.size(); ++c) out.at(r, c) = static_cast<T>(code[c]);
  }
  return out;
}

template <class T>
Var<T> MaeModel<T>::encode(Graph<T>& g, const Tensor<T>& tokens, const TokenGrid& shape,
                           std::span<const std::size_t> rows) {
  if (tokens.cols() != config_.token_dim) {
    throw ShapeError("encoder expects tokens of width " + std::to_string(config_.token_dim) +
                     ", got " + tokens.shape_string());
  }
  if (tokens.rows() != shape.expected_tokens()) {
    throw ShapeError("token matrix " + tokens.shape_string() + " does not match a grid of " +
                     std::to_string(shape.expected_tokens()) + " tokens");
  }
  Tensor<T> picked(rows.size(), tokens.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    std::copy(tokens.row(rows[r]).begin(), tokens.row(rows[r]).end(), picked.row(r).begin());
  }
  Var<T> x = nn::add_row(nn::matmul(g.input(std::move(picked)), p(g, embed_w_)), p(g, embed_b_));
  x = nn::add(x, g.input(positions(shape, rows)));
  for (const auto& b : encoder_) x = block(g, x, b);
  return nn::layer_norm(x, p(g, enc_norm_g_), p(g, enc_norm_b_));
}

template <class T>
typename MaeModel<T>::Forward MaeModel<T>::decode(Graph<T>& g, Var<T> embeddings,
                                                  const Tensor<T>& tokens, const TokenGrid& shape,
                                                  const MaskPlan& mask) {
  const std::size_t total = shape.expected_tokens();
  check_mask(mask, total);
  if (embeddings.value().rows() != mask.visible.size() ||
      embeddings.value().cols() != config_.embed_dim) {
    throw ContractError("decoder got embeddings " + embeddings.value().shape_string() + " for " +
                        std::to_string(mask.visible.size()) + " visible tokens");
  }
  Var<T> y = nn::add_row(nn::matmul(embeddings, p(g, dec_embed_w_)), p(g, dec_embed_b_));
  if (!mask.masked.empty()) {
    Var<T> fill = nn::repeat_row(p(g, mask_token_), mask.masked.size());
    std::vector<std::size_t> order(total);
    for (std::size_t i = 0; i < mask.visible.size(); ++i) order[mask.visible[i]] = i;
    for (std::size_t i = 0; i < mask.masked.size(); ++i) order[mask.masked[i]] = mask.visible.size() + i;
    y = nn::gather_rows(nn::concat_rows<T>({y, fill}), std::span<const std::size_t>(order));
  }
  std::vector<std::size_t> all(total);
  std::iota(all.begin(), all.end(), std::size_t{0});
  y = nn::add(y, g.input(positions(shape, all)));
  for (const auto& b : decoder_) y = block(g, y, b);
  y = nn::layer_norm(y, p(g, dec_norm_g_), p(g, dec_norm_b_));
  Var<T> recon = nn::add_row(nn::matmul(y, p(g, head_w_)), p(g, head_b_));

  Var<T> loss;
  if (config_.loss_scope == LossScope::AllTokens) {
    loss = nn::mse(recon, g.input(tokens));
  } else {
    if (mask.masked.empty()) throw ContractError("masked_only loss needs at least one masked token");
    Tensor<T> target(mask.masked.size(), tokens.cols());
    for (std::size_t r = 0; r < mask.masked.size(); ++r) {
      std::copy(tokens.row(mask.masked[r]).begin(), tokens.row(mask.masked[r]).end(), target.row(r).begin());
    }
    loss = nn::mse(nn::gather_rows(recon, std::span<const std::size_t>(mask.masked)),
                   g.input(std::move(target)));
  }
  return {embeddings, recon, loss};
}

template <class T>
typename MaeModel<T>::Forward MaeModel<T>::forward(Graph<T>& g, const Tensor<T>& tokens,
                                                   const TokenGrid& shape, const MaskPlan& mask) {
  check_mask(mask, shape.expected_tokens());
  Var<T> emb = encode(g, tokens, shape, mask.visible);
  return decode(g, emb, tokens, shape, mask);
}

template <class T>
MaeCheckpoint MaeModel<T>::to_checkpoint(const MaeCheckpoint& base) const {
  MaeCheckpoint out = base;
  out.config = config_;
  out.sections.clear();
  for (const auto& param : params_) out.sections.push_back({param.name, nn::tensor_cast<float>(param.value)});
  return out;
}

template class MaeModel<float>;
template class MaeModel<double>;

template <class T>
Tensor<T> token_matrix(const TokenGrid& grid) {
  grid.validate();
  std::vector<T> vals(grid.values.begin(), grid.values.end());
  return Tensor<T>(grid.size(), kTokenDim, std::move(vals));
}

template Tensor<float> token_matrix(const TokenGrid&);
template Tensor<double> token_matrix(const TokenGrid&);

// --- operations ---------------------------------------------------------------

Tensor<float> encode(const TokenGrid& tokens, const MaeCheckpoint& checkpoint, const MaskPlan* mask) {
  MaeModel<float> model(checkpoint);
  model.freeze();
  Graph<float> g;
  const Tensor<float> x = token_matrix<float>(tokens);
  if (mask != nullptr) {
    check_mask(*mask, tokens.size());
    return model.encode(g, x, tokens, mask->visible).value();
  }
  const MaskPlan all = no_mask(tokens.size());
  return model.encode(g, x, tokens, all.visible).value();
}

Reconstruction decode_and_loss(const Tensor<float>& embeddings, const MaskPlan& mask,
                               const TokenGrid& target, const MaeCheckpoint& checkpoint) {
  target.validate();
  check_mask(mask, target.size());
  MaeModel<float> model(checkpoint);
  model.freeze();
  Graph<float> g;
  const Tensor<float> x = token_matrix<float>(target);
  auto fwd = model.decode(g, g.input(embeddings), x, target, mask);
  Reconstruction out;
  out.tokens = target;
  const auto& recon = fwd.reconstruction.value();
  out.tokens.values.assign(recon.values().begin(), recon.values().end());
  out.loss = fwd.loss.value()[0];
  return out;
}

double reconstruction_loss(const TokenGrid& reconstruction, const TokenGrid& target,
                           const MaskPlan& mask, LossScope scope) {
  reconstruction.validate();
  target.validate();
  if (reconstruction.values.size() != target.values.size()) {
    throw ShapeError("reconstruction and target grids differ in size");
  }
  check_mask(mask, target.size());
  double sum = 0.0;
  std::size_t count = 0;
  auto add_token = [&](std::size_t t) {
    const auto a = reconstruction.token(t);
    const auto b = target.token(t);
    for (std::size_t i = 0; i < kTokenDim; ++i) {
      const double d = static_cast<double>(a[i]) - b[i];
      sum += d * d;
    }
    count += kTokenDim;
  };
  if (scope == LossScope::AllTokens) {
    for (std::size_t t = 0; t < target.size(); ++t) add_token(t);
  } else {
    for (std::size_t t : mask.masked) add_token(t);
  }
  if (count == 0) throw ContractError("loss scope selects no tokens");
  return sum / static_cast<double>(count);
}

TokenGrid load_tokens(const ManifestEntry& entry, const BandStats& stats) {
  SpectralCube cube = [&] {
    try {
      return read_cube(entry.path);
    } catch (const IoError& e) {
      throw IoError("image '" + entry.image_id + "': " + e.what());
    }
  }();
  return tokenize(normalize(cube, stats));
}

namespace {

std::string section_norms(std::span<Parameter<float>* const> params) {
  std::ostringstream out;
  for (const auto* p : params) {
    double s = 0.0;
    for (float v : p->value.values()) s += static_cast<double>(v) * v;
    out << "\n  " << p->name << " |w|=" << std::sqrt(s);
  }
  return out.str();
}

}  // namespace

MaeCheckpoint pretrain_tokens(std::span<const TokenGrid> grids, MaeCheckpoint initial,
                              const TrainOptions& options) {
  const MaeConfig& cfg = initial.config;
  cfg.validate();
  MaeModel<float> model(initial);
  if (cfg.epochs == 0) return initial;
  if (grids.empty()) throw ParameterError("pretraining needs at least one image");
  std::vector<Tensor<float>> tokens;
  tokens.reserve(grids.size());
  for (const auto& grid : grids) {
    if (grid.spatial_rows != grids.front().spatial_rows || grid.spatial_cols != grids.front().spatial_cols ||
        grid.spectral_groups != grids.front().spectral_groups) {
      throw ShapeError("pretraining images must share one token grid shape");
    }
    tokens.push_back(token_matrix<float>(grid));
  }

  nn::AdamState<float> adam;
  const nn::AdamConfig adam_cfg{cfg.learning_rate, 0.9, 0.999, 1e-8};
  const auto params = model.parameters();
  const auto start = std::chrono::steady_clock::now();

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng order_rng = Rng::derive(cfg.seed, 0x0E90C000ULL + epoch);
    const auto order = order_rng.permutation(grids.size());
    double epoch_loss = 0.0;
    std::size_t batch_index = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += cfg.batch_size, ++batch_index) {
      const std::size_t count = std::min(cfg.batch_size, order.size() - begin);
      std::vector<MaeModel<float>> replicas(count, model);
      std::vector<double> losses(count, 0.0);
      parallel_for(count, options.threads, [&](std::size_t slot) {
        const std::size_t image = order[begin + slot];
        Rng mask_rng = Rng::derive(cfg.seed, (epoch + 1) * 0x100000ULL + image);
        const MaskPlan mask = make_mask(grids[image].size(), cfg.mask_ratio, mask_rng);
        MaeModel<float>& replica = replicas[slot];
        replica.zero_grad();
        Graph<float> g;
        auto fwd = replica.forward(g, tokens[image], grids[image], mask);
        losses[slot] = fwd.loss.value()[0];
        if (std::isfinite(losses[slot])) g.backward(fwd.loss);
      });
      for (std::size_t slot = 0; slot < count; ++slot) {
        if (!std::isfinite(losses[slot])) {
          throw TrainingError("non-finite loss at epoch " + std::to_string(epoch + 1) + ", batch " +
                              std::to_string(batch_index) + ", image index " +
                              std::to_string(order[begin + slot]) + "; parameter norms:" +
                              section_norms(params));
        }
      }
      const float inv = 1.0f / static_cast<float>(count);
      for (std::size_t k = 0; k < params.size(); ++k) {
        auto& grad = params[k]->grad;
        grad.fill(0.0f);
        for (std::size_t slot = 0; slot < count; ++slot) {
          const auto& src = replicas[slot].parameters()[k]->grad;
          for (std::size_t i = 0; i < grad.size(); ++i) grad[i] += src[i];
        }
        for (auto& v : grad.values()) v *= inv;
      }
      adam_step(std::span<Parameter<float>* const>(params), adam, adam_cfg);
      for (double l : losses) epoch_loss += l;
    }
    EpochRecord rec;
    rec.epoch = epoch + 1;
    rec.mean_loss = epoch_loss / static_cast<double>(grids.size());
    rec.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (options.on_epoch) options.on_epoch(rec);
  }
  return model.to_checkpoint(initial);
}

MaeCheckpoint pretrain(const DatasetManifest& manifest, const MaeConfig& config,
                       const TrainOptions& options) {
  config.validate();
  manifest.validate();
  if (manifest.entries.empty()) throw ParameterError("pretraining manifest is empty");
  std::vector<SpectralCube> cubes;
  cubes.reserve(manifest.entries.size());
  for (const auto& e : manifest.entries) {
    try {
      cubes.push_back(read_cube(e.path));
    } catch (const IoError& err) {
      throw IoError("image '" + e.image_id + "': " + err.what());
    }
    if (cubes.back().width() != cubes.front().width() || cubes.back().height() != cubes.front().height() ||
        cubes.back().bands() != cubes.front().bands()) {
      throw ShapeError("image '" + e.image_id + "' differs in shape from the first manifest image");
    }
  }
  BandStats stats = compute_band_stats(cubes);
  std::vector<TokenGrid> grids;
  grids.reserve(cubes.size());
  for (const auto& cube : cubes) grids.push_back(tokenize(normalize(cube, stats)));
  cubes.clear();
  MaeCheckpoint initial = init_checkpoint(config, std::move(stats), grids.front().band_names);
  return pretrain_tokens(grids, std::move(initial), options);
}

EmbeddingMatrix extract_features(const DatasetManifest& manifest, FeatureMode mode,
                                 const MaeCheckpoint* checkpoint, const BandStats* raw_stats,
                                 unsigned threads) {
  if (mode == FeatureMode::Embeddings && checkpoint == nullptr) {
    throw ParameterError("embedding features need a checkpoint");
  }
  const BandStats* stats = mode == FeatureMode::Embeddings ? &checkpoint->normalization : raw_stats;
  if (stats == nullptr) throw ParameterError("raw features need normalization statistics");

  std::optional<MaeModel<float>> model;
  if (mode == FeatureMode::Embeddings) {
    model.emplace(*checkpoint);
    model->freeze();
  }
  const std::size_t width = mode == FeatureMode::Raw ? kTokenDim : checkpoint->config.embed_dim;
  std::vector<std::vector<float>> per_image(manifest.entries.size());
  parallel_for(manifest.entries.size(), threads, [&](std::size_t i) {
    const TokenGrid grid = load_tokens(manifest.entries[i], *stats);
    if (mode == FeatureMode::Raw) {
      per_image[i] = grid.values;
      return;
    }
    MaeModel<float> local = *model;
    Graph<float> g;
    const MaskPlan all = no_mask(grid.size());
    const Tensor<float> x = token_matrix<float>(grid);
    const auto& emb = local.encode(g, x, grid, all.visible).value();
    per_image[i].assign(emb.values().begin(), emb.values().end());
  });

  EmbeddingMatrix out;
  out.cols = width;
  out.mode = mode;
  for (std::size_t i = 0; i < per_image.size(); ++i) {
    const std::size_t rows = per_image[i].size() / width;
    out.images.push_back({manifest.entries[i].image_id, manifest.entries[i].label, out.rows, rows});
    out.values.insert(out.values.end(), per_image[i].begin(), per_image[i].end());
    out.rows += rows;
  }
  return out;
}

}  // namespace aurum
