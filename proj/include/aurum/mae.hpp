#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "aurum/autodiff.hpp"
#include "aurum/datacube.hpp"
#include "aurum/features.hpp"
#include "aurum/rng.hpp"
#include "json.hpp"

namespace aurum {

enum class LossScope { AllTokens, MaskedOnly };

const char* loss_scope_name(LossScope scope) noexcept;
LossScope parse_loss_scope(const std::string& text);

struct MaeConfig {
  std::size_t token_dim = kTokenDim;
  std::size_t embed_dim = 64;
  std::size_t encoder_depth = 4;
  std::size_t decoder_depth = 6;
  std::size_t heads = 4;
  double mlp_ratio = 4.0;
  double mask_ratio = 0.40;
  LossScope loss_scope = LossScope::AllTokens;
  /// Enforces decoder_depth >= encoder_depth.
  bool deep_decoder = true;
  std::size_t epochs = 20;
  std::size_t batch_size = 4;
  double learning_rate = 1e-3;
  std::uint64_t seed = 0;

  std::size_t mlp_hidden() const noexcept;
  /// Throws ParameterError on an inconsistent configuration.
  void validate() const;

  /// Small CPU profile used by the fixture corpus and the acceptance suite.
  static MaeConfig fixture();

  friend bool operator==(const MaeConfig&, const MaeConfig&) = default;
};

/// Token positions hidden from the encoder. Both lists are sorted ascending
/// and together partition [0, total).
struct MaskPlan {
  std::size_t total = 0;
  std::vector<std::size_t> masked;
  std::vector<std::size_t> visible;
  friend bool operator==(const MaskPlan&, const MaskPlan&) = default;
};

/// round-half-up(ratio * total)
std::size_t mask_count(std::size_t total, double ratio);
MaskPlan make_mask(std::size_t total, double ratio, Rng& rng);
/// Every position visible; what inference uses.
MaskPlan no_mask(std::size_t total);

struct NamedTensor {
  std::string name;
  nn::Tensor<float> tensor;
  friend bool operator==(const NamedTensor&, const NamedTensor&) = default;
};

struct MaeCheckpoint {
  static constexpr int kFormatVersion = 1;

  int format_version = kFormatVersion;
  MaeConfig config;
  BandStats normalization;
  std::vector<std::string> band_names;
  std::vector<NamedTensor> sections;

  const nn::Tensor<float>& section(const std::string& name) const;
  /// FNV-1a over config, statistics and every section's bytes.
  std::uint64_t fingerprint() const;

  friend bool operator==(const MaeCheckpoint&, const MaeCheckpoint&) = default;
};

nlohmann::json mae_config_to_json(const MaeConfig& config);
MaeConfig mae_config_from_json(const nlohmann::json& doc);

/// Fresh weights drawn from `config.seed`.
MaeCheckpoint init_checkpoint(const MaeConfig& config, BandStats normalization,
                              std::vector<std::string> band_names);

/// "MAE1" | u32 LE header length | JSON header | concatenated f32 LE sections.
void save_checkpoint(const MaeCheckpoint& checkpoint, const std::filesystem::path& path);
MaeCheckpoint load_checkpoint(const std::filesystem::path& path);

/// Fixed sinusoidal code over (row_block, col_block, group). Channel pair p
/// (channels 2p, 2p+1 = sin, cos) encodes axis p % 3 at frequency index
/// p / 3, with wavelengths 10000^(j / ceil(dim / 6)).
std::vector<double> positional_code(std::size_t dim, const TokenIndex& index);

/// Encoder/decoder weights as trainable parameters. T = float for training and
/// inference, T = double for gradient checking.
template <class T>
class MaeModel {
 public:
  explicit MaeModel(const MaeCheckpoint& checkpoint);

  const MaeConfig& config() const noexcept { return config_; }
  std::vector<nn::Parameter<T>*> parameters();
  /// Stops gradient recording for every parameter.
  void freeze();
  void zero_grad();

  /// Encoder output for the positions in `rows`, in that order.
  nn::Var<T> encode(nn::Graph<T>& graph, const nn::Tensor<T>& tokens, const TokenGrid& shape,
                    std::span<const std::size_t> rows);

  struct Forward {
    nn::Var<T> embeddings;
    nn::Var<T> reconstruction;
    nn::Var<T> loss;
  };
  /// Full masked-autoencoder pass: encode the visible tokens, decode every
  /// position and score against `tokens` per the configured loss scope.
  Forward forward(nn::Graph<T>& graph, const nn::Tensor<T>& tokens, const TokenGrid& shape,
                  const MaskPlan& mask);
  /// Decoder pass from precomputed visible-token embeddings.
  Forward decode(nn::Graph<T>& graph, nn::Var<T> embeddings, const nn::Tensor<T>& tokens,
                 const TokenGrid& shape, const MaskPlan& mask);

  /// Writes current weights back into a checkpoint with `base`'s metadata.
  MaeCheckpoint to_checkpoint(const MaeCheckpoint& base) const;

 private:
  struct Block {
    std::size_t ln1_gamma, ln1_beta, qkv_w, qkv_b, proj_w, proj_b;
    std::size_t ln2_gamma, ln2_beta, fc1_w, fc1_b, fc2_w, fc2_b;
  };
  nn::Var<T> p(nn::Graph<T>& g, std::size_t index);
  nn::Var<T> block(nn::Graph<T>& g, nn::Var<T> x, const Block& b);
  nn::Tensor<T> positions(const TokenGrid& shape, std::span<const std::size_t> rows) const;

  MaeConfig config_;
  std::vector<nn::Parameter<T>> params_;
  std::size_t embed_w_, embed_b_, enc_norm_g_, enc_norm_b_;
  std::size_t dec_embed_w_, dec_embed_b_, mask_token_, dec_norm_g_, dec_norm_b_, head_w_, head_b_;
  std::vector<Block> encoder_;
  std::vector<Block> decoder_;
};

/// Token values of a grid as an (n x 192) tensor.
template <class T>
nn::Tensor<T> token_matrix(const TokenGrid& grid);

/// Embeddings of the processed tokens: the visible ones when `mask` is given
/// (training view), otherwise every token. Rows follow token enumeration order.
nn::Tensor<float> encode(const TokenGrid& tokens, const MaeCheckpoint& checkpoint,
                         const MaskPlan* mask = nullptr);

struct Reconstruction {
  TokenGrid tokens;
  double loss = 0.0;
};
/// Decodes visible-token embeddings (as produced by `encode` with `mask`).
Reconstruction decode_and_loss(const nn::Tensor<float>& embeddings, const MaskPlan& mask,
                               const TokenGrid& target, const MaeCheckpoint& checkpoint);

/// Scores for an arbitrary reconstruction against its target under a scope;
/// the same rule decode_and_loss applies.
double reconstruction_loss(const TokenGrid& reconstruction, const TokenGrid& target,
                           const MaskPlan& mask, LossScope scope);

struct EpochRecord {
  std::size_t epoch = 0;
  double mean_loss = 0.0;
  double wall_seconds = 0.0;
};

struct TrainOptions {
  unsigned threads = 1;
  std::function<void(const EpochRecord&)> on_epoch;
};

/// Desk-scale pretraining. Normalization statistics come from the manifest's
/// cubes and are stored in the returned checkpoint.
MaeCheckpoint pretrain(const DatasetManifest& manifest, const MaeConfig& config,
                       const TrainOptions& options = {});

/// Same loop over already normalized token grids; `pretrain` delegates here.
MaeCheckpoint pretrain_tokens(std::span<const TokenGrid> grids, MaeCheckpoint initial,
                              const TrainOptions& options = {});

/// Per-patch features for every manifest image. Embedding mode needs a
/// checkpoint (normalization comes from it); raw mode needs `raw_stats` and
/// emits the normalized 192-value tokens.
EmbeddingMatrix extract_features(const DatasetManifest& manifest, FeatureMode mode,
                                 const MaeCheckpoint* checkpoint,
                                 const BandStats* raw_stats = nullptr, unsigned threads = 1);

/// Reads, normalizes and tokenizes one manifest entry.
TokenGrid load_tokens(const ManifestEntry& entry, const BandStats& stats);

}  // namespace aurum
