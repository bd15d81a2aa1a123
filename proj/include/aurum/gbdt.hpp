#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "aurum/features.hpp"
#include "json.hpp"

namespace aurum::gbdt {

struct GbdtConfig {
  std::size_t n_trees = 200;
  std::size_t max_depth = 4;
  double learning_rate = 0.1;
  double lambda = 1.0;
  double gamma = 0.0;
  double min_child_weight = 1.0;
  double subsample_rows = 1.0;
  double subsample_features = 1.0;
  std::uint64_t seed = 0;

  void validate() const;
  friend bool operator==(const GbdtConfig&, const GbdtConfig&) = default;
};

/// Internal nodes route `x[feature] < threshold` to `left`; leaves have
/// feature = -1 and carry `value` (already scaled by the learning rate).
struct Node {
  int feature = -1;
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  double value = 0.0;
  bool is_leaf() const noexcept { return feature < 0; }
  friend bool operator==(const Node&, const Node&) = default;
};

struct Tree {
  std::vector<Node> nodes;
  double predict(std::span<const float> row) const noexcept;
  friend bool operator==(const Tree&, const Tree&) = default;
};

struct Ensemble {
  GbdtConfig config;
  double base_score = 0.0;
  std::size_t n_features = 0;
  std::vector<Tree> trees;

  /// base_score + sum of tree outputs.
  double margin(std::span<const float> row) const noexcept;
  friend bool operator==(const Ensemble&, const Ensemble&) = default;
};

/// 1/2 [GL^2/(HL+l) + GR^2/(HR+l) - (GL+GR)^2/(HL+HR+l)] - gamma
double split_gain(double gl, double hl, double gr, double hr, double lambda, double gamma) noexcept;

/// What the fitter decided for one node, reported when an observer is set.
struct SplitRecord {
  std::size_t tree = 0;
  std::size_t node = 0;
  std::size_t depth = 0;
  std::vector<std::size_t> rows;  ///< training rows routed to this node
  std::vector<std::size_t> features;  ///< candidate features for this tree
  bool split = false;
  int feature = -1;
  double threshold = 0.0;
  double gain = 0.0;
};

struct FitOptions {
  unsigned threads = 1;
  /// Receives every node plus the round's gradient and hessian vectors.
  std::function<void(const SplitRecord&, std::span<const double> grad, std::span<const double> hess)>
      observer;
  /// Mean training logistic loss after each round (round 0 = base score only).
  std::function<void(std::size_t round, double loss)> on_round;
};

/// Second-order boosting on logistic loss with exact greedy splits.
Ensemble fit(std::span<const float> features, std::size_t cols, std::span<const int> labels,
             const GbdtConfig& config, const FitOptions& options = {});
Ensemble fit(const EmbeddingMatrix& features, const GbdtConfig& config, const FitOptions& options = {});

std::vector<double> predict_proba(const Ensemble& model, std::span<const float> features, std::size_t cols);
std::vector<double> predict_proba(const Ensemble& model, const EmbeddingMatrix& features);

double logistic_loss(std::span<const double> margins, std::span<const int> labels);

inline constexpr int kModelVersion = 1;

nlohmann::json to_json(const Ensemble& model);
/// Throws VersionError on an unsupported version and FormatError on a
/// malformed tree (missing or dangling children, non-finite leaves).
Ensemble from_json(const nlohmann::json& doc);
void save_model(const Ensemble& model, const std::filesystem::path& path);
Ensemble load_model(const std::filesystem::path& path);

nlohmann::json config_to_json(const GbdtConfig& config);
GbdtConfig config_from_json(const nlohmann::json& doc);

}  // namespace aurum::gbdt
