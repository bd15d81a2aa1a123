#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "aurum/datacube.hpp"
#include "aurum/features.hpp"
#include "aurum/gbdt.hpp"
#include "aurum/mae.hpp"
#include "aurum/quality.hpp"

namespace aurum::evalkit {

// --- folds -------------------------------------------------------------------

enum class FoldMode { KFold, RepeatedHoldout };

const char* fold_mode_name(FoldMode mode) noexcept;
FoldMode parse_fold_mode(const std::string& text);

struct Fold {
  std::vector<std::string> train;  ///< image ids, manifest order
  std::vector<std::string> test;
  friend bool operator==(const Fold&, const Fold&) = default;
};

struct FoldPlan {
  std::vector<Fold> folds;
  std::uint64_t seed = 0;
  FoldMode mode = FoldMode::KFold;
  friend bool operator==(const FoldPlan&, const FoldPlan&) = default;
};

/// Share of images held out by each repeated-holdout split.
inline constexpr double kHoldoutFraction = 0.2;

/// Label-stratified image-level splits.
///
/// kfold: gold and non-gold ids are shuffled separately, concatenated
/// (gold first) and dealt round-robin, so fold sizes differ by at most one.
/// repeated_holdout: `k` independent splits, each holding out
/// floor(0.2 n) images with the label mix of the corpus.
FoldPlan make_folds(const DatasetManifest& manifest, std::size_t k, std::uint64_t seed, FoldMode mode);

/// Writes `fold,image_id,side`.
void write_fold_plan(const FoldPlan& plan, const std::filesystem::path& path);

// --- metrics -----------------------------------------------------------------

struct Confusion {
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
  friend bool operator==(const Confusion&, const Confusion&) = default;
};

/// Precision, recall and F1 are macro averages over the gold and non-gold
/// classes; an undefined ratio counts as 0. The gold-class values are kept
/// alongside.
struct ClassMetrics {
  Confusion confusion;
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double gold_precision = 0.0;
  double gold_recall = 0.0;
  double gold_f1 = 0.0;
};

ClassMetrics patch_metrics(std::span<const int> y_true, std::span<const int> y_pred);

struct RocPoint {
  double threshold = 0.0;  ///< scores >= threshold are called gold; +inf at the origin
  double fpr = 0.0;
  double tpr = 0.0;
  friend bool operator==(const RocPoint&, const RocPoint&) = default;
};

struct RocCurve {
  double auc = 0.0;
  std::vector<RocPoint> points;
};

/// One point per distinct score (descending), from (0,0) to (1,1);
/// trapezoidal area. Throws DegenerateInputError unless both classes occur.
RocCurve roc_auc(std::span<const int> y_true, std::span<const double> scores);

inline constexpr double kPatchThreshold = 0.5;

/// Patch calls are gold when p > threshold. The image takes the class with
/// more patches; on a count tie it is gold only if the mean probability
/// exceeds 0.5. Throws DataError on a probability outside [0, 1].
Label majority_vote(std::span<const double> patch_probs, double threshold = kPatchThreshold);

// --- experiments -------------------------------------------------------------

struct FoldResult {
  std::size_t fold = 0;
  std::size_t train_images = 0;
  std::size_t test_images = 0;
  std::size_t train_rows = 0;
  std::size_t test_rows = 0;
  ClassMetrics patch;
  std::optional<double> patch_auc;  ///< empty when the test side is single-class
  std::vector<RocPoint> roc;
  ClassMetrics image;
};

struct MetricSummary {
  quality::MeanStd accuracy, precision, recall, f1;
  quality::MeanStd auc;
  std::size_t auc_folds = 0;  ///< folds that contributed to `auc`
};

struct EvalReport {
  std::string approach;
  FeatureMode mode = FeatureMode::Raw;
  FoldMode fold_mode = FoldMode::KFold;
  std::vector<FoldResult> folds;

  MetricSummary patch_summary() const;
  MetricSummary image_summary() const;
};

/// Builds the feature table for one fold: rows for every training and test
/// image. Anything fitted on data (normalization) may only see `fold.train`.
using FeatureProvider = std::function<EmbeddingMatrix(const Fold& fold)>;

struct ExperimentOptions {
  gbdt::GbdtConfig gbdt;
  unsigned threads = 1;
  std::function<void(const std::string& message)> log;
};

/// Fits on the training patches of each fold, scores the test patches and
/// votes per image.
EvalReport evaluate(const FeatureProvider& features, const FoldPlan& plan, FeatureMode mode,
                    const ExperimentOptions& options);

/// Raw mode normalizes with statistics of each fold's training images;
/// embeddings mode requires a checkpoint and uses its normalization.
EvalReport run_experiment(const DatasetManifest& manifest, FeatureMode mode, const MaeCheckpoint* checkpoint,
                          const FoldPlan& plan, const ExperimentOptions& options);

std::string approach_name(FeatureMode mode);

/// "%.3f ± %.3f"
std::string format_mean_std(const quality::MeanStd& value);

/// report.csv, folds.csv and roc_<mode>.csv inside `dir`.
void write_reports(const std::vector<EvalReport>& reports, const std::filesystem::path& dir);

std::filesystem::path run_directory(const std::filesystem::path& out, const std::string& experiment_id,
                                    std::uint64_t seed);

}  // namespace aurum::evalkit
