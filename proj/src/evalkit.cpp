#include "aurum/evalkit.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <set>

#include "aurum/error.hpp"
#include "aurum/rng.hpp"

namespace aurum::evalkit {
namespace fs = std::filesystem;

const char* fold_mode_name(FoldMode mode) noexcept {
  return mode == FoldMode::KFold ? "kfold" : "repeated_holdout";
}

FoldMode parse_fold_mode(const std::string& text) {
  if (text == "kfold") return FoldMode::KFold;
  if (text == "repeated_holdout") return FoldMode::RepeatedHoldout;
  throw ParameterError("unknown fold mode '" + text + "' (expected kfold or repeated_holdout)");
}

namespace {

std::vector<std::size_t> shuffled(const std::vector<std::size_t>& items, Rng& rng) {
  std::vector<std::size_t> out;
  out.reserve(items.size());
  for (std::size_t i : rng.permutation(items.size())) out.push_back(items[i]);
  return out;
}

Fold fold_from_test(const DatasetManifest& manifest, const std::vector<char>& in_test) {
  Fold fold;
  for (std::size_t i = 0; i < manifest.entries.size(); ++i) {
    (in_test[i] ? fold.test : fold.train).push_back(manifest.entries[i].image_id);
  }
  return fold;
}

}  // namespace

FoldPlan make_folds(const DatasetManifest& manifest, std::size_t k, std::uint64_t seed, FoldMode mode) {
  const std::size_t n = manifest.entries.size();
  if (k < 2) throw ParameterError("need at least 2 folds, got " + std::to_string(k));
  if (k > n) {
    throw ParameterError(std::to_string(k) + " folds requested for " + std::to_string(n) + " images");
  }
  std::vector<std::size_t> gold, other;
  for (std::size_t i = 0; i < n; ++i) {
    (manifest.entries[i].label == Label::Gold ? gold : other).push_back(i);
  }

  FoldPlan plan;
  plan.seed = seed;
  plan.mode = mode;
  if (mode == FoldMode::KFold) {
    Rng rng = Rng::derive(seed, 0xF01D);
    std::vector<std::size_t> order = shuffled(gold, rng);
    for (std::size_t i : shuffled(other, rng)) order.push_back(i);
    for (std::size_t f = 0; f < k; ++f) {
      std::vector<char> in_test(n, 0);
      for (std::size_t j = f; j < order.size(); j += k) in_test[order[j]] = 1;
      plan.folds.push_back(fold_from_test(manifest, in_test));
    }
    return plan;
  }

  const auto test_size = static_cast<std::size_t>(std::floor(kHoldoutFraction * static_cast<double>(n)));
  if (test_size == 0 || test_size == n) {
    throw ParameterError("repeated holdout needs at least 5 images, got " + std::to_string(n));
  }
  auto gold_test = static_cast<std::size_t>(
      std::llround(static_cast<double>(test_size) * static_cast<double>(gold.size()) / static_cast<double>(n)));
  gold_test = std::min({gold_test, gold.size(), test_size});
  gold_test = std::max(gold_test, test_size - std::min(test_size, other.size()));
  for (std::size_t r = 0; r < k; ++r) {
    Rng rng = Rng::derive(seed, 0x401D0000 + r);
    const auto g = shuffled(gold, rng);
    const auto o = shuffled(other, rng);
    std::vector<char> in_test(n, 0);
    for (std::size_t j = 0; j < gold_test; ++j) in_test[g[j]] = 1;
    for (std::size_t j = 0; j < test_size - gold_test; ++j) in_test[o[j]] = 1;
    plan.folds.push_back(fold_from_test(manifest, in_test));
  }
  return plan;
}

void write_fold_plan(const FoldPlan& plan, const fs::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << "fold,image_id,side\n";
  for (std::size_t f = 0; f < plan.folds.size(); ++f) {
    for (const auto& id : plan.folds[f].train) out << f << ',' << id << ",train\n";
    for (const auto& id : plan.folds[f].test) out << f << ',' << id << ",test\n";
  }
  if (!out) throw IoError("short write to " + path.string());
}

// --- metrics -----------------------------------------------------------------

namespace {

double ratio(std::size_t num, std::size_t den) {
  return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

double harmonic(double p, double r) { return p + r == 0.0 ? 0.0 : 2.0 * p * r / (p + r); }

}  // namespace

ClassMetrics patch_metrics(std::span<const int> y_true, std::span<const int> y_pred) {
  if (y_true.size() != y_pred.size()) {
    throw ContractError("label vectors differ in length: " + std::to_string(y_true.size()) + " vs " +
                        std::to_string(y_pred.size()));
  }
  if (y_true.empty()) throw ContractError("metrics need at least one prediction");
  ClassMetrics m;
  Confusion& c = m.confusion;
  for (std::size_t i = 0; i < y_true.size(); ++i) {
    const bool t = y_true[i] != 0, p = y_pred[i] != 0;
    if (t && p) ++c.tp;
    else if (!t && p) ++c.fp;
    else if (t && !p) ++c.fn;
    else ++c.tn;
  }
  m.accuracy = ratio(c.tp + c.tn, y_true.size());
  m.gold_precision = ratio(c.tp, c.tp + c.fp);
  m.gold_recall = ratio(c.tp, c.tp + c.fn);
  m.gold_f1 = harmonic(m.gold_precision, m.gold_recall);
  const double neg_precision = ratio(c.tn, c.tn + c.fn);
  const double neg_recall = ratio(c.tn, c.tn + c.fp);
  m.precision = (m.gold_precision + neg_precision) / 2.0;
  m.recall = (m.gold_recall + neg_recall) / 2.0;
  m.f1 = (m.gold_f1 + harmonic(neg_precision, neg_recall)) / 2.0;
  return m;
}

RocCurve roc_auc(std::span<const int> y_true, std::span<const double> scores) {
  if (y_true.size() != scores.size()) {
    throw ContractError("labels and scores differ in length: " + std::to_string(y_true.size()) + " vs " +
                        std::to_string(scores.size()));
  }
  std::size_t pos = 0;
  for (std::size_t i = 0; i < y_true.size(); ++i) {
    if (std::isnan(scores[i])) throw DataError("NaN score at row " + std::to_string(i));
    pos += y_true[i] != 0;
  }
  const std::size_t neg = y_true.size() - pos;
  if (pos == 0 || neg == 0) {
    throw DegenerateInputError("ROC needs both classes (" + std::to_string(pos) + " positive, " +
                               std::to_string(neg) + " negative)");
  }
  std::vector<std::size_t> order(scores.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  RocCurve curve;
  curve.points.push_back({std::numeric_limits<double>::infinity(), 0.0, 0.0});
  std::size_t tp = 0, fp = 0;
  // Twice the area in units of (1/pos)(1/neg), accumulated exactly in integers.
  unsigned long long area2 = 0;
  for (std::size_t i = 0; i < order.size();) {
    const double s = scores[order[i]];
    const std::size_t tp0 = tp, fp0 = fp;
    for (; i < order.size() && scores[order[i]] == s; ++i) (y_true[order[i]] != 0 ? tp : fp) += 1;
    area2 += static_cast<unsigned long long>(fp - fp0) * (tp + tp0);
    curve.points.push_back({s, ratio(fp, neg), ratio(tp, pos)});
  }
  curve.auc = static_cast<double>(area2) / (2.0 * static_cast<double>(pos) * static_cast<double>(neg));
  return curve;
}

Label majority_vote(std::span<const double> patch_probs, double threshold) {
  if (patch_probs.empty()) throw ContractError("majority vote needs at least one patch");
  std::size_t gold = 0;
  double sum = 0.0;
  for (std::size_t i = 0; i < patch_probs.size(); ++i) {
    const double p = patch_probs[i];
    if (!(p >= 0.0 && p <= 1.0)) {
      throw DataError("patch probability " + std::to_string(p) + " at index " + std::to_string(i) +
                      " is outside [0, 1]");
    }
    gold += p > threshold;
    sum += p;
  }
  const std::size_t other = patch_probs.size() - gold;
  if (gold != other) return gold > other ? Label::Gold : Label::NonGold;
  return sum / static_cast<double>(patch_probs.size()) > 0.5 ? Label::Gold : Label::NonGold;
}

// --- experiments -------------------------------------------------------------

namespace {

MetricSummary summarize(const std::vector<FoldResult>& folds, bool patch_level) {
  std::vector<double> acc, prec, rec, f1, auc;
  for (const auto& f : folds) {
    const ClassMetrics& m = patch_level ? f.patch : f.image;
    acc.push_back(m.accuracy);
    prec.push_back(m.precision);
    rec.push_back(m.recall);
    f1.push_back(m.f1);
    if (patch_level && f.patch_auc) auc.push_back(*f.patch_auc);
  }
  MetricSummary s;
  s.accuracy = quality::mean_std(acc);
  s.precision = quality::mean_std(prec);
  s.recall = quality::mean_std(rec);
  s.f1 = quality::mean_std(f1);
  s.auc = quality::mean_std(auc);
  s.auc_folds = auc.size();
  return s;
}

void check_disjoint(const Fold& fold, std::size_t index) {
  const std::set<std::string> train(fold.train.begin(), fold.train.end());
  for (const auto& id : fold.test) {
    if (train.count(id) != 0) {
      throw ContractError("image " + id + " is on both sides of fold " + std::to_string(index));
    }
  }
}

}  // namespace

MetricSummary EvalReport::patch_summary() const { return summarize(folds, true); }
MetricSummary EvalReport::image_summary() const { return summarize(folds, false); }

std::string approach_name(FeatureMode mode) {
  return mode == FeatureMode::Raw ? "raw+gbdt" : "mae+gbdt";
}

EvalReport evaluate(const FeatureProvider& features, const FoldPlan& plan, FeatureMode mode,
                    const ExperimentOptions& options) {
  if (plan.folds.empty()) throw ParameterError("fold plan is empty");
  EvalReport report;
  report.approach = approach_name(mode);
  report.mode = mode;
  report.fold_mode = plan.mode;
  for (std::size_t f = 0; f < plan.folds.size(); ++f) {
    const Fold& fold = plan.folds[f];
    check_disjoint(fold, f);
    const EmbeddingMatrix table = features(fold);
    const EmbeddingMatrix train = table.select(fold.train);
    const EmbeddingMatrix test = table.select(fold.test);

    gbdt::GbdtConfig cfg = options.gbdt;
    cfg.seed = Rng::derive(options.gbdt.seed, f).next_u64();
    gbdt::FitOptions fit_opts;
    fit_opts.threads = options.threads;
    const gbdt::Ensemble model = gbdt::fit(train, cfg, fit_opts);
    const std::vector<double> probs = gbdt::predict_proba(model, test);
    const std::vector<int> truth = test.labels();

    FoldResult r;
    r.fold = f;
    r.train_images = train.images.size();
    r.test_images = test.images.size();
    r.train_rows = train.rows;
    r.test_rows = test.rows;
    std::vector<int> calls(probs.size());
    for (std::size_t i = 0; i < probs.size(); ++i) calls[i] = probs[i] > kPatchThreshold;
    r.patch = patch_metrics(truth, calls);
    try {
      RocCurve roc = roc_auc(truth, probs);
      r.patch_auc = roc.auc;
      r.roc = std::move(roc.points);
    } catch (const DegenerateInputError&) {
      r.patch_auc.reset();
    }
    std::vector<int> image_truth, image_calls;
    for (const auto& img : test.images) {
      const std::span<const double> p(probs.data() + img.first_row, img.row_count);
      image_truth.push_back(img.label == Label::Gold);
      image_calls.push_back(majority_vote(p) == Label::Gold);
    }
    r.image = patch_metrics(image_truth, image_calls);
    if (options.log) {
      char line[256];
      std::snprintf(line, sizeof line, "%s fold %zu: patch acc %.4f auc %s, image acc %.4f",
                    report.approach.c_str(), f, r.patch.accuracy,
                    r.patch_auc ? std::to_string(*r.patch_auc).c_str() : "n/a", r.image.accuracy);
      options.log(line);
    }
    report.folds.push_back(std::move(r));
  }
  return report;
}

EvalReport run_experiment(const DatasetManifest& manifest, FeatureMode mode, const MaeCheckpoint* checkpoint,
                          const FoldPlan& plan, const ExperimentOptions& options) {
  manifest.validate();
  if (mode == FeatureMode::Embeddings) {
    if (checkpoint == nullptr) throw ParameterError("embeddings mode needs a checkpoint");
    // The encoder is frozen and its normalization fixed, so one pass serves every fold.
    const EmbeddingMatrix all = extract_features(manifest, mode, checkpoint, nullptr, options.threads);
    return evaluate([&](const Fold&) { return all; }, plan, mode, options);
  }
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < manifest.entries.size(); ++i) index[manifest.entries[i].image_id] = i;
  const FeatureProvider raw = [&](const Fold& fold) {
    DatasetManifest sub;
    std::vector<SpectralCube> train_cubes;
    for (const auto& id : fold.train) {
      const auto it = index.find(id);
      if (it == index.end()) throw ParameterError("fold references unknown image " + id);
      train_cubes.push_back(read_cube(manifest.entries[it->second].path));
      sub.entries.push_back(manifest.entries[it->second]);
    }
    const BandStats stats = compute_band_stats(train_cubes);
    train_cubes.clear();
    for (const auto& id : fold.test) {
      const auto it = index.find(id);
      if (it == index.end()) throw ParameterError("fold references unknown image " + id);
      sub.entries.push_back(manifest.entries[it->second]);
    }
    return extract_features(sub, FeatureMode::Raw, nullptr, &stats, options.threads);
  };
  return evaluate(raw, plan, mode, options);
}

std::string format_mean_std(const quality::MeanStd& value) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3f ± %.3f", value.mean, value.std);
  return buf;
}

namespace {

std::string fixed(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

std::string full(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void check(std::ofstream& out, const fs::path& path) {
  if (!out) throw IoError("short write to " + path.string());
}

}  // namespace

void write_reports(const std::vector<EvalReport>& reports, const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());

  const fs::path report_path = dir / "report.csv";
  std::ofstream rep(report_path, std::ios::trunc);
  if (!rep) throw IoError("cannot write " + report_path.string());
  const std::size_t n_folds = reports.empty() ? 0 : reports.front().folds.size();
  rep << "# precision/recall/f1 macro-averaged over gold and non_gold (undefined ratios = 0); "
      << "patch called gold when p > 0.5; mean ± population std over " << n_folds << " "
      << (reports.empty() ? "kfold" : fold_mode_name(reports.front().fold_mode)) << " folds\n";
  rep << "approach,level,accuracy,precision,recall,f1,roc_auc\n";
  for (const auto& r : reports) {
    const MetricSummary p = r.patch_summary();
    const MetricSummary i = r.image_summary();
    const std::string auc = p.auc_folds == 0 ? "n/a"
                            : p.auc_folds == r.folds.size()
                                ? format_mean_std(p.auc)
                                : format_mean_std(p.auc) + " (" + std::to_string(p.auc_folds) + " folds)";
    rep << r.approach << ",patch," << format_mean_std(p.accuracy) << ',' << format_mean_std(p.precision) << ','
        << format_mean_std(p.recall) << ',' << format_mean_std(p.f1) << ',' << auc << '\n';
    rep << r.approach << ",image," << format_mean_std(i.accuracy) << ',' << format_mean_std(i.precision) << ','
        << format_mean_std(i.recall) << ',' << format_mean_std(i.f1) << ",n/a\n";
  }
  check(rep, report_path);

  const fs::path folds_path = dir / "folds.csv";
  std::ofstream fo(folds_path, std::ios::trunc);
  if (!fo) throw IoError("cannot write " + folds_path.string());
  fo << "approach,fold,level,accuracy,precision,recall,f1,gold_precision,gold_recall,gold_f1,roc_auc,"
        "train_images,test_images,train_rows,test_rows\n";
  for (const auto& r : reports) {
    for (const auto& f : r.folds) {
      for (int level = 0; level < 2; ++level) {
        const ClassMetrics& m = level == 0 ? f.patch : f.image;
        fo << r.approach << ',' << f.fold << ',' << (level == 0 ? "patch" : "image") << ',' << fixed(m.accuracy)
           << ',' << fixed(m.precision) << ',' << fixed(m.recall) << ',' << fixed(m.f1) << ','
           << fixed(m.gold_precision) << ',' << fixed(m.gold_recall) << ',' << fixed(m.gold_f1) << ','
           << (level == 0 && f.patch_auc ? fixed(*f.patch_auc) : "n/a") << ',' << f.train_images << ','
           << f.test_images << ',' << f.train_rows << ',' << f.test_rows << '\n';
      }
    }
  }
  check(fo, folds_path);

  for (const auto& r : reports) {
    const fs::path roc_path = dir / (std::string("roc_") + feature_mode_name(r.mode) + ".csv");
    std::ofstream ro(roc_path, std::ios::trunc);
    if (!ro) throw IoError("cannot write " + roc_path.string());
    ro << "fold,threshold,fpr,tpr\n";
    for (const auto& f : r.folds) {
      for (const auto& pt : f.roc) ro << f.fold << ',' << full(pt.threshold) << ',' << full(pt.fpr) << ',' << full(pt.tpr) << '\n';
    }
    check(ro, roc_path);
  }
}

fs::path run_directory(const fs::path& out, const std::string& experiment_id, std::uint64_t seed) {
  return out / (experiment_id + "-seed" + std::to_string(seed));
}

}  // namespace aurum::evalkit
