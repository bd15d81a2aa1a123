// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <functional>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "aurum/datacube.hpp"
#include "aurum/error.hpp"
#include "aurum/evalkit.hpp"
#include "aurum/gbdt.hpp"
#include "aurum/mae.hpp"
#include "aurum/quality.hpp"
#include "aurum/rng.hpp"
#include "aurum/sampler.hpp"
#include "cli.hpp"
#include "gradcheck.hpp"
#include "json.hpp"
#include "oracles.hpp"
#include "support.hpp"

namespace fs = std::filesystem;
using namespace aurum;
using aurum::testing::slurp;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

// Collects failed conditions so one line can say what went wrong.
class Tally {
 public:
  void expect(bool ok, const std::string& what) {
    if (!ok && failures_.size() < 5) failures_.push_back(what);
    failed_ += ok ? 0 : 1;
  }
  bool ok() const { return failed_ == 0; }
  std::string failures() const {
    std::string s;
    for (const auto& f : failures_) s += (s.empty() ? "" : "; ") + f;
    if (failed_ > failures_.size()) s += "; ... " + std::to_string(failed_) + " in total";
    return s;
  }

 private:
  std::vector<std::string> failures_;
  std::size_t failed_ = 0;
};

int cli_call(std::vector<std::string> args, const fs::path& log) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  std::ofstream logf(log, std::ios::app);
  logf << "$ aurum";
  for (const auto& a : args) logf << ' ' << a;
  logf << '\n' << out.str() << err.str();
  if (code != 0) throw std::runtime_error(args.front() + " exited with " + std::to_string(code) + ": " + err.str());
  return code;
}

nlohmann::json summary_of(const fs::path& run_dir) {
  return nlohmann::json::parse(slurp(run_dir / "run.json")).at("summary");
}

// --- 1 ----------------------------------------------------------------------------

Outcome geometry(const fs::path& work) {
  Tally t;
  const auto cube = sampler::synth_cube(Label::Gold, sampler::Difficulty::Entangled, 1, 0);
  const auto grid = tokenize(cube);
  t.expect(cube.width() == 128 && cube.height() == 128 && cube.bands() == 12, "cube is not 128x128x12");
  t.expect(grid.size() == 1024 && grid.expected_tokens() == 1024, "token count " + std::to_string(grid.size()));
  t.expect(grid.values.size() == 1024 * 8 * 8 * 3, "token width is not 8x8x3");

  const fs::path dir = work / "geometry";
  fs::create_directories(dir);
  write_cube(cube, dir / "cube.msc");
  DatasetManifest m;
  for (std::size_t i = 0; i < 63; ++i) {
    m.entries.push_back({"g" + std::to_string(i), dir / "cube.msc", i < 33 ? Label::Gold : Label::NonGold, 0.0, 0.0,
                         "2021-06-01"});
  }
  const BandStats stats = compute_band_stats(std::span<const SpectralCube>(&cube, 1));
  const auto features = extract_features(m, FeatureMode::Raw, nullptr, &stats);
  t.expect(features.rows == 64512, "manifest rows " + std::to_string(features.rows));
  t.expect(features.cols == 192, "raw row width " + std::to_string(features.cols));

  const auto plan = evalkit::make_folds(m, 2, 11, evalkit::FoldMode::RepeatedHoldout);
  const auto& fold = plan.folds.at(0);
  const auto train = features.select(fold.train);
  const auto test = features.select(fold.test);
  t.expect(fold.train.size() == 51 && fold.test.size() == 12, "split is not 51/12 images");
  t.expect(train.rows == 52224, "train rows " + std::to_string(train.rows));
  t.expect(test.rows == 12288, "test rows " + std::to_string(test.rows));
  return {t.ok(), t.ok() ? "1024 tokens, 64512 rows, 52224/12288 split" : t.failures()};
}

// --- 2 ----------------------------------------------------------------------------

Outcome gradients() {
  Tally t;
  std::string detail;
  for (auto scope : {LossScope::AllTokens, LossScope::MaskedOnly}) {
    auto cfg = MaeConfig::fixture();
    cfg.loss_scope = scope;
    auto ckpt = init_checkpoint(cfg, BandStats{std::vector<double>(6, 0.0), std::vector<double>(6, 1.0)},
                                default_band_names(6));
    Rng jit(21);
    for (auto& s : ckpt.sections)
      for (std::size_t i = 0; i < s.tensor.size(); ++i) s.tensor[i] += static_cast<float>(jit.normal(0.0, 0.05));
    Rng rng(22);
    const auto grid = tokenize(aurum::testing::random_cube(16, 16, 6, rng));
    const auto mask = make_mask(grid.size(), cfg.mask_ratio, rng);
    MaeModel<double> model(ckpt);
    const auto x = token_matrix<double>(grid);
    const auto r = aurum::testing::check_gradients(
        model.parameters(),
        [&](bool backward) {
          model.zero_grad();
          nn::Graph<double> g;
          auto fwd = model.forward(g, x, grid, mask);
          if (backward) g.backward(fwd.loss);
          return fwd.loss.value()[0];
        },
        1e-4, 1e-4);
    t.expect(r.pass_rate() >= 0.99, std::string(loss_scope_name(scope)) + " pass rate " + fmt("%.4f", r.pass_rate()));
    detail += (detail.empty() ? "" : ", ") + std::string(loss_scope_name(scope)) + " " + std::to_string(r.within) +
              "/" + std::to_string(r.checked) + " within 1e-4";
  }
  return {t.ok(), t.ok() ? "embed_dim 32, " + detail : t.failures()};
}

// --- 3 ----------------------------------------------------------------------------

Outcome metric_oracles() {
  Tally t;
  double worst = 0.0;
  Rng rng(31);
  for (int trial = 0; trial < 50; ++trial) {
    const auto x = aurum::testing::random_cube(16, 16, 6, rng);
    // Half the pairs are noisy copies so every metric sees realistic values.
    std::vector<float> yd(x.data().begin(), x.data().end());
    if (trial % 2) {
      for (auto& v : yd) v = static_cast<float>(std::clamp(v + rng.normal(0.0, 0.05), 0.0, 1.0));
    } else {
      for (auto& v : yd) v = static_cast<float>(rng.uniform());
    }
    const SpectralCube y(16, 16, x.band_names(), yd);
    const double diffs[] = {
        std::abs(quality::mse(x, y) - oracle::mse(x, y)),
        std::abs(quality::psnr(x, y) - oracle::psnr(x, y)),
        std::abs(quality::ssim(x, y) - oracle::ssim(x, y)),
        std::abs(quality::sam(x, y).radians - oracle::sam(x, y)),
        std::abs(quality::ergas(x, y).value - oracle::ergas(x, y)),
    };
    for (double d : diffs) {
      worst = std::max(worst, d);
      t.expect(d <= 1e-9, "pair " + std::to_string(trial) + " differs by " + fmt("%.3g", d));
    }
    std::vector<float> twice(x.data().begin(), x.data().end());
    for (auto& v : twice) v *= 2.0f;
    const double s2 = quality::sam(x, SpectralCube(16, 16, x.band_names(), twice)).radians;
    t.expect(s2 == 0.0, "SAM(x, 2x) = " + fmt("%.3g", s2));
    t.expect(quality::mse(x, x) == 0.0, "MSE(x, x) != 0");
    t.expect(quality::psnr(x, x) == quality::kPsnrCapDb, "PSNR(x, x) below the cap");
    t.expect(quality::sam(x, x).radians == 0.0, "SAM(x, x) != 0");
    t.expect(quality::ergas(x, x).value == 0.0, "ERGAS(x, x) != 0");
    t.expect(std::abs(quality::ssim(x, x) - 1.0) <= 1e-12, "SSIM(x, x) != 1");
  }
  return {t.ok(), t.ok() ? "50 pairs, worst oracle gap " + fmt("%.2g", worst) + ", optima exact" : t.failures()};
}

// --- 4 ----------------------------------------------------------------------------

Outcome auc_oracle() {
  Tally t;
  double worst = 0.0;
  Rng rng(41);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 2 + rng.below(999);
    const double levels = trial % 3 == 0 ? 10.0 : 1e6;  // coarse scores force ties
    std::vector<int> y(n);
    std::vector<double> s(n);
    for (std::size_t i = 0; i < n; ++i) {
      y[i] = rng.uniform() < 0.4 ? 1 : 0;
      s[i] = std::floor((rng.uniform() + 0.3 * y[i]) * levels) / levels;
    }
    y[0] = 0;
    y[1] = 1;
    const double d = std::abs(evalkit::roc_auc(y, s).auc - oracle::mann_whitney_auc(y, s));
    worst = std::max(worst, d);
    t.expect(d <= 1e-12, "vector " + std::to_string(trial) + " differs by " + fmt("%.3g", d));
  }
  return {t.ok(), t.ok() ? "100 vectors, worst gap " + fmt("%.2g", worst) : t.failures()};
}

// --- 5 ----------------------------------------------------------------------------

struct Dataset {
  std::size_t rows = 0, cols = 0;
  std::vector<float> x;
  std::vector<int> y;
};

Dataset random_dataset(Rng& rng) {
  Dataset d;
  d.rows = 4 + rng.below(61);
  d.cols = 1 + rng.below(8);
  d.x.resize(d.rows * d.cols);
  const double levels = 2.0 + static_cast<double>(rng.below(20));
  for (auto& v : d.x) v = static_cast<float>(std::floor(rng.uniform() * levels) / levels);
  d.y.resize(d.rows);
  for (std::size_t i = 0; i < d.rows; ++i) d.y[i] = d.x[i * d.cols] + 0.5 * rng.uniform() > 0.75 ? 1 : 0;
  d.y[0] = 0;
  d.y[1] = 1;
  return d;
}

Outcome split_optimality() {
  Tally t;
  std::size_t nodes = 0, splits = 0;
  Rng rng(51);
  for (int trial = 0; trial < 200; ++trial) {
    const auto d = random_dataset(rng);
    gbdt::GbdtConfig cfg;
    cfg.n_trees = 10;
    cfg.max_depth = 1 + trial % 4;
    cfg.learning_rate = trial % 2 ? 0.3 : 0.1;
    cfg.min_child_weight = trial % 3 == 0 ? 0.0 : 0.5;
    cfg.gamma = trial % 5 == 0 ? 0.01 : 0.0;
    gbdt::FitOptions opts;
    opts.observer = [&](const gbdt::SplitRecord& r, std::span<const double> g, std::span<const double> h) {
      if (r.depth >= cfg.max_depth) return;
      const auto best =
          oracle::best_split(d.x, d.cols, r.rows, r.features, g, h, cfg.lambda, cfg.gamma, cfg.min_child_weight);
      ++nodes;
      if (r.split) {
        ++splits;
        t.expect(best.any && std::abs(r.gain - best.gain) <= 1e-9 * std::max(1.0, std::abs(best.gain)),
                 "dataset " + std::to_string(trial) + " node " + std::to_string(r.node) + " gain " +
                     fmt("%.12g", r.gain) + " vs " + fmt("%.12g", best.gain));
      } else {
        t.expect(!best.any || best.gain <= 1e-12, "dataset " + std::to_string(trial) + " missed a split");
      }
    };
    std::vector<double> losses;
    opts.on_round = [&](std::size_t, double l) { losses.push_back(l); };
    gbdt::fit(d.x, d.cols, d.y, cfg, opts);
    for (std::size_t i = 1; i < losses.size(); ++i)
      t.expect(losses[i] <= losses[i - 1] + 1e-15, "dataset " + std::to_string(trial) + " loss rose at round " +
                                                       std::to_string(i));
  }
  return {t.ok(), t.ok() ? std::to_string(nodes) + " nodes (" + std::to_string(splits) +
                               " splits) optimal, losses monotone"
                         : t.failures()};
}

// --- 6 ----------------------------------------------------------------------------

struct Paths {
  fs::path work;
  fs::path pre_manifest() const { return work / "pretrain_corpus" / "manifest.csv"; }
  fs::path pretrain() const { return work / "pretrain"; }
  fs::path checkpoint() const { return pretrain() / "checkpoint.mae"; }
  fs::path entangled() const { return work / "entangled" / "manifest.csv"; }
  fs::path separable() const { return work / "separable" / "manifest.csv"; }
  fs::path log() const { return work / "commands.log"; }
};

Outcome training_signal(const Paths& p) {
  cli_call({"synth", "--out", (p.work / "pretrain_corpus").string(), "--gold", "16", "--non-gold", "16",
            "--difficulty", "entangled", "--seed", "101"},
           p.log());
  cli_call({"pretrain", "--manifest", p.pre_manifest().string(), "--out", p.pretrain().string(), "--profile",
            "fixture", "--seed", "3"},
           p.log());
  std::ifstream in(p.pretrain() / "epochs.csv");
  std::string line;
  std::getline(in, line);
  std::vector<double> losses;
  while (std::getline(in, line)) losses.push_back(std::stod(line.substr(line.find(',') + 1)));
  if (losses.empty()) return {false, "no epochs recorded"};
  const double ratio = losses.back() / losses.front();
  const bool ok = losses.size() <= 20 && ratio < 0.5;
  return {ok, "32 cubes, " + std::to_string(losses.size()) + " epochs, loss " + fmt("%.4f", losses.front()) + " -> " +
                  fmt("%.4f", losses.back()) + " (ratio " + fmt("%.3f", ratio) + ")"};
}

// --- 7 and 8 ------------------------------------------------------------------------

std::vector<std::string> entangled_command(const Paths& p, const fs::path& out) {
  return {"run-experiment", "--manifest", p.entangled().string(), "--checkpoint", p.checkpoint().string(),
          "--mode", "both", "--folds", "5", "--seed", "7", "--experiment-id", "entangled", "--out", out.string()};
}

Outcome directional(const Paths& p) {
  Tally t;
  cli_call({"synth", "--out", p.entangled().parent_path().string(), "--gold", "33", "--non-gold", "30",
            "--difficulty", "entangled", "--seed", "1"},
           p.log());
  cli_call({"synth", "--out", p.separable().parent_path().string(), "--gold", "33", "--non-gold", "30",
            "--difficulty", "separable", "--seed", "1"},
           p.log());
  cli_call(entangled_command(p, p.work / "run_a"), p.log());
  cli_call({"run-experiment", "--manifest", p.separable().string(), "--checkpoint", p.checkpoint().string(),
            "--mode", "embeddings", "--folds", "5", "--seed", "7", "--experiment-id", "separable", "--out",
            (p.work / "run_sep").string()},
           p.log());

  const auto ent = summary_of(p.work / "run_a" / "entangled-seed7");
  const auto sep = summary_of(p.work / "run_sep" / "separable-seed7");
  const double raw_auc = ent["raw"]["patch_auc"], emb_auc = ent["embeddings"]["patch_auc"];
  const double raw_acc = ent["raw"]["image_accuracy"], emb_acc = ent["embeddings"]["image_accuracy"];
  const double sep_acc = sep["embeddings"]["image_accuracy"];
  t.expect(emb_auc >= raw_auc + 0.05, "patch AUC gap below 0.05");
  t.expect(emb_acc > raw_acc, "image accuracy not strictly higher");
  t.expect(sep_acc >= 0.9, "separable image accuracy below 0.9");
  const std::string detail = "entangled patch AUC " + fmt("%.3f", emb_auc) + " vs raw " + fmt("%.3f", raw_auc) +
                             ", image acc " + fmt("%.3f", emb_acc) + " vs raw " + fmt("%.3f", raw_acc) +
                             "; separable image acc " + fmt("%.3f", sep_acc);
  return {t.ok(), t.ok() ? detail : t.failures() + " (" + detail + ")"};
}

Outcome stump_invariant(const Paths& p) {
  cli_call({"run-experiment", "--manifest", p.entangled().string(), "--checkpoint", p.checkpoint().string(),
            "--mode", "both", "--folds", "5", "--seed", "7", "--n-trees", "10", "--max-depth", "1",
            "--experiment-id", "stumps", "--out", (p.work / "run_stumps").string()},
           p.log());
  const auto s = summary_of(p.work / "run_stumps" / "stumps-seed7");
  const double raw_auc = s["raw"]["patch_auc"], emb_auc = s["embeddings"]["patch_auc"];
  return {raw_auc < 0.65 && emb_auc > raw_auc,
          "10 depth-1 trees: raw patch AUC " + fmt("%.3f", raw_auc) + ", embeddings " + fmt("%.3f", emb_auc)};
}

Outcome determinism(const Paths& p) {
  cli_call(entangled_command(p, p.work / "run_b"), p.log());
  Tally t;
  std::size_t bytes = 0;
  for (const char* f : {"report.csv", "folds.csv", "roc_raw.csv", "roc_embeddings.csv", "fold_plan.csv"}) {
    const auto a = slurp(p.work / "run_a" / "entangled-seed7" / f);
    const auto b = slurp(p.work / "run_b" / "entangled-seed7" / f);
    t.expect(!a.empty() && a == b, std::string(f) + " differs");
    bytes += a.size();
  }
  return {t.ok(), t.ok() ? "5 report files identical (" + std::to_string(bytes) + " bytes)" : t.failures()};
}

// --- 9 ----------------------------------------------------------------------------

Outcome round_trips(const fs::path& work) {
  Tally t;
  const fs::path dir = work / "roundtrip";
  fs::create_directories(dir);

  DatasetManifest m;
  std::vector<SpectralCube> cubes;
  for (std::size_t i = 0; i < 4; ++i) {
    const Label label = i % 2 ? Label::Gold : Label::NonGold;
    cubes.push_back(sampler::synth_cube(label, sampler::Difficulty::Separable, 9, i));
    const fs::path path = dir / ("c" + std::to_string(i) + ".msc");
    write_cube(cubes.back(), path);
    const auto back = read_cube(path);
    t.expect(back == cubes.back(), "cube " + std::to_string(i) + " changed on reload");
    t.expect(tokenize(back).values == tokenize(cubes.back()).values, "tokens differ after reload");
    write_cube(back, dir / "again.msc");
    t.expect(slurp(path) == slurp(dir / "again.msc"), "cube bytes differ on rewrite");
    m.entries.push_back({"c" + std::to_string(i), path, label, 0.0, 0.0, "2021-06-01"});
  }

  auto cfg = MaeConfig::fixture();
  cfg.seed = 91;
  auto ckpt = init_checkpoint(cfg, compute_band_stats(cubes), cubes.front().band_names());
  Rng jit(92);
  for (auto& s : ckpt.sections)
    for (std::size_t i = 0; i < s.tensor.size(); ++i) s.tensor[i] += static_cast<float>(jit.normal(0.0, 0.02));
  save_checkpoint(ckpt, dir / "model.mae");
  const auto ckpt_back = load_checkpoint(dir / "model.mae");
  t.expect(ckpt_back == ckpt, "checkpoint changed on reload");
  t.expect(ckpt_back.fingerprint() == ckpt.fingerprint(), "checkpoint fingerprint changed");
  const auto emb_a = extract_features(m, FeatureMode::Embeddings, &ckpt);
  const auto emb_b = extract_features(m, FeatureMode::Embeddings, &ckpt_back);
  t.expect(emb_a == emb_b, "embeddings differ after checkpoint reload");

  gbdt::GbdtConfig gcfg;
  gcfg.n_trees = 25;
  gcfg.max_depth = 3;
  gcfg.subsample_rows = 0.8;
  const auto model = gbdt::fit(emb_a, gcfg);
  gbdt::save_model(model, dir / "model.json");
  const auto model_back = gbdt::load_model(dir / "model.json");
  const auto pa = gbdt::predict_proba(model, emb_a);
  const auto pb = gbdt::predict_proba(model_back, emb_a);
  t.expect(pa.size() == pb.size() && std::equal(pa.begin(), pa.end(), pb.begin(), [](double a, double b) {
             return std::memcmp(&a, &b, sizeof a) == 0;
           }),
           "predictions differ after model reload");
  gbdt::save_model(model_back, dir / "model2.json");
  t.expect(slurp(dir / "model.json") == slurp(dir / "model2.json"), "model bytes differ on rewrite");
  return {t.ok(), t.ok() ? "4 cubes, checkpoint (" + std::to_string(emb_a.rows) + " embeddings), " +
                               std::to_string(model.trees.size()) + "-tree model: outputs bitwise identical"
                         : t.failures()};
}

// --- 10 ---------------------------------------------------------------------------

Outcome voting() {
  Tally t;
  Rng rng(101);
  auto vec = [](std::size_t n_a, double a, double b) {
    std::vector<double> v(1024, b);
    std::fill_n(v.begin(), n_a, a);
    return v;
  };
  struct Case {
    const char* name;
    std::vector<double> probs;
    Label expected;
  };
  const std::vector<Case> cases{
      {"gold majority", vec(600, 0.9, 0.1), Label::Gold},
      {"non-gold majority", vec(400, 0.9, 0.1), Label::NonGold},
      {"one-patch majority", vec(513, 0.51, 0.0), Label::Gold},
      {"p = 0.5 counts as non-gold", vec(1024, 0.5, 0.5), Label::NonGold},
      {"tie, mean above 0.5", vec(512, 0.9, 0.2), Label::Gold},
      {"tie, mean below 0.5", vec(512, 0.6, 0.0), Label::NonGold},
      {"tie, mean exactly 0.5", vec(512, 1.0, 0.0), Label::NonGold},
  };
  for (const auto& c : cases) {
    t.expect(evalkit::majority_vote(c.probs) == c.expected, c.name);
    auto shuffled = c.probs;
    for (std::size_t i = shuffled.size() - 1; i > 0; --i) std::swap(shuffled[i], shuffled[rng.below(i + 1)]);
    t.expect(evalkit::majority_vote(shuffled) == c.expected, std::string(c.name) + " (shuffled)");
  }
  bool threw = false;
  try {
    auto bad = vec(1, 1.2, 0.3);
    evalkit::majority_vote(bad);
  } catch (const DataError&) {
    threw = true;
  }
  t.expect(threw, "probability 1.2 accepted");
  return {t.ok(), t.ok() ? std::to_string(cases.size()) + " constructed vectors, both tie branches" : t.failures()};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  std::string work = "acceptance_work";
  app.add_option("--work", work, "Scratch directory (recreated)");
  CLI11_PARSE(app, argc, argv);

  Paths paths{fs::absolute(work)};
  fs::remove_all(paths.work);
  fs::create_directories(paths.work);

  struct Criterion {
    std::string id;
    std::string name;
    double budget_s;
    std::function<Outcome()> body;
  };
  const std::vector<Criterion> criteria{
      {"1", "geometry", 1.0, [&] { return geometry(paths.work); }},
      {"2", "gradients", 120.0, gradients},
      {"3", "metric oracles", 30.0, metric_oracles},
      {"4", "auc oracle", 10.0, auc_oracle},
      {"5", "split optimality", 60.0, split_optimality},
      {"6", "mae training signal", 600.0, [&] { return training_signal(paths); }},
      {"7", "directional check", 1200.0, [&] { return directional(paths); }},
      {"7b", "stump invariant", 600.0, [&] { return stump_invariant(paths); }},
      {"8", "determinism", 1200.0, [&] { return determinism(paths); }},
      {"9", "format round-trips", 60.0, [&] { return round_trips(paths.work); }},
      {"10", "majority vote", 1.0, voting},
  };

  int failed = 0;
  for (const auto& c : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.body();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (secs > c.budget_s) {
      o.pass = false;
      o.detail += "; over the " + fmt("%.0f s", c.budget_s) + " budget";
    }
    failed += o.pass ? 0 : 1;
    std::printf("%s criterion %-3s %-20s %8.2f s  %s\n", o.pass ? "PASS" : "FAIL", c.id.c_str(), c.name.c_str(),
                secs, o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
