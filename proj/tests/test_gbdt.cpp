#include <cmath>
#include <fstream>

#include "aurum/error.hpp"
#include "aurum/gbdt.hpp"
#include "doctest.h"
#include "oracles.hpp"
#include "support.hpp"

using namespace aurum;
using namespace aurum::gbdt;
using aurum::testing::TempDir;

namespace {

struct Dataset {
  std::size_t rows = 0, cols = 0;
  std::vector<float> x;
  std::vector<int> y;
};

// Coarse values so that ties inside a column are common.
Dataset random_dataset(Rng& rng, std::size_t max_rows = 64, std::size_t max_cols = 8) {
  Dataset d;
  d.rows = 4 + rng.below(max_rows - 3);
  d.cols = 1 + rng.below(max_cols);
  d.x.resize(d.rows * d.cols);
  const double levels = 2.0 + static_cast<double>(rng.below(20));
  for (auto& v : d.x) v = static_cast<float>(std::floor(rng.uniform() * levels) / levels);
  d.y.resize(d.rows);
  for (std::size_t i = 0; i < d.rows; ++i) {
    const double signal = d.x[i * d.cols] + 0.5 * rng.uniform();
    d.y[i] = signal > 0.75 ? 1 : 0;
  }
  d.y[0] = 0;
  d.y[1] = 1;
  return d;
}

double train_loss(const Ensemble& m, const Dataset& d) {
  std::vector<double> margins;
  for (std::size_t i = 0; i < d.rows; ++i) margins.push_back(m.margin(std::span<const float>(d.x).subspan(i * d.cols, d.cols)));
  return logistic_loss(margins, d.y);
}

}  // namespace

TEST_CASE("separable one-feature data takes one split") {
  const std::vector<float> x{0, 0, 1, 1};
  const std::vector<int> y{0, 0, 1, 1};
  GbdtConfig cfg;
  cfg.n_trees = 1;
  cfg.max_depth = 1;
  cfg.min_child_weight = 0.0;
  const auto model = fit(x, 1, y, cfg);
  REQUIRE(model.trees.size() == 1);
  REQUIRE(model.trees[0].nodes.size() == 3);
  CHECK(model.trees[0].nodes[0].feature == 0);
  CHECK(model.trees[0].nodes[0].threshold == 0.5);
  const auto p = predict_proba(model, x, 1);
  CHECK(p[0] < 0.5);
  CHECK(p[1] < 0.5);
  CHECK(p[2] > 0.5);
  CHECK(p[3] > 0.5);
}

TEST_CASE("best split on a 4-row hand dataset matches enumeration") {
  const std::vector<float> x{0.1f, 5.0f, 0.4f, 2.0f, 0.9f, 1.0f, 0.6f, 3.0f};
  const std::vector<int> y{0, 1, 1, 0};
  GbdtConfig cfg;
  cfg.n_trees = 1;
  cfg.max_depth = 1;
  cfg.min_child_weight = 0.0;
  std::vector<SplitRecord> records;
  std::vector<double> g, h;
  FitOptions opts;
  opts.observer = [&](const SplitRecord& r, std::span<const double> gr, std::span<const double> hs) {
    records.push_back(r);
    g.assign(gr.begin(), gr.end());
    h.assign(hs.begin(), hs.end());
  };
  fit(x, 2, y, cfg, opts);
  REQUIRE(!records.empty());
  const std::vector<std::size_t> rows{0, 1, 2, 3}, feats{0, 1};
  const auto best = oracle::best_split(x, 2, rows, feats, g, h, 1.0, 0.0, 0.0);
  CHECK(records[0].split);
  CHECK(records[0].gain == doctest::Approx(best.gain).epsilon(1e-12));
  CHECK(static_cast<std::size_t>(records[0].feature) == best.feature);
  CHECK(records[0].threshold == best.threshold);
}

TEST_CASE("every chosen split is optimal on random small datasets") {
  Rng rng(2024);
  std::size_t nodes_checked = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const auto d = random_dataset(rng);
    GbdtConfig cfg;
    cfg.n_trees = 3;
    cfg.max_depth = 3;
    cfg.min_child_weight = trial % 3 == 0 ? 0.0 : 0.5;
    cfg.lambda = trial % 2 ? 1.0 : 0.3;
    cfg.gamma = trial % 5 == 0 ? 0.01 : 0.0;
    FitOptions opts;
    opts.observer = [&](const SplitRecord& r, std::span<const double> g, std::span<const double> h) {
      if (r.depth >= cfg.max_depth) return;
      const auto best = oracle::best_split(d.x, d.cols, r.rows, r.features, g, h, cfg.lambda, cfg.gamma,
                                           cfg.min_child_weight);
      ++nodes_checked;
      if (r.split) {
        CHECK(best.any);
        CHECK(std::abs(r.gain - best.gain) <= 1e-9 * std::max(1.0, std::abs(best.gain)));
      } else {
        CHECK((!best.any || best.gain <= 1e-12));
      }
    };
    fit(d.x, d.cols, d.y, cfg, opts);
  }
  CHECK(nodes_checked > 1000);
}

TEST_CASE("training loss never increases between rounds") {
  Rng rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    const auto d = random_dataset(rng);
    GbdtConfig cfg;
    cfg.n_trees = 30;
    cfg.max_depth = 1 + trial % 4;
    cfg.learning_rate = trial % 2 ? 0.1 : 0.5;
    std::vector<double> losses;
    FitOptions opts;
    opts.on_round = [&](std::size_t, double l) { losses.push_back(l); };
    const auto model = fit(d.x, d.cols, d.y, cfg, opts);
    REQUIRE(losses.size() == 31);
    for (std::size_t i = 1; i < losses.size(); ++i) CHECK(losses[i] <= losses[i - 1] + 1e-15);
    CHECK(losses.back() == doctest::Approx(train_loss(model, d)).epsilon(1e-12));
  }
}

TEST_CASE("base score, empty ensembles and the lambda limit") {
  const std::vector<float> x{0, 1, 2, 3, 4};
  const std::vector<int> y{0, 1, 1, 1, 0};
  GbdtConfig cfg;
  cfg.n_trees = 5;
  const auto m = fit(x, 1, y, cfg);
  CHECK(m.base_score == doctest::Approx(std::log(0.6 / 0.4)));

  Ensemble empty;
  empty.n_features = 1;
  for (double p : predict_proba(empty, x, 1)) CHECK(p == 0.5);

  cfg.lambda = 1e12;
  cfg.min_child_weight = 0.0;
  const auto flat = fit(x, 1, y, cfg);
  for (const auto& t : flat.trees)
    for (const auto& n : t.nodes)
      if (n.is_leaf()) CHECK(std::abs(n.value) < 1e-10);
  for (double p : predict_proba(flat, x, 1)) CHECK(p == doctest::Approx(0.6).epsilon(1e-9));
}

TEST_CASE("fit rejects bad input") {
  GbdtConfig cfg;
  const std::vector<float> x{0, 1, 2};
  CHECK_THROWS_AS(fit(x, 1, std::vector<int>{1, 1, 1}, cfg), TrainingError);
  CHECK_THROWS_AS(fit(std::vector<float>{0}, 1, std::vector<int>{1}, cfg), TrainingError);
  CHECK_THROWS_AS(fit(x, 1, std::vector<int>{0, 2, 1}, cfg), DataError);
  CHECK_THROWS_AS(fit(x, 2, std::vector<int>{0, 1, 1}, cfg), ShapeError);
  try {
    fit(std::vector<float>{0, 1, 2, NAN}, 2, std::vector<int>{0, 1}, cfg);
    FAIL("expected a data error");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("row 1") != std::string::npos);
  }
  cfg.learning_rate = 0.0;
  CHECK_THROWS_AS(fit(x, 1, std::vector<int>{0, 1, 1}, cfg), ParameterError);
  const auto m = fit(x, 1, std::vector<int>{0, 1, 1}, GbdtConfig{});
  CHECK_THROWS_AS(predict_proba(m, std::vector<float>{0, 1}, 2), ShapeError);
}

TEST_CASE("fitting is deterministic and thread-count independent") {
  Rng rng(11);
  Dataset d;
  d.rows = 400;
  d.cols = 6;
  for (std::size_t i = 0; i < d.rows * d.cols; ++i) d.x.push_back(static_cast<float>(rng.normal()));
  for (std::size_t i = 0; i < d.rows; ++i) d.y.push_back(d.x[i * 6] + d.x[i * 6 + 3] * d.x[i * 6 + 2] > 0 ? 1 : 0);
  GbdtConfig cfg;
  cfg.n_trees = 20;
  cfg.subsample_rows = 0.7;
  cfg.subsample_features = 0.5;
  cfg.seed = 3;
  const auto a = fit(d.x, d.cols, d.y, cfg);
  FitOptions threaded;
  threaded.threads = 3;
  CHECK(a == fit(d.x, d.cols, d.y, cfg, threaded));
  cfg.seed = 4;
  CHECK(!(a == fit(d.x, d.cols, d.y, cfg)));
}

TEST_CASE("predictions are invariant to a consistent feature permutation") {
  Rng rng(12);
  const std::size_t rows = 300, cols = 5;
  std::vector<float> x(rows * cols);
  for (auto& v : x) v = static_cast<float>(rng.uniform());
  std::vector<int> y(rows);
  for (std::size_t i = 0; i < rows; ++i) y[i] = x[i * cols + 1] + x[i * cols + 4] > 1.0 ? 1 : 0;
  // Distinct per-column values so no gain ties depend on column order.
  const std::vector<std::size_t> perm{3, 0, 4, 1, 2};
  std::vector<float> xp(rows * cols);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t c = 0; c < cols; ++c) xp[i * cols + c] = x[i * cols + perm[c]];
  GbdtConfig cfg;
  cfg.n_trees = 25;
  cfg.max_depth = 3;
  const auto a = predict_proba(fit(x, cols, y, cfg), x, cols);
  const auto b = predict_proba(fit(xp, cols, y, cfg), xp, cols);
  CHECK(a == b);
}

TEST_CASE("model files round-trip bitwise and reject malformed input") {
  TempDir dir("gbdt");
  Rng rng(13);
  const auto d = random_dataset(rng);
  GbdtConfig cfg;
  cfg.n_trees = 15;
  cfg.learning_rate = 0.37;
  const auto model = fit(d.x, d.cols, d.y, cfg);
  save_model(model, dir / "m.json");
  const auto back = load_model(dir / "m.json");
  CHECK(back == model);
  CHECK(predict_proba(back, d.x, d.cols) == predict_proba(model, d.x, d.cols));

  auto doc = to_json(model);
  doc["version"] = 2;
  CHECK_THROWS_AS(from_json(doc), VersionError);

  doc = to_json(model);
  nlohmann::json broken = nlohmann::json::object();
  broken["nodes"] = nlohmann::json::array({{{"feature", 0}, {"threshold", 0.5}, {"left", 1}, {"right", 2}},
                                           {{"leaf", 0.1}}});
  doc["trees"].push_back(broken);
  CHECK_THROWS_AS(from_json(doc), FormatError);

  doc = to_json(model);
  doc["trees"][0]["nodes"] = nlohmann::json::array({{{"feature", 0}, {"threshold", 0.5}, {"left", 0}, {"right", 0}}});
  CHECK_THROWS_AS(from_json(doc), FormatError);

  doc = to_json(model);
  doc.erase("base_score");
  CHECK_THROWS_AS(from_json(doc), FormatError);

  {
    std::ofstream out(dir / "junk.json");
    out << "{ not json";
  }
  CHECK_THROWS_AS(load_model(dir / "junk.json"), FormatError);
  CHECK_THROWS_AS(load_model(dir / "absent.json"), IoError);
}
