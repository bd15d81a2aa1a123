#include "aurum/gbdt.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "aurum/error.hpp"
#include "aurum/parallel.hpp"
#include "aurum/rng.hpp"

namespace aurum::gbdt {
namespace fs = std::filesystem;
using json = nlohmann::json;

void GbdtConfig::validate() const {
  if (n_trees < 1) throw ParameterError("n_trees must be >= 1");
  if (max_depth < 1) throw ParameterError("max_depth must be >= 1");
  if (!(learning_rate > 0.0 && learning_rate <= 1.0)) throw ParameterError("learning_rate must lie in (0, 1]");
  if (!(lambda >= 0.0)) throw ParameterError("lambda must be >= 0");
  if (!(gamma >= 0.0)) throw ParameterError("gamma must be >= 0");
  if (!(min_child_weight >= 0.0)) throw ParameterError("min_child_weight must be >= 0");
  if (!(subsample_rows > 0.0 && subsample_rows <= 1.0)) throw ParameterError("subsample_rows must lie in (0, 1]");
  if (!(subsample_features > 0.0 && subsample_features <= 1.0)) {
    throw ParameterError("subsample_features must lie in (0, 1]");
  }
}

double Tree::predict(std::span<const float> row) const noexcept {
  std::size_t i = 0;
  while (!nodes[i].is_leaf()) {
    const Node& n = nodes[i];
    i = static_cast<std::size_t>(row[static_cast<std::size_t>(n.feature)] < n.threshold ? n.left : n.right);
  }
  return nodes[i].value;
}

double Ensemble::margin(std::span<const float> row) const noexcept {
  double m = base_score;
  for (const auto& t : trees) m += t.predict(row);
  return m;
}

double split_gain(double gl, double hl, double gr, double hr, double lambda, double gamma) noexcept {
  const double g = gl + gr, h = hl + hr;
  return 0.5 * (gl * gl / (hl + lambda) + gr * gr / (hr + lambda) - g * g / (h + lambda)) - gamma;
}

namespace {

double sigmoid(double m) noexcept { return 1.0 / (1.0 + std::exp(-m)); }

struct SortedColumn {
  std::vector<std::uint32_t> order;
  std::vector<float> values;
};

struct GradPair {
  double g = 0.0;
  double h = 0.0;
};

/// Running left-side sums of one frontier node while scanning a column.
struct Scan {
  double g = 0.0;
  double h = 0.0;
  float last = 0.0f;
  bool seen = false;
};

struct Candidate {
  double gain = 0.0;
  int feature = -1;
  double threshold = 0.0;
};

std::size_t fraction_count(double frac, std::size_t n) {
  return std::clamp<std::size_t>(static_cast<std::size_t>(std::llround(frac * static_cast<double>(n))), 1, n);
}

}  // namespace

double logistic_loss(std::span<const double> margins, std::span<const int> labels) {
  double total = 0.0;
  for (std::size_t i = 0; i < margins.size(); ++i) {
    const double m = margins[i];
    // log(1 + e^m) - y m, evaluated stably.
    const double softplus = m > 0 ? m + std::log1p(std::exp(-m)) : std::log1p(std::exp(m));
    total += softplus - (labels[i] != 0 ? m : 0.0);
  }
  return total / static_cast<double>(margins.size());
}

Ensemble fit(std::span<const float> features, std::size_t cols, std::span<const int> labels,
             const GbdtConfig& config, const FitOptions& options) {
  config.validate();
  const std::size_t rows = labels.size();
  if (cols == 0) throw ShapeError("gbdt: feature width must be positive");
  if (features.size() != rows * cols) {
    throw ShapeError("gbdt: " + std::to_string(features.size()) + " feature values for " +
                     std::to_string(rows) + " rows x " + std::to_string(cols) + " columns");
  }
  if (rows < 2) throw TrainingError("gbdt needs at least 2 rows");
  std::size_t positives = 0;
  for (int y : labels) {
    if (y != 0 && y != 1) throw DataError("gbdt labels must be 0 or 1");
    positives += static_cast<std::size_t>(y);
  }
  if (positives == 0 || positives == rows) throw TrainingError("gbdt needs both classes in the labels");
  for (std::size_t i = 0; i < features.size(); ++i) {
    if (!std::isfinite(features[i])) {
      throw DataError("non-finite feature at row " + std::to_string(i / cols) + ", column " +
                      std::to_string(i % cols));
    }
  }

  // Columns sorted once; ties keep row order.
  std::vector<SortedColumn> columns(cols);
  parallel_for(cols, options.threads, [&](std::size_t f) {
    auto& col = columns[f];
    col.order.resize(rows);
    std::iota(col.order.begin(), col.order.end(), 0u);
    std::stable_sort(col.order.begin(), col.order.end(), [&](std::uint32_t a, std::uint32_t b) {
      return features[a * cols + f] < features[b * cols + f];
    });
    col.values.resize(rows);
    for (std::size_t i = 0; i < rows; ++i) col.values[i] = features[col.order[i] * cols + f];
  });

  Ensemble model;
  model.config = config;
  model.n_features = cols;
  const double prior = static_cast<double>(positives) / static_cast<double>(rows);
  model.base_score = std::log(prior / (1.0 - prior));

  std::vector<double> margin(rows, model.base_score);
  std::vector<double> grad(rows), hess(rows);
  std::vector<int> position(rows);
  std::vector<int> row_slot(rows);
  std::vector<GradPair> gh(rows);
  if (options.on_round) options.on_round(0, logistic_loss(margin, labels));

  for (std::size_t t = 0; t < config.n_trees; ++t) {
    for (std::size_t i = 0; i < rows; ++i) {
      const double p = sigmoid(margin[i]);
      grad[i] = p - labels[i];
      hess[i] = p * (1.0 - p);
      gh[i] = {grad[i], hess[i]};
    }
    Rng rng = Rng::derive(config.seed, t);
    std::fill(position.begin(), position.end(), -1);
    if (config.subsample_rows < 1.0) {
      for (std::size_t r : rng.choice_without_replacement(rows, fraction_count(config.subsample_rows, rows))) {
        position[r] = 0;
      }
    } else {
      std::fill(position.begin(), position.end(), 0);
    }
    std::vector<std::size_t> feats;
    if (config.subsample_features < 1.0) {
      feats = rng.choice_without_replacement(cols, fraction_count(config.subsample_features, cols));
      std::sort(feats.begin(), feats.end());
    } else {
      feats.resize(cols);
      std::iota(feats.begin(), feats.end(), std::size_t{0});
    }

    Tree tree;
    tree.nodes.push_back({});
    std::vector<double> node_g{0.0}, node_h{0.0};
    for (std::size_t i = 0; i < rows; ++i) {
      if (position[i] == 0) {
        node_g[0] += grad[i];
        node_h[0] += hess[i];
      }
    }
    std::vector<int> frontier{0};
    for (std::size_t depth = 0; !frontier.empty(); ++depth) {
      const std::size_t n_nodes = tree.nodes.size();
      // Frontier slot of every active row; -1 for rows outside the sample or
      // in nodes that are already final.
      std::vector<int> slot_of_node(n_nodes, -1);
      for (std::size_t k = 0; k < frontier.size(); ++k) {
        slot_of_node[static_cast<std::size_t>(frontier[k])] = static_cast<int>(k);
      }
      for (std::size_t i = 0; i < rows; ++i) {
        row_slot[i] = position[i] < 0 ? -1 : slot_of_node[static_cast<std::size_t>(position[i])];
      }

      std::vector<Candidate> best(frontier.size());
      if (depth < config.max_depth) {
        std::vector<std::vector<Candidate>> per_feature(feats.size());
        parallel_for(feats.size(), options.threads, [&](std::size_t fi) {
          const std::size_t f = feats[fi];
          const SortedColumn& col = columns[f];
          const std::size_t width = frontier.size();
          std::vector<Candidate> local(width);
          std::vector<Scan> scan(width);
          for (std::size_t i = 0; i < rows; ++i) {
            const std::uint32_t r = col.order[i];
            const int k = row_slot[r];
            if (k < 0) continue;
            Scan& s = scan[static_cast<std::size_t>(k)];
            const float v = col.values[i];
            if (s.seen && v != s.last) {
              const auto node = static_cast<std::size_t>(frontier[static_cast<std::size_t>(k)]);
              const double hr = node_h[node] - s.h;
              if (s.h >= config.min_child_weight && hr >= config.min_child_weight) {
                const double gain =
                    split_gain(s.g, s.h, node_g[node] - s.g, hr, config.lambda, config.gamma);
                Candidate& c = local[static_cast<std::size_t>(k)];
                if (gain > c.gain) {
                  c = {gain, static_cast<int>(f), (static_cast<double>(s.last) + static_cast<double>(v)) / 2.0};
                }
              }
            }
            s.g += gh[r].g;
            s.h += gh[r].h;
            s.last = v;
            s.seen = true;
          }
          per_feature[fi] = std::move(local);
        });
        for (std::size_t fi = 0; fi < feats.size(); ++fi) {
          for (std::size_t k = 0; k < frontier.size(); ++k) {
            if (per_feature[fi][k].gain > best[k].gain) best[k] = per_feature[fi][k];
          }
        }
      }

      std::vector<int> next;
      for (std::size_t k = 0; k < frontier.size(); ++k) {
        const auto id = static_cast<std::size_t>(frontier[k]);
        const bool split = best[k].feature >= 0;
        if (options.observer) {
          SplitRecord rec;
          rec.tree = t;
          rec.node = id;
          rec.depth = depth;
          for (std::size_t i = 0; i < rows; ++i) {
            if (position[i] == static_cast<int>(id)) rec.rows.push_back(i);
          }
          rec.features = feats;
          rec.split = split;
          rec.feature = best[k].feature;
          rec.threshold = best[k].threshold;
          rec.gain = best[k].gain;
          options.observer(rec, grad, hess);
        }
        if (!split) {
          tree.nodes[id].value = -node_g[id] / (node_h[id] + config.lambda) * config.learning_rate;
          continue;
        }
        const int left = static_cast<int>(tree.nodes.size());
        tree.nodes[id].feature = best[k].feature;
        tree.nodes[id].threshold = best[k].threshold;
        tree.nodes[id].left = left;
        tree.nodes[id].right = left + 1;
        tree.nodes.push_back({});
        tree.nodes.push_back({});
        node_g.push_back(0.0);
        node_g.push_back(0.0);
        node_h.push_back(0.0);
        node_h.push_back(0.0);
        next.push_back(left);
        next.push_back(left + 1);
      }
      for (std::size_t i = 0; i < rows; ++i) {
        const int pos = position[i];
        if (pos < 0) continue;
        const Node& n = tree.nodes[static_cast<std::size_t>(pos)];
        if (n.is_leaf() || static_cast<std::size_t>(pos) >= n_nodes) continue;
        const int child = features[i * cols + static_cast<std::size_t>(n.feature)] < n.threshold ? n.left : n.right;
        position[i] = child;
        node_g[static_cast<std::size_t>(child)] += grad[i];
        node_h[static_cast<std::size_t>(child)] += hess[i];
      }
      frontier = std::move(next);
    }
    for (std::size_t i = 0; i < rows; ++i) margin[i] += tree.predict(features.subspan(i * cols, cols));
    model.trees.push_back(std::move(tree));
    if (options.on_round) options.on_round(t + 1, logistic_loss(margin, labels));
  }
  return model;
}

Ensemble fit(const EmbeddingMatrix& features, const GbdtConfig& config, const FitOptions& options) {
  features.validate();
  const auto labels = features.labels();
  return fit(features.values, features.cols, labels, config, options);
}

std::vector<double> predict_proba(const Ensemble& model, std::span<const float> features, std::size_t cols) {
  if (cols != model.n_features) {
    throw ShapeError("model expects " + std::to_string(model.n_features) + " features, got " +
                     std::to_string(cols));
  }
  if (cols == 0 || features.size() % cols != 0) throw ShapeError("feature payload is not a whole number of rows");
  const std::size_t rows = features.size() / cols;
  std::vector<double> out(rows);
  for (std::size_t i = 0; i < rows; ++i) out[i] = sigmoid(model.margin(features.subspan(i * cols, cols)));
  return out;
}

std::vector<double> predict_proba(const Ensemble& model, const EmbeddingMatrix& features) {
  return predict_proba(model, features.values, features.cols);
}

json config_to_json(const GbdtConfig& c) {
  return json{{"n_trees", c.n_trees},
              {"max_depth", c.max_depth},
              {"learning_rate", c.learning_rate},
              {"lambda", c.lambda},
              {"gamma", c.gamma},
              {"min_child_weight", c.min_child_weight},
              {"subsample_rows", c.subsample_rows},
              {"subsample_features", c.subsample_features},
              {"seed", c.seed}};
}

GbdtConfig config_from_json(const json& j) {
  GbdtConfig c;
  c.n_trees = j.at("n_trees").get<std::size_t>();
  c.max_depth = j.at("max_depth").get<std::size_t>();
  c.learning_rate = j.at("learning_rate").get<double>();
  c.lambda = j.at("lambda").get<double>();
  c.gamma = j.at("gamma").get<double>();
  c.min_child_weight = j.at("min_child_weight").get<double>();
  c.subsample_rows = j.at("subsample_rows").get<double>();
  c.subsample_features = j.at("subsample_features").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

json to_json(const Ensemble& model) {
  json trees = json::array();
  for (const auto& tree : model.trees) {
    json nodes = json::array();
    for (const auto& n : tree.nodes) {
      if (n.is_leaf()) {
        nodes.push_back({{"leaf", n.value}});
      } else {
        nodes.push_back({{"feature", n.feature}, {"threshold", n.threshold}, {"left", n.left}, {"right", n.right}});
      }
    }
    trees.push_back({{"nodes", std::move(nodes)}});
  }
  return json{{"version", kModelVersion},
              {"config", config_to_json(model.config)},
              {"base_score", model.base_score},
              {"n_features", model.n_features},
              {"trees", std::move(trees)}};
}

Ensemble from_json(const json& doc) {
  try {
    const int version = doc.at("version").get<int>();
    if (version != kModelVersion) {
      throw VersionError("model version " + std::to_string(version) + " is not supported (expected " +
                         std::to_string(kModelVersion) + ")");
    }
    Ensemble m;
    m.config = config_from_json(doc.at("config"));
    m.base_score = doc.at("base_score").get<double>();
    m.n_features = doc.at("n_features").get<std::size_t>();
    for (const auto& t : doc.at("trees")) {
      Tree tree;
      const auto& nodes = t.at("nodes");
      for (const auto& n : nodes) {
        Node node;
        if (n.contains("leaf")) {
          node.value = n.at("leaf").get<double>();
          if (!std::isfinite(node.value)) throw FormatError("non-finite leaf weight");
        } else {
          node.feature = n.at("feature").get<int>();
          node.threshold = n.at("threshold").get<double>();
          node.left = n.at("left").get<int>();
          node.right = n.at("right").get<int>();
        }
        tree.nodes.push_back(node);
      }
      if (tree.nodes.empty()) throw FormatError("tree with no nodes");
      for (std::size_t i = 0; i < tree.nodes.size(); ++i) {
        const Node& n = tree.nodes[i];
        if (n.is_leaf()) continue;
        const auto valid = [&](int c) {
          return c > static_cast<int>(i) && c < static_cast<int>(tree.nodes.size());
        };
        if (!valid(n.left) || !valid(n.right)) {
          throw FormatError("node " + std::to_string(i) + " references a missing child");
        }
        if (static_cast<std::size_t>(n.feature) >= m.n_features) {
          throw FormatError("node " + std::to_string(i) + " splits on feature " +
                            std::to_string(n.feature) + " of " + std::to_string(m.n_features));
        }
      }
      m.trees.push_back(std::move(tree));
    }
    return m;
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed model file: ") + e.what());
  }
}

void save_model(const Ensemble& model, const fs::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write model " + path.string());
  out << to_json(model).dump(1) << '\n';
  if (!out) throw IoError("short write to " + path.string());
}

Ensemble load_model(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open model " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": not valid JSON (" + e.what() + ")");
  }
  return from_json(doc);
}

}  // namespace aurum::gbdt
