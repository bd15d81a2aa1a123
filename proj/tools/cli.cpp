#include "cli.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <sstream>

#include "CLI11.hpp"
#include "aurum/datacube.hpp"
#include "aurum/error.hpp"
#include "aurum/evalkit.hpp"
#include "aurum/features.hpp"
#include "aurum/gbdt.hpp"
#include "aurum/mae.hpp"
#include "aurum/quality.hpp"
#include "aurum/sampler.hpp"
#include "aurum/simd/kernels.hpp"
#include "json.hpp"

namespace aurum::cli {
namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

constexpr const char* kVersion = "1.0.0";

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Output directory of one invocation: run.json, log.txt and the products.
class Run {
 public:
  Run(fs::path dir, std::string subcommand, json config, std::ostream& err)
      : dir_(std::move(dir)), err_(err) {
    std::error_code ec;
    fs::create_directories(dir_, ec);
    if (ec) throw IoError("cannot create " + dir_.string() + ": " + ec.message());
    doc_ = json{{"tool", "aurum"}, {"version", kVersion}, {"subcommand", std::move(subcommand)},
                {"config", std::move(config)}, {"outputs", json::array()}, {"status", "running"}};
    flush();
    log_.open(dir_ / "log.txt", std::ios::trunc);
    if (!log_) throw IoError("cannot write " + (dir_ / "log.txt").string());
  }

  const fs::path& dir() const noexcept { return dir_; }
  fs::path path(const std::string& name) const { return dir_ / name; }

  void log(const std::string& line) {
    log_ << line << '\n';
    log_.flush();
    err_ << line << '\n';
  }

  void output(const std::string& name) { doc_["outputs"].push_back(name); }

  void finish(json summary = json::object()) {
    doc_["status"] = "ok";
    if (!summary.empty()) doc_["summary"] = std::move(summary);
    flush();
  }

 private:
  void flush() {
    std::ofstream out(dir_ / "run.json", std::ios::trunc);
    if (!out) throw IoError("cannot write " + (dir_ / "run.json").string());
    out << doc_.dump(2) << '\n';
  }

  fs::path dir_;
  std::ostream& err_;
  json doc_;
  std::ofstream log_;
};

std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// --- shared option bundles ----------------------------------------------------

struct GbdtFlags {
  gbdt::GbdtConfig cfg;
  void add(CLI::App* app) {
    app->add_option("--n-trees", cfg.n_trees, "Boosting rounds")->capture_default_str();
    app->add_option("--max-depth", cfg.max_depth, "Maximum tree depth")->capture_default_str();
    app->add_option("--learning-rate", cfg.learning_rate, "Shrinkage per tree")->capture_default_str();
    app->add_option("--lambda", cfg.lambda, "L2 penalty on leaf weights")->capture_default_str();
    app->add_option("--gamma", cfg.gamma, "Minimum gain to split")->capture_default_str();
    app->add_option("--min-child-weight", cfg.min_child_weight, "Minimum hessian per child")
        ->capture_default_str();
    app->add_option("--subsample-rows", cfg.subsample_rows, "Row fraction per tree")->capture_default_str();
    app->add_option("--subsample-features", cfg.subsample_features, "Feature fraction per tree")
        ->capture_default_str();
  }
};

/// MAE flags start unset so that a profile can supply the baseline.
struct MaeFlags {
  std::string profile = "default";
  std::map<std::string, CLI::Option*> opts;
  std::size_t embed_dim = 0, encoder_depth = 0, decoder_depth = 0, heads = 0, epochs = 0, batch_size = 0;
  double mlp_ratio = 0, mask_ratio = 0, learning_rate = 0;
  std::string loss_scope;
  bool shallow_decoder = false;

  void add(CLI::App* app) {
    app->add_option("--profile", profile, "Baseline configuration")
        ->check(CLI::IsMember({"default", "fixture"}))
        ->capture_default_str();
    opts["embed_dim"] = app->add_option("--embed-dim", embed_dim, "Embedding width");
    opts["encoder_depth"] = app->add_option("--encoder-depth", encoder_depth, "Encoder blocks");
    opts["decoder_depth"] = app->add_option("--decoder-depth", decoder_depth, "Decoder blocks");
    opts["heads"] = app->add_option("--heads", heads, "Attention heads");
    opts["mlp_ratio"] = app->add_option("--mlp-ratio", mlp_ratio, "MLP hidden width / embed width");
    opts["mask_ratio"] = app->add_option("--mask-ratio", mask_ratio, "Fraction of tokens hidden");
    opts["loss_scope"] = app->add_option("--loss-scope", loss_scope, "all_tokens or masked_only")
                             ->check(CLI::IsMember({"all_tokens", "masked_only"}));
    opts["epochs"] = app->add_option("--epochs", epochs, "Training epochs");
    opts["batch_size"] = app->add_option("--batch-size", batch_size, "Images per optimizer step");
    opts["learning_rate"] = app->add_option("--lr", learning_rate, "Adam learning rate");
    opts["shallow_decoder"] =
        app->add_flag("--shallow-decoder", shallow_decoder, "Allow decoder_depth < encoder_depth");
  }

  MaeConfig resolve(std::uint64_t seed) const {
    MaeConfig c = profile == "fixture" ? MaeConfig::fixture() : MaeConfig{};
    const auto set = [&](const char* key) { return opts.at(key)->count() > 0; };
    if (set("embed_dim")) c.embed_dim = embed_dim;
    if (set("encoder_depth")) c.encoder_depth = encoder_depth;
    if (set("decoder_depth")) c.decoder_depth = decoder_depth;
    if (set("heads")) c.heads = heads;
    if (set("mlp_ratio")) c.mlp_ratio = mlp_ratio;
    if (set("mask_ratio")) c.mask_ratio = mask_ratio;
    if (set("loss_scope")) c.loss_scope = parse_loss_scope(loss_scope);
    if (set("epochs")) c.epochs = epochs;
    if (set("batch_size")) c.batch_size = batch_size;
    if (set("learning_rate")) c.learning_rate = learning_rate;
    if (shallow_decoder) c.deep_decoder = false;
    c.seed = seed;
    c.validate();
    return c;
  }
};

json metrics_json(const evalkit::ClassMetrics& m) {
  return json{{"accuracy", m.accuracy},         {"precision", m.precision},
              {"recall", m.recall},             {"f1", m.f1},
              {"gold_precision", m.gold_precision}, {"gold_recall", m.gold_recall},
              {"gold_f1", m.gold_f1}};
}

BandStats manifest_stats(const DatasetManifest& manifest) {
  std::vector<SpectralCube> cubes;
  cubes.reserve(manifest.entries.size());
  for (const auto& e : manifest.entries) cubes.push_back(read_cube(e.path));
  return compute_band_stats(cubes);
}

// --- subcommands ----------------------------------------------------------------

struct Common {
  std::string out;
  std::uint64_t seed = 0;
  unsigned threads = 1;
};

void add_out(CLI::App* app, Common& c) { app->add_option("--out", c.out, "Run directory")->required(); }
void add_seed(CLI::App* app, Common& c) {
  app->add_option("--seed", c.seed, "Seed for every random choice")->capture_default_str();
}
void add_threads(CLI::App* app, Common& c) {
  app->add_option("--threads", c.threads, "Worker threads (0 = all cores)")->capture_default_str();
}

int cmd_synth(const Common& c, std::size_t gold, std::size_t non_gold, const std::string& difficulty,
              std::ostream& err) {
  const auto d = sampler::parse_difficulty(difficulty);
  Run run(c.out, "synth",
          json{{"out", c.out}, {"gold", gold}, {"non_gold", non_gold}, {"difficulty", difficulty},
               {"seed", c.seed}, {"threads", c.threads}},
          err);
  const auto t0 = std::chrono::steady_clock::now();
  const DatasetManifest m = sampler::synth_corpus(gold, non_gold, d, c.seed, run.dir(), c.threads);
  run.output("manifest.csv");
  for (const auto& e : m.entries) run.output(e.path.filename().string());
  run.log("wrote " + std::to_string(m.entries.size()) + " cubes in " + fmt("%.1f s", seconds_since(t0)));
  run.finish({{"images", m.entries.size()}});
  return kExitOk;
}

struct PlanFlags {
  std::size_t count = 100;
  std::string start = "2017-01-01", end = "2023-12-31";
  std::string weights = "forest=1,cropland=1,grassland=1,shrubland=2,bare=3,wetland=3";
  std::uint64_t class_map_seed = 0;
  double max_cloud = sampler::kDefaultMaxCloudFraction;
  std::size_t max_draws = 200;
  bool filter = false;
};

sampler::LulcWeights parse_weights(const std::string& text) {
  sampler::LulcWeights w;
  std::stringstream ss(text);
  for (std::string item; std::getline(ss, item, ',');) {
    const auto eq = item.find('=');
    if (eq == std::string::npos || eq == 0) throw UsageError("--weights entries must look like class=weight");
    try {
      w[item.substr(0, eq)] = std::stod(item.substr(eq + 1));
    } catch (const std::exception&) {
      throw UsageError("--weights: bad weight in '" + item + "'");
    }
  }
  if (w.empty()) throw UsageError("--weights is empty");
  return w;
}

int cmd_plan(const Common& c, const PlanFlags& f, std::ostream& err) {
  sampler::PlanConfig cfg;
  cfg.count = f.count;
  cfg.start_date = f.start;
  cfg.end_date = f.end;
  cfg.weights = parse_weights(f.weights);
  cfg.seed = c.seed;
  cfg.max_cloud_fraction = f.max_cloud;
  cfg.max_draws_per_request = f.max_draws;
  cfg.validate();
  json weights = json::object();
  for (const auto& [k, v] : cfg.weights) weights[k] = v;
  Run run(c.out, "plan",
          json{{"out", c.out}, {"count", f.count}, {"start", f.start}, {"end", f.end}, {"weights", weights},
               {"class_map_seed", f.class_map_seed}, {"max_cloud_fraction", f.max_cloud},
               {"max_draws_per_request", f.max_draws}, {"filter_clouds", f.filter}, {"seed", c.seed}},
          err);
  std::vector<std::string> classes;
  for (const auto& [k, v] : cfg.weights) classes.push_back(k);
  auto requests = sampler::plan(cfg, sampler::toy_class_map(classes, f.class_map_seed));
  run.log("planned " + std::to_string(requests.size()) + " acquisitions, class distance " +
          fmt("%.4f", sampler::class_distance(requests, cfg.weights)));
  if (f.filter) {
    requests = sampler::filter_clouds(requests, sampler::toy_cloud_oracle(f.class_map_seed));
    run.log("kept " + std::to_string(requests.size()) + " below the cloud threshold");
  }
  sampler::write_plan(requests, run.path("plan.csv"));
  run.output("plan.csv");
  run.finish({{"requests", requests.size()}});
  return kExitOk;
}

int cmd_ingest_check(const Common& c, const std::string& manifest_path, std::ostream& err) {
  Run run(c.out, "ingest-check", json{{"manifest", manifest_path}, {"out", c.out}}, err);
  const DatasetManifest m = read_manifest(manifest_path);
  std::ofstream out(run.path("ingest.csv"), std::ios::trunc);
  out << "image_id,label,width,height,bands,tokens,status,message\n";
  std::size_t bad = 0;
  std::vector<SpectralCube> cubes;
  for (const auto& e : m.entries) {
    out << e.image_id << ',' << label_name(e.label) << ',';
    try {
      SpectralCube cube = read_cube(e.path);
      const TokenGrid grid = tokenize(cube);
      out << cube.width() << ',' << cube.height() << ',' << cube.bands() << ',' << grid.size() << ",ok,\n";
      cubes.push_back(std::move(cube));
    } catch (const Error& ex) {
      ++bad;
      std::string msg = ex.what();
      for (char& ch : msg) {
        if (ch == ',' || ch == '\n') ch = ';';
      }
      out << ",,,,failed," << msg << '\n';
      run.log(e.image_id + ": " + ex.what());
    }
  }
  out.close();
  run.output("ingest.csv");
  if (!cubes.empty() && bad == 0) {
    const BandStats s = compute_band_stats(cubes);
    std::ofstream bs(run.path("band_stats.csv"), std::ios::trunc);
    bs << "band,min,max\n";
    for (std::size_t b = 0; b < s.min.size(); ++b) {
      bs << cubes.front().band_names()[b] << ',' << fmt("%.9g", s.min[b]) << ',' << fmt("%.9g", s.max[b]) << '\n';
    }
    run.output("band_stats.csv");
  }
  run.log(std::to_string(m.entries.size() - bad) + " of " + std::to_string(m.entries.size()) + " cubes ok");
  run.finish({{"images", m.entries.size()}, {"failed", bad}});
  return bad == 0 ? kExitOk : kExitData;
}

int cmd_pretrain(const Common& c, const std::string& manifest_path, const MaeFlags& flags, std::ostream& err) {
  const MaeConfig cfg = flags.resolve(c.seed);
  Run run(c.out, "pretrain",
          json{{"manifest", manifest_path}, {"out", c.out}, {"profile", flags.profile},
               {"mae", mae_config_to_json(cfg)}, {"threads", c.threads}},
          err);
  const DatasetManifest m = read_manifest(manifest_path);
  std::ofstream curve(run.path("epochs.csv"), std::ios::trunc);
  curve << "epoch,mean_loss\n";
  TrainOptions opts;
  opts.threads = c.threads;
  opts.on_epoch = [&](const EpochRecord& r) {
    curve << r.epoch << ',' << fmt("%.9g", r.mean_loss) << '\n';
    curve.flush();
    run.log("epoch " + std::to_string(r.epoch) + " loss " + fmt("%.6f", r.mean_loss) + " (" +
            fmt("%.1f s", r.wall_seconds) + ")");
  };
  const MaeCheckpoint ckpt = pretrain(m, cfg, opts);
  curve.close();
  save_checkpoint(ckpt, run.path("checkpoint.mae"));
  run.output("epochs.csv");
  run.output("checkpoint.mae");
  char fp[24];
  std::snprintf(fp, sizeof fp, "%016llx", static_cast<unsigned long long>(ckpt.fingerprint()));
  run.finish({{"fingerprint", fp}});
  return kExitOk;
}

int cmd_recon_report(const Common& c, const std::string& manifest_path, const std::string& ckpt_path,
                     std::ostream& err) {
  Run run(c.out, "recon-report",
          json{{"manifest", manifest_path}, {"checkpoint", ckpt_path}, {"out", c.out}, {"seed", c.seed},
               {"threads", c.threads}},
          err);
  const DatasetManifest m = read_manifest(manifest_path);
  const MaeCheckpoint ckpt = load_checkpoint(ckpt_path);
  const quality::ReconReport rep = quality::report(m, ckpt, c.seed, c.threads);
  rep.write_csv(run.path("recon.csv"));
  run.output("recon.csv");
  run.log(rep.aggregate_row());
  run.finish({{"mse", rep.mse.mean}, {"psnr", rep.psnr.mean}, {"sam", rep.sam.mean}, {"ergas", rep.ergas.mean},
              {"ssim", rep.ssim.mean}});
  return kExitOk;
}

int cmd_extract(const Common& c, const std::string& manifest_path, const std::string& ckpt_path, bool raw,
                std::ostream& err) {
  if (!raw && ckpt_path.empty()) throw UsageError("extract needs --checkpoint or --raw");
  Run run(c.out, "extract",
          json{{"manifest", manifest_path}, {"mode", raw ? "raw" : "embeddings"}, {"checkpoint", ckpt_path},
               {"out", c.out}, {"threads", c.threads}},
          err);
  const DatasetManifest m = read_manifest(manifest_path);
  EmbeddingMatrix features;
  if (raw) {
    const BandStats stats = manifest_stats(m);
    features = extract_features(m, FeatureMode::Raw, nullptr, &stats, c.threads);
  } else {
    const MaeCheckpoint ckpt = load_checkpoint(ckpt_path);
    features = extract_features(m, FeatureMode::Embeddings, &ckpt, nullptr, c.threads);
  }
  write_features(features, run.path("features.emb"));
  run.output("features.emb");
  run.log("extracted " + std::to_string(features.rows) + " x " + std::to_string(features.cols) + " features");
  run.finish({{"rows", features.rows}, {"cols", features.cols}});
  return kExitOk;
}

int cmd_train_clf(const Common& c, const std::string& features_path, GbdtFlags flags, std::ostream& err) {
  flags.cfg.seed = c.seed;
  flags.cfg.validate();
  Run run(c.out, "train-clf",
          json{{"features", features_path}, {"out", c.out}, {"gbdt", gbdt::config_to_json(flags.cfg)},
               {"threads", c.threads}},
          err);
  const EmbeddingMatrix features = read_features(features_path);
  std::ofstream curve(run.path("train_loss.csv"), std::ios::trunc);
  curve << "round,logistic_loss\n";
  gbdt::FitOptions opts;
  opts.threads = c.threads;
  opts.on_round = [&](std::size_t round, double loss) { curve << round << ',' << fmt("%.9g", loss) << '\n'; };
  const gbdt::Ensemble model = gbdt::fit(features, flags.cfg, opts);
  curve.close();
  gbdt::save_model(model, run.path("model.json"));
  run.output("train_loss.csv");
  run.output("model.json");
  run.log("fitted " + std::to_string(model.trees.size()) + " trees on " + std::to_string(features.rows) + " rows");
  run.finish({{"trees", model.trees.size()}, {"rows", features.rows}});
  return kExitOk;
}

int cmd_evaluate(const Common& c, const std::string& model_path, const std::string& features_path,
                 std::ostream& err) {
  Run run(c.out, "evaluate", json{{"model", model_path}, {"features", features_path}, {"out", c.out}}, err);
  const gbdt::Ensemble model = gbdt::load_model(model_path);
  const EmbeddingMatrix features = read_features(features_path);
  const std::vector<double> probs = gbdt::predict_proba(model, features);
  const std::vector<int> truth = features.labels();

  std::ofstream pred(run.path("predictions.csv"), std::ios::trunc);
  pred << "image_id,patch,probability\n";
  std::ofstream images(run.path("images.csv"), std::ios::trunc);
  images << "image_id,label,predicted,gold_patches,patches,mean_probability\n";
  std::vector<int> image_truth, image_calls;
  for (const auto& img : features.images) {
    std::size_t gold = 0;
    double sum = 0.0;
    for (std::size_t i = 0; i < img.row_count; ++i) {
      const double p = probs[img.first_row + i];
      pred << img.image_id << ',' << i << ',' << fmt("%.17g", p) << '\n';
      gold += p > evalkit::kPatchThreshold;
      sum += p;
    }
    const Label vote = evalkit::majority_vote(std::span<const double>(probs.data() + img.first_row, img.row_count));
    image_truth.push_back(img.label == Label::Gold);
    image_calls.push_back(vote == Label::Gold);
    images << img.image_id << ',' << label_name(img.label) << ',' << label_name(vote) << ',' << gold << ','
           << img.row_count << ',' << fmt("%.9f", sum / static_cast<double>(img.row_count)) << '\n';
  }
  std::vector<int> calls(probs.size());
  for (std::size_t i = 0; i < probs.size(); ++i) calls[i] = probs[i] > evalkit::kPatchThreshold;
  const auto patch = evalkit::patch_metrics(truth, calls);
  const auto image = evalkit::patch_metrics(image_truth, image_calls);
  std::optional<double> auc;
  try {
    auc = evalkit::roc_auc(truth, probs).auc;
  } catch (const DegenerateInputError& e) {
    run.log(std::string("AUC unavailable: ") + e.what());
  }
  std::ofstream metrics(run.path("metrics.csv"), std::ios::trunc);
  metrics << "level,accuracy,precision,recall,f1,gold_precision,gold_recall,gold_f1,roc_auc\n";
  const auto row = [&](const char* level, const evalkit::ClassMetrics& m, const std::string& auc_text) {
    metrics << level << ',' << fmt("%.6f", m.accuracy) << ',' << fmt("%.6f", m.precision) << ','
            << fmt("%.6f", m.recall) << ',' << fmt("%.6f", m.f1) << ',' << fmt("%.6f", m.gold_precision) << ','
            << fmt("%.6f", m.gold_recall) << ',' << fmt("%.6f", m.gold_f1) << ',' << auc_text << '\n';
  };
  row("patch", patch, auc ? fmt("%.6f", *auc) : "n/a");
  row("image", image, "n/a");
  for (const char* name : {"predictions.csv", "images.csv", "metrics.csv"}) run.output(name);
  json summary{{"patch", metrics_json(patch)}, {"image", metrics_json(image)}};
  summary["patch_auc"] = auc ? json(*auc) : json(nullptr);
  run.finish(summary);
  return kExitOk;
}

struct ExperimentFlags {
  std::string manifest;
  std::string mode = "both";
  std::string checkpoint;
  std::size_t folds = 5;
  std::string fold_mode = "kfold";
  std::string experiment_id = "experiment";
  GbdtFlags gbdt;
};

int cmd_run_experiment(const Common& c, ExperimentFlags f, std::ostream& err) {
  const bool want_raw = f.mode == "raw" || f.mode == "both";
  const bool want_emb = f.mode == "embeddings" || f.mode == "both";
  if (want_emb && f.checkpoint.empty()) throw UsageError("--mode " + f.mode + " needs --checkpoint");
  if (!want_emb && !f.checkpoint.empty()) throw UsageError("--checkpoint conflicts with --mode raw");
  f.gbdt.cfg.seed = c.seed;
  f.gbdt.cfg.validate();
  const auto fold_mode = evalkit::parse_fold_mode(f.fold_mode);
  const fs::path dir = evalkit::run_directory(c.out, f.experiment_id, c.seed);
  Run run(dir, "run-experiment",
          json{{"manifest", f.manifest}, {"mode", f.mode}, {"checkpoint", f.checkpoint}, {"folds", f.folds},
               {"fold_mode", f.fold_mode}, {"experiment_id", f.experiment_id}, {"out", c.out},
               {"run_dir", dir.string()}, {"seed", c.seed}, {"gbdt", gbdt::config_to_json(f.gbdt.cfg)},
               {"threads", c.threads}},
          err);
  const DatasetManifest m = read_manifest(f.manifest);
  const evalkit::FoldPlan plan = evalkit::make_folds(m, f.folds, c.seed, fold_mode);
  evalkit::write_fold_plan(plan, run.path("fold_plan.csv"));
  run.output("fold_plan.csv");

  evalkit::ExperimentOptions opts;
  opts.gbdt = f.gbdt.cfg;
  opts.threads = c.threads;
  opts.log = [&](const std::string& line) { run.log(line); };
  std::vector<evalkit::EvalReport> reports;
  std::optional<MaeCheckpoint> ckpt;
  if (want_emb) ckpt = load_checkpoint(f.checkpoint);
  const auto t0 = std::chrono::steady_clock::now();
  if (want_raw) reports.push_back(evalkit::run_experiment(m, FeatureMode::Raw, nullptr, plan, opts));
  if (want_emb) reports.push_back(evalkit::run_experiment(m, FeatureMode::Embeddings, &*ckpt, plan, opts));
  evalkit::write_reports(reports, run.dir());
  run.output("report.csv");
  run.output("folds.csv");
  json summary = json::object();
  for (const auto& r : reports) {
    run.output(std::string("roc_") + feature_mode_name(r.mode) + ".csv");
    const auto p = r.patch_summary();
    const auto i = r.image_summary();
    run.log(r.approach + ": patch acc " + evalkit::format_mean_std(p.accuracy) + ", auc " +
            evalkit::format_mean_std(p.auc) + ", image acc " + evalkit::format_mean_std(i.accuracy));
    summary[feature_mode_name(r.mode)] = json{{"patch_accuracy", p.accuracy.mean},
                                              {"patch_auc", p.auc_folds ? json(p.auc.mean) : json(nullptr)},
                                              {"image_accuracy", i.accuracy.mean}};
  }
  run.log("experiment finished in " + fmt("%.1f s", seconds_since(t0)));
  run.finish(summary);
  return kExitOk;
}

int cmd_render_rgb(const Common& c, const std::string& cube_path, std::size_t r, std::size_t g, std::size_t b,
                   std::ostream& err) {
  Run run(c.out, "render-rgb",
          json{{"cube", cube_path}, {"out", c.out}, {"red", r}, {"green", g}, {"blue", b}}, err);
  const SpectralCube cube = read_cube(cube_path);
  render_rgb(cube, r, g, b, run.path("rgb.ppm"));
  run.output("rgb.ppm");
  run.finish();
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Spectral cube pretraining and gold-prospectivity evaluation toolkit", "aurum"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);
  app.get_formatter()->column_width(34);

  Common common;
  std::function<int()> action;

  // synth
  std::size_t gold = 33, non_gold = 30;
  std::string difficulty = "entangled";
  auto* synth = app.add_subcommand("synth", "Write a synthetic labelled cube corpus");
  add_out(synth, common);
  add_seed(synth, common);
  add_threads(synth, common);
  synth->add_option("--gold", gold, "Gold images")->capture_default_str();
  synth->add_option("--non-gold", non_gold, "Non-gold images")->capture_default_str();
  synth->add_option("--difficulty", difficulty, "separable or entangled")
      ->check(CLI::IsMember({"separable", "entangled"}))
      ->capture_default_str();
  synth->callback([&] { action = [&] { return cmd_synth(common, gold, non_gold, difficulty, err); }; });

  // plan
  PlanFlags pf;
  auto* plan = app.add_subcommand("plan", "Plan acquisitions over dates, locations and land cover");
  add_out(plan, common);
  add_seed(plan, common);
  plan->add_option("--count", pf.count, "Requests to plan")->capture_default_str();
  plan->add_option("--start", pf.start, "First day of the window (YYYY-MM-DD)")->capture_default_str();
  plan->add_option("--end", pf.end, "Last day of the window (YYYY-MM-DD)")->capture_default_str();
  plan->add_option("--weights", pf.weights, "Land-cover weights, class=weight,...")->capture_default_str();
  plan->add_option("--class-map-seed", pf.class_map_seed, "Seed of the stand-in land-cover map")
      ->capture_default_str();
  plan->add_option("--max-cloud", pf.max_cloud, "Cloud fraction threshold (strict)")->capture_default_str();
  plan->add_option("--max-draws-per-request", pf.max_draws, "Location draw budget per request")
      ->capture_default_str();
  plan->add_flag("--filter-clouds", pf.filter, "Drop requests the stand-in cloud catalog rejects");
  plan->callback([&] { action = [&] { return cmd_plan(common, pf, err); }; });

  // ingest-check
  std::string manifest;
  auto* ingest = app.add_subcommand("ingest-check", "Validate every cube a manifest references");
  ingest->add_option("--manifest", manifest, "Manifest CSV")->required();
  add_out(ingest, common);
  ingest->callback([&] { action = [&] { return cmd_ingest_check(common, manifest, err); }; });

  // pretrain
  MaeFlags mae;
  auto* pre = app.add_subcommand("pretrain", "Pretrain the masked autoencoder");
  pre->add_option("--manifest", manifest, "Manifest CSV")->required();
  add_out(pre, common);
  add_seed(pre, common);
  add_threads(pre, common);
  mae.add(pre);
  pre->callback([&] { action = [&] { return cmd_pretrain(common, manifest, mae, err); }; });

  // recon-report
  std::string checkpoint;
  auto* recon = app.add_subcommand("recon-report", "Score masked reconstructions (MSE, PSNR, SAM, ERGAS, SSIM)");
  recon->add_option("--manifest", manifest, "Manifest CSV")->required();
  recon->add_option("--checkpoint", checkpoint, "MAE checkpoint")->required();
  add_out(recon, common);
  add_seed(recon, common);
  add_threads(recon, common);
  recon->callback([&] { action = [&] { return cmd_recon_report(common, manifest, checkpoint, err); }; });

  // extract
  bool raw = false;
  auto* extract = app.add_subcommand("extract", "Per-patch features: encoder embeddings or raw tokens");
  extract->add_option("--manifest", manifest, "Manifest CSV")->required();
  auto* ck = extract->add_option("--checkpoint", checkpoint, "MAE checkpoint (embeddings)");
  auto* rw = extract->add_flag("--raw", raw, "Flattened normalized tokens instead of embeddings");
  rw->excludes(ck);
  add_out(extract, common);
  add_threads(extract, common);
  extract->callback([&] { action = [&] { return cmd_extract(common, manifest, checkpoint, raw, err); }; });

  // train-clf
  std::string features;
  GbdtFlags gf;
  auto* train = app.add_subcommand("train-clf", "Fit the boosted-tree patch classifier");
  train->add_option("--features", features, "Feature file from extract")->required();
  add_out(train, common);
  add_seed(train, common);
  add_threads(train, common);
  gf.add(train);
  train->callback([&] { action = [&] { return cmd_train_clf(common, features, gf, err); }; });

  // evaluate
  std::string model;
  auto* eval = app.add_subcommand("evaluate", "Score a feature file with a trained classifier");
  eval->add_option("--model", model, "Model JSON from train-clf")->required();
  eval->add_option("--features", features, "Feature file from extract")->required();
  add_out(eval, common);
  eval->callback([&] { action = [&] { return cmd_evaluate(common, model, features, err); }; });

  // run-experiment
  ExperimentFlags ef;
  auto* exp = app.add_subcommand("run-experiment", "Cross-validated raw vs embedding comparison");
  exp->add_option("--manifest", ef.manifest, "Manifest CSV")->required();
  exp->add_option("--mode", ef.mode, "raw, embeddings or both")
      ->check(CLI::IsMember({"raw", "embeddings", "both"}))
      ->capture_default_str();
  exp->add_option("--checkpoint", ef.checkpoint, "MAE checkpoint");
  exp->add_option("--folds", ef.folds, "Folds (kfold) or repeats (repeated_holdout)")->capture_default_str();
  exp->add_option("--fold-mode", ef.fold_mode, "kfold or repeated_holdout")
      ->check(CLI::IsMember({"kfold", "repeated_holdout"}))
      ->capture_default_str();
  exp->add_option("--experiment-id", ef.experiment_id, "Run directory prefix")->capture_default_str();
  add_out(exp, common);
  add_seed(exp, common);
  add_threads(exp, common);
  ef.gbdt.add(exp);
  exp->callback([&] { action = [&] { return cmd_run_experiment(common, ef, err); }; });

  // render-rgb
  std::string cube;
  std::size_t red = 3, green = 2, blue = 1;
  auto* rgb = app.add_subcommand("render-rgb", "Write a stretched RGB preview (PPM)");
  rgb->add_option("--cube", cube, "Cube file")->required();
  rgb->add_option("--red", red, "Band index for red")->capture_default_str();
  rgb->add_option("--green", green, "Band index for green")->capture_default_str();
  rgb->add_option("--blue", blue, "Band index for blue")->capture_default_str();
  add_out(rgb, common);
  rgb->callback([&] { action = [&] { return cmd_render_rgb(common, cube, red, green, blue, err); }; });

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }
  try {
    return action();
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const ParameterError& e) {
    err << e.what() << '\n';
    return kExitUsage;
  } catch (const Error& e) {
    err << e.what() << '\n';
    return kExitData;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitData;
  }
}

}  // namespace aurum::cli
