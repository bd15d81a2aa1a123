#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>

#include "aurum/error.hpp"
#include "aurum/parallel.hpp"
#include "aurum/rng.hpp"
#include "aurum/sampler.hpp"

namespace aurum::sampler {
namespace fs = std::filesystem;

namespace {

constexpr std::size_t kPixels = kSynthSide * kSynthSide;

// Typical surface reflectance per band, B01..B12.
constexpr std::array<double, kSynthBands> kBandMean = {0.12, 0.10, 0.11, 0.13, 0.17, 0.23,
                                                       0.26, 0.28, 0.29, 0.30, 0.25, 0.19};
constexpr double kRelativeSpread = 0.2;

// Separable mode: gold mean shift in units of the band spread.
constexpr std::array<double, kSynthBands> kGoldShift = {0.0, 0.2, 0.4, 0.6, 0.4, 0.2,
                                                        0.0, -0.2, -0.4, -0.6, 0.8, 0.8};

// Entangled mode: latent loading signs per class. The latent field is
// symmetric, so each band has the same marginal in both classes; what differs
// is whether neighbouring bands move together or against each other.
constexpr std::array<double, kSynthBands> kGoldSigns = {1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1};
constexpr std::array<double, kSynthBands> kNonGoldSigns = {1, -1, 1, -1, 1, -1, 1, -1, 1, -1, 1, -1};

constexpr double kLatentWeight = 1.0;
constexpr double kNuisanceWeight = 0.3;
// Pixel noise dominates a single pixel; averaging the 64 pixels of a patch
// brings the latent back above it.
constexpr double kPixelNoise = 6.0;
// Standard deviation of the per-pixel mix.
const double kMixScale = std::sqrt(kLatentWeight * kLatentWeight + kNuisanceWeight * kNuisanceWeight +
                                   kPixelNoise * kPixelNoise);
constexpr std::size_t kLatentSpacing = 16;

/// Zero-mean, unit-variance field interpolated bilinearly from a coarse
/// Gaussian lattice with a random phase.
std::vector<double> smooth_field(Rng& rng) {
  const std::size_t nodes = kSynthSide / kLatentSpacing + 3;
  std::vector<double> lattice(nodes * nodes);
  for (auto& v : lattice) v = rng.normal();
  const double off_r = rng.uniform(0.0, static_cast<double>(kLatentSpacing));
  const double off_c = rng.uniform(0.0, static_cast<double>(kLatentSpacing));
  std::vector<double> field(kPixels);
  for (std::size_t r = 0; r < kSynthSide; ++r) {
    const double fr = (static_cast<double>(r) + off_r) / kLatentSpacing;
    const auto r0 = static_cast<std::size_t>(fr);
    const double tr = fr - static_cast<double>(r0);
    for (std::size_t c = 0; c < kSynthSide; ++c) {
      const double fc = (static_cast<double>(c) + off_c) / kLatentSpacing;
      const auto c0 = static_cast<std::size_t>(fc);
      const double tc = fc - static_cast<double>(c0);
      const auto at = [&](std::size_t i, std::size_t j) { return lattice[i * nodes + j]; };
      field[r * kSynthSide + c] = (1 - tr) * ((1 - tc) * at(r0, c0) + tc * at(r0, c0 + 1)) +
                                  tr * ((1 - tc) * at(r0 + 1, c0) + tc * at(r0 + 1, c0 + 1));
    }
  }
  double mean = 0.0;
  for (double v : field) mean += v;
  mean /= static_cast<double>(kPixels);
  double var = 0.0;
  for (double v : field) var += (v - mean) * (v - mean);
  const double sd = std::sqrt(var / static_cast<double>(kPixels));
  for (double& v : field) v = (v - mean) / sd;
  return field;
}

/// Per-band brightness offsets for one image, independent of its class.
std::array<double, kSynthBands> nuisance(Rng& rng) {
  std::array<double, kSynthBands> out{};
  for (auto& v : out) v = rng.normal();
  return out;
}

}  // namespace

SpectralCube synth_cube(Label label, Difficulty difficulty, std::uint64_t seed, std::size_t index) {
  Rng rng = Rng::derive(seed, 0x5EED0000 + index);
  const std::vector<double> field = smooth_field(rng);
  const auto offsets = nuisance(rng);
  const bool gold = label == Label::Gold;

  std::vector<float> data(kSynthBands * kPixels);
  for (std::size_t b = 0; b < kSynthBands; ++b) {
    const double spread = kRelativeSpread * kBandMean[b];
    const double unit = spread / kMixScale;
    double loading = 0.0, shift = 0.0;
    if (difficulty == Difficulty::Entangled) {
      loading = kLatentWeight * (gold ? kGoldSigns[b] : kNonGoldSigns[b]);
    } else {
      loading = kLatentWeight;
      shift = gold ? kGoldShift[b] : 0.0;
    }
    float* out = data.data() + b * kPixels;
    for (std::size_t p = 0; p < kPixels; ++p) {
      const double v = loading * field[p] + kNuisanceWeight * offsets[b] + kPixelNoise * rng.normal();
      out[p] = static_cast<float>(std::max(0.0, kBandMean[b] + unit * v + spread * shift));
    }
  }
  char note[96];
  std::snprintf(note, sizeof note, "synthetic %s reflectance, seed %llu", difficulty_name(difficulty),
                static_cast<unsigned long long>(seed));
  return SpectralCube(kSynthSide, kSynthSide, default_band_names(kSynthBands), std::move(data), note);
}

DatasetManifest synth_corpus(std::size_t n_gold, std::size_t n_non_gold, Difficulty difficulty,
                             std::uint64_t seed, const fs::path& out_dir, unsigned threads) {
  if (n_gold < 1 || n_non_gold < 1) throw ParameterError("synthetic corpus needs at least one image per class");
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create " + out_dir.string() + ": " + ec.message());

  const std::size_t n = n_gold + n_non_gold;
  DatasetManifest manifest;
  Rng meta = Rng::derive(seed, 0x3E7A);
  const long long first = day_number("2017-01-01");
  const long long span = day_number("2023-12-31") - first + 1;
  for (std::size_t i = 0; i < n; ++i) {
    ManifestEntry e;
    char id[32];
    std::snprintf(id, sizeof id, "img_%03zu", i);
    e.image_id = id;
    e.path = out_dir / (e.image_id + ".msc");
    e.label = i < n_gold ? Label::Gold : Label::NonGold;
    e.latitude = std::round(meta.uniform(-60.0, 70.0) * 1e4) / 1e4;
    e.longitude = std::round(meta.uniform(-180.0, 180.0) * 1e4) / 1e4;
    e.date = iso_day(first + static_cast<long long>(meta.below(static_cast<std::uint64_t>(span))));
    manifest.entries.push_back(std::move(e));
  }
  parallel_for(n, threads, [&](std::size_t i) {
    const SpectralCube cube = synth_cube(manifest.entries[i].label, difficulty, seed, i);
    write_cube(cube, manifest.entries[i].path);
  });
  write_manifest(manifest, out_dir / "manifest.csv");
  return manifest;
}

}  // namespace aurum::sampler
