#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "aurum/datacube.hpp"
#include "aurum/mae.hpp"

namespace aurum::quality {

inline constexpr double kPsnrCapDb = 99.0;
inline constexpr std::size_t kSsimWindow = 8;
inline constexpr double kSsimK1 = 0.01;
inline constexpr double kSsimK2 = 0.03;

/// Mean squared difference over all W*H*B values.
double mse(const SpectralCube& x, const SpectralCube& y);

/// 10 log10(peak^2 / mse); kPsnrCapDb when the cubes are identical.
double psnr(const SpectralCube& x, const SpectralCube& y, double peak = 1.0);

struct SamResult {
  double radians = 0.0;
  std::size_t pixels_used = 0;
  /// Pixels where either spectrum has zero norm.
  std::size_t pixels_skipped = 0;
};
/// Mean per-pixel spectral angle. Throws DegenerateInputError if every pixel
/// is skipped.
SamResult sam(const SpectralCube& x, const SpectralCube& y);

struct ErgasResult {
  double value = 0.0;
  std::size_t bands_used = 0;
  /// Bands whose reference mean is zero.
  std::size_t bands_skipped = 0;
};
/// 100 * ratio * sqrt(mean_b (RMSE_b / mean_b(x))^2), x the reference.
ErgasResult ergas(const SpectralCube& x, const SpectralCube& y, double scale_ratio = 1.0);

/// Mean over bands of the mean 8x8 uniform-window SSIM (stride 1, population
/// moments, L = 1).
double ssim(const SpectralCube& x, const SpectralCube& y);

struct ImageQuality {
  std::string image_id;
  double mse = 0.0;
  double psnr = 0.0;
  double sam = 0.0;
  double ergas = 0.0;
  double ssim = 0.0;
};

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;
};

/// Population mean and standard deviation (a single sample has std 0).
MeanStd mean_std(const std::vector<double>& values);

struct ReconReport {
  std::vector<ImageQuality> images;
  MeanStd mse, psnr, sam, ergas, ssim;

  /// "AGG,<mean> ± <std>,..." in the per-image column order.
  std::string aggregate_row() const;
  void write_csv(const std::filesystem::path& path) const;
};

ReconReport summarize(std::vector<ImageQuality> images);

/// Produces a reconstruction of `target` given which tokens were hidden.
using Reconstructor = std::function<TokenGrid(const TokenGrid& target, const MaskPlan& mask)>;

/// Reconstructor backed by a frozen checkpoint: encode visible, decode all.
Reconstructor mae_reconstructor(const MaeCheckpoint& checkpoint);

/// For each image: normalize, tokenize, mask (per-image stream of
/// `mask_seed`), reconstruct, detokenize and score against the normalized
/// original.
ReconReport report(const DatasetManifest& manifest, const BandStats& stats,
                   const Reconstructor& reconstruct, double mask_ratio, std::uint64_t mask_seed,
                   unsigned threads = 1);
ReconReport report(const DatasetManifest& manifest, const MaeCheckpoint& checkpoint,
                   std::uint64_t mask_seed, unsigned threads = 1);

}  // namespace aurum::quality
