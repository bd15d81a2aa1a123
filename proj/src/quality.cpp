#include "aurum/quality.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>

#include "aurum/error.hpp"
#include "aurum/parallel.hpp"
#include "aurum/simd/kernels.hpp"

namespace aurum::quality {

namespace {

void require_same_shape(const SpectralCube& x, const SpectralCube& y, const char* metric) {
  if (x.width() != y.width() || x.height() != y.height() || x.bands() != y.bands()) {
    throw ShapeError(std::string(metric) + ": cube shapes " + std::to_string(x.width()) + "x" +
                     std::to_string(x.height()) + "x" + std::to_string(x.bands()) + " and " +
                     std::to_string(y.width()) + "x" + std::to_string(y.height()) + "x" +
                     std::to_string(y.bands()) + " differ");
  }
}

// Summed-area table with a zero first row and column.
std::vector<double> integral(std::size_t w, std::size_t h, auto&& value) {
  std::vector<double> t((w + 1) * (h + 1), 0.0);
  for (std::size_t r = 0; r < h; ++r) {
    double row = 0.0;
    for (std::size_t c = 0; c < w; ++c) {
      row += value(r * w + c);
      t[(r + 1) * (w + 1) + c + 1] = t[r * (w + 1) + c + 1] + row;
    }
  }
  return t;
}

double box(const std::vector<double>& t, std::size_t w, std::size_t r, std::size_t c, std::size_t k) {
  const std::size_t stride = w + 1;
  return t[(r + k) * stride + c + k] - t[r * stride + c + k] - t[(r + k) * stride + c] + t[r * stride + c];
}

}  // namespace

double mse(const SpectralCube& x, const SpectralCube& y) {
  require_same_shape(x, y, "mse");
  const double ss = simd::active().sum_sq_diff_f32(x.data().data(), y.data().data(), x.size());
  return ss / static_cast<double>(x.size());
}

double psnr(const SpectralCube& x, const SpectralCube& y, double peak) {
  const double m = mse(x, y);
  if (m == 0.0) return kPsnrCapDb;
  return 10.0 * std::log10(peak * peak / m);
}

SamResult sam(const SpectralCube& x, const SpectralCube& y) {
  require_same_shape(x, y, "sam");
  const std::size_t plane = x.width() * x.height();
  const std::size_t bands = x.bands();
  std::vector<double> a(bands), c(bands);
  SamResult out;
  double total = 0.0;
  for (std::size_t p = 0; p < plane; ++p) {
    double dot = 0.0, nx = 0.0, ny = 0.0;
    for (std::size_t b = 0; b < bands; ++b) {
      a[b] = x.band(b)[p];
      c[b] = y.band(b)[p];
      dot += a[b] * c[b];
      nx += a[b] * a[b];
      ny += c[b] * c[b];
    }
    if (nx == 0.0 || ny == 0.0) {
      ++out.pixels_skipped;
      continue;
    }
    // |x × y| through the Lagrange identity; exactly zero for parallel spectra.
    double cross = 0.0;
    for (std::size_t i = 0; i < bands; ++i) {
      for (std::size_t j = i + 1; j < bands; ++j) {
        const double t = a[i] * c[j] - a[j] * c[i];
        cross += t * t;
      }
    }
    total += std::atan2(std::sqrt(cross), dot);
    ++out.pixels_used;
  }
  if (out.pixels_used == 0) throw DegenerateInputError("sam: every pixel has a zero-norm spectrum");
  out.radians = total / static_cast<double>(out.pixels_used);
  return out;
}

ErgasResult ergas(const SpectralCube& x, const SpectralCube& y, double scale_ratio) {
  require_same_shape(x, y, "ergas");
  const std::size_t plane = x.width() * x.height();
  const auto& k = simd::active();
  ErgasResult out;
  double acc = 0.0;
  for (std::size_t b = 0; b < x.bands(); ++b) {
    const double band_mean = k.sum_f32(x.band(b).data(), plane) / static_cast<double>(plane);
    if (band_mean == 0.0) {
      ++out.bands_skipped;
      continue;
    }
    const double rmse = std::sqrt(k.sum_sq_diff_f32(x.band(b).data(), y.band(b).data(), plane) /
                                  static_cast<double>(plane));
    acc += (rmse / band_mean) * (rmse / band_mean);
    ++out.bands_used;
  }
  if (out.bands_used == 0) throw DegenerateInputError("ergas: every reference band has zero mean");
  out.value = 100.0 * scale_ratio * std::sqrt(acc / static_cast<double>(out.bands_used));
  return out;
}

double ssim(const SpectralCube& x, const SpectralCube& y) {
  require_same_shape(x, y, "ssim");
  const std::size_t w = x.width(), h = x.height();
  if (w < kSsimWindow || h < kSsimWindow) {
    throw ShapeError("ssim: image " + std::to_string(w) + "x" + std::to_string(h) +
                     " is smaller than the 8x8 window");
  }
  constexpr double c1 = (kSsimK1 * 1.0) * (kSsimK1 * 1.0);
  constexpr double c2 = (kSsimK2 * 1.0) * (kSsimK2 * 1.0);
  constexpr double n = static_cast<double>(kSsimWindow * kSsimWindow);
  double over_bands = 0.0;
  for (std::size_t b = 0; b < x.bands(); ++b) {
    const float* xb = x.band(b).data();
    const float* yb = y.band(b).data();
    const auto sx = integral(w, h, [&](std::size_t i) { return static_cast<double>(xb[i]); });
    const auto sy = integral(w, h, [&](std::size_t i) { return static_cast<double>(yb[i]); });
    const auto sxx = integral(w, h, [&](std::size_t i) { return static_cast<double>(xb[i]) * xb[i]; });
    const auto syy = integral(w, h, [&](std::size_t i) { return static_cast<double>(yb[i]) * yb[i]; });
    const auto sxy = integral(w, h, [&](std::size_t i) { return static_cast<double>(xb[i]) * yb[i]; });
    double band_total = 0.0;
    std::size_t windows = 0;
    for (std::size_t r = 0; r + kSsimWindow <= h; ++r) {
      for (std::size_t c = 0; c + kSsimWindow <= w; ++c) {
        const double mx = box(sx, w, r, c, kSsimWindow) / n;
        const double my = box(sy, w, r, c, kSsimWindow) / n;
        const double vx = box(sxx, w, r, c, kSsimWindow) / n - mx * mx;
        const double vy = box(syy, w, r, c, kSsimWindow) / n - my * my;
        const double cov = box(sxy, w, r, c, kSsimWindow) / n - mx * my;
        band_total += ((2.0 * mx * my + c1) * (2.0 * cov + c2)) /
                      ((mx * mx + my * my + c1) * (vx + vy + c2));
        ++windows;
      }
    }
    over_bands += band_total / static_cast<double>(windows);
  }
  return over_bands / static_cast<double>(x.bands());
}

MeanStd mean_std(const std::vector<double>& values) {
  if (values.empty()) return {};
  double m = 0.0;
  for (double v : values) m += v;
  m /= static_cast<double>(values.size());
  double var = 0.0;
  for (double v : values) var += (v - m) * (v - m);
  var /= static_cast<double>(values.size());
  return {m, std::sqrt(var)};
}

ReconReport summarize(std::vector<ImageQuality> images) {
  ReconReport rep;
  rep.images = std::move(images);
  auto column = [&](double ImageQuality::*field) {
    std::vector<double> v;
    for (const auto& img : rep.images) v.push_back(img.*field);
    return mean_std(v);
  };
  rep.mse = column(&ImageQuality::mse);
  rep.psnr = column(&ImageQuality::psnr);
  rep.sam = column(&ImageQuality::sam);
  rep.ergas = column(&ImageQuality::ergas);
  rep.ssim = column(&ImageQuality::ssim);
  return rep;
}

std::string ReconReport::aggregate_row() const {
  std::string row = "AGG";
  char buf[64];
  for (const MeanStd* m : {&mse, &psnr, &sam, &ergas, &ssim}) {
    std::snprintf(buf, sizeof buf, ",%.3f \xC2\xB1 %.3f", m->mean, m->std);
    row += buf;
  }
  return row;
}

void ReconReport::write_csv(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << "# ssim=8x8 uniform window stride 1 C1=(0.01L)^2 C2=(0.03L)^2 L=1; sam=radians; "
         "ergas scale_ratio=1; psnr peak=1 cap=99dB; aggregate=population mean \xC2\xB1 std\n";
  out << "image_id,mse,psnr,sam,ergas,ssim\n";
  char buf[256];
  for (const auto& img : images) {
    std::snprintf(buf, sizeof buf, "%s,%.9g,%.9g,%.9g,%.9g,%.9g\n", img.image_id.c_str(), img.mse,
                  img.psnr, img.sam, img.ergas, img.ssim);
    out << buf;
  }
  out << aggregate_row() << '\n';
  if (!out) throw IoError("short write to " + path.string());
}

Reconstructor mae_reconstructor(const MaeCheckpoint& checkpoint) {
  return [checkpoint](const TokenGrid& target, const MaskPlan& mask) {
    const auto emb = encode(target, checkpoint, &mask);
    return decode_and_loss(emb, mask, target, checkpoint).tokens;
  };
}

ReconReport report(const DatasetManifest& manifest, const BandStats& stats,
                   const Reconstructor& reconstruct, double mask_ratio, std::uint64_t mask_seed,
                   unsigned threads) {
  std::vector<ImageQuality> rows(manifest.entries.size());
  parallel_for(manifest.entries.size(), threads, [&](std::size_t i) {
    const auto& entry = manifest.entries[i];
    const TokenGrid original = load_tokens(entry, stats);
    Rng rng = Rng::derive(mask_seed, i);
    const MaskPlan mask = make_mask(original.size(), mask_ratio, rng);
    const TokenGrid recon = reconstruct(original, mask);
    const SpectralCube x = detokenize(original);
    const SpectralCube y = detokenize(recon);
    rows[i] = {entry.image_id, mse(x, y), psnr(x, y), sam(x, y).radians, ergas(x, y).value, ssim(x, y)};
  });
  return summarize(std::move(rows));
}

ReconReport report(const DatasetManifest& manifest, const MaeCheckpoint& checkpoint,
                   std::uint64_t mask_seed, unsigned threads) {
  return report(manifest, checkpoint.normalization, mae_reconstructor(checkpoint),
                checkpoint.config.mask_ratio, mask_seed, threads);
}

}  // namespace aurum::quality
