#include <cmath>
#include <numbers>

#include "aurum/error.hpp"
#include "aurum/quality.hpp"
#include "doctest.h"
#include "oracles.hpp"
#include "support.hpp"

using namespace aurum;
using aurum::testing::TempDir;
namespace q = aurum::quality;

namespace {

SpectralCube constant(std::size_t w, std::size_t h, std::size_t b, float v) {
  return SpectralCube(w, h, default_band_names(b), std::vector<float>(w * h * b, v));
}

SpectralCube add_noise(const SpectralCube& c, double sigma, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<float> d(c.data().begin(), c.data().end());
  for (auto& v : d) v = static_cast<float>(v + rng.normal(0.0, sigma));
  return SpectralCube(c.width(), c.height(), c.band_names(), std::move(d));
}

}  // namespace

TEST_CASE("mse and psnr closed forms") {
  CHECK(q::mse(constant(4, 4, 2, 0.0f), constant(4, 4, 2, 1.0f)) == 1.0);
  const SpectralCube a(2, 1, {"b"}, {0.0f, 0.0f}), b(2, 1, {"b"}, {1.0f, 0.0f});
  CHECK(q::mse(a, b) == 0.5);
  CHECK(q::psnr(a, a) == q::kPsnrCapDb);
  CHECK(q::psnr(constant(4, 4, 1, 0.0f), constant(4, 4, 1, 1.0f)) == 0.0);
  // mse = 0.01 from a uniform 0.1 offset
  const SpectralCube z(1, 1, {"b"}, {0.0f});
  CHECK(q::psnr(z, SpectralCube(1, 1, {"b"}, {0.1f})) == doctest::Approx(20.0).epsilon(1e-6));
  CHECK_THROWS_AS(q::mse(a, constant(1, 2, 1, 0.0f)), ShapeError);
}

TEST_CASE("sam closed forms and skips") {
  Rng rng(1);
  const auto x = aurum::testing::random_cube(8, 8, 3, rng, 0.1, 1.0);
  CHECK(q::sam(x, x).radians == 0.0);
  std::vector<float> twice(x.data().begin(), x.data().end());
  for (auto& v : twice) v *= 2.0f;
  CHECK(q::sam(x, SpectralCube(8, 8, x.band_names(), twice)).radians == 0.0);

  std::vector<float> e1(4 * 3, 0.0f), e2(4 * 3, 0.0f);
  for (std::size_t p = 0; p < 4; ++p) {
    e1[0 * 4 + p] = 1.0f;
    e2[1 * 4 + p] = 1.0f;
  }
  const SpectralCube u(2, 2, default_band_names(3), e1), v(2, 2, default_band_names(3), e2);
  CHECK(q::sam(u, v).radians == doctest::Approx(std::numbers::pi / 2));

  auto with_zero = e1;
  with_zero[0] = 0.0f;  // pixel 0 now has a zero spectrum in u
  const auto r = q::sam(SpectralCube(2, 2, default_band_names(3), with_zero), v);
  CHECK(r.pixels_skipped == 1);
  CHECK(r.pixels_used == 3);
  CHECK_THROWS_AS(q::sam(constant(2, 2, 3, 0.0f), v), DegenerateInputError);
}

TEST_CASE("ergas closed forms") {
  Rng rng(2);
  const auto x = aurum::testing::random_cube(8, 8, 4, rng, 0.1, 1.0);
  CHECK(q::ergas(x, x).value == 0.0);
  // Single band with RMSE equal to its mean.
  CHECK(q::ergas(constant(4, 4, 1, 0.5f), constant(4, 4, 1, 1.0f)).value == doctest::Approx(100.0));
  CHECK(q::ergas(constant(4, 4, 1, 0.5f), constant(4, 4, 1, 1.0f), 0.25).value == doctest::Approx(25.0));
  // Two bands with RMSE/mean of 0.1 and 0.2.
  const SpectralCube ref(1, 1, {"a", "b"}, {1.0f, 1.0f}), rec(1, 1, {"a", "b"}, {1.1f, 0.8f});
  CHECK(q::ergas(ref, rec).value == doctest::Approx(15.811388).epsilon(1e-6));
  const SpectralCube zero_band(1, 1, {"a", "b"}, {0.0f, 1.0f});
  const auto r = q::ergas(zero_band, rec);
  CHECK(r.bands_skipped == 1);
  CHECK(r.value == doctest::Approx(20.0).epsilon(1e-6));
  CHECK_THROWS_AS(q::ergas(constant(2, 2, 2, 0.0f), constant(2, 2, 2, 1.0f)), DegenerateInputError);
}

TEST_CASE("ssim closed forms") {
  Rng rng(3);
  const auto x = aurum::testing::random_cube(16, 16, 3, rng);
  CHECK(q::ssim(x, x) == doctest::Approx(1.0).epsilon(1e-12));
  const double a = 0.2, b = 0.7, c1 = 1e-4;
  CHECK(q::ssim(constant(8, 8, 1, static_cast<float>(a)), constant(8, 8, 1, static_cast<float>(b))) ==
        doctest::Approx((2 * a * b + c1) / (a * a + b * b + c1)).epsilon(1e-6));
  CHECK_THROWS_AS(q::ssim(constant(7, 8, 1, 0.f), constant(7, 8, 1, 0.f)), ShapeError);
}

TEST_CASE("every metric matches its naive oracle") {
  Rng rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    const auto x = aurum::testing::random_cube(16, 16, 6, rng);
    const auto y = aurum::testing::random_cube(16, 16, 6, rng);
    CHECK(std::abs(q::mse(x, y) - oracle::mse(x, y)) <= 1e-9);
    CHECK(std::abs(q::psnr(x, y) - oracle::psnr(x, y)) <= 1e-9);
    CHECK(std::abs(q::sam(x, y).radians - oracle::sam(x, y)) <= 1e-9);
    CHECK(std::abs(q::ergas(x, y).value - oracle::ergas(x, y)) <= 1e-9);
    CHECK(std::abs(q::ssim(x, y) - oracle::ssim(x, y)) <= 1e-9);
  }
}

TEST_CASE("symmetry and bounds") {
  Rng rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    const auto x = aurum::testing::random_cube(16, 16, 6, rng);
    const auto y = aurum::testing::random_cube(16, 16, 6, rng);
    CHECK(q::mse(x, y) == q::mse(y, x));
    CHECK(q::ssim(x, y) == doctest::Approx(q::ssim(y, x)).epsilon(1e-12));
    const double s = q::ssim(x, y);
    CHECK((s >= -1.0 && s <= 1.0));
    const double angle = q::sam(x, y).radians;
    CHECK((angle >= 0.0 && angle <= std::numbers::pi));
  }
}

TEST_CASE("metrics degrade monotonically with noise") {
  Rng rng(6);
  const auto x = aurum::testing::random_cube(32, 32, 6, rng, 0.2, 0.8);
  double prev_mse = 0, prev_ergas = 0, prev_psnr = 1e9, prev_ssim = 2;
  for (double sigma : {0.01, 0.05, 0.1}) {
    const auto y = add_noise(x, sigma, 60);
    const double m = q::mse(x, y), e = q::ergas(x, y).value, p = q::psnr(x, y), s = q::ssim(x, y);
    CHECK(m >= prev_mse);
    CHECK(e >= prev_ergas);
    CHECK(p <= prev_psnr);
    CHECK(s <= prev_ssim);
    prev_mse = m;
    prev_ergas = e;
    prev_psnr = p;
    prev_ssim = s;
  }
}

TEST_CASE("mean_std is the population statistic") {
  CHECK(q::mean_std({3.0}).std == 0.0);
  const auto m = q::mean_std({1.0, 3.0});
  CHECK(m.mean == 2.0);
  CHECK(m.std == 1.0);
}

TEST_CASE("corpus report with stub reconstructors") {
  TempDir dir("recon");
  DatasetManifest manifest;
  Rng rng(7);
  for (int i = 0; i < 3; ++i) {
    const std::string id = "r" + std::to_string(i);
    write_cube(aurum::testing::random_cube(16, 16, 6, rng, 0.1, 0.9), dir / (id + ".msc"));
    manifest.entries.push_back({id, dir / (id + ".msc"), Label::Gold, 0, 0, "2020-01-01"});
  }
  const BandStats stats{std::vector<double>(6, 0.0), std::vector<double>(6, 1.0)};
  const q::Reconstructor identity = [](const TokenGrid& t, const MaskPlan&) { return t; };
  const auto perfect = q::report(manifest, stats, identity, 0.4, 1);
  for (const auto& img : perfect.images) {
    CHECK(img.mse == 0.0);
    CHECK(img.psnr == q::kPsnrCapDb);
    CHECK(img.sam == doctest::Approx(0.0).epsilon(1e-6));
    CHECK(img.ergas == 0.0);
    CHECK(img.ssim == doctest::Approx(1.0).epsilon(1e-12));
  }

  const q::Reconstructor noisy = [](const TokenGrid& t, const MaskPlan& mask) {
    Rng noise(mask.masked.size() * 31 + t.size());
    TokenGrid out = t;
    for (auto& v : out.values) v = static_cast<float>(v + noise.normal(0.0, 0.1));
    return out;
  };
  const auto worse = q::report(manifest, stats, noisy, 0.4, 1, 2);
  CHECK(worse.mse.mean > perfect.mse.mean);
  CHECK(worse.psnr.mean < perfect.psnr.mean);
  CHECK(worse.sam.mean > perfect.sam.mean);
  CHECK(worse.ergas.mean > perfect.ergas.mean);
  CHECK(worse.ssim.mean < perfect.ssim.mean);

  DatasetManifest single;
  single.entries.push_back(manifest.entries[0]);
  const auto one = q::report(single, stats, noisy, 0.4, 1);
  CHECK(one.mse.std == 0.0);
  CHECK(one.ssim.std == 0.0);

  worse.write_csv(dir / "recon.csv");
  const auto text = aurum::testing::slurp(dir / "recon.csv");
  CHECK(text.find("image_id,mse,psnr,sam,ergas,ssim\n") != std::string::npos);
  CHECK(text.find("\nAGG,") != std::string::npos);
  CHECK(text.find("\xC2\xB1") != std::string::npos);
}
