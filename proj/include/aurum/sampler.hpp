#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "aurum/datacube.hpp"

namespace aurum::sampler {

inline constexpr double kDefaultMaxCloudFraction = 0.30;

struct AcquisitionRequest {
  double latitude = 0.0;
  double longitude = 0.0;
  std::string date;  ///< YYYY-MM-DD
  std::string lulc_class;
  double max_cloud_fraction = kDefaultMaxCloudFraction;
  friend bool operator==(const AcquisitionRequest&, const AcquisitionRequest&) = default;
};

/// Class -> non-negative weight; normalized on use.
using LulcWeights = std::map<std::string, double>;
/// Land-cover class at (latitude, longitude).
using ClassMap = std::function<std::string(double latitude, double longitude)>;
/// Cloud fraction expected for a request.
using CloudOracle = std::function<double(const AcquisitionRequest&)>;

struct PlanConfig {
  std::size_t count = 100;
  std::string start_date = "2017-01-01";
  std::string end_date = "2023-12-31";
  LulcWeights weights;
  std::uint64_t seed = 0;
  double max_cloud_fraction = kDefaultMaxCloudFraction;
  /// Location draws allowed per requested acquisition before giving up.
  std::size_t max_draws_per_request = 200;
  void validate() const;
};

/// Per-class quotas for `count` requests by largest-remainder apportionment
/// of the normalized weights; ties go to the lexicographically first class.
std::map<std::string, std::size_t> class_quotas(const LulcWeights& weights, std::size_t count);

/// Dates uniform over the window (inclusive, whole days), locations uniform
/// in latitude and longitude. A drawn location is kept only while its class
/// quota is open, so the accepted class mix tracks the weights. Throws
/// SamplingError with the achieved distribution when the draw budget runs out.
std::vector<AcquisitionRequest> plan(const PlanConfig& config, const ClassMap& class_map);

/// Keeps requests whose cloud fraction is strictly below their threshold.
std::vector<AcquisitionRequest> filter_clouds(const std::vector<AcquisitionRequest>& requests,
                                              const CloudOracle& oracle);

/// Total-variation distance between the class mix of `requests` and `weights`.
double class_distance(const std::vector<AcquisitionRequest>& requests, const LulcWeights& weights);

/// Writes `lat,lon,date,lulc_class`.
void write_plan(const std::vector<AcquisitionRequest>& requests, const std::filesystem::path& path);
std::vector<AcquisitionRequest> read_plan(const std::filesystem::path& path);

/// Stand-in land-cover raster: classes tile the globe in 5 x 5 degree cells
/// chosen by a hash of the cell index.
ClassMap toy_class_map(std::vector<std::string> classes, std::uint64_t seed = 0);
/// Stand-in cloud catalog: a hash of (location, date) mapped to [0, 1).
CloudOracle toy_cloud_oracle(std::uint64_t seed = 0);

/// Days since 1970-01-01 for a YYYY-MM-DD string; ParameterError otherwise.
long long day_number(const std::string& iso_day);
std::string iso_day(long long day_number);

// --- synthetic corpus ----------------------------------------------------------

enum class Difficulty { Separable, Entangled };

const char* difficulty_name(Difficulty d) noexcept;
Difficulty parse_difficulty(const std::string& text);

inline constexpr std::size_t kSynthSide = 128;
inline constexpr std::size_t kSynthBands = 12;

/// Writes `<image_id>.msc` cubes and `manifest.csv` into `out_dir`.
///
/// separable: gold cubes add a per-band mean shift on top of the shared
/// background. entangled: a smooth latent field drives every band with a
/// class-specific sign pattern; per-band marginals match across classes and
/// the class only shows in how bands co-vary inside a neighbourhood.
DatasetManifest synth_corpus(std::size_t n_gold, std::size_t n_non_gold, Difficulty difficulty,
                             std::uint64_t seed, const std::filesystem::path& out_dir, unsigned threads = 1);

/// The cube `synth_corpus` writes for image `index` (gold images first).
SpectralCube synth_cube(Label label, Difficulty difficulty, std::uint64_t seed, std::size_t index);

}  // namespace aurum::sampler
