#include "aurum/sampler.hpp"

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "aurum/error.hpp"
#include "aurum/rng.hpp"

namespace aurum::sampler {
namespace fs = std::filesystem;

long long day_number(const std::string& iso) {
  int y = 0;
  unsigned m = 0, d = 0;
  char tail = 0;
  if (iso.size() != 10 || std::sscanf(iso.c_str(), "%4d-%2u-%2u%c", &y, &m, &d, &tail) != 3 || iso[4] != '-' ||
      iso[7] != '-') {
    throw ParameterError("date must be YYYY-MM-DD, got '" + iso + "'");
  }
  const std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{m}, std::chrono::day{d}};
  if (!ymd.ok()) throw ParameterError("not a calendar day: '" + iso + "'");
  return std::chrono::sys_days{ymd}.time_since_epoch().count();
}

std::string iso_day(long long n) {
  const std::chrono::year_month_day ymd{std::chrono::sys_days{std::chrono::days{n}}};
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
  return buf;
}

namespace {

double weight_total(const LulcWeights& weights) {
  if (weights.empty()) throw ParameterError("LULC weights are empty");
  double total = 0.0;
  for (const auto& [cls, w] : weights) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw ParameterError("weight of class '" + cls + "' must be >= 0");
    total += w;
  }
  if (!(total > 0.0)) throw ParameterError("at least one LULC weight must be positive");
  return total;
}

std::string distribution_text(const std::map<std::string, std::size_t>& counts, std::size_t total) {
  std::ostringstream s;
  bool first = true;
  for (const auto& [cls, n] : counts) {
    s << (first ? "" : ", ") << cls << '=' << n << " ("
      << (total == 0 ? 0.0 : static_cast<double>(n) / static_cast<double>(total)) << ')';
    first = false;
  }
  return s.str();
}

}  // namespace

void PlanConfig::validate() const {
  if (count < 1) throw ParameterError("plan count must be >= 1");
  if (day_number(start_date) > day_number(end_date)) {
    throw ParameterError("date window start " + start_date + " is after end " + end_date);
  }
  weight_total(weights);
  if (!(max_cloud_fraction > 0.0 && max_cloud_fraction <= 1.0)) {
    throw ParameterError("max_cloud_fraction must lie in (0, 1]");
  }
  if (max_draws_per_request < 1) throw ParameterError("max_draws_per_request must be >= 1");
}

std::map<std::string, std::size_t> class_quotas(const LulcWeights& weights, std::size_t count) {
  const double total = weight_total(weights);
  std::map<std::string, std::size_t> quotas;
  std::vector<std::pair<double, std::string>> remainders;
  std::size_t assigned = 0;
  for (const auto& [cls, w] : weights) {
    const double exact = w / total * static_cast<double>(count);
    const auto base = static_cast<std::size_t>(std::floor(exact));
    quotas[cls] = base;
    assigned += base;
    remainders.emplace_back(exact - static_cast<double>(base), cls);
  }
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t i = 0; assigned < count; ++i, ++assigned) ++quotas[remainders[i % remainders.size()].second];
  return quotas;
}

std::vector<AcquisitionRequest> plan(const PlanConfig& config, const ClassMap& class_map) {
  config.validate();
  if (!class_map) throw ParameterError("plan needs a class map");
  const auto quotas = class_quotas(config.weights, config.count);
  std::map<std::string, std::size_t> filled;
  for (const auto& [cls, q] : quotas) filled[cls] = 0;
  const long long first_day = day_number(config.start_date);
  const auto span = static_cast<std::uint64_t>(day_number(config.end_date) - first_day + 1);
  const std::size_t budget = config.count * config.max_draws_per_request;

  Rng rng(config.seed);
  std::vector<AcquisitionRequest> out;
  out.reserve(config.count);
  for (std::size_t draws = 0; out.size() < config.count; ++draws) {
    if (draws == budget) {
      throw SamplingError("gave up after " + std::to_string(budget) + " location draws with " +
                          std::to_string(out.size()) + " of " + std::to_string(config.count) +
                          " requests; achieved " + distribution_text(filled, out.size()));
    }
    AcquisitionRequest r;
    r.latitude = rng.uniform(-90.0, 90.0);
    r.longitude = rng.uniform(-180.0, 180.0);
    r.lulc_class = class_map(r.latitude, r.longitude);
    const auto q = quotas.find(r.lulc_class);
    if (q == quotas.end() || filled[r.lulc_class] >= q->second) continue;
    ++filled[r.lulc_class];
    r.date = iso_day(first_day + static_cast<long long>(rng.below(span)));
    r.max_cloud_fraction = config.max_cloud_fraction;
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<AcquisitionRequest> filter_clouds(const std::vector<AcquisitionRequest>& requests,
                                              const CloudOracle& oracle) {
  std::vector<AcquisitionRequest> kept;
  for (const auto& r : requests) {
    if (oracle(r) < r.max_cloud_fraction) kept.push_back(r);
  }
  return kept;
}

double class_distance(const std::vector<AcquisitionRequest>& requests, const LulcWeights& weights) {
  const double total = weight_total(weights);
  std::map<std::string, double> observed;
  for (const auto& r : requests) observed[r.lulc_class] += 1.0;
  double tv = 0.0;
  const double n = static_cast<double>(std::max<std::size_t>(requests.size(), 1));
  for (const auto& [cls, w] : weights) tv += std::abs(observed[cls] / n - w / total);
  for (const auto& [cls, c] : observed) {
    if (weights.count(cls) == 0) tv += c / n;
  }
  return tv / 2.0;
}

void write_plan(const std::vector<AcquisitionRequest>& requests, const fs::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << "lat,lon,date,lulc_class\n";
  char buf[64];
  for (const auto& r : requests) {
    std::snprintf(buf, sizeof buf, "%.6f,%.6f,", r.latitude, r.longitude);
    out << buf << r.date << ',' << r.lulc_class << '\n';
  }
  if (!out) throw IoError("short write to " + path.string());
}

std::vector<AcquisitionRequest> read_plan(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != "lat,lon,date,lulc_class") {
    throw FormatError(path.string() + ": plan header must be lat,lon,date,lulc_class");
  }
  std::vector<AcquisitionRequest> out;
  for (std::size_t n = 2; std::getline(in, line); ++n) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) f.push_back(cell);
    if (f.size() != 4) throw FormatError(path.string() + ":" + std::to_string(n) + ": expected 4 fields");
    AcquisitionRequest r;
    try {
      r.latitude = std::stod(f[0]);
      r.longitude = std::stod(f[1]);
    } catch (const std::exception&) {
      throw FormatError(path.string() + ":" + std::to_string(n) + ": bad coordinate");
    }
    day_number(f[2]);
    r.date = f[2];
    r.lulc_class = f[3];
    out.push_back(std::move(r));
  }
  return out;
}

namespace {

std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
  std::uint64_t x = a ^ (b * 0x9E3779B97F4A7C15ull);
  return splitmix64(x);
}

}  // namespace

ClassMap toy_class_map(std::vector<std::string> classes, std::uint64_t seed) {
  if (classes.empty()) throw ParameterError("toy class map needs at least one class");
  return [classes = std::move(classes), seed](double lat, double lon) {
    const auto row = static_cast<std::uint64_t>(std::clamp(std::floor((lat + 90.0) / 5.0), 0.0, 35.0));
    const auto col = static_cast<std::uint64_t>(std::clamp(std::floor((lon + 180.0) / 5.0), 0.0, 71.0));
    return classes[mix(seed, row * 72 + col) % classes.size()];
  };
}

CloudOracle toy_cloud_oracle(std::uint64_t seed) {
  return [seed](const AcquisitionRequest& r) {
    std::uint64_t h = mix(seed, std::bit_cast<std::uint64_t>(r.latitude));
    h = mix(h, std::bit_cast<std::uint64_t>(r.longitude));
    h = mix(h, static_cast<std::uint64_t>(day_number(r.date)));
    return static_cast<double>(h >> 11) * 0x1.0p-53;
  };
}

const char* difficulty_name(Difficulty d) noexcept {
  return d == Difficulty::Separable ? "separable" : "entangled";
}

Difficulty parse_difficulty(const std::string& text) {
  if (text == "separable") return Difficulty::Separable;
  if (text == "entangled") return Difficulty::Entangled;
  throw ParameterError("unknown difficulty '" + text + "' (expected separable or entangled)");
}

}  // namespace aurum::sampler
