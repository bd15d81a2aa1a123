#include "aurum/datacube.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include "aurum/error.hpp"
#include "json.hpp"

namespace aurum {
namespace fs = std::filesystem;
using json = nlohmann::json;

static_assert(std::endian::native == std::endian::little,
              "cube and checkpoint payloads are read with a little-endian memcpy");

namespace {

constexpr std::array<char, 4> kCubeMagic{'M', 'S', 'C', '1'};

std::string shape_string(std::size_t w, std::size_t h, std::size_t b) {
  return std::to_string(w) + "x" + std::to_string(h) + "x" + std::to_string(b);
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::string trim(std::string s) {
  while (!s.empty() && (s.back() == '\r' || s.back() == ' ')) s.pop_back();
  std::size_t i = 0;
  while (i < s.size() && s[i] == ' ') ++i;
  return s.substr(i);
}

bool looks_like_iso_day(const std::string& s) {
  if (s.size() != 10 || s[4] != '-' || s[7] != '-') return false;
  for (std::size_t i : {0, 1, 2, 3, 5, 6, 8, 9}) {
    if (s[i] < '0' || s[i] > '9') return false;
  }
  return true;
}

}  // namespace

SpectralCube::SpectralCube(std::size_t width, std::size_t height,
                           std::vector<std::string> band_names, std::vector<float> data,
                           std::string scale_note)
    : width_(width),
      height_(height),
      band_names_(std::move(band_names)),
      data_(std::move(data)),
      scale_note_(std::move(scale_note)) {
  if (width_ == 0 || height_ == 0 || band_names_.empty()) {
    throw ShapeError("cube dimensions must be positive, got " +
                     shape_string(width_, height_, band_names_.size()));
  }
  if (data_.size() != width_ * height_ * band_names_.size()) {
    throw ShapeError("cube " + shape_string(width_, height_, band_names_.size()) + " needs " +
                     std::to_string(width_ * height_ * band_names_.size()) + " values, got " +
                     std::to_string(data_.size()));
  }
  std::set<std::string> unique(band_names_.begin(), band_names_.end());
  if (unique.size() != band_names_.size()) throw ParameterError("band names must be unique");
}

std::vector<std::string> default_band_names(std::size_t bands) {
  if (bands == 12) {
    return {"B01", "B02", "B03", "B04", "B05", "B06", "B07", "B08", "B8A", "B09", "B11", "B12"};
  }
  std::vector<std::string> names;
  for (std::size_t b = 0; b < bands; ++b) names.push_back("band_" + std::to_string(b));
  return names;
}

void TokenGrid::validate() const {
  if (spatial_rows == 0 || spatial_cols == 0 || spectral_groups == 0) {
    throw ShapeError("token grid shape must be positive");
  }
  if (values.size() != expected_tokens() * kTokenDim) {
    throw ShapeError("token grid declares " + std::to_string(spatial_rows) + "x" +
                     std::to_string(spatial_cols) + "x" + std::to_string(spectral_groups) + " = " +
                     std::to_string(expected_tokens()) + " tokens but holds " +
                     std::to_string(values.size() / kTokenDim) + " (" +
                     std::to_string(values.size()) + " values)");
  }
  if (!band_names.empty() && band_names.size() != spectral_groups * kGroupBands) {
    throw ShapeError("token grid band names do not match its spectral groups");
  }
}

const char* label_name(Label label) noexcept {
  return label == Label::Gold ? "gold" : "non_gold";
}

Label parse_label(const std::string& text) {
  if (text == "gold") return Label::Gold;
  if (text == "non_gold") return Label::NonGold;
  throw ParameterError("label must be 'gold' or 'non_gold', got '" + text + "'");
}

void DatasetManifest::validate() const {
  std::set<std::string> ids;
  for (const auto& e : entries) {
    if (e.image_id.empty()) throw ParameterError("manifest entry with empty image_id");
    if (!ids.insert(e.image_id).second) {
      throw ParameterError("duplicate image_id '" + e.image_id + "' in manifest");
    }
    if (!(e.latitude >= -90.0 && e.latitude <= 90.0)) {
      throw ParameterError("latitude out of range for '" + e.image_id + "'");
    }
    if (!(e.longitude >= -180.0 && e.longitude <= 180.0)) {
      throw ParameterError("longitude out of range for '" + e.image_id + "'");
    }
  }
}

std::size_t DatasetManifest::count(Label label) const noexcept {
  return static_cast<std::size_t>(std::count_if(
      entries.begin(), entries.end(), [label](const ManifestEntry& e) { return e.label == label; }));
}

SpectralCube read_cube(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open cube file " + path.string());
  std::array<char, 4> magic{};
  in.read(magic.data(), magic.size());
  if (in.gcount() != 4 || magic != kCubeMagic) {
    throw FormatError(path.string() + " does not start with the MSC1 magic");
  }
  std::uint32_t header_len = 0;
  in.read(reinterpret_cast<char*>(&header_len), sizeof header_len);
  if (in.gcount() != sizeof header_len) throw TruncationError(path.string() + ": missing header length");
  std::string header(header_len, '\0');
  in.read(header.data(), header_len);
  if (static_cast<std::uint32_t>(in.gcount()) != header_len) {
    throw TruncationError(path.string() + ": header shorter than declared");
  }
  json meta;
  try {
    meta = json::parse(header);
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": header is not valid JSON (" + e.what() + ")");
  }
  std::size_t width = 0, height = 0, bands = 0;
  std::vector<std::string> names;
  std::string note;
  try {
    width = meta.at("width").get<std::size_t>();
    height = meta.at("height").get<std::size_t>();
    bands = meta.at("bands").get<std::size_t>();
    if (meta.at("dtype").get<std::string>() != "f32") {
      throw FormatError(path.string() + ": unsupported dtype " + meta.at("dtype").dump());
    }
    names = meta.at("band_names").get<std::vector<std::string>>();
    note = meta.value("scale_note", std::string{});
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": bad header field (" + e.what() + ")");
  }
  if (names.size() != bands) throw FormatError(path.string() + ": band_names length != bands");

  const std::size_t count = width * height * bands;
  std::vector<float> data(count);
  in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(count * sizeof(float)));
  const auto got = static_cast<std::size_t>(in.gcount());
  if (got != count * sizeof(float)) {
    throw TruncationError(path.string() + ": payload has " + std::to_string(got) + " bytes, header " +
                          shape_string(width, height, bands) + " needs " +
                          std::to_string(count * sizeof(float)));
  }
  if (in.peek() != std::char_traits<char>::eof()) {
    throw TruncationError(path.string() + ": trailing bytes after the declared payload");
  }
  for (std::size_t i = 0; i < count; ++i) {
    if (!std::isfinite(data[i])) {
      throw DataError(path.string() + ": non-finite value at flat index " + std::to_string(i));
    }
  }
  return SpectralCube(width, height, std::move(names), std::move(data), std::move(note));
}

void write_cube(const SpectralCube& cube, const fs::path& path) {
  json meta{{"width", cube.width()},
            {"height", cube.height()},
            {"bands", cube.bands()},
            {"dtype", "f32"},
            {"band_names", cube.band_names()},
            {"scale_note", cube.scale_note()}};
  const std::string header = meta.dump();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write cube file " + path.string());
  const auto header_len = static_cast<std::uint32_t>(header.size());
  out.write(kCubeMagic.data(), kCubeMagic.size());
  out.write(reinterpret_cast<const char*>(&header_len), sizeof header_len);
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  out.write(reinterpret_cast<const char*>(cube.data().data()),
            static_cast<std::streamsize>(cube.size() * sizeof(float)));
  if (!out) throw IoError("short write to " + path.string());
}

DatasetManifest read_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest " + path.string());
  std::string line;
  if (!std::getline(in, line) || trim(line) != "image_id,path,label,lat,lon,date") {
    throw FormatError(path.string() + ": manifest header must be image_id,path,label,lat,lon,date");
  }
  DatasetManifest manifest;
  const fs::path base = path.parent_path();
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    line = trim(line);
    if (line.empty()) continue;
    const auto fields = split_csv_line(line);
    if (fields.size() != 6) {
      throw FormatError(path.string() + ":" + std::to_string(line_no) + ": expected 6 fields");
    }
    ManifestEntry e;
    e.image_id = fields[0];
    e.path = fs::path(fields[1]);
    if (e.path.is_relative()) e.path = base / e.path;
    e.label = parse_label(fields[2]);
    try {
      e.latitude = std::stod(fields[3]);
      e.longitude = std::stod(fields[4]);
    } catch (const std::exception&) {
      throw FormatError(path.string() + ":" + std::to_string(line_no) + ": bad coordinates");
    }
    if (!looks_like_iso_day(fields[5])) {
      throw FormatError(path.string() + ":" + std::to_string(line_no) +
                        ": date must be YYYY-MM-DD, got '" + fields[5] + "'");
    }
    e.date = fields[5];
    manifest.entries.push_back(std::move(e));
  }
  manifest.validate();
  return manifest;
}

void write_manifest(const DatasetManifest& manifest, const fs::path& path) {
  manifest.validate();
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write manifest " + path.string());
  const fs::path base = path.parent_path();
  out << "image_id,path,label,lat,lon,date\n";
  char coord[64];
  for (const auto& e : manifest.entries) {
    fs::path p = e.path;
    if (p.is_absolute() && !base.empty()) {
      std::error_code ec;
      const fs::path rel = fs::relative(p, fs::absolute(base), ec);
      if (!ec && !rel.empty()) p = rel;
    } else if (!base.empty()) {
      std::error_code ec;
      const fs::path rel = fs::relative(p, base, ec);
      if (!ec && !rel.empty()) p = rel;
    }
    out << e.image_id << ',' << p.generic_string() << ',' << label_name(e.label) << ',';
    std::snprintf(coord, sizeof coord, "%.6f,%.6f", e.latitude, e.longitude);
    out << coord << ',' << e.date << '\n';
  }
  if (!out) throw IoError("short write to " + path.string());
}

BandStats compute_band_stats(std::span<const SpectralCube> cubes) {
  if (cubes.empty()) throw ParameterError("band statistics need at least one cube");
  const std::size_t bands = cubes.front().bands();
  BandStats stats{std::vector<double>(bands, std::numeric_limits<double>::infinity()),
                  std::vector<double>(bands, -std::numeric_limits<double>::infinity())};
  for (const auto& cube : cubes) {
    if (cube.bands() != bands) throw ShapeError("cubes disagree on band count");
    for (std::size_t b = 0; b < bands; ++b) {
      const auto [lo, hi] = std::minmax_element(cube.band(b).begin(), cube.band(b).end());
      stats.min[b] = std::min<double>(stats.min[b], *lo);
      stats.max[b] = std::max<double>(stats.max[b], *hi);
    }
  }
  return stats;
}

SpectralCube normalize(const SpectralCube& cube, const BandStats& stats) {
  if (stats.min.size() != cube.bands() || stats.max.size() != cube.bands()) {
    throw ParameterError("normalization statistics cover " + std::to_string(stats.min.size()) +
                         " bands, cube has " + std::to_string(cube.bands()));
  }
  std::vector<float> out(cube.size());
  const std::size_t plane = cube.width() * cube.height();
  std::ostringstream note;
  note.precision(9);
  note << "minmax per band;";
  for (std::size_t b = 0; b < cube.bands(); ++b) {
    const double lo = stats.min[b];
    const double hi = stats.max[b];
    if (!(hi > lo)) {
      throw ParameterError("degenerate range for band " + std::to_string(b) + " (" +
                           cube.band_names()[b] + "): max must exceed min");
    }
    const double inv = 1.0 / (hi - lo);
    const auto src = cube.band(b);
    for (std::size_t i = 0; i < plane; ++i) {
      const double v = (src[i] - lo) * inv;
      out[b * plane + i] = static_cast<float>(std::clamp(v, 0.0, 1.0));
    }
    note << ' ' << cube.band_names()[b] << "=[" << lo << ',' << hi << ']';
  }
  return SpectralCube(cube.width(), cube.height(), cube.band_names(), std::move(out), note.str());
}

TokenGrid tokenize(const SpectralCube& cube) {
  if (cube.width() % kPatchSide != 0 || cube.height() % kPatchSide != 0 ||
      cube.bands() % kGroupBands != 0) {
    throw ShapeError("tokenize needs width and height divisible by 8 and bands divisible by 3, got " +
                     shape_string(cube.width(), cube.height(), cube.bands()));
  }
  TokenGrid grid;
  grid.spatial_rows = cube.height() / kPatchSide;
  grid.spatial_cols = cube.width() / kPatchSide;
  grid.spectral_groups = cube.bands() / kGroupBands;
  grid.band_names = cube.band_names();
  grid.scale_note = cube.scale_note();
  grid.values.resize(grid.expected_tokens() * kTokenDim);
  float* dst = grid.values.data();
  for (std::size_t g = 0; g < grid.spectral_groups; ++g) {
    for (std::size_t rb = 0; rb < grid.spatial_rows; ++rb) {
      for (std::size_t cb = 0; cb < grid.spatial_cols; ++cb) {
        for (std::size_t k = 0; k < kGroupBands; ++k) {
          const std::size_t band = g * kGroupBands + k;
          for (std::size_t r = 0; r < kPatchSide; ++r) {
            const float* src = cube.band(band).data() + (rb * kPatchSide + r) * cube.width() +
                               cb * kPatchSide;
            dst = std::copy(src, src + kPatchSide, dst);
          }
        }
      }
    }
  }
  return grid;
}

SpectralCube detokenize(const TokenGrid& grid) {
  grid.validate();
  const std::size_t width = grid.spatial_cols * kPatchSide;
  const std::size_t height = grid.spatial_rows * kPatchSide;
  const std::size_t bands = grid.spectral_groups * kGroupBands;
  std::vector<float> data(width * height * bands);
  const float* src = grid.values.data();
  for (std::size_t g = 0; g < grid.spectral_groups; ++g) {
    for (std::size_t rb = 0; rb < grid.spatial_rows; ++rb) {
      for (std::size_t cb = 0; cb < grid.spatial_cols; ++cb) {
        for (std::size_t k = 0; k < kGroupBands; ++k) {
          const std::size_t band = g * kGroupBands + k;
          for (std::size_t r = 0; r < kPatchSide; ++r) {
            float* dst = data.data() + (band * height + rb * kPatchSide + r) * width + cb * kPatchSide;
            std::copy(src, src + kPatchSide, dst);
            src += kPatchSide;
          }
        }
      }
    }
  }
  auto names = grid.band_names.empty() ? default_band_names(bands) : grid.band_names;
  return SpectralCube(width, height, std::move(names), std::move(data), grid.scale_note);
}

void render_rgb(const SpectralCube& cube, std::size_t red_band, std::size_t green_band,
                std::size_t blue_band, const fs::path& out) {
  for (std::size_t b : {red_band, green_band, blue_band}) {
    if (b >= cube.bands()) {
      throw ParameterError("band index " + std::to_string(b) + " out of range for a " +
                           std::to_string(cube.bands()) + "-band cube");
    }
  }
  const std::size_t plane = cube.width() * cube.height();
  std::vector<unsigned char> pixels(plane * 3);
  const std::array<std::size_t, 3> channels{red_band, green_band, blue_band};
  for (std::size_t c = 0; c < 3; ++c) {
    const auto band = cube.band(channels[c]);
    const auto [lo_it, hi_it] = std::minmax_element(band.begin(), band.end());
    const double lo = *lo_it;
    const double span = static_cast<double>(*hi_it) - lo;
    for (std::size_t i = 0; i < plane; ++i) {
      double level = 0.0;
      if (span > 0.0) level = std::round((band[i] - lo) / span * 255.0);
      pixels[i * 3 + c] = static_cast<unsigned char>(std::clamp(level, 0.0, 255.0));
    }
  }
  std::ofstream file(out, std::ios::binary | std::ios::trunc);
  if (!file) throw IoError("cannot write PPM " + out.string());
  file << "P6 " << cube.width() << ' ' << cube.height() << " 255\n";
  file.write(reinterpret_cast<const char*>(pixels.data()),
             static_cast<std::streamsize>(pixels.size()));
  if (!file) throw IoError("short write to " + out.string());
}

}  // namespace aurum
