#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace aurum {

inline constexpr std::size_t kPatchSide = 8;
inline constexpr std::size_t kGroupBands = 3;
inline constexpr std::size_t kTokenDim = kPatchSide * kPatchSide * kGroupBands;  // 192

/// W x H x B reflectance raster, band-planar and row-major within a band.
/// Immutable once constructed.
class SpectralCube {
 public:
  SpectralCube(std::size_t width, std::size_t height, std::vector<std::string> band_names,
               std::vector<float> data, std::string scale_note = {});

  std::size_t width() const noexcept { return width_; }
  std::size_t height() const noexcept { return height_; }
  std::size_t bands() const noexcept { return band_names_.size(); }
  std::size_t size() const noexcept { return data_.size(); }
  const std::vector<std::string>& band_names() const noexcept { return band_names_; }
  const std::string& scale_note() const noexcept { return scale_note_; }

  std::span<const float> data() const noexcept { return data_; }
  std::span<const float> band(std::size_t b) const noexcept {
    return std::span<const float>(data_).subspan(b * width_ * height_, width_ * height_);
  }
  float at(std::size_t b, std::size_t row, std::size_t col) const noexcept {
    return data_[(b * height_ + row) * width_ + col];
  }

  friend bool operator==(const SpectralCube&, const SpectralCube&) = default;

 private:
  std::size_t width_;
  std::size_t height_;
  std::vector<std::string> band_names_;
  std::vector<float> data_;
  std::string scale_note_;
};

/// Sentinel-2 L2A names for the 12 bands in cube order when `bands == 12`,
/// otherwise "band_0".."band_{n-1}".
std::vector<std::string> default_band_names(std::size_t bands);

struct TokenIndex {
  std::size_t row_block = 0;
  std::size_t col_block = 0;
  std::size_t group = 0;
  friend bool operator==(const TokenIndex&, const TokenIndex&) = default;
};

/// 8x8x3 spectral-spatial tokens of a cube. Tokens are stored contiguously,
/// kTokenDim values each, laid out [band-in-group][row][col]. Enumeration is
/// group-major, then row block, then column block.
struct TokenGrid {
  std::size_t spatial_rows = 0;
  std::size_t spatial_cols = 0;
  std::size_t spectral_groups = 0;
  std::vector<float> values;
  std::vector<std::string> band_names;
  std::string scale_note;

  std::size_t expected_tokens() const noexcept {
    return spatial_rows * spatial_cols * spectral_groups;
  }
  std::size_t size() const noexcept { return values.size() / kTokenDim; }
  std::span<const float> token(std::size_t i) const noexcept {
    return std::span<const float>(values).subspan(i * kTokenDim, kTokenDim);
  }
  TokenIndex index_of(std::size_t i) const noexcept {
    const std::size_t per_group = spatial_rows * spatial_cols;
    return {(i % per_group) / spatial_cols, i % spatial_cols, i / per_group};
  }
  std::size_t position_of(const TokenIndex& idx) const noexcept {
    return (idx.group * spatial_rows + idx.row_block) * spatial_cols + idx.col_block;
  }
  /// Throws ShapeError when the payload does not match the declared shape.
  void validate() const;
};

struct BandStats {
  std::vector<double> min;
  std::vector<double> max;
  friend bool operator==(const BandStats&, const BandStats&) = default;
};

enum class Label { NonGold = 0, Gold = 1 };

const char* label_name(Label label) noexcept;
Label parse_label(const std::string& text);

struct ManifestEntry {
  std::string image_id;
  std::filesystem::path path;
  Label label = Label::NonGold;
  double latitude = 0.0;
  double longitude = 0.0;
  std::string date;
};

struct DatasetManifest {
  std::vector<ManifestEntry> entries;
  /// Throws ParameterError on duplicate ids or out-of-range coordinates.
  void validate() const;
  std::size_t count(Label label) const noexcept;
};

// --- I/O ---------------------------------------------------------------------

SpectralCube read_cube(const std::filesystem::path& path);
void write_cube(const SpectralCube& cube, const std::filesystem::path& path);

/// Relative cube paths are resolved against the manifest's directory.
DatasetManifest read_manifest(const std::filesystem::path& path);
/// Paths are written relative to the manifest directory when possible.
void write_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);

// --- transforms --------------------------------------------------------------

/// Per-band min and max over every value of every cube.
BandStats compute_band_stats(std::span<const SpectralCube> cubes);

/// (v - min_b) / (max_b - min_b) clipped to [0, 1].
SpectralCube normalize(const SpectralCube& cube, const BandStats& stats);

TokenGrid tokenize(const SpectralCube& cube);
SpectralCube detokenize(const TokenGrid& grid);

/// Binary PPM (P6), each channel stretched from its own [min, max] to 0..255.
void render_rgb(const SpectralCube& cube, std::size_t red_band, std::size_t green_band,
                std::size_t blue_band, const std::filesystem::path& out);

}  // namespace aurum
