#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "aurum/datacube.hpp"

namespace aurum {

enum class FeatureMode { Raw, Embeddings };

const char* feature_mode_name(FeatureMode mode) noexcept;
FeatureMode parse_feature_mode(const std::string& text);

/// Rows of one source image inside an EmbeddingMatrix.
struct ImageRows {
  std::string image_id;
  Label label = Label::NonGold;
  std::size_t first_row = 0;
  std::size_t row_count = 0;
  friend bool operator==(const ImageRows&, const ImageRows&) = default;
};

/// Per-patch feature vectors, grouped by image. Every row inherits the label
/// of the image it came from.
struct EmbeddingMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<float> values;
  std::vector<ImageRows> images;
  FeatureMode mode = FeatureMode::Embeddings;

  std::span<const float> row(std::size_t r) const noexcept {
    return std::span<const float>(values).subspan(r * cols, cols);
  }
  /// 0/1 label per row (1 = gold).
  std::vector<int> labels() const;
  /// Row-wise subset containing only the named images, in the given order.
  EmbeddingMatrix select(std::span<const std::string> image_ids) const;
  /// Appends `other`'s images; column counts must agree.
  void append(const EmbeddingMatrix& other);
  void validate() const;

  friend bool operator==(const EmbeddingMatrix&, const EmbeddingMatrix&) = default;
};

/// "EMB1" | u32 LE header length | JSON {rows, cols, mode, images[]} | f32 LE row-major payload.
void write_features(const EmbeddingMatrix& features, const std::filesystem::path& path);
EmbeddingMatrix read_features(const std::filesystem::path& path);

}  // namespace aurum
