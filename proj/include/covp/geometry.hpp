#pragma once

#include <compare>
#include <cstdint>
#include <span>
#include <vector>

namespace covp {

// Normalized [0,1] coordinates everywhere, origin top-left. Pixel conversion
// happens only at client boundaries.
struct BoundingBox {
  double x1 = 0.0;
  double y1 = 0.0;
  double x2 = 0.0;
  double y2 = 0.0;

  bool is_valid() const;
  void validate() const;  // throws PreconditionError

  double width() const { return x2 - x1; }
  double height() const { return y2 - y1; }

  bool operator==(const BoundingBox&) const = default;
};

enum class PointLabel : std::uint8_t { Negative = 0, Positive = 1 };

struct ImagePoint {
  double x = 0.0;
  double y = 0.0;
  PointLabel label = PointLabel::Positive;

  bool is_valid() const;
  void validate() const;

  bool operator==(const ImagePoint&) const = default;
};

struct GridCell {
  int row = 0;
  int col = 0;

  bool operator==(const GridCell&) const = default;
  auto operator<=>(const GridCell&) const = default;
};

// Dense H'xW' grid of D-dimensional embeddings, one vector per patch_size
// pixel cell. Layout: data[(row*width + col)*dim + d].
struct FeatureMap {
  int height = 0;
  int width = 0;
  int dim = 0;
  int patch_size = 1;
  std::vector<float> data;

  int cells() const { return height * width; }
  std::span<const float> cell(int row, int col) const;
  std::span<float> cell(int row, int col);

  bool is_valid() const;
  void validate() const;
};

// Per-pixel prediction in [0,1].
struct SoftMask {
  int height = 0;
  int width = 0;
  std::vector<float> values;

  float at(int row, int col) const { return values[static_cast<size_t>(row) * width + col]; }
  float& at(int row, int col) { return values[static_cast<size_t>(row) * width + col]; }

  bool is_valid() const;
  void validate() const;

  static SoftMask filled(int height, int width, float value = 0.0f);
};

struct BinaryMask {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> values;  // 0 or 1

  std::uint8_t at(int row, int col) const { return values[static_cast<size_t>(row) * width + col]; }
  std::uint8_t& at(int row, int col) { return values[static_cast<size_t>(row) * width + col]; }

  bool is_valid() const;
  void validate() const;
  std::size_t foreground_count() const;

  static BinaryMask filled(int height, int width, std::uint8_t value = 0);
};

// Center of a detector box, positive label. This is the initial point the
// downstream completion stage expands.
ImagePoint bbox_center(const BoundingBox& b);

// Nearest-cell mapping of a normalized point onto a grid; clamped at edges so
// (1.0, 1.0) stays inside.
GridCell point_to_cell(const ImagePoint& p, int grid_height, int grid_width);
GridCell point_to_cell(const ImagePoint& p, const FeatureMap& fm);

// Cell center as a normalized point, so prompts land mid-patch.
ImagePoint cell_to_point(int row, int col, int grid_height, int grid_width);
ImagePoint cell_to_point(int row, int col, const FeatureMap& fm);

// |a AND b| / |a OR b|. Both masks empty counts as agreement (1.0).
double mask_iou(const BinaryMask& a, const BinaryMask& b);

}  // namespace covp
