#include "covp/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "covp/errors.hpp"

namespace covp {

namespace {

bool in_unit(double v) { return v >= 0.0 && v <= 1.0; }

}  // namespace

bool BoundingBox::is_valid() const {
  return in_unit(x1) && in_unit(x2) && in_unit(y1) && in_unit(y2) && x1 < x2 && y1 < y2;
}

void BoundingBox::validate() const {
  if (!is_valid()) {
    throw PreconditionError("invalid bounding box [" + std::to_string(x1) + "," + std::to_string(y1) +
                            "," + std::to_string(x2) + "," + std::to_string(y2) + "]");
  }
}

bool ImagePoint::is_valid() const { return in_unit(x) && in_unit(y); }

void ImagePoint::validate() const {
  if (!is_valid()) {
    throw PreconditionError("point (" + std::to_string(x) + "," + std::to_string(y) + ") outside [0,1]");
  }
}

std::span<const float> FeatureMap::cell(int row, int col) const {
  return {data.data() + (static_cast<size_t>(row) * width + col) * dim, static_cast<size_t>(dim)};
}

std::span<float> FeatureMap::cell(int row, int col) {
  return {data.data() + (static_cast<size_t>(row) * width + col) * dim, static_cast<size_t>(dim)};
}

bool FeatureMap::is_valid() const {
  if (height < 1 || width < 1 || dim < 1 || patch_size < 1) return false;
  if (data.size() != static_cast<size_t>(height) * width * dim) return false;
  return std::all_of(data.begin(), data.end(), [](float v) { return std::isfinite(v); });
}

void FeatureMap::validate() const {
  if (!is_valid()) throw PreconditionError("invalid feature map");
}

bool SoftMask::is_valid() const {
  if (height < 1 || width < 1) return false;
  if (values.size() != static_cast<size_t>(height) * width) return false;
  return std::all_of(values.begin(), values.end(), [](float v) { return v >= 0.0f && v <= 1.0f; });
}

void SoftMask::validate() const {
  if (!is_valid()) throw PreconditionError("invalid soft mask");
}

SoftMask SoftMask::filled(int height, int width, float value) {
  return {height, width, std::vector<float>(static_cast<size_t>(height) * width, value)};
}

bool BinaryMask::is_valid() const {
  if (height < 1 || width < 1) return false;
  if (values.size() != static_cast<size_t>(height) * width) return false;
  return std::all_of(values.begin(), values.end(), [](std::uint8_t v) { return v <= 1; });
}

void BinaryMask::validate() const {
  if (!is_valid()) throw PreconditionError("invalid binary mask");
}

std::size_t BinaryMask::foreground_count() const {
  return static_cast<std::size_t>(std::count(values.begin(), values.end(), std::uint8_t{1}));
}

BinaryMask BinaryMask::filled(int height, int width, std::uint8_t value) {
  return {height, width, std::vector<std::uint8_t>(static_cast<size_t>(height) * width, value)};
}

ImagePoint bbox_center(const BoundingBox& b) {
  b.validate();
  return {(b.x1 + b.x2) / 2.0, (b.y1 + b.y2) / 2.0, PointLabel::Positive};
}

GridCell point_to_cell(const ImagePoint& p, int grid_height, int grid_width) {
  p.validate();
  if (grid_height < 1 || grid_width < 1) throw PreconditionError("empty grid");
  int row = static_cast<int>(std::floor(p.y * grid_height));
  int col = static_cast<int>(std::floor(p.x * grid_width));
  row = std::clamp(row, 0, grid_height - 1);
  col = std::clamp(col, 0, grid_width - 1);
  return {row, col};
}

GridCell point_to_cell(const ImagePoint& p, const FeatureMap& fm) {
  return point_to_cell(p, fm.height, fm.width);
}

ImagePoint cell_to_point(int row, int col, int grid_height, int grid_width) {
  if (row < 0 || row >= grid_height || col < 0 || col >= grid_width) {
    throw PreconditionError("cell (" + std::to_string(row) + "," + std::to_string(col) +
                            ") outside " + std::to_string(grid_height) + "x" + std::to_string(grid_width) + " grid");
  }
  return {(col + 0.5) / grid_width, (row + 0.5) / grid_height, PointLabel::Positive};
}

ImagePoint cell_to_point(int row, int col, const FeatureMap& fm) {
  return cell_to_point(row, col, fm.height, fm.width);
}

double mask_iou(const BinaryMask& a, const BinaryMask& b) {
  a.validate();
  b.validate();
  if (a.height != b.height || a.width != b.width) {
    throw PreconditionError("mask_iou dimension mismatch");
  }
  std::size_t inter = 0;
  std::size_t uni = 0;
  for (std::size_t i = 0; i < a.values.size(); ++i) {
    inter += a.values[i] & b.values[i];
    uni += a.values[i] | b.values[i];
  }
  if (uni == 0) return 1.0;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

}  // namespace covp
