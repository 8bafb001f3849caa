#pragma once

#include <optional>
#include <string>
#include <vector>

#include "covp/geometry.hpp"

namespace covp {

struct ImageScore {
  std::string image_id;
  double mae = 0.0;
  double f_beta_w = 0.0;
  double s_alpha = 0.0;
};

struct SkippedImage {
  std::string image_id;
  std::string reason;
};

struct EvalReport {
  std::string dataset_id;
  int n_images = 0;
  double mean_mae = 0.0;
  double mean_f_beta_w = 0.0;
  double mean_s_alpha = 0.0;
  std::vector<ImageScore> per_image;  // sorted by image_id
  std::vector<SkippedImage> skipped;
  int n_failed = 0;

  std::string to_json() const;
  static EvalReport from_json(const std::string& text);
  // Aligned table, columns in F_beta_w / S_alpha / MAE order.
  std::string to_table() const;
};

// Mean absolute per-pixel error between a soft prediction and binary truth.
double mae(const SoftMask& pred, const BinaryMask& gt);

// Weighted F-measure for foreground maps. Errors are dependency-weighted: the
// foreground error field is softened by a 7x7 sigma-5 Gaussian neighborhood
// minimum, background errors take the error of the nearest foreground pixel
// and are importance-weighted by 2 - exp(ln(0.5)/5 * d) with d the exact
// Euclidean distance to the foreground. beta^2 = 1.
//
// Ground truth must contain at least one foreground pixel.
double weighted_fbeta(const SoftMask& pred, const BinaryMask& gt);

// Structure measure: 0.5 * object term + 0.5 * region term. The region term
// is a per-quadrant SSIM around the ground-truth centroid; all-empty or
// all-full ground truth degenerates to a score derived from the mean
// prediction.
double s_measure(const SoftMask& pred, const BinaryMask& gt);

ImageScore score_pair(const SoftMask& pred, const BinaryMask& gt, const std::string& image_id);

struct EvalPair {
  SoftMask pred;
  BinaryMask gt;
  std::string image_id;
};

EvalReport make_report(const std::string& dataset_id, std::vector<ImageScore> scores,
                       std::vector<SkippedImage> skipped, int n_failed = 0);
EvalReport evaluate_pairs(const std::string& dataset_id, const std::vector<EvalPair>& pairs);

// Exact Euclidean distance transform. For every pixel: the distance to the
// nearest foreground pixel and the minimum of `values` over all foreground
// pixels at exactly that distance. The min-over-ties rule keeps the fill
// independent of scan order and symmetric under grid transposition.
struct DistanceField {
  std::vector<double> dist;        // per pixel, 0 on foreground
  std::vector<double> fill_value;  // per pixel, values[] at the nearest foreground
};
DistanceField euclidean_distance_field(const BinaryMask& fg, const std::vector<double>& values);

}  // namespace covp
