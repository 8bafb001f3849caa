#include "covp/metrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <numeric>

#include <nlohmann/json.hpp>

#include "covp/errors.hpp"

namespace covp {

namespace {

constexpr double kEps = 2.2204460492503131e-16;  // 2^-52
constexpr std::int64_t kFar = std::numeric_limits<std::int64_t>::max() / 4;

void check_dims(const SoftMask& pred, const BinaryMask& gt) {
  pred.validate();
  gt.validate();
  if (pred.height != gt.height || pred.width != gt.width) {
    throw PreconditionError("prediction/ground-truth dimension mismatch");
  }
}

// Deterministic sum regardless of thread count: per-row partials folded in
// row order.
template <typename RowFn>
double row_folded_sum(int height, RowFn&& fn) {
  std::vector<double> partial(static_cast<size_t>(height), 0.0);
#pragma omp parallel for schedule(static)
  for (int r = 0; r < height; ++r) partial[r] = fn(r);
  double total = 0.0;
  for (int r = 0; r < height; ++r) total += partial[r];
  return total;
}

}  // namespace

double mae(const SoftMask& pred, const BinaryMask& gt) {
  check_dims(pred, gt);
  const int h = pred.height, w = pred.width;
  double total = row_folded_sum(h, [&](int r) {
    double s = 0.0;
    for (int c = 0; c < w; ++c) {
      s += std::abs(static_cast<double>(pred.at(r, c)) - static_cast<double>(gt.at(r, c)));
    }
    return s;
  });
  return total / (static_cast<double>(h) * w);
}

DistanceField euclidean_distance_field(const BinaryMask& fg, const std::vector<double>& values) {
  fg.validate();
  const int h = fg.height, w = fg.width;
  if (values.size() != static_cast<size_t>(h) * w) {
    throw PreconditionError("distance field value plane has wrong size");
  }
  if (fg.foreground_count() == 0) throw PreconditionError("distance field needs a nonempty foreground");

  // Pass 1, per column: squared distance to the nearest foreground row and
  // the min of `values` over the rows achieving it.
  std::vector<std::int64_t> col_d2(static_cast<size_t>(h) * w, kFar);
  std::vector<double> col_v(static_cast<size_t>(h) * w, 0.0);
#pragma omp parallel for schedule(static)
  for (int c = 0; c < w; ++c) {
    std::int64_t down = kFar;  // rows since the last foreground above (inclusive)
    double down_v = 0.0;
    for (int r = 0; r < h; ++r) {
      if (fg.at(r, c)) {
        down = 0;
        down_v = values[static_cast<size_t>(r) * w + c];
      } else if (down != kFar) {
        ++down;
      }
      col_d2[static_cast<size_t>(r) * w + c] = down == kFar ? kFar : down * down;
      col_v[static_cast<size_t>(r) * w + c] = down_v;
    }
    std::int64_t up = kFar;
    double up_v = 0.0;
    for (int r = h - 1; r >= 0; --r) {
      if (fg.at(r, c)) {
        up = 0;
        up_v = values[static_cast<size_t>(r) * w + c];
      } else if (up != kFar) {
        ++up;
      }
      if (up == kFar) continue;
      const size_t i = static_cast<size_t>(r) * w + c;
      const std::int64_t d2 = up * up;
      if (d2 < col_d2[i]) {
        col_d2[i] = d2;
        col_v[i] = up_v;
      } else if (d2 == col_d2[i]) {
        col_v[i] = std::min(col_v[i], up_v);
      }
    }
  }

  // Pass 2, per row: outward column scan. The scan stops once the column
  // offset alone exceeds the best squared distance found so far.
  DistanceField field;
  field.dist.resize(static_cast<size_t>(h) * w);
  field.fill_value.resize(static_cast<size_t>(h) * w);
#pragma omp parallel for schedule(static)
  for (int r = 0; r < h; ++r) {
    const size_t row_off = static_cast<size_t>(r) * w;
    for (int c = 0; c < w; ++c) {
      std::int64_t best = kFar;
      double best_v = 0.0;
      for (std::int64_t d = 0;; ++d) {
        const std::int64_t dd = d * d;
        if (dd > best) break;
        bool any = false;
        for (int side = 0; side < 2; ++side) {
          const int cc = side == 0 ? c - static_cast<int>(d) : c + static_cast<int>(d);
          if (cc < 0 || cc >= w) continue;
          if (side == 1 && d == 0) continue;
          any = true;
          const std::int64_t base = col_d2[row_off + cc];
          if (base == kFar) continue;
          const std::int64_t total = dd + base;
          if (total < best) {
            best = total;
            best_v = col_v[row_off + cc];
          } else if (total == best) {
            best_v = std::min(best_v, col_v[row_off + cc]);
          }
        }
        if (!any) break;  // both sides ran off the grid; no candidates remain
      }
      field.dist[row_off + c] = std::sqrt(static_cast<double>(best));
      field.fill_value[row_off + c] = best_v;
    }
  }
  return field;
}

namespace {

// 1D half of the 7x7 sigma-5 kernel, normalized so the separable product
// equals the normalized 2D kernel.
std::array<double, 7> gaussian7_half() {
  std::array<double, 7> k{};
  double sum = 0.0;
  for (int i = 0; i < 7; ++i) {
    const double d = i - 3;
    k[i] = std::exp(-(d * d) / (2.0 * 25.0));
    sum += k[i];
  }
  for (auto& v : k) v /= sum;
  return k;
}

// Separable 7x7 correlation with zero padding outside the image.
std::vector<double> gaussian7_filter(const std::vector<double>& src, int h, int w) {
  static const std::array<double, 7> k = gaussian7_half();
  std::vector<double> tmp(src.size(), 0.0);
#pragma omp parallel for schedule(static)
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      double s = 0.0;
      for (int i = -3; i <= 3; ++i) {
        const int cc = c + i;
        if (cc < 0 || cc >= w) continue;
        s += k[i + 3] * src[static_cast<size_t>(r) * w + cc];
      }
      tmp[static_cast<size_t>(r) * w + c] = s;
    }
  }
  std::vector<double> out(src.size(), 0.0);
#pragma omp parallel for schedule(static)
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      double s = 0.0;
      for (int i = -3; i <= 3; ++i) {
        const int rr = r + i;
        if (rr < 0 || rr >= h) continue;
        s += k[i + 3] * tmp[static_cast<size_t>(rr) * w + c];
      }
      out[static_cast<size_t>(r) * w + c] = s;
    }
  }
  return out;
}

}  // namespace

double weighted_fbeta(const SoftMask& pred, const BinaryMask& gt) {
  check_dims(pred, gt);
  const int h = pred.height, w = pred.width;
  const size_t n = static_cast<size_t>(h) * w;
  const std::size_t fg_count = gt.foreground_count();
  if (fg_count == 0) {
    throw PreconditionError("weighted F-measure undefined for empty ground truth");
  }

  std::vector<double> err(n);
#pragma omp parallel for schedule(static)
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      const size_t i = static_cast<size_t>(r) * w + c;
      err[i] = std::abs(static_cast<double>(pred.at(r, c)) - static_cast<double>(gt.at(r, c)));
    }
  }

  const DistanceField field = euclidean_distance_field(gt, err);

  // Background pixels take the error of their nearest foreground pixel so the
  // Gaussian window sees a continued error field across the boundary.
  std::vector<double> err_t(n);
#pragma omp parallel for schedule(static)
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      const size_t i = static_cast<size_t>(r) * w + c;
      err_t[i] = gt.at(r, c) ? err[i] : field.fill_value[i];
    }
  }

  const std::vector<double> err_smooth = gaussian7_filter(err_t, h, w);

  const double decay = std::log(0.5) / 5.0;
  double sum_ew_fg = row_folded_sum(h, [&](int r) {
    double s = 0.0;
    for (int c = 0; c < w; ++c) {
      if (!gt.at(r, c)) continue;
      const size_t i = static_cast<size_t>(r) * w + c;
      s += std::min(err[i], err_smooth[i]);
    }
    return s;
  });
  double sum_ew_bg = row_folded_sum(h, [&](int r) {
    double s = 0.0;
    for (int c = 0; c < w; ++c) {
      if (gt.at(r, c)) continue;
      const size_t i = static_cast<size_t>(r) * w + c;
      const double importance = 2.0 - std::exp(decay * field.dist[i]);
      s += err[i] * importance;
    }
    return s;
  });

  const double tp_w = static_cast<double>(fg_count) - sum_ew_fg;
  const double fp_w = sum_ew_bg;
  const double recall = 1.0 - sum_ew_fg / static_cast<double>(fg_count);
  const double precision = tp_w / (kEps + tp_w + fp_w);
  return 2.0 * recall * precision / (kEps + recall + precision);  // beta^2 = 1
}

namespace {

struct Moments {
  double mean = 0.0;
  double var = 0.0;  // sample variance with the reference's N-1+eps divisor
  int n = 0;
};

double region_ssim(const SoftMask& pred, const BinaryMask& gt, int r0, int r1, int c0, int c1) {
  const std::int64_t n = static_cast<std::int64_t>(r1 - r0) * (c1 - c0);
  if (n <= 0) return 1.0;  // empty quadrant carries zero weight
  double sx = 0.0, sy = 0.0;
  for (int r = r0; r < r1; ++r) {
    for (int c = c0; c < c1; ++c) {
      sx += pred.at(r, c);
      sy += gt.at(r, c);
    }
  }
  const double mx = sx / static_cast<double>(n);
  const double my = sy / static_cast<double>(n);
  double vxx = 0.0, vyy = 0.0, vxy = 0.0;
  for (int r = r0; r < r1; ++r) {
    for (int c = c0; c < c1; ++c) {
      const double dx = pred.at(r, c) - mx;
      const double dy = gt.at(r, c) - my;
      vxx += dx * dx;
      vyy += dy * dy;
      vxy += dx * dy;
    }
  }
  const double denom = static_cast<double>(n) - 1.0 + kEps;
  const double sigma_x2 = vxx / denom;
  const double sigma_y2 = vyy / denom;
  const double sigma_xy = vxy / denom;
  const double alpha = 4.0 * mx * my * sigma_xy;
  const double beta = (mx * mx + my * my) * (sigma_x2 + sigma_y2);
  if (alpha != 0.0) return alpha / (beta + kEps);
  return beta == 0.0 ? 1.0 : 0.0;
}

double object_score(double mean, double stddev) {
  return 2.0 * mean / (mean * mean + 1.0 + stddev + kEps);
}

}  // namespace

double s_measure(const SoftMask& pred, const BinaryMask& gt) {
  check_dims(pred, gt);
  const int h = pred.height, w = pred.width;
  const double n = static_cast<double>(h) * w;
  const std::size_t fg_count = gt.foreground_count();

  const double gt_mean = static_cast<double>(fg_count) / n;
  const double pred_mean =
      row_folded_sum(h, [&](int r) {
        double s = 0.0;
        for (int c = 0; c < w; ++c) s += pred.at(r, c);
        return s;
      }) /
      n;

  if (fg_count == 0) return 1.0 - pred_mean;
  if (fg_count == static_cast<std::size_t>(h) * w) return pred_mean;

  // Object term: mean/contrast statistics of the prediction inside the
  // foreground and of its complement inside the background.
  const std::int64_t bg_count = static_cast<std::int64_t>(h) * w - static_cast<std::int64_t>(fg_count);
  double sum_fg = row_folded_sum(h, [&](int r) {
    double s = 0.0;
    for (int c = 0; c < w; ++c) {
      if (gt.at(r, c)) s += pred.at(r, c);
    }
    return s;
  });
  double sum_bg = row_folded_sum(h, [&](int r) {
    double s = 0.0;
    for (int c = 0; c < w; ++c) {
      if (!gt.at(r, c)) s += 1.0 - pred.at(r, c);
    }
    return s;
  });
  const double mean_fg = sum_fg / static_cast<double>(fg_count);
  const double mean_bg = sum_bg / static_cast<double>(bg_count);
  double ss_fg = row_folded_sum(h, [&](int r) {
    double s = 0.0;
    for (int c = 0; c < w; ++c) {
      if (!gt.at(r, c)) continue;
      const double d = pred.at(r, c) - mean_fg;
      s += d * d;
    }
    return s;
  });
  double ss_bg = row_folded_sum(h, [&](int r) {
    double s = 0.0;
    for (int c = 0; c < w; ++c) {
      if (gt.at(r, c)) continue;
      const double d = (1.0 - pred.at(r, c)) - mean_bg;
      s += d * d;
    }
    return s;
  });
  const double std_fg = fg_count > 1 ? std::sqrt(ss_fg / (static_cast<double>(fg_count) - 1.0)) : 0.0;
  const double std_bg = bg_count > 1 ? std::sqrt(ss_bg / (static_cast<double>(bg_count) - 1.0)) : 0.0;
  const double s_object = gt_mean * object_score(mean_fg, std_fg) + (1.0 - gt_mean) * object_score(mean_bg, std_bg);

  // Region term: SSIM over the four blocks around the foreground centroid
  // (1-based, rounded half away from zero), weighted by block area.
  double cx_acc = 0.0, cy_acc = 0.0;
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      if (!gt.at(r, c)) continue;
      cx_acc += c + 1;
      cy_acc += r + 1;
    }
  }
  const int cx = static_cast<int>(std::lround(cx_acc / static_cast<double>(fg_count)));
  const int cy = static_cast<int>(std::lround(cy_acc / static_cast<double>(fg_count)));

  const double area = n;
  const double w1 = static_cast<double>(cx) * cy / area;
  const double w2 = static_cast<double>(w - cx) * cy / area;
  const double w3 = static_cast<double>(cx) * (h - cy) / area;
  const double w4 = 1.0 - w1 - w2 - w3;
  const double q1 = region_ssim(pred, gt, 0, cy, 0, cx);
  const double q2 = region_ssim(pred, gt, 0, cy, cx, w);
  const double q3 = region_ssim(pred, gt, cy, h, 0, cx);
  const double q4 = region_ssim(pred, gt, cy, h, cx, w);
  const double s_region = w1 * q1 + w2 * q2 + w3 * q3 + w4 * q4;

  return std::max(0.0, 0.5 * s_object + 0.5 * s_region);
}

ImageScore score_pair(const SoftMask& pred, const BinaryMask& gt, const std::string& image_id) {
  ImageScore score;
  score.image_id = image_id;
  score.mae = mae(pred, gt);
  score.f_beta_w = weighted_fbeta(pred, gt);
  score.s_alpha = s_measure(pred, gt);
  return score;
}

EvalReport make_report(const std::string& dataset_id, std::vector<ImageScore> scores,
                       std::vector<SkippedImage> skipped, int n_failed) {
  std::sort(scores.begin(), scores.end(),
            [](const ImageScore& a, const ImageScore& b) { return a.image_id < b.image_id; });
  std::sort(skipped.begin(), skipped.end(),
            [](const SkippedImage& a, const SkippedImage& b) { return a.image_id < b.image_id; });
  EvalReport report;
  report.dataset_id = dataset_id;
  report.n_images = static_cast<int>(scores.size());
  report.per_image = std::move(scores);
  report.skipped = std::move(skipped);
  report.n_failed = n_failed;
  if (!report.per_image.empty()) {
    double sm = 0.0, sf = 0.0, ss = 0.0;
    for (const auto& s : report.per_image) {
      sm += s.mae;
      sf += s.f_beta_w;
      ss += s.s_alpha;
    }
    const double n = static_cast<double>(report.per_image.size());
    report.mean_mae = sm / n;
    report.mean_f_beta_w = sf / n;
    report.mean_s_alpha = ss / n;
  }
  return report;
}

EvalReport evaluate_pairs(const std::string& dataset_id, const std::vector<EvalPair>& pairs) {
  if (pairs.empty()) throw PreconditionError("evaluate_pairs needs at least one pair");
  std::vector<ImageScore> scores;
  std::vector<SkippedImage> skipped;
  for (const auto& p : pairs) {
    if (p.gt.foreground_count() == 0) {
      skipped.push_back({p.image_id, "empty ground truth; weighted F-measure undefined"});
      continue;
    }
    scores.push_back(score_pair(p.pred, p.gt, p.image_id));
  }
  return make_report(dataset_id, std::move(scores), std::move(skipped));
}

std::string EvalReport::to_json() const {
  nlohmann::ordered_json j;
  j["dataset_id"] = dataset_id;
  j["n_images"] = n_images;
  j["n_failed"] = n_failed;
  j["mean_f_beta_w"] = mean_f_beta_w;
  j["mean_s_alpha"] = mean_s_alpha;
  j["mean_mae"] = mean_mae;
  j["per_image"] = nlohmann::ordered_json::array();
  for (const auto& s : per_image) {
    j["per_image"].push_back({{"image_id", s.image_id},
                              {"f_beta_w", s.f_beta_w},
                              {"s_alpha", s.s_alpha},
                              {"mae", s.mae}});
  }
  j["skipped"] = nlohmann::ordered_json::array();
  for (const auto& s : skipped) {
    j["skipped"].push_back({{"image_id", s.image_id}, {"reason", s.reason}});
  }
  return j.dump(2);
}

EvalReport EvalReport::from_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  EvalReport report;
  report.dataset_id = j.at("dataset_id").get<std::string>();
  report.n_images = j.at("n_images").get<int>();
  report.n_failed = j.value("n_failed", 0);
  report.mean_f_beta_w = j.at("mean_f_beta_w").get<double>();
  report.mean_s_alpha = j.at("mean_s_alpha").get<double>();
  report.mean_mae = j.at("mean_mae").get<double>();
  for (const auto& e : j.at("per_image")) {
    report.per_image.push_back({e.at("image_id").get<std::string>(), e.at("mae").get<double>(),
                                e.at("f_beta_w").get<double>(), e.at("s_alpha").get<double>()});
  }
  for (const auto& e : j.at("skipped")) {
    report.skipped.push_back({e.at("image_id").get<std::string>(), e.at("reason").get<std::string>()});
  }
  return report;
}

std::string EvalReport::to_table() const {
  std::string out;
  char line[256];
  std::snprintf(line, sizeof(line), "# dataset: %s  images: %d  skipped: %zu  failed: %d\n",
                dataset_id.c_str(), n_images, skipped.size(), n_failed);
  out += line;
  std::snprintf(line, sizeof(line), "%-32s %8s %8s %8s\n", "image_id", "Fbw", "Sa", "MAE");
  out += line;
  for (const auto& s : per_image) {
    std::snprintf(line, sizeof(line), "%-32s %8.4f %8.4f %8.4f\n", s.image_id.c_str(), s.f_beta_w,
                  s.s_alpha, s.mae);
    out += line;
  }
  std::snprintf(line, sizeof(line), "%-32s %8.4f %8.4f %8.4f\n", "mean", mean_f_beta_w, mean_s_alpha,
                mean_mae);
  out += line;
  return out;
}

}  // namespace covp
