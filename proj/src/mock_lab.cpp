#include "covp/mock_lab.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <deque>
#include <limits>
#include <set>

#include <opencv2/core.hpp>

#include "covp/errors.hpp"

namespace covp::mocklab {

namespace {

std::uint64_t splitmix_next(std::uint64_t& state) {
  state += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

constexpr double kPi = 3.14159265358979323846;

}  // namespace

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  std::uint64_t state = a;
  const std::uint64_t x = splitmix_next(state);
  std::uint64_t state2 = x ^ (b + 0x9e3779b97f4a7c15ULL);
  return splitmix_next(state2);
}

std::uint64_t hash64(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

double uniform01(std::uint64_t& state) {
  return static_cast<double>(splitmix_next(state) >> 11) * 0x1.0p-53;
}

double gaussian(std::uint64_t& state) {
  const double u1 = (static_cast<double>(splitmix_next(state) >> 11) + 1.0) * 0x1.0p-53;
  const double u2 = uniform01(state);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * kPi * u2);
}

namespace {

std::vector<float> random_unit_vector(std::uint64_t& state, int dim) {
  std::vector<double> v(static_cast<size_t>(dim));
  double norm2 = 0.0;
  do {
    norm2 = 0.0;
    for (auto& x : v) {
      x = gaussian(state);
      norm2 += x * x;
    }
  } while (norm2 == 0.0);
  const double inv = 1.0 / std::sqrt(norm2);
  std::vector<float> out(static_cast<size_t>(dim));
  for (int i = 0; i < dim; ++i) out[i] = static_cast<float>(v[i] * inv);
  return out;
}

struct Ellipse {
  double cx, cy, a, b, theta;

  bool contains(double x, double y) const {
    const double dx = x - cx;
    const double dy = y - cy;
    const double u = dx * std::cos(theta) + dy * std::sin(theta);
    const double v = -dx * std::sin(theta) + dy * std::cos(theta);
    return (u * u) / (a * a) + (v * v) / (b * b) <= 1.0;
  }
};

// Pixel centers map through the same normalized-coordinate convention as
// point_to_cell, so the planted grid and the geometry helpers agree even when
// the image size is not a patch multiple.
GridCell cell_of_pixel(int y, int x, int image_size, int grid_h, int grid_w) {
  int row = static_cast<int>(std::floor((y + 0.5) / image_size * grid_h));
  int col = static_cast<int>(std::floor((x + 0.5) / image_size * grid_w));
  row = std::clamp(row, 0, grid_h - 1);
  col = std::clamp(col, 0, grid_w - 1);
  return {row, col};
}

}  // namespace

BoundingBox PlantedScene::gt_box() const {
  int min_x = gt.width, max_x = -1, min_y = gt.height, max_y = -1;
  for (int r = 0; r < gt.height; ++r) {
    for (int c = 0; c < gt.width; ++c) {
      if (!gt.at(r, c)) continue;
      min_x = std::min(min_x, c);
      max_x = std::max(max_x, c);
      min_y = std::min(min_y, r);
      max_y = std::max(max_y, r);
    }
  }
  if (max_x < 0) throw PreconditionError("scene has an empty foreground");
  return {static_cast<double>(min_x) / gt.width, static_cast<double>(min_y) / gt.height,
          static_cast<double>(max_x + 1) / gt.width, static_cast<double>(max_y + 1) / gt.height};
}

bool PlantedScene::is_fg_cell(const GridCell& cell) const {
  return std::binary_search(fg_cells.begin(), fg_cells.end(), cell);
}

PlantedScene gen_scene(std::uint64_t seed, const SceneParams& params) {
  if (params.image_size < params.patch_size || params.patch_size < 1) {
    throw PreconditionError("scene image size must cover at least one patch");
  }
  if (params.feature_dim < 2) throw PreconditionError("feature_dim must be >= 2");
  if (params.size_frac <= 0.0) throw PreconditionError("size_frac must be positive");
  if (params.max_cos < -1.0 || params.max_cos > 1.0) throw PreconditionError("max_cos outside [-1,1]");
  if (params.shape != "ellipse" && params.shape != "blob") {
    throw PreconditionError("unknown scene shape: " + params.shape);
  }

  PlantedScene scene;
  scene.params = params;
  scene.seed = seed;
  const int size = params.image_size;
  std::uint64_t rng = mix_seed(seed, 0x636f7670ULL);  // fixed salt

  // Foreground geometry.
  scene.gt = BinaryMask::filled(size, size, 0);
  if (params.size_frac >= 1.0) {
    std::fill(scene.gt.values.begin(), scene.gt.values.end(), std::uint8_t{1});
  } else {
    std::vector<Ellipse> parts;
    const double area_target = params.size_frac * size * size;
    const double aspect = 0.7 + 0.6 * uniform01(rng);
    double a = std::sqrt(area_target * aspect / kPi);
    double b = area_target / (kPi * a);
    const double margin = 6.0;
    const double cap = (size - 2.0 * margin) / 2.0;
    if (a > cap || b > cap) {
      const double s = cap / std::max(a, b);
      a *= s;
      b *= s;
    }
    const double reach = std::max(a, b);
    const double lo = margin + reach, hi = size - margin - reach;
    const double cx = lo + (hi - lo) * uniform01(rng);
    const double cy = lo + (hi - lo) * uniform01(rng);
    const double theta = kPi * uniform01(rng);
    if (params.shape == "ellipse") {
      parts.push_back({cx, cy, a, b, theta});
    } else {
      for (int i = 0; i < 3; ++i) {
        const double scale = 0.55 + 0.25 * uniform01(rng);
        const double jx = (uniform01(rng) - 0.5) * a;
        const double jy = (uniform01(rng) - 0.5) * b;
        const double jt = kPi * uniform01(rng);
        parts.push_back({std::clamp(cx + jx, lo, hi), std::clamp(cy + jy, lo, hi), a * scale,
                         b * scale, jt});
      }
    }
    for (int y = 0; y < size; ++y) {
      for (int x = 0; x < size; ++x) {
        for (const auto& e : parts) {
          if (e.contains(x + 0.5, y + 0.5)) {
            scene.gt.at(y, x) = 1;
            break;
          }
        }
      }
    }
  }
  if (scene.gt.foreground_count() == 0) throw Error("scene generation produced an empty foreground");

  // Majority-foreground cells.
  const int grid_h = size / params.patch_size;
  const int grid_w = size / params.patch_size;
  std::vector<int> fg_votes(static_cast<size_t>(grid_h) * grid_w, 0);
  std::vector<int> votes(static_cast<size_t>(grid_h) * grid_w, 0);
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      const GridCell cell = cell_of_pixel(y, x, size, grid_h, grid_w);
      const size_t i = static_cast<size_t>(cell.row) * grid_w + cell.col;
      ++votes[i];
      if (scene.gt.at(y, x)) ++fg_votes[i];
    }
  }
  for (int r = 0; r < grid_h; ++r) {
    for (int c = 0; c < grid_w; ++c) {
      const size_t i = static_cast<size_t>(r) * grid_w + c;
      if (2 * fg_votes[i] > votes[i]) scene.fg_cells.push_back({r, c});
    }
  }
  std::sort(scene.fg_cells.begin(), scene.fg_cells.end());

  // Feature directions with a pinned cosine, then per-cell noise.
  scene.fg_dir = random_unit_vector(rng, params.feature_dim);
  std::vector<float> ortho = random_unit_vector(rng, params.feature_dim);
  double proj = 0.0;
  for (int d = 0; d < params.feature_dim; ++d) proj += static_cast<double>(ortho[d]) * scene.fg_dir[d];
  double norm2 = 0.0;
  std::vector<double> e2(static_cast<size_t>(params.feature_dim));
  for (int d = 0; d < params.feature_dim; ++d) {
    e2[d] = ortho[d] - proj * scene.fg_dir[d];
    norm2 += e2[d] * e2[d];
  }
  const double inv = 1.0 / std::sqrt(norm2);
  const double sin_part = std::sqrt(std::max(0.0, 1.0 - params.max_cos * params.max_cos));
  scene.bg_dir.resize(static_cast<size_t>(params.feature_dim));
  for (int d = 0; d < params.feature_dim; ++d) {
    scene.bg_dir[d] = static_cast<float>(params.max_cos * scene.fg_dir[d] + sin_part * e2[d] * inv);
  }
  double cosine = 0.0;
  for (int d = 0; d < params.feature_dim; ++d) {
    cosine += static_cast<double>(scene.fg_dir[d]) * scene.bg_dir[d];
  }
  scene.dir_cosine = cosine;

  scene.features.height = grid_h;
  scene.features.width = grid_w;
  scene.features.dim = params.feature_dim;
  scene.features.patch_size = params.patch_size;
  scene.features.data.resize(static_cast<size_t>(grid_h) * grid_w * params.feature_dim);
  for (int r = 0; r < grid_h; ++r) {
    for (int c = 0; c < grid_w; ++c) {
      const bool fg = scene.is_fg_cell({r, c});
      auto cell = scene.features.cell(r, c);
      const auto& base = fg ? scene.fg_dir : scene.bg_dir;
      for (int d = 0; d < params.feature_dim; ++d) {
        double v = base[d];
        if (params.noise_sigma > 0.0) v += params.noise_sigma * gaussian(rng);
        cell[d] = static_cast<float>(v);
      }
    }
  }

  // Low-contrast rendering: the foreground color sits close to the
  // background, with seeded speckle on top.
  cv::Mat bgr(size, size, CV_8UC3);
  for (int y = 0; y < size; ++y) {
    auto* row = bgr.ptr<cv::Vec3b>(y);
    for (int x = 0; x < size; ++x) {
      const bool fg = scene.gt.at(y, x) != 0;
      const int base_b = fg ? 102 : 96;
      const int base_g = fg ? 115 : 110;
      const int base_r = fg ? 100 : 95;
      const int nb = static_cast<int>(std::floor(uniform01(rng) * 13.0)) - 6;
      const int ng = static_cast<int>(std::floor(uniform01(rng) * 13.0)) - 6;
      const int nr = static_cast<int>(std::floor(uniform01(rng) * 13.0)) - 6;
      row[x] = cv::Vec3b(static_cast<uchar>(std::clamp(base_b + nb, 0, 255)),
                         static_cast<uchar>(std::clamp(base_g + ng, 0, 255)),
                         static_cast<uchar>(std::clamp(base_r + nr, 0, 255)));
    }
  }
  scene.image = Image::from_mat(bgr);
  return scene;
}

void MockWorld::add(PlantedScene scene) {
  const std::string key = scene.image.sha256;
  if (scenes_.count(key)) throw PreconditionError("duplicate scene image hash");
  order_.push_back(key);
  scenes_.emplace(key, std::move(scene));
}

const PlantedScene* MockWorld::find(const std::string& image_sha256) const {
  const auto it = scenes_.find(image_sha256);
  return it == scenes_.end() ? nullptr : &it->second;
}

const PlantedScene& MockWorld::at(const std::string& image_sha256) const {
  const auto* scene = find(image_sha256);
  if (!scene) throw ServiceError("mock world does not know this image", /*retriable=*/false);
  return *scene;
}

namespace {

class MockDetector final : public DetectorService {
 public:
  MockDetector(std::shared_ptr<const MockWorld> world, MockDetectorParams params)
      : world_(std::move(world)), params_(params) {}

  ServiceInfo describe() const override { return {"mock-detector", 8}; }

  std::string query(const Image& image, const std::string& prompt) override {
    if (prompt.empty()) throw PreconditionError("empty prompt");
    const PlantedScene& scene = world_->at(image.sha256);
    std::uint64_t rng = mix_seed(mix_seed(params_.seed, scene.seed), hash64(prompt));
    if (uniform01(rng) < params_.miss_prob) {
      return "I cannot find any camouflaged object in this image.";
    }
    BoundingBox box = scene.gt_box();
    double v[4] = {box.x1, box.y1, box.x2, box.y2};
    for (double& c : v) {
      c += (2.0 * uniform01(rng) - 1.0) * params_.box_noise;
      c = std::clamp(c, 0.0, 1.0);
    }
    if (v[0] > v[2]) std::swap(v[0], v[2]);
    if (v[1] > v[3]) std::swap(v[1], v[3]);
    char buf[160];
    std::snprintf(buf, sizeof(buf), "The camouflaged object is located at [%.6f,%.6f,%.6f,%.6f].",
                  v[0], v[1], v[2], v[3]);
    return buf;
  }

 private:
  std::shared_ptr<const MockWorld> world_;
  MockDetectorParams params_;
};

class MockExtractor final : public FeatureExtractorService {
 public:
  explicit MockExtractor(std::shared_ptr<const MockWorld> world) : world_(std::move(world)) {}

  ServiceInfo describe() const override { return {"mock-extractor", 8}; }

  FeatureMap extract(const Image& image, const ResizePolicy&) override {
    return world_->at(image.sha256).features;
  }

 private:
  std::shared_ptr<const MockWorld> world_;
};

class MockSegmenter final : public SegmenterService {
 public:
  MockSegmenter(std::shared_ptr<const MockWorld> world, double threshold)
      : world_(std::move(world)), threshold_(threshold) {}

  ServiceInfo describe() const override { return {"mock-segmenter", 8}; }

  std::vector<MaskCandidate> segment(const Image& image, const std::vector<ImagePoint>& points,
                                     const std::optional<BoundingBox>& box) override {
    if (points.empty() && !box) throw PreconditionError("segment needs at least one point or a box");
    const PlantedScene& scene = world_->at(image.sha256);
    const FeatureMap& fm = scene.features;

    std::vector<GridCell> seeds;
    for (const auto& p : points) {
      if (p.label == PointLabel::Positive) seeds.push_back(point_to_cell(p, fm));
    }
    if (seeds.empty() && box) seeds.push_back(point_to_cell(bbox_center(*box), fm));
    if (seeds.empty()) throw PreconditionError("segment needs at least one positive prompt");

    // Mean prompt feature, then cosine per cell.
    std::vector<double> mean(static_cast<size_t>(fm.dim), 0.0);
    for (const auto& s : seeds) {
      const auto cell = fm.cell(s.row, s.col);
      for (int d = 0; d < fm.dim; ++d) mean[d] += cell[d];
    }
    for (auto& v : mean) v /= static_cast<double>(seeds.size());
    double mean_norm2 = 0.0;
    for (double v : mean) mean_norm2 += v * v;

    std::vector<double> cosine(static_cast<size_t>(fm.cells()), -1.0);
    if (mean_norm2 > 0.0) {
      const double mean_norm = std::sqrt(mean_norm2);
      for (int i = 0; i < fm.cells(); ++i) {
        const float* cell = fm.data.data() + static_cast<size_t>(i) * fm.dim;
        double dot = 0.0, n2 = 0.0;
        for (int d = 0; d < fm.dim; ++d) {
          dot += static_cast<double>(cell[d]) * mean[d];
          n2 += static_cast<double>(cell[d]) * cell[d];
        }
        if (n2 > 0.0) cosine[i] = dot / (std::sqrt(n2) * mean_norm);
      }
    }

    // 4-connected flood fill. Seed cells are always part of the mask; the
    // threshold gates expansion only.
    std::vector<char> filled(static_cast<size_t>(fm.cells()), 0);
    std::deque<GridCell> queue;
    for (const auto& s : seeds) {
      const size_t i = static_cast<size_t>(s.row) * fm.width + s.col;
      if (!filled[i]) {
        filled[i] = 1;
        queue.push_back(s);
      }
    }
    while (!queue.empty()) {
      const GridCell cell = queue.front();
      queue.pop_front();
      const int dr[4] = {-1, 1, 0, 0};
      const int dc[4] = {0, 0, -1, 1};
      for (int k = 0; k < 4; ++k) {
        const int r = cell.row + dr[k], c = cell.col + dc[k];
        if (r < 0 || r >= fm.height || c < 0 || c >= fm.width) continue;
        const size_t i = static_cast<size_t>(r) * fm.width + c;
        if (filled[i] || cosine[i] < threshold_) continue;
        filled[i] = 1;
        queue.push_back({r, c});
      }
    }

    const int size = scene.image.height();
    SoftMask mask = SoftMask::filled(size, size, 0.0f);
    for (int y = 0; y < size; ++y) {
      for (int x = 0; x < size; ++x) {
        const GridCell cell = cell_of_pixel(y, x, size, fm.height, fm.width);
        if (filled[static_cast<size_t>(cell.row) * fm.width + cell.col]) mask.at(y, x) = 1.0f;
      }
    }
    double conf = 0.0;
    int n_filled = 0;
    for (int i = 0; i < fm.cells(); ++i) {
      if (filled[i]) {
        conf += cosine[i];
        ++n_filled;
      }
    }
    conf = n_filled > 0 ? std::clamp(conf / n_filled, 0.0, 1.0) : 0.0;
    return {{std::move(mask), conf}};
  }

 private:
  std::shared_ptr<const MockWorld> world_;
  double threshold_;
};

}  // namespace

std::unique_ptr<DetectorService> make_mock_detector(std::shared_ptr<const MockWorld> world,
                                                    const MockDetectorParams& params) {
  return std::make_unique<MockDetector>(std::move(world), params);
}

std::unique_ptr<FeatureExtractorService> make_mock_extractor(std::shared_ptr<const MockWorld> world) {
  return std::make_unique<MockExtractor>(std::move(world));
}

std::unique_ptr<SegmenterService> make_mock_segmenter(std::shared_ptr<const MockWorld> world,
                                                      double threshold) {
  return std::make_unique<MockSegmenter>(std::move(world), threshold);
}

// ---------------------------------------------------------------------------
// Brute-force references.

std::vector<ScoredCell> oracle_topk(const SimilarityMap& sim, int k) {
  sim.validate();
  if (k < 1) throw PreconditionError("top_k needs k >= 1");
  struct Entry {
    int index;
    float score;
  };
  std::vector<Entry> entries;
  entries.reserve(static_cast<size_t>(sim.cells()));
  for (int i = 0; i < sim.cells(); ++i) entries.push_back({i, sim.scores[i]});
  std::stable_sort(entries.begin(), entries.end(),
                   [](const Entry& a, const Entry& b) { return a.score > b.score; });
  const int take = std::min<int>(k, static_cast<int>(entries.size()));
  std::vector<ScoredCell> out;
  for (int i = 0; i < take; ++i) {
    out.push_back({{entries[i].index / sim.width, entries[i].index % sim.width}, entries[i].score});
  }
  return out;
}

namespace {

constexpr double kOracleEps = 2.2204460492503131e-16;

}  // namespace

double oracle_fbw(const SoftMask& pred, const BinaryMask& gt) {
  pred.validate();
  gt.validate();
  if (pred.height != gt.height || pred.width != gt.width) {
    throw PreconditionError("prediction/ground-truth dimension mismatch");
  }
  const int h = pred.height, w = pred.width;

  std::vector<std::pair<int, int>> fg;
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      if (gt.at(r, c)) fg.emplace_back(r, c);
    }
  }
  if (fg.empty()) throw PreconditionError("weighted F-measure undefined for empty ground truth");

  std::vector<double> err(static_cast<size_t>(h) * w);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      err[static_cast<size_t>(r) * w + c] =
          std::abs(static_cast<double>(pred.at(r, c)) - static_cast<double>(gt.at(r, c)));
    }
  }

  // Exact Euclidean distances by exhaustive search; equidistant nearest
  // foreground pixels contribute the minimum of their error values.
  std::vector<double> dist(static_cast<size_t>(h) * w, 0.0);
  std::vector<double> err_cont(err);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      if (gt.at(r, c)) continue;
      long long best = std::numeric_limits<long long>::max();
      double best_e = 0.0;
      for (const auto& [fr, fc] : fg) {
        const long long dr = fr - r, dc = fc - c;
        const long long d2 = dr * dr + dc * dc;
        if (d2 < best) {
          best = d2;
          best_e = err[static_cast<size_t>(fr) * w + fc];
        } else if (d2 == best) {
          best_e = std::min(best_e, err[static_cast<size_t>(fr) * w + fc]);
        }
      }
      dist[static_cast<size_t>(r) * w + c] = std::sqrt(static_cast<double>(best));
      err_cont[static_cast<size_t>(r) * w + c] = best_e;
    }
  }

  double kernel[7][7];
  double ksum = 0.0;
  for (int dy = -3; dy <= 3; ++dy) {
    for (int dx = -3; dx <= 3; ++dx) {
      kernel[dy + 3][dx + 3] = std::exp(-(dy * dy + dx * dx) / (2.0 * 5.0 * 5.0));
      ksum += kernel[dy + 3][dx + 3];
    }
  }
  for (auto& row : kernel) {
    for (auto& v : row) v /= ksum;
  }

  double sum_ew_fg = 0.0, sum_ew_bg = 0.0;
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      const size_t i = static_cast<size_t>(r) * w + c;
      if (gt.at(r, c)) {
        double smoothed = 0.0;
        for (int dy = -3; dy <= 3; ++dy) {
          for (int dx = -3; dx <= 3; ++dx) {
            const int rr = r + dy, cc = c + dx;
            if (rr < 0 || rr >= h || cc < 0 || cc >= w) continue;  // zero padding
            smoothed += kernel[dy + 3][dx + 3] * err_cont[static_cast<size_t>(rr) * w + cc];
          }
        }
        sum_ew_fg += std::min(err[i], smoothed);
      } else {
        const double importance = 2.0 - std::exp(std::log(0.5) / 5.0 * dist[i]);
        sum_ew_bg += err[i] * importance;
      }
    }
  }

  const double n_fg = static_cast<double>(fg.size());
  const double tp_w = n_fg - sum_ew_fg;
  const double recall = 1.0 - sum_ew_fg / n_fg;
  const double precision = tp_w / (kOracleEps + tp_w + sum_ew_bg);
  return 2.0 * recall * precision / (kOracleEps + recall + precision);
}

namespace {

double oracle_ssim_block(const SoftMask& pred, const BinaryMask& gt, int r0, int r1, int c0, int c1) {
  const long long n = static_cast<long long>(r1 - r0) * (c1 - c0);
  if (n <= 0) return 1.0;
  double mx = 0.0, my = 0.0;
  for (int r = r0; r < r1; ++r) {
    for (int c = c0; c < c1; ++c) {
      mx += pred.at(r, c);
      my += gt.at(r, c);
    }
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (int r = r0; r < r1; ++r) {
    for (int c = c0; c < c1; ++c) {
      sxx += (pred.at(r, c) - mx) * (pred.at(r, c) - mx);
      syy += (gt.at(r, c) - my) * (gt.at(r, c) - my);
      sxy += (pred.at(r, c) - mx) * (gt.at(r, c) - my);
    }
  }
  const double div = static_cast<double>(n) - 1.0 + kOracleEps;
  const double alpha = 4.0 * mx * my * (sxy / div);
  const double beta = (mx * mx + my * my) * (sxx / div + syy / div);
  if (alpha != 0.0) return alpha / (beta + kOracleEps);
  return beta == 0.0 ? 1.0 : 0.0;
}

}  // namespace

double oracle_smeasure(const SoftMask& pred, const BinaryMask& gt) {
  pred.validate();
  gt.validate();
  if (pred.height != gt.height || pred.width != gt.width) {
    throw PreconditionError("prediction/ground-truth dimension mismatch");
  }
  const int h = pred.height, w = pred.width;
  const double n = static_cast<double>(h) * w;

  double pred_mean = 0.0;
  long long n_fg = 0;
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      pred_mean += pred.at(r, c);
      n_fg += gt.at(r, c);
    }
  }
  pred_mean /= n;
  if (n_fg == 0) return 1.0 - pred_mean;
  if (n_fg == static_cast<long long>(h) * w) return pred_mean;

  // Object term.
  const double u = static_cast<double>(n_fg) / n;
  double mean_fg = 0.0, mean_bg = 0.0;
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      if (gt.at(r, c)) {
        mean_fg += pred.at(r, c);
      } else {
        mean_bg += 1.0 - pred.at(r, c);
      }
    }
  }
  const long long n_bg = static_cast<long long>(h) * w - n_fg;
  mean_fg /= static_cast<double>(n_fg);
  mean_bg /= static_cast<double>(n_bg);
  double ss_fg = 0.0, ss_bg = 0.0;
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      if (gt.at(r, c)) {
        ss_fg += (pred.at(r, c) - mean_fg) * (pred.at(r, c) - mean_fg);
      } else {
        ss_bg += ((1.0 - pred.at(r, c)) - mean_bg) * ((1.0 - pred.at(r, c)) - mean_bg);
      }
    }
  }
  const double std_fg = n_fg > 1 ? std::sqrt(ss_fg / (static_cast<double>(n_fg) - 1.0)) : 0.0;
  const double std_bg = n_bg > 1 ? std::sqrt(ss_bg / (static_cast<double>(n_bg) - 1.0)) : 0.0;
  const double o_fg = 2.0 * mean_fg / (mean_fg * mean_fg + 1.0 + std_fg + kOracleEps);
  const double o_bg = 2.0 * mean_bg / (mean_bg * mean_bg + 1.0 + std_bg + kOracleEps);
  const double s_object = u * o_fg + (1.0 - u) * o_bg;

  // Region term around the 1-based centroid.
  double sum_c = 0.0, sum_r = 0.0;
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      if (gt.at(r, c)) {
        sum_c += c + 1;
        sum_r += r + 1;
      }
    }
  }
  const int cx = static_cast<int>(std::lround(sum_c / static_cast<double>(n_fg)));
  const int cy = static_cast<int>(std::lround(sum_r / static_cast<double>(n_fg)));
  const double w1 = static_cast<double>(cx) * cy / n;
  const double w2 = static_cast<double>(w - cx) * cy / n;
  const double w3 = static_cast<double>(cx) * (h - cy) / n;
  const double w4 = 1.0 - w1 - w2 - w3;
  const double s_region = w1 * oracle_ssim_block(pred, gt, 0, cy, 0, cx) +
                          w2 * oracle_ssim_block(pred, gt, 0, cy, cx, w) +
                          w3 * oracle_ssim_block(pred, gt, cy, h, 0, cx) +
                          w4 * oracle_ssim_block(pred, gt, cy, h, cx, w);

  const double q = 0.5 * s_object + 0.5 * s_region;
  return q < 0.0 ? 0.0 : q;
}

}  // namespace covp::mocklab
