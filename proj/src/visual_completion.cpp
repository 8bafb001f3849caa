#include "covp/visual_completion.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <limits>
#include <numeric>

#include "covp/errors.hpp"
#include "covp/image_io.hpp"

namespace covp {

bool SimilarityMap::is_valid() const {
  if (height < 1 || width < 1) return false;
  if (scores.size() != static_cast<size_t>(height) * width) return false;
  return std::all_of(scores.begin(), scores.end(),
                     [](float v) { return std::isfinite(v) && v >= -1.0f && v <= 1.0f; });
}

void SimilarityMap::validate() const {
  if (!is_valid()) throw PreconditionError("invalid similarity map");
}

int resolve_top_k(int requested, int cells) {
  if (requested > 0) return std::min(requested, cells);
  const int one_percent = static_cast<int>(std::ceil(0.01 * cells));
  return std::min(std::max(8, one_percent), cells);
}

std::vector<float> sample_feature(const FeatureMap& fm, const ImagePoint& p) {
  fm.validate();
  const GridCell cell = point_to_cell(p, fm);
  const auto span = fm.cell(cell.row, cell.col);
  return {span.begin(), span.end()};
}

SimilarityMap similarity_map(const FeatureMap& fm, std::span<const float> f_i) {
  fm.validate();
  if (static_cast<int>(f_i.size()) != fm.dim) {
    throw PreconditionError("query vector dimension mismatch");
  }
  double query_norm2 = 0.0;
  for (float v : f_i) query_norm2 += static_cast<double>(v) * v;
  if (query_norm2 == 0.0) {
    throw PreconditionError("zero query vector; feature extraction is degenerate");
  }
  const double query_norm = std::sqrt(query_norm2);

  SimilarityMap sim;
  sim.height = fm.height;
  sim.width = fm.width;
  sim.scores.resize(static_cast<size_t>(fm.height) * fm.width);
  const int n = fm.cells();
#pragma omp parallel for schedule(static)
  for (int i = 0; i < n; ++i) {
    const float* cell = fm.data.data() + static_cast<size_t>(i) * fm.dim;
    double dot = 0.0, norm2 = 0.0;
    for (int d = 0; d < fm.dim; ++d) {
      dot += static_cast<double>(cell[d]) * f_i[d];
      norm2 += static_cast<double>(cell[d]) * cell[d];
    }
    double score = -1.0;
    if (norm2 > 0.0) {
      score = dot / (std::sqrt(norm2) * query_norm);
      score = std::clamp(score, -1.0, 1.0);
    }
    sim.scores[static_cast<size_t>(i)] = static_cast<float>(score);
  }
  return sim;
}

std::vector<ScoredCell> top_k(const SimilarityMap& sim, int k) {
  sim.validate();
  if (k < 1) throw PreconditionError("top_k needs k >= 1");
  const int n = sim.cells();
  const int take = std::min(k, n);
  std::vector<int> idx(static_cast<size_t>(n));
  std::iota(idx.begin(), idx.end(), 0);
  const auto better = [&](int a, int b) {
    if (sim.scores[a] != sim.scores[b]) return sim.scores[a] > sim.scores[b];
    return a < b;
  };
  std::partial_sort(idx.begin(), idx.begin() + take, idx.end(), better);
  std::vector<ScoredCell> out;
  out.reserve(static_cast<size_t>(take));
  for (int i = 0; i < take; ++i) {
    out.push_back({{idx[i] / sim.width, idx[i] % sim.width}, sim.scores[idx[i]]});
  }
  return out;
}

namespace {

double cell_dist2(const GridCell& a, double row, double col) {
  const double dr = a.row - row;
  const double dc = a.col - col;
  return dr * dr + dc * dc;
}

// Farthest-point pick among candidates not yet selected; ties resolve to the
// earliest candidate, which keeps the whole clustering deterministic.
int farthest_candidate(const std::vector<GridCell>& cells, const std::vector<char>& taken,
                       const std::vector<std::pair<double, double>>& centers) {
  int best = -1;
  double best_d = -1.0;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (taken[i]) continue;
    double d = std::numeric_limits<double>::max();
    for (const auto& [r, c] : centers) d = std::min(d, cell_dist2(cells[i], r, c));
    if (d > best_d) {
      best_d = d;
      best = static_cast<int>(i);
    }
  }
  return best;
}

}  // namespace

std::vector<ImagePoint> cluster_points(const std::vector<ScoredCell>& candidates, int c,
                                       const FeatureMap& fm) {
  if (candidates.empty()) throw PreconditionError("cluster_points needs candidates");
  if (c < 1) throw PreconditionError("cluster_points needs c >= 1");

  // Distinct cells, first occurrence wins (candidates arrive score-sorted).
  std::vector<GridCell> cells;
  cells.reserve(candidates.size());
  for (const auto& sc : candidates) {
    if (std::find(cells.begin(), cells.end(), sc.cell) == cells.end()) cells.push_back(sc.cell);
  }
  const int n = static_cast<int>(cells.size());
  const int n_clusters = std::min(c, n);

  std::vector<char> taken(static_cast<size_t>(n), 0);
  std::vector<std::pair<double, double>> centers;  // (row, col)
  centers.reserve(static_cast<size_t>(n_clusters));
  taken[0] = 1;
  centers.emplace_back(cells[0].row, cells[0].col);
  while (static_cast<int>(centers.size()) < n_clusters) {
    const int pick = farthest_candidate(cells, taken, centers);
    taken[pick] = 1;
    centers.emplace_back(cells[pick].row, cells[pick].col);
  }

  std::vector<int> assign(static_cast<size_t>(n), -1);
  for (int iter = 0; iter < 50; ++iter) {
    bool changed = false;
    for (int i = 0; i < n; ++i) {
      int best = 0;
      double best_d = cell_dist2(cells[i], centers[0].first, centers[0].second);
      for (int j = 1; j < n_clusters; ++j) {
        const double d = cell_dist2(cells[i], centers[j].first, centers[j].second);
        if (d < best_d) {
          best_d = d;
          best = j;
        }
      }
      if (assign[i] != best) {
        assign[i] = best;
        changed = true;
      }
    }
    if (!changed) break;

    std::vector<double> sum_r(static_cast<size_t>(n_clusters), 0.0);
    std::vector<double> sum_c(static_cast<size_t>(n_clusters), 0.0);
    std::vector<int> count(static_cast<size_t>(n_clusters), 0);
    for (int i = 0; i < n; ++i) {
      sum_r[assign[i]] += cells[i].row;
      sum_c[assign[i]] += cells[i].col;
      ++count[assign[i]];
    }
    for (int j = 0; j < n_clusters; ++j) {
      if (count[j] > 0) {
        centers[j] = {sum_r[j] / count[j], sum_c[j] / count[j]};
      } else {
        // A starved cluster restarts at the cell farthest from everyone else.
        std::vector<std::pair<double, double>> others;
        for (int o = 0; o < n_clusters; ++o) {
          if (o != j && count[o] > 0) others.push_back(centers[o]);
        }
        std::vector<char> none(static_cast<size_t>(n), 0);
        const int pick = others.empty() ? 0 : farthest_candidate(cells, none, others);
        centers[j] = {static_cast<double>(cells[pick].row), static_cast<double>(cells[pick].col)};
      }
    }
  }

  // Snap each center to its nearest member (medoid). Members partition the
  // distinct cells, so medoids of non-empty clusters never collide.
  std::vector<GridCell> medoids;
  for (int j = 0; j < n_clusters; ++j) {
    int best = -1;
    double best_d = std::numeric_limits<double>::max();
    for (int i = 0; i < n; ++i) {
      if (assign[i] != j) continue;
      const double d = cell_dist2(cells[i], centers[j].first, centers[j].second);
      if (d < best_d) {
        best_d = d;
        best = i;
      }
    }
    if (best >= 0) medoids.push_back(cells[best]);
  }
  // Top up in the (theoretical) case a cluster ended empty.
  while (static_cast<int>(medoids.size()) < n_clusters) {
    std::vector<std::pair<double, double>> chosen;
    for (const auto& m : medoids) chosen.emplace_back(m.row, m.col);
    std::vector<char> used(static_cast<size_t>(n), 0);
    for (int i = 0; i < n; ++i) {
      used[i] = std::find(medoids.begin(), medoids.end(), cells[i]) != medoids.end() ? 1 : 0;
    }
    const int pick = chosen.empty() ? 0 : farthest_candidate(cells, used, chosen);
    medoids.push_back(cells[pick]);
  }

  std::vector<ImagePoint> prompts;
  prompts.reserve(medoids.size());
  for (const auto& m : medoids) prompts.push_back(cell_to_point(m.row, m.col, fm));
  return prompts;
}

CompletionResult complete(const FeatureMap& fm, const ImagePoint& p_i, const CompletionParams& params) {
  fm.validate();
  p_i.validate();
  if (params.clusters < 1) throw PreconditionError("completion needs clusters >= 1");

  CompletionResult result;
  result.initial = p_i;
  result.params = params;
  result.params.top_k = resolve_top_k(params.top_k, fm.cells());

  const std::vector<float> f_i = sample_feature(fm, p_i);
  const SimilarityMap sim = similarity_map(fm, f_i);
  result.candidates = top_k(sim, result.params.top_k);
  result.prompts = cluster_points(result.candidates, params.clusters, fm);
  if (params.include_initial) {
    if (std::find(result.prompts.begin(), result.prompts.end(), p_i) == result.prompts.end()) {
      result.prompts.push_back(p_i);
    }
  }
  return result;
}

namespace {

constexpr char kMagic[8] = {'C', 'V', 'P', 'F', 'M', 'A', 'P', '1'};

void append_i32(std::string& out, std::int32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((static_cast<std::uint32_t>(v) >> (8 * i)) & 0xff));
}

std::int32_t read_i32(const std::string& bytes, std::size_t off) {
  std::uint32_t u = 0;
  for (int i = 0; i < 4; ++i) {
    u |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[off + i])) << (8 * i);
  }
  return static_cast<std::int32_t>(u);
}

}  // namespace

std::string encode_feature_map_blob(const FeatureMap& fm) {
  fm.validate();
  std::string out(kMagic, sizeof(kMagic));
  append_i32(out, fm.height);
  append_i32(out, fm.width);
  append_i32(out, fm.dim);
  append_i32(out, fm.patch_size);
  out.reserve(out.size() + fm.data.size() * 4);
  for (float v : fm.data) {
    const auto u = std::bit_cast<std::uint32_t>(v);
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((u >> (8 * i)) & 0xff));
  }
  return out;
}

FeatureMap decode_feature_map_blob(const std::string& bytes) {
  if (bytes.size() < 24 || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
    throw PreconditionError("not a CVPFMAP1 blob");
  }
  FeatureMap fm;
  fm.height = read_i32(bytes, 8);
  fm.width = read_i32(bytes, 12);
  fm.dim = read_i32(bytes, 16);
  fm.patch_size = read_i32(bytes, 20);
  const std::size_t expect = 24 + static_cast<std::size_t>(fm.height) * fm.width * fm.dim * 4;
  if (fm.height < 1 || fm.width < 1 || fm.dim < 1 || bytes.size() != expect) {
    throw PreconditionError("corrupt CVPFMAP1 blob");
  }
  fm.data.resize(static_cast<std::size_t>(fm.height) * fm.width * fm.dim);
  for (std::size_t i = 0; i < fm.data.size(); ++i) {
    std::uint32_t u = 0;
    for (int b = 0; b < 4; ++b) {
      u |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[24 + i * 4 + b])) << (8 * b);
    }
    fm.data[i] = std::bit_cast<float>(u);
  }
  fm.validate();
  return fm;
}

void save_feature_map(const std::filesystem::path& path, const FeatureMap& fm) {
  write_file(path, encode_feature_map_blob(fm));
}

FeatureMap load_feature_map(const std::filesystem::path& path) {
  return decode_feature_map_blob(read_file(path));
}

}  // namespace covp
