#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "covp/geometry.hpp"

namespace covp {

struct SimilarityMap {
  int height = 0;
  int width = 0;
  std::vector<float> scores;  // in [-1, 1]

  float at(int row, int col) const { return scores[static_cast<size_t>(row) * width + col]; }
  float& at(int row, int col) { return scores[static_cast<size_t>(row) * width + col]; }
  int cells() const { return height * width; }

  bool is_valid() const;
  void validate() const;
};

struct ScoredCell {
  GridCell cell;
  float score = 0.0f;

  bool operator==(const ScoredCell&) const = default;
};

struct CompletionParams {
  int top_k = 0;  // 0 resolves to max(8, ceil(0.01 * cells))
  int clusters = 3;
  bool include_initial = false;
};

struct CompletionResult {
  ImagePoint initial;
  std::vector<ScoredCell> candidates;  // descending score, row-major tie-break
  std::vector<ImagePoint> prompts;     // medoid cell centers (+ initial when configured)
  CompletionParams params;             // with top_k resolved
};

int resolve_top_k(int requested, int cells);

// Feature vector of the cell containing p (nearest-cell sampling).
std::vector<float> sample_feature(const FeatureMap& fm, const ImagePoint& p);

// Cosine similarity of every cell against f_i. Zero-norm cells score -1;
// a zero f_i signals degenerate feature extraction and is rejected.
SimilarityMap similarity_map(const FeatureMap& fm, std::span<const float> f_i);

// Highest-scoring min(k, N) cells, descending; ties resolve to the lower
// row-major cell index so the selection is reproducible.
std::vector<ScoredCell> top_k(const SimilarityMap& sim, int k);

// k-means over candidate grid coordinates with farthest-point initialization
// seeded at the top-scoring candidate, then each center snapped to its
// nearest member cell. Returns min(c, |candidates|) distinct cell centers.
std::vector<ImagePoint> cluster_points(const std::vector<ScoredCell>& candidates, int c,
                                       const FeatureMap& fm);

CompletionResult complete(const FeatureMap& fm, const ImagePoint& p_i, const CompletionParams& params);

// Disk cache: magic "CVPFMAP1", int32 h/w/d/patch_size, float32 data; all
// little-endian, data row-major.
std::string encode_feature_map_blob(const FeatureMap& fm);
FeatureMap decode_feature_map_blob(const std::string& bytes);
void save_feature_map(const std::filesystem::path& path, const FeatureMap& fm);
FeatureMap load_feature_map(const std::filesystem::path& path);

}  // namespace covp
