#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "covp/geometry.hpp"
#include "covp/services.hpp"
#include "covp/visual_completion.hpp"

namespace covp::mocklab {

struct SceneParams {
  int image_size = 448;  // square images
  int patch_size = 8;
  int feature_dim = 32;
  std::string shape = "ellipse";  // "ellipse" or "blob"
  double size_frac = 0.15;        // target foreground area fraction; >= 1 saturates
  double max_cos = 0.5;           // bound on cosine(fg_dir, bg_dir)
  double noise_sigma = 0.0;       // per-component white noise on cell features
};

// A synthetic camouflage scene with known ground truth, known per-cell
// feature directions, and a deterministic rendering. Everything derives from
// the seed.
struct PlantedScene {
  Image image;
  BinaryMask gt;
  FeatureMap features;
  std::vector<GridCell> fg_cells;  // exactly the majority-foreground cells
  std::vector<float> fg_dir;
  std::vector<float> bg_dir;
  double dir_cosine = 0.0;
  SceneParams params;
  std::uint64_t seed = 0;

  BoundingBox gt_box() const;  // tight normalized box around the foreground
  bool is_fg_cell(const GridCell& cell) const;
};

PlantedScene gen_scene(std::uint64_t seed, const SceneParams& params);

// Scene registry keyed by image content hash; the mock services resolve
// incoming images through it.
class MockWorld {
 public:
  void add(PlantedScene scene);
  const PlantedScene* find(const std::string& image_sha256) const;
  const std::vector<std::string>& order() const { return order_; }
  const PlantedScene& at(const std::string& image_sha256) const;
  std::size_t size() const { return scenes_.size(); }

 private:
  std::map<std::string, PlantedScene> scenes_;
  std::vector<std::string> order_;
};

struct MockDetectorParams {
  double box_noise = 0.0;  // uniform half-width per coordinate
  double miss_prob = 0.0;  // probability of a refusal reply
  std::uint64_t seed = 0;  // mixed with scene seed and prompt hash per query
};

std::unique_ptr<DetectorService> make_mock_detector(std::shared_ptr<const MockWorld> world,
                                                    const MockDetectorParams& params);
std::unique_ptr<FeatureExtractorService> make_mock_extractor(std::shared_ptr<const MockWorld> world);

// Flood-fills the cell grid from the prompt cells through cells whose cosine
// against the mean prompt feature clears the threshold, then upsamples the
// reached set to a pixel mask.
std::unique_ptr<SegmenterService> make_mock_segmenter(std::shared_ptr<const MockWorld> world,
                                                      double threshold = 0.7);

// Deterministic helpers shared by the mocks and the scene generator.
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);
std::uint64_t hash64(const std::string& text);
double uniform01(std::uint64_t& state);   // advances a splitmix64 state
double gaussian(std::uint64_t& state);    // Box-Muller over uniform01

// ---------------------------------------------------------------------------
// Serial brute-force references. These are independent transcriptions kept
// deliberately unoptimized; the parallel implementations are tested against
// them and the benchmark tool compares their runtimes.

std::vector<ScoredCell> oracle_topk(const SimilarityMap& sim, int k);
double oracle_fbw(const SoftMask& pred, const BinaryMask& gt);
double oracle_smeasure(const SoftMask& pred, const BinaryMask& gt);

}  // namespace covp::mocklab
