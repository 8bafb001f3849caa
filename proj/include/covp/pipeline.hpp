#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "covp/datasets.hpp"
#include "covp/detector_client.hpp"
#include "covp/geometry.hpp"
#include "covp/metrics.hpp"
#include "covp/mock_lab.hpp"
#include "covp/prompt_chain.hpp"
#include "covp/services.hpp"
#include "covp/visual_completion.hpp"

namespace covp {

enum class FallbackPolicy { Skip, FullFrameBox };

std::string to_string(FallbackPolicy policy);
FallbackPolicy fallback_from_string(const std::string& name);

struct MockConfig {
  int scenes = 6;
  double box_noise = 0.0;
  double miss_prob = 0.0;
  double segment_threshold = 0.7;
  mocklab::SceneParams scene;
};

// Every knob the pipeline exposes, including the ones the underlying method
// leaves open (top_k, clusters, aggregation, prompting mode).
struct PipelineConfig {
  PromptStage prompt_stage = PromptStage::Diverse;
  AggregationStrategy aggregation = AggregationStrategy::MedianBox;
  int top_k = 0;  // 0 resolves per image to max(8, 1% of cells)
  int clusters = 3;
  bool include_initial = false;
  bool prompt_box = false;
  bool use_completion = true;
  ResizePolicy resize_policy;
  std::string detector_endpoint = "mock:";
  std::string extractor_endpoint = "mock:";
  std::string segmenter_endpoint = "mock:";
  std::string cache_dir = ".covp-cache";
  int parallelism = 1;
  FallbackPolicy fallback = FallbackPolicy::Skip;
  std::uint64_t seed = 17;
  int paraphrase_n = 0;
  std::string prompt_catalog_path;  // empty uses the builtin catalog
  RetryPolicy retry;
  MockConfig mock;

  void validate() const;
  // Honors the COVP_CACHE_DIR environment variable.
  std::filesystem::path resolved_cache_dir() const;

  static PipelineConfig from_json(const std::string& text);
  static PipelineConfig load(const std::filesystem::path& path);
  std::string to_json() const;
};

struct ReplyRef {
  std::string cache_key;  // image_sha|prompt_sha|service_id
  bool cached = false;
  double latency_ms = 0.0;
};

struct StageLatency {
  std::string stage;
  double ms = 0.0;
};

// Everything needed to audit one image end to end. The canonical form
// (without timing or cache-hit data) is byte-stable across reruns.
struct PipelineTrace {
  std::string image_id;
  std::string image_path;
  std::string image_sha256;
  std::string chain_id;
  std::vector<std::string> prompts;
  std::vector<ReplyRef> replies;
  std::vector<std::vector<Detection>> detections;  // per prompt, empty on NoDetection
  std::optional<BoundingBox> box;
  std::optional<ImagePoint> initial_point;
  std::optional<CompletionParams> completion_params;
  std::vector<ImagePoint> completion_points;
  std::string mask_ref;
  std::vector<StageLatency> latencies;
  std::vector<std::string> fallbacks;
  std::optional<std::string> failure;

  std::string to_json(bool include_timings = true) const;
  static PipelineTrace from_json(const std::string& text);
};

struct PipelineClients {
  std::shared_ptr<DetectorClient> detector;
  std::shared_ptr<FeatureExtractorService> extractor;
  std::shared_ptr<SegmenterService> segmenter;
  std::shared_ptr<ReplyCache> cache;  // also referenced by the detector client
  PromptChain chain;
};

std::shared_ptr<mocklab::MockWorld> build_mock_world(const MockConfig& mock, std::uint64_t seed);

// Wires service adapters from the endpoint config. Mock endpoints need the
// world that resolves image hashes to planted scenes.
PipelineClients make_clients(const PipelineConfig& cfg,
                             std::shared_ptr<const mocklab::MockWorld> world = nullptr,
                             ParaphraseService* paraphraser = nullptr);

// Writes the scenes of a mock world as an Image/GT dataset, with a scene
// index so later runs rebuild the identical world. Returns its manifest.
DatasetManifest materialize_mock_dataset(const MockConfig& mock, std::uint64_t seed,
                                         const std::filesystem::path& dir);
// Rebuilds the world recorded in dir/scene_index.json.
std::shared_ptr<mocklab::MockWorld> load_mock_world(const std::filesystem::path& dir);

// Prompt chain -> detector queries -> aggregation -> visual completion ->
// segmentation -> mask selection. Service failures mark the trace as failed
// instead of propagating, so batch runs continue.
std::pair<SoftMask, PipelineTrace> run_pipeline(const Image& image, const std::string& image_id,
                                                const PipelineConfig& cfg, PipelineClients& clients);

struct BenchOptions {
  int workers = 1;
  std::filesystem::path out_dir;  // empty: no artifacts are written
  bool write_masks = false;
  bool write_traces = false;
  bool write_overlays = false;
};

struct BenchResult {
  EvalReport report;
  std::vector<PipelineTrace> traces;  // manifest order (sorted by image_id)
};

BenchResult run_benchmark(const DatasetManifest& manifest, const PipelineConfig& cfg,
                          PipelineClients& clients, const BenchOptions& opts);

// Table-4 protocol: rows 1-5 prompt the segmenter with the initial point only
// at cumulative prompt stages; row 6 is the full pipeline with completion.
// All rows share one detector cache, so each unique prompt is queried once.
std::vector<BenchResult> run_ablation(const DatasetManifest& manifest, const PipelineConfig& cfg,
                                      std::shared_ptr<const mocklab::MockWorld> world,
                                      const BenchOptions& opts);

// Box, initial point, completion points and mask contour drawn over the
// image; fixed colors per role. Returns PNG bytes.
std::string render_overlay(const Image& image, const PipelineTrace& trace, const SoftMask& mask);

}  // namespace covp
