#include <doctest.h>

#include <cstdlib>
#include <set>

#include "covp/image_io.hpp"
#include "covp/mock_lab.hpp"
#include "covp/pipeline.hpp"
#include "covp/segmenter_client.hpp"
#include "test_support.hpp"

using namespace covp;

namespace {

PipelineConfig mock_config(const testing::TempDir& dir, int scenes = 4) {
  PipelineConfig cfg;
  cfg.cache_dir = (dir.path / "cache").string();
  cfg.mock.scenes = scenes;
  cfg.mock.scene.image_size = 224;
  cfg.mock.scene.patch_size = 14;
  cfg.mock.scene.feature_dim = 16;
  cfg.mock.scene.size_frac = 0.18;
  return cfg;
}

struct CountingDetectorProxy : DetectorService {
  std::shared_ptr<DetectorService> inner;
  std::shared_ptr<std::atomic<int>> calls;

  CountingDetectorProxy(std::shared_ptr<DetectorService> inner_, std::shared_ptr<std::atomic<int>> calls_)
      : inner(std::move(inner_)), calls(std::move(calls_)) {}
  ServiceInfo describe() const override { return inner->describe(); }
  std::string query(const Image& image, const std::string& prompt) override {
    ++*calls;
    return inner->query(image, prompt);
  }
};

}  // namespace

TEST_SUITE_BEGIN("pipeline");

TEST_CASE("config json round-trips and env overrides the cache dir") {
  PipelineConfig cfg;
  cfg.prompt_stage = PromptStage::Polysemy;
  cfg.aggregation = AggregationStrategy::UnionBox;
  cfg.top_k = 12;
  cfg.clusters = 5;
  cfg.include_initial = true;
  cfg.prompt_box = true;
  cfg.parallelism = 4;
  cfg.fallback = FallbackPolicy::FullFrameBox;
  cfg.mock.scenes = 9;
  const PipelineConfig back = PipelineConfig::from_json(cfg.to_json());
  CHECK(back.prompt_stage == cfg.prompt_stage);
  CHECK(back.aggregation == cfg.aggregation);
  CHECK(back.top_k == cfg.top_k);
  CHECK(back.clusters == cfg.clusters);
  CHECK(back.include_initial == cfg.include_initial);
  CHECK(back.prompt_box == cfg.prompt_box);
  CHECK(back.parallelism == cfg.parallelism);
  CHECK(back.fallback == cfg.fallback);
  CHECK(back.mock.scenes == cfg.mock.scenes);

  setenv("COVP_CACHE_DIR", "/tmp/covp-env-cache", 1);
  CHECK(cfg.resolved_cache_dir() == std::filesystem::path("/tmp/covp-env-cache"));
  unsetenv("COVP_CACHE_DIR");
  CHECK(cfg.resolved_cache_dir() == std::filesystem::path(".covp-cache"));

  CHECK_THROWS_AS(PipelineConfig::from_json(R"({"clusters": 0})"), PreconditionError);
  CHECK_THROWS_AS(PipelineConfig::from_json(R"({"services":{"detector":"ftp://x"}})"), PreconditionError);
}

TEST_CASE("noiseless planted scenes segment with high fidelity") {
  testing::TempDir dir("e2e");
  PipelineConfig cfg = mock_config(dir, 10);
  cfg.mock.scene.image_size = 448;
  cfg.mock.scene.patch_size = 8;
  auto world = build_mock_world(cfg.mock, cfg.seed);
  PipelineClients clients = make_clients(cfg, world);

  for (const auto& sha : world->order()) {
    const auto& scene = world->at(sha);
    auto [mask, trace] = run_pipeline(scene.image, sha.substr(0, 8), cfg, clients);
    REQUIRE_FALSE(trace.failure.has_value());
    CHECK(trace.box.has_value());
    CHECK(trace.completion_points.size() >= 1);
    CHECK(mask_iou(binarize(mask, 0.5), scene.gt) >= 0.9);
  }
}

TEST_CASE("no-detection fallback policies") {
  testing::TempDir dir("fallback");
  PipelineConfig cfg = mock_config(dir, 1);
  cfg.mock.miss_prob = 1.0;
  auto world = build_mock_world(cfg.mock, cfg.seed);
  const auto& scene = world->at(world->order()[0]);

  SUBCASE("skip emits an empty mask and records the fallback") {
    PipelineClients clients = make_clients(cfg, world);
    auto [mask, trace] = run_pipeline(scene.image, "img", cfg, clients);
    CHECK_FALSE(trace.failure.has_value());
    CHECK_FALSE(trace.box.has_value());
    REQUIRE(trace.fallbacks.size() == 1);
    CHECK(trace.fallbacks[0] == "no_detection:skip");
    CHECK(binarize(mask, 0.5).foreground_count() == 0);
    for (const auto& dets : trace.detections) CHECK(dets.empty());
  }

  SUBCASE("full_frame_box continues with the whole frame") {
    cfg.fallback = FallbackPolicy::FullFrameBox;
    PipelineClients clients = make_clients(cfg, world);
    auto [mask, trace] = run_pipeline(scene.image, "img", cfg, clients);
    CHECK(trace.box == BoundingBox{0.0, 0.0, 1.0, 1.0});
    REQUIRE(trace.fallbacks.size() == 1);
    CHECK(trace.fallbacks[0] == "no_detection:full_frame_box");
  }
}

TEST_CASE("benchmark over a materialized mock dataset is deterministic") {
  testing::TempDir dir("bench");
  PipelineConfig cfg = mock_config(dir, 5);
  cfg.mock.box_noise = 0.08;
  cfg.mock.scene.noise_sigma = 0.25;
  const DatasetManifest manifest = materialize_mock_dataset(cfg.mock, cfg.seed, dir.path / "data");
  CHECK(manifest.pairs.size() == 5);
  auto world = load_mock_world(dir.path / "data");
  CHECK(world->size() == 5);

  PipelineClients clients = make_clients(cfg, world);
  BenchOptions opts;
  opts.workers = 1;
  const BenchResult serial = run_benchmark(manifest, cfg, clients, opts);
  CHECK(serial.report.n_images == 5);
  CHECK(serial.report.n_failed == 0);

  opts.workers = 4;
  PipelineClients clients2 = make_clients(cfg, world);
  const BenchResult parallel = run_benchmark(manifest, cfg, clients2, opts);
  CHECK(serial.report.to_json() == parallel.report.to_json());

  // Warm rerun: identical canonical traces, replies now served from cache.
  PipelineClients warm = make_clients(cfg, world);
  const BenchResult rerun = run_benchmark(manifest, cfg, warm, opts);
  REQUIRE(rerun.traces.size() == serial.traces.size());
  for (std::size_t i = 0; i < rerun.traces.size(); ++i) {
    CHECK(rerun.traces[i].to_json(false) == serial.traces[i].to_json(false));
    for (const auto& r : rerun.traces[i].replies) CHECK(r.cached);
  }
  CHECK(rerun.report.to_json() == serial.report.to_json());

  // Reusing the directory neither regenerates nor duplicates scenes.
  const DatasetManifest again = materialize_mock_dataset(cfg.mock, cfg.seed, dir.path / "data");
  CHECK(again.pairs.size() == 5);
}

TEST_CASE("benchmark artifacts round-trip through the mask loader") {
  testing::TempDir dir("artifacts");
  PipelineConfig cfg = mock_config(dir, 2);
  const DatasetManifest manifest = materialize_mock_dataset(cfg.mock, cfg.seed, dir.path / "data");
  auto world = load_mock_world(dir.path / "data");
  PipelineClients clients = make_clients(cfg, world);
  BenchOptions opts;
  opts.out_dir = dir.path / "out";
  opts.write_masks = true;
  opts.write_traces = true;
  const BenchResult result = run_benchmark(manifest, cfg, clients, opts);

  CHECK(std::filesystem::exists(dir.path / "out" / "report.json"));
  CHECK(std::filesystem::exists(dir.path / "out" / "traces.jsonl"));
  for (const auto& trace : result.traces) {
    REQUIRE_FALSE(trace.mask_ref.empty());
    const SoftMask loaded = read_soft_mask_png(trace.mask_ref);
    const auto& scene = world->at(trace.image_sha256);
    auto [mask, _] = run_pipeline(scene.image, trace.image_id, cfg, clients);
    CHECK(loaded.values == mask.values);  // pipeline masks are 8-bit exact
  }
}

TEST_CASE("ablation shares the detector cache across rows") {
  testing::TempDir dir("ablate");
  PipelineConfig cfg = mock_config(dir, 3);
  cfg.mock.box_noise = 0.1;
  const DatasetManifest manifest = materialize_mock_dataset(cfg.mock, cfg.seed, dir.path / "data");
  auto world = load_mock_world(dir.path / "data");

  auto calls = std::make_shared<std::atomic<int>>(0);
  // Run the six rows manually with a counting proxy wired into each row's
  // clients, sharing one cache file.
  const PromptStage stages[5] = {PromptStage::Baseline, PromptStage::PhysicalAttr,
                                 PromptStage::DynamicAttr, PromptStage::Polysemy, PromptStage::Diverse};
  std::set<std::string> unique_prompts;
  for (int row = 1; row <= 6; ++row) {
    PipelineConfig row_cfg = cfg;
    row_cfg.prompt_stage = row <= 5 ? stages[row - 1] : PromptStage::Diverse;
    row_cfg.use_completion = row == 6;
    PipelineClients clients = make_clients(row_cfg, world);
    auto counting = std::make_shared<CountingDetectorProxy>(
        make_mock_detector(world, {row_cfg.mock.box_noise, row_cfg.mock.miss_prob, row_cfg.seed}), calls);
    clients.detector = std::make_shared<DetectorClient>(counting, clients.cache);
    for (const auto& t : clients.chain.texts()) unique_prompts.insert(t);
    BenchOptions opts;
    const BenchResult result = run_benchmark(manifest, row_cfg, clients, opts);
    CHECK(result.report.n_images == 3);
  }
  CHECK(*calls == static_cast<int>(manifest.pairs.size() * unique_prompts.size()));
}

TEST_CASE("run_ablation emits six labeled reports with cumulative stages") {
  testing::TempDir dir("ablate-api");
  PipelineConfig cfg = mock_config(dir, 2);
  const DatasetManifest manifest = materialize_mock_dataset(cfg.mock, cfg.seed, dir.path / "data");
  auto world = load_mock_world(dir.path / "data");
  const auto results = run_ablation(manifest, cfg, world, {});
  REQUIRE(results.size() == 6);
  CHECK(results[0].report.dataset_id == "flat#row1");
  CHECK(results[5].report.dataset_id == "flat#row6");
  for (const auto& r : results) CHECK(r.report.n_images == 2);
  // Row six used completion: its traces carry completion points.
  CHECK_FALSE(results[5].traces[0].completion_points.empty());
  CHECK(results[4].traces[0].completion_points.empty());
}

TEST_CASE("trace json round-trips") {
  testing::TempDir dir("trace");
  PipelineConfig cfg = mock_config(dir, 1);
  auto world = build_mock_world(cfg.mock, cfg.seed);
  PipelineClients clients = make_clients(cfg, world);
  const auto& scene = world->at(world->order()[0]);
  auto [mask, trace] = run_pipeline(scene.image, "t0", cfg, clients);
  const PipelineTrace back = PipelineTrace::from_json(trace.to_json(true));
  CHECK(back.to_json(true) == trace.to_json(true));
  CHECK(back.to_json(false) == trace.to_json(false));
  const PipelineTrace canonical = PipelineTrace::from_json(trace.to_json(false));
  CHECK(canonical.image_id == trace.image_id);
  CHECK(canonical.completion_points == trace.completion_points);
}

TEST_CASE("overlay rendering is deterministic and marks every role") {
  testing::TempDir dir("overlay");
  PipelineConfig cfg = mock_config(dir, 1);
  cfg.clusters = 3;
  auto world = build_mock_world(cfg.mock, cfg.seed);
  PipelineClients clients = make_clients(cfg, world);
  const auto& scene = world->at(world->order()[0]);
  auto [mask, trace] = run_pipeline(scene.image, "o0", cfg, clients);
  REQUIRE(trace.completion_points.size() == 3);

  const std::string png1 = render_overlay(scene.image, trace, mask);
  const std::string png2 = render_overlay(scene.image, trace, mask);
  CHECK(png1 == png2);

  const Image overlay = Image::from_png(png1);
  const int w = overlay.width(), h = overlay.height();
  // Completion point markers are solid circles of the fixed role color.
  for (const auto& p : trace.completion_points) {
    const auto px = overlay.bgr.at<cv::Vec3b>(static_cast<int>(p.y * h), static_cast<int>(p.x * w));
    CHECK(px == cv::Vec3b(255, 128, 0));
  }

  // A trace without a box renders the failure banner instead.
  PipelineTrace empty;
  empty.image_id = "none";
  const std::string banner_png = render_overlay(scene.image, empty, SoftMask::filled(h, w, 0.0f));
  const Image banner = Image::from_png(banner_png);
  CHECK(banner.bgr.at<cv::Vec3b>(2, 2) == cv::Vec3b(0, 0, 0));
}

TEST_CASE("mask png round-trip preserves quantized soft masks") {
  SoftMask mask{3, 5, {}};
  for (int i = 0; i < 15; ++i) mask.values.push_back(static_cast<float>((i * 17) % 256) / 255.0f);
  const SoftMask back = decode_soft_mask_png(encode_mask_png(mask));
  CHECK(back.values == mask.values);
  CHECK(back.height == mask.height);
  CHECK(back.width == mask.width);
}

TEST_SUITE_END();
