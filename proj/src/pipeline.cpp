#include "covp/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <set>

#include <nlohmann/json.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "covp/errors.hpp"
#include "covp/image_io.hpp"
#include "covp/segmenter_client.hpp"

namespace covp {

namespace fs = std::filesystem;

std::string to_string(FallbackPolicy policy) {
  return policy == FallbackPolicy::Skip ? "skip" : "full_frame_box";
}

FallbackPolicy fallback_from_string(const std::string& name) {
  if (name == "skip") return FallbackPolicy::Skip;
  if (name == "full_frame_box") return FallbackPolicy::FullFrameBox;
  throw PreconditionError("unknown fallback policy: " + name);
}

void PipelineConfig::validate() const {
  if (top_k < 0) throw PreconditionError("top_k must be >= 0");
  if (clusters < 1) throw PreconditionError("clusters must be >= 1");
  if (parallelism < 1 || parallelism > 256) throw PreconditionError("parallelism outside [1,256]");
  if (paraphrase_n < 0) throw PreconditionError("paraphrase_n must be >= 0");
  if (retry.max_attempts < 1) throw PreconditionError("retry attempts must be >= 1");
  if (resize_policy.short_side < 1) throw PreconditionError("resize short_side must be >= 1");
  if (mock.scenes < 1) throw PreconditionError("mock.scenes must be >= 1");
  if (mock.box_noise < 0.0 || mock.box_noise > 1.0) throw PreconditionError("mock.box_noise outside [0,1]");
  if (mock.miss_prob < 0.0 || mock.miss_prob > 1.0) throw PreconditionError("mock.miss_prob outside [0,1]");
  for (const std::string& e : {detector_endpoint, extractor_endpoint, segmenter_endpoint}) {
    if (!is_mock_endpoint(e) && e.rfind("http://", 0) != 0 && e.rfind("exec:", 0) != 0) {
      throw PreconditionError("unsupported endpoint (expect http://, exec: or mock:): " + e);
    }
  }
}

fs::path PipelineConfig::resolved_cache_dir() const {
  if (const char* env = std::getenv("COVP_CACHE_DIR"); env && *env) return fs::path(env);
  return cache_dir.empty() ? fs::path() : fs::path(cache_dir);
}

PipelineConfig PipelineConfig::from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw PreconditionError(std::string("malformed config: ") + e.what());
  }
  PipelineConfig cfg;
  cfg.prompt_stage = prompt_stage_from_string(j.value("prompt_stage", "diverse"));
  cfg.aggregation = aggregation_from_string(j.value("aggregation", "median_box"));
  cfg.top_k = j.value("top_k", 0);
  cfg.clusters = j.value("clusters", 3);
  cfg.include_initial = j.value("include_initial", false);
  cfg.prompt_box = j.value("prompt_box", false);
  cfg.use_completion = j.value("use_completion", true);
  if (j.contains("resize_policy")) {
    cfg.resize_policy.short_side = j["resize_policy"].value("short_side", 448);
    cfg.resize_policy.mode = j["resize_policy"].value("mode", "short_side_center_crop");
  }
  if (j.contains("services")) {
    cfg.detector_endpoint = j["services"].value("detector", "mock:");
    cfg.extractor_endpoint = j["services"].value("extractor", "mock:");
    cfg.segmenter_endpoint = j["services"].value("segmenter", "mock:");
  }
  cfg.cache_dir = j.value("cache_dir", ".covp-cache");
  cfg.parallelism = j.value("parallelism", 1);
  cfg.fallback = fallback_from_string(j.value("fallback_policy", "skip"));
  cfg.seed = j.value("seed", std::uint64_t{17});
  cfg.paraphrase_n = j.value("paraphrase_n", 0);
  cfg.prompt_catalog_path = j.value("prompt_catalog", "");
  if (j.contains("retry")) {
    cfg.retry.max_attempts = j["retry"].value("max_attempts", 3);
    cfg.retry.backoff_ms = j["retry"].value("backoff_ms", 100);
  }
  if (j.contains("mock")) {
    const auto& m = j["mock"];
    cfg.mock.scenes = m.value("scenes", 6);
    cfg.mock.box_noise = m.value("box_noise", 0.0);
    cfg.mock.miss_prob = m.value("miss_prob", 0.0);
    cfg.mock.segment_threshold = m.value("segment_threshold", 0.7);
    if (m.contains("scene")) {
      const auto& s = m["scene"];
      cfg.mock.scene.image_size = s.value("image_size", 448);
      cfg.mock.scene.patch_size = s.value("patch_size", 8);
      cfg.mock.scene.feature_dim = s.value("feature_dim", 32);
      cfg.mock.scene.shape = s.value("shape", "ellipse");
      cfg.mock.scene.size_frac = s.value("size_frac", 0.15);
      cfg.mock.scene.max_cos = s.value("max_cos", 0.5);
      cfg.mock.scene.noise_sigma = s.value("noise_sigma", 0.0);
    }
  }
  cfg.validate();
  return cfg;
}

PipelineConfig PipelineConfig::load(const fs::path& path) { return from_json(read_file(path)); }

std::string PipelineConfig::to_json() const {
  nlohmann::ordered_json j;
  j["prompt_stage"] = to_string(prompt_stage);
  j["aggregation"] = covp::to_string(aggregation);
  j["top_k"] = top_k;
  j["clusters"] = clusters;
  j["include_initial"] = include_initial;
  j["prompt_box"] = prompt_box;
  j["use_completion"] = use_completion;
  j["resize_policy"] = {{"short_side", resize_policy.short_side}, {"mode", resize_policy.mode}};
  j["services"] = {{"detector", detector_endpoint},
                   {"extractor", extractor_endpoint},
                   {"segmenter", segmenter_endpoint}};
  j["cache_dir"] = cache_dir;
  j["parallelism"] = parallelism;
  j["fallback_policy"] = covp::to_string(fallback);
  j["seed"] = seed;
  j["paraphrase_n"] = paraphrase_n;
  j["prompt_catalog"] = prompt_catalog_path;
  j["retry"] = {{"max_attempts", retry.max_attempts}, {"backoff_ms", retry.backoff_ms}};
  j["mock"] = {{"scenes", mock.scenes},
               {"box_noise", mock.box_noise},
               {"miss_prob", mock.miss_prob},
               {"segment_threshold", mock.segment_threshold},
               {"scene",
                {{"image_size", mock.scene.image_size},
                 {"patch_size", mock.scene.patch_size},
                 {"feature_dim", mock.scene.feature_dim},
                 {"shape", mock.scene.shape},
                 {"size_frac", mock.scene.size_frac},
                 {"max_cos", mock.scene.max_cos},
                 {"noise_sigma", mock.scene.noise_sigma}}}};
  return j.dump(2);
}

namespace {

nlohmann::ordered_json box_json(const BoundingBox& b) {
  return nlohmann::ordered_json::array({b.x1, b.y1, b.x2, b.y2});
}

BoundingBox box_from_json(const nlohmann::json& j) {
  return {j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>(), j.at(3).get<double>()};
}

nlohmann::ordered_json point_json(const ImagePoint& p) {
  return {{"x", p.x}, {"y", p.y}};
}

ImagePoint point_from_json(const nlohmann::json& j) {
  return {j.at("x").get<double>(), j.at("y").get<double>(), PointLabel::Positive};
}

}  // namespace

std::string PipelineTrace::to_json(bool include_timings) const {
  nlohmann::ordered_json j;
  j["image_id"] = image_id;
  j["image_path"] = image_path;
  j["image_sha256"] = image_sha256;
  j["chain_id"] = chain_id;
  j["prompts"] = prompts;
  j["replies"] = nlohmann::ordered_json::array();
  for (const auto& r : replies) {
    nlohmann::ordered_json e{{"cache_key", r.cache_key}};
    if (include_timings) {
      e["cached"] = r.cached;
      e["latency_ms"] = r.latency_ms;
    }
    j["replies"].push_back(e);
  }
  j["detections"] = nlohmann::ordered_json::array();
  for (const auto& dets : detections) {
    nlohmann::ordered_json arr = nlohmann::ordered_json::array();
    for (const auto& d : dets) {
      arr.push_back({{"box", box_json(d.box)},
                     {"prompt_index", d.source_prompt_index},
                     {"parse", d.parse_confidence == ParseConfidence::Clean ? "clean" : "recovered"}});
    }
    j["detections"].push_back(arr);
  }
  if (box) j["box"] = box_json(*box);
  if (initial_point) j["initial_point"] = point_json(*initial_point);
  if (completion_params) {
    nlohmann::ordered_json comp;
    comp["top_k"] = completion_params->top_k;
    comp["clusters"] = completion_params->clusters;
    comp["include_initial"] = completion_params->include_initial;
    comp["points"] = nlohmann::ordered_json::array();
    for (const auto& p : completion_points) comp["points"].push_back(point_json(p));
    j["completion"] = comp;
  }
  j["mask_ref"] = mask_ref;
  j["fallbacks"] = fallbacks;
  if (failure) j["failure"] = *failure;
  if (include_timings) {
    j["latencies"] = nlohmann::ordered_json::array();
    for (const auto& l : latencies) j["latencies"].push_back({{"stage", l.stage}, {"ms", l.ms}});
  }
  return j.dump();
}

PipelineTrace PipelineTrace::from_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  PipelineTrace t;
  t.image_id = j.at("image_id").get<std::string>();
  t.image_path = j.value("image_path", "");
  t.image_sha256 = j.value("image_sha256", "");
  t.chain_id = j.value("chain_id", "");
  t.prompts = j.value("prompts", std::vector<std::string>{});
  if (j.contains("replies")) {
    for (const auto& e : j["replies"]) {
      t.replies.push_back({e.at("cache_key").get<std::string>(), e.value("cached", false),
                           e.value("latency_ms", 0.0)});
    }
  }
  if (j.contains("detections")) {
    for (const auto& arr : j["detections"]) {
      std::vector<Detection> dets;
      for (const auto& e : arr) {
        Detection d;
        d.box = box_from_json(e.at("box"));
        d.source_prompt_index = e.value("prompt_index", 0);
        d.parse_confidence =
            e.value("parse", "clean") == std::string("clean") ? ParseConfidence::Clean : ParseConfidence::Recovered;
        dets.push_back(d);
      }
      t.detections.push_back(std::move(dets));
    }
  }
  if (j.contains("box")) t.box = box_from_json(j["box"]);
  if (j.contains("initial_point")) t.initial_point = point_from_json(j["initial_point"]);
  if (j.contains("completion")) {
    const auto& comp = j["completion"];
    CompletionParams params;
    params.top_k = comp.value("top_k", 0);
    params.clusters = comp.value("clusters", 3);
    params.include_initial = comp.value("include_initial", false);
    t.completion_params = params;
    for (const auto& p : comp.at("points")) t.completion_points.push_back(point_from_json(p));
  }
  t.mask_ref = j.value("mask_ref", "");
  t.fallbacks = j.value("fallbacks", std::vector<std::string>{});
  if (j.contains("failure") && !j["failure"].is_null()) t.failure = j["failure"].get<std::string>();
  if (j.contains("latencies")) {
    for (const auto& l : j["latencies"]) {
      t.latencies.push_back({l.at("stage").get<std::string>(), l.at("ms").get<double>()});
    }
  }
  return t;
}

std::shared_ptr<mocklab::MockWorld> build_mock_world(const MockConfig& mock, std::uint64_t seed) {
  auto world = std::make_shared<mocklab::MockWorld>();
  for (int i = 0; i < mock.scenes; ++i) {
    world->add(mocklab::gen_scene(mocklab::mix_seed(seed, static_cast<std::uint64_t>(i)), mock.scene));
  }
  return world;
}

PipelineClients make_clients(const PipelineConfig& cfg, std::shared_ptr<const mocklab::MockWorld> world,
                             ParaphraseService* paraphraser) {
  cfg.validate();
  PipelineClients clients;

  const PromptCatalog catalog = cfg.prompt_catalog_path.empty()
                                    ? PromptCatalog::builtin()
                                    : PromptCatalog::load(cfg.prompt_catalog_path);
  clients.chain = build_chain(cfg.prompt_stage, catalog);
  if (cfg.paraphrase_n > 0) {
    clients.chain = paraphrase_expand(clients.chain, cfg.paraphrase_n, paraphraser, catalog);
  }

  const fs::path cache_dir = cfg.resolved_cache_dir();
  if (!cache_dir.empty()) {
    clients.cache = std::make_shared<ReplyCache>(cache_dir / "detector_replies.jsonl");
  }

  std::shared_ptr<DetectorService> detector;
  if (is_mock_endpoint(cfg.detector_endpoint)) {
    if (!world) throw PreconditionError("mock detector endpoint needs a mock world");
    detector = make_mock_detector(world, {cfg.mock.box_noise, cfg.mock.miss_prob, cfg.seed});
  } else {
    detector = make_remote_detector(std::shared_ptr<JsonTransport>(make_transport(cfg.detector_endpoint)),
                                    cfg.retry);
  }
  clients.detector = std::make_shared<DetectorClient>(std::move(detector), clients.cache);

  if (is_mock_endpoint(cfg.extractor_endpoint)) {
    if (!world) throw PreconditionError("mock extractor endpoint needs a mock world");
    clients.extractor = make_mock_extractor(world);
  } else {
    clients.extractor = make_remote_extractor(
        std::shared_ptr<JsonTransport>(make_transport(cfg.extractor_endpoint)), cfg.retry);
  }

  if (is_mock_endpoint(cfg.segmenter_endpoint)) {
    if (!world) throw PreconditionError("mock segmenter endpoint needs a mock world");
    clients.segmenter = make_mock_segmenter(world, cfg.mock.segment_threshold);
  } else {
    clients.segmenter = make_remote_segmenter(
        std::shared_ptr<JsonTransport>(make_transport(cfg.segmenter_endpoint)), cfg.retry);
  }
  return clients;
}

namespace {

std::string scene_file_name(int index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "scene_%04d.png", index);
  return buf;
}

nlohmann::ordered_json mock_index_json(const MockConfig& mock, std::uint64_t seed) {
  nlohmann::ordered_json j;
  j["seed"] = seed;
  j["scenes"] = mock.scenes;
  j["scene"] = {{"image_size", mock.scene.image_size},   {"patch_size", mock.scene.patch_size},
                {"feature_dim", mock.scene.feature_dim}, {"shape", mock.scene.shape},
                {"size_frac", mock.scene.size_frac},     {"max_cos", mock.scene.max_cos},
                {"noise_sigma", mock.scene.noise_sigma}};
  return j;
}

MockConfig mock_config_from_index(const nlohmann::json& j, std::uint64_t& seed) {
  MockConfig mock;
  seed = j.at("seed").get<std::uint64_t>();
  mock.scenes = j.at("scenes").get<int>();
  const auto& s = j.at("scene");
  mock.scene.image_size = s.at("image_size").get<int>();
  mock.scene.patch_size = s.at("patch_size").get<int>();
  mock.scene.feature_dim = s.at("feature_dim").get<int>();
  mock.scene.shape = s.at("shape").get<std::string>();
  mock.scene.size_frac = s.at("size_frac").get<double>();
  mock.scene.max_cos = s.at("max_cos").get<double>();
  mock.scene.noise_sigma = s.at("noise_sigma").get<double>();
  return mock;
}

}  // namespace

DatasetManifest materialize_mock_dataset(const MockConfig& mock, std::uint64_t seed, const fs::path& dir) {
  const fs::path index_path = dir / "scene_index.json";
  const std::string index = mock_index_json(mock, seed).dump(2);
  bool reuse = false;
  if (fs::exists(index_path)) {
    reuse = read_file(index_path) == index;
  }
  if (!reuse) {
    fs::create_directories(dir / "Image");
    fs::create_directories(dir / "GT");
    for (int i = 0; i < mock.scenes; ++i) {
      const auto scene = mocklab::gen_scene(mocklab::mix_seed(seed, static_cast<std::uint64_t>(i)),
                                            mock.scene);
      write_file(dir / "Image" / scene_file_name(i), scene.image.png);
      write_file(dir / "GT" / scene_file_name(i), encode_mask_png(scene.gt));
    }
    write_file(index_path, index);
  }
  return load_manifest(dir, DatasetLayout::Flat, mock.scenes);
}

std::shared_ptr<mocklab::MockWorld> load_mock_world(const fs::path& dir) {
  const auto j = nlohmann::json::parse(read_file(dir / "scene_index.json"));
  std::uint64_t seed = 0;
  const MockConfig mock = mock_config_from_index(j, seed);
  return build_mock_world(mock, seed);
}

namespace {

class StageTimer {
 public:
  explicit StageTimer(PipelineTrace& trace) : trace_(trace), t0_(std::chrono::steady_clock::now()) {}

  void mark(const std::string& stage) {
    const auto t1 = std::chrono::steady_clock::now();
    trace_.latencies.push_back({stage, std::chrono::duration<double, std::milli>(t1 - t0_).count()});
    t0_ = t1;
  }

 private:
  PipelineTrace& trace_;
  std::chrono::steady_clock::time_point t0_;
};

FeatureMap extract_with_cache(const Image& image, const PipelineConfig& cfg, PipelineClients& clients) {
  const fs::path cache_dir = cfg.resolved_cache_dir();
  fs::path path;
  if (!cache_dir.empty()) {
    const std::string tag = sha256_hex(clients.extractor->describe().id + "|" +
                                       std::to_string(cfg.resize_policy.short_side) + "|" +
                                       cfg.resize_policy.mode)
                                .substr(0, 16);
    path = cache_dir / "fmaps" / (image.sha256 + "-" + tag + ".fmap");
    if (fs::exists(path)) {
      try {
        return load_feature_map(path);
      } catch (const std::exception&) {
        // Corrupt cache entry; fall through and re-extract.
      }
    }
  }
  FeatureMap fm = clients.extractor->extract(image, cfg.resize_policy);
  if (!path.empty()) {
    const fs::path tmp = path.string() + ".tmp";
    save_feature_map(tmp, fm);
    fs::rename(tmp, path);
  }
  return fm;
}

}  // namespace

std::pair<SoftMask, PipelineTrace> run_pipeline(const Image& image, const std::string& image_id,
                                                const PipelineConfig& cfg, PipelineClients& clients) {
  PipelineTrace trace;
  trace.image_id = image_id;
  trace.image_sha256 = image.sha256;
  trace.chain_id = clients.chain.chain_id;
  SoftMask empty_mask = SoftMask::filled(image.height(), image.width(), 0.0f);

  try {
    StageTimer timer(trace);
    const std::string service_id = clients.detector->info().id;
    for (std::size_t i = 0; i < clients.chain.entries.size(); ++i) {
      const std::string& prompt = clients.chain.entries[i].text;
      trace.prompts.push_back(prompt);
      DetectorReply reply = clients.detector->query(image, prompt);
      trace.replies.push_back(
          {ReplyCache::make_key(image.sha256, sha256_hex(prompt), service_id), reply.cached,
           reply.latency_ms});
      try {
        auto dets = parse_boxes(reply.raw_text);
        for (auto& d : dets) d.source_prompt_index = static_cast<int>(i);
        trace.detections.push_back(std::move(dets));
      } catch (const NoDetectionError&) {
        trace.detections.push_back({});
      }
    }
    timer.mark("detect");

    BoundingBox box;
    ImagePoint initial;
    try {
      std::tie(box, initial) = aggregate_detections(trace.detections, cfg.aggregation);
    } catch (const NoDetectionError&) {
      if (cfg.fallback == FallbackPolicy::Skip) {
        trace.fallbacks.push_back("no_detection:skip");
        return {std::move(empty_mask), std::move(trace)};
      }
      trace.fallbacks.push_back("no_detection:full_frame_box");
      box = {0.0, 0.0, 1.0, 1.0};
      initial = bbox_center(box);
    }
    trace.box = box;
    trace.initial_point = initial;
    timer.mark("aggregate");

    std::vector<ImagePoint> points;
    if (cfg.use_completion) {
      const FeatureMap fm = extract_with_cache(image, cfg, clients);
      timer.mark("extract");
      const CompletionResult comp =
          complete(fm, initial, {cfg.top_k, cfg.clusters, cfg.include_initial});
      trace.completion_params = comp.params;
      trace.completion_points = comp.prompts;
      points = comp.prompts;
      timer.mark("complete");
    } else {
      points = {initial};
    }

    const auto candidates = clients.segmenter->segment(
        image, points, cfg.prompt_box ? std::optional<BoundingBox>(box) : std::nullopt);
    SoftMask mask = select_mask(candidates);
    timer.mark("segment");
    return {std::move(mask), std::move(trace)};
  } catch (const std::exception& e) {
    trace.failure = e.what();
    return {std::move(empty_mask), std::move(trace)};
  }
}

BenchResult run_benchmark(const DatasetManifest& manifest, const PipelineConfig& cfg,
                          PipelineClients& clients, const BenchOptions& opts) {
  const int n = static_cast<int>(manifest.pairs.size());
  if (n == 0) throw PreconditionError("empty manifest");
  const int workers = std::max(1, opts.workers);

  std::vector<ImageScore> scores(static_cast<size_t>(n));
  std::vector<SkippedImage> skip_entries(static_cast<size_t>(n));
  std::vector<char> scored(static_cast<size_t>(n), 0), skipped(static_cast<size_t>(n), 0),
      failed(static_cast<size_t>(n), 0);
  std::vector<PipelineTrace> traces(static_cast<size_t>(n));

#pragma omp parallel for schedule(dynamic) num_threads(workers)
  for (int i = 0; i < n; ++i) {
    const SamplePair& pair = manifest.pairs[i];
    try {
      const Image image = Image::load(pair.image_path);
      const BinaryMask gt = read_binary_mask_png(pair.gt_path, 128);
      auto [mask, trace] = run_pipeline(image, pair.image_id, cfg, clients);
      trace.image_path = pair.image_path.string();
      if (!opts.out_dir.empty() && opts.write_masks) {
        const fs::path mask_path = opts.out_dir / "masks" / (pair.image_id + ".png");
        write_mask_png(mask_path, mask);
        trace.mask_ref = mask_path.string();
      }
      if (!opts.out_dir.empty() && opts.write_overlays && !trace.failure) {
        write_file(opts.out_dir / "overlays" / (pair.image_id + ".png"),
                   render_overlay(image, trace, mask));
      }
      if (trace.failure) {
        failed[i] = 1;
      } else if (gt.foreground_count() == 0) {
        skipped[i] = 1;
        skip_entries[i] = {pair.image_id, "empty ground truth; weighted F-measure undefined"};
      } else {
        const SoftMask pred = (mask.height != gt.height || mask.width != gt.width)
                                  ? resize_soft_mask(mask, gt.height, gt.width)
                                  : mask;
        scores[i] = score_pair(pred, gt, pair.image_id);
        scored[i] = 1;
      }
      traces[i] = std::move(trace);
    } catch (const std::exception& e) {
      PipelineTrace trace;
      trace.image_id = pair.image_id;
      trace.image_path = pair.image_path.string();
      trace.failure = e.what();
      traces[i] = std::move(trace);
      failed[i] = 1;
    }
  }

  std::vector<ImageScore> kept;
  std::vector<SkippedImage> kept_skips;
  int n_failed = 0;
  for (int i = 0; i < n; ++i) {
    if (scored[i]) kept.push_back(scores[i]);
    if (skipped[i]) kept_skips.push_back(skip_entries[i]);
    if (failed[i]) ++n_failed;
  }

  BenchResult result;
  result.report = make_report(manifest.dataset_id, std::move(kept), std::move(kept_skips), n_failed);
  result.traces = std::move(traces);

  if (!opts.out_dir.empty()) {
    if (opts.write_traces) {
      std::string lines;
      for (const auto& t : result.traces) lines += t.to_json(true) + "\n";
      write_file(opts.out_dir / "traces.jsonl", lines);
    }
    write_file(opts.out_dir / "report.json", result.report.to_json());
    write_file(opts.out_dir / "report.txt", result.report.to_table());
  }
  return result;
}

std::vector<BenchResult> run_ablation(const DatasetManifest& manifest, const PipelineConfig& cfg,
                                      std::shared_ptr<const mocklab::MockWorld> world,
                                      const BenchOptions& opts) {
  const PromptStage stages[5] = {PromptStage::Baseline, PromptStage::PhysicalAttr,
                                 PromptStage::DynamicAttr, PromptStage::Polysemy, PromptStage::Diverse};
  std::vector<BenchResult> results;
  std::vector<std::string> prev_texts;
  for (int row = 1; row <= 6; ++row) {
    PipelineConfig row_cfg = cfg;
    row_cfg.prompt_stage = row <= 5 ? stages[row - 1] : PromptStage::Diverse;
    row_cfg.use_completion = row == 6;
    // Stage expansion applies only where the diversity stage is active.
    if (row_cfg.prompt_stage != PromptStage::Diverse) row_cfg.paraphrase_n = 0;

    PipelineClients clients = make_clients(row_cfg, world);
    const auto texts = clients.chain.texts();
    if (row <= 5) {
      for (const auto& t : prev_texts) {
        if (std::find(texts.begin(), texts.end(), t) == texts.end()) {
          throw Error("ablation stage regression: row " + std::to_string(row) +
                      " dropped a prompt of the previous row");
        }
      }
      if (row > 1 && texts.size() <= prev_texts.size()) {
        throw Error("ablation stage regression: row " + std::to_string(row) +
                    " is not a strict superset of the previous row");
      }
      prev_texts = texts;
    }

    BenchOptions row_opts = opts;
    if (!opts.out_dir.empty()) row_opts.out_dir = opts.out_dir / ("row" + std::to_string(row));
    BenchResult result = run_benchmark(manifest, row_cfg, clients, row_opts);
    result.report.dataset_id = manifest.dataset_id + "#row" + std::to_string(row);
    results.push_back(std::move(result));
  }
  return results;
}

std::string render_overlay(const Image& image, const PipelineTrace& trace, const SoftMask& mask) {
  cv::Mat canvas = image.bgr.clone();
  const int w = canvas.cols, h = canvas.rows;

  if (mask.height == h && mask.width == w) {
    cv::Mat mask8(h, w, CV_8UC1);
    for (int r = 0; r < h; ++r) {
      auto* row = mask8.ptr<std::uint8_t>(r);
      for (int c = 0; c < w; ++c) row[c] = mask.at(r, c) >= 0.5f ? 255 : 0;
    }
    std::vector<std::vector<cv::Point>> contours;
    cv::findContours(mask8, contours, cv::RETR_EXTERNAL, cv::CHAIN_APPROX_SIMPLE);
    cv::drawContours(canvas, contours, -1, cv::Scalar(0, 255, 255), 2);
  }

  if (trace.box) {
    const auto& b = *trace.box;
    cv::rectangle(canvas,
                  cv::Point(static_cast<int>(b.x1 * w), static_cast<int>(b.y1 * h)),
                  cv::Point(static_cast<int>(b.x2 * w) - 1, static_cast<int>(b.y2 * h) - 1),
                  cv::Scalar(0, 200, 0), 2);
  }
  const int marker = std::max(4, std::min(h, w) / 60);
  for (const auto& p : trace.completion_points) {
    cv::circle(canvas, cv::Point(static_cast<int>(p.x * w), static_cast<int>(p.y * h)), marker,
               cv::Scalar(255, 128, 0), cv::FILLED);
  }
  if (trace.initial_point) {
    cv::drawMarker(canvas,
                   cv::Point(static_cast<int>(trace.initial_point->x * w),
                             static_cast<int>(trace.initial_point->y * h)),
                   cv::Scalar(0, 0, 255), cv::MARKER_TILTED_CROSS, marker * 3, 2);
  }
  if (!trace.box) {
    cv::rectangle(canvas, cv::Point(0, 0), cv::Point(w - 1, 28), cv::Scalar(0, 0, 0), cv::FILLED);
    cv::putText(canvas, "NO DETECTION", cv::Point(8, 20), cv::FONT_HERSHEY_SIMPLEX, 0.6,
                cv::Scalar(0, 0, 255), 2);
  }

  std::vector<unsigned char> buf;
  if (!cv::imencode(".png", canvas, buf)) throw Error("overlay png encode failed");
  return std::string(buf.begin(), buf.end());
}

}  // namespace covp
