// covp: zero-shot camouflaged-object segmentation pipeline driver.
//   run       single image through the pipeline, with overlay and trace
//   bench     dataset benchmark -> report + masks + traces
//   ablate    six-row prompt/completion ablation protocol
//   score     metrics only, over prediction and ground-truth directories
//   viz       re-render overlays from a trace file
//   validate  dataset layout check
// Every pipeline subcommand accepts --mock to swap all services for the
// offline planted-scene mocks.
#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>

#include "covp/datasets.hpp"
#include "covp/image_io.hpp"
#include "covp/metrics.hpp"
#include "covp/pipeline.hpp"
#include "covp/segmenter_client.hpp"

using namespace covp;
namespace fs = std::filesystem;

namespace {

struct ConfigCli {
  std::string config_path;
  std::optional<std::string> stage;
  std::optional<std::string> aggregation;
  std::optional<int> top_k;
  std::optional<int> clusters;
  std::optional<bool> include_initial;
  std::optional<bool> prompt_box;
  std::optional<bool> no_completion;
  std::optional<std::string> fallback;
  std::optional<int> parallelism;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> cache_dir;
  std::optional<std::string> detector;
  std::optional<std::string> extractor;
  std::optional<std::string> segmenter;
  std::optional<int> paraphrase_n;
  std::optional<int> mock_scenes;
  bool mock = false;

  void attach(CLI::App* cmd) {
    cmd->add_option("--config", config_path, "pipeline config JSON file");
    cmd->add_option("--stage", stage, "prompt stage: baseline|physical_attr|dynamic_attr|polysemy|diverse");
    cmd->add_option("--aggregation", aggregation, "box aggregation: first_success|median_box|union_box");
    cmd->add_option("--top-k", top_k, "similarity candidates (0 = auto)");
    cmd->add_option("--clusters", clusters, "number of completed point prompts");
    cmd->add_flag("--include-initial", [this](std::int64_t) { include_initial = true; },
                  "also send the initial point to the segmenter");
    cmd->add_flag("--prompt-box", [this](std::int64_t) { prompt_box = true; },
                  "forward the aggregated box to the segmenter");
    cmd->add_flag("--no-completion", [this](std::int64_t) { no_completion = true; },
                  "prompt with the initial point only");
    cmd->add_option("--fallback", fallback, "no-detection policy: skip|full_frame_box");
    cmd->add_option("--parallelism,-j", parallelism, "worker count for batch runs");
    cmd->add_option("--seed", seed, "run seed (mock scenes, detector noise)");
    cmd->add_option("--cache-dir", cache_dir, "reply/feature cache directory (env COVP_CACHE_DIR wins)");
    cmd->add_option("--detector", detector, "detector endpoint (http://..., exec:..., mock:)");
    cmd->add_option("--extractor", extractor, "feature extractor endpoint");
    cmd->add_option("--segmenter", segmenter, "segmenter endpoint");
    cmd->add_option("--paraphrase-n", paraphrase_n, "extra diverse paraphrases to append");
    cmd->add_option("--mock-scenes", mock_scenes, "number of synthetic scenes in mock mode");
    cmd->add_flag("--mock", mock, "use the offline mock services");
  }

  PipelineConfig resolve() const {
    PipelineConfig cfg = config_path.empty() ? PipelineConfig{} : PipelineConfig::load(config_path);
    if (stage) cfg.prompt_stage = prompt_stage_from_string(*stage);
    if (aggregation) cfg.aggregation = aggregation_from_string(*aggregation);
    if (top_k) cfg.top_k = *top_k;
    if (clusters) cfg.clusters = *clusters;
    if (include_initial) cfg.include_initial = true;
    if (prompt_box) cfg.prompt_box = true;
    if (no_completion) cfg.use_completion = false;
    if (fallback) cfg.fallback = fallback_from_string(*fallback);
    if (parallelism) cfg.parallelism = *parallelism;
    if (seed) cfg.seed = *seed;
    if (cache_dir) cfg.cache_dir = *cache_dir;
    if (detector) cfg.detector_endpoint = *detector;
    if (extractor) cfg.extractor_endpoint = *extractor;
    if (segmenter) cfg.segmenter_endpoint = *segmenter;
    if (paraphrase_n) cfg.paraphrase_n = *paraphrase_n;
    if (mock_scenes) cfg.mock.scenes = *mock_scenes;
    if (mock) {
      cfg.detector_endpoint = "mock:";
      cfg.extractor_endpoint = "mock:";
      cfg.segmenter_endpoint = "mock:";
    }
    cfg.validate();
    return cfg;
  }

  bool wants_mock(const PipelineConfig& cfg) const {
    return mock || is_mock_endpoint(cfg.detector_endpoint) || is_mock_endpoint(cfg.extractor_endpoint) ||
           is_mock_endpoint(cfg.segmenter_endpoint);
  }
};

void print_trace_summary(const PipelineTrace& trace) {
  std::printf("image      %s\n", trace.image_id.c_str());
  std::printf("chain      %s (%zu prompts)\n", trace.chain_id.substr(0, 12).c_str(),
              trace.prompts.size());
  if (trace.box) {
    std::printf("box        [%.4f, %.4f, %.4f, %.4f]\n", trace.box->x1, trace.box->y1, trace.box->x2,
                trace.box->y2);
  }
  if (trace.initial_point) {
    std::printf("initial    (%.4f, %.4f)\n", trace.initial_point->x, trace.initial_point->y);
  }
  for (const auto& p : trace.completion_points) {
    std::printf("completed  (%.4f, %.4f)\n", p.x, p.y);
  }
  for (const auto& f : trace.fallbacks) std::printf("fallback   %s\n", f.c_str());
  for (const auto& l : trace.latencies) std::printf("latency    %-10s %8.2f ms\n", l.stage.c_str(), l.ms);
  if (trace.failure) std::printf("FAILED     %s\n", trace.failure->c_str());
}

int cmd_run(const ConfigCli& cli, const std::string& image_arg, const std::string& out_dir,
            std::uint64_t scene_seed, bool have_scene_seed) {
  PipelineConfig cfg = cli.resolve();
  std::shared_ptr<mocklab::MockWorld> world;
  Image image;
  std::string image_id;
  std::optional<BinaryMask> gt;

  if (cli.wants_mock(cfg)) {
    MockConfig one = cfg.mock;
    one.scenes = 1;
    const std::uint64_t seed = have_scene_seed ? scene_seed : cfg.seed;
    auto scene = mocklab::gen_scene(seed, one.scene);
    gt = scene.gt;
    image = scene.image;
    image_id = "mock-scene-" + std::to_string(seed);
    auto w = std::make_shared<mocklab::MockWorld>();
    w->add(std::move(scene));
    world = w;
  } else {
    image = Image::load(image_arg);
    image_id = fs::path(image_arg).stem().string();
  }

  PipelineClients clients = make_clients(cfg, world);
  auto [mask, trace] = run_pipeline(image, image_id, cfg, clients);
  trace.image_path = cli.wants_mock(cfg) ? "" : image_arg;

  if (!out_dir.empty()) {
    const fs::path out(out_dir);
    write_mask_png(out / (image_id + "_mask.png"), mask);
    trace.mask_ref = (out / (image_id + "_mask.png")).string();
    write_file(out / (image_id + "_overlay.png"), render_overlay(image, trace, mask));
    write_file(out / (image_id + "_trace.json"), trace.to_json(true) + "\n");
    if (cli.wants_mock(cfg)) {
      write_file(out / (image_id + ".png"), image.png);
      if (gt) write_file(out / (image_id + "_gt.png"), encode_mask_png(*gt));
    }
    std::printf("artifacts  %s\n", out.string().c_str());
  }
  print_trace_summary(trace);
  if (gt) {
    std::printf("iou        %.4f\n", mask_iou(binarize(mask, 0.5), *gt));
  }
  return trace.failure ? 1 : 0;
}

DatasetManifest resolve_manifest(const ConfigCli& cli, PipelineConfig& cfg, const std::string& root,
                                 const std::string& layout, std::optional<int> expect,
                                 std::shared_ptr<mocklab::MockWorld>& world) {
  if (cli.wants_mock(cfg)) {
    const DatasetManifest manifest = materialize_mock_dataset(cfg.mock, cfg.seed, root);
    world = load_mock_world(root);
    return manifest;
  }
  return load_manifest(root, layout_from_string(layout), expect);
}

int cmd_bench(const ConfigCli& cli, const std::string& root, const std::string& layout,
              std::optional<int> expect, const std::string& out_dir, std::optional<int> workers,
              bool masks, bool overlays, bool traces) {
  PipelineConfig cfg = cli.resolve();
  std::shared_ptr<mocklab::MockWorld> world;
  const DatasetManifest manifest = resolve_manifest(cli, cfg, root, layout, expect, world);
  PipelineClients clients = make_clients(cfg, world);

  BenchOptions opts;
  opts.workers = workers.value_or(cfg.parallelism);
  opts.out_dir = out_dir;
  opts.write_masks = masks || !out_dir.empty();
  opts.write_traces = traces || !out_dir.empty();
  opts.write_overlays = overlays;
  const BenchResult result = run_benchmark(manifest, cfg, clients, opts);
  std::fputs(result.report.to_table().c_str(), stdout);
  return result.report.n_images > 0 ? 0 : 1;
}

int cmd_ablate(const ConfigCli& cli, const std::string& root, const std::string& layout,
               std::optional<int> expect, const std::string& out_dir, std::optional<int> workers) {
  PipelineConfig cfg = cli.resolve();
  std::shared_ptr<mocklab::MockWorld> world;
  const DatasetManifest manifest = resolve_manifest(cli, cfg, root, layout, expect, world);

  BenchOptions opts;
  opts.workers = workers.value_or(cfg.parallelism);
  opts.out_dir = out_dir;
  const auto results = run_ablation(manifest, cfg, world, opts);

  std::printf("%-44s %8s %8s %8s\n", "row", "Fbw", "Sa", "MAE");
  const char* names[6] = {"1. baseline",
                          "2. baseline+PA",
                          "3. baseline+PA+DA",
                          "4. baseline+PA+DA+polysemy",
                          "5. baseline+PA+DA+polysemy+diverse",
                          "6. baseline+PA+DA+polysemy+diverse+completion"};
  for (std::size_t i = 0; i < results.size(); ++i) {
    const auto& r = results[i].report;
    std::printf("%-44s %8.4f %8.4f %8.4f\n", names[i], r.mean_f_beta_w, r.mean_s_alpha, r.mean_mae);
  }
  if (!out_dir.empty()) {
    std::string combined;
    for (const auto& r : results) combined += r.report.to_json() + "\n";
    write_file(fs::path(out_dir) / "ablation_reports.jsonl", combined);
  }
  return 0;
}

int cmd_score(const std::string& pred_dir, const std::string& gt_dir, const std::string& out_dir,
              const std::string& dataset_id) {
  std::map<std::string, fs::path> gt_by_stem;
  for (const auto& e : fs::directory_iterator(gt_dir)) {
    if (!e.is_regular_file()) continue;
    std::string stem = e.path().stem().string();
    std::transform(stem.begin(), stem.end(), stem.begin(),
                   [](unsigned char c) { return std::tolower(c); });
    gt_by_stem.emplace(stem, e.path());
  }
  std::vector<EvalPair> pairs;
  std::vector<fs::path> preds;
  for (const auto& e : fs::directory_iterator(pred_dir)) {
    if (e.is_regular_file()) preds.push_back(e.path());
  }
  std::sort(preds.begin(), preds.end());
  int unmatched = 0;
  for (const auto& p : preds) {
    std::string stem = p.stem().string();
    std::string key = stem;
    std::transform(key.begin(), key.end(), key.begin(), [](unsigned char c) { return std::tolower(c); });
    const auto it = gt_by_stem.find(key);
    if (it == gt_by_stem.end()) {
      ++unmatched;
      continue;
    }
    const BinaryMask gt = read_binary_mask_png(it->second, 128);
    SoftMask pred = read_soft_mask_png(p);
    if (pred.height != gt.height || pred.width != gt.width) {
      pred = resize_soft_mask(pred, gt.height, gt.width);
    }
    pairs.push_back({std::move(pred), gt, stem});
  }
  if (unmatched > 0) {
    std::fprintf(stderr, "warning: %d predictions had no matching ground truth\n", unmatched);
  }
  const EvalReport report = evaluate_pairs(dataset_id, pairs);
  std::fputs(report.to_table().c_str(), stdout);
  if (!out_dir.empty()) {
    write_file(fs::path(out_dir) / "report.json", report.to_json());
    write_file(fs::path(out_dir) / "report.txt", report.to_table());
  }
  return 0;
}

int cmd_viz(const std::string& trace_file, const std::string& out_dir) {
  std::ifstream in(trace_file);
  if (!in) throw Error("cannot open trace file: " + trace_file);
  const fs::path out = out_dir.empty() ? fs::path("overlays") : fs::path(out_dir);
  std::string line;
  int rendered = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const PipelineTrace trace = PipelineTrace::from_json(line);
    if (trace.image_path.empty()) {
      std::fprintf(stderr, "skip %s: no image path recorded\n", trace.image_id.c_str());
      continue;
    }
    const Image image = Image::load(trace.image_path);
    SoftMask mask = SoftMask::filled(image.height(), image.width(), 0.0f);
    if (!trace.mask_ref.empty() && fs::exists(trace.mask_ref)) {
      mask = read_soft_mask_png(trace.mask_ref);
    }
    write_file(out / (trace.image_id + ".png"), render_overlay(image, trace, mask));
    ++rendered;
  }
  std::printf("rendered %d overlays into %s\n", rendered, out.string().c_str());
  return rendered > 0 ? 0 : 1;
}

int cmd_validate(const std::string& root, const std::string& layout, std::optional<int> expect) {
  const DatasetManifest manifest = load_manifest(root, layout_from_string(layout), expect);
  std::printf("dataset %s: %zu pairs, %zu manifest warnings\n", manifest.dataset_id.c_str(),
              manifest.pairs.size(), manifest.warnings.size());
  const ValidationReport report = validate_manifest(manifest);
  std::fputs(report.to_text().c_str(), stdout);
  return report.failures.empty() ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"zero-shot camouflaged object segmentation pipeline"};
  app.require_subcommand(1);

  // run
  auto* run = app.add_subcommand("run", "segment a single image");
  ConfigCli run_cli;
  run_cli.attach(run);
  std::string run_image;
  std::string run_out = "out";
  std::uint64_t run_scene_seed = 0;
  run->add_option("image", run_image, "input image (omit with --mock)");
  run->add_option("--out", run_out, "artifact directory");
  auto* seed_opt = run->add_option("--scene-seed", run_scene_seed, "mock scene seed");

  // bench
  auto* bench = app.add_subcommand("bench", "run a dataset benchmark");
  ConfigCli bench_cli;
  bench_cli.attach(bench);
  std::string bench_root, bench_layout = "flat", bench_out;
  std::optional<int> bench_expect, bench_workers;
  bool bench_overlays = false;
  bench->add_option("dataset-root", bench_root, "dataset root directory")->required();
  bench->add_option("--layout", bench_layout, "camo|cod10k|nc4k|ovcamo|moca_mask|flat");
  bench->add_option("--expect-count", bench_expect, "fail unless the manifest has this many pairs");
  bench->add_option("--out", bench_out, "artifact directory (reports, masks, traces)");
  bench->add_option("--workers", bench_workers, "override config parallelism");
  bench->add_flag("--overlays", bench_overlays, "also write overlay renderings");

  // ablate
  auto* ablate = app.add_subcommand("ablate", "run the six-row ablation protocol");
  ConfigCli ablate_cli;
  ablate_cli.attach(ablate);
  std::string ablate_root, ablate_layout = "flat", ablate_out;
  std::optional<int> ablate_expect, ablate_workers;
  ablate->add_option("dataset-root", ablate_root, "dataset root directory")->required();
  ablate->add_option("--layout", ablate_layout, "dataset layout");
  ablate->add_option("--expect-count", ablate_expect, "fail unless the manifest has this many pairs");
  ablate->add_option("--out", ablate_out, "artifact directory");
  ablate->add_option("--workers", ablate_workers, "override config parallelism");

  // score
  auto* score = app.add_subcommand("score", "score predictions against ground truth (no services)");
  std::string score_pred, score_gt, score_out, score_id = "score";
  score->add_option("--pred-dir", score_pred, "directory of prediction PNGs")->required();
  score->add_option("--gt-dir", score_gt, "directory of ground-truth PNGs")->required();
  score->add_option("--out", score_out, "artifact directory");
  score->add_option("--dataset-id", score_id, "label for the report");

  // viz
  auto* viz = app.add_subcommand("viz", "re-render overlays from a traces.jsonl file");
  std::string viz_traces, viz_out;
  viz->add_option("traces", viz_traces, "traces.jsonl produced by bench/run")->required();
  viz->add_option("--out", viz_out, "output directory (default: overlays/)");

  // validate
  auto* validate = app.add_subcommand("validate", "check a dataset layout decodes cleanly");
  std::string val_root, val_layout = "flat";
  std::optional<int> val_expect;
  validate->add_option("dataset-root", val_root, "dataset root directory")->required();
  validate->add_option("--layout", val_layout, "dataset layout");
  validate->add_option("--expect-count", val_expect, "expected pair count");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) {
      if (run_image.empty() && !run_cli.mock) {
        std::fprintf(stderr, "run: an image path is required unless --mock is given\n");
        return 2;
      }
      return cmd_run(run_cli, run_image, run_out, run_scene_seed, seed_opt->count() > 0);
    }
    if (bench->parsed()) {
      return cmd_bench(bench_cli, bench_root, bench_layout, bench_expect, bench_out, bench_workers,
                       false, bench_overlays, false);
    }
    if (ablate->parsed()) {
      return cmd_ablate(ablate_cli, ablate_root, ablate_layout, ablate_expect, ablate_out,
                        ablate_workers);
    }
    if (score->parsed()) return cmd_score(score_pred, score_gt, score_out, score_id);
    if (viz->parsed()) return cmd_viz(viz_traces, viz_out);
    if (validate->parsed()) return cmd_validate(val_root, val_layout, val_expect);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
