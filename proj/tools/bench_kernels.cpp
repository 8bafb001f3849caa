// Timing harness for the parallel kernels against their serial references.
// The references are the same brute-force implementations the tests verify
// against, so the numbers double as an agreement check.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "covp/metrics.hpp"
#include "covp/mock_lab.hpp"
#include "covp/visual_completion.hpp"

using namespace covp;

namespace {

std::uint64_t g_state = 0xBE9CULL;

double timed(const std::function<void()>& fn, int repeats) {
  double best = 1e18;
  for (int i = 0; i < repeats; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    fn();
    const auto t1 = std::chrono::steady_clock::now();
    best = std::min(best, std::chrono::duration<double, std::milli>(t1 - t0).count());
  }
  return best;
}

SoftMask random_soft(int h, int w) {
  SoftMask mask{h, w, {}};
  mask.values.resize(static_cast<size_t>(h) * w);
  for (auto& v : mask.values) v = static_cast<float>(mocklab::uniform01(g_state));
  return mask;
}

BinaryMask blob_gt(int size) {
  BinaryMask mask = BinaryMask::filled(size, size, 0);
  const double cx = size * 0.45, cy = size * 0.55, a = size * 0.22, b = size * 0.16;
  for (int r = 0; r < size; ++r) {
    for (int c = 0; c < size; ++c) {
      const double dx = (c - cx) / a, dy = (r - cy) / b;
      if (dx * dx + dy * dy <= 1.0) mask.at(r, c) = 1;
    }
  }
  return mask;
}

void row(const char* name, double reference_ms, double optimized_ms, double agreement) {
  std::printf("%-26s %12.2f %12.2f %9.1fx %12.2e\n", name, reference_ms, optimized_ms,
              reference_ms / optimized_ms, agreement);
}

}  // namespace

int main() {
#ifdef _OPENMP
  std::printf("threads: %d (OpenMP)\n", omp_get_max_threads());
#else
  std::printf("threads: 1 (OpenMP disabled)\n");
#endif
  std::printf("%-26s %12s %12s %9s %12s\n", "kernel", "serial ms", "kernel ms", "speedup", "|delta|");

  {  // weighted F-measure, size where the brute-force reference is feasible
    const int size = 96;
    const SoftMask pred = random_soft(size, size);
    const BinaryMask gt = blob_gt(size);
    double a = 0, b = 0;
    const double t_ref = timed([&] { a = mocklab::oracle_fbw(pred, gt); }, 3);
    const double t_opt = timed([&] { b = weighted_fbeta(pred, gt); }, 3);
    row("weighted_fbeta 96x96", t_ref, t_opt, std::abs(a - b));
  }
  {  // S-measure scales linearly, so the full benchmark size is fine
    const int size = 448;
    const SoftMask pred = random_soft(size, size);
    const BinaryMask gt = blob_gt(size);
    double a = 0, b = 0;
    const double t_ref = timed([&] { a = mocklab::oracle_smeasure(pred, gt); }, 3);
    const double t_opt = timed([&] { b = s_measure(pred, gt); }, 3);
    row("s_measure 448x448", t_ref, t_opt, std::abs(a - b));
  }
  {  // top-k selection vs full sort
    SimilarityMap sim;
    sim.height = 512;
    sim.width = 512;
    sim.scores.resize(512 * 512);
    for (auto& s : sim.scores) s = static_cast<float>(mocklab::uniform01(g_state) * 2.0 - 1.0);
    const int k = 512 * 512 / 100;
    std::vector<ScoredCell> a, b;
    const double t_ref = timed([&] { a = mocklab::oracle_topk(sim, k); }, 5);
    const double t_opt = timed([&] { b = top_k(sim, k); }, 5);
    row("top_k 512x512 k=1%", t_ref, t_opt, a == b ? 0.0 : 1.0);
  }
  {  // similarity map, serial vs parallel team
    mocklab::SceneParams params;
    params.image_size = 448;
    params.patch_size = 4;  // 112x112 grid
    params.feature_dim = 256;
    params.noise_sigma = 0.1;
    const auto scene = mocklab::gen_scene(7, params);
    const auto f = sample_feature(scene.features, {0.5, 0.5});
    SimilarityMap out;
#ifdef _OPENMP
    omp_set_num_threads(1);
#endif
    const double t_serial = timed([&] { out = similarity_map(scene.features, f); }, 5);
    const float probe_serial = out.scores[0];
#ifdef _OPENMP
    omp_set_num_threads(omp_get_num_procs());
#endif
    const double t_par = timed([&] { out = similarity_map(scene.features, f); }, 5);
    row("similarity 112x112x256", t_serial, t_par, std::abs(probe_serial - out.scores[0]));
  }
  {  // full weighted-fbeta throughput at benchmark resolution (no reference)
    const int size = 448;
    const SoftMask pred = random_soft(size, size);
    const BinaryMask gt = blob_gt(size);
    double v = 0;
    const double t_opt = timed([&] { v = weighted_fbeta(pred, gt); }, 3);
    std::printf("%-26s %12s %12.2f %9s %12s  (Fbw=%.4f)\n", "weighted_fbeta 448x448", "-", t_opt, "-",
                "-", v);
  }
  return 0;
}
