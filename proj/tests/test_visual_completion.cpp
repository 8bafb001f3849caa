#include <doctest.h>

#ifdef _OPENMP
#include <omp.h>
#endif

#include <cmath>
#include <set>

#include "covp/errors.hpp"
#include "covp/mock_lab.hpp"
#include "covp/visual_completion.hpp"
#include "test_support.hpp"

using namespace covp;

namespace {

FeatureMap make_fm(int h, int w, int dim, std::vector<float> data, int patch = 1) {
  return FeatureMap{h, w, dim, patch, std::move(data)};
}

SimilarityMap random_sim(std::uint64_t seed, int h, int w, bool quantize) {
  std::uint64_t state = mocklab::mix_seed(seed, 0x7071ULL);
  SimilarityMap sim;
  sim.height = h;
  sim.width = w;
  sim.scores.resize(static_cast<size_t>(h) * w);
  for (auto& s : sim.scores) {
    double v = mocklab::uniform01(state) * 2.0 - 1.0;
    if (quantize) v = std::round(v * 4.0) / 4.0;  // force plenty of ties
    s = static_cast<float>(v);
  }
  return sim;
}

}  // namespace

TEST_SUITE_BEGIN("visual_completion");

TEST_CASE("similarity_map matches brute-force cosine on four cells") {
  const FeatureMap fm = make_fm(2, 2, 2, {1, 0, 0, 1, 1, 0, 0.6f, 0.8f});
  const std::vector<float> f_i{1, 0};
  const SimilarityMap sim = similarity_map(fm, f_i);
  CHECK(sim.scores[0] == doctest::Approx(1.0).epsilon(1e-7));
  CHECK(sim.scores[1] == doctest::Approx(0.0).epsilon(1e-7));
  CHECK(sim.scores[2] == doctest::Approx(1.0).epsilon(1e-7));
  CHECK(sim.scores[3] == doctest::Approx(0.6).epsilon(1e-7));
}

TEST_CASE("similarity self-match scores exactly one") {
  std::uint64_t state = 5;
  std::vector<float> data(3 * 4 * 8);
  for (auto& v : data) v = static_cast<float>(mocklab::gaussian(state));
  const FeatureMap fm = make_fm(3, 4, 8, data);
  const auto f = sample_feature(fm, cell_to_point(1, 2, fm));
  const SimilarityMap sim = similarity_map(fm, f);
  CHECK(sim.at(1, 2) == 1.0f);
}

TEST_CASE("similarity is invariant under positive per-cell rescaling") {
  std::uint64_t state = 6;
  std::vector<float> data(4 * 4 * 6);
  for (auto& v : data) v = static_cast<float>(mocklab::gaussian(state));
  FeatureMap fm = make_fm(4, 4, 6, data);
  const std::vector<float> f = sample_feature(fm, cell_to_point(0, 0, fm));
  const SimilarityMap before = similarity_map(fm, f);
  FeatureMap scaled = fm;
  for (auto& v : scaled.data) v *= 7.0f;
  const SimilarityMap after = similarity_map(scaled, f);
  for (std::size_t i = 0; i < before.scores.size(); ++i) {
    CHECK(after.scores[i] == doctest::Approx(before.scores[i]).epsilon(1e-6));
  }
}

TEST_CASE("similarity rejects a zero query and sentinels zero-norm cells") {
  const FeatureMap fm = make_fm(1, 2, 2, {0, 0, 1, 0});
  CHECK_THROWS_AS(similarity_map(fm, std::vector<float>{0, 0}), PreconditionError);
  const SimilarityMap sim = similarity_map(fm, std::vector<float>{1, 0});
  CHECK(sim.scores[0] == -1.0f);
  CHECK(sim.scores[1] == 1.0f);
}

TEST_CASE("sample_feature examples") {
  std::vector<float> data(5 * 6 * 2);
  for (int r = 0; r < 5; ++r) {
    for (int c = 0; c < 6; ++c) {
      data[(r * 6 + c) * 2] = static_cast<float>(r);
      data[(r * 6 + c) * 2 + 1] = static_cast<float>(c);
    }
  }
  const FeatureMap fm = make_fm(5, 6, 2, data);
  CHECK(sample_feature(fm, cell_to_point(3, 4, fm)) == std::vector<float>{3, 4});
  CHECK(sample_feature(fm, {1.0, 1.0}) == std::vector<float>{4, 5});
  for (int r = 0; r < 5; ++r) {
    for (int c = 0; c < 6; ++c) {
      CHECK(sample_feature(fm, cell_to_point(r, c, fm)) ==
            std::vector<float>{static_cast<float>(r), static_cast<float>(c)});
    }
  }
}

TEST_CASE("top_k examples") {
  SimilarityMap sim;
  sim.height = 2;
  sim.width = 2;
  sim.scores = {1.0f, 0.0f, 1.0f, 0.6f};
  const auto top2 = top_k(sim, 2);
  REQUIRE(top2.size() == 2);
  CHECK(top2[0].cell == GridCell{0, 0});
  CHECK(top2[1].cell == GridCell{1, 0});

  const auto all = top_k(sim, 10);
  REQUIRE(all.size() == 4);
  CHECK(all[2].cell == GridCell{1, 1});
  CHECK(all[3].cell == GridCell{0, 1});

  SimilarityMap uniform;
  uniform.height = 2;
  uniform.width = 3;
  uniform.scores.assign(6, 0.25f);
  const auto ties = top_k(uniform, 3);
  CHECK(ties[0].cell == GridCell{0, 0});
  CHECK(ties[1].cell == GridCell{0, 1});
  CHECK(ties[2].cell == GridCell{0, 2});
}

TEST_CASE("top_k equals the full-sort reference on random maps") {
  std::uint64_t state = 40;
  for (int trial = 0; trial < 200; ++trial) {
    const int h = 1 + static_cast<int>(mocklab::uniform01(state) * 12);
    const int w = 1 + static_cast<int>(mocklab::uniform01(state) * 12);
    const bool quantize = trial % 2 == 0;
    SimilarityMap sim = random_sim(static_cast<std::uint64_t>(trial), h, w, quantize);
    if (trial % 17 == 0) std::fill(sim.scores.begin(), sim.scores.end(), 0.5f);  // all ties
    const int k = 1 + static_cast<int>(mocklab::uniform01(state) * (h * w + 3));
    const auto fast = top_k(sim, k);
    const auto slow = mocklab::oracle_topk(sim, k);
    REQUIRE(fast.size() == slow.size());
    for (std::size_t i = 0; i < fast.size(); ++i) {
      CHECK(fast[i].cell == slow[i].cell);
      CHECK(fast[i].score == slow[i].score);
    }
  }
}

TEST_CASE("cluster_points degenerate and structured cases") {
  const FeatureMap fm = make_fm(16, 16, 1, std::vector<float>(256, 1.0f));

  SUBCASE("single candidate saturates c") {
    const std::vector<ScoredCell> one{{{4, 5}, 0.9f}};
    const auto prompts = cluster_points(one, 3, fm);
    REQUIRE(prompts.size() == 1);
    CHECK(prompts[0] == cell_to_point(4, 5, fm));
  }

  SUBCASE("two far groups produce one medoid each") {
    std::vector<ScoredCell> candidates;
    for (int r = 1; r <= 3; ++r) {
      for (int c = 1; c <= 3; ++c) candidates.push_back({{r, c}, 0.9f});
    }
    for (int r = 12; r <= 14; ++r) {
      for (int c = 12; c <= 14; ++c) candidates.push_back({{r, c}, 0.8f});
    }
    const auto prompts = cluster_points(candidates, 2, fm);
    REQUIRE(prompts.size() == 2);
    int low = 0, high = 0;
    for (const auto& p : prompts) {
      const GridCell cell = point_to_cell(p, fm);
      if (cell.row <= 3 && cell.col <= 3) ++low;
      if (cell.row >= 12 && cell.col >= 12) ++high;
    }
    CHECK(low == 1);
    CHECK(high == 1);
  }

  SUBCASE("c=1 returns the medoid nearest the centroid") {
    std::vector<ScoredCell> candidates{{{0, 0}, 1.0f}, {{0, 4}, 0.9f}, {{4, 0}, 0.8f}, {{3, 3}, 0.7f}};
    const auto prompts = cluster_points(candidates, 1, fm);
    REQUIRE(prompts.size() == 1);
    // Brute force: centroid is (1.75, 1.75); nearest member by squared
    // distance is (3,3)? distances: (0,0)->6.125, (0,4)->8.125, (4,0)->8.125,
    // (3,3)->3.125. So (3,3).
    CHECK(point_to_cell(prompts[0], fm) == GridCell{3, 3});
  }
}

TEST_CASE("complete composes the kernel and respects include_initial") {
  // 8x8 grid; the cell under the initial point is the unique best match.
  std::vector<float> data;
  for (int r = 0; r < 8; ++r) {
    for (int c = 0; c < 8; ++c) {
      const bool fg = r >= 2 && r <= 5 && c >= 3 && c <= 6;
      const bool seed_cell = r == 3 && c == 4;
      if (seed_cell) {
        data.push_back(1.0f);
        data.push_back(0.0f);
      } else if (fg) {
        data.push_back(1.0f);
        data.push_back(0.1f);
      } else {
        data.push_back(0.0f);
        data.push_back(1.0f);
      }
    }
  }
  const FeatureMap fm = make_fm(8, 8, 2, data);
  const ImagePoint p_i = cell_to_point(3, 4, fm);

  // k=1, c=1 with the initial point on the global-max cell collapses to it.
  const CompletionResult r1 = complete(fm, p_i, {1, 1, false});
  REQUIRE(r1.prompts.size() == 1);
  CHECK(r1.candidates.size() == 1);
  CHECK(r1.prompts[0] == p_i);

  const CompletionResult r2 = complete(fm, p_i, {8, 3, true});
  CHECK(r2.prompts.size() <= 4);
  CHECK(std::find(r2.prompts.begin(), r2.prompts.end(), p_i) != r2.prompts.end());
  CHECK(r2.params.top_k == 8);
}

TEST_CASE("every prompt lands on a candidate cell") {
  for (std::uint64_t seed = 1; seed <= 8; ++seed) {
    mocklab::SceneParams params;
    params.image_size = 224;
    params.patch_size = 14;
    params.noise_sigma = 0.3;
    const auto scene = mocklab::gen_scene(seed, params);
    const ImagePoint p_i = bbox_center(scene.gt_box());
    const CompletionResult result = complete(scene.features, p_i, {24, 4, false});
    std::set<std::pair<int, int>> cells;
    for (const auto& sc : result.candidates) cells.insert({sc.cell.row, sc.cell.col});
    for (const auto& p : result.prompts) {
      const GridCell cell = point_to_cell(p, scene.features);
      CHECK(cells.count({cell.row, cell.col}) == 1);
    }
  }
}

TEST_CASE("planted separation keeps prompts on the foreground") {
  for (std::uint64_t seed = 10; seed < 30; ++seed) {
    mocklab::SceneParams params;
    params.image_size = 224;
    params.patch_size = 14;
    params.max_cos = 0.5;
    params.noise_sigma = 0.0;
    const auto scene = mocklab::gen_scene(seed, params);
    const ImagePoint p_i = bbox_center(scene.gt_box());
    if (!scene.is_fg_cell(point_to_cell(p_i, scene.features))) continue;  // center off-object
    const CompletionResult result = complete(scene.features, p_i, {0, 3, false});
    for (const auto& p : result.prompts) {
      CHECK(scene.is_fg_cell(point_to_cell(p, scene.features)));
    }
  }
}

TEST_CASE("clustering is deterministic across thread counts") {
  mocklab::SceneParams params;
  params.image_size = 224;
  params.patch_size = 14;
  params.noise_sigma = 0.4;
  const auto scene = mocklab::gen_scene(77, params);
  const ImagePoint p_i = bbox_center(scene.gt_box());

#ifdef _OPENMP
  omp_set_num_threads(1);
#endif
  const CompletionResult a = complete(scene.features, p_i, {32, 3, false});
#ifdef _OPENMP
  omp_set_num_threads(4);
#endif
  const CompletionResult b = complete(scene.features, p_i, {32, 3, false});
#ifdef _OPENMP
  omp_set_num_threads(omp_get_num_procs());
#endif
  CHECK(a.prompts == b.prompts);
  CHECK(a.candidates == b.candidates);
}

TEST_CASE("feature map blob round-trips and rejects corruption") {
  std::uint64_t state = 3;
  std::vector<float> data(4 * 5 * 3);
  for (auto& v : data) v = static_cast<float>(mocklab::gaussian(state));
  const FeatureMap fm = make_fm(4, 5, 3, data, 14);
  const std::string blob = encode_feature_map_blob(fm);
  CHECK(blob.substr(0, 8) == "CVPFMAP1");
  const FeatureMap back = decode_feature_map_blob(blob);
  CHECK(back.height == fm.height);
  CHECK(back.width == fm.width);
  CHECK(back.dim == fm.dim);
  CHECK(back.patch_size == fm.patch_size);
  CHECK(back.data == fm.data);
  CHECK_THROWS_AS(decode_feature_map_blob("XXXXXXXX" + blob.substr(8)), PreconditionError);
  CHECK_THROWS_AS(decode_feature_map_blob(blob.substr(0, blob.size() - 1)), PreconditionError);
}

TEST_CASE("resolve_top_k default follows the one-percent floor rule") {
  CHECK(resolve_top_k(0, 256) == 8);        // max(8, ceil(2.56))
  CHECK(resolve_top_k(0, 3136) == 32);      // ceil(31.36)
  CHECK(resolve_top_k(0, 4) == 4);          // capped at N
  CHECK(resolve_top_k(5, 100) == 5);
  CHECK(resolve_top_k(500, 100) == 100);
}

TEST_SUITE_END();
