#include <doctest.h>

#include "covp/errors.hpp"
#include "covp/segmenter_client.hpp"
#include "test_support.hpp"

using namespace covp;

TEST_SUITE_BEGIN("segmenter_client");

TEST_CASE("select_mask picks the highest confidence") {
  std::vector<MaskCandidate> candidates;
  candidates.push_back({SoftMask::filled(4, 4, 0.1f), 0.3});
  candidates.push_back({SoftMask::filled(4, 4, 0.2f), 0.9});
  candidates.push_back({SoftMask::filled(4, 4, 0.3f), 0.5});
  CHECK(select_mask(candidates).values[0] == 0.2f);
}

TEST_CASE("select_mask breaks confidence ties by foreground area, then order") {
  SoftMask small = SoftMask::filled(10, 10, 0.0f);
  for (int i = 0; i < 10; ++i) small.values[i] = 1.0f;
  SoftMask large = SoftMask::filled(10, 10, 0.0f);
  for (int i = 0; i < 20; ++i) large.values[i] = 1.0f;
  CHECK(select_mask({{small, 0.8}, {large, 0.8}}).values == large.values);
  CHECK(select_mask({{large, 0.8}, {small, 0.8}}).values == large.values);

  // Remaining ties resolve to the first candidate.
  SoftMask other = SoftMask::filled(10, 10, 0.0f);
  for (int i = 30; i < 50; ++i) other.values[i] = 1.0f;
  CHECK(select_mask({{large, 0.8}, {other, 0.8}}).values == large.values);

  const std::vector<MaskCandidate> single{{small, 0.1}};
  CHECK(select_mask(single).values == small.values);
  CHECK_THROWS_AS(select_mask({}), PreconditionError);
}

TEST_CASE("binarize examples") {
  CHECK(binarize(SoftMask::filled(3, 3, 0.7f)).foreground_count() == 9);
  CHECK(binarize(SoftMask::filled(3, 3, 0.3f)).foreground_count() == 0);

  SoftMask mixed{1, 3, {0.2f, 0.5f, 0.8f}};
  const BinaryMask out = binarize(mixed, 0.5);
  CHECK(out.values == std::vector<std::uint8_t>{0, 1, 1});
  CHECK_THROWS_AS(binarize(mixed, 1.5), PreconditionError);
}

TEST_CASE("binarize is monotone in the threshold") {
  const SoftMask mask = testing::random_soft_mask(3, 16, 16);
  std::size_t prev = binarize(mask, 0.0).foreground_count();
  for (double t : {0.1, 0.25, 0.5, 0.75, 0.9, 1.0}) {
    const std::size_t count = binarize(mask, t).foreground_count();
    CHECK(count <= prev);
    prev = count;
  }
}

TEST_SUITE_END();
