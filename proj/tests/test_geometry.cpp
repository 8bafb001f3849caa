#include <doctest.h>

#include "covp/errors.hpp"
#include "covp/geometry.hpp"
#include "covp/mock_lab.hpp"
#include "test_support.hpp"

using namespace covp;

TEST_SUITE_BEGIN("geometry");

TEST_CASE("bbox_center examples") {
  CHECK(bbox_center({0.25, 0.25, 0.75, 0.75}) == ImagePoint{0.5, 0.5, PointLabel::Positive});
  CHECK(bbox_center({0.0, 0.0, 1.0, 1.0}) == ImagePoint{0.5, 0.5, PointLabel::Positive});
  const ImagePoint p = bbox_center({0.1, 0.2, 0.5, 0.8});
  CHECK(p.x == doctest::Approx(0.3).epsilon(1e-12));
  CHECK(p.y == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(p.label == PointLabel::Positive);
}

TEST_CASE("bbox validation") {
  CHECK_THROWS_AS(bbox_center({0.5, 0.1, 0.5, 0.9}), PreconditionError);  // zero width
  CHECK_THROWS_AS(bbox_center({-0.1, 0.1, 0.5, 0.9}), PreconditionError);
  CHECK_THROWS_AS(bbox_center({0.1, 0.9, 0.5, 0.1}), PreconditionError);  // flipped y
}

TEST_CASE("bbox_center lies strictly inside the box") {
  std::uint64_t state = 99;
  for (int i = 0; i < 500; ++i) {
    const double x1 = mocklab::uniform01(state) * 0.9;
    const double y1 = mocklab::uniform01(state) * 0.9;
    const double x2 = x1 + 0.01 + mocklab::uniform01(state) * (1.0 - x1 - 0.01);
    const double y2 = y1 + 0.01 + mocklab::uniform01(state) * (1.0 - y1 - 0.01);
    const BoundingBox b{x1, y1, x2, y2};
    const ImagePoint c = bbox_center(b);
    CHECK(c.x > b.x1);
    CHECK(c.x < b.x2);
    CHECK(c.y > b.y1);
    CHECK(c.y < b.y2);
  }
}

TEST_CASE("point_to_cell examples") {
  CHECK(point_to_cell({0.5, 0.5}, 16, 16) == GridCell{8, 8});
  CHECK(point_to_cell({1.0, 1.0}, 16, 16) == GridCell{15, 15});
  // 10x20 grid: 10 rows, 20 columns.
  CHECK(point_to_cell({0.03, 0.97}, 10, 20) == GridCell{9, 0});
}

TEST_CASE("cell_to_point examples and range errors") {
  const ImagePoint p = cell_to_point(8, 8, 16, 16);
  CHECK(p.x == doctest::Approx(0.53125).epsilon(1e-15));
  CHECK(p.y == doctest::Approx(0.53125).epsilon(1e-15));
  CHECK(cell_to_point(0, 0, 2, 2) == ImagePoint{0.25, 0.25, PointLabel::Positive});
  CHECK_THROWS_AS(cell_to_point(7, 0, 7, 5), PreconditionError);
  CHECK_THROWS_AS(cell_to_point(0, -1, 7, 5), PreconditionError);
}

TEST_CASE("point_to_cell after cell_to_point is identity on every cell") {
  for (int h : {7, 16, 1}) {
    for (int w : {5, 16, 3}) {
      for (int r = 0; r < h; ++r) {
        for (int c = 0; c < w; ++c) {
          CHECK(point_to_cell(cell_to_point(r, c, h, w), h, w) == GridCell{r, c});
        }
      }
    }
  }
}

TEST_CASE("mask_iou examples") {
  const BinaryMask a = testing::rect_mask(4, 8, 0, 4, 0, 4);
  CHECK(mask_iou(a, a) == 1.0);

  const BinaryMask b = testing::rect_mask(4, 8, 0, 4, 4, 8);
  CHECK(mask_iou(a, b) == 0.0);

  // Equal-area rectangles overlapping half of each other.
  const BinaryMask c = testing::rect_mask(4, 8, 0, 4, 2, 6);
  CHECK(mask_iou(a, c) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
}

TEST_CASE("mask_iou edge cases") {
  CHECK(mask_iou(BinaryMask::filled(3, 3, 0), BinaryMask::filled(3, 3, 0)) == 1.0);
  CHECK_THROWS_AS(mask_iou(BinaryMask::filled(3, 3, 0), BinaryMask::filled(3, 4, 0)), PreconditionError);
}

TEST_CASE("mask_iou symmetry and identity-of-1") {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const BinaryMask a = testing::random_binary_mask(seed, 9, 11);
    const BinaryMask b = testing::random_binary_mask(seed + 1000, 9, 11);
    CHECK(mask_iou(a, b) == mask_iou(b, a));
    if (a.values != b.values) {
      CHECK(mask_iou(a, b) < 1.0);
    }
  }
}

TEST_SUITE_END();
