#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <string>

#include "kcnn/error.hpp"
#include "kcnn/raster.hpp"
#include "test_support.hpp"

using namespace kcnn;
using namespace kcnn::testing;

namespace {

// Plain textbook bilinear upsampler with edge clamping, pixel-center aligned.
// Written independently of the library's lattice-snapped sampler.
Image reference_upsample(const Image& src, int factor) {
  const int h = src.height() * factor;
  const int w = src.width() * factor;
  Image out(h, w);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      const double sy = (r + 0.5) / factor - 0.5;
      const double sx = (c + 0.5) / factor - 0.5;
      const int y0 = static_cast<int>(std::floor(sy));
      const int x0 = static_cast<int>(std::floor(sx));
      const double fy = sy - y0;
      const double fx = sx - x0;
      auto px = [&](int y, int x) {
        return src.at(std::clamp(y, 0, src.height() - 1), std::clamp(x, 0, src.width() - 1));
      };
      out.at(r, c) = (1 - fy) * ((1 - fx) * px(y0, x0) + fx * px(y0, x0 + 1)) +
                     fy * ((1 - fx) * px(y0 + 1, x0) + fx * px(y0 + 1, x0 + 1));
    }
  }
  return out;
}

double max_abs_diff(const Image& a, const Image& b) {
  REQUIRE(a.height() == b.height());
  REQUIRE(a.width() == b.width());
  double m = 0.0;
  for (std::size_t i = 0; i < a.pixels().size(); ++i) {
    m = std::max(m, std::abs(a.pixels()[i] - b.pixels()[i]));
  }
  return m;
}

}  // namespace

TEST_CASE("image construction enforces the pixel contract") {
  CHECK_THROWS_AS(Image(3, 8), RangeError);
  CHECK_THROWS_AS(Image(8, 8, 1.5), RangeError);
  CHECK_THROWS_AS(Image(8, 8, std::nan("")), RangeError);
  CHECK_THROWS_AS(Image(8, 8, std::vector<double>(10, 0.0)), ShapeError);
  CHECK_THROWS_AS(Image(4, 4).validate_input(), RangeError);
  CHECK_NOTHROW(Image(8, 8).validate_input());
}

TEST_CASE("translate_circular") {
  TestRng rng(1);
  const Image img = random_noise(12, 10, rng);

  SUBCASE("zero shift is a bit-exact identity") { CHECK(translate_circular(img, 0) == img); }

  SUBCASE("constant image is shift invariant") {
    const Image wide(8, 32, 0.5);
    CHECK(translate_circular(wide, 17) == wide);
  }

  SUBCASE("8x8 ramp shifted by 3") {
    const Image ramp = column_ramp(8, 8);
    const Image out = translate_circular(ramp, 3);
    for (int r = 0; r < 8; ++r) {
      for (int c = 0; c < 5; ++c) CHECK(out.at(r, c) == ramp.at(r, c + 3));
      for (int c = 5; c < 8; ++c) CHECK(out.at(r, c) == ramp.at(r, 7));
    }
  }

  SUBCASE("out of range shift") {
    CHECK_THROWS_AS(translate_circular(img, -1), RangeError);
    CHECK_THROWS_AS(translate_circular(img, 11), RangeError);
    CHECK_NOTHROW(translate_circular(img, 10));
  }
}

TEST_CASE("scale_same_size") {
  TestRng rng(2);
  const Image img = random_noise(9, 13, rng);
  CHECK(scale_same_size(img, 1.0) == img);
  CHECK(max_abs_diff(scale_same_size(Image(16, 16, 0.3), 0.5), Image(16, 16, 0.3)) < 1e-15);
  CHECK_THROWS_AS(scale_same_size(img, 0.2), RangeError);
  CHECK_THROWS_AS(scale_same_size(img, 4.5), RangeError);

  SUBCASE("checkerboard doubled equals center crop of a reference 2x upsampling") {
    const Image board = checkerboard(8);
    const Image up = reference_upsample(board, 2);
    Image expected(8, 8);
    for (int r = 0; r < 8; ++r)
      for (int c = 0; c < 8; ++c) expected.at(r, c) = up.at(r + 4, c + 4);
    CHECK(max_abs_diff(scale_same_size(board, 2.0), expected) < 1e-12);
  }
}

TEST_CASE("rotate_center_crop") {
  SUBCASE("inscribed side") {
    CHECK(inscribed_square_side(8, 8) == 4);
    CHECK(inscribed_square_side(128, 128) == 90);
    CHECK(inscribed_square_side(100, 40) == 28);
    CHECK(inscribed_square_side(32, 32) == 22);
  }

  SUBCASE("zero rotation is the centered crop") {
    TestRng rng(3);
    const Image img = random_noise(20, 15, rng);
    const int side = inscribed_square_side(20, 15);
    CHECK(rotate_center_crop(img, 0.0) == crop(img, (15 - side) / 2, (20 - side) / 2, side, side));
  }

  SUBCASE("180 degrees maps a point to its mirror through the center") {
    // 16x16 input: inscribed side 10 starting at 3, center at 7.5.
    Image img(16, 16, 0.0);
    img.at(7 + 2, 7 + 2) = 1.0;  // (+1.5, +1.5) from the center
    const Image out = rotate_center_crop(img, 180.0);
    REQUIRE(out.height() == 10);
    for (int r = 0; r < 10; ++r) {
      for (int c = 0; c < 10; ++c) {
        // (-1.5, -1.5) from the center is crop pixel (3, 3).
        const double want = (r == 3 && c == 3) ? 1.0 : 0.0;
        CHECK(std::abs(out.at(r, c) - want) <= 1e-12);
      }
    }
  }

  SUBCASE("rotationally symmetric disk") {
    Image disk(33, 33, 0.0);
    for (int r = 0; r < 33; ++r)
      for (int c = 0; c < 33; ++c)
        disk.at(r, c) = std::clamp(9.0 - std::hypot(r - 16.5, c - 16.5), 0.0, 1.0);
    // Pad to an even layout so the crop center equals the disk center.
    Image even(34, 34, 0.0);
    for (int r = 0; r < 33; ++r)
      for (int c = 0; c < 33; ++c) even.at(r, c) = disk.at(r, c);
    const int side = inscribed_square_side(34, 34);
    const Image a = rotate_center_crop(even, 0.0);
    const Image b = rotate_center_crop(even, 90.0);
    REQUIRE(a.height() == side);
    CHECK(max_abs_diff(a, b) < 1e-6);
  }

  SUBCASE("range") {
    const Image img(8, 8, 0.5);
    CHECK_THROWS_AS(rotate_center_crop(img, -1.0), RangeError);
    CHECK_THROWS_AS(rotate_center_crop(img, 360.0), RangeError);
  }
}

TEST_CASE("crop") {
  const Image ramp = index_ramp(8, 8);
  CHECK(crop(ramp, 0, 0, 8, 8) == ramp);
  CHECK(crop(Image(10, 10, 0.25), 3, 1, 5, 6) == Image(6, 5, 0.25));
  const Image sub = crop(ramp, 2, 2, 4, 4);
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) CHECK(sub.at(r, c) == ramp.at(r + 2, c + 2));
  CHECK_THROWS_AS(crop(ramp, 5, 0, 4, 4), RangeError);
  CHECK_THROWS_AS(crop(ramp, -1, 0, 4, 4), RangeError);
  CHECK_THROWS_AS(crop(ramp, 0, 0, 3, 4), RangeError);
}

TEST_CASE("rot90 is a counter-clockwise permutation") {
  const Image img = index_ramp(6, 9);
  const Image q = rot90(img, 1);
  REQUIRE(q.height() == 9);
  REQUIRE(q.width() == 6);
  // Top-right corner moves to the top-left.
  CHECK(q.at(0, 0) == img.at(0, 8));
  CHECK(q.at(8, 0) == img.at(0, 0));
  CHECK(rot90(rot90(img, 1), 1) == rot90(img, 2));
  CHECK(rot90(img, 4) == img);
  CHECK(rot90(img, -1) == rot90(img, 3));
  CHECK(rot90(rot90(img, 3), 1) == img);
}

TEST_CASE("resample commutes with quarter turns for rotation-scale maps") {
  TestRng rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    const Image img = random_noise(24, 24, rng);
    const double theta = rng.uniform(0.0, 360.0);
    const double scale = rng.uniform(0.5, 1.5);
    const auto map = LinearMap::rotation(theta, scale);
    const Image a = resample(rot90(img, 1), 16, 16, map, 11.5, 11.5);
    const Image b = rot90(resample(img, 16, 16, map, 11.5, 11.5), 1);
    CHECK(a == b);
  }
}

TEST_CASE("resize") {
  const Image flat(10, 14, 0.75);
  CHECK(max_abs_diff(resize(flat, 7, 5), Image(7, 5, 0.75)) < 1e-15);
  const Image board = checkerboard(8);
  const Image up = resize(board, 16, 16);
  CHECK(max_abs_diff(up, reference_upsample(board, 2)) < 1e-12);
  CHECK(resize(board, 8, 8) == board);
}

TEST_CASE("apply_transform dispatch and names") {
  TestRng rng(5);
  const Image img = random_noise(16, 16, rng);
  CHECK(apply_transform(img, {TransformKind::Translate, 4, 1.0, 0.0}) == translate_circular(img, 4));
  CHECK(apply_transform(img, {TransformKind::Scale, 0, 1.5, 0.0}) == scale_same_size(img, 1.5));
  CHECK(apply_transform(img, {TransformKind::Rotate, 0, 1.0, 30.0}) ==
        rotate_center_crop(img, 30.0));
  for (auto k : {TransformKind::Translate, TransformKind::Scale, TransformKind::Rotate}) {
    CHECK(transform_kind_from_string(to_string(k)) == k);
  }
  CHECK_THROWS_AS(transform_kind_from_string("shear"), ConfigError);
}

TEST_CASE("PGM codec") {
  Image img(9, 11);
  for (int r = 0; r < 9; ++r)
    for (int c = 0; c < 11; ++c) img.at(r, c) = ((r * 11 + c) * 37 % 256) / 255.0;
  const auto bytes = encode_pgm(img);
  CHECK(std::string(bytes.begin(), bytes.begin() + 3) == "P5\n");
  CHECK(decode_pgm(bytes) == img);

  const std::string commented = "P5 # comment\n8 8\n255\n" + std::string(64, '\x80');
  const Image gray = decode_pgm(std::span<const char>(commented.data(), commented.size()));
  CHECK(gray.at(3, 3) == 128.0 / 255.0);

  auto parse = [](const std::string& s) { return decode_pgm(std::span<const char>(s.data(), s.size())); };
  CHECK_THROWS_AS(parse("P2\n8 8\n255\n"), ParseError);
  CHECK_THROWS_AS(parse("P5\n8 8\n65535\n" + std::string(128, '\0')), ParseError);
  CHECK_THROWS_AS(parse("P5\n8 8\n255\n" + std::string(10, '\0')), ParseError);
  CHECK_THROWS_AS(parse("P5\n4 4\n255\n" + std::string(16, '\0')), RangeError);
  try {
    parse("P5\n8 8\n255\n" + std::string(10, '\0'));
  } catch (const ParseError& e) {
    CHECK(e.offset() > 0);
    CHECK(std::string(e.what()).find("byte") != std::string::npos);
  }
}
