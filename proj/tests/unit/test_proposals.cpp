#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "kcnn/error.hpp"
#include "kcnn/proposals.hpp"
#include "test_support.hpp"

using namespace kcnn;
using namespace kcnn::testing;

namespace {

// Objectness recomputed from the definition: half central difference per
// axis, nearest-edge replication, L1 magnitude clipped at 1.
double oracle_objectness(const Image& img, int r, int c) {
  auto px = [&](int y, int x) {
    return img.at(std::clamp(y, 0, img.height() - 1), std::clamp(x, 0, img.width() - 1));
  };
  const double gx = (px(r, c + 1) - px(r, c - 1)) / 2.0;
  const double gy = (px(r + 1, c) - px(r - 1, c)) / 2.0;
  return std::min(1.0, std::abs(gx) + std::abs(gy));
}

// Inner half box mean minus ring mean, by direct summation.
double oracle_score(const Image& img, int x, int y, int side) {
  const int inner = side / 2;
  const int lo = (side - inner) / 2;
  double in_sum = 0.0, ring_sum = 0.0;
  int in_n = 0, ring_n = 0;
  for (int r = 0; r < side; ++r) {
    for (int c = 0; c < side; ++c) {
      const double v = oracle_objectness(img, y + r, x + c);
      if (r >= lo && r < lo + inner && c >= lo && c < lo + inner) {
        in_sum += v;
        ++in_n;
      } else {
        ring_sum += v;
        ++ring_n;
      }
    }
  }
  return in_sum / in_n - ring_sum / ring_n;
}

double oracle_iou(const Patch& a, const Patch& b) {
  int inter = 0;
  for (int y = std::min(a.y, b.y); y < std::max(a.y + a.h, b.y + b.h); ++y)
    for (int x = std::min(a.x, b.x); x < std::max(a.x + a.w, b.x + b.w); ++x)
      if (x >= a.x && x < a.x + a.w && y >= a.y && y < a.y + a.h && x >= b.x && x < b.x + b.w &&
          y >= b.y && y < b.y + b.h)
        ++inter;
  return static_cast<double>(inter) / (a.w * a.h + b.w * b.h - inter);
}

Image blob_image(int side, int bx, int by, int bs) {
  Image img(side, side, 0.2);
  for (int r = by; r < by + bs; ++r)
    for (int c = bx; c < bx + bs; ++c) img.at(r, c) = 0.9;
  return img;
}

}  // namespace

TEST_CASE("objectness map") {
  SUBCASE("constant image has no gradient") {
    const Image obj = objectness_map(Image(12, 12, 0.4));
    for (double v : obj.pixels()) CHECK(v == 0.0);
  }

  SUBCASE("vertical step edge stays local") {
    Image img(10, 16, 0.1);
    const int edge = 7;
    for (int r = 0; r < 10; ++r)
      for (int c = edge; c < 16; ++c) img.at(r, c) = 0.8;
    const Image obj = objectness_map(img);
    for (int r = 0; r < 10; ++r) {
      for (int c = 0; c < 16; ++c) {
        if (c < edge - 1 || c > edge + 1) CHECK(obj.at(r, c) == 0.0);
      }
      CHECK(obj.at(r, edge) > 0.0);
    }
  }

  SUBCASE("ramp with slope 1/8 per column") {
    Image img(8, 8);
    for (int r = 0; r < 8; ++r)
      for (int c = 0; c < 8; ++c) img.at(r, c) = c / 8.0;
    const Image obj = objectness_map(img);
    for (int r = 1; r < 7; ++r)
      for (int c = 1; c < 7; ++c) CHECK(obj.at(r, c) == doctest::Approx(1.0 / 8.0).epsilon(1e-12));
  }

  SUBCASE("matches the definition on noise") {
    TestRng rng(7);
    const Image img = random_noise(13, 17, rng);
    const Image obj = objectness_map(img);
    for (int r = 0; r < 13; ++r)
      for (int c = 0; c < 17; ++c) CHECK(obj.at(r, c) == doctest::Approx(oracle_objectness(img, r, c)));
  }
}

TEST_CASE("window score and iou agree with direct evaluation") {
  TestRng rng(8);
  const Image img = random_texture(48, 48, rng);
  const Image obj = objectness_map(img);
  for (int trial = 0; trial < 20; ++trial) {
    const int side = rng.integer(8, 30);
    const int x = rng.integer(0, 48 - side);
    const int y = rng.integer(0, 48 - side);
    CHECK(window_score(obj, x, y, side) ==
          doctest::Approx(oracle_score(img, x, y, side)).epsilon(1e-10));
  }
  for (int trial = 0; trial < 50; ++trial) {
    const Patch a{rng.integer(0, 20), rng.integer(0, 20), rng.integer(1, 20), rng.integer(1, 20)};
    const Patch b{rng.integer(0, 20), rng.integer(0, 20), rng.integer(1, 20), rng.integer(1, 20)};
    CHECK(iou(a, b) == doctest::Approx(oracle_iou(a, b)).epsilon(1e-14));
  }
  CHECK(iou(Patch{0, 0, 10, 10}, Patch{0, 0, 10, 10}) == 1.0);
  CHECK(iou(Patch{0, 0, 10, 10}, Patch{5, 0, 10, 10}) == doctest::Approx(50.0 / 150.0));
  CHECK(iou(Patch{0, 0, 4, 4}, Patch{4, 4, 4, 4}) == 0.0);
}

TEST_CASE("propose on a constant image returns only the fallback") {
  ProposalConfig cfg;
  cfg.count = 1;
  const Image img(64, 48, 0.5);
  const auto out = propose(img, cfg);
  REQUIRE(out.size() == 1);
  CHECK(out[0] == Patch{0, 0, 48, 64, 0.0, 0});
  cfg.count = 127;
  CHECK(propose(img, cfg).size() == 1);
}

TEST_CASE("single bright blob is found") {
  ProposalConfig cfg;
  cfg.count = 1;
  const int bx = 37, by = 14, bs = 14;
  const Image img = blob_image(96, bx, by, bs);
  const auto out = propose(img, cfg);
  REQUIRE(out.size() == 1);
  const Patch& top = out[0];
  CHECK(top.objectness > 0.0);

  // Brute-force argmax over every window position at the proposer's scales.
  double best = -1e300;
  Patch arg;
  for (int side : {32, 64, 96}) {
    for (int y = 0; y + side <= 96; ++y) {
      for (int x = 0; x + side <= 96; ++x) {
        const double s = oracle_score(img, x, y, side);
        if (s > best) {
          best = s;
          arg = Patch{x, y, side, side, s};
        }
      }
    }
  }
  const double half_stride = top.w / 4 / 2.0;
  const double blob_cx = bx + bs / 2.0, blob_cy = by + bs / 2.0;
  const double top_cx = top.x + top.w / 2.0, top_cy = top.y + top.h / 2.0;
  CHECK(arg.w == top.w);
  CHECK(std::abs(top_cx - (arg.x + arg.w / 2.0)) <= half_stride);
  CHECK(std::abs(top_cy - (arg.y + arg.h / 2.0)) <= half_stride);
  CHECK(std::abs(top_cx - blob_cx) <= half_stride);
  CHECK(std::abs(top_cy - blob_cy) <= half_stride);
}

TEST_CASE("propose equals an independent sliding-window + greedy NMS oracle") {
  TestRng rng(9);
  for (int trial = 0; trial < 4; ++trial) {
    const int h = rng.integer(40, 80);
    const int w = rng.integer(40, 80);
    const Image img = random_texture(h, w, rng, 4);
    ProposalConfig cfg;
    cfg.count = 127;
    cfg.scales = {16, 32};
    cfg.nms_iou = 0.4;

    std::vector<Patch> cands;
    const int min_side = std::min(h, w);
    for (int side : {16, 32, min_side}) {
      const int stride = side / 4;
      const int ox = ((w - side) % stride) / 2;
      const int oy = ((h - side) % stride) / 2;
      for (int y = oy; y + side <= h; y += stride)
        for (int x = ox; x + side <= w; x += stride) {
          const double s = oracle_score(img, x, y, side);
          if (s > 0) cands.push_back(Patch{x, y, side, side, s});
        }
    }
    std::stable_sort(cands.begin(), cands.end(), [](const Patch& a, const Patch& b) {
      return std::tie(b.objectness, a.y, a.x, a.w) < std::tie(a.objectness, b.y, b.x, b.w);
    });
    std::vector<Patch> kept;
    for (const auto& c : cands) {
      bool ok = true;
      for (const auto& k : kept) ok = ok && oracle_iou(c, k) < cfg.nms_iou;
      if (ok) kept.push_back(c);
    }

    const auto out = propose(img, cfg);
    REQUIRE(kept.size() < 127);
    REQUIRE(out.size() == kept.size() + 1);  // survivors plus the fallback
    for (std::size_t i = 0; i < kept.size(); ++i) {
      CHECK(out[i].x == kept[i].x);
      CHECK(out[i].y == kept[i].y);
      CHECK(out[i].w == kept[i].w);
      CHECK(out[i].objectness == doctest::Approx(kept[i].objectness).epsilon(1e-9));
    }
    CHECK(out.back() == full_frame_patch(img));

    // Asking for exactly the survivor count drops the fallback.
    cfg.count = static_cast<int>(kept.size());
    CHECK(propose(img, cfg).size() == kept.size());
  }
}

TEST_CASE("proposal invariants on structured images") {
  TestRng rng(10);
  for (int trial = 0; trial < 5; ++trial) {
    const Image img = random_texture(128, 128, rng);
    ProposalConfig cfg;
    const auto out = propose(img, cfg);
    REQUIRE(!out.empty());
    CHECK(out.size() <= 127);
    for (std::size_t i = 0; i < out.size(); ++i) {
      const auto& p = out[i];
      CHECK(p.rotation_index == 0);
      CHECK(p.x >= 0);
      CHECK(p.y >= 0);
      CHECK(p.x + p.w <= 128);
      CHECK(p.y + p.h <= 128);
      if (i > 0) CHECK(out[i - 1].objectness >= p.objectness);
      for (std::size_t j = 0; j < i; ++j) {
        if (out[i].objectness > 0 && out[j].objectness > 0) CHECK(iou(out[i], out[j]) < 0.5);
      }
    }
  }
}

TEST_CASE("proposal configuration errors") {
  ProposalConfig cfg;
  cfg.count = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = {};
  cfg.nms_iou = 1.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = {};
  cfg.scales = {8};
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = {};
  cfg.scales = {32};
  cfg.include_full_side = false;
  CHECK_THROWS_AS(propose(Image(20, 20, 0.5), cfg), EmptyInputError);
}

TEST_CASE("rotation copies") {
  SUBCASE("constant patch gives identical constant copies") {
    const auto copies = rotation_copies(Image(kPatchSide, kPatchSide, 0.37));
    for (const auto& c : copies) {
      REQUIRE(c.height() == kPatchSide);
      for (double v : c.pixels()) CHECK(v == doctest::Approx(0.37).epsilon(1e-14));
    }
    for (int k = 2; k < 8; ++k) CHECK(copies[k] == copies[k % 2]);
  }

  TestRng rng(11);
  const Image patch = random_noise(kPatchSide, kPatchSide, rng);
  const auto copies = rotation_copies(patch);

  SUBCASE("90 degrees twice is 180 degrees bit-exact") {
    CHECK(rot90(copies[2], 1) == copies[4]);
    CHECK(rot90(rot90(copies[0], 1), 1) == copies[4]);
    CHECK(rot90(copies[1], 2) == copies[5]);
  }

  SUBCASE("quarter-turn pre-rotation cycles the copies") {
    const auto turned = rotation_copies(rot90(patch, 1));
    for (int k = 0; k < 8; ++k) CHECK(turned[k] == copies[(k + 2) % 8]);
  }

  SUBCASE("four-fold symmetric cross") {
    Image cross(kPatchSide, kPatchSide, 0.1);
    for (int i = 0; i < kPatchSide; ++i)
      for (int j = 12; j < 20; ++j) {
        cross.at(i, j) = 0.9;
        cross.at(j, i) = 0.9;
      }
    const auto cc = rotation_copies(cross);
    CHECK(cc[2] == cc[0]);
    CHECK(cc[4] == cc[0]);
    CHECK(cc[6] == cc[0]);
  }

  SUBCASE("odd copies are the 45 degree view") {
    // A horizontal edge through the center becomes diagonal.
    Image edge(kPatchSide, kPatchSide, 0.0);
    for (int r = kPatchSide / 2; r < kPatchSide; ++r)
      for (int c = 0; c < kPatchSide; ++c) edge.at(r, c) = 1.0;
    const auto ec = rotation_copies(edge);
    // Counter-clockwise turn: the edge runs from bottom-left to top-right.
    CHECK(std::abs(ec[1].at(2, 2) - ec[1].at(29, 29)) > 0.9);
    CHECK(std::abs(ec[1].at(2, 29) - ec[1].at(29, 2)) < 1e-12);
  }

  CHECK_THROWS_AS(rotation_copies(Image(31, 31)), ShapeError);
  CHECK_THROWS_AS(rotation_copies(Image(32, 30)), ShapeError);
}

TEST_CASE("augment_rotations crops and canonicalizes first") {
  TestRng rng(12);
  const Image img = random_texture(80, 80, rng);
  const Patch p{10, 20, 40, 40, 0.5, 0};
  const auto copies = augment_rotations(img, p);
  const auto expected = rotation_copies(resize(crop(img, 10, 20, 40, 40), kPatchSide, kPatchSide));
  for (int k = 0; k < 8; ++k) CHECK(copies[k] == expected[k]);
}

TEST_CASE("patch CSV round trip") {
  const std::vector<Patch> patches{{0, 0, 32, 32, 0.25}, {16, 8, 64, 64, 0.125}, {0, 0, 100, 90, 0}};
  const auto csv = patches_to_csv(patches);
  CHECK(csv.rfind("patch_id,x,y,w,h,score\n0,0,0,32,32,0.25\n", 0) == 0);
  CHECK(patches_from_csv(csv) == patches);
  CHECK_THROWS_AS(patches_from_csv("id,x\n"), ParseError);
  CHECK_THROWS_AS(patches_from_csv("patch_id,x,y,w,h,score\n0,1,2\n"), ParseError);
  CHECK_THROWS_AS(patches_from_csv("patch_id,x,y,w,h,score\n0,a,2,3,4,0.5\n"), ParseError);
}
