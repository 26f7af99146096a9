#pragma once

#include <array>
#include <string>
#include <vector>

#include "kcnn/raster.hpp"

namespace kcnn {

/// Side of the canonical patch raster fed to the embedder. Even, so quarter
/// turns are exact permutations.
inline constexpr int kPatchSide = 32;

struct Patch {
  int x = 0;
  int y = 0;
  int w = 0;
  int h = 0;
  double objectness = 0.0;
  int rotation_index = 0;  // multiples of 45 degrees, 0..7

  friend bool operator==(const Patch&, const Patch&) = default;
};

struct ProposalConfig {
  int count = 127;
  std::vector<int> scales{32, 64, 128};
  /// Also slide a square window whose side is the image's shorter side.
  bool include_full_side = true;
  double nms_iou = 0.5;
  bool include_rotations = true;

  void validate() const;
};

/// |gx| + |gy| from central differences with replicated borders, clipped
/// to [0,1].
Image objectness_map(const Image& img);

/// Mean objectness of the inner half-size box minus the mean over the
/// surrounding ring for the square window (x, y, side).
double window_score(const Image& objectness, int x, int y, int side);

double iou(const Patch& a, const Patch& b);

/// Score-ranked sliding-window proposals after greedy NMS. Only windows with
/// positive contrast are candidates. When fewer than `cfg.count` survive the
/// full frame is appended with score 0.
std::vector<Patch> propose(const Image& img, const ProposalConfig& cfg);

Patch full_frame_patch(const Image& img);

/// The patch cropped and resized to kPatchSide x kPatchSide.
Image canonical_patch(const Image& img, const Patch& p);

/// Eight rotated copies of a canonical raster, index k at 45*k degrees.
/// Every copy views the same inscribed disk: even copies are exact quarter
/// turns of the inscribed-square zoom, odd copies are quarter turns of the
/// 45-degree bilinear rotation of it.
std::array<Image, 8> rotation_copies(const Image& canonical);

/// crop + canonical resize + rotation_copies.
std::array<Image, 8> augment_rotations(const Image& img, const Patch& p);

/// CSV with header `patch_id,x,y,w,h,score`.
std::string patches_to_csv(const std::vector<Patch>& patches);
std::vector<Patch> patches_from_csv(const std::string& text);

}  // namespace kcnn
