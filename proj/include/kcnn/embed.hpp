#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "kcnn/proposals.hpp"
#include "kcnn/raster.hpp"

namespace kcnn {

/// Built-in descriptor layout: 4x4 spatial cells x 8 orientation bins.
inline constexpr int kGridCells = 4;
inline constexpr int kOrientationBins = 8;
inline constexpr int kDescriptorDim = kGridCells * kGridCells * kOrientationBins;

/// Unit-L2 feature vector of one patch (or one whole image).
struct Descriptor {
  std::vector<double> values;

  std::size_t dim() const { return values.size(); }
  friend bool operator==(const Descriptor&, const Descriptor&) = default;
};

struct DescriptorEntry {
  std::uint32_t patch_id = 0;
  Patch patch;
  Descriptor descriptor;
};

/// The descriptors of one image: one entry per (patch, rotation).
struct DescriptorSet {
  std::string image_id;
  std::vector<DescriptorEntry> entries;

  std::size_t dim() const { return entries.empty() ? 0 : entries.front().descriptor.dim(); }
  /// Throws unless non-empty with a single shared dimension.
  void validate() const;
};

/// Gradient-orientation histogram of a kPatchSide x kPatchSide raster,
/// magnitude weighted, linearly interpolated between orientation bins,
/// L2-normalized. A gradient-free patch maps to the uniform unit vector.
Descriptor embed_patch(const Image& raster);

/// Whole image resized to the canonical side, then embed_patch.
Descriptor embed_image_global(const Image& img);

/// Inner product of two unit descriptors.
double cosine(const Descriptor& a, const Descriptor& b);

/// Scales `values` to unit L2 norm in place; throws on a zero or
/// non-finite vector.
void normalize_l2(std::vector<double>& values);

/// Sum of descriptors accumulated in lexicographic order of their values,
/// so the result depends only on the multiset of inputs.
std::vector<double> sum_pool(std::span<const Descriptor> descriptors);

/// Proposal -> (optional) rotation augmentation -> embedding for one image.
/// Entries are ordered by (patch_id, rotation_index).
DescriptorSet describe_image(const std::string& image_id, const Image& img,
                             const std::vector<Patch>& patches, bool with_rotations);

// KDESC little-endian binary codec.
std::vector<char> encode_kdesc(const DescriptorSet& set);
DescriptorSet decode_kdesc(std::span<const char> bytes, const std::string& image_id);
void export_descriptors(const DescriptorSet& set, const std::string& path);
/// Image id is the file stem. Descriptors are renormalized to unit length.
DescriptorSet import_descriptors(const std::string& path);

}  // namespace kcnn
