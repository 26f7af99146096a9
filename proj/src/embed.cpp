#include "kcnn/embed.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numbers>

#include "kcnn/detail/binio.hpp"
#include "kcnn/error.hpp"

namespace kcnn {

namespace {

constexpr char kKdescMagic[] = "KDSC";
constexpr std::uint32_t kKdescVersion = 1;

// Gradients below this are interpolation rounding on flat regions.
constexpr double kFlatGradient = 1e-9;

}  // namespace

void DescriptorSet::validate() const {
  if (entries.empty()) throw EmptyInputError("descriptor set '" + image_id + "' is empty");
  const std::size_t d = dim();
  for (const auto& e : entries) {
    if (e.descriptor.dim() != d) {
      throw ShapeError("descriptor set '" + image_id + "' mixes dimensions");
    }
  }
}

void normalize_l2(std::vector<double>& values) {
  double sq = 0.0;
  for (double v : values) sq += v * v;
  const double norm = std::sqrt(sq);
  if (!(norm > 0.0) || !std::isfinite(norm)) {
    throw NumericalError("cannot L2-normalize a zero or non-finite vector");
  }
  for (double& v : values) v /= norm;
}

Descriptor embed_patch(const Image& raster) {
  if (raster.height() != kPatchSide || raster.width() != kPatchSide) {
    throw ShapeError("embed_patch expects a " + std::to_string(kPatchSide) + "x" +
                     std::to_string(kPatchSide) + " raster, got " +
                     std::to_string(raster.height()) + "x" + std::to_string(raster.width()));
  }
  constexpr int cell = kPatchSide / kGridCells;
  constexpr double bins_per_radian = kOrientationBins / (2.0 * std::numbers::pi);
  const int n = kPatchSide;

  std::vector<double> hist(kDescriptorDim, 0.0);
  for (int r = 0; r < n; ++r) {
    const int up = std::max(r - 1, 0);
    const int dn = std::min(r + 1, n - 1);
    for (int c = 0; c < n; ++c) {
      const int lf = std::max(c - 1, 0);
      const int rt = std::min(c + 1, n - 1);
      const double gx = raster.at(r, rt) - raster.at(r, lf);
      const double gy = raster.at(dn, c) - raster.at(up, c);
      const double mag = std::hypot(gx, gy);
      if (mag <= kFlatGradient) continue;
      double pos = std::atan2(gy, gx) * bins_per_radian;
      if (pos < 0.0) pos += kOrientationBins;
      int b0 = static_cast<int>(std::floor(pos));
      const double frac = pos - b0;
      b0 %= kOrientationBins;
      const int b1 = (b0 + 1) % kOrientationBins;
      const int base = ((r / cell) * kGridCells + (c / cell)) * kOrientationBins;
      hist[base + b0] += mag * (1.0 - frac);
      hist[base + b1] += mag * frac;
    }
  }

  double sq = 0.0;
  for (double v : hist) sq += v * v;
  if (sq == 0.0) {
    std::fill(hist.begin(), hist.end(), 1.0 / std::sqrt(static_cast<double>(kDescriptorDim)));
  } else {
    const double norm = std::sqrt(sq);
    for (double& v : hist) v /= norm;
  }
  return Descriptor{std::move(hist)};
}

Descriptor embed_image_global(const Image& img) {
  return embed_patch(resize(img, kPatchSide, kPatchSide));
}

double cosine(const Descriptor& a, const Descriptor& b) {
  if (a.dim() != b.dim()) {
    throw ShapeError("cosine of descriptors with dims " + std::to_string(a.dim()) + " and " +
                     std::to_string(b.dim()));
  }
  double s = 0.0;
  for (std::size_t i = 0; i < a.dim(); ++i) s += a.values[i] * b.values[i];
  return s;
}

std::vector<double> sum_pool(std::span<const Descriptor> descriptors) {
  if (descriptors.empty()) return {};
  std::vector<const Descriptor*> order;
  order.reserve(descriptors.size());
  for (const auto& d : descriptors) order.push_back(&d);
  std::sort(order.begin(), order.end(),
            [](const Descriptor* a, const Descriptor* b) { return a->values < b->values; });
  std::vector<double> out(order.front()->dim(), 0.0);
  for (const Descriptor* d : order) {
    if (d->dim() != out.size()) throw ShapeError("sum_pool over mixed dimensions");
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += d->values[i];
  }
  return out;
}

DescriptorSet describe_image(const std::string& image_id, const Image& img,
                             const std::vector<Patch>& patches, bool with_rotations) {
  DescriptorSet set{image_id, {}};
  set.entries.reserve(patches.size() * (with_rotations ? 8 : 1));
  for (std::size_t i = 0; i < patches.size(); ++i) {
    const Image canon = canonical_patch(img, patches[i]);
    const auto id = static_cast<std::uint32_t>(i);
    if (!with_rotations) {
      Patch p = patches[i];
      p.rotation_index = 0;
      set.entries.push_back({id, p, embed_patch(canon)});
      continue;
    }
    const auto copies = rotation_copies(canon);
    for (int k = 0; k < 8; ++k) {
      Patch p = patches[i];
      p.rotation_index = k;
      set.entries.push_back({id, p, embed_patch(copies[k])});
    }
  }
  return set;
}

std::vector<char> encode_kdesc(const DescriptorSet& set) {
  set.validate();
  detail::ByteWriter w;
  w.magic(kKdescMagic);
  w.put<std::uint32_t>(kKdescVersion);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(set.dim()));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(set.entries.size()));
  std::vector<float> buf(set.dim());
  for (const auto& e : set.entries) {
    w.put<std::uint32_t>(e.patch_id);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(e.patch.x));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(e.patch.y));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(e.patch.w));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(e.patch.h));
    w.put<std::uint8_t>(static_cast<std::uint8_t>(e.patch.rotation_index));
    w.put<float>(static_cast<float>(e.patch.objectness));
    std::transform(e.descriptor.values.begin(), e.descriptor.values.end(), buf.begin(),
                   [](double v) { return static_cast<float>(v); });
    w.put_span<float>(buf);
  }
  return w.bytes();
}

DescriptorSet decode_kdesc(std::span<const char> bytes, const std::string& image_id) {
  detail::ByteReader r(bytes);
  r.expect_magic(kKdescMagic);
  const auto version_at = r.offset();
  const auto version = r.get<std::uint32_t>("version");
  if (version != kKdescVersion) throw UnsupportedVersionError(version, version_at);
  const auto dim = r.get<std::uint32_t>("dim");
  const auto count_at = r.offset();
  const auto count = r.get<std::uint32_t>("count");
  if (dim == 0) throw ParseError("descriptor dim is zero", count_at - 4);
  if (count == 0) throw ParseError("descriptor file has no records", count_at);

  DescriptorSet set{image_id, {}};
  set.entries.reserve(std::min<std::size_t>(count, bytes.size() / 25));
  std::vector<float> buf(dim);
  for (std::uint32_t i = 0; i < count; ++i) {
    DescriptorEntry e;
    e.patch_id = r.get<std::uint32_t>("patch_id");
    e.patch.x = static_cast<int>(r.get<std::uint32_t>("x"));
    e.patch.y = static_cast<int>(r.get<std::uint32_t>("y"));
    e.patch.w = static_cast<int>(r.get<std::uint32_t>("w"));
    e.patch.h = static_cast<int>(r.get<std::uint32_t>("h"));
    const auto rot_at = r.offset();
    e.patch.rotation_index = r.get<std::uint8_t>("rotation_index");
    if (e.patch.rotation_index > 7) throw ParseError("rotation_index above 7", rot_at);
    const auto obj_at = r.offset();
    e.patch.objectness = r.get<float>("objectness");
    if (!std::isfinite(e.patch.objectness)) throw ParseError("non-finite objectness", obj_at);
    const auto values_at = r.offset();
    r.get_into<float>(buf, "descriptor values");
    e.descriptor.values.assign(buf.begin(), buf.end());
    double sq = 0.0;
    for (std::size_t j = 0; j < buf.size(); ++j) {
      if (!std::isfinite(buf[j])) throw ParseError("non-finite descriptor value", values_at + 4 * j);
      sq += e.descriptor.values[j] * e.descriptor.values[j];
    }
    if (sq == 0.0) throw ParseError("zero descriptor cannot be normalized", values_at);
    // Stored unit vectors are kept verbatim so export/import is idempotent.
    if (std::abs(std::sqrt(sq) - 1.0) > 1e-6) normalize_l2(e.descriptor.values);
    set.entries.push_back(std::move(e));
  }
  if (!r.at_end()) throw ParseError("trailing bytes after last record", r.offset());
  return set;
}

void export_descriptors(const DescriptorSet& set, const std::string& path) {
  detail::write_file(path, encode_kdesc(set));
}

DescriptorSet import_descriptors(const std::string& path) {
  const auto bytes = detail::read_file(path);
  return decode_kdesc(bytes, std::filesystem::path(path).stem().string());
}

}  // namespace kcnn
