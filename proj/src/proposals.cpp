#include "kcnn/proposals.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "kcnn/error.hpp"

namespace kcnn {

namespace {

// Summed-area table with a zero first row/column.
class IntegralImage {
 public:
  explicit IntegralImage(const Image& img)
      : w_(img.width() + 1), sums_(static_cast<std::size_t>(img.height() + 1) * w_, 0.0) {
    for (int r = 0; r < img.height(); ++r) {
      double row = 0.0;
      for (int c = 0; c < img.width(); ++c) {
        row += img.at(r, c);
        sums_[idx(r + 1, c + 1)] = sums_[idx(r, c + 1)] + row;
      }
    }
  }

  double box(int x, int y, int w, int h) const {
    return sums_[idx(y + h, x + w)] - sums_[idx(y, x + w)] - sums_[idx(y + h, x)] +
           sums_[idx(y, x)];
  }

 private:
  std::size_t idx(int r, int c) const { return static_cast<std::size_t>(r) * w_ + c; }

  int w_;
  std::vector<double> sums_;
};

double score_from_integral(const IntegralImage& ii, int x, int y, int side) {
  const int inner = side / 2;
  const int off = (side - inner) / 2;
  const double inner_sum = ii.box(x + off, y + off, inner, inner);
  const double total = ii.box(x, y, side, side);
  const double inner_area = static_cast<double>(inner) * inner;
  const double ring_area = static_cast<double>(side) * side - inner_area;
  return inner_sum / inner_area - (total - inner_sum) / ring_area;
}

bool ranks_before(const Patch& a, const Patch& b) {
  if (a.objectness != b.objectness) return a.objectness > b.objectness;
  if (a.y != b.y) return a.y < b.y;
  if (a.x != b.x) return a.x < b.x;
  return a.w < b.w;
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream ss(line);
  while (std::getline(ss, cur, sep)) out.push_back(cur);
  return out;
}

}  // namespace

void ProposalConfig::validate() const {
  if (count < 1) throw ConfigError("proposal count N must be >= 1");
  if (scales.empty() && !include_full_side) throw ConfigError("no proposal scales configured");
  for (int s : scales) {
    if (s < 16) throw ConfigError("proposal scale " + std::to_string(s) + " is below 16");
  }
  if (!(nms_iou > 0.0 && nms_iou < 1.0)) throw ConfigError("nms_iou must lie in (0,1)");
}

Image objectness_map(const Image& img) {
  const int h = img.height();
  const int w = img.width();
  Image out(h, w);
  for (int r = 0; r < h; ++r) {
    const int up = std::max(r - 1, 0);
    const int dn = std::min(r + 1, h - 1);
    for (int c = 0; c < w; ++c) {
      const int lf = std::max(c - 1, 0);
      const int rt = std::min(c + 1, w - 1);
      const double gx = 0.5 * (img.at(r, rt) - img.at(r, lf));
      const double gy = 0.5 * (img.at(dn, c) - img.at(up, c));
      out.at(r, c) = std::min(1.0, std::abs(gx) + std::abs(gy));
    }
  }
  return out;
}

double window_score(const Image& objectness, int x, int y, int side) {
  return score_from_integral(IntegralImage(objectness), x, y, side);
}

double iou(const Patch& a, const Patch& b) {
  const int ix = std::max(0, std::min(a.x + a.w, b.x + b.w) - std::max(a.x, b.x));
  const int iy = std::max(0, std::min(a.y + a.h, b.y + b.h) - std::max(a.y, b.y));
  const double inter = static_cast<double>(ix) * iy;
  const double uni = static_cast<double>(a.w) * a.h + static_cast<double>(b.w) * b.h - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

Patch full_frame_patch(const Image& img) {
  return Patch{0, 0, img.width(), img.height(), 0.0, 0};
}

std::vector<Patch> propose(const Image& img, const ProposalConfig& cfg) {
  cfg.validate();
  const int min_side = std::min(img.height(), img.width());

  std::vector<int> sides;
  for (int s : cfg.scales) {
    if (s <= min_side) sides.push_back(s);
  }
  if (cfg.include_full_side && min_side >= 16) sides.push_back(min_side);
  std::sort(sides.begin(), sides.end());
  sides.erase(std::unique(sides.begin(), sides.end()), sides.end());
  if (sides.empty()) {
    throw EmptyInputError("image " + std::to_string(img.width()) + "x" +
                          std::to_string(img.height()) + " is smaller than every proposal scale");
  }

  const Image obj = objectness_map(img);
  const IntegralImage ii(obj);

  std::vector<Patch> candidates;
  for (int side : sides) {
    const int stride = std::max(1, side / 4);
    // Center the window lattice so it is symmetric under quarter turns.
    const int off_x = ((img.width() - side) % stride) / 2;
    const int off_y = ((img.height() - side) % stride) / 2;
    for (int y = off_y; y + side <= img.height(); y += stride) {
      for (int x = off_x; x + side <= img.width(); x += stride) {
        const double s = score_from_integral(ii, x, y, side);
        if (s > 0.0) candidates.push_back(Patch{x, y, side, side, s, 0});
      }
    }
  }
  std::sort(candidates.begin(), candidates.end(), ranks_before);

  std::vector<Patch> kept;
  for (const Patch& cand : candidates) {
    if (static_cast<int>(kept.size()) == cfg.count) break;
    const bool suppressed = std::any_of(kept.begin(), kept.end(), [&](const Patch& k) {
      return iou(cand, k) >= cfg.nms_iou;
    });
    if (!suppressed) kept.push_back(cand);
  }
  if (static_cast<int>(kept.size()) < cfg.count) kept.push_back(full_frame_patch(img));
  return kept;
}

Image canonical_patch(const Image& img, const Patch& p) {
  return resize(crop(img, p.x, p.y, p.w, p.h), kPatchSide, kPatchSide);
}

std::array<Image, 8> rotation_copies(const Image& canonical) {
  if (canonical.height() != canonical.width() || canonical.height() % 2 != 0) {
    throw ShapeError("rotation copies need a square raster with an even side");
  }
  const int side = canonical.height();
  const double zoom =
      static_cast<double>(inscribed_square_side(side, side)) / static_cast<double>(side);
  const double c = (side - 1) / 2.0;
  const Image straight = resample(canonical, side, side, LinearMap::scaling(zoom, zoom), c, c);
  const Image diagonal = resample(canonical, side, side, LinearMap::rotation(45.0, zoom), c, c);
  std::array<Image, 8> out;
  for (int q = 0; q < 4; ++q) {
    out[2 * q] = rot90(straight, q);
    out[2 * q + 1] = rot90(diagonal, q);
  }
  return out;
}

std::array<Image, 8> augment_rotations(const Image& img, const Patch& p) {
  return rotation_copies(canonical_patch(img, p));
}

std::string patches_to_csv(const std::vector<Patch>& patches) {
  std::string out = "patch_id,x,y,w,h,score\n";
  char buf[160];
  for (std::size_t i = 0; i < patches.size(); ++i) {
    const Patch& p = patches[i];
    std::snprintf(buf, sizeof buf, "%zu,%d,%d,%d,%d,%.17g\n", i, p.x, p.y, p.w, p.h,
                  p.objectness);
    out += buf;
  }
  return out;
}

std::vector<Patch> patches_from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line.rfind("patch_id,x,y,w,h,score", 0) != 0) {
    throw ParseError("patch CSV header missing", 0);
  }
  std::vector<Patch> out;
  std::uint64_t offset = line.size() + 1;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) {
      offset += 1;
      continue;
    }
    const auto f = split(line, ',');
    if (f.size() != 6) throw ParseError("patch CSV row needs 6 fields", offset);
    try {
      out.push_back(Patch{std::stoi(f[1]), std::stoi(f[2]), std::stoi(f[3]), std::stoi(f[4]),
                          std::stod(f[5]), 0});
    } catch (const std::logic_error&) {
      throw ParseError("patch CSV row has a malformed number", offset);
    }
    offset += line.size() + 1;
  }
  return out;
}

}  // namespace kcnn
