#include "kcnn/raster.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <numbers>

#include "kcnn/detail/binio.hpp"
#include "kcnn/error.hpp"

namespace kcnn {

namespace {

constexpr std::int64_t kSubpixel = 65536;

std::int64_t floor_div(std::int64_t a, std::int64_t b) {
  std::int64_t q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
  return q;
}

}  // namespace

Image::Image(int height, int width, double fill)
    : Image(height, width,
            std::vector<double>(static_cast<std::size_t>(std::max(height, 0)) *
                                    static_cast<std::size_t>(std::max(width, 0)),
                                fill)) {}

Image::Image(int height, int width, std::vector<double> pixels)
    : height_(height), width_(width), pixels_(std::move(pixels)) {
  if (height < kMinSide || width < kMinSide) {
    throw RangeError("image sides must be >= " + std::to_string(kMinSide) + ", got " +
                     std::to_string(height) + "x" + std::to_string(width));
  }
  if (pixels_.size() != static_cast<std::size_t>(height) * static_cast<std::size_t>(width)) {
    throw ShapeError("pixel buffer length does not match " + std::to_string(height) + "x" +
                     std::to_string(width));
  }
  for (double v : pixels_) {
    if (!std::isfinite(v) || v < 0.0 || v > 1.0) {
      throw RangeError("pixel value outside [0,1]");
    }
  }
}

void Image::validate_input() const {
  if (height_ < kMinInputSide || width_ < kMinInputSide) {
    throw RangeError("input image must be at least 8x8, got " + std::to_string(height_) + "x" +
                     std::to_string(width_));
  }
}

const char* to_string(TransformKind kind) {
  switch (kind) {
    case TransformKind::Translate: return "translate";
    case TransformKind::Scale: return "scale";
    case TransformKind::Rotate: return "rotate";
  }
  return "?";
}

TransformKind transform_kind_from_string(const std::string& name) {
  if (name == "translate") return TransformKind::Translate;
  if (name == "scale") return TransformKind::Scale;
  if (name == "rotate") return TransformKind::Rotate;
  throw ConfigError("unknown transform kind '" + name + "'");
}

LinearMap LinearMap::rotation(double theta_deg, double scale) {
  const double rad = theta_deg * std::numbers::pi / 180.0;
  const double co = scale * std::cos(rad);
  const double si = scale * std::sin(rad);
  return {co, -si, si, co};
}

LinearMap LinearMap::scaling(double sx, double sy) { return {sx, 0.0, 0.0, sy}; }

Image resample(const Image& src, int out_height, int out_width, const LinearMap& map,
               double center_x, double center_y) {
  const int w = src.width();
  const int h = src.height();
  // Centers live on the half-pixel lattice, so these products are integral.
  const auto cx = static_cast<std::int64_t>(std::llround(center_x * 2.0)) * (kSubpixel / 2);
  const auto cy = static_cast<std::int64_t>(std::llround(center_y * 2.0)) * (kSubpixel / 2);
  const double half_w = (out_width - 1) / 2.0;
  const double half_h = (out_height - 1) / 2.0;
  const double inv = 1.0 / static_cast<double>(kSubpixel);

  std::vector<double> out(static_cast<std::size_t>(out_height) * out_width);
  for (int r = 0; r < out_height; ++r) {
    const double uy = r - half_h;
    for (int c = 0; c < out_width; ++c) {
      const double ux = c - half_w;
      const double sx = map.a * ux + map.b * uy;
      const double sy = map.c * ux + map.d * uy;
      const std::int64_t qx = std::llround(sx * static_cast<double>(kSubpixel)) + cx;
      const std::int64_t qy = std::llround(sy * static_cast<double>(kSubpixel)) + cy;
      const std::int64_t x0 = floor_div(qx, kSubpixel);
      const std::int64_t y0 = floor_div(qy, kSubpixel);
      const std::int64_t fx = qx - x0 * kSubpixel;
      const std::int64_t fy = qy - y0 * kSubpixel;
      const double wx1 = static_cast<double>(fx) * inv;
      const double wx0 = static_cast<double>(kSubpixel - fx) * inv;
      const double wy1 = static_cast<double>(fy) * inv;
      const double wy0 = static_cast<double>(kSubpixel - fy) * inv;
      const int xa = static_cast<int>(std::clamp<std::int64_t>(x0, 0, w - 1));
      const int xb = static_cast<int>(std::clamp<std::int64_t>(x0 + 1, 0, w - 1));
      const int ya = static_cast<int>(std::clamp<std::int64_t>(y0, 0, h - 1));
      const int yb = static_cast<int>(std::clamp<std::int64_t>(y0 + 1, 0, h - 1));
      // Diagonal pairs first: any quarter turn or mirror of the tap square
      // maps this expression onto itself term for term.
      const double t00 = src.at(ya, xa) * (wy0 * wx0);
      const double t11 = src.at(yb, xb) * (wy1 * wx1);
      const double t01 = src.at(ya, xb) * (wy0 * wx1);
      const double t10 = src.at(yb, xa) * (wy1 * wx0);
      out[static_cast<std::size_t>(r) * out_width + c] = (t00 + t11) + (t01 + t10);
    }
  }
  return Image(out_height, out_width, std::move(out));
}

Image translate_circular(const Image& img, int t) {
  if (t < 0 || t > img.width()) {
    throw RangeError("translation t=" + std::to_string(t) + " outside [0," +
                     std::to_string(img.width()) + "]");
  }
  Image out(img.height(), img.width());
  const int last = img.width() - 1;
  for (int r = 0; r < img.height(); ++r) {
    for (int c = 0; c < img.width(); ++c) {
      out.at(r, c) = img.at(r, std::min(c + t, last));
    }
  }
  return out;
}

Image scale_same_size(const Image& img, double s) {
  if (!(s >= 0.25 && s <= 4.0)) {
    throw RangeError("scale s=" + std::to_string(s) + " outside [0.25,4]");
  }
  if (s == 1.0) return img;
  const double inv = 1.0 / s;
  return resample(img, img.height(), img.width(), LinearMap::scaling(inv, inv),
                  (img.width() - 1) / 2.0, (img.height() - 1) / 2.0);
}

int inscribed_square_side(int height, int width) {
  int side = static_cast<int>(std::floor(std::min(height, width) / std::numbers::sqrt2));
  if (side % 2 != 0) --side;
  return side;
}

Image rotate_center_crop(const Image& img, double theta) {
  if (!(theta >= 0.0 && theta < 360.0)) {
    throw RangeError("rotation theta=" + std::to_string(theta) + " outside [0,360)");
  }
  const int side = inscribed_square_side(img.height(), img.width());
  // Rotate about the crop center so theta=0 is an exact crop even when the
  // margins are odd.
  const int off_x = (img.width() - side) / 2;
  const int off_y = (img.height() - side) / 2;
  const double cx = off_x + (side - 1) / 2.0;
  const double cy = off_y + (side - 1) / 2.0;
  if (theta == 0.0) return crop(img, off_x, off_y, side, side);
  return resample(img, side, side, LinearMap::rotation(theta), cx, cy);
}

Image crop(const Image& img, int x, int y, int w, int h) {
  if (w < Image::kMinSide || h < Image::kMinSide || x < 0 || y < 0 || x + w > img.width() ||
      y + h > img.height()) {
    throw RangeError("crop rectangle (" + std::to_string(x) + "," + std::to_string(y) + "," +
                     std::to_string(w) + "," + std::to_string(h) + ") outside " +
                     std::to_string(img.width()) + "x" + std::to_string(img.height()) +
                     " image");
  }
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(w) * h);
  for (int r = y; r < y + h; ++r) {
    const auto row = img.pixels().subspan(static_cast<std::size_t>(r) * img.width() + x, w);
    out.insert(out.end(), row.begin(), row.end());
  }
  return Image(h, w, std::move(out));
}

Image rot90(const Image& img, int quarter_turns) {
  const int k = ((quarter_turns % 4) + 4) % 4;
  if (k == 0) return img;
  const int h = img.height();
  const int w = img.width();
  const int oh = (k == 2) ? h : w;
  const int ow = (k == 2) ? w : h;
  Image out(oh, ow);
  for (int r = 0; r < oh; ++r) {
    for (int c = 0; c < ow; ++c) {
      switch (k) {
        case 1: out.at(r, c) = img.at(c, w - 1 - r); break;
        case 2: out.at(r, c) = img.at(h - 1 - r, w - 1 - c); break;
        default: out.at(r, c) = img.at(h - 1 - c, r); break;
      }
    }
  }
  return out;
}

Image resize(const Image& img, int out_height, int out_width) {
  if (out_height == img.height() && out_width == img.width()) return img;
  const double sx = static_cast<double>(img.width()) / out_width;
  const double sy = static_cast<double>(img.height()) / out_height;
  return resample(img, out_height, out_width, LinearMap::scaling(sx, sy),
                  (img.width() - 1) / 2.0, (img.height() - 1) / 2.0);
}

Image rotate_same_size(const Image& img, double theta) {
  return resample(img, img.height(), img.width(), LinearMap::rotation(theta),
                  (img.width() - 1) / 2.0, (img.height() - 1) / 2.0);
}

Image apply_transform(const Image& img, const TransformSpec& spec) {
  switch (spec.kind) {
    case TransformKind::Translate: return translate_circular(img, spec.t);
    case TransformKind::Scale: return scale_same_size(img, spec.s);
    case TransformKind::Rotate: return rotate_center_crop(img, spec.theta);
  }
  throw ConfigError("unknown transform");
}

// ---------------------------------------------------------------------------
// PGM

Image decode_pgm(std::span<const char> bytes) {
  std::size_t pos = 0;
  auto skip_space = [&] {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(static_cast<unsigned char>(bytes[pos]))) {
        ++pos;
      } else {
        break;
      }
    }
  };
  auto read_int = [&](const char* what) {
    skip_space();
    const std::size_t start = pos;
    long v = 0;
    while (pos < bytes.size() && std::isdigit(static_cast<unsigned char>(bytes[pos]))) {
      v = v * 10 + (bytes[pos] - '0');
      if (v > 1'000'000) throw ParseError(std::string("PGM ") + what + " too large", start);
      ++pos;
    }
    if (pos == start) throw ParseError(std::string("PGM expected ") + what, start);
    return static_cast<int>(v);
  };

  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '5') {
    throw ParseError("not a binary PGM (P5)", 0);
  }
  pos = 2;
  const int width = read_int("width");
  const int height = read_int("height");
  const int maxval = read_int("maxval");
  if (maxval != 255) throw ParseError("PGM maxval must be 255", pos);
  if (pos >= bytes.size() || !std::isspace(static_cast<unsigned char>(bytes[pos]))) {
    throw ParseError("PGM header not terminated", pos);
  }
  ++pos;
  const std::size_t n = static_cast<std::size_t>(width) * height;
  if (bytes.size() - pos < n) throw ParseError("truncated PGM raster", bytes.size());
  std::vector<double> px(n);
  for (std::size_t i = 0; i < n; ++i) {
    px[i] = static_cast<unsigned char>(bytes[pos + i]) / 255.0;
  }
  Image img(height, width, std::move(px));
  img.validate_input();
  return img;
}

std::vector<char> encode_pgm(const Image& img) {
  std::string header =
      "P5\n" + std::to_string(img.width()) + " " + std::to_string(img.height()) + "\n255\n";
  std::vector<char> out(header.begin(), header.end());
  out.reserve(out.size() + img.pixels().size());
  for (double v : img.pixels()) {
    out.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(v * 255.0))));
  }
  return out;
}

Image read_pgm(const std::string& path) {
  const auto bytes = detail::read_file(path);
  return decode_pgm(bytes);
}

void write_pgm(const Image& img, const std::string& path) {
  detail::write_file(path, encode_pgm(img));
}

}  // namespace kcnn
