#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace kcnn {

/// Row-major grayscale raster with intensities in [0,1].
///
/// Decoded images must be at least 8x8 (see `validate_input`); the type
/// itself admits sides down to 4 because crops and rotation crops of small
/// inputs legitimately shrink below 8.
class Image {
 public:
  static constexpr int kMinSide = 4;
  static constexpr int kMinInputSide = 8;

  Image() = default;
  Image(int height, int width, double fill = 0.0);
  Image(int height, int width, std::vector<double> pixels);

  int height() const { return height_; }
  int width() const { return width_; }
  bool empty() const { return pixels_.empty(); }

  double at(int row, int col) const { return pixels_[static_cast<std::size_t>(row) * width_ + col]; }
  double& at(int row, int col) { return pixels_[static_cast<std::size_t>(row) * width_ + col]; }

  std::span<const double> pixels() const { return pixels_; }
  std::span<double> pixels() { return pixels_; }

  /// Throws RangeError unless the image satisfies the input contract
  /// (sides >= 8, every pixel finite and in [0,1]).
  void validate_input() const;

  friend bool operator==(const Image&, const Image&) = default;

 private:
  int height_ = 0;
  int width_ = 0;
  std::vector<double> pixels_;
};

enum class TransformKind { Translate, Scale, Rotate };

struct TransformSpec {
  TransformKind kind = TransformKind::Translate;
  int t = 0;
  double s = 1.0;
  double theta = 0.0;
};

const char* to_string(TransformKind kind);
TransformKind transform_kind_from_string(const std::string& name);

/// Shift left by `t` pixels over a doubled canvas whose right half repeats
/// the last column; the output keeps the input size.
Image translate_circular(const Image& img, int t);

/// Bilinear zoom by `s` about the image center, same output size;
/// uncovered pixels replicate the nearest border.
Image scale_same_size(const Image& img, double s);

/// Rotate by `theta` degrees (counter-clockwise as displayed) about the
/// image center and keep the centered square inscribed in the inscribed
/// circle. The side is floor(min(h,w)/sqrt(2)), reduced by one when odd.
Image rotate_center_crop(const Image& img, double theta);

/// Side length produced by rotate_center_crop for an h x w image.
int inscribed_square_side(int height, int width);

/// Exact sub-raster; the rectangle must lie inside the image, w,h >= 4.
Image crop(const Image& img, int x, int y, int w, int h);

/// Exact quarter-turn rotation (counter-clockwise, `quarter_turns` mod 4).
Image rot90(const Image& img, int quarter_turns = 1);

/// Bilinear resize to out_h x out_w with pixel-center alignment.
Image resize(const Image& img, int out_height, int out_width);

/// Full-canvas bilinear rotation about the center with edge replication.
Image rotate_same_size(const Image& img, double theta);

/// Dispatches a TransformSpec to the matching generator.
Image apply_transform(const Image& img, const TransformSpec& spec);

/// 2x2 map from centered output coordinates to centered source coordinates.
/// Maps of the form [[a, b], [-b, a]] commute bit-exactly with rot90.
struct LinearMap {
  double a = 1.0, b = 0.0, c = 0.0, d = 1.0;

  static LinearMap rotation(double theta_deg, double scale = 1.0);
  static LinearMap scaling(double sx, double sy);
};

/// Bilinear resampling with edge replication. Output pixel (r, c) samples the
/// source at center + map * (c - (out_w-1)/2, r - (out_h-1)/2). Sample
/// positions are snapped to a 1/65536 pixel lattice and the four taps are
/// combined in a dihedrally symmetric order, so the result is bit-exactly
/// equivariant under rot90 for square inputs and rotation-scale maps.
Image resample(const Image& src, int out_height, int out_width, const LinearMap& map,
               double center_x, double center_y);

/// P5 8-bit PGM codec. Values map to [0,1] by v/255.
Image read_pgm(const std::string& path);
void write_pgm(const Image& img, const std::string& path);
Image decode_pgm(std::span<const char> bytes);
std::vector<char> encode_pgm(const Image& img);

}  // namespace kcnn
