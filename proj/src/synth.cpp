#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <numbers>
#include <random>

#include "kcnn/detail/binio.hpp"
#include "kcnn/error.hpp"
#include "kcnn/pipeline.hpp"

namespace fs = std::filesystem;

namespace kcnn {

namespace {

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double uniform(double lo, double hi) {
    return lo + (hi - lo) * (static_cast<double>(engine_() >> 11) * 0x1.0p-53);
  }
  int integer(int lo, int hi) {  // inclusive
    return lo + static_cast<int>(engine_() % static_cast<std::uint64_t>(hi - lo + 1));
  }
  std::uint64_t next() { return engine_(); }

 private:
  std::mt19937_64 engine_;
};

double smoothstep(double edge, double x) {
  // 1 inside (x < -edge), 0 outside (x > edge), linear ramp between.
  return std::clamp(0.5 - x / (2.0 * edge), 0.0, 1.0);
}

}  // namespace

Image synth_base_image(int side, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> px(static_cast<std::size_t>(side) * side);

  // Low-frequency background.
  const double bg = rng.uniform(0.25, 0.6);
  const double ang = rng.uniform(0.0, std::numbers::pi);
  const double freq = rng.uniform(0.5, 1.5) * 2.0 * std::numbers::pi / side;
  const double amp = rng.uniform(0.03, 0.1);
  for (int r = 0; r < side; ++r) {
    for (int c = 0; c < side; ++c) {
      px[static_cast<std::size_t>(r) * side + c] =
          bg + amp * std::sin(freq * (c * std::cos(ang) + r * std::sin(ang)));
    }
  }

  const int objects = rng.integer(4, 7);
  for (int o = 0; o < objects; ++o) {
    const int type = rng.integer(0, 3);
    const double cx = rng.uniform(0.15, 0.85) * side;
    const double cy = rng.uniform(0.15, 0.85) * side;
    const double level = rng.uniform(0.0, 1.0);
    switch (type) {
      case 0: {  // Gaussian blob
        const double sigma = rng.uniform(0.03, 0.09) * side;
        const double a = rng.uniform(-0.45, 0.45);
        for (int r = 0; r < side; ++r) {
          for (int c = 0; c < side; ++c) {
            const double d2 = (c - cx) * (c - cx) + (r - cy) * (r - cy);
            px[static_cast<std::size_t>(r) * side + c] += a * std::exp(-d2 / (2 * sigma * sigma));
          }
        }
        break;
      }
      case 1: {  // oriented rectangle filled with stripes
        const double hw = rng.uniform(0.07, 0.2) * side;
        const double hh = rng.uniform(0.07, 0.2) * side;
        const double rot = rng.uniform(0.0, std::numbers::pi);
        const double stripe_ang = rng.uniform(0.0, std::numbers::pi);
        const double period = rng.uniform(5.0, 14.0);
        const double contrast = rng.uniform(0.15, 0.35);
        for (int r = 0; r < side; ++r) {
          for (int c = 0; c < side; ++c) {
            const double dx = c - cx;
            const double dy = r - cy;
            const double u = dx * std::cos(rot) + dy * std::sin(rot);
            const double v = -dx * std::sin(rot) + dy * std::cos(rot);
            const double inside =
                smoothstep(1.0, std::abs(u) - hw) * smoothstep(1.0, std::abs(v) - hh);
            if (inside <= 0.0) continue;
            const double phase =
                (dx * std::cos(stripe_ang) + dy * std::sin(stripe_ang)) * 2.0 * std::numbers::pi /
                period;
            const double value = level + contrast * std::sin(phase);
            auto& p = px[static_cast<std::size_t>(r) * side + c];
            p = (1.0 - inside) * p + inside * value;
          }
        }
        break;
      }
      case 2: {  // flat disk
        const double radius = rng.uniform(0.05, 0.15) * side;
        for (int r = 0; r < side; ++r) {
          for (int c = 0; c < side; ++c) {
            const double d = std::hypot(c - cx, r - cy);
            const double inside = smoothstep(1.0, d - radius);
            auto& p = px[static_cast<std::size_t>(r) * side + c];
            p = (1.0 - inside) * p + inside * level;
          }
        }
        break;
      }
      default: {  // thick bar (edge pair)
        const double len = rng.uniform(0.15, 0.35) * side;
        const double thick = rng.uniform(2.0, 5.0);
        const double rot = rng.uniform(0.0, std::numbers::pi);
        for (int r = 0; r < side; ++r) {
          for (int c = 0; c < side; ++c) {
            const double dx = c - cx;
            const double dy = r - cy;
            const double u = dx * std::cos(rot) + dy * std::sin(rot);
            const double v = -dx * std::sin(rot) + dy * std::cos(rot);
            const double inside =
                smoothstep(1.0, std::abs(u) - len) * smoothstep(1.0, std::abs(v) - thick);
            auto& p = px[static_cast<std::size_t>(r) * side + c];
            p = (1.0 - inside) * p + inside * level;
          }
        }
        break;
      }
    }
  }
  for (double& v : px) v = std::clamp(v, 0.0, 1.0);
  return Image(side, side, std::move(px));
}

void generate_corpus(const std::string& out_dir, const SynthOptions& options) {
  if (options.n_base < 1) throw ConfigError("n_base must be >= 1");
  if (options.side < 32) throw ConfigError("synthetic image side must be >= 32");
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec || !fs::is_directory(out_dir)) {
    throw IoError("cannot create corpus directory '" + out_dir + "'");
  }

  Rng rng(options.seed);
  const int side = options.side;
  std::string gt = "query_id,image_id,label\n";
  char name[32];
  for (int b = 0; b < options.n_base; ++b) {
    const Image base = synth_base_image(side, rng.next());
    const int quarter = rng.integer(1, 3);
    const int shift = rng.integer(side / 16, side / 4);
    const double scale = rng.uniform(0.8, 1.25);
    const int quarter2 = rng.integer(1, 3);
    const int shift2 = rng.integer(side / 16, side / 4);
    const double scale2 = rng.uniform(0.8, 1.25);

    const Image relatives[5] = {
        base,
        rot90(base, quarter),
        translate_circular(base, shift),
        scale_same_size(base, scale),
        rot90(scale_same_size(translate_circular(base, shift2), scale2), quarter2),
    };
    std::snprintf(name, sizeof name, "g%03d_0", b);
    const std::string query = name;
    for (int k = 0; k < 5; ++k) {
      std::snprintf(name, sizeof name, "g%03d_%d", b, k);
      write_pgm(relatives[k], (fs::path(out_dir) / (std::string(name) + ".pgm")).string());
      if (k > 0) gt += query + "," + name + ",rel\n";
    }
  }
  detail::write_file((fs::path(out_dir) / "groundtruth.csv").string(),
                     std::span<const char>(gt.data(), gt.size()));
}

}  // namespace kcnn
