#include "bsq/viz.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numbers>

#include "bsq/error.hpp"

namespace bsq {

namespace {

std::uint8_t to_byte(double v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

void hsv_to_rgb(double h, double s, double v, double rgb[3]) {
  const double c = v * s;
  const double hp = h * 6.0;
  const double x = c * (1.0 - std::abs(std::fmod(hp, 2.0) - 1.0));
  double r = 0, g = 0, b = 0;
  switch (static_cast<int>(hp) % 6) {
    case 0: r = c, g = x; break;
    case 1: r = x, g = c; break;
    case 2: g = c, b = x; break;
    case 3: g = x, b = c; break;
    case 4: r = x, b = c; break;
    default: r = c, b = x; break;
  }
  const double m = v - c;
  rgb[0] = r + m, rgb[1] = g + m, rgb[2] = b + m;
}

}  // namespace

RgbImage flow_to_rgb(const FlowField& flow, double max_magnitude) {
  const std::size_t n = flow.height * flow.width;
  if (max_magnitude <= 0.0) {
    for (std::size_t i = 0; i < n; ++i)
      max_magnitude = std::max(max_magnitude, std::hypot(flow.dx[i], flow.dy[i]));
  }
  RgbImage img{flow.height, flow.width, std::vector<std::uint8_t>(3 * n)};
  for (std::size_t i = 0; i < n; ++i) {
    const double mag = std::hypot(flow.dx[i], flow.dy[i]);
    double angle = std::atan2(flow.dy[i], flow.dx[i]);  // (-pi, pi]
    if (angle < 0) angle += 2.0 * std::numbers::pi;
    const double hue = std::min(angle / (2.0 * std::numbers::pi), 1.0 - 1e-12);
    const double sat = max_magnitude > 0.0 ? std::min(mag / max_magnitude, 1.0) : 0.0;
    double rgb[3];
    hsv_to_rgb(hue, sat, 1.0, rgb);
    for (int c = 0; c < 3; ++c) img.rgb[3 * i + c] = to_byte(rgb[c]);
  }
  return img;
}

FeatureField pca_project(const FeatureField& features, std::size_t components,
                         std::size_t iterations) {
  const std::size_t c = features.channels();
  const std::size_t n = features.height() * features.width();
  if (c == 0 || n == 0) throw ShapeError("pca_project: empty field");
  // Rows are channels, columns pixels.
  Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> x(
      features.values().data(), c, n);
  Eigen::MatrixXd centered = x.colwise() - x.rowwise().mean();
  Eigen::MatrixXd cov = centered * centered.transpose() / static_cast<double>(n);

  FeatureField out(components, features.height(), features.width());
  const double scale = std::max(cov.trace(), 1e-300);
  for (std::size_t k = 0; k < components; ++k) {
    // Deterministic start that is never orthogonal to everything.
    Eigen::VectorXd v = Eigen::VectorXd::LinSpaced(c, 1.0, 2.0);
    double lambda = 0.0;
    for (std::size_t it = 0; it < iterations; ++it) {
      Eigen::VectorXd w = cov * v;
      const double norm = w.norm();
      if (norm <= 1e-12 * scale) {
        lambda = 0.0;
        break;
      }
      v = w / norm;
      lambda = v.dot(cov * v);
    }
    if (lambda <= 1e-12 * scale) break;
    // Fix the sign so the largest-magnitude entry is positive.
    Eigen::Index arg;
    v.cwiseAbs().maxCoeff(&arg);
    if (v(arg) < 0) v = -v;
    Eigen::RowVectorXd proj = v.transpose() * centered;
    auto dst = out.channel(k);
    for (std::size_t i = 0; i < n; ++i) dst[i] = proj(static_cast<Eigen::Index>(i));
    cov -= lambda * v * v.transpose();
  }
  return out;
}

RgbImage field_to_rgb(const FeatureField& rgb) {
  if (rgb.channels() != 3) throw ShapeError("field_to_rgb: expected 3 channels");
  const std::size_t n = rgb.height() * rgb.width();
  RgbImage img{rgb.height(), rgb.width(), std::vector<std::uint8_t>(3 * n)};
  for (std::size_t c = 0; c < 3; ++c) {
    auto ch = rgb.channel(c);
    const auto [lo, hi] = std::minmax_element(ch.begin(), ch.end());
    const double span = *hi - *lo;
    for (std::size_t i = 0; i < n; ++i)
      img.rgb[3 * i + c] = span > 0 ? to_byte((ch[i] - *lo) / span) : 0;
  }
  return img;
}

RgbImage mask_to_rgb(const BinaryMask& mask) {
  RgbImage img{mask.height(), mask.width(), {}};
  img.rgb.reserve(3 * mask.bits().size());
  for (auto b : mask.bits())
    for (int c = 0; c < 3; ++c) img.rgb.push_back(b ? 255 : 0);
  return img;
}

RgbImage gray_to_rgb(const FeatureField& gray) {
  if (gray.channels() != 1) throw ShapeError("gray_to_rgb: expected 1 channel");
  RgbImage img{gray.height(), gray.width(), {}};
  img.rgb.reserve(3 * gray.values().size());
  for (double v : gray.values())
    for (int c = 0; c < 3; ++c) img.rgb.push_back(to_byte(v));
  return img;
}

RgbImage upscale_nearest(const RgbImage& img, std::size_t factor) {
  if (factor == 0) throw ConfigError("upscale factor must be positive");
  RgbImage out{img.height * factor, img.width * factor, {}};
  out.rgb.resize(3 * out.height * out.width);
  for (std::size_t y = 0; y < out.height; ++y)
    for (std::size_t x = 0; x < out.width; ++x)
      for (int c = 0; c < 3; ++c)
        out.rgb[3 * (y * out.width + x) + c] =
            img.rgb[3 * ((y / factor) * img.width + x / factor) + c];
  return out;
}

}  // namespace bsq
