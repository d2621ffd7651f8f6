#include "bsq/morphology.hpp"

#include <algorithm>
#include <string>

#include "bsq/error.hpp"

namespace bsq {

KernelSize::KernelSize(int k) : k_(k) {
  if (k < 1 || k % 2 == 0)
    throw ConfigError("kernel size must be a positive odd integer, got " + std::to_string(k));
}

namespace {

// Integral image with a zero first row/column.
std::vector<std::size_t> integral(const BinaryMask& m) {
  const std::size_t h = m.height(), w = m.width();
  std::vector<std::size_t> s((h + 1) * (w + 1), 0);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      s[(y + 1) * (w + 1) + x + 1] =
          m.at(y, x) + s[y * (w + 1) + x + 1] + s[(y + 1) * (w + 1) + x] - s[y * (w + 1) + x];
  return s;
}

// For every pixel: (ones in clamped window, clamped window area).
template <typename Pred>
BinaryMask window_filter(const BinaryMask& m, KernelSize k, Pred keep) {
  const std::size_t h = m.height(), w = m.width();
  const auto r = static_cast<std::size_t>(k.radius());
  const auto s = integral(m);
  BinaryMask out(h, w);
  for (std::size_t y = 0; y < h; ++y) {
    const std::size_t y0 = y >= r ? y - r : 0, y1 = std::min(h, y + r + 1);
    for (std::size_t x = 0; x < w; ++x) {
      const std::size_t x0 = x >= r ? x - r : 0, x1 = std::min(w, x + r + 1);
      const std::size_t ones = s[y1 * (w + 1) + x1] - s[y0 * (w + 1) + x1] -
                               s[y1 * (w + 1) + x0] + s[y0 * (w + 1) + x0];
      out.set(y, x, keep(ones, (y1 - y0) * (x1 - x0)));
    }
  }
  return out;
}

}  // namespace

BinaryMask dilate(const BinaryMask& mask, KernelSize k) {
  return window_filter(mask, k, [](std::size_t ones, std::size_t) { return ones > 0; });
}

BinaryMask erode(const BinaryMask& mask, KernelSize k) {
  return window_filter(mask, k, [](std::size_t ones, std::size_t area) { return ones == area; });
}

SqueezeTargets squeeze_targets(const BinaryMask& mask, KernelSize k) {
  return {mask_and_not(dilate(mask, k), mask), mask_and_not(mask, erode(mask, k))};
}

BinaryMask boundary_target(const BinaryMask& mask) {
  const auto h = static_cast<std::ptrdiff_t>(mask.height());
  const auto w = static_cast<std::ptrdiff_t>(mask.width());
  BinaryMask out(mask.height(), mask.width());
  for (std::ptrdiff_t y = 0; y < h; ++y) {
    for (std::ptrdiff_t x = 0; x < w; ++x) {
      int response = 0;
      for (std::ptrdiff_t dy = -1; dy <= 1; ++dy) {
        for (std::ptrdiff_t dx = -1; dx <= 1; ++dx) {
          const std::ptrdiff_t yy = y + dy, xx = x + dx;
          if (yy < 0 || yy >= h || xx < 0 || xx >= w) continue;
          const int v = mask.at(static_cast<std::size_t>(yy), static_cast<std::size_t>(xx));
          response += (dy == 0 && dx == 0) ? 8 * v : -v;
        }
      }
      out.set(static_cast<std::size_t>(y), static_cast<std::size_t>(x), response != 0);
    }
  }
  return out;
}

BinaryMask binarize(const LabelMap& labels, int cls) {
  std::vector<std::uint8_t> bits(labels.labels.size());
  for (std::size_t i = 0; i < bits.size(); ++i) bits[i] = labels.labels[i] == cls ? 1 : 0;
  return BinaryMask(labels.height, labels.width, std::move(bits));
}

std::vector<ClassTargets> per_class_targets(const LabelMap& labels, std::size_t num_classes,
                                            KernelSize k) {
  if (labels.labels.size() != labels.height * labels.width)
    throw ShapeError("label map size does not match its dimensions");
  for (int v : labels.labels) {
    if (v < 0 || static_cast<std::size_t>(v) >= num_classes)
      throw ConfigError("label " + std::to_string(v) + " outside [0, " +
                        std::to_string(num_classes) + ")");
  }
  std::vector<ClassTargets> out;
  out.reserve(num_classes);
  for (std::size_t c = 0; c < num_classes; ++c) {
    BinaryMask gs = binarize(labels, static_cast<int>(c));
    auto [gc, ge] = squeeze_targets(gs, k);
    BinaryMask gb = boundary_target(gs);
    out.push_back({std::move(gs), std::move(gb), std::move(gc), std::move(ge)});
  }
  return out;
}

}  // namespace bsq
