#pragma once

#include <cstddef>
#include <vector>

#include "bsq/field.hpp"

namespace bsq {

/// Side length of the square structuring element. Always odd and positive.
class KernelSize {
 public:
  // Throws ConfigError for even or non-positive sizes.
  explicit KernelSize(int k);
  int value() const noexcept { return k_; }
  int radius() const noexcept { return k_ / 2; }
  auto operator<=>(const KernelSize&) const = default;

 private:
  int k_;
};

// Defaults for instance-style (28x28) and semantic targets.
inline constexpr int kInstanceKernel = 5;
inline constexpr int kSemanticKernel = 15;

// Square-window dilation/erosion. Windows are clamped to the image, so a
// full-frame mask is a fixed point of both.
BinaryMask dilate(const BinaryMask& mask, KernelSize k);
BinaryMask erode(const BinaryMask& mask, KernelSize k);

struct SqueezeTargets {
  BinaryMask contraction;  // dilate(mask) minus mask: outer band
  BinaryMask expansion;    // mask minus erode(mask): inner band
};

SqueezeTargets squeeze_targets(const BinaryMask& mask, KernelSize k);

// Pixels where the 8-neighbour Laplacian (centre 8, neighbours -1, zero
// padding outside the image) is nonzero: a 1px inner plus outer contour.
BinaryMask boundary_target(const BinaryMask& mask);

struct LabelMap {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<int> labels;  // row-major
};

struct ClassTargets {
  BinaryMask segmentation;
  BinaryMask boundary;
  BinaryMask contraction;
  BinaryMask expansion;
};

BinaryMask binarize(const LabelMap& labels, int cls);

// One binary problem per class. Throws ConfigError when a label lies
// outside [0, num_classes).
std::vector<ClassTargets> per_class_targets(const LabelMap& labels, std::size_t num_classes,
                                            KernelSize k = KernelSize(kSemanticKernel));

}  // namespace bsq
