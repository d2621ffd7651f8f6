#pragma once

#include <cstddef>
#include <cstdint>
#include <new>
#include <span>
#include <vector>

namespace bsq {

// Fixed 64-byte alignment. Vectorized kernels peel leading elements up to
// an aligned address, so a fixed alignment keeps the summation order, and
// therefore every bit of the result, independent of the heap layout.
template <class T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlign{64};

  AlignedAllocator() noexcept = default;
  template <class U>
  AlignedAllocator(const AlignedAllocator<U>&) noexcept {}

  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlign)); }
  void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, kAlign); }

  template <class U>
  bool operator==(const AlignedAllocator<U>&) const noexcept {
    return true;
  }
};

using RealVec = std::vector<double, AlignedAllocator<double>>;

struct Shape3 {
  std::size_t channels = 0;
  std::size_t height = 0;
  std::size_t width = 0;

  std::size_t size() const noexcept { return channels * height * width; }
  std::size_t plane() const noexcept { return height * width; }
  bool operator==(const Shape3&) const = default;
};

/// Dense channels x height x width field of reals, stored channel-major then
/// row-major. Carries an optional gradient buffer of identical shape.
class FeatureField {
 public:
  FeatureField() = default;
  FeatureField(std::size_t channels, std::size_t height, std::size_t width, double fill = 0.0);
  FeatureField(std::size_t channels, std::size_t height, std::size_t width,
               const std::vector<double>& values);
  explicit FeatureField(Shape3 shape, double fill = 0.0)
      : FeatureField(shape.channels, shape.height, shape.width, fill) {}

  const Shape3& shape() const noexcept { return shape_; }
  std::size_t channels() const noexcept { return shape_.channels; }
  std::size_t height() const noexcept { return shape_.height; }
  std::size_t width() const noexcept { return shape_.width; }
  std::size_t size() const noexcept { return values_.size(); }

  double& at(std::size_t c, std::size_t y, std::size_t x) {
    return values_[(c * shape_.height + y) * shape_.width + x];
  }
  double at(std::size_t c, std::size_t y, std::size_t x) const {
    return values_[(c * shape_.height + y) * shape_.width + x];
  }

  std::span<double> values() noexcept { return values_; }
  std::span<const double> values() const noexcept { return values_; }
  std::span<double> channel(std::size_t c) noexcept {
    return std::span<double>(values_).subspan(c * shape_.plane(), shape_.plane());
  }
  std::span<const double> channel(std::size_t c) const noexcept {
    return std::span<const double>(values_).subspan(c * shape_.plane(), shape_.plane());
  }

  bool has_grad() const noexcept { return has_grad_; }
  // Allocates a zero gradient buffer if none exists yet.
  std::span<double> grad();
  std::span<const double> grad() const noexcept { return grad_; }
  void clear_grad() noexcept {
    grad_.clear();
    has_grad_ = false;
  }

  bool all_finite() const noexcept;

  bool operator==(const FeatureField& other) const {
    return shape_ == other.shape_ && values_ == other.values_;
  }

 private:
  Shape3 shape_;
  RealVec values_;
  RealVec grad_;
  bool has_grad_ = false;
};

/// Row-major {0,1} raster.
class BinaryMask {
 public:
  BinaryMask() = default;
  BinaryMask(std::size_t height, std::size_t width, std::uint8_t fill = 0);
  BinaryMask(std::size_t height, std::size_t width, std::vector<std::uint8_t> bits);

  std::size_t height() const noexcept { return height_; }
  std::size_t width() const noexcept { return width_; }
  std::size_t size() const noexcept { return bits_.size(); }

  std::uint8_t at(std::size_t y, std::size_t x) const { return bits_[y * width_ + x]; }
  void set(std::size_t y, std::size_t x, bool on) { bits_[y * width_ + x] = on ? 1 : 0; }

  std::span<const std::uint8_t> bits() const noexcept { return bits_; }
  std::size_t count() const noexcept;
  bool empty_set() const noexcept { return count() == 0; }
  bool same_shape(const BinaryMask& other) const noexcept {
    return height_ == other.height_ && width_ == other.width_;
  }

  bool operator==(const BinaryMask&) const = default;

 private:
  std::size_t height_ = 0;
  std::size_t width_ = 0;
  std::vector<std::uint8_t> bits_;
};

// Set algebra on equally sized masks; throw ShapeError otherwise.
BinaryMask mask_and(const BinaryMask& a, const BinaryMask& b);
BinaryMask mask_or(const BinaryMask& a, const BinaryMask& b);
BinaryMask mask_and_not(const BinaryMask& a, const BinaryMask& b);
BinaryMask mask_not(const BinaryMask& a);
bool is_subset(const BinaryMask& a, const BinaryMask& b);
std::size_t intersection_count(const BinaryMask& a, const BinaryMask& b);

/// Per-pixel displacement (dx along width, dy along height), in pixels.
struct FlowField {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> dx;
  std::vector<double> dy;

  FlowField() = default;
  FlowField(std::size_t h, std::size_t w, double fx = 0.0, double fy = 0.0)
      : height(h), width(w), dx(h * w, fx), dy(h * w, fy) {}

  // Channel 0 = dx, channel 1 = dy.
  static FlowField from_field(const FeatureField& field);
  FeatureField to_field() const;
};

}  // namespace bsq
