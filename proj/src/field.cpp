#include "bsq/field.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "bsq/error.hpp"

namespace bsq {

FeatureField::FeatureField(std::size_t channels, std::size_t height, std::size_t width,
                           double fill)
    : shape_{channels, height, width}, values_(channels * height * width, fill) {}

FeatureField::FeatureField(std::size_t channels, std::size_t height, std::size_t width,
                           const std::vector<double>& values)
    : shape_{channels, height, width}, values_(values.begin(), values.end()) {
  if (values_.size() != shape_.size()) {
    throw ShapeError("FeatureField: " + std::to_string(values_.size()) +
                     " values for shape " + std::to_string(channels) + "x" +
                     std::to_string(height) + "x" + std::to_string(width));
  }
}

std::span<double> FeatureField::grad() {
  if (!has_grad_) {
    grad_.assign(values_.size(), 0.0);
    has_grad_ = true;
  }
  return grad_;
}

bool FeatureField::all_finite() const noexcept {
  auto finite = [](double v) { return std::isfinite(v); };
  return std::all_of(values_.begin(), values_.end(), finite) &&
         std::all_of(grad_.begin(), grad_.end(), finite);
}

BinaryMask::BinaryMask(std::size_t height, std::size_t width, std::uint8_t fill)
    : height_(height), width_(width), bits_(height * width, fill ? 1 : 0) {}

BinaryMask::BinaryMask(std::size_t height, std::size_t width, std::vector<std::uint8_t> bits)
    : height_(height), width_(width), bits_(std::move(bits)) {
  if (bits_.size() != height * width) {
    throw ShapeError("BinaryMask: bit count does not match " + std::to_string(height) + "x" +
                     std::to_string(width));
  }
  for (auto& b : bits_) {
    if (b > 1) throw ShapeError("BinaryMask: element outside {0,1}");
  }
}

std::size_t BinaryMask::count() const noexcept {
  return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), std::uint8_t{1}));
}

namespace {

template <typename Op>
BinaryMask combine(const BinaryMask& a, const BinaryMask& b, Op op) {
  if (!a.same_shape(b)) throw ShapeError("mask shapes differ");
  std::vector<std::uint8_t> out(a.size());
  auto ab = a.bits();
  auto bb = b.bits();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = op(ab[i], bb[i]) ? 1 : 0;
  return BinaryMask(a.height(), a.width(), std::move(out));
}

}  // namespace

BinaryMask mask_and(const BinaryMask& a, const BinaryMask& b) {
  return combine(a, b, [](auto x, auto y) { return x && y; });
}
BinaryMask mask_or(const BinaryMask& a, const BinaryMask& b) {
  return combine(a, b, [](auto x, auto y) { return x || y; });
}
BinaryMask mask_and_not(const BinaryMask& a, const BinaryMask& b) {
  return combine(a, b, [](auto x, auto y) { return x && !y; });
}
BinaryMask mask_not(const BinaryMask& a) {
  std::vector<std::uint8_t> out(a.size());
  auto ab = a.bits();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = ab[i] ? 0 : 1;
  return BinaryMask(a.height(), a.width(), std::move(out));
}

bool is_subset(const BinaryMask& a, const BinaryMask& b) {
  if (!a.same_shape(b)) throw ShapeError("mask shapes differ");
  auto ab = a.bits();
  auto bb = b.bits();
  for (std::size_t i = 0; i < ab.size(); ++i) {
    if (ab[i] && !bb[i]) return false;
  }
  return true;
}

std::size_t intersection_count(const BinaryMask& a, const BinaryMask& b) {
  if (!a.same_shape(b)) throw ShapeError("mask shapes differ");
  auto ab = a.bits();
  auto bb = b.bits();
  std::size_t n = 0;
  for (std::size_t i = 0; i < ab.size(); ++i) n += (ab[i] & bb[i]);
  return n;
}

FlowField FlowField::from_field(const FeatureField& field) {
  if (field.channels() != 2) throw ShapeError("flow field needs exactly 2 channels");
  FlowField flow;
  flow.height = field.height();
  flow.width = field.width();
  auto dx = field.channel(0);
  auto dy = field.channel(1);
  flow.dx.assign(dx.begin(), dx.end());
  flow.dy.assign(dy.begin(), dy.end());
  return flow;
}

FeatureField FlowField::to_field() const {
  std::vector<double> v;
  v.reserve(2 * dx.size());
  v.insert(v.end(), dx.begin(), dx.end());
  v.insert(v.end(), dy.begin(), dy.end());
  return FeatureField(2, height, width, std::move(v));
}

}  // namespace bsq
