#pragma once

#include <cstddef>
#include <random>
#include <utility>
#include <vector>

#include "bsq/tape.hpp"

namespace bsq {

enum class KernelKind {
  conv1x1,    // pointwise, shape preserving
  conv3x3,    // stride 1, zero padding 1, shape preserving
  deconv2x2,  // transposed conv, stride 2: doubles height and width
};

const char* kernel_name(KernelKind kind) noexcept;

/// Weights and accumulated gradients of one convolution layer.
/// Weight layout is (out, in, ky, kx) for all kernel kinds.
struct ConvSpec {
  KernelKind kind = KernelKind::conv3x3;
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  RealVec weights;
  RealVec bias;
  RealVec weight_grad;
  RealVec bias_grad;

  static ConvSpec zeros(KernelKind kind, std::size_t in, std::size_t out);
  // Kaiming-normal (std = sqrt(2 / fan_in)) weights, zero bias.
  static ConvSpec kaiming(KernelKind kind, std::size_t in, std::size_t out,
                          std::mt19937_64& rng);

  std::size_t kernel_height() const noexcept;
  std::size_t kernel_width() const noexcept;
  std::size_t weight_count() const noexcept {
    return out_channels * in_channels * kernel_height() * kernel_width();
  }
  std::vector<std::size_t> weight_dims() const {
    return {out_channels, in_channels, kernel_height(), kernel_width()};
  }

  // Throws ShapeError on length mismatch, NumericError on non-finite weights.
  void validate() const;
  void zero_grad();
};

Var conv_forward(Tape& tape, const Var& input, ConvSpec& spec);
Var relu(Tape& tape, const Var& input);
Var add(Tape& tape, const Var& a, const Var& b);
Var concat_channels(Tape& tape, const Var& a, const Var& b);
// 2x2 mean pooling with stride 2; height and width must be even.
Var avg_pool2(Tape& tape, const Var& input);
// Scalar sum of every element.
Var sum(Tape& tape, const Var& input);
Var scale(Tape& tape, const Var& input, double factor);

// Splits the first `first_channels` channels off; inverse of concat_channels.
std::pair<FeatureField, FeatureField> split_channels(const FeatureField& field,
                                                     std::size_t first_channels);

}  // namespace bsq
