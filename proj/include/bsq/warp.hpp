#pragma once

#include "bsq/layers.hpp"

namespace bsq {

/// Squeezed feature generator parameters: one 3x3 conv from the
/// concatenated (branch feature, RoI feature) pair to a 2-channel flow.
struct SFGSpec {
  ConvSpec flow_conv;

  // Zero weights and bias, so the generator starts as the identity warp.
  static SFGSpec identity(std::size_t feature_channels, std::size_t roi_channels);
};

// Output at p samples the input at p + flow(p) with bilinear weights over the
// four surrounding lattice points. Lattice points outside the grid contribute
// zero and receive zero gradient.
FeatureField bilinear_warp(const FeatureField& input, const FlowField& flow);

// Differentiable in both `input` and the 2-channel `flow` (channel 0 = dx,
// channel 1 = dy). At integer sample positions the flow gradient is the
// right-sided derivative.
Var bilinear_warp(Tape& tape, const Var& input, const Var& flow);

struct SqueezedFeature {
  Var feature;
  Var flow;
};

SqueezedFeature sfg(Tape& tape, const Var& f_sum_prime, const Var& f_roi, SFGSpec& spec);

}  // namespace bsq
