#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "bsq/layers.hpp"
#include "bsq/losses.hpp"
#include "bsq/warp.hpp"

namespace bsq {

struct BSMConfig {
  std::size_t feat_channels = 32;
  std::size_t grid_size = 14;  // feature grid; images and targets are twice this
  int kernel_size = 5;         // structuring element for the squeeze targets
  bool low_level_enabled = true;
  bool fuse_mask_to_boundary = true;
  bool fuse_boundary_to_mask_conv = true;
  // When false the two SFG warps are skipped and the branch features pass
  // through unwarped. Used as the no-warp reference network.
  bool squeeze_warp = true;
  BranchSet branches;

  std::size_t image_size() const noexcept { return 2 * grid_size; }
  void validate() const;
};

inline constexpr double kPredictorInitStd = 0.001;

struct PredHead {
  ConvSpec deconv;  // 2x2 stride 2, C -> C
  ConvSpec out;     // 1x1, C -> 1
};

/// Every learnable layer of the toy encoder, mask head and BSM. All slots
/// exist regardless of which branches are enabled.
struct ModelParams {
  ConvSpec enc_conv1;  // 3x3, 1 -> C at image resolution
  ConvSpec enc_conv2;  // 3x3, C -> C after pooling
  ConvSpec low_proj;   // 1x1, C -> C on the shallow tap
  std::array<ConvSpec, 4> head;
  std::array<ConvSpec, 2> con_convs;
  std::array<ConvSpec, 2> exp_convs;
  SFGSpec con_sfg;
  SFGSpec exp_sfg;
  ConvSpec bnd_to_mask;  // 1x1 boundary -> mask fusion
  std::array<PredHead, kBranchCount> preds;

  // Kaiming init from `seed`; SFG flow convs start at zero and the final
  // 1x1 of each prediction head draws from N(0, kPredictorInitStd^2).
  static ModelParams init(const BSMConfig& cfg, std::uint64_t seed);

  std::vector<std::pair<std::string, ConvSpec*>> slots();
  std::vector<std::pair<std::string, const ConvSpec*>> slots() const;
  void zero_grad();
  std::size_t parameter_count() const;
  // Throws ShapeError if any slot disagrees with `cfg`.
  void validate(const BSMConfig& cfg) const;
};

struct EncoderOutput {
  Var f_roi;
  std::optional<Var> f_roi_low;  // absent when the low-level tap is unused
};

// image: 1 x 2G x 2G. f_roi: C x G x G from conv, pool, conv. The low-level
// tap is the first conv's activation projected by a 1x1 conv and pooled.
EncoderOutput toy_encoder(Tape& tape, const Var& image, ModelParams& params,
                          const BSMConfig& cfg);

struct BSMOutput {
  BranchLogits logits;
  std::optional<Var> flow_contraction;
  std::optional<Var> flow_expansion;
  std::optional<Var> f_contraction;
  std::optional<Var> f_expansion;
  std::optional<Var> f_boundary;
  Var f_mask;
};

BSMOutput bsm_forward(Tape& tape, const Var& f_roi, const std::optional<Var>& f_roi_low,
                      ModelParams& params, const BSMConfig& cfg);

// Encoder followed by the BSM graph.
BSMOutput model_forward(Tape& tape, const FeatureField& image, ModelParams& params,
                        const BSMConfig& cfg);

struct Inference {
  BinaryMask mask;
  FeatureField seg_prob;
  std::optional<FeatureField> bnd_prob;
  std::optional<FeatureField> con_prob;
  std::optional<FeatureField> exp_prob;
  std::optional<FlowField> flow_contraction;
  std::optional<FlowField> flow_expansion;
  std::optional<FeatureField> f_boundary;
};

// Pixel is foreground iff sigmoid(logit) > 0.5, i.e. logit > 0.
BinaryMask threshold_logits(const FeatureField& logits);

// Eval-mode forward; never touches parameter gradients, so concurrent calls
// on shared parameters are safe.
Inference infer(const FeatureField& image, const ModelParams& params, const BSMConfig& cfg);

}  // namespace bsq
