#include "bsq/bsm.hpp"

#include <random>

#include "bsq/error.hpp"
#include "bsq/morphology.hpp"

namespace bsq {

namespace {

Var conv_relu(Tape& tape, const Var& x, ConvSpec& spec) {
  return relu(tape, conv_forward(tape, x, spec));
}

Var predict(Tape& tape, const Var& x, PredHead& head) {
  return conv_forward(tape, relu(tape, conv_forward(tape, x, head.deconv)), head.out);
}

PredHead& pred(ModelParams& p, Branch b) { return p.preds[static_cast<std::size_t>(b)]; }

void expect(const ConvSpec& s, KernelKind kind, std::size_t in, std::size_t out,
            const std::string& name) {
  if (s.kind != kind || s.in_channels != in || s.out_channels != out)
    throw ShapeError("parameter slot " + name + " does not match the model config");
  s.validate();
}

// Squeeze branch: two 3x3 convs, then the SFG warp (or pass-through).
struct BranchResult {
  Var feature;
  std::optional<Var> flow;
};

BranchResult squeeze_branch(Tape& tape, const Var& f_sum, const Var& f_roi,
                            std::array<ConvSpec, 2>& convs, SFGSpec& sfg_spec, bool warp) {
  Var x = conv_relu(tape, conv_relu(tape, f_sum, convs[0]), convs[1]);
  if (!warp) return {x, std::nullopt};
  SqueezedFeature s = sfg(tape, x, f_roi, sfg_spec);
  return {s.feature, s.flow};
}

}  // namespace

void BSMConfig::validate() const {
  if (feat_channels == 0) throw ConfigError("feat_channels must be positive");
  if (grid_size == 0) throw ConfigError("grid_size must be positive");
  KernelSize{kernel_size};
  if (!branches.has(Branch::segmentation)) throw ConfigError("seg branch is mandatory");
}

ModelParams ModelParams::init(const BSMConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  const std::size_t c = cfg.feat_channels;
  std::mt19937_64 rng(seed);
  auto k3 = [&](std::size_t in, std::size_t out) {
    return ConvSpec::kaiming(KernelKind::conv3x3, in, out, rng);
  };
  ModelParams p;
  p.enc_conv1 = k3(1, c);
  p.enc_conv2 = k3(c, c);
  p.low_proj = ConvSpec::kaiming(KernelKind::conv1x1, c, c, rng);
  for (auto& h : p.head) h = k3(c, c);
  for (auto& h : p.con_convs) h = k3(c, c);
  for (auto& h : p.exp_convs) h = k3(c, c);
  p.con_sfg = SFGSpec::identity(c, c);
  p.exp_sfg = SFGSpec::identity(c, c);
  p.bnd_to_mask = ConvSpec::kaiming(KernelKind::conv1x1, c, c, rng);
  // Output layers start near zero so every branch begins at p = 0.5
  // instead of saturated logits, which Dice cannot recover from quickly.
  std::normal_distribution<double> small(0.0, kPredictorInitStd);
  for (auto& head : p.preds) {
    head.deconv = ConvSpec::kaiming(KernelKind::deconv2x2, c, c, rng);
    head.out = ConvSpec::zeros(KernelKind::conv1x1, c, 1);
    for (double& w : head.out.weights) w = small(rng);
  }
  return p;
}

std::vector<std::pair<std::string, ConvSpec*>> ModelParams::slots() {
  std::vector<std::pair<std::string, ConvSpec*>> s = {
      {"encoder.conv1", &enc_conv1}, {"encoder.conv2", &enc_conv2}, {"encoder.low_proj", &low_proj}};
  for (std::size_t i = 0; i < head.size(); ++i)
    s.emplace_back("head.conv" + std::to_string(i + 1), &head[i]);
  for (std::size_t i = 0; i < 2; ++i)
    s.emplace_back("contraction.conv" + std::to_string(i + 1), &con_convs[i]);
  for (std::size_t i = 0; i < 2; ++i)
    s.emplace_back("expansion.conv" + std::to_string(i + 1), &exp_convs[i]);
  s.emplace_back("contraction.flow", &con_sfg.flow_conv);
  s.emplace_back("expansion.flow", &exp_sfg.flow_conv);
  s.emplace_back("fusion.boundary_to_mask", &bnd_to_mask);
  for (Branch b : kAllBranches) {
    const std::string name = std::string("pred.") + branch_name(b);
    s.emplace_back(name + ".deconv", &preds[static_cast<std::size_t>(b)].deconv);
    s.emplace_back(name + ".out", &preds[static_cast<std::size_t>(b)].out);
  }
  return s;
}

std::vector<std::pair<std::string, const ConvSpec*>> ModelParams::slots() const {
  auto mutable_slots = const_cast<ModelParams*>(this)->slots();
  std::vector<std::pair<std::string, const ConvSpec*>> out;
  out.reserve(mutable_slots.size());
  for (auto& [name, spec] : mutable_slots) out.emplace_back(name, spec);
  return out;
}

void ModelParams::zero_grad() {
  for (auto& [name, spec] : slots()) spec->zero_grad();
}

std::size_t ModelParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [name, spec] : slots()) n += spec->weights.size() + spec->bias.size();
  return n;
}

void ModelParams::validate(const BSMConfig& cfg) const {
  const std::size_t c = cfg.feat_channels;
  expect(enc_conv1, KernelKind::conv3x3, 1, c, "encoder.conv1");
  expect(enc_conv2, KernelKind::conv3x3, c, c, "encoder.conv2");
  expect(low_proj, KernelKind::conv1x1, c, c, "encoder.low_proj");
  for (const auto& h : head) expect(h, KernelKind::conv3x3, c, c, "head");
  for (const auto& h : con_convs) expect(h, KernelKind::conv3x3, c, c, "contraction");
  for (const auto& h : exp_convs) expect(h, KernelKind::conv3x3, c, c, "expansion");
  expect(con_sfg.flow_conv, KernelKind::conv3x3, 2 * c, 2, "contraction.flow");
  expect(exp_sfg.flow_conv, KernelKind::conv3x3, 2 * c, 2, "expansion.flow");
  expect(bnd_to_mask, KernelKind::conv1x1, c, c, "fusion.boundary_to_mask");
  for (const auto& h : preds) {
    expect(h.deconv, KernelKind::deconv2x2, c, c, "pred.deconv");
    expect(h.out, KernelKind::conv1x1, c, 1, "pred.out");
  }
}

EncoderOutput toy_encoder(Tape& tape, const Var& image, ModelParams& params,
                          const BSMConfig& cfg) {
  const std::size_t s = cfg.image_size();
  if (image.shape() != Shape3{1, s, s})
    throw ShapeError("toy_encoder: expected a 1x" + std::to_string(s) + "x" + std::to_string(s) +
                     " image");
  Var x1 = conv_relu(tape, image, params.enc_conv1);
  Var f_roi = conv_relu(tape, avg_pool2(tape, x1), params.enc_conv2);
  EncoderOutput out{f_roi, std::nullopt};
  if (cfg.low_level_enabled && cfg.branches.uses_bsm())
    out.f_roi_low = avg_pool2(tape, conv_forward(tape, x1, params.low_proj));
  return out;
}

BSMOutput bsm_forward(Tape& tape, const Var& f_roi, const std::optional<Var>& f_roi_low,
                      ModelParams& params, const BSMConfig& cfg) {
  const Shape3 expected{cfg.feat_channels, cfg.grid_size, cfg.grid_size};
  if (f_roi.shape() != expected) throw ShapeError("bsm_forward: f_roi shape mismatch");
  if (f_roi_low && f_roi_low->shape() != expected)
    throw ShapeError("bsm_forward: f_roi_low shape mismatch");

  const BranchSet& br = cfg.branches;
  BSMOutput out;
  Var mask_feat = f_roi;
  for (auto& h : params.head) mask_feat = conv_relu(tape, mask_feat, h);
  out.f_mask = mask_feat;

  if (br.uses_bsm()) {
    Var f_sum = f_roi_low ? add(tape, f_roi, *f_roi_low) : f_roi;
    Var f_boundary = f_roi;
    if (br.has(Branch::contraction)) {
      auto r = squeeze_branch(tape, f_sum, f_roi, params.con_convs, params.con_sfg, cfg.squeeze_warp);
      out.f_contraction = r.feature;
      out.flow_contraction = r.flow;
      out.logits[Branch::contraction] = predict(tape, r.feature, pred(params, Branch::contraction));
    }
    if (br.has(Branch::expansion)) {
      auto r = squeeze_branch(tape, f_sum, f_roi, params.exp_convs, params.exp_sfg, cfg.squeeze_warp);
      out.f_expansion = r.feature;
      out.flow_expansion = r.flow;
      out.logits[Branch::expansion] = predict(tape, r.feature, pred(params, Branch::expansion));
    }
    if (out.f_contraction) f_boundary = add(tape, *out.f_contraction, f_boundary);
    if (out.f_expansion) f_boundary = add(tape, *out.f_expansion, f_boundary);
    if (cfg.fuse_mask_to_boundary) f_boundary = add(tape, f_boundary, mask_feat);
    out.f_boundary = f_boundary;
    if (br.has(Branch::boundary))
      out.logits[Branch::boundary] = predict(tape, f_boundary, pred(params, Branch::boundary));
    if (cfg.fuse_boundary_to_mask_conv)
      mask_feat = add(tape, mask_feat, conv_forward(tape, f_boundary, params.bnd_to_mask));
  }
  out.logits[Branch::segmentation] = predict(tape, mask_feat, pred(params, Branch::segmentation));
  return out;
}

BSMOutput model_forward(Tape& tape, const FeatureField& image, ModelParams& params,
                        const BSMConfig& cfg) {
  Var img = tape.constant(image);
  EncoderOutput enc = toy_encoder(tape, img, params, cfg);
  return bsm_forward(tape, enc.f_roi, enc.f_roi_low, params, cfg);
}

BinaryMask threshold_logits(const FeatureField& logits) {
  if (logits.channels() != 1) throw ShapeError("threshold_logits: expected one channel");
  BinaryMask m(logits.height(), logits.width());
  for (std::size_t y = 0; y < logits.height(); ++y)
    for (std::size_t x = 0; x < logits.width(); ++x) m.set(y, x, sigmoid(logits.at(0, y, x)) > 0.5);
  return m;
}

Inference infer(const FeatureField& image, const ModelParams& params, const BSMConfig& cfg) {
  Tape tape(Tape::Mode::eval);
  // Eval tapes record no backward rules, so the parameters are only read.
  BSMOutput out = model_forward(tape, image, const_cast<ModelParams&>(params), cfg);
  auto probs = [](const Var& logits) {
    FeatureField p(logits.shape());
    auto src = logits.value().values();
    auto dst = p.values();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = sigmoid(src[i]);
    return p;
  };
  Inference inf;
  const Var& seg = *out.logits[Branch::segmentation];
  inf.mask = threshold_logits(seg.value());
  inf.seg_prob = probs(seg);
  if (out.logits[Branch::boundary]) inf.bnd_prob = probs(*out.logits[Branch::boundary]);
  if (out.logits[Branch::contraction]) inf.con_prob = probs(*out.logits[Branch::contraction]);
  if (out.logits[Branch::expansion]) inf.exp_prob = probs(*out.logits[Branch::expansion]);
  if (out.flow_contraction) inf.flow_contraction = FlowField::from_field(out.flow_contraction->value());
  if (out.flow_expansion) inf.flow_expansion = FlowField::from_field(out.flow_expansion->value());
  if (out.f_boundary) inf.f_boundary = out.f_boundary->value();
  return inf;
}

}  // namespace bsq
