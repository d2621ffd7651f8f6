#include <cstring>
#include <random>

#include "doctest.h"

#include "bsq/bsm.hpp"
#include "bsq/dataio.hpp"
#include "bsq/error.hpp"
#include "bsq/train.hpp"
#include "gen.hpp"
#include "gradcheck.hpp"

using namespace bsq;

namespace {

BSMConfig tiny_config() {
  BSMConfig c;
  c.feat_channels = 8;
  c.grid_size = 8;
  return c;
}

Sample tiny_sample(const BSMConfig& cfg, std::uint64_t seed) {
  DataConfig d;
  d.num_samples = 1;
  d.seed = seed;
  d.image_size = cfg.image_size();
  return gen_dataset(d, KernelSize{cfg.kernel_size})[0];
}

// Random flow convs so the sample points sit off the lattice, and nonzero
// biases so no ReLU input is exactly zero.
void randomize_flows(ModelParams& p, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 0.05);
  for (auto& [name, spec] : p.slots())
    for (double& b : spec->bias) b = n(rng);
  for (SFGSpec* s : {&p.con_sfg, &p.exp_sfg}) {
    for (double& w : s->flow_conv.weights) w = n(rng);
    for (double& b : s->flow_conv.bias) b = 0.3 + n(rng);
  }
}

}  // namespace

TEST_CASE("full graph gradient matches finite differences") {
  const BSMConfig cfg = tiny_config();
  ModelParams params = ModelParams::init(cfg, 11);
  randomize_flows(params, 12);
  const Sample s = tiny_sample(cfg, 3);
  const LossConfig loss;
  auto errs = gradcheck::param_errors(params.slots(), [&](Tape& t) {
    return sample_loss(t, s, params, cfg, loss).total;
  });
  for (const auto& e : errs) {
    CAPTURE(e.name);
    CHECK(e.weight < 1e-3);
    CHECK(e.bias < 1e-3);
  }
}

namespace {

bool bitwise_equal(const FeatureField& a, const FeatureField& b) {
  return a.shape() == b.shape() &&
         std::memcmp(a.values().data(), b.values().data(), a.size() * sizeof(double)) == 0;
}

}  // namespace

TEST_CASE("encoder shapes with defaults") {
  BSMConfig cfg;
  ModelParams p = ModelParams::init(cfg, 1);
  std::mt19937_64 rng(2);
  Tape tape;
  EncoderOutput e = toy_encoder(tape, tape.constant(gen::field(1, 28, 28, rng)), p, cfg);
  CHECK(e.f_roi.shape() == Shape3{32, 14, 14});
  REQUIRE(e.f_roi_low);
  CHECK(e.f_roi_low->shape() == Shape3{32, 14, 14});
  CHECK_THROWS_AS(toy_encoder(tape, tape.constant(FeatureField(1, 20, 20)), p, cfg), ShapeError);
}

TEST_CASE("zero image with zero-bias params gives zero features") {
  BSMConfig cfg;
  ModelParams p = ModelParams::init(cfg, 3);
  Tape tape;
  EncoderOutput e = toy_encoder(tape, tape.constant(FeatureField(1, 28, 28)), p, cfg);
  for (double v : e.f_roi.value().values()) CHECK(v == 0.0);
  for (double v : e.f_roi_low->value().values()) CHECK(v == 0.0);
}

TEST_CASE("disabling the low-level tap removes it from the graph") {
  BSMConfig cfg = tiny_config();
  cfg.low_level_enabled = false;
  ModelParams p = ModelParams::init(cfg, 4);
  Tape tape;
  EncoderOutput e = toy_encoder(tape, tape.constant(FeatureField(1, 16, 16, 0.5)), p, cfg);
  CHECK_FALSE(e.f_roi_low);
  // Perturbing the projection no longer changes any output.
  const Sample s = tiny_sample(cfg, 5);
  Tape t1(Tape::Mode::eval), t2(Tape::Mode::eval);
  BSMOutput a = model_forward(t1, s.image, p, cfg);
  for (double& w : p.low_proj.weights) w += 1.0;
  BSMOutput b = model_forward(t2, s.image, p, cfg);
  CHECK(bitwise_equal(a.logits[Branch::segmentation]->value(), b.logits[Branch::segmentation]->value()));
  CHECK(bitwise_equal(a.logits[Branch::contraction]->value(), b.logits[Branch::contraction]->value()));
}

TEST_CASE("bsm output shapes and flows") {
  BSMConfig cfg;
  ModelParams p = ModelParams::init(cfg, 6);
  const Sample s = tiny_sample(cfg, 7);
  Tape tape(Tape::Mode::eval);
  BSMOutput out = model_forward(tape, s.image, p, cfg);
  for (Branch b : kAllBranches) {
    REQUIRE(out.logits[b]);
    CHECK(out.logits[b]->shape() == Shape3{1, 28, 28});
  }
  REQUIRE(out.flow_contraction);
  CHECK(out.flow_contraction->shape() == Shape3{2, 14, 14});
  CHECK(out.flow_expansion->shape() == Shape3{2, 14, 14});
}

TEST_CASE("zero flow convs make the boundary feature a plain residual sum") {
  BSMConfig cfg = tiny_config();
  cfg.fuse_mask_to_boundary = false;
  ModelParams p = ModelParams::init(cfg, 8);
  const Sample s = tiny_sample(cfg, 9);
  Tape tape(Tape::Mode::eval);
  BSMOutput out = model_forward(tape, s.image, p, cfg);
  EncoderOutput enc = toy_encoder(tape, tape.constant(s.image), p, cfg);
  Var f_sum = add(tape, enc.f_roi, *enc.f_roi_low);
  auto branch = [&](std::array<ConvSpec, 2>& c) {
    return relu(tape, conv_forward(tape, relu(tape, conv_forward(tape, f_sum, c[0])), c[1]));
  };
  Var fc = branch(p.con_convs), fe = branch(p.exp_convs);
  CHECK(bitwise_equal(out.f_contraction->value(), fc.value()));
  CHECK(bitwise_equal(out.f_expansion->value(), fe.value()));
  Var expect = add(tape, fe, add(tape, fc, enc.f_roi));
  CHECK(bitwise_equal(out.f_boundary->value(), expect.value()));
}

TEST_CASE("with both fusions off the seg path ignores the squeeze branches") {
  BSMConfig cfg = tiny_config();
  cfg.fuse_mask_to_boundary = false;
  cfg.fuse_boundary_to_mask_conv = false;
  ModelParams p = ModelParams::init(cfg, 10);
  const Sample s = tiny_sample(cfg, 11);
  Tape t1(Tape::Mode::eval);
  const FeatureField before = model_forward(t1, s.image, p, cfg).logits[Branch::segmentation]->value();
  std::mt19937_64 rng(12);
  std::normal_distribution<double> n(0.0, 0.5);
  for (double& w : p.con_sfg.flow_conv.weights) w = n(rng);
  for (double& w : p.exp_sfg.flow_conv.weights) w = n(rng);
  Tape t2(Tape::Mode::eval);
  BSMOutput after = model_forward(t2, s.image, p, cfg);
  CHECK(bitwise_equal(before, after.logits[Branch::segmentation]->value()));
  // The squeeze branches themselves did change.
  CHECK_FALSE(after.flow_contraction->value() == FeatureField(2, 8, 8));
}

TEST_CASE("step-0 forward equals the no-warp network bitwise") {
  BSMConfig cfg;
  BSMConfig plain = cfg;
  plain.squeeze_warp = false;
  ModelParams p = ModelParams::init(cfg, 13);
  const Sample s = tiny_sample(cfg, 14);
  Tape t1(Tape::Mode::eval), t2(Tape::Mode::eval);
  BSMOutput a = model_forward(t1, s.image, p, cfg);
  BSMOutput b = model_forward(t2, s.image, p, plain);
  for (Branch br : kAllBranches) CHECK(bitwise_equal(a.logits[br]->value(), b.logits[br]->value()));
  CHECK_FALSE(b.flow_contraction);
}

TEST_CASE("seg-only configs skip the module entirely") {
  BSMConfig cfg = tiny_config();
  cfg.branches = BranchSet::parse("seg");
  ModelParams p = ModelParams::init(cfg, 15);
  Tape tape(Tape::Mode::eval);
  BSMOutput out = model_forward(tape, tiny_sample(cfg, 16).image, p, cfg);
  CHECK(out.logits[Branch::segmentation]);
  CHECK_FALSE(out.logits[Branch::boundary]);
  CHECK_FALSE(out.logits[Branch::contraction]);
  CHECK_FALSE(out.f_boundary);
}

TEST_CASE("thresholding uses a strict rule") {
  FeatureField z(1, 1, 3, {20.0, 0.0, -1e-12});
  BinaryMask m = threshold_logits(z);
  CHECK(m.at(0, 0) == 1);
  CHECK(m.at(0, 1) == 0);
  CHECK(m.at(0, 2) == 0);
  CHECK(threshold_logits(FeatureField(1, 4, 4, 20.0)).count() == 16);
}

TEST_CASE("inference emits auxiliary rasters") {
  BSMConfig cfg = tiny_config();
  ModelParams p = ModelParams::init(cfg, 17);
  Inference inf = infer(tiny_sample(cfg, 18).image, p, cfg);
  CHECK(inf.mask.height() == 16);
  CHECK(inf.bnd_prob);
  CHECK(inf.con_prob);
  CHECK(inf.exp_prob);
  CHECK(inf.flow_contraction);
  CHECK(inf.f_boundary);
  for (double v : inf.seg_prob.values()) CHECK((v > 0.0 && v < 1.0));
  CHECK(inf.mask == threshold_logits([&] {
          Tape t(Tape::Mode::eval);
          return model_forward(t, tiny_sample(cfg, 18).image, p, cfg).logits[Branch::segmentation]->value();
        }()));
}

TEST_CASE("parameter slots are complete and validated") {
  BSMConfig cfg = tiny_config();
  ModelParams p = ModelParams::init(cfg, 19);
  CHECK(p.slots().size() == 3 + 4 + 2 + 2 + 2 + 1 + 8);
  CHECK_NOTHROW(p.validate(cfg));
  BSMConfig wider = cfg;
  wider.feat_channels = 16;
  CHECK_THROWS_AS(p.validate(wider), ShapeError);
  p.head[2].weights.pop_back();
  CHECK_THROWS_AS(p.validate(cfg), ShapeError);
  for (const auto& [name, spec] : ModelParams::init(cfg, 19).slots())
    if (name.ends_with(".flow"))
      for (double w : spec->weights) CHECK(w == 0.0);
}

TEST_CASE("init is deterministic in the seed") {
  BSMConfig cfg = tiny_config();
  ModelParams a = ModelParams::init(cfg, 20), b = ModelParams::init(cfg, 20), c = ModelParams::init(cfg, 21);
  CHECK(a.enc_conv2.weights == b.enc_conv2.weights);
  CHECK(a.enc_conv2.weights != c.enc_conv2.weights);
}

TEST_CASE("bsm_forward checks feature shapes") {
  BSMConfig cfg = tiny_config();
  ModelParams p = ModelParams::init(cfg, 22);
  Tape tape;
  CHECK_THROWS_AS(bsm_forward(tape, tape.constant(FeatureField(8, 7, 7)), std::nullopt, p, cfg),
                  ShapeError);
  BSMConfig bad = cfg;
  bad.kernel_size = 4;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}
