#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"

#include "bsq/config.hpp"
#include "bsq/error.hpp"
#include "bsq/train.hpp"
#include "tempdir.hpp"

using namespace bsq;
using testing::TempDir;

namespace {

RunConfig tiny_config() {
  RunConfig cfg;
  cfg.model.feat_channels = 4;
  cfg.model.grid_size = 8;
  cfg.data.image_size = 16;
  cfg.data.num_samples = 6;
  cfg.optimizer.batch_size = 2;
  cfg.optimizer.steps = 6;
  cfg.optimizer.flow_lr_mult = 0.1;
  return cfg;
}

std::vector<Sample> tiny_data(const RunConfig& cfg) {
  return gen_dataset(cfg.data, KernelSize{cfg.model.kernel_size});
}

bool same_params(const ModelParams& a, const ModelParams& b) {
  auto sa = a.slots();
  auto sb = b.slots();
  if (sa.size() != sb.size()) return false;
  for (std::size_t i = 0; i < sa.size(); ++i)
    if (sa[i].second->weights != sb[i].second->weights || sa[i].second->bias != sb[i].second->bias)
      return false;
  return true;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("learning-rate schedule") {
  OptimizerConfig opt;
  opt.base_lr = 0.02;
  opt.batch_size = 8;
  opt.reference_batch = 16;
  opt.steps = 90;
  CHECK(opt.lr_at(0) == doctest::Approx(0.01));
  CHECK(opt.lr_at(59) == doctest::Approx(0.01));
  CHECK(opt.lr_at(60) == doctest::Approx(0.001));
  CHECK(opt.lr_at(79) == doctest::Approx(0.001));
  CHECK(opt.lr_at(80) == doctest::Approx(0.0001));

  opt.warmup_steps = 10;
  opt.warmup_factor = 0.1;
  CHECK(opt.lr_at(0) == doctest::Approx(0.001));
  CHECK(opt.lr_at(5) == doctest::Approx(0.01 * 0.55));
  CHECK(opt.lr_at(10) == doctest::Approx(0.01));

  opt.milestones.clear();
  CHECK(opt.lr_at(89) == doctest::Approx(0.01));
}

TEST_CASE("optimizer config validation") {
  OptimizerConfig ok;
  CHECK_NOTHROW(ok.validate());
  CHECK(ok.momentum == 0.9);
  CHECK(ok.weight_decay == 1e-4);

  auto bad = [](auto mutate) {
    OptimizerConfig o;
    mutate(o);
    return o;
  };
  CHECK_THROWS_AS(bad([](auto& o) { o.base_lr = -1; }).validate(), ConfigError);
  CHECK_THROWS_AS(bad([](auto& o) { o.batch_size = 0; }).validate(), ConfigError);
  CHECK_THROWS_AS(bad([](auto& o) { o.momentum = 1.0; }).validate(), ConfigError);
  CHECK_THROWS_AS(bad([](auto& o) { o.weight_decay = -1e-4; }).validate(), ConfigError);
  CHECK_THROWS_AS(bad([](auto& o) { o.milestones = {1.5}; }).validate(), ConfigError);
  CHECK_THROWS_AS(bad([](auto& o) { o.gamma = 0.0; }).validate(), ConfigError);
  CHECK_THROWS_AS(bad([](auto& o) { o.flow_lr_mult = -0.5; }).validate(), ConfigError);
  CHECK_THROWS_AS(bad([](auto& o) { o.grad_clip_norm = std::nan(""); }).validate(), ConfigError);
}

TEST_CASE("zero learning rate leaves parameters unchanged") {
  RunConfig cfg = tiny_config();
  cfg.optimizer.base_lr = 0.0;
  auto data = tiny_data(cfg);
  const ModelParams before = ModelParams::init(cfg.model, 3);
  Trainer tr(before, cfg.model, cfg.loss, cfg.optimizer, 3);
  TrainResult r = tr.run(data);
  CHECK(r.log.size() == 6);
  CHECK(same_params(before, r.params));
  const std::vector<const Sample*> batch = {&data[0]};
  CHECK(tr.step(batch).total == tr.step(batch).total);
}

TEST_CASE("training is deterministic per seed") {
  RunConfig cfg = tiny_config();
  auto data = tiny_data(cfg);
  TrainResult a = Trainer(cfg.model, cfg.loss, cfg.optimizer, 5).run(data);
  TrainResult b = Trainer(cfg.model, cfg.loss, cfg.optimizer, 5).run(data);
  TrainResult c = Trainer(cfg.model, cfg.loss, cfg.optimizer, 6).run(data);
  CHECK(same_params(a.params, b.params));
  CHECK(training_log_csv(a.log) == training_log_csv(b.log));
  CHECK_FALSE(same_params(a.params, c.params));
}

TEST_CASE("a duplicated batch gives the same update as a single sample") {
  RunConfig cfg = tiny_config();
  auto data = tiny_data(cfg);
  Trainer one(cfg.model, cfg.loss, cfg.optimizer, 1);
  Trainer two(cfg.model, cfg.loss, cfg.optimizer, 1);
  const std::vector<const Sample*> b1 = {&data[0]};
  const std::vector<const Sample*> b2 = {&data[0], &data[0]};
  LogRow r1 = one.step(b1);
  LogRow r2 = two.step(b2);
  CHECK(r1.total == doctest::Approx(r2.total).epsilon(1e-14));
  auto s1 = one.params().slots();
  auto s2 = two.params().slots();
  for (std::size_t k = 0; k < s1.size(); ++k)
    for (std::size_t i = 0; i < s1[k].second->weights.size(); ++i)
      REQUIRE(s1[k].second->weights[i] == doctest::Approx(s2[k].second->weights[i]).epsilon(1e-12));
}

TEST_CASE("flow learning-rate multiplier") {
  RunConfig cfg = tiny_config();
  cfg.optimizer.flow_lr_mult = 0.0;
  // No decay, so a zero rate really freezes the slot.
  cfg.optimizer.weight_decay = 0.0;
  auto data = tiny_data(cfg);
  const ModelParams before = ModelParams::init(cfg.model, 2);
  TrainResult r = Trainer(before, cfg.model, cfg.loss, cfg.optimizer, 2).run(data);
  auto sb = before.slots();
  auto sa = r.params.slots();
  for (std::size_t k = 0; k < sb.size(); ++k) {
    CAPTURE(sb[k].first);
    const bool changed = sb[k].second->weights != sa[k].second->weights;
    if (sb[k].first.ends_with(".flow"))
      CHECK_FALSE(changed);
    else
      CHECK(changed);
  }
}

TEST_CASE("gradient clipping bounds the first update") {
  RunConfig cfg = tiny_config();
  cfg.optimizer.grad_clip_norm = 1e-3;
  cfg.optimizer.weight_decay = 0.0;
  cfg.optimizer.base_lr = 0.5;
  cfg.optimizer.reference_batch = cfg.optimizer.batch_size;
  auto data = tiny_data(cfg);
  const ModelParams before = ModelParams::init(cfg.model, 4);
  Trainer tr(before, cfg.model, cfg.loss, cfg.optimizer, 4);
  const std::vector<const Sample*> batch = {&data[0], &data[1]};
  tr.step(batch);
  double sq = 0.0;
  auto sb = before.slots();
  auto sa = tr.params().slots();
  for (std::size_t k = 0; k < sb.size(); ++k) {
    const double lr = sb[k].first.ends_with(".flow") ? 0.5 * cfg.optimizer.flow_lr_mult : 0.5;
    for (std::size_t i = 0; i < sb[k].second->weights.size(); ++i)
      sq += std::pow((sb[k].second->weights[i] - sa[k].second->weights[i]) / lr, 2);
    for (std::size_t i = 0; i < sb[k].second->bias.size(); ++i)
      sq += std::pow((sb[k].second->bias[i] - sa[k].second->bias[i]) / lr, 2);
  }
  CHECK(std::sqrt(sq) <= 1e-3 * (1 + 1e-9));
  CHECK(std::sqrt(sq) > 0.5e-3);
}

TEST_CASE("loss decreases when fitting one sample") {
  RunConfig cfg = tiny_config();
  cfg.optimizer.steps = 100;
  cfg.optimizer.reference_batch = cfg.optimizer.batch_size;
  cfg.optimizer.milestones.clear();
  auto data = tiny_data(cfg);
  data.resize(1);
  TrainResult r = Trainer(cfg.model, cfg.loss, cfg.optimizer, 0).run(data);
  CHECK(r.log.back().total < 0.7 * r.log.front().total);
}

TEST_CASE("divergence raises NumericError") {
  RunConfig cfg = tiny_config();
  cfg.optimizer.base_lr = 1e30;
  cfg.optimizer.steps = 20;
  auto data = tiny_data(cfg);
  Trainer tr(cfg.model, cfg.loss, cfg.optimizer, 0);
  CHECK_THROWS_AS(tr.run(data), NumericError);
}

TEST_CASE("empty inputs are rejected") {
  RunConfig cfg = tiny_config();
  Trainer tr(cfg.model, cfg.loss, cfg.optimizer, 0);
  CHECK_THROWS_AS(tr.run({}), ConfigError);
  CHECK_THROWS_AS(tr.step({}), ConfigError);
}

TEST_CASE("training log CSV") {
  std::vector<LogRow> log(2);
  log[0].step = 0;
  log[0].terms = {0.5, 0.25, 0.125, 0.0625};
  log[0].total = 0.9375;
  log[1].step = 1;
  const std::string csv = training_log_csv(log);
  CHECK(csv.starts_with("step,L_seg,L_bnd,L_con,L_exp,total\n"));
  CHECK(csv.find("0,0.5,0.25,0.125,0.0625,0.9375\n") != std::string::npos);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 3);
}

TEST_CASE("checkpoint round trip") {
  TempDir tmp("ckpt");
  RunConfig cfg = tiny_config();
  const ModelParams p = ModelParams::init(cfg.model, 9);
  save_checkpoint(tmp.path / "a", p, to_json(cfg), 9);
  save_checkpoint(tmp.path / "b", p, to_json(cfg), 9);

  const ModelParams q = load_checkpoint_params(tmp.path / "a", cfg.model);
  CHECK(same_params(p, q));

  const auto manifest = read_checkpoint_manifest(tmp.path / "a");
  CHECK(manifest["format"] == "bsq-checkpoint");
  CHECK(manifest["seed"] == 9);
  CHECK(manifest["config"] == to_json(cfg));
  CHECK(manifest["slots"].size() == p.slots().size());
  CHECK(manifest["slots"]["pred.seg.deconv"]["weight"]["shape"] ==
        nlohmann::json::array({4, 4, 2, 2}));

  for (const auto& e : std::filesystem::directory_iterator(tmp.path / "a"))
    CHECK(slurp(e.path()) == slurp(tmp.path / "b" / e.path().filename()));
}

TEST_CASE("checkpoint errors") {
  TempDir tmp("ckpt_err");
  RunConfig cfg = tiny_config();
  CHECK_THROWS_AS(read_checkpoint_manifest(tmp.path), IoError);

  save_checkpoint(tmp.path, ModelParams::init(cfg.model, 0), to_json(cfg), 0);
  BSMConfig wider = cfg.model;
  wider.feat_channels = 5;
  CHECK_THROWS_AS(load_checkpoint_params(tmp.path, wider), ShapeError);

  write_text_file(tmp.path / "manifest.json", "{\"format\": ");
  CHECK_THROWS_AS(read_checkpoint_manifest(tmp.path), ParseError);
  write_text_file(tmp.path / "manifest.json", "{\"format\": \"other\"}");
  CHECK_THROWS_AS(read_checkpoint_manifest(tmp.path), ParseError);
}
