#include "bsq/train.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "bsq/bsqt.hpp"
#include "bsq/error.hpp"

namespace bsq {

using nlohmann::json;

double OptimizerConfig::lr_at(std::size_t step) const {
  double lr = base_lr * static_cast<double>(batch_size) / static_cast<double>(reference_batch);
  for (double m : milestones) {
    if (static_cast<double>(step) >= std::floor(m * static_cast<double>(steps))) lr *= gamma;
  }
  if (step < warmup_steps) {
    const double alpha = static_cast<double>(step) / static_cast<double>(warmup_steps);
    lr *= warmup_factor * (1.0 - alpha) + alpha;
  }
  return lr;
}

void OptimizerConfig::validate() const {
  if (!(base_lr >= 0.0)) throw ConfigError("optimizer.base_lr must be >= 0");
  if (reference_batch == 0 || batch_size == 0) throw ConfigError("optimizer batch sizes must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("optimizer.momentum must lie in [0,1)");
  if (!(weight_decay >= 0.0)) throw ConfigError("optimizer.weight_decay must be >= 0");
  if (!(flow_lr_mult >= 0.0)) throw ConfigError("optimizer.flow_lr_mult must be >= 0");
  if (!(grad_clip_norm >= 0.0)) throw ConfigError("optimizer.grad_clip_norm must be >= 0");
  if (!(gamma > 0.0)) throw ConfigError("optimizer.gamma must be > 0");
  for (double m : milestones)
    if (!(m > 0.0 && m <= 1.0)) throw ConfigError("optimizer.milestones must lie in (0,1]");
}

std::string training_log_csv(const std::vector<LogRow>& log) {
  std::ostringstream out;
  out << "step,L_seg,L_bnd,L_con,L_exp,total\n";
  char buf[160];
  for (const auto& r : log) {
    std::snprintf(buf, sizeof(buf), "%zu,%.10g,%.10g,%.10g,%.10g,%.10g\n", r.step, r.terms[0],
                  r.terms[1], r.terms[2], r.terms[3], r.total);
    out << buf;
  }
  return out.str();
}

BranchTargets targets_of(const Sample& s) {
  BranchTargets t;
  t[Branch::segmentation] = s.gs;
  t[Branch::boundary] = s.gb;
  t[Branch::contraction] = s.gc;
  t[Branch::expansion] = s.ge;
  return t;
}

MaskLoss sample_loss(Tape& tape, const Sample& sample, ModelParams& params,
                     const BSMConfig& model, const LossConfig& loss) {
  BSMOutput out = model_forward(tape, sample.image, params, model);
  return mask_loss(tape, out.logits, targets_of(sample), model.branches, loss);
}

Trainer::Trainer(const BSMConfig& model, const LossConfig& loss, const OptimizerConfig& opt,
                 std::uint64_t seed)
    : Trainer(ModelParams::init(model, seed), model, loss, opt, seed) {}

Trainer::Trainer(ModelParams params, const BSMConfig& model, const LossConfig& loss,
                 const OptimizerConfig& opt, std::uint64_t seed)
    : model_(model), loss_(loss), opt_(opt), seed_(seed), params_(std::move(params)) {
  model_.validate();
  loss_.validate();
  opt_.validate();
  params_.validate(model_);
  for (const auto& [name, spec] : params_.slots()) {
    weight_momentum_.emplace_back(spec->weights.size(), 0.0);
    bias_momentum_.emplace_back(spec->bias.size(), 0.0);
  }
}

LogRow Trainer::step(std::span<const Sample* const> batch) {
  if (batch.empty()) throw ConfigError("empty training batch");
  params_.zero_grad();
  LogRow row;
  row.step = step_;
  row.lr = opt_.lr_at(step_);
  for (const Sample* s : batch) {
    Tape tape;
    MaskLoss l = sample_loss(tape, *s, params_, model_, loss_);
    if (!std::isfinite(l.total_value())) throw NumericError("training diverged: non-finite loss");
    tape.backward(l.total);
    for (std::size_t i = 0; i < kBranchCount; ++i) row.terms[i] += l.terms[i];
    row.total += l.total_value();
  }
  const double inv = 1.0 / static_cast<double>(batch.size());
  for (auto& t : row.terms) t *= inv;
  row.total *= inv;

  auto slots = params_.slots();
  double gscale = inv;
  if (opt_.grad_clip_norm > 0.0) {
    double sq = 0.0;
    for (const auto& [name, spec] : slots) {
      for (double g : spec->weight_grad) sq += g * g;
      for (double g : spec->bias_grad) sq += g * g;
    }
    const double norm = std::sqrt(sq) * inv;
    if (norm > opt_.grad_clip_norm) gscale *= opt_.grad_clip_norm / norm;
  }
  auto update = [&](RealVec& w, const RealVec& g, std::vector<double>& v, double lr) {
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double grad = g[i] * gscale + opt_.weight_decay * w[i];
      if (!std::isfinite(grad)) throw NumericError("training diverged: non-finite gradient");
      v[i] = opt_.momentum * v[i] + grad;
      w[i] -= lr * v[i];
    }
  };
  for (std::size_t k = 0; k < slots.size(); ++k) {
    ConvSpec& spec = *slots[k].second;
    const bool is_flow = slots[k].first.ends_with(".flow");
    const double lr = is_flow ? row.lr * opt_.flow_lr_mult : row.lr;
    update(spec.weights, spec.weight_grad, weight_momentum_[k], lr);
    update(spec.bias, spec.bias_grad, bias_momentum_[k], lr);
  }
  ++step_;
  return row;
}

TrainResult Trainer::run(const std::vector<Sample>& data,
                         const std::function<void(const LogRow&)>& on_step) {
  if (data.empty()) throw ConfigError("training set is empty");
  std::mt19937_64 rng(seed_ ^ 0x5851f42d4c957f2dULL);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  std::size_t cursor = order.size();
  TrainResult result;
  std::vector<const Sample*> batch;
  while (step_ < opt_.steps) {
    batch.clear();
    while (batch.size() < std::min(opt_.batch_size, data.size())) {
      if (cursor == order.size()) {
        std::shuffle(order.begin(), order.end(), rng);
        cursor = 0;
      }
      batch.push_back(&data[order[cursor++]]);
    }
    LogRow row = step(batch);
    if (on_step) on_step(row);
    result.log.push_back(row);
  }
  result.params = params_;
  return result;
}

void save_checkpoint(const std::filesystem::path& dir, const ModelParams& params,
                     const json& config_echo, std::uint64_t seed) {
  std::filesystem::create_directories(dir);
  json slots = json::object();
  for (const auto& [name, spec] : params.slots()) {
    const std::string wf = name + ".weight.bsqt", bf = name + ".bias.bsqt";
    const auto wdims = spec->weight_dims();
    const std::array<std::size_t, 1> bdims = {spec->bias.size()};
    save_bsqt(dir / wf, wdims, spec->weights);
    save_bsqt(dir / bf, bdims, spec->bias);
    slots[name] = {{"kind", kernel_name(spec->kind)},
                   {"weight", {{"file", wf}, {"shape", wdims}}},
                   {"bias", {{"file", bf}, {"shape", bdims}}}};
  }
  json manifest = {{"format", "bsq-checkpoint"}, {"version", 1}, {"seed", seed},
                   {"config", config_echo}, {"slots", slots}};
  std::ofstream out(dir / "manifest.json");
  if (!out) throw IoError("cannot write " + (dir / "manifest.json").string());
  out << manifest.dump(2) << "\n";
}

json read_checkpoint_manifest(const std::filesystem::path& dir) {
  std::ifstream in(dir / "manifest.json");
  if (!in) throw IoError("no checkpoint manifest in " + dir.string());
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    json m = json::parse(ss.str());
    if (m.value("format", "") != "bsq-checkpoint") throw ParseError("not a bsq checkpoint manifest", 0);
    return m;
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("checkpoint manifest: ") + e.what(), json_error_offset(e.byte));
  }
}

ModelParams load_checkpoint_params(const std::filesystem::path& dir, const BSMConfig& cfg) {
  const json manifest = read_checkpoint_manifest(dir);
  ModelParams params = ModelParams::init(cfg, 0);
  for (auto& [name, spec] : params.slots()) {
    if (!manifest.at("slots").contains(name)) throw ShapeError("checkpoint lacks slot " + name);
    const json& slot = manifest["slots"][name];
    TensorBlob w = load_bsqt(dir / slot["weight"]["file"].get<std::string>());
    TensorBlob b = load_bsqt(dir / slot["bias"]["file"].get<std::string>());
    if (w.data.size() != spec->weights.size() || b.data.size() != spec->bias.size())
      throw ShapeError("checkpoint slot " + name + " has the wrong size");
    spec->weights.assign(w.data.begin(), w.data.end());
    spec->bias.assign(b.data.begin(), b.data.end());
  }
  params.validate(cfg);
  return params;
}

}  // namespace bsq
