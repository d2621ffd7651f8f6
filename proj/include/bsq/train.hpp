#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "json.hpp"

#include "bsq/bsm.hpp"
#include "bsq/dataio.hpp"
#include "bsq/losses.hpp"

namespace bsq {

struct OptimizerConfig {
  double base_lr = 0.02;
  // The effective rate is base_lr * batch_size / reference_batch.
  std::size_t reference_batch = 16;
  std::size_t batch_size = 16;
  std::size_t steps = 800;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  // Step decay by `gamma` at these fractions of `steps`.
  std::vector<double> milestones = {2.0 / 3.0, 8.0 / 9.0};
  double gamma = 0.1;
  // Linear warmup from warmup_factor * lr over the first warmup_steps.
  std::size_t warmup_steps = 0;
  double warmup_factor = 0.001;
  // Rescales the batch gradient (before weight decay) to at most this global
  // L2 norm. 0 disables clipping.
  double grad_clip_norm = 0.0;
  // Learning-rate multiplier for the two flow-predicting convs. At the full
  // rate the flows grow to several pixels within a few hundred steps.
  double flow_lr_mult = 0.1;

  double lr_at(std::size_t step) const;
  void validate() const;
};

struct LogRow {
  std::size_t step = 0;
  std::array<double, kBranchCount> terms = {0, 0, 0, 0};
  double total = 0.0;
  double lr = 0.0;
};

// One "step,L_seg,L_bnd,L_con,L_exp,total" CSV line per row, with header.
std::string training_log_csv(const std::vector<LogRow>& log);

struct TrainResult {
  ModelParams params;
  std::vector<LogRow> log;
};

/// SGD with momentum and weight decay over mini-batches drawn from a
/// seeded per-epoch shuffle. Deterministic for a fixed seed. Throws
/// NumericError when the loss or a gradient stops being finite.
class Trainer {
 public:
  Trainer(const BSMConfig& model, const LossConfig& loss, const OptimizerConfig& opt,
          std::uint64_t seed);
  Trainer(ModelParams params, const BSMConfig& model, const LossConfig& loss,
          const OptimizerConfig& opt, std::uint64_t seed);

  // Forward + backward over the batch (gradients averaged), then one update.
  LogRow step(std::span<const Sample* const> batch);
  TrainResult run(const std::vector<Sample>& data,
                  const std::function<void(const LogRow&)>& on_step = {});

  const ModelParams& params() const noexcept { return params_; }
  ModelParams& params() noexcept { return params_; }
  std::size_t steps_done() const noexcept { return step_; }

 private:
  BSMConfig model_;
  LossConfig loss_;
  OptimizerConfig opt_;
  std::uint64_t seed_;
  ModelParams params_;
  std::vector<std::vector<double>> weight_momentum_;
  std::vector<std::vector<double>> bias_momentum_;
  std::size_t step_ = 0;
};

// Forward pass and mask loss of one sample, recorded on `tape`.
MaskLoss sample_loss(Tape& tape, const Sample& sample, ModelParams& params,
                     const BSMConfig& model, const LossConfig& loss);
BranchTargets targets_of(const Sample& s);

// Checkpoint directory: <slot>.weight.bsqt / <slot>.bias.bsqt per slot plus
// manifest.json (slot -> files and shapes, config echo, seed).
void save_checkpoint(const std::filesystem::path& dir, const ModelParams& params,
                     const nlohmann::json& config_echo, std::uint64_t seed);
nlohmann::json read_checkpoint_manifest(const std::filesystem::path& dir);
ModelParams load_checkpoint_params(const std::filesystem::path& dir, const BSMConfig& cfg);

}  // namespace bsq
