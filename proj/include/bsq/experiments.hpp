#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "bsq/config.hpp"

namespace bsq {

// Worker count: BSQ_THREADS if set to a positive integer, otherwise the
// hardware concurrency (at least 1).
std::size_t worker_count();

// Runs fn(0..n-1) on up to `workers` threads. The first exception thrown by
// any task is rethrown after all workers stop.
void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& fn);

// Thresholded predictions on every sample, scored against sample.gs.
EvalReport evaluate_model(const ModelParams& params, const BSMConfig& model,
                          const std::vector<Sample>& samples, const EvalConfig& eval,
                          std::size_t workers = 1);

struct RunResult {
  TrainResult train;
  EvalReport report;
};

// Generates the dataset from cfg.data with the model's kernel size, trains on
// the train split with cfg.seed and evaluates on the validation split.
RunResult train_and_evaluate(const RunConfig& cfg, std::size_t eval_workers = 1);
// Same on an already generated split (targets must match cfg.model.kernel_size).
RunResult train_and_evaluate(const RunConfig& cfg, const DatasetSplit& split,
                             std::size_t eval_workers = 1);

struct TrendRow {
  std::string label;
  std::vector<std::uint64_t> seeds;
  std::vector<double> f_score;  // per seed, at the trend tolerance
  std::vector<double> mask_iou;
  std::vector<double> boundary_iou;
  double mean_f = 0.0, mean_mask_iou = 0.0, mean_boundary_iou = 0.0;
};

std::string trend_csv(const std::vector<TrendRow>& rows, int tolerance);
std::string trend_table(const std::vector<TrendRow>& rows, int tolerance);

// Progress callback: (label, seed) after each finished run.
using RunCallback = std::function<void(const std::string&, std::uint64_t, const RunResult&)>;

// One row per k. The dataset is generated once from cfg.data and retargeted
// per k; model seeds are cfg.seed + i for i < num_seeds. Runs execute in
// parallel on worker_count() threads.
std::vector<TrendRow> sweep_k(const RunConfig& cfg, const std::vector<int>& ks,
                              std::size_t num_seeds, int tolerance = 2,
                              const RunCallback& on_run = {});

// One row per branch subset, same seeding scheme as sweep_k.
std::vector<TrendRow> ablate(const RunConfig& cfg, const std::vector<BranchSet>& sets,
                             std::size_t num_seeds, int tolerance = 2,
                             const RunCallback& on_run = {});

}  // namespace bsq
