#include "bsq/experiments.hpp"

#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <numeric>
#include <sstream>
#include <thread>

#include "bsq/error.hpp"

namespace bsq {

std::size_t worker_count() {
  if (const char* env = std::getenv("BSQ_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v > 0) return static_cast<std::size_t>(v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& fn) {
  workers = std::max<std::size_t>(1, std::min(workers, n));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mu;
  auto work = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < n;) {
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(error_mu);
        if (!error) error = std::current_exception();
        next = n;
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < workers; ++t) pool.emplace_back(work);
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

EvalReport evaluate_model(const ModelParams& params, const BSMConfig& model,
                          const std::vector<Sample>& samples, const EvalConfig& eval,
                          std::size_t workers) {
  eval.validate();
  params.validate(model);
  std::vector<SampleMetrics> rows(samples.size());
  parallel_for(samples.size(), workers, [&](std::size_t i) {
    const Inference inf = infer(samples[i].image, params, model);
    rows[i] = evaluate_pair(inf.mask, samples[i].gs, eval, samples[i].index);
  });
  EvalReport report;
  report.config = eval;
  for (auto& r : rows) report.add(std::move(r));
  report.finalize();
  return report;
}

RunResult train_and_evaluate(const RunConfig& cfg, const DatasetSplit& split,
                             std::size_t eval_workers) {
  cfg.validate();
  Trainer trainer(cfg.model, cfg.loss, cfg.optimizer, cfg.seed);
  RunResult r;
  r.train = trainer.run(split.train);
  r.report = evaluate_model(r.train.params, cfg.model, split.val, cfg.eval, eval_workers);
  return r;
}

RunResult train_and_evaluate(const RunConfig& cfg, std::size_t eval_workers) {
  cfg.validate();
  DatasetSplit split =
      split_dataset(gen_dataset(cfg.data, KernelSize{cfg.model.kernel_size}), cfg.data.val_fraction);
  return train_and_evaluate(cfg, split, eval_workers);
}

namespace {

double mean(const std::vector<double>& v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

struct Job {
  std::size_t row;
  std::size_t seed_index;
};

// Runs every (variant, seed) job in parallel and gathers rows in a fixed order.
std::vector<TrendRow> run_grid(const std::vector<std::string>& labels,
                               const std::vector<RunConfig>& configs,
                               const std::vector<const DatasetSplit*>& splits,
                               std::size_t num_seeds, int tolerance, const RunCallback& on_run) {
  if (num_seeds == 0) throw ConfigError("at least one seed is required");
  std::vector<Job> jobs;
  for (std::size_t r = 0; r < configs.size(); ++r)
    for (std::size_t s = 0; s < num_seeds; ++s) jobs.push_back({r, s});
  std::vector<EvalReport> reports(jobs.size());
  std::mutex cb_mu;
  parallel_for(jobs.size(), worker_count(), [&](std::size_t j) {
    RunConfig c = configs[jobs[j].row];
    c.seed = configs[jobs[j].row].seed + jobs[j].seed_index;
    RunResult res = train_and_evaluate(c, *splits[jobs[j].row], 1);
    if (on_run) {
      std::lock_guard lock(cb_mu);
      on_run(labels[jobs[j].row], c.seed, res);
    }
    reports[j] = std::move(res.report);
  });
  std::vector<TrendRow> rows(configs.size());
  for (std::size_t j = 0; j < jobs.size(); ++j) {
    TrendRow& row = rows[jobs[j].row];
    row.label = labels[jobs[j].row];
    row.seeds.push_back(configs[jobs[j].row].seed + jobs[j].seed_index);
    row.f_score.push_back(reports[j].mean_f(tolerance));
    row.mask_iou.push_back(reports[j].mean_mask_iou);
    row.boundary_iou.push_back(reports[j].mean_boundary_iou);
  }
  for (auto& row : rows) {
    row.mean_f = mean(row.f_score);
    row.mean_mask_iou = mean(row.mask_iou);
    row.mean_boundary_iou = mean(row.boundary_iou);
  }
  return rows;
}

void require_tolerance(const EvalConfig& eval, int tolerance) {
  for (int t : eval.tolerances)
    if (t == tolerance) return;
  throw ConfigError("trend tolerance " + std::to_string(tolerance) +
                    " px is not among eval.tolerances");
}

}  // namespace

std::vector<TrendRow> sweep_k(const RunConfig& cfg, const std::vector<int>& ks,
                              std::size_t num_seeds, int tolerance, const RunCallback& on_run) {
  cfg.validate();
  require_tolerance(cfg.eval, tolerance);
  if (ks.empty()) throw ConfigError("sweep-k needs at least one kernel size");
  const std::vector<Sample> base = gen_dataset(cfg.data, KernelSize{cfg.model.kernel_size});
  std::vector<DatasetSplit> splits;
  std::vector<RunConfig> configs;
  std::vector<std::string> labels;
  for (int k : ks) {
    std::vector<Sample> data = base;
    retarget(data, KernelSize{k});
    splits.push_back(split_dataset(std::move(data), cfg.data.val_fraction));
    RunConfig c = cfg;
    c.model.kernel_size = k;
    configs.push_back(c);
    labels.push_back("k=" + std::to_string(k));
  }
  std::vector<const DatasetSplit*> split_ptrs;
  for (const auto& s : splits) split_ptrs.push_back(&s);
  return run_grid(labels, configs, split_ptrs, num_seeds, tolerance, on_run);
}

std::vector<TrendRow> ablate(const RunConfig& cfg, const std::vector<BranchSet>& sets,
                             std::size_t num_seeds, int tolerance, const RunCallback& on_run) {
  cfg.validate();
  require_tolerance(cfg.eval, tolerance);
  if (sets.empty()) throw ConfigError("ablate needs at least one branch set");
  const DatasetSplit split = split_dataset(gen_dataset(cfg.data, KernelSize{cfg.model.kernel_size}),
                                           cfg.data.val_fraction);
  std::vector<RunConfig> configs;
  std::vector<std::string> labels;
  for (const BranchSet& s : sets) {
    RunConfig c = cfg;
    c.model.branches = s;
    configs.push_back(c);
    labels.push_back(s.to_string());
  }
  std::vector<const DatasetSplit*> split_ptrs(sets.size(), &split);
  return run_grid(labels, configs, split_ptrs, num_seeds, tolerance, on_run);
}

std::string trend_csv(const std::vector<TrendRow>& rows, int tolerance) {
  std::ostringstream out;
  out << "label,seeds,f" << tolerance << "px,mask_iou,boundary_iou";
  std::size_t max_seeds = 0;
  for (const auto& r : rows) max_seeds = std::max(max_seeds, r.seeds.size());
  for (std::size_t s = 0; s < max_seeds; ++s) out << ",f" << tolerance << "px_run" << s;
  out << "\n";
  char buf[64];
  for (const auto& r : rows) {
    out << r.label << "," << r.seeds.size();
    for (double v : {r.mean_f, r.mean_mask_iou, r.mean_boundary_iou}) {
      std::snprintf(buf, sizeof(buf), ",%.17g", v);
      out << buf;
    }
    for (double v : r.f_score) {
      std::snprintf(buf, sizeof(buf), ",%.17g", v);
      out << buf;
    }
    out << "\n";
  }
  return out.str();
}

std::string trend_table(const std::vector<TrendRow>& rows, int tolerance) {
  std::ostringstream out;
  char buf[160];
  std::snprintf(buf, sizeof(buf), "%-18s %6s %10s %10s %10s\n", "run", "seeds",
                ("F1(" + std::to_string(tolerance) + "px)").c_str(), "mask IoU", "bnd IoU");
  out << buf;
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof(buf), "%-18s %6zu %10.4f %10.4f %10.4f\n", r.label.c_str(),
                  r.seeds.size(), r.mean_f, r.mean_mask_iou, r.mean_boundary_iou);
    out << buf;
  }
  return out.str();
}

}  // namespace bsq
