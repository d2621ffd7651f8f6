// bsq: target generation, training, evaluation, sweeps and visualization.
//
// Exit codes: 0 ok, 1 unexpected failure, 2 unreadable or malformed input,
// 3 invalid configuration, 4 numerical divergence.

#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "bsq/config.hpp"
#include "bsq/dataio.hpp"
#include "bsq/error.hpp"
#include "bsq/experiments.hpp"
#include "bsq/morphology.hpp"
#include "bsq/viz.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace bsq;

namespace {

enum Exit { kOk = 0, kFailure = 1, kInput = 2, kConfig = 3, kNumeric = 4 };

// Config file (or defaults) plus command-line overrides.
struct ConfigArgs {
  std::string path;
  std::optional<std::string> out;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> steps;
  std::optional<std::size_t> num_samples;

  void attach(CLI::App* cmd, bool config_required) {
    auto* opt = cmd->add_option("--config", path, "RunConfig JSON (defaults when omitted)");
    if (config_required) opt->required();
    cmd->add_option("--out", out, "output directory (overrides output_dir)");
    cmd->add_option("--seed", seed, "model seed (overrides seed)");
    cmd->add_option("--steps", steps, "optimizer steps (overrides optimizer.steps)");
    cmd->add_option("--num-samples", num_samples, "dataset size (overrides data.num_samples)");
  }

  RunConfig load() const {
    RunConfig cfg = path.empty() ? RunConfig{} : load_run_config(path);
    if (out) cfg.output_dir = *out;
    if (seed) cfg.seed = *seed;
    if (steps) cfg.optimizer.steps = *steps;
    if (num_samples) cfg.data.num_samples = *num_samples;
    cfg.validate();
    return cfg;
  }
};

fs::path prepare_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError("cannot create output directory " + dir.string());
  return dir;
}

void echo(const fs::path& dir, const std::string& command, json config) {
  write_json_file(dir / "config.json", {{"command", command}, {"config", std::move(config)}});
}

RunConfig config_from_checkpoint(const fs::path& ckpt) {
  const json manifest = read_checkpoint_manifest(ckpt);
  return parse_run_config(manifest.at("config").dump());
}

std::vector<int> parse_int_list(const std::string& text) {
  std::vector<int> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t used = 0;
    int v = 0;
    try {
      v = std::stoi(item, &used);
    } catch (const std::exception&) {
      throw ConfigError("not an integer list: '" + text + "'");
    }
    if (used != item.size()) throw ConfigError("not an integer list: '" + text + "'");
    out.push_back(v);
  }
  if (out.empty()) throw ConfigError("empty integer list");
  return out;
}

std::vector<Sample> dataset_for(const RunConfig& cfg, const std::string& data_dir) {
  const KernelSize k{cfg.model.kernel_size};
  return data_dir.empty() ? gen_dataset(cfg.data, k) : load_dataset(data_dir, k);
}

void progress(const std::string& label, std::uint64_t seed, const RunResult& r) {
  std::fprintf(stderr, "  done %-18s seed %llu  final loss %.4f\n", label.c_str(),
               static_cast<unsigned long long>(seed), r.train.log.empty() ? 0.0 : r.train.log.back().total);
}

// --- commands ------------------------------------------------------------

struct GenGtArgs {
  std::string mask;
  int k = kInstanceKernel;
  std::string out;
};

int cmd_gen_gt(const GenGtArgs& a) {
  const KernelSize k{a.k};
  const BinaryMask gs = read_mask_file(a.mask);
  const fs::path dir = prepare_dir(a.out);
  const SqueezeTargets sq = squeeze_targets(gs, k);
  write_pgm(dir / "gs.pgm", gs);
  write_pgm(dir / "gb.pgm", boundary_target(gs));
  write_pgm(dir / "gc.pgm", sq.contraction);
  write_pgm(dir / "ge.pgm", sq.expansion);
  echo(dir, "gen-gt", {{"mask", a.mask}, {"k", a.k}});
  std::printf("gs %zu  gb %zu  gc %zu  ge %zu pixels -> %s\n", gs.count(), boundary_target(gs).count(),
              sq.contraction.count(), sq.expansion.count(), dir.string().c_str());
  return kOk;
}

int cmd_gen_data(const ConfigArgs& c) {
  const RunConfig cfg = c.load();
  const fs::path dir = prepare_dir(cfg.output_dir);
  const auto samples = gen_dataset(cfg.data, KernelSize{cfg.model.kernel_size});
  save_dataset(dir, samples, cfg.data);
  echo(dir, "gen-data", to_json(cfg));
  std::printf("%zu samples -> %s\n", samples.size(), dir.string().c_str());
  return kOk;
}

int cmd_train(const ConfigArgs& c, const std::string& data_dir) {
  const RunConfig cfg = c.load();
  const fs::path dir = prepare_dir(cfg.output_dir);
  echo(dir, "train", to_json(cfg));
  const DatasetSplit split = split_dataset(dataset_for(cfg, data_dir), cfg.data.val_fraction);
  if (split.train.empty()) throw ConfigError("training split is empty");

  Trainer trainer(cfg.model, cfg.loss, cfg.optimizer, cfg.seed);
  const std::size_t every = std::max<std::size_t>(1, cfg.optimizer.steps / 10);
  TrainResult result = trainer.run(split.train, [&](const LogRow& r) {
    if (r.step % every == 0 || r.step + 1 == cfg.optimizer.steps)
      std::fprintf(stderr, "step %5zu  lr %.2e  loss %.4f\n", r.step, r.lr, r.total);
  });
  save_checkpoint(dir / "checkpoint", result.params, to_json(cfg), cfg.seed);
  write_text_file(dir / "train_log.csv", training_log_csv(result.log));
  if (!split.val.empty()) {
    EvalReport report = evaluate_model(result.params, cfg.model, split.val, cfg.eval, worker_count());
    write_text_file(dir / "val_report.json", report.to_json());
    write_text_file(dir / "val_report.csv", report.to_csv());
    std::printf("%s", report.summary_table("val").c_str());
  }
  std::printf("checkpoint -> %s\n", (dir / "checkpoint").string().c_str());
  return kOk;
}

struct EvalArgs {
  std::string ckpt;
  std::string data;
  std::string out;
};

int cmd_eval(const EvalArgs& a) {
  const RunConfig cfg = config_from_checkpoint(a.ckpt);
  const ModelParams params = load_checkpoint_params(a.ckpt, cfg.model);
  const auto samples = load_dataset(a.data, KernelSize{cfg.model.kernel_size});
  const fs::path dir = prepare_dir(a.out.empty() ? fs::path(a.ckpt).parent_path() / "eval" : fs::path(a.out));
  echo(dir, "eval", {{"ckpt", a.ckpt}, {"data", a.data}, {"run", to_json(cfg)}});
  EvalReport report = evaluate_model(params, cfg.model, samples, cfg.eval, worker_count());
  write_text_file(dir / "report.json", report.to_json());
  write_text_file(dir / "report.csv", report.to_csv());
  std::printf("%s", report.summary_table(fs::path(a.ckpt).filename().string()).c_str());
  return kOk;
}

struct TrendArgs {
  std::string values = "1,3,5,7,9";
  std::vector<std::string> branches;
  std::size_t seeds = 3;
  int tolerance = 2;
};

int finish_trend(const fs::path& dir, const std::string& name, const std::vector<TrendRow>& rows,
                 int tolerance) {
  write_text_file(dir / (name + ".csv"), trend_csv(rows, tolerance));
  std::printf("%s", trend_table(rows, tolerance).c_str());
  return kOk;
}

int cmd_sweep_k(const ConfigArgs& c, const TrendArgs& t) {
  const RunConfig cfg = c.load();
  const std::vector<int> ks = parse_int_list(t.values);
  for (int k : ks) KernelSize{k};
  const fs::path dir = prepare_dir(cfg.output_dir);
  echo(dir, "sweep-k",
       {{"run", to_json(cfg)}, {"values", ks}, {"seeds", t.seeds}, {"tolerance", t.tolerance}});
  return finish_trend(dir, "sweep_k", sweep_k(cfg, ks, t.seeds, t.tolerance, progress), t.tolerance);
}

int cmd_ablate(const ConfigArgs& c, const TrendArgs& t) {
  const RunConfig cfg = c.load();
  std::vector<BranchSet> sets;
  for (const auto& b : t.branches) sets.push_back(BranchSet::parse(b));
  if (sets.empty()) sets.push_back(cfg.model.branches);
  std::vector<std::string> names;
  for (const auto& s : sets) names.push_back(s.to_string());
  const fs::path dir = prepare_dir(cfg.output_dir);
  echo(dir, "ablate",
       {{"run", to_json(cfg)}, {"branches", names}, {"seeds", t.seeds}, {"tolerance", t.tolerance}});
  return finish_trend(dir, "ablate", ablate(cfg, sets, t.seeds, t.tolerance, progress), t.tolerance);
}

struct VizArgs {
  std::string ckpt;
  std::size_t sample = 0;
  std::string data;
  std::string out;
  std::size_t scale = 8;
};

int cmd_viz(const VizArgs& a) {
  if (a.scale == 0) throw ConfigError("--scale must be positive");
  const RunConfig cfg = config_from_checkpoint(a.ckpt);
  const ModelParams params = load_checkpoint_params(a.ckpt, cfg.model);
  const auto samples = dataset_for(cfg, a.data);
  if (a.sample >= samples.size())
    throw ConfigError("--sample " + std::to_string(a.sample) + " is out of range (" +
                      std::to_string(samples.size()) + " samples)");
  const Sample& s = samples[a.sample];
  const fs::path dir = prepare_dir(a.out.empty() ? fs::path(a.ckpt).parent_path() / "viz" : fs::path(a.out));
  echo(dir, "viz", {{"ckpt", a.ckpt}, {"sample", a.sample}, {"data", a.data}, {"run", to_json(cfg)}});

  const Inference inf = infer(s.image, params, cfg.model);
  auto put = [&](const std::string& name, const RgbImage& img, std::size_t factor) {
    write_ppm(dir / name, upscale_nearest(img, factor));
  };
  const std::size_t big = a.scale, small = 2 * a.scale;  // 28x28 rasters vs 14x14 fields
  put("image.ppm", gray_to_rgb(s.image), big);
  put("gt_mask.ppm", mask_to_rgb(s.gs), big);
  put("pred_mask.ppm", mask_to_rgb(inf.mask), big);
  put("seg_prob.ppm", gray_to_rgb(inf.seg_prob), big);
  if (inf.flow_contraction) put("flow_contraction.ppm", flow_to_rgb(*inf.flow_contraction), small);
  if (inf.flow_expansion) put("flow_expansion.ppm", flow_to_rgb(*inf.flow_expansion), small);
  if (inf.f_boundary) put("pca_boundary.ppm", field_to_rgb(pca_project(*inf.f_boundary)), small);
  std::printf("visualizations for sample %zu -> %s\n", a.sample, dir.string().c_str());
  return kOk;
}

int report(const char* kind, const std::exception& e, int code) {
  std::fprintf(stderr, "bsq: %s: %s\n", kind, e.what());
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Boundary squeeze toolkit: targets, training, evaluation and visualization"};
  app.require_subcommand(1);
  std::function<int()> run;

  GenGtArgs gen_gt;
  auto* c_gen_gt = app.add_subcommand("gen-gt", "write gs/gb/gc/ge PGM targets for one mask");
  c_gen_gt->add_option("--mask", gen_gt.mask, "mask as .pgm or polygon .json")->required();
  c_gen_gt->add_option("--k", gen_gt.k, "odd dilation/erosion kernel size")->capture_default_str();
  c_gen_gt->add_option("--out", gen_gt.out, "output directory")->required();
  c_gen_gt->callback([&] { run = [&] { return cmd_gen_gt(gen_gt); }; });

  ConfigArgs data_cfg;
  auto* c_gen_data = app.add_subcommand("gen-data", "generate and save a synthetic shape dataset");
  data_cfg.attach(c_gen_data, false);
  c_gen_data->callback([&] { run = [&] { return cmd_gen_data(data_cfg); }; });

  ConfigArgs train_cfg;
  std::string train_data;
  auto* c_train = app.add_subcommand("train", "train a model; writes checkpoint and loss CSV");
  train_cfg.attach(c_train, true);
  c_train->add_option("--data", train_data, "saved dataset directory (generated from config when omitted)");
  c_train->callback([&] { run = [&] { return cmd_train(train_cfg, train_data); }; });

  EvalArgs eval;
  auto* c_eval = app.add_subcommand("eval", "score a checkpoint on a saved dataset");
  c_eval->add_option("--ckpt", eval.ckpt, "checkpoint directory")->required();
  c_eval->add_option("--data", eval.data, "dataset directory")->required();
  c_eval->add_option("--out", eval.out, "output directory (default: <ckpt>/../eval)");
  c_eval->callback([&] { run = [&] { return cmd_eval(eval); }; });

  ConfigArgs sweep_cfg;
  TrendArgs sweep;
  auto* c_sweep = app.add_subcommand("sweep-k", "train and score one model per kernel size");
  sweep_cfg.attach(c_sweep, false);
  c_sweep->add_option("--values", sweep.values, "comma-separated odd kernel sizes")->capture_default_str();
  c_sweep->add_option("--seeds", sweep.seeds, "model seeds per kernel size")->capture_default_str();
  c_sweep->add_option("--tolerance", sweep.tolerance, "F-score tolerance in px")->capture_default_str();
  c_sweep->callback([&] { run = [&] { return cmd_sweep_k(sweep_cfg, sweep); }; });

  ConfigArgs ablate_cfg;
  TrendArgs abl;
  auto* c_ablate = app.add_subcommand("ablate", "train and score one model per branch subset");
  ablate_cfg.attach(c_ablate, false);
  c_ablate->add_option("--branches", abl.branches,
                       "branch subset such as seg,con,exp (repeatable; default: model.branches)");
  c_ablate->add_option("--seeds", abl.seeds, "model seeds per subset")->capture_default_str();
  c_ablate->add_option("--tolerance", abl.tolerance, "F-score tolerance in px")->capture_default_str();
  c_ablate->callback([&] { run = [&] { return cmd_ablate(ablate_cfg, abl); }; });

  VizArgs viz;
  auto* c_viz = app.add_subcommand("viz", "flow and PCA feature images for one sample");
  c_viz->add_option("--ckpt", viz.ckpt, "checkpoint directory")->required();
  c_viz->add_option("--sample", viz.sample, "sample index")->required();
  c_viz->add_option("--data", viz.data, "dataset directory (generated from the checkpoint config when omitted)");
  c_viz->add_option("--out", viz.out, "output directory (default: <ckpt>/../viz)");
  c_viz->add_option("--scale", viz.scale, "nearest-neighbour upscaling of 28x28 rasters")->capture_default_str();
  c_viz->callback([&] { run = [&] { return cmd_viz(viz); }; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kInput;
  }

  try {
    return run();
  } catch (const ParseError& e) {
    return report("parse error", e, kInput);
  } catch (const IoError& e) {
    return report("i/o error", e, kInput);
  } catch (const NumericError& e) {
    return report("numerical divergence", e, kNumeric);
  } catch (const ConfigError& e) {
    return report("invalid configuration", e, kConfig);
  } catch (const ShapeError& e) {
    return report("invalid configuration", e, kConfig);
  } catch (const std::exception& e) {
    return report("error", e, kFailure);
  }
}
