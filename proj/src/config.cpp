#include "bsq/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "bsq/error.hpp"

namespace bsq {

using nlohmann::json;

namespace {

// Reads known keys from an object and rejects everything else.
class Fields {
 public:
  Fields(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j.is_object()) throw ConfigError(where_ + ": expected a JSON object");
  }
  ~Fields() = default;

  template <class T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return;
    try {
      out = it->template get<T>();
    } catch (const json::exception&) {
      throw ConfigError(where_ + "." + key + ": wrong type");
    }
  }

  const json* sub(const char* key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.count(it.key())) throw ConfigError(where_ + ": unknown key '" + it.key() + "'");
  }

 private:
  const json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

template <class T>
std::array<T, kBranchCount> branch_map(const json* j, std::array<T, kBranchCount> base,
                                       const std::string& where,
                                       T (*convert)(const json&, const std::string&)) {
  if (!j) return base;
  if (!j->is_object()) throw ConfigError(where + ": expected an object keyed by branch");
  for (auto it = j->begin(); it != j->end(); ++it) {
    bool found = false;
    for (Branch b : kAllBranches) {
      if (it.key() == branch_name(b)) {
        base[static_cast<std::size_t>(b)] = convert(it.value(), where + "." + it.key());
        found = true;
      }
    }
    if (!found) throw ConfigError(where + ": unknown branch '" + it.key() + "'");
  }
  return base;
}

LossKind kind_of(const json& j, const std::string& where) {
  if (!j.is_string()) throw ConfigError(where + ": expected a string");
  return parse_loss_kind(j.get<std::string>());
}

double number_of(const json& j, const std::string& where) {
  if (!j.is_number()) throw ConfigError(where + ": expected a number");
  return j.get<double>();
}

}  // namespace

void RunConfig::validate() const {
  model.validate();
  loss.validate();
  optimizer.validate();
  data.validate();
  eval.validate();
  if (data.image_size != model.image_size())
    throw ConfigError("data.image_size must equal twice model.grid_size");
  if (output_dir.empty()) throw ConfigError("output_dir must not be empty");
}

json to_json(const BSMConfig& c) {
  return {{"feat_channels", c.feat_channels},
          {"grid_size", c.grid_size},
          {"kernel_size", c.kernel_size},
          {"low_level_enabled", c.low_level_enabled},
          {"fuse_mask_to_boundary", c.fuse_mask_to_boundary},
          {"fuse_boundary_to_mask_conv", c.fuse_boundary_to_mask_conv},
          {"squeeze_warp", c.squeeze_warp},
          {"branches", c.branches.to_string()}};
}

void from_json(const json& j, BSMConfig& c) {
  Fields f(j, "model");
  f.get("feat_channels", c.feat_channels);
  f.get("grid_size", c.grid_size);
  f.get("kernel_size", c.kernel_size);
  f.get("low_level_enabled", c.low_level_enabled);
  f.get("fuse_mask_to_boundary", c.fuse_mask_to_boundary);
  f.get("fuse_boundary_to_mask_conv", c.fuse_boundary_to_mask_conv);
  f.get("squeeze_warp", c.squeeze_warp);
  std::string branches = c.branches.to_string();
  f.get("branches", branches);
  c.branches = BranchSet::parse(branches);
  f.finish();
}

json to_json(const LossConfig& c) {
  json kinds = json::object(), weights = json::object();
  for (Branch b : kAllBranches) {
    kinds[branch_name(b)] = loss_kind_name(c.kind(b));
    weights[branch_name(b)] = c.term_weights[static_cast<std::size_t>(b)];
  }
  return {{"dice_smooth", c.dice_smooth},
          {"pos_weight", c.pos_weight_mode == PosWeightMode::auto_balance ? "auto" : "fixed"},
          {"fixed_pos_weight", c.fixed_pos_weight},
          {"combo_dice_weight", c.combo_dice_weight},
          {"kinds", kinds},
          {"term_weights", weights}};
}

void from_json(const json& j, LossConfig& c) {
  Fields f(j, "loss");
  f.get("dice_smooth", c.dice_smooth);
  std::string mode = c.pos_weight_mode == PosWeightMode::auto_balance ? "auto" : "fixed";
  f.get("pos_weight", mode);
  if (mode == "auto") c.pos_weight_mode = PosWeightMode::auto_balance;
  else if (mode == "fixed") c.pos_weight_mode = PosWeightMode::fixed;
  else throw ConfigError("loss.pos_weight must be 'auto' or 'fixed'");
  f.get("fixed_pos_weight", c.fixed_pos_weight);
  f.get("combo_dice_weight", c.combo_dice_weight);
  c.kinds = branch_map<LossKind>(f.sub("kinds"), c.kinds, "loss.kinds", kind_of);
  c.term_weights = branch_map<double>(f.sub("term_weights"), c.term_weights, "loss.term_weights",
                                      number_of);
  f.finish();
}

json to_json(const OptimizerConfig& c) {
  return {{"base_lr", c.base_lr},       {"reference_batch", c.reference_batch},
          {"batch_size", c.batch_size}, {"steps", c.steps},
          {"momentum", c.momentum},     {"weight_decay", c.weight_decay},
          {"milestones", c.milestones}, {"gamma", c.gamma},
          {"warmup_steps", c.warmup_steps}, {"warmup_factor", c.warmup_factor},
          {"grad_clip_norm", c.grad_clip_norm}, {"flow_lr_mult", c.flow_lr_mult}};
}

void from_json(const json& j, OptimizerConfig& c) {
  Fields f(j, "optimizer");
  f.get("base_lr", c.base_lr);
  f.get("reference_batch", c.reference_batch);
  f.get("batch_size", c.batch_size);
  f.get("steps", c.steps);
  f.get("momentum", c.momentum);
  f.get("weight_decay", c.weight_decay);
  f.get("milestones", c.milestones);
  f.get("gamma", c.gamma);
  f.get("warmup_steps", c.warmup_steps);
  f.get("warmup_factor", c.warmup_factor);
  f.get("grad_clip_norm", c.grad_clip_norm);
  f.get("flow_lr_mult", c.flow_lr_mult);
  f.finish();
}

json to_json(const DataConfig& c) {
  json kinds = json::array();
  for (ShapeKind k : c.kinds) kinds.push_back(shape_kind_name(k));
  return {{"num_samples", c.num_samples},   {"seed", c.seed},
          {"image_size", c.image_size},     {"noise_sigma", c.noise_sigma},
          {"distractor_prob", c.distractor_prob}, {"min_contrast", c.min_contrast},
          {"val_fraction", c.val_fraction}, {"kinds", kinds}};
}

void from_json(const json& j, DataConfig& c) {
  Fields f(j, "data");
  f.get("num_samples", c.num_samples);
  f.get("seed", c.seed);
  f.get("image_size", c.image_size);
  f.get("noise_sigma", c.noise_sigma);
  f.get("distractor_prob", c.distractor_prob);
  f.get("min_contrast", c.min_contrast);
  f.get("val_fraction", c.val_fraction);
  if (const json* kinds = f.sub("kinds")) {
    if (!kinds->is_array()) throw ConfigError("data.kinds: expected an array");
    c.kinds.clear();
    for (const auto& k : *kinds) {
      if (!k.is_string()) throw ConfigError("data.kinds: expected strings");
      c.kinds.push_back(parse_shape_kind(k.get<std::string>()));
    }
  }
  f.finish();
}

json to_json(const EvalConfig& c) {
  return {{"tolerances", c.tolerances}, {"band_width", c.band_width}};
}

void from_json(const json& j, EvalConfig& c) {
  Fields f(j, "eval");
  f.get("tolerances", c.tolerances);
  f.get("band_width", c.band_width);
  f.finish();
}

json to_json(const RunConfig& c) {
  return {{"model", to_json(c.model)},
          {"loss", to_json(c.loss)},
          {"optimizer", to_json(c.optimizer)},
          {"data", to_json(c.data)},
          {"eval", to_json(c.eval)},
          {"output_dir", c.output_dir},
          {"seed", c.seed}};
}

void from_json(const json& j, RunConfig& c) {
  Fields f(j, "config");
  if (const json* s = f.sub("model")) from_json(*s, c.model);
  if (const json* s = f.sub("loss")) from_json(*s, c.loss);
  if (const json* s = f.sub("optimizer")) from_json(*s, c.optimizer);
  if (const json* s = f.sub("data")) from_json(*s, c.data);
  if (const json* s = f.sub("eval")) from_json(*s, c.eval);
  f.get("output_dir", c.output_dir);
  f.get("seed", c.seed);
  f.finish();
}

RunConfig parse_run_config(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("config: ") + e.what(), json_error_offset(e.byte));
  }
  RunConfig c;
  from_json(j, c);
  c.validate();
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str());
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed: " + path.string());
}

void write_json_file(const std::filesystem::path& path, const json& j) {
  write_text_file(path, j.dump(2) + "\n");
}

}  // namespace bsq
