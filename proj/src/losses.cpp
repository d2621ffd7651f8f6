#include "bsq/losses.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "bsq/error.hpp"
#include "bsq/layers.hpp"

namespace bsq {

namespace {

double softplus(double z) noexcept {
  return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z)));
}

void check_pair(const Var& logits, const BinaryMask& target, const char* who) {
  const Shape3& s = logits.shape();
  if (s.channels != 1 || s.height != target.height() || s.width != target.width())
    throw ShapeError(std::string(who) + ": logits " + std::to_string(s.channels) + "x" +
                     std::to_string(s.height) + "x" + std::to_string(s.width) +
                     " do not match target " + std::to_string(target.height()) + "x" +
                     std::to_string(target.width()));
}

// Mean of pos_weight * t * softplus(-z) + (1 - t) * softplus(z).
Var weighted_cross_entropy(Tape& tape, const Var& logits, const BinaryMask& target,
                           double pos_weight) {
  auto z = logits.value().values();
  auto t = target.bits();
  const auto n = static_cast<double>(z.size());
  double total = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i)
    total += t[i] ? pos_weight * softplus(-z[i]) : softplus(z[i]);
  Node* src = logits.node();
  const BinaryMask tgt = target;
  return tape.record(FeatureField(1, 1, 1, total / n), logits.requires_grad(),
                     [src, tgt, pos_weight, n](Node& self) {
                       const double g = std::as_const(self.field).grad()[0] / n;
                       auto zz = src->field.values();
                       auto tt = tgt.bits();
                       auto gz = src->field.grad();
                       for (std::size_t i = 0; i < zz.size(); ++i) {
                         const double p = sigmoid(zz[i]);
                         gz[i] += g * (tt[i] ? pos_weight * (p - 1.0) : p);
                       }
                     });
}

}  // namespace

const char* branch_name(Branch b) noexcept {
  switch (b) {
    case Branch::segmentation: return "seg";
    case Branch::boundary: return "bnd";
    case Branch::contraction: return "con";
    case Branch::expansion: return "exp";
  }
  return "?";
}

BranchSet BranchSet::parse(const std::string& text) {
  BranchSet set;
  set.on = {false, false, false, false};
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    bool known = false;
    for (Branch b : kAllBranches) {
      if (item == branch_name(b)) {
        set.set(b, true);
        known = true;
      }
    }
    if (!known) throw ConfigError("unknown branch '" + item + "' (expected seg,bnd,con,exp)");
  }
  if (!set.has(Branch::segmentation)) throw ConfigError("branch set must include seg");
  return set;
}

std::string BranchSet::to_string() const {
  std::string out;
  for (Branch b : kAllBranches) {
    if (!has(b)) continue;
    if (!out.empty()) out += ',';
    out += branch_name(b);
  }
  return out;
}

const char* loss_kind_name(LossKind k) noexcept {
  switch (k) {
    case LossKind::bce: return "bce";
    case LossKind::weighted_bce: return "weighted_bce";
    case LossKind::dice: return "dice";
    case LossKind::bce_dice: return "bce+dice";
    case LossKind::weighted_bce_dice: return "weighted_bce+dice";
  }
  return "?";
}

LossKind parse_loss_kind(const std::string& s) {
  for (LossKind k : {LossKind::bce, LossKind::weighted_bce, LossKind::dice, LossKind::bce_dice,
                     LossKind::weighted_bce_dice}) {
    if (s == loss_kind_name(k)) return k;
  }
  throw ConfigError("unknown loss kind '" + s + "'");
}

void LossConfig::validate() const {
  if (!(dice_smooth > 0.0)) throw ConfigError("dice_smooth must be > 0");
  if (!(fixed_pos_weight > 0.0)) throw ConfigError("fixed_pos_weight must be > 0");
  if (!(combo_dice_weight >= 0.0)) throw ConfigError("combo_dice_weight must be >= 0");
  for (double w : term_weights)
    if (!(w >= 0.0) || !std::isfinite(w)) throw ConfigError("term weights must be finite and >= 0");
}

double sigmoid(double z) noexcept {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

Var bce(Tape& tape, const Var& logits, const BinaryMask& target) {
  check_pair(logits, target, "bce");
  return weighted_cross_entropy(tape, logits, target, 1.0);
}

Var weighted_bce(Tape& tape, const Var& logits, const BinaryMask& target, const LossConfig& cfg) {
  check_pair(logits, target, "weighted_bce");
  double w = cfg.fixed_pos_weight;
  if (cfg.pos_weight_mode == PosWeightMode::auto_balance) {
    const std::size_t pos = target.count();
    w = pos == 0 ? 1.0 : static_cast<double>(target.size() - pos) / static_cast<double>(pos);
  }
  return weighted_cross_entropy(tape, logits, target, w);
}

Var dice_loss(Tape& tape, const Var& logits, const BinaryMask& target, double smooth) {
  check_pair(logits, target, "dice_loss");
  if (!(smooth > 0.0)) throw ConfigError("dice smoothing must be > 0");
  auto z = logits.value().values();
  auto t = target.bits();
  std::vector<double> p(z.size());
  double inter = 0.0, psum = 0.0, tsum = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    p[i] = sigmoid(z[i]);
    inter += p[i] * t[i];
    psum += p[i];
    tsum += t[i];
  }
  const double num = 2.0 * inter + smooth;
  const double den = psum + tsum + smooth;
  Node* src = logits.node();
  const BinaryMask tgt = target;
  return tape.record(FeatureField(1, 1, 1, 1.0 - num / den), logits.requires_grad(),
                     [src, tgt, p = std::move(p), num, den](Node& self) {
                       const double g = std::as_const(self.field).grad()[0];
                       auto tt = tgt.bits();
                       auto gz = src->field.grad();
                       for (std::size_t i = 0; i < p.size(); ++i) {
                         const double dl_dp = -(2.0 * tt[i] * den - num) / (den * den);
                         gz[i] += g * dl_dp * p[i] * (1.0 - p[i]);
                       }
                     });
}

Var branch_loss(Tape& tape, LossKind kind, const Var& logits, const BinaryMask& target,
                const LossConfig& cfg) {
  auto with_dice = [&](Var ce) {
    Var d = dice_loss(tape, logits, target, cfg.dice_smooth);
    if (cfg.combo_dice_weight != 1.0) d = scale(tape, d, cfg.combo_dice_weight);
    return add(tape, ce, d);
  };
  switch (kind) {
    case LossKind::bce: return bce(tape, logits, target);
    case LossKind::weighted_bce: return weighted_bce(tape, logits, target, cfg);
    case LossKind::dice: return dice_loss(tape, logits, target, cfg.dice_smooth);
    case LossKind::bce_dice: return with_dice(bce(tape, logits, target));
    case LossKind::weighted_bce_dice: return with_dice(weighted_bce(tape, logits, target, cfg));
  }
  throw ConfigError("unhandled loss kind");
}

MaskLoss mask_loss(Tape& tape, const BranchLogits& preds, const BranchTargets& targets,
                   const BranchSet& enabled, const LossConfig& cfg) {
  cfg.validate();
  MaskLoss out;
  for (Branch b : kAllBranches) {
    if (!enabled.has(b)) continue;
    if (!preds[b]) throw ConfigError(std::string("no prediction for enabled branch ") + branch_name(b));
    const auto idx = static_cast<std::size_t>(b);
    Var term = branch_loss(tape, cfg.kind(b), *preds[b], targets[b], cfg);
    if (cfg.term_weights[idx] != 1.0) term = scale(tape, term, cfg.term_weights[idx]);
    out.terms[idx] = term.value().values()[0];
    out.total = out.total ? add(tape, out.total, term) : term;
  }
  return out;
}

}  // namespace bsq
