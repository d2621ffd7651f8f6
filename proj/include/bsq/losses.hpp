#pragma once

#include <array>
#include <optional>
#include <string>

#include "bsq/field.hpp"
#include "bsq/tape.hpp"

namespace bsq {

enum class Branch { segmentation = 0, boundary = 1, contraction = 2, expansion = 3 };
inline constexpr std::size_t kBranchCount = 4;
inline constexpr std::array<Branch, kBranchCount> kAllBranches = {
    Branch::segmentation, Branch::boundary, Branch::contraction, Branch::expansion};

// Short names used in configs and on the command line: seg, bnd, con, exp.
const char* branch_name(Branch b) noexcept;

/// Subset of supervised branches. The segmentation branch is mandatory.
struct BranchSet {
  std::array<bool, kBranchCount> on = {true, true, true, true};

  bool has(Branch b) const noexcept { return on[static_cast<std::size_t>(b)]; }
  void set(Branch b, bool v) noexcept { on[static_cast<std::size_t>(b)] = v; }
  bool any_squeeze() const noexcept {
    return has(Branch::contraction) || has(Branch::expansion);
  }
  bool uses_bsm() const noexcept { return any_squeeze() || has(Branch::boundary); }

  // Parses "seg,bnd,con,exp" style lists. Throws ConfigError on unknown
  // names or when "seg" is missing.
  static BranchSet parse(const std::string& text);
  std::string to_string() const;
  bool operator==(const BranchSet&) const = default;
};

enum class LossKind { bce, weighted_bce, dice, bce_dice, weighted_bce_dice };
enum class PosWeightMode { fixed, auto_balance };

const char* loss_kind_name(LossKind k) noexcept;
LossKind parse_loss_kind(const std::string& s);

struct LossConfig {
  double dice_smooth = 1.0;
  PosWeightMode pos_weight_mode = PosWeightMode::auto_balance;
  double fixed_pos_weight = 1.0;  // used in fixed mode only
  // Weight of the Dice part in the "+dice" combinations.
  double combo_dice_weight = 1.0;
  std::array<LossKind, kBranchCount> kinds = {LossKind::bce, LossKind::bce_dice, LossKind::dice,
                                              LossKind::dice};
  std::array<double, kBranchCount> term_weights = {1.0, 1.0, 1.0, 1.0};

  LossKind kind(Branch b) const noexcept { return kinds[static_cast<std::size_t>(b)]; }
  void validate() const;
};

// Mean binary cross-entropy on logits, in the log-sum-exp stable form.
Var bce(Tape& tape, const Var& logits, const BinaryMask& target);

// BCE with the positive term scaled by #neg/#pos (auto-balance) or a fixed
// weight; falls back to plain BCE when the target has no positives.
Var weighted_bce(Tape& tape, const Var& logits, const BinaryMask& target,
                 const LossConfig& cfg = {});

// 1 - (2 sum(p t) + s) / (sum(p) + sum(t) + s), p = sigmoid(logits).
Var dice_loss(Tape& tape, const Var& logits, const BinaryMask& target, double smooth = 1.0);

Var branch_loss(Tape& tape, LossKind kind, const Var& logits, const BinaryMask& target,
                const LossConfig& cfg);

struct BranchLogits {
  std::array<std::optional<Var>, kBranchCount> logits;
  std::optional<Var>& operator[](Branch b) { return logits[static_cast<std::size_t>(b)]; }
  const std::optional<Var>& operator[](Branch b) const {
    return logits[static_cast<std::size_t>(b)];
  }
};

struct BranchTargets {
  std::array<BinaryMask, kBranchCount> masks;
  BinaryMask& operator[](Branch b) { return masks[static_cast<std::size_t>(b)]; }
  const BinaryMask& operator[](Branch b) const { return masks[static_cast<std::size_t>(b)]; }
};

struct MaskLoss {
  Var total;
  std::array<double, kBranchCount> terms = {0.0, 0.0, 0.0, 0.0};  // weighted, 0 if disabled
  double total_value() const { return total.value().values()[0]; }
};

// Sum of the enabled branch terms. Throws ConfigError when an enabled
// branch has no prediction.
MaskLoss mask_loss(Tape& tape, const BranchLogits& preds, const BranchTargets& targets,
                   const BranchSet& enabled, const LossConfig& cfg);

double sigmoid(double z) noexcept;

}  // namespace bsq
