#include "bsq/tape.hpp"

#include <algorithm>

#include "bsq/error.hpp"

namespace bsq {

Var Tape::constant(FeatureField value) { return record(std::move(value), false, nullptr); }

Var Tape::variable(FeatureField value) { return record(std::move(value), training(), nullptr); }

Var Tape::record(FeatureField value, bool requires_grad, std::function<void(Node&)> rule) {
  if (!value.all_finite()) throw NumericError("non-finite value produced in forward pass");
  auto node = std::make_unique<Node>();
  node->field = std::move(value);
  node->requires_grad = training() && requires_grad;
  if (node->requires_grad) node->rule = std::move(rule);
  nodes_.push_back(std::move(node));
  return Var(nodes_.back().get());
}

void Tape::backward(const Var& loss) {
  if (!training()) throw TapeError("backward on an eval-mode tape");
  if (backward_done_) throw TapeError("backward called twice without reset");
  if (!loss || loss.shape() != Shape3{1, 1, 1}) throw TapeError("loss must be a scalar node");
  auto owned = std::find_if(nodes_.begin(), nodes_.end(),
                            [&](const auto& n) { return n.get() == loss.node(); });
  if (owned == nodes_.end()) throw TapeError("loss was not recorded on this tape");

  backward_done_ = true;
  if (!loss.requires_grad()) return;
  loss.node()->field.grad()[0] = 1.0;
  for (auto it = std::make_reverse_iterator(std::next(owned)); it != nodes_.rend(); ++it) {
    Node& node = **it;
    if (!node.requires_grad || !node.field.has_grad() || !node.rule) continue;
    node.rule(node);
  }
  for (const auto& node : nodes_) {
    if (!node->field.all_finite()) throw NumericError("non-finite gradient in backward pass");
  }
}

void Tape::reset() {
  for (auto& node : nodes_) node->field.clear_grad();
  backward_done_ = false;
}

void accumulate_grad(Node& node, std::span<const double> g) {
  auto dst = node.field.grad();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += g[i];
}

}  // namespace bsq
