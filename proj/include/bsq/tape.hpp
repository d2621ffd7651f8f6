#pragma once

#include <functional>
#include <memory>
#include <span>
#include <utility>
#include <vector>

#include "bsq/field.hpp"

namespace bsq {

// One recorded value on a tape. `rule` reads `field.grad()` and accumulates
// into the gradients of the nodes (or parameters) it was computed from.
struct Node {
  FeatureField field;
  bool requires_grad = false;
  std::function<void(Node&)> rule;
};

/// Non-owning handle to a node recorded on a Tape. Valid while the tape lives.
class Var {
 public:
  Var() = default;

  const FeatureField& value() const { return node_->field; }
  const Shape3& shape() const { return node_->field.shape(); }
  bool requires_grad() const { return node_ != nullptr && node_->requires_grad; }
  // Empty when backward never reached this node.
  std::span<const double> grad() const { return std::as_const(node_->field).grad(); }

  Node* node() const noexcept { return node_; }
  explicit operator bool() const noexcept { return node_ != nullptr; }

 private:
  friend class Tape;
  explicit Var(Node* node) : node_(node) {}
  Node* node_ = nullptr;
};

/// Define-by-run reverse-mode tape. A fresh tape is built for every forward
/// pass; in eval mode nothing is retained for backward.
class Tape {
 public:
  enum class Mode { train, eval };

  explicit Tape(Mode mode = Mode::train) : mode_(mode) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool training() const noexcept { return mode_ == Mode::train; }
  std::size_t size() const noexcept { return nodes_.size(); }

  // Leaf that never receives a gradient.
  Var constant(FeatureField value);
  // Leaf whose gradient is populated by backward (train mode only).
  Var variable(FeatureField value);

  // Used by the layer implementations. Throws NumericError if `value`
  // contains a non-finite entry.
  Var record(FeatureField value, bool requires_grad, std::function<void(Node&)> rule);

  // Seeds d(loss)/d(loss) = 1 and replays the rules in reverse recording
  // order. `loss` must be a 1x1x1 node of this tape. A second call throws
  // TapeError until reset() is called.
  void backward(const Var& loss);

  // Drops every node gradient so backward may run again.
  void reset();

 private:
  Mode mode_;
  std::vector<std::unique_ptr<Node>> nodes_;
  bool backward_done_ = false;
};

// Adds `g` into the gradient buffer of `node`, allocating it on first use.
void accumulate_grad(Node& node, std::span<const double> g);

}  // namespace bsq
