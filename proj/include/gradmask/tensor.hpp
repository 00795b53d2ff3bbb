#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace gradmask {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_to_string(const Shape& shape);

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // empty until first accumulation
  bool requires_grad = false;
  bool is_leaf = true;
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this->grad and accumulates into parents' grads.
  std::function<void(Node&)> backward_fn;

  Node(Shape s, std::vector<double> v, bool rg);
  ~Node();
  Node(const Node&) = delete;
  Node& operator=(const Node&) = delete;

  std::vector<double>& ensure_grad();
};

}  // namespace detail

/// Dense row-major float64 array that optionally participates in a
/// reverse-mode autodiff graph. Copies share the underlying node.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t dim(std::size_t axis) const;
  std::size_t rank() const { return shape().size(); }
  std::size_t numel() const;

  std::span<const double> values() const;
  /// Direct write access. Only meaningful on leaves (parameters, inputs);
  /// mutating an interior node does not update its dependents.
  std::span<double> mutable_values();
  double item() const;
  double at(std::size_t i) const { return values()[i]; }

  bool requires_grad() const;
  bool is_leaf() const;
  /// Empty span when no gradient has been accumulated.
  std::span<const double> grad() const;
  bool has_grad() const;
  void zero_grad();

  /// Reverse-mode sweep from this scalar. Throws ContractError if numel() != 1.
  void backward() const;

  /// Same values, no autodiff history.
  Tensor detach() const;

  const std::shared_ptr<detail::Node>& node() const { return node_; }
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

 private:
  std::shared_ptr<detail::Node> node_;
};

/// Nodes reachable from a root in the order backward visits them (reverse
/// topological order: root first, every node before its parents).
struct Tape {
  std::vector<detail::Node*> order;
};

Tape build_tape(const Tensor& root);

/// While alive, newly created op outputs record no history.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_mode_enabled();

/// Builds an op output. Records parents and the backward closure only when
/// grad mode is on and some parent requires grad.
Tensor make_result(Shape shape, std::vector<double> values,
                   std::vector<Tensor> parents,
                   std::function<void(detail::Node&)> backward_fn);

/// Allocator-level accounting of live tensor storage (values + grads).
struct MemoryStats {
  std::size_t live_bytes = 0;
  std::size_t peak_bytes = 0;
};

MemoryStats memory_stats();
void reset_peak_memory();

}  // namespace gradmask
