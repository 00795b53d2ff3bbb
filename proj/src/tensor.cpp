#include "gradmask/tensor.hpp"

#include <atomic>
#include <sstream>
#include <unordered_set>

#include "gradmask/errors.hpp"
#include "gradmask/rng.hpp"

namespace gradmask {

namespace {

std::atomic<std::size_t> g_live_bytes{0};
std::atomic<std::size_t> g_peak_bytes{0};
thread_local bool t_grad_enabled = true;

void track_alloc(std::size_t bytes) {
  const std::size_t now = g_live_bytes.fetch_add(bytes) + bytes;
  std::size_t peak = g_peak_bytes.load();
  while (now > peak && !g_peak_bytes.compare_exchange_weak(peak, now)) {
  }
}

void track_free(std::size_t bytes) { g_live_bytes.fetch_sub(bytes); }

}  // namespace

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string shape_to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::uint64_t SplitMix64::below(std::uint64_t bound) {
  if (bound == 0) throw ParameterError("SplitMix64::below: bound must be positive");
  const std::uint64_t threshold = (0 - bound) % bound;
  for (;;) {
    const __uint128_t m = static_cast<__uint128_t>(next()) * bound;
    if (static_cast<std::uint64_t>(m) >= threshold) return static_cast<std::uint64_t>(m >> 64);
  }
}

std::vector<std::size_t> random_permutation(std::size_t n, SplitMix64& rng) {
  std::vector<std::size_t> perm(n);
  for (std::size_t i = 0; i < n; ++i) perm[i] = i;
  for (std::size_t i = n; i > 1; --i) {
    const std::size_t j = rng.below(i);
    std::swap(perm[i - 1], perm[j]);
  }
  return perm;
}

namespace detail {

Node::Node(Shape s, std::vector<double> v, bool rg)
    : shape(std::move(s)), value(std::move(v)), requires_grad(rg) {
  if (value.size() != shape_numel(shape)) {
    throw DimensionError("tensor storage of " + std::to_string(value.size()) +
                         " elements does not match shape " + shape_to_string(shape));
  }
  track_alloc(value.size() * sizeof(double));
}

Node::~Node() { track_free((value.size() + grad.size()) * sizeof(double)); }

std::vector<double>& Node::ensure_grad() {
  if (grad.empty() && !value.empty()) {
    grad.assign(value.size(), 0.0);
    track_alloc(grad.size() * sizeof(double));
  }
  return grad;
}

}  // namespace detail

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const std::size_t n = shape_numel(shape);
  return from(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
  return Tensor(std::make_shared<detail::Node>(std::move(shape), std::move(values), requires_grad));
}

Tensor Tensor::scalar(double value, bool requires_grad) { return from({1}, {value}, requires_grad); }

const Shape& Tensor::shape() const { return node_->shape; }

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= rank()) throw DimensionError("axis out of range for shape " + shape_to_string(shape()));
  return node_->shape[axis];
}

std::size_t Tensor::numel() const { return node_->value.size(); }

std::span<const double> Tensor::values() const { return node_->value; }

std::span<double> Tensor::mutable_values() { return node_->value; }

double Tensor::item() const {
  if (numel() != 1) throw ContractError("item() on tensor of shape " + shape_to_string(shape()));
  return node_->value[0];
}

bool Tensor::requires_grad() const { return node_->requires_grad; }

bool Tensor::is_leaf() const { return node_->is_leaf; }

std::span<const double> Tensor::grad() const { return node_->grad; }

bool Tensor::has_grad() const { return !node_->grad.empty(); }

void Tensor::zero_grad() {
  auto& g = node_->grad;
  std::fill(g.begin(), g.end(), 0.0);
}

Tensor Tensor::detach() const { return Tensor::from(shape(), node_->value, false); }

Tape build_tape(const Tensor& root) {
  // Iterative post-order DFS; reversing it yields a topological order with
  // the root first.
  Tape tape;
  std::unordered_set<const detail::Node*> visited;
  struct Frame {
    detail::Node* node;
    std::size_t next_parent;
  };
  std::vector<Frame> stack;
  if (!root.node()->requires_grad) return tape;
  stack.push_back({root.node().get(), 0});
  visited.insert(root.node().get());
  std::vector<detail::Node*> post;
  while (!stack.empty()) {
    Frame& top = stack.back();
    if (top.next_parent < top.node->parents.size()) {
      detail::Node* p = top.node->parents[top.next_parent++].get();
      if (p->requires_grad && visited.insert(p).second) stack.push_back({p, 0});
    } else {
      post.push_back(top.node);
      stack.pop_back();
    }
  }
  tape.order.assign(post.rbegin(), post.rend());
  return tape;
}

void Tensor::backward() const {
  if (numel() != 1) {
    throw ContractError("backward() requires a scalar loss, got shape " + shape_to_string(shape()));
  }
  if (!requires_grad()) throw ContractError("backward() on a tensor that does not require grad");
  Tape tape = build_tape(*this);
  node_->ensure_grad()[0] += 1.0;
  for (detail::Node* n : tape.order) {
    if (n->backward_fn && !n->grad.empty()) n->backward_fn(*n);
  }
  // Interior gradients are scratch; only leaves keep theirs.
  for (detail::Node* n : tape.order) {
    if (!n->is_leaf && !n->grad.empty()) {
      track_free(n->grad.size() * sizeof(double));
      std::vector<double>().swap(n->grad);
    }
  }
}

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }

bool grad_mode_enabled() { return t_grad_enabled; }

Tensor make_result(Shape shape, std::vector<double> values, std::vector<Tensor> parents,
                   std::function<void(detail::Node&)> backward_fn) {
  bool needs = false;
  if (t_grad_enabled) {
    for (const auto& p : parents) needs = needs || p.requires_grad();
  }
  auto node = std::make_shared<detail::Node>(std::move(shape), std::move(values), needs);
  node->is_leaf = false;
  if (needs) {
    node->parents.reserve(parents.size());
    for (auto& p : parents) node->parents.push_back(p.node());
    node->backward_fn = std::move(backward_fn);
  }
  return Tensor(std::move(node));
}

MemoryStats memory_stats() { return {g_live_bytes.load(), g_peak_bytes.load()}; }

void reset_peak_memory() { g_peak_bytes.store(g_live_bytes.load()); }

}  // namespace gradmask
