#include "dpt/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_set>

#include "dpt/errors.hpp"

namespace dpt {

namespace {
thread_local bool g_grad_enabled = true;
thread_local MacCounter* g_mac_counter = nullptr;
}  // namespace

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto e : shape) n *= e;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

void detail::Node::ensure_grad() {
  if (grad.empty()) grad.assign(data.size(), 0.0);
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  auto n = dpt::numel(shape);
  return from(std::move(shape), Buffer(n, value), requires_grad);
}

Tensor Tensor::from(Shape shape, const std::vector<double>& data, bool requires_grad) {
  return from(std::move(shape), Buffer(data.begin(), data.end()), requires_grad);
}

Tensor Tensor::from(Shape shape, std::initializer_list<double> data, bool requires_grad) {
  return from(std::move(shape), Buffer(data), requires_grad);
}

Tensor Tensor::from(Shape shape, Buffer data, bool requires_grad) {
  if (dpt::numel(shape) != data.size()) {
    throw DimensionError("tensor data length " + std::to_string(data.size()) +
                         " does not match shape " + shape_str(shape));
  }
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

const Shape& Tensor::shape() const { return node_->shape; }

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= node_->shape.size()) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for " +
                         shape_str(node_->shape));
  }
  return node_->shape[axis];
}

std::size_t Tensor::numel() const { return node_->data.size(); }

std::span<const double> Tensor::data() const { return node_->data; }

std::span<double> Tensor::mutable_data() { return node_->data; }

double Tensor::item() const {
  if (numel() != 1) throw DimensionError("item() on tensor of shape " + shape_str(shape()));
  return node_->data[0];
}

bool Tensor::requires_grad() const { return node_->requires_grad; }

void Tensor::set_requires_grad(bool on) { node_->requires_grad = on; }

bool Tensor::has_grad() const { return !node_->grad.empty(); }

std::span<const double> Tensor::grad() const {
  node_->ensure_grad();
  return node_->grad;
}

std::span<double> Tensor::mutable_grad() {
  node_->ensure_grad();
  return node_->grad;
}

void Tensor::zero_grad() { node_->grad.clear(); }

Tensor Tensor::clone() const { return from(shape(), node_->data, false); }

Tensor Tensor::detach() const { return clone(); }

void Tensor::backward() const {
  if (numel() != 1) {
    throw UsageError("backward() requires a scalar, got shape " + shape_str(shape()));
  }
  // Iterative post-order DFS gives a topological order with each node once.
  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> visited;
  std::vector<std::pair<detail::Node*, std::size_t>> stack;
  stack.emplace_back(node_.get(), 0);
  visited.insert(node_.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      detail::Node* parent = node->parents[next++].get();
      if (parent->requires_grad && visited.insert(parent).second) {
        stack.emplace_back(parent, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  node_->ensure_grad();
  node_->grad[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node* node = *it;
    if (node->backward_fn) {
      node->ensure_grad();
      node->backward_fn(*node);
    }
  }
  // Release the tape: interior nodes drop their closures and parents.
  for (detail::Node* node : order) {
    if (node->backward_fn) {
      node->backward_fn = nullptr;
      node->parents.clear();
    }
  }
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

bool grad_enabled() { return g_grad_enabled; }

MacCounter::MacCounter() : previous_(g_mac_counter) { g_mac_counter = this; }
MacCounter::~MacCounter() { g_mac_counter = previous_; }

bool counting_macs() { return g_mac_counter != nullptr; }

void count_macs(unsigned long long macs) {
  if (g_mac_counter) g_mac_counter->total_ += macs;
}

bool all_finite(const Tensor& t) {
  auto d = t.data();
  return std::all_of(d.begin(), d.end(), [](double x) { return std::isfinite(x); });
}

void check_finite(const Tensor& t, const std::string& where) {
  if (!all_finite(t)) throw NumericError("non-finite value in " + where);
}

namespace detail {

namespace {
template <typename Range>
Tensor make_result_impl(const char* op, Shape shape, Buffer data,
                        const Range& inputs, std::function<void(Node&)> backward_fn) {
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  node->op = op;
  if (g_grad_enabled) {
    bool any = false;
    for (const Tensor& in : inputs) any = any || in.requires_grad();
    if (any) {
      node->requires_grad = true;
      for (const Tensor& in : inputs) node->parents.push_back(in.node());
      node->backward_fn = std::move(backward_fn);
    }
  }
  return Tensor(std::move(node));
}
}  // namespace

Tensor make_result(const char* op, Shape shape, Buffer data,
                   std::initializer_list<Tensor> inputs, std::function<void(Node&)> backward_fn) {
  return make_result_impl(op, std::move(shape), std::move(data), inputs, std::move(backward_fn));
}

Tensor make_result(const char* op, Shape shape, Buffer data,
                   const std::vector<Tensor>& inputs, std::function<void(Node&)> backward_fn) {
  return make_result_impl(op, std::move(shape), std::move(data), inputs, std::move(backward_fn));
}

}  // namespace detail

}  // namespace dpt
