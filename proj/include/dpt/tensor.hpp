#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace dpt {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

// 64-byte aligned storage; vectorised kernels then see the same alignment
// for a given shape on every run.
template <typename T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlign{64};
  AlignedAllocator() = default;
  template <typename U>
  AlignedAllocator(const AlignedAllocator<U>&) {}
  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlign)); }
  void deallocate(T* p, std::size_t) { ::operator delete(p, kAlign); }
  template <typename U>
  bool operator==(const AlignedAllocator<U>&) const { return true; }
};

using Buffer = std::vector<double, AlignedAllocator<double>>;

namespace detail {

// One recorded value in the autodiff graph. Non-leaf nodes keep their
// parents and a closure that pushes this node's grad into them.
struct Node {
  Shape shape;
  Buffer data;
  Buffer grad;  // empty until first accumulation
  bool requires_grad = false;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  void ensure_grad();
};

}  // namespace detail

// Handle to a dense row-major array of doubles. Copies share storage; use
// clone() for a deep copy.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, const std::vector<double>& data, bool requires_grad = false);
  static Tensor from(Shape shape, Buffer data, bool requires_grad = false);
  static Tensor from(Shape shape, std::initializer_list<double> data, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t dim(std::size_t axis) const;
  std::size_t rank() const { return shape().size(); }
  std::size_t numel() const;

  std::span<const double> data() const;
  // Parameters are updated in place by the optimizer; everything else is
  // treated as immutable once produced.
  std::span<double> mutable_data();
  double item() const;
  double operator[](std::size_t flat) const { return data()[flat]; }

  bool requires_grad() const;
  void set_requires_grad(bool on);
  bool has_grad() const;
  // Zero-filled view when no gradient has been accumulated yet.
  std::span<const double> grad() const;
  std::span<double> mutable_grad();
  void zero_grad();

  Tensor clone() const;   // deep copy of the values, no graph
  Tensor detach() const;  // shares nothing with the graph

  // Runs reverse-mode accumulation from this scalar through the recorded
  // graph, then releases the graph.
  void backward() const;

  const std::shared_ptr<detail::Node>& node() const { return node_; }
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

 private:
  std::shared_ptr<detail::Node> node_;
};

// While alive, newly produced tensors record no graph on this thread.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

// While alive, conv2d and matmul skip their arithmetic and only tally
// multiply-accumulates. Used for cost estimation at large input shapes.
class MacCounter {
 public:
  MacCounter();
  ~MacCounter();
  MacCounter(const MacCounter&) = delete;
  MacCounter& operator=(const MacCounter&) = delete;

  unsigned long long total() const { return total_; }

 private:
  friend void count_macs(unsigned long long);
  unsigned long long total_ = 0;
  MacCounter* previous_;
};

// Returns true when an active MacCounter absorbed the count, in which case
// the caller skips the arithmetic.
bool counting_macs();
void count_macs(unsigned long long macs);

bool all_finite(const Tensor& t);
// Throws NumericError naming `where` when any value is NaN or infinite.
void check_finite(const Tensor& t, const std::string& where);

namespace detail {

// Builds a result node. The backward closure is only kept when some input
// requires grad and grad recording is enabled.
Tensor make_result(const char* op, Shape shape, Buffer data,
                   std::initializer_list<Tensor> inputs,
                   std::function<void(Node&)> backward_fn);
Tensor make_result(const char* op, Shape shape, Buffer data,
                   const std::vector<Tensor>& inputs,
                   std::function<void(Node&)> backward_fn);

}  // namespace detail

}  // namespace dpt
