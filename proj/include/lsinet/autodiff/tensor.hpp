#pragma once

// Dense tensors with define-by-run reverse-mode differentiation.
//
// A Tensor is a cheap handle onto a graph node. Operations in ops.hpp create
// new nodes that remember their parents and a backward rule; calling
// backward() on a scalar walks the graph once in reverse topological order.
// The graph is rebuilt on every forward pass.

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace lsinet::ad {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);

template <typename T>
struct Node {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;  // empty until first accumulation
  bool requires_grad = false;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this->grad and accumulates into parents' grads.
  std::function<void(Node&)> backward;

  bool is_leaf() const { return parents.empty(); }
  // Zero-initialises grad on first use.
  std::vector<T>& grad_buffer();
};

template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, T value, bool requires_grad = false);
  static Tensor from_data(Shape shape, std::vector<T> data,
                          bool requires_grad = false);
  static Tensor scalar(T value, bool requires_grad = false);

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const;

  std::span<const T> data() const;
  // Writable view. Only for parameter updates and test setup; never mutate a
  // tensor that an un-differentiated graph still depends on.
  std::span<T> mutable_data();
  T item() const;
  T at(std::size_t flat_index) const { return data()[flat_index]; }

  bool requires_grad() const;
  void set_requires_grad(bool flag);

  // Empty span when no gradient has been accumulated yet.
  std::span<const T> grad() const;
  bool has_grad() const;
  void zero_grad();

  // Populates grad on every requires_grad leaf reachable from this scalar.
  // Leaf gradients accumulate across calls.
  void backward() const;

  // Same values, no history.
  Tensor detach() const;
  Tensor clone() const;

  const char* op_name() const;

  // Internal: used by ops to build the graph.
  explicit Tensor(std::shared_ptr<Node<T>> node) : node_(std::move(node)) {}
  const std::shared_ptr<Node<T>>& node() const { return node_; }

 private:
  std::shared_ptr<Node<T>> node_;
};

/// Keeps freed tensor buffers in the heap instead of returning them to the
/// OS after every step (glibc only; no-op elsewhere). Call once from main.
void tune_allocator();

/// False inside a NoGradGuard scope on this thread: ops record no history.
bool grad_enabled();

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

extern template struct Node<float>;
extern template struct Node<double>;
extern template class Tensor<float>;
extern template class Tensor<double>;

}  // namespace lsinet::ad
