#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace gfm {

using Shape = std::vector<std::size_t>;

std::string to_string(const Shape& shape);

/// Thrown when operand shapes are incompatible with an operation.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

namespace detail {
struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until first touched by backward
  bool requires_grad = false;
  std::optional<std::size_t> node_id;
};
}  // namespace detail

/// Dense row-major array of doubles with optional gradient buffer.
///
/// Tensor is a shared handle: copies alias the same storage. Use clone() for
/// an independent copy. Most operations expect rank-2 tensors; vectors are
/// represented as 1 x n rows or n x 1 columns.
class Tensor {
 public:
  Tensor();
  Tensor(Shape shape, std::vector<double> data, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  static Tensor matrix(std::size_t rows, std::size_t cols,
                       std::vector<double> data, bool requires_grad = false);

  const Shape& shape() const { return impl_->shape; }
  std::size_t rank() const { return impl_->shape.size(); }
  std::size_t numel() const { return impl_->data.size(); }
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<const double> data() const { return impl_->data; }
  std::span<double> mutable_data() { return impl_->data; }
  double item() const;
  double at(std::size_t r, std::size_t c) const;

  bool requires_grad() const { return impl_->requires_grad; }
  void set_requires_grad(bool value) { impl_->requires_grad = value; }

  bool has_grad() const { return !impl_->grad.empty(); }
  /// Gradient buffer; empty span when no gradient has been accumulated.
  std::span<const double> grad() const { return impl_->grad; }
  /// Gradient with absent buffers reported as exact zeros.
  std::vector<double> grad_or_zero() const;
  void zero_grad() { impl_->grad.clear(); }
  /// Allocates (zero-filled) on first touch.
  std::span<double> grad_buffer();

  std::optional<std::size_t> node_id() const { return impl_->node_id; }

  Tensor clone() const;
  Tensor detach() const;

  bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }
  const std::shared_ptr<detail::TensorImpl>& impl() const { return impl_; }

 private:
  std::shared_ptr<detail::TensorImpl> impl_;
};

/// Ordered record of differentiable operations for reverse-mode gradients.
///
/// Constructing a tape makes it the active record of the calling thread until
/// it is destroyed. Operations record onto the active tape only when at least
/// one input requires a gradient.
class GradientTape {
 public:
  using BackwardFn = std::function<void(std::span<const double> grad_out)>;

  GradientTape();
  ~GradientTape();
  GradientTape(const GradientTape&) = delete;
  GradientTape& operator=(const GradientTape&) = delete;

  static GradientTape* active();

  void record(Tensor& output, std::vector<Tensor> inputs, BackwardFn fn);

  /// Propagates d(loss)/d(.) to every recorded tensor, then clears the tape.
  void backward(const Tensor& loss);

  std::size_t size() const { return nodes_.size(); }
  void clear();

 private:
  struct Node {
    std::shared_ptr<detail::TensorImpl> output;
    std::vector<Tensor> inputs;
    BackwardFn fn;
  };
  std::vector<Node> nodes_;
  GradientTape* previous_ = nullptr;
};

/// backward() on the thread's active tape.
void backward(const Tensor& loss);

namespace detail {
/// Active tape if any input requires a gradient, otherwise null.
GradientTape* recording(std::initializer_list<const Tensor*> inputs);
}  // namespace detail

/// Max over coordinates of |analytic - central difference| / max(1, |analytic|).
/// `f` must be scalar-valued; it is re-evaluated without a tape for the
/// numeric side.
double finite_difference_check(const std::function<Tensor(const Tensor&)>& f,
                               Tensor x, double eps = 1e-5);

/// Same check over every coordinate of every tensor in `params`.
double finite_difference_check(const std::function<Tensor()>& f,
                               std::span<Tensor> params, double eps = 1e-5);

}  // namespace gfm
