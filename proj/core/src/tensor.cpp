#include "gfm/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace gfm {

namespace {
thread_local GradientTape* g_active_tape = nullptr;

std::size_t product(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}
}  // namespace

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor::Tensor() : Tensor(Shape{1, 1}, std::vector<double>{0.0}) {}

Tensor::Tensor(Shape shape, std::vector<double> data, bool requires_grad)
    : impl_(std::make_shared<detail::TensorImpl>()) {
  if (shape.empty()) throw DimensionError("tensor shape must have rank >= 1");
  for (auto d : shape) {
    if (d == 0) throw DimensionError("tensor dimensions must be positive, got " + to_string(shape));
  }
  if (product(shape) != data.size()) {
    throw DimensionError("shape " + to_string(shape) + " does not match " +
                         std::to_string(data.size()) + " values");
  }
  impl_->shape = std::move(shape);
  impl_->data = std::move(data);
  impl_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const auto n = product(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return Tensor({1, 1}, {value}, requires_grad);
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols,
                      std::vector<double> data, bool requires_grad) {
  return Tensor({rows, cols}, std::move(data), requires_grad);
}

std::size_t Tensor::rows() const {
  if (rank() != 2) throw DimensionError("expected rank-2 tensor, got " + to_string(shape()));
  return impl_->shape[0];
}

std::size_t Tensor::cols() const {
  if (rank() != 2) throw DimensionError("expected rank-2 tensor, got " + to_string(shape()));
  return impl_->shape[1];
}

double Tensor::item() const {
  if (numel() != 1) throw DimensionError("item() on non-scalar tensor " + to_string(shape()));
  return impl_->data[0];
}

double Tensor::at(std::size_t r, std::size_t c) const {
  return impl_->data[r * cols() + c];
}

std::vector<double> Tensor::grad_or_zero() const {
  if (impl_->grad.empty()) return std::vector<double>(numel(), 0.0);
  return impl_->grad;
}

std::span<double> Tensor::grad_buffer() {
  if (impl_->grad.empty()) impl_->grad.assign(numel(), 0.0);
  return impl_->grad;
}

Tensor Tensor::clone() const {
  Tensor copy(impl_->shape, impl_->data, impl_->requires_grad);
  copy.impl_->grad = impl_->grad;
  return copy;
}

Tensor Tensor::detach() const { return Tensor(impl_->shape, impl_->data, false); }

GradientTape::GradientTape() : previous_(g_active_tape) { g_active_tape = this; }

GradientTape::~GradientTape() {
  clear();
  g_active_tape = previous_;
}

GradientTape* GradientTape::active() { return g_active_tape; }

void GradientTape::record(Tensor& output, std::vector<Tensor> inputs, BackwardFn fn) {
  output.set_requires_grad(true);
  output.impl()->node_id = nodes_.size();
  nodes_.push_back(Node{output.impl(), std::move(inputs), std::move(fn)});
}

void GradientTape::backward(const Tensor& loss) {
  if (loss.numel() != 1) {
    throw DimensionError("backward() needs a scalar loss, got " + to_string(loss.shape()));
  }
  if (loss.requires_grad()) {
    Tensor seed = loss;
    seed.grad_buffer()[0] += 1.0;
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
      if (it->output->grad.empty()) continue;
      it->fn(it->output->grad);
    }
  }
  clear();
}

void GradientTape::clear() {
  for (auto& node : nodes_) node.output->node_id.reset();
  nodes_.clear();
}

void backward(const Tensor& loss) {
  auto* tape = GradientTape::active();
  if (!tape) throw std::logic_error("backward() called without an active GradientTape");
  tape->backward(loss);
}

namespace detail {
GradientTape* recording(std::initializer_list<const Tensor*> inputs) {
  auto* tape = GradientTape::active();
  if (!tape) return nullptr;
  for (const auto* t : inputs) {
    if (t && t->requires_grad()) return tape;
  }
  return nullptr;
}
}  // namespace detail

double finite_difference_check(const std::function<Tensor(const Tensor&)>& f,
                               Tensor x, double eps) {
  std::vector<Tensor> params{x};
  return finite_difference_check([&] { return f(x); }, params, eps);
}

double finite_difference_check(const std::function<Tensor()>& f,
                               std::span<Tensor> params, double eps) {
  if (!(eps > 0.0) || !std::isfinite(eps)) {
    throw std::invalid_argument("finite_difference_check: eps must be positive and finite");
  }
  std::vector<bool> previous_flags;
  for (auto& p : params) {
    previous_flags.push_back(p.requires_grad());
    p.set_requires_grad(true);
    p.zero_grad();
  }
  {
    GradientTape tape;
    Tensor loss = f();
    tape.backward(loss);
  }
  double worst = 0.0;
  for (auto& p : params) {
    const auto analytic = p.grad_or_zero();
    auto values = p.mutable_data();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double original = values[i];
      values[i] = original + eps;
      const double plus = f().item();
      values[i] = original - eps;
      const double minus = f().item();
      values[i] = original;
      const double numeric = (plus - minus) / (2.0 * eps);
      const double err = std::abs(analytic[i] - numeric) / std::max(1.0, std::abs(analytic[i]));
      worst = std::max(worst, err);
    }
    p.zero_grad();
  }
  for (std::size_t i = 0; i < params.size(); ++i) params[i].set_requires_grad(previous_flags[i]);
  return worst;
}

}  // namespace gfm
