#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace cts {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {
struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  bool requires_grad = false;
  std::vector<double> grad;  // empty until first accumulation
};
}  // namespace detail

/// Dense row-major array of 64-bit floats.
///
/// A Tensor is a cheap handle: copies share storage, which is what lets the
/// tape refer to the very tensors a forward pass produced. Forward results are
/// treated as immutable; only leaves (parameters) are updated in place, by the
/// optimizer, between tapes.
class Tensor {
 public:
  Tensor();
  explicit Tensor(Shape shape, bool requires_grad = false);
  Tensor(Shape shape, std::vector<double> data, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  std::size_t rank() const { return impl_->shape.size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const { return impl_->data.size(); }

  std::span<const double> data() const { return impl_->data; }
  std::span<double> mutable_data() { return impl_->data; }
  double operator[](std::size_t i) const { return impl_->data[i]; }
  double item() const;

  bool requires_grad() const { return impl_->requires_grad; }
  Tensor& set_requires_grad(bool value);

  bool has_grad() const { return !impl_->grad.empty(); }
  std::span<const double> grad() const { return impl_->grad; }
  /// Grad storage, allocated (zero-filled) on first use. Gradient state lives
  /// behind the handle, so this is available on const tensors.
  std::span<double> grad_buffer() const;
  void zero_grad() const { impl_->grad.clear(); }

  /// Deep copy without gradient state.
  Tensor clone() const;

  bool same_as(const Tensor& other) const { return impl_ == other.impl_; }
  const detail::TensorImpl* id() const { return impl_.get(); }

 private:
  std::shared_ptr<detail::TensorImpl> impl_;
};

/// Records differentiable operations in execution order.
///
/// Operations only record while a tape is active on the calling thread (see
/// TapeScope) and at least one input requires grad. The tape is rebuilt for
/// every forward pass.
class Tape {
 public:
  using BackwardFn = std::function<void(std::span<const double> grad_out)>;

  struct Record {
    std::string op;
    std::vector<Tensor> inputs;
    Tensor output;
    BackwardFn backward;
  };

  void record(std::string op, std::vector<Tensor> inputs, Tensor output, BackwardFn backward);

  /// Seeds d(loss)/d(loss) = 1 and runs every record up to the loss in reverse
  /// order, each exactly once. Returns the number of records visited.
  std::size_t backward(const Tensor& loss);

  std::size_t size() const { return records_.size(); }
  const std::vector<Record>& records() const { return records_; }
  void clear() { records_.clear(); }

 private:
  std::vector<Record> records_;
};

/// Makes `tape` the active recording tape of this thread for the scope's life.
class TapeScope {
 public:
  explicit TapeScope(Tape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* previous_;
};

Tape* active_tape();

/// Runs backward on the tape active on this thread.
void backward(const Tensor& loss);

// Adds `values` into the grad buffer of `t` if it requires grad.
void accumulate_grad(const Tensor& t, std::span<const double> values);

}  // namespace cts
