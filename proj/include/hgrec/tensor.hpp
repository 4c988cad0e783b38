#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "hgrec/errors.hpp"

// Dense f64 tensors with reverse-mode differentiation. Operations executed
// while a Tape is in scope (and touching at least one requires-grad tensor)
// are recorded; Tape::backward replays them in reverse, accumulating (+=)
// into the grad buffer of every requires-grad tensor. Values are checked
// finite after forward and backward passes.
namespace hgrec {

struct TensorImpl {
  std::vector<std::size_t> shape;
  std::vector<double> data;
  std::vector<double> grad;  // same length as data iff participating in autodiff
  bool requires_grad = false;
};

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(std::vector<std::size_t> shape, bool requires_grad = false);
  static Tensor full(std::vector<std::size_t> shape, double value,
                     bool requires_grad = false);
  static Tensor from_data(std::vector<std::size_t> shape, std::vector<double> data,
                          bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const std::vector<std::size_t>& shape() const { return impl_->shape; }
  std::size_t rank() const { return impl_->shape.size(); }
  std::size_t size() const { return impl_->data.size(); }
  // Row/col view of the trailing axis: rows = product of leading dims.
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<const double> data() const { return impl_->data; }
  std::span<double> mutable_data() { return impl_->data; }
  std::span<const double> grad() const { return impl_->grad; }
  bool requires_grad() const { return impl_->requires_grad; }
  void zero_grad();

  double value() const;                       // scalar tensors only
  double at(std::size_t r, std::size_t c) const;  // rank-2 accessor

  std::string shape_str() const;

  const std::shared_ptr<TensorImpl>& impl() const { return impl_; }

 private:
  explicit Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}
  std::shared_ptr<TensorImpl> impl_;
  friend class Tape;
  friend class OpRecorder;
};

// Ordered record of executed differentiable operations.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Reverse replay. Zeroes the grads of every tensor referenced by the tape,
  // seeds d(loss)/d(loss) = 1, then accumulates. Errors on a non-scalar loss
  // and on a repeated backward with no new recorded operations.
  void backward(const Tensor& loss);

  void reset();
  std::size_t size() const { return nodes_.size(); }

  struct Node {
    std::string op;
    std::vector<std::shared_ptr<TensorImpl>> inputs;
    std::shared_ptr<TensorImpl> output;
    std::function<void()> backward;
  };

  void record(Node node);

 private:
  std::vector<Node> nodes_;
  bool consumed_ = false;
  std::size_t nodes_at_backward_ = 0;
};

// Installs a tape as the current thread's recording target.
class TapeScope {
 public:
  explicit TapeScope(Tape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* prev_;
};

Tape* current_tape();

namespace debug {
// Test hook: perturb the backward pass of the named op (negative control for
// the gradient self-check). Empty string disables.
void set_corrupt_backward_op(const std::string& op_name);
const std::string& corrupt_backward_op();
}  // namespace debug

// ---- Differentiable operations -------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);  // elementwise (Hadamard)
Tensor divide(const Tensor& a, const Tensor& b);

// Broadcast a length-m row vector across all rows of x (n x m).
Tensor add_rowvec(const Tensor& x, const Tensor& v);
Tensor mul_rowvec(const Tensor& x, const Tensor& v);
// Broadcast a length-n column vector across all columns of x (n x m).
Tensor add_colvec(const Tensor& x, const Tensor& v);
Tensor mul_colvec(const Tensor& x, const Tensor& v);
Tensor div_colvec(const Tensor& x, const Tensor& v);

Tensor scale(const Tensor& x, double alpha);
Tensor add_const(const Tensor& x, double c);
Tensor mul_scalar(const Tensor& x, const Tensor& s);  // s is a 1-element tensor

Tensor relu(const Tensor& x);
Tensor leaky_relu(const Tensor& x, double slope);
Tensor tanh_op(const Tensor& x);
Tensor exp_op(const Tensor& x);
Tensor log_op(const Tensor& x);
Tensor sqrt_op(const Tensor& x);

enum class Activation { LeakyRelu, Relu, Tanh };
Activation activation_from_string(const std::string& name);
Tensor activation(const Tensor& x, Activation kind, double leaky_slope = 0.2);

// Softmax along the last axis with inputs divided by `temp` (temp > 0),
// computed with max subtraction.
Tensor softmax_scaled(const Tensor& x, double temp);

Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor slice_cols(const Tensor& x, std::size_t start, std::size_t len);

Tensor gather_rows(const Tensor& x, const std::vector<std::uint32_t>& idx);
// Place rows[k] at row idx[k] of an (n_rows x cols) zero tensor. Indices must
// be distinct.
Tensor scatter_rows(const Tensor& rows, const std::vector<std::uint32_t>& idx,
                    std::size_t n_rows);

// out[s] = sum of rows of x with seg[row] == s; seg values < n_segments.
Tensor segment_sum(const Tensor& x, const std::vector<std::uint32_t>& seg,
                   std::size_t n_segments);

// x (n x m), m divisible by chunks: out (n x chunks), each entry the sum of a
// contiguous column block. chunk_expand repeats each column `repeat` times.
Tensor chunk_sum(const Tensor& x, std::size_t chunks);
Tensor chunk_expand(const Tensor& x, std::size_t repeat);

Tensor row_sum(const Tensor& x);   // n x m -> n x 1
Tensor row_mean(const Tensor& x);  // n x m -> n x 1
Tensor col_sum(const Tensor& x);   // n x m -> 1 x m
Tensor col_mean(const Tensor& x);  // n x m -> 1 x m
Tensor col_max(const Tensor& x);   // n x m -> 1 x m (subgradient to first argmax)

Tensor sum_all(const Tensor& x);   // -> 1 x 1
Tensor mean_all(const Tensor& x);  // -> 1 x 1

// out[i] = x[i, idx[i]] as an n x 1 tensor.
Tensor take_per_row(const Tensor& x, const std::vector<std::uint32_t>& idx);

// Elementwise multiply by a constant 0/1 mask (dropout-style mask application).
Tensor apply_mask(const Tensor& x, const std::vector<double>& mask);

// ---- Non-differentiable helpers -------------------------------------------

// Per-segment / per-row maxima of raw values (used for stable softmax shifts).
std::vector<double> segment_max_values(const Tensor& x,
                                       const std::vector<std::uint32_t>& seg,
                                       std::size_t n_segments);

bool all_finite(const Tensor& x);

}  // namespace hgrec
