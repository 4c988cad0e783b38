#include "hgrec/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "hgrec/kernels.hpp"

namespace hgrec {

namespace {

thread_local Tape* t_current_tape = nullptr;
std::string g_corrupt_op;

std::size_t shape_product(const std::vector<std::size_t>& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

std::string shape_to_str(const std::vector<std::size_t>& shape) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << "x";
    os << shape[i];
  }
  os << "]";
  return os.str();
}

void ensure_grad(TensorImpl& t) {
  if (t.grad.size() != t.data.size()) t.grad.assign(t.data.size(), 0.0);
}

void acc_mul(double* dst, const double* a, const double* b, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) dst[i] += a[i] * b[i];
}

void require_rank2(const Tensor& t, const char* op) {
  if (t.rank() != 2)
    throw ShapeError(std::string(op) + ": expected rank-2 tensor, got " +
                     t.shape_str());
}

// Records a node on the current tape when any input participates in autodiff.
void record_op(const char* op, std::initializer_list<Tensor> inputs,
               Tensor& out, std::function<void()> bw) {
  bool any_rg = false;
  for (const auto& t : inputs) any_rg = any_rg || t.requires_grad();
  out.impl()->requires_grad = any_rg;
  Tape* tape = t_current_tape;
  if (!tape || !any_rg) return;

  Tape::Node node;
  node.op = op;
  node.inputs.reserve(inputs.size());
  for (const auto& t : inputs) node.inputs.push_back(t.impl());
  node.output = out.impl();
  if (!g_corrupt_op.empty() && node.op == g_corrupt_op) {
    auto ins = node.inputs;
    node.backward = [bw = std::move(bw), ins]() {
      bw();
      for (const auto& in : ins) {
        if (in->requires_grad && !in->grad.empty()) {
          in->grad[0] = in->grad[0] * 1.5 + 0.01;
          break;
        }
      }
    };
  } else {
    node.backward = std::move(bw);
  }
  tape->record(std::move(node));
}

}  // namespace

// ---- Tensor ----------------------------------------------------------------

Tensor Tensor::zeros(std::vector<std::size_t> shape, bool requires_grad) {
  auto impl = std::make_shared<TensorImpl>();
  impl->data.assign(shape_product(shape), 0.0);
  impl->shape = std::move(shape);
  impl->requires_grad = requires_grad;
  if (requires_grad) ensure_grad(*impl);
  return Tensor(std::move(impl));
}

Tensor Tensor::full(std::vector<std::size_t> shape, double value,
                    bool requires_grad) {
  Tensor t = zeros(std::move(shape), requires_grad);
  std::fill(t.impl()->data.begin(), t.impl()->data.end(), value);
  return t;
}

Tensor Tensor::from_data(std::vector<std::size_t> shape, std::vector<double> data,
                         bool requires_grad) {
  if (shape_product(shape) != data.size())
    throw ShapeError("from_data: shape " + shape_to_str(shape) +
                     " does not match data length " + std::to_string(data.size()));
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = std::move(shape);
  impl->data = std::move(data);
  impl->requires_grad = requires_grad;
  if (requires_grad) ensure_grad(*impl);
  return Tensor(std::move(impl));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from_data({1, 1}, {value}, requires_grad);
}

std::size_t Tensor::rows() const {
  if (impl_->shape.empty()) return 1;
  std::size_t r = 1;
  for (std::size_t i = 0; i + 1 < impl_->shape.size(); ++i) r *= impl_->shape[i];
  return r;
}

std::size_t Tensor::cols() const {
  return impl_->shape.empty() ? 1 : impl_->shape.back();
}

void Tensor::zero_grad() {
  if (impl_->requires_grad) {
    ensure_grad(*impl_);
    std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0);
  }
}

double Tensor::value() const {
  if (size() != 1)
    throw ContractError("value(): tensor is not scalar, shape " + shape_str());
  return impl_->data[0];
}

double Tensor::at(std::size_t r, std::size_t c) const {
  return impl_->data[r * cols() + c];
}

std::string Tensor::shape_str() const { return shape_to_str(impl_->shape); }

// ---- Tape ------------------------------------------------------------------

void Tape::record(Node node) {
  nodes_.push_back(std::move(node));
}

void Tape::backward(const Tensor& loss) {
  if (!loss.defined() || loss.size() != 1)
    throw ContractError("backward: loss must be a scalar tensor");
  if (consumed_ && nodes_.size() == nodes_at_backward_)
    throw ContractError(
        "backward: called twice without recording new operations");

  for (auto& node : nodes_) {
    ensure_grad(*node.output);
    std::fill(node.output->grad.begin(), node.output->grad.end(), 0.0);
    for (auto& in : node.inputs) {
      ensure_grad(*in);
      std::fill(in->grad.begin(), in->grad.end(), 0.0);
    }
  }
  ensure_grad(*loss.impl());
  loss.impl()->grad[0] = 1.0;

  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    if (it->backward) it->backward();
  }
  consumed_ = true;
  nodes_at_backward_ = nodes_.size();
}

void Tape::reset() {
  nodes_.clear();
  consumed_ = false;
  nodes_at_backward_ = 0;
}

TapeScope::TapeScope(Tape& tape) : prev_(t_current_tape) {
  t_current_tape = &tape;
}

TapeScope::~TapeScope() { t_current_tape = prev_; }

Tape* current_tape() { return t_current_tape; }

namespace debug {
void set_corrupt_backward_op(const std::string& op_name) {
  g_corrupt_op = op_name;
}
const std::string& corrupt_backward_op() { return g_corrupt_op; }
}  // namespace debug

// ---- Operations ------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank2(a, "matmul");
  require_rank2(b, "matmul");
  const std::size_t m = a.shape()[0], k = a.shape()[1];
  const std::size_t k2 = b.shape()[0], n = b.shape()[1];
  if (k != k2)
    throw ShapeError("matmul: inner dimensions disagree: " + a.shape_str() +
                     " x " + b.shape_str());
  Tensor out = Tensor::zeros({m, n});
  kernels::matmul_nn(a.data().data(), b.data().data(),
                     out.mutable_data().data(), m, k, n, false);
  record_op("matmul", {a, b}, out,
            [ai = a.impl(), bi = b.impl(), oi = out.impl(), m, k, n]() {
              if (ai->requires_grad)
                kernels::matmul_nt(oi->grad.data(), bi->data.data(),
                                   ai->grad.data(), m, n, k, true);
              if (bi->requires_grad)
                kernels::matmul_tn(ai->data.data(), oi->grad.data(),
                                   bi->grad.data(), k, m, n, true);
            });
  return out;
}

Tensor transpose(const Tensor& a) {
  require_rank2(a, "transpose");
  const std::size_t m = a.shape()[0], n = a.shape()[1];
  Tensor out = Tensor::zeros({n, m});
  const double* src = a.data().data();
  double* dst = out.mutable_data().data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) dst[j * m + i] = src[i * n + j];
  record_op("transpose", {a}, out, [ai = a.impl(), oi = out.impl(), m, n]() {
    if (!ai->requires_grad) return;
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j)
        ai->grad[i * n + j] += oi->grad[j * m + i];
  });
  return out;
}

namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    throw ShapeError(std::string(op) + ": shape mismatch " + a.shape_str() +
                     " vs " + b.shape_str());
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  Tensor out = Tensor::zeros(a.shape());
  kernels::add(out.mutable_data().data(), a.data().data(), b.data().data(),
               a.size());
  record_op("add", {a, b}, out, [ai = a.impl(), bi = b.impl(), oi = out.impl()]() {
    if (ai->requires_grad)
      kernels::axpy(1.0, oi->grad.data(), ai->grad.data(), ai->grad.size());
    if (bi->requires_grad)
      kernels::axpy(1.0, oi->grad.data(), bi->grad.data(), bi->grad.size());
  });
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  Tensor out = Tensor::zeros(a.shape());
  kernels::sub(out.mutable_data().data(), a.data().data(), b.data().data(),
               a.size());
  record_op("sub", {a, b}, out, [ai = a.impl(), bi = b.impl(), oi = out.impl()]() {
    if (ai->requires_grad)
      kernels::axpy(1.0, oi->grad.data(), ai->grad.data(), ai->grad.size());
    if (bi->requires_grad)
      kernels::axpy(-1.0, oi->grad.data(), bi->grad.data(), bi->grad.size());
  });
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  Tensor out = Tensor::zeros(a.shape());
  kernels::mul(out.mutable_data().data(), a.data().data(), b.data().data(),
               a.size());
  record_op("mul", {a, b}, out, [ai = a.impl(), bi = b.impl(), oi = out.impl()]() {
    if (ai->requires_grad)
      acc_mul(ai->grad.data(), oi->grad.data(), bi->data.data(), ai->grad.size());
    if (bi->requires_grad)
      acc_mul(bi->grad.data(), oi->grad.data(), ai->data.data(), bi->grad.size());
  });
  return out;
}

Tensor divide(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "divide");
  Tensor out = Tensor::zeros(a.shape());
  const double* pa = a.data().data();
  const double* pb = b.data().data();
  double* po = out.mutable_data().data();
  for (std::size_t i = 0; i < a.size(); ++i) po[i] = pa[i] / pb[i];
  record_op("divide", {a, b}, out,
            [ai = a.impl(), bi = b.impl(), oi = out.impl()]() {
              const std::size_t n = oi->data.size();
              for (std::size_t i = 0; i < n; ++i) {
                const double inv_b = 1.0 / bi->data[i];
                if (ai->requires_grad) ai->grad[i] += oi->grad[i] * inv_b;
                if (bi->requires_grad)
                  bi->grad[i] -= oi->grad[i] * oi->data[i] * inv_b;
              }
            });
  return out;
}

namespace {

void require_vec_len(const Tensor& v, std::size_t len, const char* op) {
  if (v.size() != len)
    throw ShapeError(std::string(op) + ": vector length " +
                     std::to_string(v.size()) + " does not match " +
                     std::to_string(len));
}

}  // namespace

Tensor add_rowvec(const Tensor& x, const Tensor& v) {
  require_rank2(x, "add_rowvec");
  const std::size_t n = x.shape()[0], m = x.shape()[1];
  require_vec_len(v, m, "add_rowvec");
  Tensor out = Tensor::zeros({n, m});
  const double* px = x.data().data();
  const double* pv = v.data().data();
  double* po = out.mutable_data().data();
  for (std::size_t i = 0; i < n; ++i)
    kernels::add(po + i * m, px + i * m, pv, m);
  record_op("add_rowvec", {x, v}, out,
            [xi = x.impl(), vi = v.impl(), oi = out.impl(), n, m]() {
              if (xi->requires_grad)
                kernels::axpy(1.0, oi->grad.data(), xi->grad.data(), n * m);
              if (vi->requires_grad)
                for (std::size_t i = 0; i < n; ++i)
                  kernels::axpy(1.0, oi->grad.data() + i * m, vi->grad.data(), m);
            });
  return out;
}

Tensor mul_rowvec(const Tensor& x, const Tensor& v) {
  require_rank2(x, "mul_rowvec");
  const std::size_t n = x.shape()[0], m = x.shape()[1];
  require_vec_len(v, m, "mul_rowvec");
  Tensor out = Tensor::zeros({n, m});
  const double* px = x.data().data();
  const double* pv = v.data().data();
  double* po = out.mutable_data().data();
  for (std::size_t i = 0; i < n; ++i) kernels::mul(po + i * m, px + i * m, pv, m);
  record_op("mul_rowvec", {x, v}, out,
            [xi = x.impl(), vi = v.impl(), oi = out.impl(), n, m]() {
              for (std::size_t i = 0; i < n; ++i) {
                if (xi->requires_grad)
                  acc_mul(xi->grad.data() + i * m, oi->grad.data() + i * m,
                          vi->data.data(), m);
                if (vi->requires_grad)
                  acc_mul(vi->grad.data(), oi->grad.data() + i * m,
                          xi->data.data() + i * m, m);
              }
            });
  return out;
}

Tensor add_colvec(const Tensor& x, const Tensor& v) {
  require_rank2(x, "add_colvec");
  const std::size_t n = x.shape()[0], m = x.shape()[1];
  require_vec_len(v, n, "add_colvec");
  Tensor out = Tensor::zeros({n, m});
  const double* px = x.data().data();
  const double* pv = v.data().data();
  double* po = out.mutable_data().data();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) po[i * m + j] = px[i * m + j] + pv[i];
  record_op("add_colvec", {x, v}, out,
            [xi = x.impl(), vi = v.impl(), oi = out.impl(), n, m]() {
              if (xi->requires_grad)
                kernels::axpy(1.0, oi->grad.data(), xi->grad.data(), n * m);
              if (vi->requires_grad)
                for (std::size_t i = 0; i < n; ++i)
                  vi->grad[i] += kernels::sum(oi->grad.data() + i * m, m);
            });
  return out;
}

Tensor mul_colvec(const Tensor& x, const Tensor& v) {
  require_rank2(x, "mul_colvec");
  const std::size_t n = x.shape()[0], m = x.shape()[1];
  require_vec_len(v, n, "mul_colvec");
  Tensor out = Tensor::zeros({n, m});
  const double* px = x.data().data();
  const double* pv = v.data().data();
  double* po = out.mutable_data().data();
  for (std::size_t i = 0; i < n; ++i)
    kernels::scale(po + i * m, px + i * m, pv[i], m);
  record_op("mul_colvec", {x, v}, out,
            [xi = x.impl(), vi = v.impl(), oi = out.impl(), n, m]() {
              for (std::size_t i = 0; i < n; ++i) {
                if (xi->requires_grad)
                  kernels::axpy(vi->data[i], oi->grad.data() + i * m,
                                xi->grad.data() + i * m, m);
                if (vi->requires_grad)
                  vi->grad[i] += kernels::dot(oi->grad.data() + i * m,
                                              xi->data.data() + i * m, m);
              }
            });
  return out;
}

Tensor div_colvec(const Tensor& x, const Tensor& v) {
  require_rank2(x, "div_colvec");
  const std::size_t n = x.shape()[0], m = x.shape()[1];
  require_vec_len(v, n, "div_colvec");
  Tensor out = Tensor::zeros({n, m});
  const double* px = x.data().data();
  const double* pv = v.data().data();
  double* po = out.mutable_data().data();
  for (std::size_t i = 0; i < n; ++i)
    kernels::scale(po + i * m, px + i * m, 1.0 / pv[i], m);
  record_op("div_colvec", {x, v}, out,
            [xi = x.impl(), vi = v.impl(), oi = out.impl(), n, m]() {
              for (std::size_t i = 0; i < n; ++i) {
                const double inv = 1.0 / vi->data[i];
                if (xi->requires_grad)
                  kernels::axpy(inv, oi->grad.data() + i * m,
                                xi->grad.data() + i * m, m);
                if (vi->requires_grad)
                  vi->grad[i] -= inv * kernels::dot(oi->grad.data() + i * m,
                                                    oi->data.data() + i * m, m);
              }
            });
  return out;
}

Tensor scale(const Tensor& x, double alpha) {
  Tensor out = Tensor::zeros(x.shape());
  kernels::scale(out.mutable_data().data(), x.data().data(), alpha, x.size());
  record_op("scale", {x}, out, [xi = x.impl(), oi = out.impl(), alpha]() {
    if (xi->requires_grad)
      kernels::axpy(alpha, oi->grad.data(), xi->grad.data(), xi->grad.size());
  });
  return out;
}

Tensor add_const(const Tensor& x, double c) {
  Tensor out = Tensor::zeros(x.shape());
  const double* px = x.data().data();
  double* po = out.mutable_data().data();
  for (std::size_t i = 0; i < x.size(); ++i) po[i] = px[i] + c;
  record_op("add_const", {x}, out, [xi = x.impl(), oi = out.impl()]() {
    if (xi->requires_grad)
      kernels::axpy(1.0, oi->grad.data(), xi->grad.data(), xi->grad.size());
  });
  return out;
}

Tensor mul_scalar(const Tensor& x, const Tensor& s) {
  if (s.size() != 1)
    throw ShapeError("mul_scalar: scale tensor must have 1 element, got " +
                     s.shape_str());
  Tensor out = Tensor::zeros(x.shape());
  kernels::scale(out.mutable_data().data(), x.data().data(), s.data()[0],
                 x.size());
  record_op("mul_scalar", {x, s}, out,
            [xi = x.impl(), si = s.impl(), oi = out.impl()]() {
              if (xi->requires_grad)
                kernels::axpy(si->data[0], oi->grad.data(), xi->grad.data(),
                              xi->grad.size());
              if (si->requires_grad)
                si->grad[0] += kernels::dot(oi->grad.data(), xi->data.data(),
                                            xi->data.size());
            });
  return out;
}

Tensor relu(const Tensor& x) {
  Tensor out = Tensor::zeros(x.shape());
  kernels::relu(out.mutable_data().data(), x.data().data(), x.size());
  record_op("relu", {x}, out, [xi = x.impl(), oi = out.impl()]() {
    if (xi->requires_grad)
      kernels::relu_grad_acc(xi->grad.data(), xi->data.data(), oi->grad.data(),
                             xi->grad.size());
  });
  return out;
}

Tensor leaky_relu(const Tensor& x, double slope) {
  Tensor out = Tensor::zeros(x.shape());
  kernels::leaky_relu(out.mutable_data().data(), x.data().data(), slope,
                      x.size());
  record_op("leaky_relu", {x}, out, [xi = x.impl(), oi = out.impl(), slope]() {
    if (xi->requires_grad)
      kernels::leaky_relu_grad_acc(xi->grad.data(), xi->data.data(),
                                   oi->grad.data(), slope, xi->grad.size());
  });
  return out;
}

Tensor tanh_op(const Tensor& x) {
  Tensor out = Tensor::zeros(x.shape());
  const double* px = x.data().data();
  double* po = out.mutable_data().data();
  for (std::size_t i = 0; i < x.size(); ++i) po[i] = std::tanh(px[i]);
  record_op("tanh", {x}, out, [xi = x.impl(), oi = out.impl()]() {
    if (!xi->requires_grad) return;
    for (std::size_t i = 0; i < xi->grad.size(); ++i)
      xi->grad[i] += oi->grad[i] * (1.0 - oi->data[i] * oi->data[i]);
  });
  return out;
}

Tensor exp_op(const Tensor& x) {
  Tensor out = Tensor::zeros(x.shape());
  const double* px = x.data().data();
  double* po = out.mutable_data().data();
  for (std::size_t i = 0; i < x.size(); ++i) po[i] = std::exp(px[i]);
  record_op("exp", {x}, out, [xi = x.impl(), oi = out.impl()]() {
    if (xi->requires_grad)
      acc_mul(xi->grad.data(), oi->grad.data(), oi->data.data(),
              xi->grad.size());
  });
  return out;
}

Tensor log_op(const Tensor& x) {
  Tensor out = Tensor::zeros(x.shape());
  const double* px = x.data().data();
  double* po = out.mutable_data().data();
  for (std::size_t i = 0; i < x.size(); ++i) po[i] = std::log(px[i]);
  record_op("log", {x}, out, [xi = x.impl(), oi = out.impl()]() {
    if (!xi->requires_grad) return;
    for (std::size_t i = 0; i < xi->grad.size(); ++i)
      xi->grad[i] += oi->grad[i] / xi->data[i];
  });
  return out;
}

Tensor sqrt_op(const Tensor& x) {
  Tensor out = Tensor::zeros(x.shape());
  const double* px = x.data().data();
  double* po = out.mutable_data().data();
  for (std::size_t i = 0; i < x.size(); ++i) po[i] = std::sqrt(px[i]);
  record_op("sqrt", {x}, out, [xi = x.impl(), oi = out.impl()]() {
    if (!xi->requires_grad) return;
    for (std::size_t i = 0; i < xi->grad.size(); ++i)
      xi->grad[i] += oi->grad[i] * 0.5 / oi->data[i];
  });
  return out;
}

Activation activation_from_string(const std::string& name) {
  if (name == "leaky_relu") return Activation::LeakyRelu;
  if (name == "relu") return Activation::Relu;
  if (name == "tanh") return Activation::Tanh;
  throw ConfigError("activation: unknown kind '" + name + "'");
}

Tensor activation(const Tensor& x, Activation kind, double leaky_slope) {
  switch (kind) {
    case Activation::LeakyRelu: return leaky_relu(x, leaky_slope);
    case Activation::Relu: return relu(x);
    case Activation::Tanh: return tanh_op(x);
  }
  throw ConfigError("activation: unknown kind");
}

Tensor softmax_scaled(const Tensor& x, double temp) {
  if (!(temp > 0.0))
    throw ContractError("softmax_scaled: scale must be > 0, got " +
                        std::to_string(temp));
  const std::size_t m = x.cols();
  const std::size_t n = x.rows();
  Tensor out = Tensor::zeros(x.shape());
  const double* px = x.data().data();
  double* po = out.mutable_data().data();
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = px + i * m;
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < m; ++j) mx = std::max(mx, row[j]);
    double denom = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
      po[i * m + j] = std::exp((row[j] - mx) / temp);
      denom += po[i * m + j];
    }
    const double inv = 1.0 / denom;
    for (std::size_t j = 0; j < m; ++j) po[i * m + j] *= inv;
  }
  record_op("softmax_scaled", {x}, out,
            [xi = x.impl(), oi = out.impl(), n, m, temp]() {
              if (!xi->requires_grad) return;
              for (std::size_t i = 0; i < n; ++i) {
                const double* y = oi->data.data() + i * m;
                const double* g = oi->grad.data() + i * m;
                const double s = kernels::dot(g, y, m);
                double* dx = xi->grad.data() + i * m;
                for (std::size_t j = 0; j < m; ++j)
                  dx[j] += y[j] * (g[j] - s) / temp;
              }
            });
  return out;
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ContractError("concat_rows: empty part list");
  const std::size_t m = parts[0].cols();
  std::size_t n = 0;
  for (const auto& p : parts) {
    require_rank2(p, "concat_rows");
    if (p.cols() != m)
      throw ShapeError("concat_rows: column mismatch " + p.shape_str() +
                       " vs " + parts[0].shape_str());
    n += p.shape()[0];
  }
  Tensor out = Tensor::zeros({n, m});
  double* po = out.mutable_data().data();
  std::size_t off = 0;
  for (const auto& p : parts) {
    std::copy(p.data().begin(), p.data().end(), po + off);
    off += p.size();
  }
  bool any_rg = false;
  for (const auto& p : parts) any_rg = any_rg || p.requires_grad();
  out.impl()->requires_grad = any_rg;
  if (Tape* tape = t_current_tape; tape && any_rg) {
    Tape::Node node;
    node.op = "concat_rows";
    for (const auto& p : parts) node.inputs.push_back(p.impl());
    node.output = out.impl();
    auto ins = node.inputs;
    node.backward = [ins, oi = out.impl()]() {
      std::size_t off = 0;
      for (const auto& in : ins) {
        if (in->requires_grad)
          kernels::axpy(1.0, oi->grad.data() + off, in->grad.data(),
                        in->data.size());
        off += in->data.size();
      }
    };
    tape->record(std::move(node));
  }
  return out;
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ContractError("concat_cols: empty part list");
  const std::size_t n = parts[0].shape()[0];
  std::size_t m = 0;
  for (const auto& p : parts) {
    require_rank2(p, "concat_cols");
    if (p.shape()[0] != n)
      throw ShapeError("concat_cols: row mismatch " + p.shape_str() + " vs " +
                       parts[0].shape_str());
    m += p.shape()[1];
  }
  Tensor out = Tensor::zeros({n, m});
  double* po = out.mutable_data().data();
  std::size_t col_off = 0;
  for (const auto& p : parts) {
    const std::size_t pm = p.shape()[1];
    const double* pp = p.data().data();
    for (std::size_t i = 0; i < n; ++i)
      std::copy(pp + i * pm, pp + (i + 1) * pm, po + i * m + col_off);
    col_off += pm;
  }
  bool any_rg = false;
  for (const auto& p : parts) any_rg = any_rg || p.requires_grad();
  out.impl()->requires_grad = any_rg;
  if (Tape* tape = t_current_tape; tape && any_rg) {
    Tape::Node node;
    node.op = "concat_cols";
    for (const auto& p : parts) node.inputs.push_back(p.impl());
    node.output = out.impl();
    auto ins = node.inputs;
    node.backward = [ins, oi = out.impl(), n, m]() {
      std::size_t col_off = 0;
      for (const auto& in : ins) {
        const std::size_t pm = in->data.size() / n;
        if (in->requires_grad)
          for (std::size_t i = 0; i < n; ++i)
            kernels::axpy(1.0, oi->grad.data() + i * m + col_off,
                          in->grad.data() + i * pm, pm);
        col_off += pm;
      }
    };
    tape->record(std::move(node));
  }
  return out;
}

Tensor slice_cols(const Tensor& x, std::size_t start, std::size_t len) {
  require_rank2(x, "slice_cols");
  const std::size_t n = x.shape()[0], m = x.shape()[1];
  if (start + len > m)
    throw ShapeError("slice_cols: range [" + std::to_string(start) + ", " +
                     std::to_string(start + len) + ") out of bounds for " +
                     x.shape_str());
  Tensor out = Tensor::zeros({n, len});
  const double* px = x.data().data();
  double* po = out.mutable_data().data();
  for (std::size_t i = 0; i < n; ++i)
    std::copy(px + i * m + start, px + i * m + start + len, po + i * len);
  record_op("slice_cols", {x}, out,
            [xi = x.impl(), oi = out.impl(), n, m, start, len]() {
              if (!xi->requires_grad) return;
              for (std::size_t i = 0; i < n; ++i)
                kernels::axpy(1.0, oi->grad.data() + i * len,
                              xi->grad.data() + i * m + start, len);
            });
  return out;
}

Tensor gather_rows(const Tensor& x, const std::vector<std::uint32_t>& idx) {
  require_rank2(x, "gather_rows");
  const std::size_t n = x.shape()[0], m = x.shape()[1];
  for (auto i : idx)
    if (i >= n)
      throw ContractError("gather_rows: index " + std::to_string(i) +
                          " out of bounds for " + x.shape_str());
  Tensor out = Tensor::zeros({idx.size(), m});
  const double* px = x.data().data();
  double* po = out.mutable_data().data();
  for (std::size_t k = 0; k < idx.size(); ++k)
    std::copy(px + idx[k] * m, px + (idx[k] + 1) * m, po + k * m);
  record_op("gather_rows", {x}, out,
            [xi = x.impl(), oi = out.impl(), idx, m]() {
              if (!xi->requires_grad) return;
              for (std::size_t k = 0; k < idx.size(); ++k)
                kernels::axpy(1.0, oi->grad.data() + k * m,
                              xi->grad.data() + idx[k] * m, m);
            });
  return out;
}

Tensor scatter_rows(const Tensor& rows, const std::vector<std::uint32_t>& idx,
                    std::size_t n_rows) {
  require_rank2(rows, "scatter_rows");
  const std::size_t k = rows.shape()[0], m = rows.shape()[1];
  if (idx.size() != k)
    throw ShapeError("scatter_rows: " + std::to_string(idx.size()) +
                     " indices for " + std::to_string(k) + " rows");
  std::vector<bool> seen(n_rows, false);
  for (auto i : idx) {
    if (i >= n_rows)
      throw ContractError("scatter_rows: index " + std::to_string(i) +
                          " out of bounds for " + std::to_string(n_rows) +
                          " rows");
    if (seen[i])
      throw ContractError("scatter_rows: duplicate index " + std::to_string(i));
    seen[i] = true;
  }
  Tensor out = Tensor::zeros({n_rows, m});
  const double* pr = rows.data().data();
  double* po = out.mutable_data().data();
  for (std::size_t t = 0; t < k; ++t)
    std::copy(pr + t * m, pr + (t + 1) * m, po + idx[t] * m);
  record_op("scatter_rows", {rows}, out,
            [ri = rows.impl(), oi = out.impl(), idx, m]() {
              if (!ri->requires_grad) return;
              for (std::size_t t = 0; t < idx.size(); ++t)
                kernels::axpy(1.0, oi->grad.data() + idx[t] * m,
                              ri->grad.data() + t * m, m);
            });
  return out;
}

Tensor segment_sum(const Tensor& x, const std::vector<std::uint32_t>& seg,
                   std::size_t n_segments) {
  require_rank2(x, "segment_sum");
  const std::size_t n = x.shape()[0], m = x.shape()[1];
  if (seg.size() != n)
    throw ShapeError("segment_sum: " + std::to_string(seg.size()) +
                     " segment ids for " + std::to_string(n) + " rows");
  for (auto s : seg)
    if (s >= n_segments)
      throw ContractError("segment_sum: segment id " + std::to_string(s) +
                          " >= " + std::to_string(n_segments));
  Tensor out = Tensor::zeros({n_segments, m});
  const double* px = x.data().data();
  double* po = out.mutable_data().data();
  for (std::size_t i = 0; i < n; ++i)
    kernels::axpy(1.0, px + i * m, po + seg[i] * m, m);
  record_op("segment_sum", {x}, out,
            [xi = x.impl(), oi = out.impl(), seg, m]() {
              if (!xi->requires_grad) return;
              for (std::size_t i = 0; i < seg.size(); ++i)
                kernels::axpy(1.0, oi->grad.data() + seg[i] * m,
                              xi->grad.data() + i * m, m);
            });
  return out;
}

Tensor chunk_sum(const Tensor& x, std::size_t chunks) {
  require_rank2(x, "chunk_sum");
  const std::size_t n = x.shape()[0], m = x.shape()[1];
  if (chunks == 0 || m % chunks != 0)
    throw ShapeError("chunk_sum: " + std::to_string(m) +
                     " columns not divisible into " + std::to_string(chunks) +
                     " chunks");
  const std::size_t w = m / chunks;
  Tensor out = Tensor::zeros({n, chunks});
  const double* px = x.data().data();
  double* po = out.mutable_data().data();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < chunks; ++c)
      po[i * chunks + c] = kernels::sum(px + i * m + c * w, w);
  record_op("chunk_sum", {x}, out,
            [xi = x.impl(), oi = out.impl(), n, m, chunks, w]() {
              if (!xi->requires_grad) return;
              for (std::size_t i = 0; i < n; ++i)
                for (std::size_t c = 0; c < chunks; ++c) {
                  const double g = oi->grad[i * chunks + c];
                  double* dst = xi->grad.data() + i * m + c * w;
                  for (std::size_t t = 0; t < w; ++t) dst[t] += g;
                }
            });
  return out;
}

Tensor chunk_expand(const Tensor& x, std::size_t repeat) {
  require_rank2(x, "chunk_expand");
  const std::size_t n = x.shape()[0], c = x.shape()[1];
  const std::size_t m = c * repeat;
  Tensor out = Tensor::zeros({n, m});
  const double* px = x.data().data();
  double* po = out.mutable_data().data();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < c; ++j) {
      const double v = px[i * c + j];
      double* dst = po + i * m + j * repeat;
      for (std::size_t t = 0; t < repeat; ++t) dst[t] = v;
    }
  record_op("chunk_expand", {x}, out,
            [xi = x.impl(), oi = out.impl(), n, c, m, repeat]() {
              if (!xi->requires_grad) return;
              for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < c; ++j)
                  xi->grad[i * c + j] +=
                      kernels::sum(oi->grad.data() + i * m + j * repeat, repeat);
            });
  return out;
}

Tensor row_sum(const Tensor& x) {
  require_rank2(x, "row_sum");
  const std::size_t n = x.shape()[0], m = x.shape()[1];
  Tensor out = Tensor::zeros({n, 1});
  const double* px = x.data().data();
  double* po = out.mutable_data().data();
  for (std::size_t i = 0; i < n; ++i) po[i] = kernels::sum(px + i * m, m);
  record_op("row_sum", {x}, out, [xi = x.impl(), oi = out.impl(), n, m]() {
    if (!xi->requires_grad) return;
    for (std::size_t i = 0; i < n; ++i) {
      const double g = oi->grad[i];
      double* dst = xi->grad.data() + i * m;
      for (std::size_t j = 0; j < m; ++j) dst[j] += g;
    }
  });
  return out;
}

Tensor row_mean(const Tensor& x) {
  require_rank2(x, "row_mean");
  const std::size_t m = x.shape()[1];
  if (m == 0) throw ShapeError("row_mean: zero columns");
  return scale(row_sum(x), 1.0 / static_cast<double>(m));
}

Tensor col_sum(const Tensor& x) {
  require_rank2(x, "col_sum");
  const std::size_t n = x.shape()[0], m = x.shape()[1];
  Tensor out = Tensor::zeros({1, m});
  const double* px = x.data().data();
  double* po = out.mutable_data().data();
  for (std::size_t i = 0; i < n; ++i) kernels::axpy(1.0, px + i * m, po, m);
  record_op("col_sum", {x}, out, [xi = x.impl(), oi = out.impl(), n, m]() {
    if (!xi->requires_grad) return;
    for (std::size_t i = 0; i < n; ++i)
      kernels::axpy(1.0, oi->grad.data(), xi->grad.data() + i * m, m);
  });
  return out;
}

Tensor col_mean(const Tensor& x) {
  require_rank2(x, "col_mean");
  const std::size_t n = x.shape()[0];
  if (n == 0) throw ShapeError("col_mean: zero rows");
  return scale(col_sum(x), 1.0 / static_cast<double>(n));
}

Tensor col_max(const Tensor& x) {
  require_rank2(x, "col_max");
  const std::size_t n = x.shape()[0], m = x.shape()[1];
  if (n == 0) throw ShapeError("col_max: zero rows");
  Tensor out = Tensor::zeros({1, m});
  auto argmax = std::make_shared<std::vector<std::size_t>>(m, 0);
  const double* px = x.data().data();
  double* po = out.mutable_data().data();
  for (std::size_t j = 0; j < m; ++j) {
    double best = px[j];
    std::size_t bi = 0;
    for (std::size_t i = 1; i < n; ++i) {
      if (px[i * m + j] > best) {
        best = px[i * m + j];
        bi = i;
      }
    }
    po[j] = best;
    (*argmax)[j] = bi;
  }
  record_op("col_max", {x}, out,
            [xi = x.impl(), oi = out.impl(), argmax, m]() {
              if (!xi->requires_grad) return;
              for (std::size_t j = 0; j < m; ++j)
                xi->grad[(*argmax)[j] * m + j] += oi->grad[j];
            });
  return out;
}

Tensor sum_all(const Tensor& x) {
  Tensor out = Tensor::zeros({1, 1});
  out.mutable_data()[0] = kernels::sum(x.data().data(), x.size());
  record_op("sum_all", {x}, out, [xi = x.impl(), oi = out.impl()]() {
    if (!xi->requires_grad) return;
    const double g = oi->grad[0];
    for (std::size_t i = 0; i < xi->grad.size(); ++i) xi->grad[i] += g;
  });
  return out;
}

Tensor mean_all(const Tensor& x) {
  if (x.size() == 0) throw ShapeError("mean_all: empty tensor");
  return scale(sum_all(x), 1.0 / static_cast<double>(x.size()));
}

Tensor take_per_row(const Tensor& x, const std::vector<std::uint32_t>& idx) {
  require_rank2(x, "take_per_row");
  const std::size_t n = x.shape()[0], m = x.shape()[1];
  if (idx.size() != n)
    throw ShapeError("take_per_row: " + std::to_string(idx.size()) +
                     " indices for " + std::to_string(n) + " rows");
  for (auto j : idx)
    if (j >= m)
      throw ContractError("take_per_row: column index " + std::to_string(j) +
                          " out of bounds for " + x.shape_str());
  Tensor out = Tensor::zeros({n, 1});
  const double* px = x.data().data();
  double* po = out.mutable_data().data();
  for (std::size_t i = 0; i < n; ++i) po[i] = px[i * m + idx[i]];
  record_op("take_per_row", {x}, out,
            [xi = x.impl(), oi = out.impl(), idx, m]() {
              if (!xi->requires_grad) return;
              for (std::size_t i = 0; i < idx.size(); ++i)
                xi->grad[i * m + idx[i]] += oi->grad[i];
            });
  return out;
}

Tensor apply_mask(const Tensor& x, const std::vector<double>& mask) {
  if (mask.size() != x.size())
    throw ShapeError("apply_mask: mask length " + std::to_string(mask.size()) +
                     " does not match tensor " + x.shape_str());
  Tensor out = Tensor::zeros(x.shape());
  kernels::mul(out.mutable_data().data(), x.data().data(), mask.data(),
               x.size());
  record_op("apply_mask", {x}, out,
            [xi = x.impl(), oi = out.impl(), mask]() {
              if (xi->requires_grad)
                acc_mul(xi->grad.data(), oi->grad.data(), mask.data(),
                        xi->grad.size());
            });
  return out;
}

std::vector<double> segment_max_values(const Tensor& x,
                                       const std::vector<std::uint32_t>& seg,
                                       std::size_t n_segments) {
  const std::size_t n = x.rows(), m = x.cols();
  std::vector<double> out(n_segments * m,
                          -std::numeric_limits<double>::infinity());
  const double* px = x.data().data();
  for (std::size_t i = 0; i < n; ++i) {
    double* dst = out.data() + seg[i] * m;
    const double* src = px + i * m;
    for (std::size_t j = 0; j < m; ++j) dst[j] = std::max(dst[j], src[j]);
  }
  for (auto& v : out)
    if (v == -std::numeric_limits<double>::infinity()) v = 0.0;
  return out;
}

bool all_finite(const Tensor& x) {
  for (double v : x.data())
    if (!std::isfinite(v)) return false;
  return true;
}

}  // namespace hgrec
