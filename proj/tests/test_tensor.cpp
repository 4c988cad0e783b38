#include <cmath>
#include <cstring>
#include <vector>

#include "doctest.h"
#include "hgrec/gradcheck.hpp"
#include "hgrec/rng.hpp"
#include "hgrec/tensor.hpp"

using namespace hgrec;

namespace {

Tensor rand_tensor(std::vector<std::size_t> shape, Rng& rng, double lo = -1.0,
                   double hi = 1.0, bool requires_grad = true) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(lo, hi);
  return Tensor::from_data(std::move(shape), std::move(v), requires_grad);
}

// Inputs bounded away from 0 so central differences stay off activation kinks.
Tensor rand_tensor_nonzero(std::vector<std::size_t> shape, Rng& rng) {
  Tensor t = rand_tensor(std::move(shape), rng);
  for (auto& x : t.mutable_data()) {
    const double s = x >= 0.0 ? 1.0 : -1.0;
    x = s * (0.1 + 0.9 * std::abs(x));
  }
  return t;
}

// Contract the op output against fixed random weights so every output element
// influences the scalar loss.
GradCheckReport check_op_grad(
    const std::function<Tensor()>& forward,
    const std::vector<std::pair<std::string, Tensor>>& leaves) {
  Tensor dry = forward();
  Rng wrng(991);
  std::vector<double> w(dry.size());
  for (auto& x : w) x = wrng.uniform(-1.0, 1.0);
  auto build = [forward, shape = dry.shape(), w]() {
    return sum_all(mul(forward(), Tensor::from_data(shape, w)));
  };
  return gradcheck(build, leaves, 1e-5);
}

}  // namespace

TEST_CASE("matmul identity and projection cases") {
  Tensor eye = Tensor::from_data({2, 2}, {1, 0, 0, 1});
  Tensor a = Tensor::from_data({2, 2}, {1, 2, 3, 4});
  Tensor out = matmul(eye, a);
  CHECK(out.data()[0] == 1.0);
  CHECK(out.data()[1] == 2.0);
  CHECK(out.data()[2] == 3.0);
  CHECK(out.data()[3] == 4.0);

  Tensor proj = Tensor::from_data({2, 2}, {1, 0, 0, 0});
  Tensor v = Tensor::from_data({2, 1}, {5, 7});
  Tensor pv = matmul(proj, v);
  CHECK(pv.data()[0] == 5.0);
  CHECK(pv.data()[1] == 0.0);
}

TEST_CASE("matmul shape mismatch names both shapes") {
  Tensor a = Tensor::zeros({2, 3});
  Tensor b = Tensor::zeros({4, 2});
  try {
    matmul(a, b);
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    std::string msg = e.what();
    CHECK(msg.find("[2x3]") != std::string::npos);
    CHECK(msg.find("[4x2]") != std::string::npos);
  }
}

TEST_CASE("matmul gradient matches finite differences on random 3x4 * 4x2") {
  Rng rng(42);
  Tensor a = rand_tensor({3, 4}, rng);
  Tensor b = rand_tensor({4, 2}, rng);
  auto build = [&]() { return sum_all(matmul(a, b)); };
  auto rep = gradcheck(build, {{"A", a}, {"B", b}}, 1e-5);
  CHECK(rep.max_rel_err < 1e-6);
}

TEST_CASE("softmax_scaled basics") {
  Tensor x = Tensor::from_data({1, 2}, {0.0, 0.0});
  Tensor y = softmax_scaled(x, 1.0);
  CHECK(y.data()[0] == doctest::Approx(0.5));
  CHECK(y.data()[1] == doctest::Approx(0.5));

  Tensor big = Tensor::from_data({1, 3}, {1000.0, 1000.0, 1000.0});
  Tensor yb = softmax_scaled(big, 1.0);
  for (double v : yb.data()) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  CHECK(all_finite(yb));

  CHECK_THROWS_AS(softmax_scaled(x, 0.0), ContractError);
  CHECK_THROWS_AS(softmax_scaled(x, -2.0), ContractError);
}

TEST_CASE("softmax_scaled rows sum to one and shift invariance") {
  Rng rng(7);
  Tensor x = rand_tensor({5, 8}, rng, -3.0, 3.0, false);
  const double temp = std::sqrt(128.0);
  Tensor y = softmax_scaled(x, temp);
  for (std::size_t i = 0; i < 5; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < 8; ++j) {
      CHECK(y.at(i, j) >= 0.0);
      s += y.at(i, j);
    }
    CHECK(std::abs(s - 1.0) < 1e-9);
  }
  Tensor shifted = add_const(x, 17.5);
  Tensor y2 = softmax_scaled(shifted, temp);
  for (std::size_t i = 0; i < y.size(); ++i)
    CHECK(std::abs(y.data()[i] - y2.data()[i]) < 1e-9);
}

TEST_CASE("softmax_scaled on a rank-3 tensor normalizes the last axis") {
  Rng rng(8);
  Tensor x = rand_tensor({2, 3, 4}, rng, -2.0, 2.0, false);
  Tensor y = softmax_scaled(x, 1.0);
  CHECK(y.shape() == std::vector<std::size_t>{2, 3, 4});
  for (std::size_t r = 0; r < 6; ++r) {
    double s = 0.0;
    for (std::size_t j = 0; j < 4; ++j) s += y.data()[r * 4 + j];
    CHECK(std::abs(s - 1.0) < 1e-9);
  }
}

TEST_CASE("activation examples") {
  Tensor x = Tensor::from_data({1, 2}, {-1.0, 2.0});
  Tensor r = activation(x, Activation::Relu);
  CHECK(r.data()[0] == 0.0);
  CHECK(r.data()[1] == 2.0);

  Tensor z = Tensor::from_data({1, 1}, {0.0});
  CHECK(activation(z, Activation::Tanh).data()[0] == 0.0);

  Tensor neg = Tensor::from_data({1, 1}, {-10.0});
  CHECK(activation(neg, Activation::LeakyRelu, 0.2).data()[0] ==
        doctest::Approx(-2.0));

  CHECK(activation_from_string("relu") == Activation::Relu);
  CHECK_THROWS_AS(activation_from_string("gelu"), ConfigError);
}

TEST_CASE("backward on linear loss gives outer-product gradient") {
  Tensor w = Tensor::from_data({2, 3}, {0.1, 0.2, 0.3, 0.4, 0.5, 0.6}, true);
  Tensor x = Tensor::from_data({3, 1}, {1.0, 2.0, 3.0});
  Tape tape;
  {
    TapeScope scope(tape);
    Tensor loss = sum_all(matmul(w, x));
    tape.backward(loss);
  }
  // d/dW sum(W x) = ones(2) outer x
  const double expect[6] = {1, 2, 3, 1, 2, 3};
  for (std::size_t i = 0; i < 6; ++i) CHECK(w.grad()[i] == expect[i]);
}

TEST_CASE("backward requires a scalar loss") {
  Tensor w = Tensor::from_data({2, 2}, {1, 2, 3, 4}, true);
  Tape tape;
  TapeScope scope(tape);
  Tensor out = scale(w, 2.0);
  CHECK_THROWS_AS(tape.backward(out), ContractError);
}

TEST_CASE("constant loss leaves all gradients zero") {
  Tensor w = Tensor::from_data({2, 2}, {1, 2, 3, 4}, true);
  Tensor c = Tensor::scalar(5.0);
  Tape tape;
  {
    TapeScope scope(tape);
    Tensor loss = scale(c, 2.0);  // no requires-grad ancestry
    tape.backward(loss);
  }
  for (double g : w.grad()) CHECK(g == 0.0);
}

TEST_CASE("tape reset empties it; double backward is an error") {
  Tensor w = Tensor::from_data({1, 1}, {3.0}, true);
  Tape tape;
  TapeScope scope(tape);
  Tensor loss = scale(w, 2.0);
  CHECK(tape.size() == 1);
  tape.backward(loss);
  CHECK(w.grad()[0] == 2.0);
  CHECK_THROWS_AS(tape.backward(loss), ContractError);

  // recording new work makes backward legal again
  Tensor loss2 = scale(w, 4.0);
  tape.backward(loss2);
  CHECK(w.grad()[0] == 4.0);  // grads are re-zeroed per backward

  tape.reset();
  CHECK(tape.size() == 0);
}

TEST_CASE("backward is deterministic: bit-identical gradients across runs") {
  auto run = [](std::vector<double>& out) {
    Rng rng(99);
    Tensor a = rand_tensor({4, 5}, rng);
    Tensor b = rand_tensor({5, 3}, rng);
    Tape tape;
    TapeScope scope(tape);
    Tensor h = relu(matmul(a, b));
    Tensor loss = sum_all(mul(h, h));
    tape.backward(loss);
    out.assign(a.grad().begin(), a.grad().end());
    out.insert(out.end(), b.grad().begin(), b.grad().end());
  };
  std::vector<double> g1, g2;
  run(g1);
  run(g2);
  REQUIRE(g1.size() == g2.size());
  CHECK(std::memcmp(g1.data(), g2.data(), g1.size() * sizeof(double)) == 0);
}

TEST_CASE("weight sharing accumulates gradients from every use") {
  Tensor w = Tensor::from_data({1, 1}, {2.0}, true);
  Tape tape;
  TapeScope scope(tape);
  // loss = w*3 + w*5 -> dw = 8
  Tensor loss = add(scale(w, 3.0), scale(w, 5.0));
  tape.backward(loss);
  CHECK(w.grad()[0] == 8.0);
}

TEST_CASE("per-op gradients match central finite differences") {
  Rng rng(1234);
  const double tol = 1e-4;

  SUBCASE("matmul") {
    Tensor a = rand_tensor({3, 4}, rng), b = rand_tensor({4, 2}, rng);
    CHECK(check_op_grad([&] { return matmul(a, b); }, {{"a", a}, {"b", b}})
              .max_rel_err < tol);
  }
  SUBCASE("transpose") {
    Tensor a = rand_tensor({3, 4}, rng);
    CHECK(check_op_grad([&] { return transpose(a); }, {{"a", a}}).max_rel_err <
          tol);
  }
  SUBCASE("add sub mul divide") {
    Tensor a = rand_tensor({3, 4}, rng), b = rand_tensor({3, 4}, rng);
    Tensor d = rand_tensor({3, 4}, rng, 0.5, 2.0);
    CHECK(check_op_grad([&] { return add(a, b); }, {{"a", a}, {"b", b}})
              .max_rel_err < tol);
    CHECK(check_op_grad([&] { return sub(a, b); }, {{"a", a}, {"b", b}})
              .max_rel_err < tol);
    CHECK(check_op_grad([&] { return mul(a, b); }, {{"a", a}, {"b", b}})
              .max_rel_err < tol);
    CHECK(check_op_grad([&] { return divide(a, d); }, {{"a", a}, {"d", d}})
              .max_rel_err < tol);
  }
  SUBCASE("row and column broadcasts") {
    Tensor x = rand_tensor({4, 3}, rng);
    Tensor rv = rand_tensor({1, 3}, rng);
    Tensor cv = rand_tensor({4, 1}, rng);
    Tensor cvp = rand_tensor({4, 1}, rng, 0.5, 2.0);
    CHECK(check_op_grad([&] { return add_rowvec(x, rv); }, {{"x", x}, {"v", rv}})
              .max_rel_err < tol);
    CHECK(check_op_grad([&] { return mul_rowvec(x, rv); }, {{"x", x}, {"v", rv}})
              .max_rel_err < tol);
    CHECK(check_op_grad([&] { return add_colvec(x, cv); }, {{"x", x}, {"v", cv}})
              .max_rel_err < tol);
    CHECK(check_op_grad([&] { return mul_colvec(x, cv); }, {{"x", x}, {"v", cv}})
              .max_rel_err < tol);
    CHECK(
        check_op_grad([&] { return div_colvec(x, cvp); }, {{"x", x}, {"v", cvp}})
            .max_rel_err < tol);
  }
  SUBCASE("scalar ops") {
    Tensor x = rand_tensor({3, 3}, rng);
    Tensor s = rand_tensor({1, 1}, rng);
    CHECK(check_op_grad([&] { return scale(x, -1.7); }, {{"x", x}}).max_rel_err <
          tol);
    CHECK(check_op_grad([&] { return add_const(x, 2.5); }, {{"x", x}})
              .max_rel_err < tol);
    CHECK(check_op_grad([&] { return mul_scalar(x, s); }, {{"x", x}, {"s", s}})
              .max_rel_err < tol);
  }
  SUBCASE("activations") {
    Tensor x = rand_tensor_nonzero({4, 4}, rng);
    Tensor p = rand_tensor({4, 4}, rng, 0.5, 2.0);
    CHECK(check_op_grad([&] { return relu(x); }, {{"x", x}}).max_rel_err < tol);
    CHECK(check_op_grad([&] { return leaky_relu(x, 0.2); }, {{"x", x}})
              .max_rel_err < tol);
    CHECK(check_op_grad([&] { return tanh_op(x); }, {{"x", x}}).max_rel_err <
          tol);
    CHECK(check_op_grad([&] { return exp_op(x); }, {{"x", x}}).max_rel_err <
          tol);
    CHECK(check_op_grad([&] { return log_op(p); }, {{"p", p}}).max_rel_err <
          tol);
    CHECK(check_op_grad([&] { return sqrt_op(p); }, {{"p", p}}).max_rel_err <
          tol);
  }
  SUBCASE("softmax_scaled") {
    Tensor x = rand_tensor({3, 5}, rng);
    CHECK(check_op_grad([&] { return softmax_scaled(x, 1.0); }, {{"x", x}})
              .max_rel_err < tol);
    CHECK(check_op_grad([&] { return softmax_scaled(x, 11.3137); }, {{"x", x}})
              .max_rel_err < tol);
  }
  SUBCASE("concat and slice") {
    Tensor a = rand_tensor({2, 3}, rng), b = rand_tensor({4, 3}, rng);
    Tensor c = rand_tensor({2, 5}, rng);
    CHECK(check_op_grad([&] { return concat_rows({a, b}); },
                        {{"a", a}, {"b", b}})
              .max_rel_err < tol);
    CHECK(check_op_grad([&] { return concat_cols({a, c}); },
                        {{"a", a}, {"c", c}})
              .max_rel_err < tol);
    CHECK(check_op_grad([&] { return slice_cols(c, 1, 3); }, {{"c", c}})
              .max_rel_err < tol);
  }
  SUBCASE("gather scatter segment") {
    Tensor x = rand_tensor({5, 3}, rng);
    std::vector<std::uint32_t> idx = {4, 0, 0, 2};  // duplicate tests accumulation
    CHECK(check_op_grad([&] { return gather_rows(x, idx); }, {{"x", x}})
              .max_rel_err < tol);
    Tensor r = rand_tensor({3, 2}, rng);
    std::vector<std::uint32_t> sidx = {3, 0, 1};
    CHECK(check_op_grad([&] { return scatter_rows(r, sidx, 5); }, {{"r", r}})
              .max_rel_err < tol);
    Tensor e = rand_tensor({6, 2}, rng);
    std::vector<std::uint32_t> seg = {0, 2, 2, 1, 0, 2};
    CHECK(check_op_grad([&] { return segment_sum(e, seg, 4); }, {{"e", e}})
              .max_rel_err < tol);
  }
  SUBCASE("chunk ops") {
    Tensor x = rand_tensor({3, 8}, rng);
    Tensor c = rand_tensor({3, 2}, rng);
    CHECK(check_op_grad([&] { return chunk_sum(x, 4); }, {{"x", x}})
              .max_rel_err < tol);
    CHECK(check_op_grad([&] { return chunk_expand(c, 3); }, {{"c", c}})
              .max_rel_err < tol);
  }
  SUBCASE("reductions") {
    Tensor x = rand_tensor({4, 5}, rng);
    CHECK(check_op_grad([&] { return row_sum(x); }, {{"x", x}}).max_rel_err <
          tol);
    CHECK(check_op_grad([&] { return row_mean(x); }, {{"x", x}}).max_rel_err <
          tol);
    CHECK(check_op_grad([&] { return col_sum(x); }, {{"x", x}}).max_rel_err <
          tol);
    CHECK(check_op_grad([&] { return col_mean(x); }, {{"x", x}}).max_rel_err <
          tol);
    CHECK(check_op_grad([&] { return col_max(x); }, {{"x", x}}).max_rel_err <
          tol);
    CHECK(check_op_grad([&] { return sum_all(x); }, {{"x", x}}).max_rel_err <
          tol);
    CHECK(check_op_grad([&] { return mean_all(x); }, {{"x", x}}).max_rel_err <
          tol);
  }
  SUBCASE("take_per_row and apply_mask") {
    Tensor x = rand_tensor({4, 3}, rng);
    std::vector<std::uint32_t> idx = {2, 0, 1, 1};
    CHECK(check_op_grad([&] { return take_per_row(x, idx); }, {{"x", x}})
              .max_rel_err < tol);
    std::vector<double> mask(12);
    for (auto& m : mask) m = rng.bernoulli(0.5) ? 1.0 : 0.0;
    CHECK(check_op_grad([&] { return apply_mask(x, mask); }, {{"x", x}})
              .max_rel_err < tol);
  }
}

TEST_CASE("segment_sum groups rows; chunk ops match by-hand values") {
  Tensor x = Tensor::from_data({4, 2}, {1, 2, 3, 4, 5, 6, 7, 8});
  std::vector<std::uint32_t> seg = {1, 0, 1, 1};
  Tensor s = segment_sum(x, seg, 3);
  CHECK(s.at(0, 0) == 3.0);
  CHECK(s.at(0, 1) == 4.0);
  CHECK(s.at(1, 0) == 13.0);
  CHECK(s.at(1, 1) == 16.0);
  CHECK(s.at(2, 0) == 0.0);

  Tensor c = chunk_sum(Tensor::from_data({1, 4}, {1, 2, 10, 20}), 2);
  CHECK(c.at(0, 0) == 3.0);
  CHECK(c.at(0, 1) == 30.0);

  Tensor e = chunk_expand(Tensor::from_data({1, 2}, {4, 9}), 3);
  const double expect[6] = {4, 4, 4, 9, 9, 9};
  for (std::size_t i = 0; i < 6; ++i) CHECK(e.data()[i] == expect[i]);
}

TEST_CASE("scatter_rows rejects duplicate targets") {
  Tensor r = Tensor::zeros({2, 2});
  CHECK_THROWS_AS(scatter_rows(r, {1, 1}, 4), ContractError);
}

TEST_CASE("ops run forward-only outside a tape scope") {
  Tensor w = Tensor::from_data({2, 2}, {1, 2, 3, 4}, true);
  Tensor out = scale(w, 2.0);  // no active tape
  CHECK(out.data()[3] == 8.0);
  Tape tape;
  CHECK(tape.size() == 0);
}

TEST_CASE("corrupt-backward debug hook perturbs a single op's gradient") {
  debug::set_corrupt_backward_op("mul");
  Tensor a = Tensor::from_data({1, 2}, {1.0, 2.0}, true);
  Tensor b = Tensor::from_data({1, 2}, {3.0, 4.0}, true);
  auto rep = check_op_grad([&] { return mul(a, b); }, {{"a", a}, {"b", b}});
  debug::set_corrupt_backward_op("");
  CHECK(rep.max_rel_err > 1e-3);
  auto clean = check_op_grad([&] { return mul(a, b); }, {{"a", a}, {"b", b}});
  CHECK(clean.max_rel_err < 1e-4);
}
