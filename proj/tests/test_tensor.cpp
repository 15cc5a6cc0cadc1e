#include <cmath>
#include <random>

#include "doctest.h"
#include "gfm/ops.hpp"
#include "gfm/tensor.hpp"
#include "oracles.hpp"

using gfm::Tensor;
namespace ops = gfm::ops;

namespace {

void check_values(const Tensor& t, const std::vector<double>& expected, double tol = 1e-12) {
  REQUIRE(t.numel() == expected.size());
  for (std::size_t i = 0; i < expected.size(); ++i) CHECK(t.data()[i] == doctest::Approx(expected[i]).epsilon(tol));
}

Tensor random_matrix(std::mt19937_64& rng, std::size_t r, std::size_t c) {
  return Tensor({r, c}, oracle::uniform(rng, r * c));
}

}  // namespace

TEST_SUITE("tensor") {

TEST_CASE("tensor construction validates shape") {
  CHECK_THROWS_AS(Tensor({2, 3}, std::vector<double>(5)), gfm::DimensionError);
  const Tensor t = Tensor::zeros({2, 3});
  CHECK(t.rows() == 2);
  CHECK(t.cols() == 3);
  CHECK_FALSE(t.has_grad());
  Tensor c = t.clone();
  CHECK_FALSE(c.same_storage(t));
}

TEST_CASE("matmul examples") {
  const Tensor eye = Tensor::matrix(2, 2, {1, 0, 0, 1});
  const Tensor b = Tensor::matrix(2, 2, {5, 6, 7, 8});
  check_values(ops::matmul(eye, b), {5, 6, 7, 8});

  const Tensor row = Tensor::matrix(1, 2, {1, 2});
  const Tensor col = Tensor::matrix(2, 1, {3, 4});
  const Tensor r = ops::matmul(row, col);
  CHECK(r.shape() == gfm::Shape{1, 1});
  CHECK(r.item() == 11.0);

  check_values(ops::matmul(Tensor::zeros({3, 2}), b), std::vector<double>(6, 0.0));
  CHECK_THROWS_AS(ops::matmul(row, row), gfm::DimensionError);
}

TEST_CASE("matmul matches a triple loop") {
  std::mt19937_64 rng(1);
  const Tensor a = random_matrix(rng, 4, 5), b = random_matrix(rng, 5, 3);
  std::vector<double> expected(12, 0.0);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 3; ++j)
      for (std::size_t k = 0; k < 5; ++k) expected[i * 3 + j] += a.at(i, k) * b.at(k, j);
  check_values(ops::matmul(a, b), expected);
}

TEST_CASE("softmax examples") {
  check_values(ops::softmax_rows(Tensor::matrix(1, 2, {0, 0}), 1.0), {0.5, 0.5});
  check_values(ops::softmax_rows(Tensor::matrix(1, 3, {7, 7, 7}), 1.0), {1.0 / 3, 1.0 / 3, 1.0 / 3});
  check_values(ops::softmax_rows(Tensor::matrix(1, 2, {std::log(2.0), 0}), 1.0), {2.0 / 3, 1.0 / 3});
  const std::vector<std::uint8_t> mask{1, 0, 1};
  check_values(ops::softmax_rows(Tensor::matrix(1, 3, {0, 100, 0}), 1.0, mask), {0.5, 0.0, 0.5});
  CHECK_THROWS(ops::softmax_rows(Tensor::matrix(1, 2, {0, 0}), 0.0));
}

TEST_CASE("conv1d examples") {
  const Tensor x = Tensor::matrix(1, 4, {1, 2, 3, 4});
  check_values(ops::conv1d(x, Tensor::matrix(1, 2, {1, 1}), 1), {3, 5, 7});
  check_values(ops::conv1d(x, Tensor::matrix(1, 2, {1, 1}), 2), {3, 7});
  check_values(ops::conv1d(x, Tensor::matrix(1, 1, {1}), 1), {1, 2, 3, 4});
  CHECK_THROWS(ops::conv1d(x, Tensor::matrix(1, 5, {1, 1, 1, 1, 1}), 1));
  CHECK_THROWS(ops::conv1d(x, Tensor::matrix(1, 1, {1}), 0));
}

TEST_CASE("grouped conv examples") {
  check_values(ops::grouped_conv1d(Tensor::zeros({3, 4}), Tensor::matrix(3, 4, std::vector<double>(12, 1.0))),
               {0, 0, 0});
  check_values(ops::grouped_conv1d(Tensor::matrix(1, 2, {1, 2}), Tensor::matrix(1, 2, {3, 4})), {11});
  const Tensor x = Tensor::matrix(2, 2, {1, 2, 5, 6});
  const Tensor k = Tensor::matrix(2, 2, {3, 4, 7, 8});
  const Tensor xs = Tensor::matrix(2, 2, {5, 6, 1, 2});
  const Tensor ks = Tensor::matrix(2, 2, {7, 8, 3, 4});
  const Tensor a = ops::grouped_conv1d(x, k), b = ops::grouped_conv1d(xs, ks);
  CHECK(a.data()[0] == b.data()[1]);
  CHECK(a.data()[1] == b.data()[0]);
}

TEST_CASE("batch norm examples") {
  gfm::ops::BatchNormStats stats(2);
  const Tensor gamma = Tensor::full({1, 2}, 1.0), beta = Tensor::zeros({1, 2});
  const Tensor constant = Tensor::matrix(3, 2, {4, 1, 4, 2, 4, 3});
  const Tensor out = ops::batch_norm(constant, gamma, beta, stats, ops::Mode::kTrain);
  for (std::size_t r = 0; r < 3; ++r) CHECK(std::abs(out.at(r, 0)) <= 1e-2);

  std::mt19937_64 rng(2);
  const Tensor x = random_matrix(rng, 6, 2);
  const std::vector<std::uint8_t> mask{1, 1, 0, 1, 1, 0};
  gfm::ops::BatchNormStats s2(2);
  const Tensor y = ops::batch_norm(x, gamma, beta, s2, ops::Mode::kTrain, mask);
  for (std::size_t c = 0; c < 2; ++c) {
    double mean = 0, var = 0;
    for (std::size_t r = 0; r < 6; ++r)
      if (mask[r]) mean += y.at(r, c) / 4;
    for (std::size_t r = 0; r < 6; ++r)
      if (mask[r]) var += (y.at(r, c) - mean) * (y.at(r, c) - mean) / 4;
    CHECK(std::abs(mean) < 1e-9);
    CHECK(var == doctest::Approx(1.0).epsilon(1e-3));
    CHECK(y.at(2, c) == 0.0);
    CHECK(y.at(5, c) == 0.0);
  }

  gfm::ops::BatchNormStats s3(2);
  const Tensor z = ops::batch_norm(x, Tensor::zeros({1, 2}), Tensor::full({1, 2}, 5.0), s3, ops::Mode::kTrain, mask);
  for (std::size_t r = 0; r < 6; ++r)
    for (std::size_t c = 0; c < 2; ++c) CHECK(z.at(r, c) == (mask[r] ? 5.0 : 0.0));
}

TEST_CASE("batch norm eval uses running statistics verbatim") {
  gfm::ops::BatchNormStats stats(1);
  stats.running_mean = {2.0};
  stats.running_var = {4.0};
  const Tensor y = ops::batch_norm(Tensor::matrix(2, 1, {2, 4}), Tensor::full({1, 1}, 1.0), Tensor::zeros({1, 1}),
                                   stats, ops::Mode::kEval);
  CHECK(y.at(0, 0) == 0.0);
  CHECK(y.at(1, 0) == doctest::Approx(2.0 / std::sqrt(4.0 + stats.eps)));
  CHECK(stats.running_mean[0] == 2.0);
}

TEST_CASE("elementwise examples") {
  CHECK(ops::tanh(Tensor::scalar(0)).item() == 0.0);
  CHECK(ops::sigmoid(Tensor::scalar(0)).item() == 0.5);
  CHECK(ops::relu(Tensor::scalar(-3)).item() == 0.0);
  const double e = std::exp(1.0);
  const double tanh_half = (e - 1.0) / (e + 1.0);  // (e^{2x}-1)/(e^{2x}+1) at x = 0.5
  CHECK(ops::tanh(Tensor::scalar(0.5)).item() == doctest::Approx(tanh_half).epsilon(1e-12));
  CHECK(ops::tanh(Tensor::scalar(0.5)).item() == doctest::Approx(0.46212).epsilon(1e-5));
  std::mt19937_64 rng(3);
  const Tensor x = random_matrix(rng, 2, 3);
  check_values(ops::add(x, Tensor::zeros({2, 3})), {x.data().begin(), x.data().end()});
  check_values(ops::sub(x, x), std::vector<double>(6, 0.0));
  check_values(ops::scale(x, 2.0), {2 * x.data()[0], 2 * x.data()[1], 2 * x.data()[2], 2 * x.data()[3],
                                    2 * x.data()[4], 2 * x.data()[5]});
}

TEST_CASE("backward examples") {
  Tensor x = Tensor::matrix(1, 1, {3.0}, true);
  {
    gfm::GradientTape tape;
    const Tensor loss = ops::sum(ops::mul(x, x));
    tape.backward(loss);
  }
  REQUIRE(x.has_grad());
  CHECK(x.grad()[0] == doctest::Approx(6.0));

  std::mt19937_64 rng(4);
  Tensor y({1, 5}, oracle::uniform(rng, 5), true);
  Tensor unused({1, 2}, {1.0, 2.0}, true);
  {
    gfm::GradientTape tape;
    tape.backward(ops::sum(ops::tanh(y)));
  }
  for (std::size_t i = 0; i < 5; ++i) {
    const double t = std::tanh(y.data()[i]);
    CHECK(y.grad()[i] == doctest::Approx(1 - t * t).epsilon(1e-12));
  }
  CHECK_FALSE(unused.has_grad());
  for (double g : unused.grad_or_zero()) CHECK(g == 0.0);
}

TEST_CASE("backward requires a scalar loss") {
  Tensor x = Tensor::matrix(1, 2, {1, 2}, true);
  gfm::GradientTape tape;
  const Tensor y = ops::scale(x, 2.0);
  CHECK_THROWS(tape.backward(y));
}

TEST_CASE("finite difference check examples") {
  std::mt19937_64 rng(5);
  Tensor x = random_matrix(rng, 4, 1);
  const Tensor a = random_matrix(rng, 1, 4);
  CHECK(gfm::finite_difference_check([&](const Tensor& v) { return ops::matmul(a, v); }, x) <= 1e-9);

  const Tensor w = random_matrix(rng, 4, 4);
  CHECK(gfm::finite_difference_check([&](const Tensor& v) { return ops::sum(ops::sigmoid(ops::matmul(w, v))); }, x) <
        1e-4);
  CHECK_THROWS_AS(gfm::finite_difference_check([&](const Tensor& v) { return ops::sum(v); }, x, 0.0),
                  std::invalid_argument);
}

TEST_CASE("tape records in topological order and is cleared by backward") {
  Tensor x = Tensor::matrix(1, 1, {2.0}, true);
  gfm::GradientTape tape;
  const Tensor a = ops::exp(x);
  const Tensor b = ops::mul(a, x);
  REQUIRE(a.node_id().has_value());
  REQUIRE(b.node_id().has_value());
  CHECK(*a.node_id() < *b.node_id());
  CHECK(tape.size() == 2);
  tape.backward(ops::sum(b));
  CHECK(tape.size() == 0);
  CHECK(x.grad()[0] == doctest::Approx(std::exp(2.0) * 3.0));
}

TEST_CASE("no recording without gradients") {
  gfm::GradientTape tape;
  const Tensor y = ops::tanh(Tensor::matrix(1, 2, {1, 2}));
  CHECK(tape.size() == 0);
  CHECK_FALSE(y.requires_grad());
}

TEST_CASE("structure ops") {
  const Tensor x = Tensor::matrix(3, 2, {1, 2, 3, 4, 5, 6});
  check_values(ops::transpose(x), {1, 3, 5, 2, 4, 6});
  check_values(ops::slice_rows(x, 1, 2), {3, 4, 5, 6});
  check_values(ops::slice_cols(x, 1, 1), {2, 4, 6});
  const std::vector<std::ptrdiff_t> idx{2, -1, 0};
  check_values(ops::gather_rows(x, idx), {5, 6, 0, 0, 1, 2});
  const std::vector<std::size_t> seg{0, 1, 3};
  check_values(ops::segment_sum(x, seg), {1, 2, 8, 10});
  check_values(ops::segment_mean(x, seg), {1, 2, 4, 5});
  check_values(ops::row_sum(x), {3, 7, 11});
  check_values(ops::row_norm(Tensor::matrix(1, 2, {3, 4})), {5});
  gfm::ops::Adjacency adj;
  adj.offsets = {0, 1, 3, 3};
  adj.neighbors = {1, 0, 2};
  check_values(ops::aggregate_neighbors(x, adj, ops::Aggregation::kSum), {3, 4, 6, 8, 0, 0});
  check_values(ops::aggregate_neighbors(x, adj, ops::Aggregation::kMean), {3, 4, 3, 4, 0, 0});
}

TEST_CASE("losses") {
  const Tensor y = Tensor::matrix(2, 1, {0.3, 0.7});
  CHECK(ops::mse_loss(y, y).item() == 0.0);
  CHECK(ops::mse_loss(Tensor::matrix(2, 1, {0, 1}), Tensor::matrix(2, 1, {1, 0})).item() == doctest::Approx(1.0));
  CHECK(ops::mse_loss(Tensor::matrix(1, 1, {0.5}), Tensor::matrix(1, 1, {0.0})).item() == doctest::Approx(0.25));
  CHECK(ops::bce_loss(Tensor::matrix(1, 1, {0.5}), Tensor::matrix(1, 1, {1.0})).item() ==
        doctest::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK(ops::bce_loss(Tensor::matrix(1, 1, {0.5}), Tensor::matrix(1, 1, {0.0})).item() ==
        doctest::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK(ops::bce_loss(Tensor::matrix(1, 1, {1.0 - 1e-7}), Tensor::matrix(1, 1, {1.0})).item() <= 1.7e-7);
  const double a = ops::bce_loss(Tensor::matrix(2, 1, {0.3, 0.7}), Tensor::matrix(2, 1, {1, 0})).item();
  const double b = ops::bce_loss(Tensor::matrix(2, 1, {0.7, 0.3}), Tensor::matrix(2, 1, {0, 1})).item();
  CHECK(a == b);
}

}  // TEST_SUITE
