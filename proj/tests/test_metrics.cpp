#include <doctest.h>

#include "oracles.hpp"
#include "stepbcd/errors.hpp"
#include "stepbcd/metrics.hpp"

using namespace stepbcd;

namespace {

std::vector<Matrix> random_net(const NetworkShape& shape, Rng& rng) {
  std::vector<Matrix> W;
  for (std::size_t i = 0; i < shape.layers(); ++i)
    W.push_back(oracle::random_matrix(shape.dims[i + 1], shape.dims[i], rng));
  return W;
}

Dataset labelled(const Matrix& X, const std::vector<std::size_t>& labels, std::size_t classes) {
  Dataset d{X, Matrix(classes, X.cols()), {}};
  for (std::size_t s = 0; s < labels.size(); ++s) d.Y(labels[s], s) = 1.0;
  return d;
}

}  // namespace

TEST_SUITE("metrics") {

TEST_CASE("single-layer prediction is the argmax, lowest index on ties") {
  const std::vector<Matrix> eye{Matrix::identity(3)};
  CHECK(forward_predict(eye, std::vector<double>{0, 1, 0}) == 1);
  CHECK(forward_predict(eye, std::vector<double>{0.2, 0.2, 0.2}) == 0);
  CHECK(forward_predict(eye, std::vector<double>{0, 5, 5}) == 1);
  CHECK(forward_predict({Matrix(4, 2)}, std::vector<double>{0.3, 0.7}) == 0);
  CHECK_THROWS_AS(forward_predict(eye, std::vector<double>{1, 2}), DimensionError);
}

TEST_CASE("predictions agree with the reference forward pass") {
  Rng rng(1);
  const auto shape = NetworkShape::parse("6,9,7,4");
  for (int trial = 0; trial < 50; ++trial) {
    const auto W = random_net(shape, rng);
    const Matrix X = oracle::random_matrix(6, 20, rng);
    const auto all = predict_all(W, X);
    for (std::size_t s = 0; s < X.cols(); ++s) {
      const auto x = X.column(s);
      REQUIRE(all[s] == oracle::predict_ref(W, x));
      REQUIRE(forward_predict(W, x) == all[s]);
    }
  }
}

TEST_CASE("evaluate counts errors per class") {
  const std::vector<Matrix> eye{Matrix::identity(2)};
  const Matrix X{{1, 0, 1, 0}, {0, 1, 0, 1}};

  auto r = evaluate(eye, labelled(X, {0, 1, 0, 1}, 2));
  CHECK(r.error_rate == 0.0);
  CHECK(r.correct == 4);
  CHECK(r.total == 4);

  r = evaluate(eye, labelled(X, {1, 0, 1, 0}, 2));
  CHECK(r.error_rate == 1.0);
  CHECK(r.per_class_errors == std::vector<std::size_t>{2, 2});

  r = evaluate(eye, labelled(X, {0, 0, 0, 0}, 2));
  CHECK(r.error_rate == 0.5);
  CHECK(r.per_class_errors == std::vector<std::size_t>{2, 0});

  CHECK_THROWS_AS(evaluate(eye, labelled(X, {0, 1, 2, 0}, 3)), DimensionError);
}

TEST_CASE("positive rescaling of any layer leaves predictions unchanged") {
  Rng rng(2);
  const auto shape = NetworkShape::parse("5,8,6,3");
  const auto W = random_net(shape, rng);
  const Matrix X = oracle::random_matrix(5, 40, rng);
  const auto base = predict_all(W, X);
  for (int trial = 0; trial < 100; ++trial) {
    auto scaled = W;
    const std::size_t layer = rng.below(W.size());
    const double c = std::exp(rng.uniform(-5.0, 5.0));
    scaled[layer] = c * scaled[layer];
    REQUIRE(predict_all(scaled, X) == base);
  }
}

TEST_CASE("error rate does not depend on sample order") {
  Rng rng(3);
  const auto shape = NetworkShape::parse("5,7,3");
  const auto W = random_net(shape, rng);
  const Dataset d = oracle::separable_data(5, 3, 60, rng);
  const double err = evaluate(W, d).error_rate;
  for (int trial = 0; trial < 10; ++trial) {
    const auto perm = shuffled_indices(d.size(), rng);
    REQUIRE(evaluate(W, d.subset(perm)).error_rate == err);
  }
}

TEST_CASE("filter, parameter and flop counts") {
  std::vector<Matrix> dense;
  for (const auto& [r, c] : {std::pair{2000, 784}, {2000, 2000}, {10, 2000}})
    dense.emplace_back(static_cast<std::size_t>(r), static_cast<std::size_t>(c), 1.0);
  CHECK(param_count(dense, true) == 5588000);
  CHECK(param_count(dense, false) == 5588000);
  CHECK(filter_count(dense) == 4000);
  CHECK(filter_count(dense, FilterConvention::Incoming) == 4000);
  CHECK(flops_estimate(dense) == 2.0 * 5588000);

  Matrix w(4, 4, 1.0);
  for (std::size_t r = 0; r < 4; ++r) w(r, 2) = 0.0;
  CHECK(param_count({w}, false) == 12);
  CHECK(param_count({w}, true) == 16);
  CHECK(param_count({Matrix(3, 4, 0.5)}, false) == 12);
  CHECK(flops_estimate({Matrix(3, 4, 0.5)}) == 24.0);
  CHECK(flops_estimate({w}) == 24.0);

  // Unit 1 of the hidden layer has no outgoing weights; unit 0 has no incoming ones.
  Matrix w1(2, 3, 1.0);
  for (std::size_t c = 0; c < 3; ++c) w1(0, c) = 0.0;
  Matrix w2(2, 2, 1.0);
  w2(0, 1) = w2(1, 1) = 0.0;
  CHECK(filter_count({w1, w2}) == 1);
  CHECK(filter_count({w1, w2}, FilterConvention::Incoming) == 1);
  CHECK(filter_count({Matrix(2, 3), Matrix(2, 2)}) == 0);
}

}  // TEST_SUITE
