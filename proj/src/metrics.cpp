#include "stepbcd/metrics.hpp"

#include <algorithm>
#include <string>

#include "stepbcd/errors.hpp"
#include "stepbcd/prox.hpp"
#include "stepbcd/trainer.hpp"

namespace stepbcd {

namespace {

void check_chain(const std::vector<Matrix>& W, std::size_t input_dim) {
  if (W.empty()) throw DimensionError("empty weight list");
  std::size_t width = input_dim;
  for (std::size_t i = 0; i < W.size(); ++i) {
    if (W[i].cols() != width)
      throw DimensionError("layer " + std::to_string(i + 1) + " expects " +
                           std::to_string(W[i].cols()) + " inputs but receives " +
                           std::to_string(width));
    width = W[i].rows();
  }
}

std::size_t argmax_lowest(std::span<const double> v) {
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

}  // namespace

std::size_t forward_predict(const std::vector<Matrix>& W, std::span<const double> x) {
  check_chain(W, x.size());
  Matrix a(x.size(), 1);
  std::copy(x.begin(), x.end(), a.data().begin());
  for (std::size_t i = 0; i < W.size(); ++i) {
    a = matmul(W[i], a);
    if (i + 1 < W.size()) a = step(a);
  }
  return argmax_lowest(a.data());
}

std::vector<std::size_t> predict_all(const std::vector<Matrix>& W, const Matrix& X) {
  check_chain(W, X.rows());
  Matrix a = X;
  for (std::size_t i = 0; i < W.size(); ++i) {
    a = matmul(W[i], a);
    if (i + 1 < W.size()) a = step(a);
  }
  std::vector<std::size_t> out(a.cols());
  for (std::size_t s = 0; s < a.cols(); ++s) out[s] = argmax_lowest(a.column(s));
  return out;
}

EvalResult evaluate(const std::vector<Matrix>& W, const Dataset& data) {
  if (!W.empty() && W.back().rows() != data.classes())
    throw DimensionError("network emits " + std::to_string(W.back().rows()) +
                         " classes, dataset has " + std::to_string(data.classes()));
  const auto predicted = predict_all(W, data.X);
  EvalResult r;
  r.total = data.size();
  r.per_class_errors.assign(data.classes(), 0);
  for (std::size_t s = 0; s < r.total; ++s) {
    const std::size_t y = data.label(s);
    if (predicted[s] == y)
      ++r.correct;
    else
      ++r.per_class_errors[y];
  }
  r.error_rate =
      r.total ? static_cast<double>(r.total - r.correct) / static_cast<double>(r.total) : 0.0;
  return r;
}

std::size_t filter_count(const std::vector<Matrix>& W, FilterConvention convention) {
  std::size_t count = 0;
  if (convention == FilterConvention::Outgoing) {
    for (std::size_t i = 1; i < W.size(); ++i) count += nonzero_columns(W[i]);
  } else {
    for (std::size_t i = 0; i + 1 < W.size(); ++i) count += nonzero_rows(W[i]);
  }
  return count;
}

std::size_t param_count(const std::vector<Matrix>& W, bool count_pruned) {
  std::size_t count = 0;
  for (const auto& w : W) count += count_pruned ? w.size() : w.rows() * nonzero_columns(w);
  return count;
}

double flops_estimate(const std::vector<Matrix>& W) {
  double total = 0.0;
  for (const auto& w : W)
    total += 2.0 * static_cast<double>(w.rows()) * static_cast<double>(nonzero_columns(w));
  return total;
}

}  // namespace stepbcd
