#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "stepbcd/dataio.hpp"
#include "stepbcd/matrix.hpp"

namespace stepbcd {

struct EvalResult {
  double error_rate = 0.0;
  std::size_t correct = 0;
  std::size_t total = 0;
  /// Misclassified samples per true class.
  std::vector<std::size_t> per_class_errors;
};

/// Step after every layer but the last, then argmax. Ties go to the lowest index.
std::size_t forward_predict(const std::vector<Matrix>& W, std::span<const double> x);

/// Predictions for every column of X.
std::vector<std::size_t> predict_all(const std::vector<Matrix>& W, const Matrix& X);

EvalResult evaluate(const std::vector<Matrix>& W, const Dataset& data);

/// Outgoing: hidden unit j of layer i is alive iff column j of W_{i+1} is nonzero.
/// Incoming: alive iff row j of W_i is nonzero.
enum class FilterConvention { Outgoing, Incoming };

std::size_t filter_count(const std::vector<Matrix>& W,
                         FilterConvention convention = FilterConvention::Outgoing);

/// All weight entries, or only those in nonzero columns when count_pruned is false.
std::size_t param_count(const std::vector<Matrix>& W, bool count_pruned);

/// Per-sample estimate: sum over layers of 2 * rows * (nonzero columns).
double flops_estimate(const std::vector<Matrix>& W);

}  // namespace stepbcd
