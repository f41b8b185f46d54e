#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "stepbcd/matrix.hpp"
#include "stepbcd/rng.hpp"

namespace stepbcd {

inline constexpr double kDefaultEpsTiny = 1e-10;

/// Layer widths d_0..d_h of a fully connected network with h weight layers.
struct NetworkShape {
  std::vector<std::size_t> dims;

  std::size_t layers() const noexcept { return dims.empty() ? 0 : dims.size() - 1; }
  std::size_t input_dim() const { return dims.front(); }
  std::size_t output_dim() const { return dims.back(); }

  /// Throws std::invalid_argument unless there are >= 2 widths, all positive.
  void validate() const;

  /// Parses "784,200,200,10".
  static NetworkShape parse(const std::string& text);
  std::string to_string() const;

  bool operator==(const NetworkShape&) const = default;
};

/// Penalty, regularization and step constants of the training objective.
///
/// Defaults are the published MNIST settings.
struct Hyperparams {
  double tau = 1e-6;     // weight of ||U_i - W_i V_{i-1}||^2
  double pi = 1e-7;      // weight of ||V_i - step(U_i)||^2
  double gamma = 1e-8;   // Frobenius regularizer
  double lambda = 0.052; // column-sparsity regularizer
  double beta = 0.00072; // proximal step of the weight solver
  std::uint64_t L = 1;   // inner proximal-gradient iterations
  std::uint64_t K = 35;  // outer iterations
  double eps_tiny = kDefaultEpsTiny;

  /// Throws std::invalid_argument unless tau, pi, gamma, beta, eps_tiny > 0 and lambda >= 0.
  void validate() const;

  bool operator==(const Hyperparams&) const = default;
};

/// The blocks updated by the coordinate descent loop.
///
/// W[i-1] is W_i (d_i x d_{i-1}), U[i-1] is U_i (d_i x N), and V[i-1] is V_i
/// (d_i x N) for the h-1 hidden layers. The input matrix V_0 lives in the dataset.
struct TrainState {
  std::vector<Matrix> W;
  std::vector<Matrix> U;
  std::vector<Matrix> V;

  std::size_t layers() const noexcept { return W.size(); }
  std::size_t samples() const { return U.empty() ? 0 : U.front().cols(); }

  /// Throws DimensionError if any block disagrees with `shape` and `samples`.
  void check(const NetworkShape& shape, std::size_t samples) const;
};

/// Weights i.i.d. Normal(0, scale^2); U and V from one step-activated forward
/// pass over `inputs`, so both penalty terms start at zero.
TrainState init_gaussian(const NetworkShape& shape, double scale, Rng& rng, const Matrix& inputs);

/// Recomputes U_i = W_i V_{i-1} and V_i = step(U_i) for the current weights.
void forward_fill(TrainState& state, const Matrix& inputs);

}  // namespace stepbcd
