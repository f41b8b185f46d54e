#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "stepbcd/matrix.hpp"
#include "stepbcd/network.hpp"

namespace stepbcd {

/// Entrywise 0/1 activation: 1 where x > 0, else 0 (so step(0) == 0).
Matrix step(const Matrix& x);

/// 1 at every index attaining the maximum, 0 elsewhere. Ties give several 1s.
std::vector<double> hardmax(std::span<const double> a);

/// Index of the single 1 in a one-hot column, or npos if the column is not one-hot.
std::size_t one_hot_index(std::span<const double> column);
inline constexpr std::size_t npos = static_cast<std::size_t>(-1);

/// Output-layer column problem: minimize ||y - hardmax(u)||^2 + mu ||u - b||^2
/// where y is the one-hot vector with its 1 at y_index.
struct HardmaxProxInput {
  std::size_t y_index = 0;
  std::vector<double> b;
  double mu = 1.0;
};

/// Closed-form two-candidate solution of the output-layer column problem.
///
/// With Delta = max(b) - b[y]: returns b when mu*Delta^2 > ||y - hardmax(b)||^2,
/// b + (Delta + eps_tiny) e_y when it is smaller. Equality keeps b.
std::vector<double> prox_hardmax_column(const HardmaxProxInput& in,
                                        double eps_tiny = kDefaultEpsTiny);

/// Columnwise output-layer update with mu = tau * n_samples.
///
/// `target` holds W_h V_{h-1}; every column of `labels` must be one-hot.
Matrix prox_hardmax_matrix(const Matrix& target, const Matrix& labels, double tau,
                           std::size_t n_samples, double eps_tiny = kDefaultEpsTiny);

/// Hidden-layer scalar problem: minimize (a - step(u))^2 + rho (u - b)^2.
struct StepProxInput {
  double a = 0.0;
  double b = 0.0;
  double rho = 1.0;
};

/// Closed-form solution of the hidden-layer scalar problem.
///
/// The 0+ limit is realized as min(sqrt(t/rho) + b, eps_tiny) with t = 2a - 1.
/// On the knife-edge equalities the unchanged value b is returned.
double prox_step_scalar(const StepProxInput& in, double eps_tiny = kDefaultEpsTiny);

/// Entrywise hidden-layer update with a = V_target, b = B and rho = pi / tau.
Matrix prox_step_matrix(const Matrix& v_target, const Matrix& b, double tau, double pi,
                        double eps_tiny = kDefaultEpsTiny);

/// Proximal map of beta*lambda*(number of nonzero rows): hard-thresholds each
/// row at norm sqrt(2*beta*lambda). Rows exactly at the threshold are kept.
Matrix prox_l20_rows(const Matrix& h, double beta, double lambda);

}  // namespace stepbcd
