#pragma once

#include <cstddef>
#include <functional>

#include "stepbcd/matrix.hpp"
#include "stepbcd/rng.hpp"

namespace stepbcd {

// The weight sub-problem is posed in the transposed frame:
//
//   minimize  Psi(W) + lambda * (number of nonzero rows of W),
//   Psi(W) = tau/2 ||U - V W||^2 + gamma/2 ||W||^2,
//
// with U = U_i^T (N x d_i), V = V_{i-1}^T (N x d_{i-1}) and W = W_i^T, so the
// sparsity groups (columns of W_i) are the rows here.

struct PgmConfig {
  std::size_t L = 1;
  double beta = 0.00072;
  bool check_stationarity = false;
  double stationarity_tol = 1e-6;
};

struct PgmResult {
  Matrix W;
  /// Set when PgmConfig::check_stationarity is on, else NaN.
  double stationarity_residual;
};

/// Observer called with (iteration index l, iterate W^{l+1}) after each step.
using PgmObserver = std::function<void(std::size_t, const Matrix&)>;

/// grad Psi(W) = -tau V^T (U - V W) + gamma W.
Matrix grad_psi(const Matrix& W, const Matrix& U, const Matrix& V, double tau, double gamma);

/// Psi(W).
double psi_value(const Matrix& W, const Matrix& U, const Matrix& V, double tau, double gamma);

std::size_t nonzero_rows(const Matrix& W);

/// Psi(W) + lambda * nonzero_rows(W).
double composite_objective(const Matrix& W, const Matrix& U, const Matrix& V, double tau,
                           double gamma, double lambda);

/// Exactly cfg.L proximal-gradient steps W <- prox_l20_rows(W - beta grad Psi(W)).
PgmResult pgm(const Matrix& U, const Matrix& V, const Matrix& W0, double tau, double gamma,
              double lambda, const PgmConfig& cfg, const PgmObserver& observer = {});

/// Largest row violation of the P-stationarity conditions for step beta.
///
/// Nonzero rows need a vanishing gradient row and norm >= sqrt(2 beta lambda);
/// zero rows need a gradient row of norm <= sqrt(2 lambda / beta). Zero iff W
/// is P-stationary.
double p_stationarity_residual(const Matrix& W, const Matrix& U, const Matrix& V, double tau,
                               double gamma, double lambda, double beta);

/// Power-iteration estimate of the largest singular value. Zero matrix gives 0.
double spectral_norm(const Matrix& V, std::size_t iters, Rng& rng);

/// Step 0.9 / (tau ||V||_2^2 + gamma), inside the range where PGM is certified to converge.
double theory_beta(double tau, double gamma, double spectral);

struct CgConfig {
  double tol = 1e-8;
  /// 0 means 10 * (system dimension).
  std::size_t max_iters = 0;
};

struct CgOutcome {
  Matrix X;
  std::size_t iterations = 0;
  /// max over columns of ||A x - b|| / ||b|| (0 for zero columns of b).
  double relative_residual = 0.0;
};

using LinearOperator = std::function<Matrix(const Matrix&)>;
using CgObserver = std::function<void(std::size_t, const Matrix&)>;

/// Conjugate gradients run independently on every column of B for an SPD
/// operator. Each column stops once its relative residual reaches cfg.tol;
/// the final residual is recomputed from A rather than taken from the
/// recurrence. Throws NumericalError if max_iters is exhausted first.
CgOutcome conjugate_gradient(const LinearOperator& apply, const Matrix& B, const Matrix& X0,
                             const CgConfig& cfg, const CgObserver& observer = {});

/// Solves (tau W^T W + pi I) V = tau W^T U_next + pi step(U_cur) by CG,
/// warm-started at V_init, where W = W_next.
Matrix solve_v(const Matrix& W_next, const Matrix& U_next, const Matrix& U_cur, double tau,
               double pi, const CgConfig& cfg, const Matrix& V_init);

}  // namespace stepbcd
