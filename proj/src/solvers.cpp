#include "stepbcd/solvers.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "stepbcd/errors.hpp"
#include "stepbcd/prox.hpp"

namespace stepbcd {

namespace {

void check_frame(const Matrix& W, const Matrix& U, const Matrix& V, const char* context) {
  if (V.rows() != U.rows() || V.cols() != W.rows() || W.cols() != U.cols()) {
    throw DimensionError(std::string(context) + ": U " + shape_string(U) + ", V " +
                         shape_string(V) + ", W " + shape_string(W) +
                         " are not conformable for U - V W");
  }
}

double row_norm(const Matrix& m, std::size_t r) {
  double s = 0.0;
  for (double v : m.row(r)) s += v * v;
  return std::sqrt(s);
}

}  // namespace

Matrix grad_psi(const Matrix& W, const Matrix& U, const Matrix& V, double tau, double gamma) {
  check_frame(W, U, V, "grad_psi");
  const Matrix residual = U - matmul(V, W);
  Matrix g = matmul_tn(V, residual);
  g *= -tau;
  const auto w = W.data();
  auto out = g.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += gamma * w[i];
  return g;
}

double psi_value(const Matrix& W, const Matrix& U, const Matrix& V, double tau, double gamma) {
  check_frame(W, U, V, "psi_value");
  return 0.5 * tau * distance_sq(U, matmul(V, W)) + 0.5 * gamma * frobenius_sq(W);
}

std::size_t nonzero_rows(const Matrix& W) {
  std::size_t count = 0;
  for (std::size_t r = 0; r < W.rows(); ++r) {
    const auto row = W.row(r);
    if (std::any_of(row.begin(), row.end(), [](double v) { return v != 0.0; })) ++count;
  }
  return count;
}

double composite_objective(const Matrix& W, const Matrix& U, const Matrix& V, double tau,
                           double gamma, double lambda) {
  return psi_value(W, U, V, tau, gamma) + lambda * static_cast<double>(nonzero_rows(W));
}

PgmResult pgm(const Matrix& U, const Matrix& V, const Matrix& W0, double tau, double gamma,
              double lambda, const PgmConfig& cfg, const PgmObserver& observer) {
  if (!(cfg.beta > 0.0)) throw std::invalid_argument("pgm: beta must be positive");
  check_frame(W0, U, V, "pgm");
  Matrix W = W0;
  for (std::size_t l = 0; l < cfg.L; ++l) {
    Matrix h = grad_psi(W, U, V, tau, gamma);
    h *= -cfg.beta;
    h += W;
    W = prox_l20_rows(h, cfg.beta, lambda);
    if (observer) observer(l, W);
  }
  PgmResult result{std::move(W), std::numeric_limits<double>::quiet_NaN()};
  if (cfg.check_stationarity)
    result.stationarity_residual =
        p_stationarity_residual(result.W, U, V, tau, gamma, lambda, cfg.beta);
  return result;
}

double p_stationarity_residual(const Matrix& W, const Matrix& U, const Matrix& V, double tau,
                               double gamma, double lambda, double beta) {
  if (!(beta > 0.0)) throw std::invalid_argument("p_stationarity_residual: beta must be positive");
  const Matrix g = grad_psi(W, U, V, tau, gamma);
  const double keep = std::sqrt(2.0 * beta * lambda);
  const double slack = std::sqrt(2.0 * lambda / beta);
  double worst = 0.0;
  for (std::size_t s = 0; s < W.rows(); ++s) {
    const double wn = row_norm(W, s);
    const double gn = row_norm(g, s);
    const double v = wn != 0.0 ? std::max(gn, std::max(0.0, keep - wn)) : std::max(0.0, gn - slack);
    worst = std::max(worst, v);
  }
  return worst;
}

double spectral_norm(const Matrix& V, std::size_t iters, Rng& rng) {
  if (iters == 0) throw std::invalid_argument("spectral_norm: iters must be >= 1");
  if (frobenius_sq(V) == 0.0) return 0.0;
  Matrix x(V.cols(), 1);
  double estimate = 0.0;
  for (int attempt = 0; attempt < 8 && estimate == 0.0; ++attempt) {
    for (double& v : x.data()) v = rng.normal();
    x *= 1.0 / std::sqrt(frobenius_sq(x));
    for (std::size_t it = 0; it < iters; ++it) {
      const Matrix y = matmul(V, x);
      estimate = std::sqrt(frobenius_sq(y));
      if (estimate == 0.0) break;
      x = matmul_tn(V, y);
      const double n = std::sqrt(frobenius_sq(x));
      if (n == 0.0) break;
      x *= 1.0 / n;
    }
  }
  if (estimate > 0.0) estimate = std::sqrt(frobenius_sq(matmul(V, x)));
  return estimate;
}

double theory_beta(double tau, double gamma, double spectral) {
  return 0.9 / (tau * spectral * spectral + gamma);
}

CgOutcome conjugate_gradient(const LinearOperator& apply, const Matrix& B, const Matrix& X0,
                             const CgConfig& cfg, const CgObserver& observer) {
  require_same_shape(B, X0, "conjugate_gradient");
  if (!(cfg.tol > 0.0)) throw std::invalid_argument("conjugate_gradient: tol must be positive");
  const std::size_t n = B.rows(), m = B.cols();
  const std::size_t max_iters = cfg.max_iters ? cfg.max_iters : 10 * std::max<std::size_t>(n, 1);

  CgOutcome out;
  out.X = X0;
  Matrix& X = out.X;
  std::vector<double> bnorm(m), rs(m);
  for (std::size_t j = 0; j < m; ++j) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += B(i, j) * B(i, j);
    bnorm[j] = std::sqrt(s);
    if (bnorm[j] == 0.0)
      for (std::size_t i = 0; i < n; ++i) X(i, j) = 0.0;
  }

  Matrix R(n, m), P(n, m);
  std::vector<std::size_t> active;
  // (Re)start from the true residual; columns already within tolerance stay put.
  auto restart = [&]() {
    R = B - apply(X);
    P = R;
    active.clear();
    double worst = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
      if (bnorm[j] == 0.0) continue;
      double s = 0.0;
      for (std::size_t i = 0; i < n; ++i) s += R(i, j) * R(i, j);
      rs[j] = s;
      const double rel = std::sqrt(s) / bnorm[j];
      worst = std::max(worst, rel);
      if (rel > cfg.tol) active.push_back(j);
    }
    return worst;
  };

  double worst = restart();
  while (!active.empty()) {
    if (out.iterations >= max_iters) {
      std::ostringstream msg;
      msg << std::setprecision(3) << "conjugate gradients did not reach relative residual "
          << cfg.tol << " in " << max_iters << " iterations (achieved " << worst << ")";
      throw NumericalError(msg.str(), worst);
    }
    const Matrix Ap = apply(P.select_columns(active));
    std::vector<std::size_t> still;
    worst = 0.0;
    for (std::size_t a = 0; a < active.size(); ++a) {
      const std::size_t j = active[a];
      double pap = 0.0;
      for (std::size_t i = 0; i < n; ++i) pap += P(i, j) * Ap(i, a);
      if (!(pap > 0.0) || !std::isfinite(pap))
        throw NumericalError("conjugate gradients: curvature p'Ap is not positive and finite");
      const double alpha = rs[j] / pap;
      double rs_new = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        X(i, j) += alpha * P(i, j);
        R(i, j) -= alpha * Ap(i, a);
        rs_new += R(i, j) * R(i, j);
      }
      const double rel = std::sqrt(rs_new) / bnorm[j];
      if (rel > cfg.tol) {
        const double beta = rs_new / rs[j];
        for (std::size_t i = 0; i < n; ++i) P(i, j) = R(i, j) + beta * P(i, j);
        still.push_back(j);
        worst = std::max(worst, rel);
      }
      rs[j] = rs_new;
    }
    active.swap(still);
    ++out.iterations;
    if (observer) observer(out.iterations, X);
    if (active.empty()) worst = restart();
  }
  out.relative_residual = worst;
  return out;
}

Matrix solve_v(const Matrix& W_next, const Matrix& U_next, const Matrix& U_cur, double tau,
               double pi, const CgConfig& cfg, const Matrix& V_init) {
  if (!(pi > 0.0)) throw std::invalid_argument("solve_v: pi must be positive");
  if (W_next.rows() != U_next.rows() || W_next.cols() != U_cur.rows() ||
      U_next.cols() != U_cur.cols()) {
    throw DimensionError("solve_v: W_next " + shape_string(W_next) + ", U_next " +
                         shape_string(U_next) + ", U_cur " + shape_string(U_cur) +
                         " are not conformable");
  }
  require_same_shape(U_cur, V_init, "solve_v warm start");
  Matrix rhs = step(U_cur);
  rhs *= pi;
  if (tau != 0.0) {
    Matrix coupling = matmul_tn(W_next, U_next);
    coupling *= tau;
    rhs += coupling;
  }
  const LinearOperator apply = [&](const Matrix& P) {
    Matrix out = P;
    out *= pi;
    if (tau != 0.0) {
      Matrix coupled = matmul_tn(W_next, matmul(W_next, P));
      coupled *= tau;
      out += coupled;
    }
    return out;
  };
  return conjugate_gradient(apply, rhs, V_init, cfg).X;
}

}  // namespace stepbcd
