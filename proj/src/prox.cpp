#include "stepbcd/prox.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "stepbcd/errors.hpp"

namespace stepbcd {

Matrix step(const Matrix& x) {
  Matrix out(x.rows(), x.cols());
  const auto in = x.data();
  auto o = out.data();
  for (std::size_t i = 0; i < in.size(); ++i) o[i] = in[i] > 0.0 ? 1.0 : 0.0;
  return out;
}

std::vector<double> hardmax(std::span<const double> a) {
  if (a.empty()) throw std::invalid_argument("hardmax of an empty vector");
  const double top = *std::max_element(a.begin(), a.end());
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] == top ? 1.0 : 0.0;
  return out;
}

std::size_t one_hot_index(std::span<const double> column) {
  std::size_t hot = npos;
  for (std::size_t i = 0; i < column.size(); ++i) {
    if (column[i] == 1.0) {
      if (hot != npos) return npos;
      hot = i;
    } else if (column[i] != 0.0) {
      return npos;
    }
  }
  return hot;
}

namespace {

// ||y - hardmax(b)||^2 for one-hot y, counted without forming either vector.
double hardmax_miss(std::span<const double> b, std::size_t y_index, double top) {
  std::size_t ties = 0;
  for (double v : b)
    if (v == top) ++ties;
  const bool hit = b[y_index] == top;
  return hit ? static_cast<double>(ties - 1) : static_cast<double>(ties + 1);
}

}  // namespace

std::vector<double> prox_hardmax_column(const HardmaxProxInput& in, double eps_tiny) {
  if (in.b.empty()) throw std::invalid_argument("prox_hardmax_column: empty b");
  if (in.y_index >= in.b.size())
    throw std::invalid_argument("prox_hardmax_column: y_index out of range");
  const double top = *std::max_element(in.b.begin(), in.b.end());
  const double delta = top - in.b[in.y_index];
  const double stay = hardmax_miss(in.b, in.y_index, top);
  std::vector<double> u = in.b;
  if (in.mu * delta * delta < stay) u[in.y_index] += delta + eps_tiny;
  return u;
}

Matrix prox_hardmax_matrix(const Matrix& target, const Matrix& labels, double tau,
                           std::size_t n_samples, double eps_tiny) {
  require_same_shape(target, labels, "prox_hardmax_matrix");
  if (n_samples == 0) throw std::invalid_argument("prox_hardmax_matrix: zero samples");
  const double mu = tau * static_cast<double>(n_samples);
  Matrix out = target;
  HardmaxProxInput in;
  in.mu = mu;
  for (std::size_t s = 0; s < target.cols(); ++s) {
    const auto y = labels.column(s);
    in.y_index = one_hot_index(y);
    if (in.y_index == npos)
      throw DataError(DataError::Kind::NotOneHot,
                      "label column " + std::to_string(s) + " is not one-hot");
    in.b = target.column(s);
    out.set_column(s, prox_hardmax_column(in, eps_tiny));
  }
  return out;
}

double prox_step_scalar(const StepProxInput& in, double eps_tiny) {
  const double t = 2.0 * in.a - 1.0;
  const double b = in.b;
  const double rb2 = in.rho * b * b;
  if (b > 0.0) return t < -rb2 ? 0.0 : b;
  if (t > rb2) return std::min(std::sqrt(t / in.rho) + b, eps_tiny);
  return b;
}

Matrix prox_step_matrix(const Matrix& v_target, const Matrix& b, double tau, double pi,
                        double eps_tiny) {
  require_same_shape(v_target, b, "prox_step_matrix");
  Matrix out(b.rows(), b.cols());
  StepProxInput in;
  in.rho = pi / tau;
  const auto a = v_target.data(), bb = b.data();
  auto o = out.data();
  for (std::size_t i = 0; i < o.size(); ++i) {
    in.a = a[i];
    in.b = bb[i];
    o[i] = prox_step_scalar(in, eps_tiny);
  }
  return out;
}

Matrix prox_l20_rows(const Matrix& h, double beta, double lambda) {
  if (!(beta > 0.0)) throw std::invalid_argument("prox_l20_rows: beta must be positive");
  if (!(lambda >= 0.0)) throw std::invalid_argument("prox_l20_rows: lambda must be nonnegative");
  // Compare squared norms against 2*beta*lambda to avoid a rounding sqrt.
  const double threshold_sq = 2.0 * beta * lambda;
  Matrix out = h;
  for (std::size_t s = 0; s < h.rows(); ++s) {
    double norm_sq = 0.0;
    for (double v : h.row(s)) norm_sq += v * v;
    if (norm_sq < threshold_sq) std::fill(out.row(s).begin(), out.row(s).end(), 0.0);
  }
  return out;
}

}  // namespace stepbcd
