#include "stepbcd/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <ostream>

#include "stepbcd/errors.hpp"
#include "stepbcd/prox.hpp"

namespace stepbcd {

namespace {

// V_0 is the data; V_i for i >= 1 lives in the state.
const Matrix& layer_input(const TrainState& state, const Dataset& data, std::size_t i) {
  return i == 0 ? data.X : state.V[i - 1];
}

void require_finite(const TrainState& state) {
  auto check = [](const std::vector<Matrix>& blocks, const char* name) {
    for (std::size_t i = 0; i < blocks.size(); ++i)
      if (!all_finite(blocks[i]))
        throw NumericalError(std::string("non-finite entries in ") + name + std::to_string(i + 1));
  };
  check(state.W, "W");
  check(state.U, "U");
  check(state.V, "V");
}

void update_weights(TrainState& state, const Dataset& data, const Hyperparams& hp,
                    const SolverSettings& solvers, const IterationObserver& observer,
                    std::size_t i) {
  const Matrix& input = layer_input(state, data, i - 1);
  if (observer) observer({Block::Weights, i, {&state.U[i - 1], &input, &state.W[i - 1]}});
  PgmConfig cfg;
  cfg.L = hp.L;
  cfg.beta = hp.beta;
  if (solvers.auto_beta) {
    Rng power(derive_seed(i, "power-iteration"));
    cfg.beta = theory_beta(hp.tau, hp.gamma, spectral_norm(input, solvers.power_iters, power));
  }
  const PgmResult r = pgm(state.U[i - 1].transpose(), input.transpose(),
                          state.W[i - 1].transpose(), hp.tau, hp.gamma, hp.lambda, cfg);
  state.W[i - 1] = r.W.transpose();
}

}  // namespace

std::size_t nonzero_columns(const Matrix& m) {
  std::size_t count = 0;
  for (std::size_t c = 0; c < m.cols(); ++c) {
    for (std::size_t r = 0; r < m.rows(); ++r) {
      if (m(r, c) != 0.0) {
        ++count;
        break;
      }
    }
  }
  return count;
}

std::size_t multi_max_columns(const Matrix& m) {
  std::size_t count = 0;
  for (std::size_t c = 0; c < m.cols(); ++c) {
    const auto col = m.column(c);
    const double top = *std::max_element(col.begin(), col.end());
    if (std::count(col.begin(), col.end(), top) > 1) ++count;
  }
  return count;
}

ObjectiveTerms objective_f(const TrainState& state, const Dataset& data, const Hyperparams& hp) {
  const std::size_t h = state.layers();
  if (h == 0) throw DimensionError("objective_f: empty network");
  if (state.samples() != data.size())
    throw DimensionError("objective_f: state holds " + std::to_string(state.samples()) +
                         " samples, dataset has " + std::to_string(data.size()));
  require_same_shape(state.U[h - 1], data.Y, "objective_f output layer");

  ObjectiveTerms t;
  const double n = static_cast<double>(data.size());
  const Matrix& out = state.U[h - 1];
  double miss = 0.0;
  for (std::size_t s = 0; s < out.cols(); ++s) {
    const auto hm = hardmax(out.column(s));
    for (std::size_t r = 0; r < hm.size(); ++r) {
      const double d = data.Y(r, s) - hm[r];
      miss += d * d;
    }
  }
  t.loss = miss / (2.0 * n);
  for (std::size_t i = 0; i < h; ++i) {
    t.l20 += hp.lambda * static_cast<double>(nonzero_columns(state.W[i]));
    t.frob += 0.5 * hp.gamma * frobenius_sq(state.W[i]);
    t.upen += 0.5 * hp.tau * distance_sq(state.U[i], matmul(state.W[i], layer_input(state, data, i)));
    if (i + 1 < h) t.vpen += 0.5 * hp.pi * distance_sq(state.V[i], step(state.U[i]));
  }
  return t;
}

void BcdReport::write_csv(std::ostream& out) const {
  out << "k,F,loss,l20,frob,upen,vpen,dW,dV,seconds\n";
  out << std::setprecision(17);
  for (const auto& r : records) {
    out << r.k << ',' << r.terms.total() << ',' << r.terms.loss << ',' << r.terms.l20 << ','
        << r.terms.frob << ',' << r.terms.upen << ',' << r.terms.vpen << ',' << r.dW << ','
        << r.dV << ',' << r.seconds << '\n';
  }
}

void bcd_iteration(TrainState& state, const Dataset& data, const Hyperparams& hp,
                   const SolverSettings& solvers, const IterationObserver& observer) {
  const std::size_t h = state.layers();
  if (h == 0) throw DimensionError("bcd_iteration: empty network");
  if (state.samples() != data.size())
    throw DimensionError("bcd_iteration: state and dataset disagree on the sample count");

  // Output layer: b = W_h^k V_{h-1}^k.
  {
    const Matrix& input = layer_input(state, data, h - 1);
    if (observer) observer({Block::OutputU, h, {&state.W[h - 1], &input}});
    state.U[h - 1] = prox_hardmax_matrix(matmul(state.W[h - 1], input), data.Y, hp.tau,
                                         data.size(), hp.eps_tiny);
  }
  update_weights(state, data, hp, solvers, observer, h);

  for (std::size_t i = h - 1; i >= 1; --i) {
    // V_i from W_{i+1}^{k+1}, U_{i+1}^{k+1} and the not-yet-updated U_i^k.
    if (observer) observer({Block::HiddenV, i, {&state.W[i], &state.U[i], &state.U[i - 1]}});
    state.V[i - 1] =
        solve_v(state.W[i], state.U[i], state.U[i - 1], hp.tau, hp.pi, solvers.cg, state.V[i - 1]);

    // U_i from V_i^{k+1} and b = W_i^k V_{i-1}^k; neither of those has moved yet.
    const Matrix& input = layer_input(state, data, i - 1);
    if (observer) observer({Block::HiddenU, i, {&state.V[i - 1], &state.W[i - 1], &input}});
    state.U[i - 1] =
        prox_step_matrix(state.V[i - 1], matmul(state.W[i - 1], input), hp.tau, hp.pi, hp.eps_tiny);

    update_weights(state, data, hp, solvers, observer, i);
  }
  require_finite(state);
}

TrainResult train(const Dataset& data, const NetworkShape& shape, const Hyperparams& hp,
                  const SolverSettings& solvers, const TrainOptions& options, Rng& rng) {
  shape.validate();
  hp.validate();
  if (data.size() == 0) throw DataError(DataError::Kind::EmptySplit, "cannot train on 0 samples");
  if (data.input_dim() != shape.input_dim() || data.classes() != shape.output_dim())
    throw DimensionError("dataset is " + std::to_string(data.input_dim()) + " -> " +
                         std::to_string(data.classes()) + " but the network is " +
                         shape.to_string());

  Rng init_rng = rng.fork("init");
  Rng batch_rng = rng.fork("batch-order");
  TrainResult result{init_gaussian(shape, options.init_scale, init_rng, data.X), {}};
  TrainState& state = result.state;
  auto& records = result.report.records;
  records.push_back({0, objective_f(state, data, hp), 0.0, 0.0, 0.0});

  auto sweep = [&](std::size_t batch) {
    const auto order = shuffled_indices(data.size(), batch_rng);
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t stop = std::min(order.size(), start + batch);
      const Dataset part = data.subset(std::span(order).subspan(start, stop - start));
      TrainState local{state.W, {}, {}};
      forward_fill(local, part.X);
      bcd_iteration(local, part, hp, solvers);
      state.W = std::move(local.W);
    }
    forward_fill(state, data.X);
  };

  for (std::size_t e = 0; e < options.warmup_epochs; ++e) sweep(std::max<std::size_t>(1, options.warmup_batch));

  const bool full_batch = options.batch_size == 0 || options.batch_size >= data.size();
  for (std::size_t k = 1; k <= hp.K; ++k) {
    const auto started = std::chrono::steady_clock::now();
    const std::vector<Matrix> w_old = state.W, v_old = state.V;
    if (full_batch)
      bcd_iteration(state, data, hp, solvers);
    else
      sweep(options.batch_size);
    IterationRecord rec{k, objective_f(state, data, hp), 0.0, 0.0, 0.0};
    for (std::size_t i = 0; i < w_old.size(); ++i) rec.dW += distance_sq(state.W[i], w_old[i]);
    for (std::size_t i = 0; i < v_old.size(); ++i) rec.dV += distance_sq(state.V[i], v_old[i]);
    if (options.timing)
      rec.seconds =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    const double previous = records.back().terms.total();
    records.push_back(rec);
    if (options.early_stop_tol > 0.0 &&
        std::abs(rec.terms.total() - previous) < options.early_stop_tol)
      break;
  }

  const std::size_t h = state.layers();
  result.report.final_multi_max_columns =
      multi_max_columns(matmul(state.W[h - 1], layer_input(state, data, h - 1)));
  return result;
}

DescentCheck check_descent(const BcdReport& report, const Hyperparams& hp, double tol) {
  DescentCheck out;
  out.applicable = hp.gamma >= 1.0 / hp.beta;
  out.worst_violation = -std::numeric_limits<double>::infinity();
  const double w_coef = 0.5 * (hp.gamma - 1.0 / hp.beta);
  for (std::size_t k = 1; k < report.records.size(); ++k) {
    const auto& now = report.records[k];
    const double change = now.terms.total() - report.records[k - 1].terms.total();
    const double bound = -w_coef * now.dW - 0.5 * hp.pi * now.dV;
    const double violation = change - bound;
    if (violation > out.worst_violation) {
      out.worst_violation = violation;
      out.worst_k = now.k;
    }
  }
  if (report.records.size() < 2) out.worst_violation = 0.0;
  out.satisfied = out.worst_violation <= tol;
  return out;
}

}  // namespace stepbcd
