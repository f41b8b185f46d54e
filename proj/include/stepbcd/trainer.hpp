#pragma once

#include <cstddef>
#include <functional>
#include <iosfwd>
#include <vector>

#include "stepbcd/dataio.hpp"
#include "stepbcd/matrix.hpp"
#include "stepbcd/network.hpp"
#include "stepbcd/rng.hpp"
#include "stepbcd/solvers.hpp"

namespace stepbcd {

/// Terms of the penalized training objective F.
struct ObjectiveTerms {
  double loss = 0.0;  // (1/2N) ||Y - hardmax(U_h)||^2
  double l20 = 0.0;   // lambda * sum_i (nonzero columns of W_i)
  double frob = 0.0;  // (gamma/2) sum_i ||W_i||^2
  double upen = 0.0;  // (tau/2) sum_i ||U_i - W_i V_{i-1}||^2
  double vpen = 0.0;  // (pi/2) sum_i ||V_i - step(U_i)||^2

  double total() const { return loss + l20 + frob + upen + vpen; }
};

ObjectiveTerms objective_f(const TrainState& state, const Dataset& data, const Hyperparams& hp);

/// Number of nonzero columns.
std::size_t nonzero_columns(const Matrix& m);

/// Columns whose maximum entry is attained more than once.
std::size_t multi_max_columns(const Matrix& m);

struct IterationRecord {
  std::size_t k = 0;
  ObjectiveTerms terms;
  double dW = 0.0;  // sum_i ||W_i^{k} - W_i^{k-1}||^2
  double dV = 0.0;  // sum_i ||V_i^{k} - V_i^{k-1}||^2
  double seconds = 0.0;
};

struct BcdReport {
  /// Record 0 is the initial state; record k follows outer iteration k.
  std::vector<IterationRecord> records;
  /// Columns of W_h V_{h-1} at the final iterate without a unique maximum.
  std::size_t final_multi_max_columns = 0;

  /// Columns: k,F,loss,l20,frob,upen,vpen,dW,dV,seconds.
  void write_csv(std::ostream& out) const;
};

struct SolverSettings {
  CgConfig cg;
  /// Derive beta = 0.9 / (tau ||V_{i-1}||_2^2 + gamma) per weight update instead of hp.beta.
  bool auto_beta = false;
  std::size_t power_iters = 100;
};

/// The sub-problems solved inside one outer iteration.
enum class Block { OutputU, Weights, HiddenV, HiddenU };

/// What a sub-solver was handed. Pointers are valid only during the callback.
struct SubproblemCall {
  Block block;
  std::size_t layer;  // 1-based layer index i of the block being updated
  std::vector<const Matrix*> inputs;
};

/// Inputs per block:
///   OutputU: {W_h, V_{h-1}}            Weights: {U_i, V_{i-1}, W_i (warm start)}
///   HiddenV: {W_{i+1}, U_{i+1}, U_i}   HiddenU: {V_i, W_i, V_{i-1}}
using IterationObserver = std::function<void(const SubproblemCall&)>;

/// One outer iteration, updating U_h, W_h, then V_i, U_i, W_i for i = h-1..1 in place.
void bcd_iteration(TrainState& state, const Dataset& data, const Hyperparams& hp,
                   const SolverSettings& solvers, const IterationObserver& observer = {});

struct TrainOptions {
  double init_scale = 0.01;
  /// 0 trains full batch. Otherwise every outer iteration sweeps the data in
  /// batches of this size, re-initializing U and V per batch by a forward pass.
  std::size_t batch_size = 0;
  /// Mini-batch sweeps run before the outer iterations (0 disables).
  std::size_t warmup_epochs = 0;
  std::size_t warmup_batch = 256;
  /// Stop once |F^k - F^{k-1}| < early_stop_tol (0 disables).
  double early_stop_tol = 0.0;
  /// Record wall-clock seconds per iteration; off writes 0 so reports are reproducible.
  bool timing = true;
};

struct TrainResult {
  TrainState state;
  BcdReport report;
};

/// Gaussian initialization followed by hp.K outer iterations.
TrainResult train(const Dataset& data, const NetworkShape& shape, const Hyperparams& hp,
                  const SolverSettings& solvers, const TrainOptions& options, Rng& rng);

struct DescentCheck {
  /// gamma >= 1/beta, the regime where the descent inequality is guaranteed.
  bool applicable = false;
  bool satisfied = true;
  double worst_violation = 0.0;
  std::size_t worst_k = 0;
};

/// Checks F^{k+1} - F^k <= -((gamma - 1/beta)/2) dW - (pi/2) dV + tol at every step.
DescentCheck check_descent(const BcdReport& report, const Hyperparams& hp, double tol = 1e-9);

}  // namespace stepbcd
