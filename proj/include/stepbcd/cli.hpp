#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "stepbcd/network.hpp"

namespace stepbcd {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;      // bad flags, unreadable or inconsistent data
inline constexpr int kExitNumerical = 3;  // solver failure

struct RunConfig {
  std::string command;

  std::string train_images, train_labels, train_csv;
  std::string test_images, test_labels, test_csv;
  std::size_t classes = 10;

  std::string arch = "784,200,200,10";
  Hyperparams hp;
  double init_scale = 0.01;
  double cg_tol = 1e-8;
  std::size_t cg_max_iters = 0;
  bool auto_beta = false;
  std::size_t batch_size = 0;
  std::size_t warmup_epochs = 0;
  std::size_t warmup_batch = 256;
  double early_stop = 0.0;
  bool timing = true;

  std::uint64_t seed = 7;
  /// Unset means every sample.
  std::optional<std::size_t> train_n, test_n;

  std::string out_dir;
  std::string checkpoint;
  std::vector<double> sigmas{0.0, 0.1, 0.2, 0.4};
  /// Noise added to the training images before `train`; test data is never touched.
  double train_noise = 0.0;
};

/// Flags that reproduce `cfg` when passed back to the same subcommand.
std::vector<std::string> config_to_args(const RunConfig& cfg);

int cmd_train(const RunConfig& cfg, std::ostream& out, std::ostream& err);
int cmd_eval(const RunConfig& cfg, std::ostream& out, std::ostream& err);
int cmd_robustness(const RunConfig& cfg, std::ostream& out, std::ostream& err);
int cmd_inspect(const RunConfig& cfg, std::ostream& out, std::ostream& err);

/// Parses `args` (without the program name) and dispatches to a subcommand.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace stepbcd
