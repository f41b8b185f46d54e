#include "stepbcd/cli.hpp"

#include <CLI11.hpp>

#include <charconv>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <iostream>
#include <sstream>
#include <stdexcept>

#include "stepbcd/dataio.hpp"
#include "stepbcd/errors.hpp"
#include "stepbcd/metrics.hpp"
#include "stepbcd/rng.hpp"
#include "stepbcd/trainer.hpp"

namespace stepbcd {

namespace fs = std::filesystem;

namespace {

// Shortest text that parses back to the same double.
std::string fmt_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string join_doubles(const std::vector<double>& values) {
  std::string s;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) s += ',';
    s += fmt_double(values[i]);
  }
  return s;
}

std::vector<double> parse_doubles(const std::string& text) {
  std::vector<double> out;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    double v = 0.0;
    const auto [end, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
    if (ec != std::errc() || end != item.data() + item.size())
      throw std::invalid_argument("not a number in list: '" + item + "'");
    out.push_back(v);
  }
  return out;
}

// Runs `body`, mapping failures onto exit codes with a message on `err`.
int guarded(std::ostream& err, const std::function<int()>& body) {
  try {
    return body();
  } catch (const NumericalError& e) {
    err << "numerical error: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const DimensionError& e) {
    err << "dimension error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::invalid_argument& e) {
    err << "invalid argument: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
}

Dataset load_split(const std::string& images, const std::string& labels, const std::string& csv,
                   std::size_t classes, const char* name) {
  if (!csv.empty()) return load_csv_dataset(csv, classes);
  if (images.empty() || labels.empty())
    throw std::invalid_argument(std::string("no ") + name + " data given");
  const IdxImages img = load_idx_images(images);
  const auto lab = load_idx_labels(labels);
  return to_dataset(img, lab, classes);
}

bool has_split(const std::string& images, const std::string& csv) {
  return !images.empty() || !csv.empty();
}

Dataset take_subset(const Dataset& data, const std::optional<std::size_t>& n, std::uint64_t seed,
                    const char* name) {
  if (!n) return data;
  if (*n == 0) throw DataError(DataError::Kind::EmptySplit, std::string("empty split: ") + name + " has 0 samples");
  if (*n > data.size())
    throw std::invalid_argument(std::string(name) + " subset of " + std::to_string(*n) +
                                " exceeds the " + std::to_string(data.size()) + " available samples");
  Rng rng(derive_seed(seed, std::string("subset/") + name));
  return data.shuffled_prefix(*n, rng);
}

Dataset train_data(const RunConfig& cfg) {
  return take_subset(load_split(cfg.train_images, cfg.train_labels, cfg.train_csv, cfg.classes, "train"),
                     cfg.train_n, cfg.seed, "train");
}

Dataset test_data(const RunConfig& cfg) {
  return take_subset(load_split(cfg.test_images, cfg.test_labels, cfg.test_csv, cfg.classes, "test"),
                     cfg.test_n, cfg.seed, "test");
}

void require_compatible(const NetworkShape& shape, const Dataset& data, const char* name) {
  if (data.size() == 0) throw DataError(DataError::Kind::EmptySplit, std::string("empty split: ") + name);
  if (data.input_dim() != shape.input_dim() || data.classes() != shape.output_dim())
    throw DataError(DataError::Kind::ShapeMismatch,
                    std::string(name) + " data is " + std::to_string(data.input_dim()) + " -> " +
                        std::to_string(data.classes()) + " but the model is " + shape.to_string());
}

void write_metrics_header(std::ostream& out) { out << "split,error,fil_num,par_num,flops\n"; }

void write_metrics_row(std::ostream& out, const char* split, const std::vector<Matrix>& W,
                       const EvalResult& r) {
  out << split << ',' << fmt_double(r.error_rate) << ',' << filter_count(W) << ','
      << param_count(W, false) << ',' << fmt_double(flops_estimate(W)) << '\n';
}

std::ofstream open_output(const fs::path& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError(DataError::Kind::Io, "cannot write " + path.string());
  return f;
}

fs::path checkpoint_path(const RunConfig& cfg) {
  if (!cfg.checkpoint.empty()) return cfg.checkpoint;
  if (!cfg.out_dir.empty()) return fs::path(cfg.out_dir) / "model.ckpt";
  throw std::invalid_argument("no checkpoint given (use --checkpoint)");
}

Checkpoint load_model(const RunConfig& cfg, bool arch_given) {
  Checkpoint cp = load_checkpoint(checkpoint_path(cfg));
  if (arch_given) require_shape(cp, NetworkShape::parse(cfg.arch));
  return cp;
}

}  // namespace

std::vector<std::string> config_to_args(const RunConfig& cfg) {
  std::vector<std::string> a;
  auto put = [&](const char* key, const std::string& value) {
    a.push_back(std::string("--") + key + "=" + value);
  };
  auto put_if = [&](const char* key, const std::string& value) {
    if (!value.empty()) put(key, value);
  };
  put_if("train-images", cfg.train_images);
  put_if("train-labels", cfg.train_labels);
  put_if("train-csv", cfg.train_csv);
  put_if("test-images", cfg.test_images);
  put_if("test-labels", cfg.test_labels);
  put_if("test-csv", cfg.test_csv);
  put("classes", std::to_string(cfg.classes));
  put("arch", cfg.arch);
  put("tau", fmt_double(cfg.hp.tau));
  put("pi", fmt_double(cfg.hp.pi));
  put("gamma", fmt_double(cfg.hp.gamma));
  put("lambda", fmt_double(cfg.hp.lambda));
  put("beta", fmt_double(cfg.hp.beta));
  put("pgm-iters", std::to_string(cfg.hp.L));
  put("k", std::to_string(cfg.hp.K));
  put("eps-tiny", fmt_double(cfg.hp.eps_tiny));
  put("init-scale", fmt_double(cfg.init_scale));
  put("cg-tol", fmt_double(cfg.cg_tol));
  put("cg-max-iters", std::to_string(cfg.cg_max_iters));
  put("auto-beta", cfg.auto_beta ? "true" : "false");
  put("batch-size", std::to_string(cfg.batch_size));
  put("warmup-epochs", std::to_string(cfg.warmup_epochs));
  put("warmup-batch", std::to_string(cfg.warmup_batch));
  put("early-stop", fmt_double(cfg.early_stop));
  put("no-timing", cfg.timing ? "false" : "true");
  put("seed", std::to_string(cfg.seed));
  if (cfg.train_n) put("train-n", std::to_string(*cfg.train_n));
  if (cfg.test_n) put("test-n", std::to_string(*cfg.test_n));
  put_if("out", cfg.out_dir);
  put_if("checkpoint", cfg.checkpoint);
  put("sigmas", join_doubles(cfg.sigmas));
  put("train-noise", fmt_double(cfg.train_noise));
  return a;
}

int cmd_train(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const NetworkShape shape = NetworkShape::parse(cfg.arch);
    shape.validate();
    cfg.hp.validate();
    Dataset train_set = train_data(cfg);
    require_compatible(shape, train_set, "train");
    if (!(cfg.train_noise >= 0.0))
      throw std::invalid_argument("train noise must be >= 0, got " + fmt_double(cfg.train_noise));
    if (cfg.train_noise > 0.0) {
      Rng noise_rng(derive_seed(cfg.seed, "train-noise/" + fmt_double(cfg.train_noise)));
      train_set = add_gaussian_noise(train_set, cfg.train_noise, noise_rng);
    }
    std::optional<Dataset> test_set;
    if (has_split(cfg.test_images, cfg.test_csv)) {
      test_set = test_data(cfg);
      require_compatible(shape, *test_set, "test");
    }

    const fs::path dir = cfg.out_dir.empty() ? fs::path("run") : fs::path(cfg.out_dir);
    fs::create_directories(dir);
    {
      auto f = open_output(dir / "config.csv");
      f << "key,value\n" << "command," << cfg.command << '\n';
      for (const auto& arg : config_to_args(cfg)) {
        const auto eq = arg.find('=');
        std::string value = arg.substr(eq + 1);
        if (value.find(',') != std::string::npos) value = '"' + value + '"';
        f << arg.substr(2, eq - 2) << ',' << value << '\n';
      }
    }

    SolverSettings solvers;
    solvers.cg.tol = cfg.cg_tol;
    solvers.cg.max_iters = cfg.cg_max_iters;
    solvers.auto_beta = cfg.auto_beta;
    TrainOptions options;
    options.init_scale = cfg.init_scale;
    options.batch_size = cfg.batch_size;
    options.warmup_epochs = cfg.warmup_epochs;
    options.warmup_batch = cfg.warmup_batch;
    options.early_stop_tol = cfg.early_stop;
    options.timing = cfg.timing;
    Rng rng(derive_seed(cfg.seed, "train"));
    const TrainResult result = train(train_set, shape, cfg.hp, solvers, options, rng);

    {
      auto f = open_output(dir / "report.csv");
      result.report.write_csv(f);
    }
    save_checkpoint(cfg.checkpoint.empty() ? dir / "model.ckpt" : fs::path(cfg.checkpoint),
                    result.state, shape, cfg.hp);

    std::ostringstream metrics;
    write_metrics_header(metrics);
    const auto& W = result.state.W;
    write_metrics_row(metrics, "train", W, evaluate(W, train_set));
    if (test_set) write_metrics_row(metrics, "test", W, evaluate(W, *test_set));
    {
      auto f = open_output(dir / "metrics.csv");
      f << metrics.str();
    }
    const auto& last = result.report.records.back();
    out << "trained " << shape.to_string() << " on " << train_set.size() << " samples, "
        << last.k << " iterations, F = " << fmt_double(last.terms.total()) << '\n'
        << metrics.str();
    return kExitOk;
  });
}

int cmd_eval(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const Checkpoint cp = load_model(cfg, false);
    const bool want_train = has_split(cfg.train_images, cfg.train_csv);
    const bool want_test = has_split(cfg.test_images, cfg.test_csv);
    if (!want_train && !want_test) throw std::invalid_argument("eval needs train or test data");

    std::ostringstream metrics;
    write_metrics_header(metrics);
    if (want_train) {
      const Dataset d = train_data(cfg);
      require_compatible(cp.shape, d, "train");
      write_metrics_row(metrics, "train", cp.state.W, evaluate(cp.state.W, d));
    }
    if (want_test) {
      const Dataset d = test_data(cfg);
      require_compatible(cp.shape, d, "test");
      write_metrics_row(metrics, "test", cp.state.W, evaluate(cp.state.W, d));
    }
    if (!cfg.out_dir.empty()) {
      fs::create_directories(cfg.out_dir);
      auto f = open_output(fs::path(cfg.out_dir) / "eval.csv");
      f << metrics.str();
    }
    out << metrics.str();
    return kExitOk;
  });
}

int cmd_robustness(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const Checkpoint cp = load_model(cfg, false);
    const Dataset clean = test_data(cfg);
    require_compatible(cp.shape, clean, "test");
    if (cfg.sigmas.empty()) throw std::invalid_argument("no noise levels given");

    std::ostringstream csv;
    csv << "sigma,error\n";
    for (double sigma : cfg.sigmas) {
      if (!(sigma >= 0.0)) throw std::invalid_argument("noise level must be >= 0, got " + fmt_double(sigma));
      Rng rng(derive_seed(cfg.seed, "noise/" + fmt_double(sigma)));
      const Dataset noisy = add_gaussian_noise(clean, sigma, rng);
      csv << fmt_double(sigma) << ',' << fmt_double(evaluate(cp.state.W, noisy).error_rate) << '\n';
    }
    if (!cfg.out_dir.empty()) {
      fs::create_directories(cfg.out_dir);
      auto f = open_output(fs::path(cfg.out_dir) / "robustness.csv");
      f << csv.str();
    }
    out << csv.str();
    return kExitOk;
  });
}

int cmd_inspect(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const Checkpoint cp = load_model(cfg, false);
    const auto& W = cp.state.W;
    out << "shape " << cp.shape.to_string() << '\n'
        << "samples " << cp.state.samples() << '\n';
    for (std::size_t i = 0; i < W.size(); ++i) {
      out << "W" << i + 1 << ' ' << shape_string(W[i]) << " nonzero_columns "
          << nonzero_columns(W[i]) << '/' << W[i].cols() << " pruned [";
      bool first = true;
      for (std::size_t c = 0; c < W[i].cols(); ++c) {
        const auto col = W[i].column(c);
        bool zero = true;
        for (double v : col) zero = zero && v == 0.0;
        if (zero) {
          out << (first ? "" : " ") << c;
          first = false;
        }
      }
      out << "]\n";
    }
    out << "filter_count " << filter_count(W) << " (outgoing columns)\n"
        << "filter_count_incoming " << filter_count(W, FilterConvention::Incoming) << '\n'
        << "param_count " << param_count(W, false) << '\n'
        << "param_count_raw " << param_count(W, true) << '\n'
        << "flops " << fmt_double(flops_estimate(W)) << '\n';
    return kExitOk;
  });
}

namespace {

// Reads a config.csv written by `train` into flag tokens and its command name.
std::pair<std::string, std::vector<std::string>> read_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError(DataError::Kind::Io, "cannot open " + path);
  std::string line, command;
  std::vector<std::string> tokens;
  std::getline(in, line);
  if (line != "key,value") throw DataError(DataError::Kind::Parse, path + ": missing key,value header");
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw DataError(DataError::Kind::Parse, path + ": bad line '" + line + "'");
    const std::string key = line.substr(0, comma);
    std::string value = line.substr(comma + 1);
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"')
      value = value.substr(1, value.size() - 2);
    if (key == "command")
      command = value;
    else
      tokens.push_back("--" + key + "=" + value);
  }
  return {command, tokens};
}

}  // namespace

int run_cli(const std::vector<std::string>& args_in, std::ostream& out, std::ostream& err) {
  static const std::vector<std::string> kCommands{"train", "eval", "robustness", "inspect"};
  std::vector<std::string> args = args_in;

  // --config FILE replays an earlier run; flags given explicitly still win.
  for (std::size_t i = 0; i < args.size(); ++i) {
    std::string path;
    if (args[i] == "--config" && i + 1 < args.size()) {
      path = args[i + 1];
      args.erase(args.begin() + static_cast<std::ptrdiff_t>(i), args.begin() + static_cast<std::ptrdiff_t>(i) + 2);
    } else if (args[i].rfind("--config=", 0) == 0) {
      path = args[i].substr(9);
      args.erase(args.begin() + static_cast<std::ptrdiff_t>(i));
    } else {
      continue;
    }
    std::pair<std::string, std::vector<std::string>> replay;
    const int rc = guarded(err, [&] {
      replay = read_config(path);
      return kExitOk;
    });
    if (rc != kExitOk) return rc;
    auto cmd = std::find_first_of(args.begin(), args.end(), kCommands.begin(), kCommands.end());
    if (cmd == args.end()) {
      if (replay.first.empty()) {
        err << "config " << path << " names no command\n";
        return kExitUsage;
      }
      args.insert(args.begin(), replay.first);
      cmd = args.begin();
    }
    args.insert(cmd + 1, replay.second.begin(), replay.second.end());
    break;
  }

  RunConfig cfg;
  std::size_t train_n = 0, test_n = 0;
  std::string sigmas = join_doubles(cfg.sigmas);
  bool no_timing = false;

  CLI::App app{"Gradient-free block coordinate descent for 0/1-activation networks"};
  app.require_subcommand(1);
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  app.set_version_flag("--version", "stepbcd 1.0.0");

  const std::map<std::string, std::string> descriptions{
      {"train", "train a network and write checkpoint, report and metrics"},
      {"eval", "error rates of a checkpoint on train and/or test data"},
      {"robustness", "test error under additive Gaussian input noise"},
      {"inspect", "shape, column sparsity and size statistics of a checkpoint"}};
  for (const auto& name : kCommands) {
    CLI::App* sub = app.add_subcommand(name, descriptions.at(name));
    sub->add_option("--train-images", cfg.train_images, "IDX image file for training");
    sub->add_option("--train-labels", cfg.train_labels, "IDX label file for training");
    sub->add_option("--train-csv", cfg.train_csv, "CSV training data (features..., label)");
    sub->add_option("--test-images", cfg.test_images, "IDX image file for testing");
    sub->add_option("--test-labels", cfg.test_labels, "IDX label file for testing");
    sub->add_option("--test-csv", cfg.test_csv, "CSV test data");
    sub->add_option("--classes", cfg.classes, "number of classes")->capture_default_str();
    sub->add_option("--arch", cfg.arch, "layer widths, input first")->capture_default_str();
    sub->add_option("--tau", cfg.hp.tau)->capture_default_str();
    sub->add_option("--pi", cfg.hp.pi)->capture_default_str();
    sub->add_option("--gamma", cfg.hp.gamma)->capture_default_str();
    sub->add_option("--lambda", cfg.hp.lambda)->capture_default_str();
    sub->add_option("--beta", cfg.hp.beta, "proximal gradient step size")->capture_default_str();
    sub->add_option("--pgm-iters", cfg.hp.L, "inner iterations per weight update")->capture_default_str();
    sub->add_option("--k", cfg.hp.K, "outer iterations")->capture_default_str();
    sub->add_option("--eps-tiny", cfg.hp.eps_tiny)->capture_default_str();
    sub->add_option("--init-scale", cfg.init_scale, "std. dev. of initial weights")->capture_default_str();
    sub->add_option("--cg-tol", cfg.cg_tol)->capture_default_str();
    sub->add_option("--cg-max-iters", cfg.cg_max_iters, "0 picks 10x the dimension")->capture_default_str();
    sub->add_flag("--auto-beta", cfg.auto_beta, "derive beta from a power-iteration bound");
    sub->add_option("--batch-size", cfg.batch_size, "0 trains full batch")->capture_default_str();
    sub->add_option("--warmup-epochs", cfg.warmup_epochs)->capture_default_str();
    sub->add_option("--warmup-batch", cfg.warmup_batch)->capture_default_str();
    sub->add_option("--early-stop", cfg.early_stop, "stop when |F change| falls below this")->capture_default_str();
    sub->add_flag("--no-timing", no_timing, "write 0 seconds so reports are reproducible");
    sub->add_option("--seed", cfg.seed)->capture_default_str();
    sub->add_option("--train-n", train_n, "training subset size");
    sub->add_option("--test-n", test_n, "test subset size");
    sub->add_option("--out", cfg.out_dir, "output directory");
    sub->add_option("--checkpoint", cfg.checkpoint, "checkpoint path");
    sub->add_option("--sigmas", sigmas, "comma-separated noise levels")->capture_default_str();
    sub->add_option("--train-noise", cfg.train_noise, "Gaussian noise level for training images")
        ->capture_default_str();
  }

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  CLI::App* chosen = app.get_subcommands().front();
  cfg.command = chosen->get_name();
  if (chosen->get_option("--train-n")->count()) cfg.train_n = train_n;
  if (chosen->get_option("--test-n")->count()) cfg.test_n = test_n;
  const bool arch_given = chosen->get_option("--arch")->count() > 0;
  cfg.timing = !no_timing;
  const int rc = guarded(err, [&] {
    cfg.sigmas = parse_doubles(sigmas);
    return kExitOk;
  });
  if (rc != kExitOk) return rc;

  if (cfg.command == "train") return cmd_train(cfg, out, err);
  if (cfg.command == "eval" || cfg.command == "robustness" || cfg.command == "inspect") {
    if (arch_given) {
      const int shape_rc = guarded(err, [&] {
        load_model(cfg, true);
        return kExitOk;
      });
      if (shape_rc != kExitOk) return shape_rc;
    }
    if (cfg.command == "eval") return cmd_eval(cfg, out, err);
    if (cfg.command == "robustness") return cmd_robustness(cfg, out, err);
    return cmd_inspect(cfg, out, err);
  }
  return kExitUsage;
}

}  // namespace stepbcd
