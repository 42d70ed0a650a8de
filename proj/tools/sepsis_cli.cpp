// Command-line front end for the sepsis early-detection pipeline:
// synth -> prepare -> train -> evaluate / seraip -> report.

#include <cstdlib>
#include <thread>
#include <filesystem>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "sepsis/config.hpp"
#include "sepsis/io.hpp"
#include "sepsis/pipeline.hpp"
#include "sepsis/train.hpp"
#include "sepsis/util.hpp"

namespace fs = std::filesystem;
using namespace sepsis;

namespace {

// distinct exit codes per failure class; errors go to stderr as JSON
constexpr int kExitGeneric = 1;
constexpr int kExitInvalidConfig = 2;
constexpr int kExitMissingInput = 3;
constexpr int kExitSchemaMismatch = 4;
constexpr int kExitDiverged = 5;

struct CommonFlags {
  uint64_t seed = 1;
  bool seed_set = false;
  int workers = 0;
  bool workers_set = false;
  bool deterministic = false;
  std::string out;
};

void add_common(CLI::App* cmd, CommonFlags& flags) {
  cmd->add_flag("--deterministic", flags.deterministic,
                "single ordered worker, reproducible output");
  cmd->add_option("--seed", flags.seed, "master seed")->each([&](const std::string&) {
    flags.seed_set = true;
  });
  cmd->add_option("--workers", flags.workers, "worker thread count")
      ->each([&](const std::string&) { flags.workers_set = true; });
  cmd->add_option("--out", flags.out, "output directory (default: runs/<stamp>_<command>)");
}

// flag > environment > default; only seed and thread count may come from the
// environment, everything else flows through the config file
pipeline::RunOptions resolve_options(const CommonFlags& flags) {
  pipeline::RunOptions opts;
  opts.deterministic = flags.deterministic;
  if (flags.seed_set) {
    opts.seed = flags.seed;
  } else if (const char* env = std::getenv("SEPSIS_SEED")) {
    opts.seed = static_cast<uint64_t>(std::stoull(env));
  } else {
    opts.seed = 1;
  }
  if (flags.workers_set) {
    opts.workers = flags.workers;
  } else if (const char* env = std::getenv("SEPSIS_WORKERS")) {
    opts.workers = std::stoi(env);
  } else {
    opts.workers = static_cast<int>(std::thread::hardware_concurrency());
  }
  if (opts.workers < 1) opts.workers = 1;
  return opts;
}

std::string resolve_out_dir(const CommonFlags& flags, const std::string& command) {
  if (!flags.out.empty()) {
    fs::create_directories(flags.out);
    return flags.out;
  }
  std::string dir = "runs/" + timestamp_utc() + "_" + command;
  int suffix = 0;
  while (fs::exists(dir))
    dir = "runs/" + timestamp_utc() + "_" + command + "_" + std::to_string(++suffix);
  fs::create_directories(dir);
  return dir;
}

Config load_config_or_empty(const std::string& path) {
  if (path.empty()) return Config{};
  if (!fs::exists(path)) throw pipeline::MissingInput("missing config file: " + path);
  return Config::load(path);
}

int fail(int code, const std::string& kind, const std::string& what) {
  nlohmann::json j{{"error", what}, {"kind", kind}, {"code", code}};
  std::cerr << j.dump() << std::endl;
  return code;
}

int run_guarded(const std::function<void()>& body) {
  try {
    body();
    return 0;
  } catch (const pipeline::InvalidConfig& e) {
    return fail(kExitInvalidConfig, "invalid_config", e.what());
  } catch (const pipeline::MissingInput& e) {
    return fail(kExitMissingInput, "missing_input", e.what());
  } catch (const io::SchemaMismatch& e) {
    return fail(kExitSchemaMismatch, "schema_mismatch", e.what());
  } catch (const nn::TrainingDiverged& e) {
    return fail(kExitDiverged, "training_diverged", e.what());
  } catch (const std::exception& e) {
    const std::string what = e.what();
    if (what.rfind("missing input", 0) == 0)
      return fail(kExitMissingInput, "missing_input", what);
    if (what.rfind("config", 0) == 0) return fail(kExitInvalidConfig, "invalid_config", what);
    return fail(kExitGeneric, "error", what);
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"sepsis early-detection pipeline"};
  app.require_subcommand(1);

  // synth
  auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic cohort");
  std::string synth_config;
  CommonFlags synth_flags;
  synth_cmd->add_option("--config", synth_config, "config file");
  add_common(synth_cmd, synth_flags);

  // prepare
  auto* prepare_cmd =
      app.add_subcommand("prepare", "label, filter, split and build feature stores");
  std::string prepare_cohort, prepare_config;
  CommonFlags prepare_flags;
  prepare_cmd->add_option("--cohort", prepare_cohort, "cohort JSON-lines file")->required();
  prepare_cmd->add_option("--config", prepare_config, "config file");
  add_common(prepare_cmd, prepare_flags);

  // train
  auto* train_cmd = app.add_subcommand("train", "fit a risk model");
  std::string train_prepared, train_model, train_config;
  CommonFlags train_flags;
  train_cmd->add_option("--prepared", train_prepared, "prepared directory")->required();
  train_cmd->add_option("--model", train_model, "gb | mlp | cnnlstm")->required();
  train_cmd->add_option("--config", train_config, "config file");
  add_common(train_cmd, train_flags);

  // evaluate
  auto* eval_cmd = app.add_subcommand("evaluate", "discrimination, DCA and calibration");
  std::string eval_prepared, eval_model, eval_horizons = "3h,10h,24h", eval_config;
  CommonFlags eval_flags;
  eval_cmd->add_option("--prepared", eval_prepared, "prepared directory")->required();
  eval_cmd->add_option("--model", eval_model, "model file")->required();
  eval_cmd->add_option("--horizons", eval_horizons, "comma list, e.g. 3h,10h,24h or 15min");
  eval_cmd->add_option("--config", eval_config, "config file");
  add_common(eval_cmd, eval_flags);

  // seraip
  auto* seraip_cmd =
      app.add_subcommand("seraip", "sequential evaluation with intervention lookback");
  std::string seraip_prepared, seraip_model, seraip_config;
  double seraip_tau = 0.1;
  CommonFlags seraip_flags;
  seraip_cmd->add_option("--prepared", seraip_prepared, "prepared directory")->required();
  seraip_cmd->add_option("--model", seraip_model, "model file")->required();
  seraip_cmd->add_option("--tau", seraip_tau, "decision threshold (default 0.1)");
  seraip_cmd->add_option("--config", seraip_config, "config file");
  add_common(seraip_cmd, seraip_flags);

  // report
  auto* report_cmd = app.add_subcommand("report", "summarize run directories to markdown");
  std::vector<std::string> report_dirs;
  std::string report_out = "report.md";
  report_cmd->add_option("--runs", report_dirs, "run directories")->required();
  report_cmd->add_option("--out", report_out, "output markdown file");

  CLI11_PARSE(app, argc, argv);

  if (synth_cmd->parsed()) {
    return run_guarded([&] {
      auto opts = resolve_options(synth_flags);
      auto out_dir = resolve_out_dir(synth_flags, "synth");
      pipeline::cmd_synth(load_config_or_empty(synth_config), out_dir, opts);
      std::cout << out_dir << std::endl;
    });
  }
  if (prepare_cmd->parsed()) {
    return run_guarded([&] {
      auto opts = resolve_options(prepare_flags);
      auto out_dir = resolve_out_dir(prepare_flags, "prepare");
      pipeline::cmd_prepare(prepare_cohort, load_config_or_empty(prepare_config), out_dir, opts);
      std::cout << out_dir << std::endl;
    });
  }
  if (train_cmd->parsed()) {
    return run_guarded([&] {
      auto opts = resolve_options(train_flags);
      auto out_dir = resolve_out_dir(train_flags, "train_" + train_model);
      pipeline::cmd_train(train_prepared, train_model, load_config_or_empty(train_config),
                          out_dir, opts);
      std::cout << out_dir << std::endl;
    });
  }
  if (eval_cmd->parsed()) {
    return run_guarded([&] {
      auto opts = resolve_options(eval_flags);
      auto out_dir = resolve_out_dir(eval_flags, "evaluate");
      pipeline::cmd_evaluate(eval_prepared, eval_model, pipeline::parse_horizons(eval_horizons),
                             load_config_or_empty(eval_config), out_dir, opts);
      std::cout << out_dir << std::endl;
    });
  }
  if (seraip_cmd->parsed()) {
    return run_guarded([&] {
      auto opts = resolve_options(seraip_flags);
      auto out_dir = resolve_out_dir(seraip_flags, "seraip");
      pipeline::cmd_seraip(seraip_prepared, seraip_model, seraip_tau,
                           load_config_or_empty(seraip_config), out_dir, opts);
      std::cout << out_dir << std::endl;
    });
  }
  if (report_cmd->parsed()) {
    return run_guarded([&] {
      pipeline::cmd_report(report_dirs, report_out);
      std::cout << report_out << std::endl;
    });
  }
  return 0;
}
