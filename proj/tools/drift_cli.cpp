#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "drift/drift.h"

namespace {

// Owns a string returned by the library.
struct Owned {
  char* s = nullptr;
  ~Owned() { drift_string_free(s); }
  std::string str() const { return s ? s : ""; }
};

std::vector<const char*> c_strings(const std::vector<std::string>& v) {
  std::vector<const char*> out;
  for (const auto& s : v) out.push_back(s.c_str());
  return out;
}

int report(drift_status st) {
  if (st != DRIFT_OK) std::cerr << "error: " << drift_last_error() << "\n";
  return static_cast<int>(st);
}

bool read_text(const std::string& path, std::string& out) {
  std::ifstream in(path);
  if (!in) return false;
  std::ostringstream ss;
  ss << in.rdbuf();
  out = ss.str();
  return true;
}

int emit(const std::string& text, const std::string& path) {
  if (path.empty() || path == "-") {
    std::cout << text;
    if (!text.empty() && text.back() != '\n') std::cout << "\n";
    return 0;
  }
  std::ofstream out(path, std::ios::trunc);
  out << text;
  if (!out) {
    std::cerr << "error: cannot write " << path << "\n";
    return DRIFT_ERR_IO;
  }
  return 0;
}

struct ConfigArgs {
  std::string path;
  std::vector<std::string> overrides;

  void attach(CLI::App* cmd, bool required = true) {
    auto* opt = cmd->add_option("-c,--config", path, "Run configuration (YAML or JSON)");
    if (required) opt->required();
    cmd->add_option("--set", overrides, "Override a config value: dotted.key=value (repeatable)");
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"drift: low-rank diffusion-policy DAgger experiments"};
  app.require_subcommand(1);
  bool quiet = false;
  app.add_flag("-q,--quiet", quiet, "Only print warnings and errors");
  app.footer(
      "Exit codes: 0 success, 2 configuration or usage error, 3 unsupported checkpoint version,\n"
      "4 corrupt checkpoint, 1/5/6 internal, argument and I/O failures.\n"
      "DRIFT_SEED, when set, replaces the configuration's seed.");

  ConfigArgs train_cfg;
  std::string train_out, resume;
  long max_units = -1;
  auto* train = app.add_subcommand("train", "Run a training session and write metrics and checkpoints");
  train_cfg.attach(train, false);
  train->add_option("-o,--output", train_out, "Output directory (default: the config's output_dir)");
  train->add_option("--resume", resume, "Continue from a checkpoint (its embedded config is used)");
  train->add_option("--max-units", max_units,
                    "Stop after this many units (setup, offline epoch, online iteration) and save latest.drft");

  std::string eval_ckpt;
  std::size_t episodes = 50;
  std::uint64_t eval_seed = 0;
  bool eval_expert = false;
  std::vector<std::string> eval_env;
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint's policy; prints metrics JSON");
  eval->add_option("checkpoint", eval_ckpt, "Checkpoint file")->required();
  eval->add_option("-n,--episodes", episodes, "Number of evaluation rollouts")->check(CLI::PositiveNumber);
  eval->add_option("--seed", eval_seed, "Seed for the evaluation episodes");
  eval->add_flag("--expert", eval_expert, "Evaluate the scripted expert instead of the learner");
  eval->add_option("--set", eval_env, "Override an environment parameter: env.key=value (repeatable)");

  ConfigArgs bench_cfg;
  std::vector<std::string> ranks;
  std::size_t batches = 50;
  std::string bench_out;
  auto* bench = app.add_subcommand("bench", "Count FLOPs and time forward/backward passes per rank");
  bench_cfg.attach(bench);
  bench->add_option("-r,--ranks", ranks, "Ranks: integers, p, or p/<d> (default p,p/2,p/4,p/8)")->delimiter(',');
  bench->add_option("-b,--batches", batches, "Measured batches per rank, after 5 warmup batches")
      ->check(CLI::PositiveNumber);
  bench->add_option("-o,--output", bench_out, "CSV destination (default stdout)");

  ConfigArgs sweep_cfg;
  std::string axis, sweep_out;
  std::vector<std::string> values;
  std::size_t seeds = 3, jobs = 1;
  auto* sweep = app.add_subcommand("sweep", "Run a matrix of sessions along one axis; prints aggregated CSV");
  sweep_cfg.attach(sweep);
  sweep->add_option("-a,--axis", axis, "decay_fn or r_min")->required()->check(CLI::IsMember({"decay_fn", "r_min"}));
  sweep->add_option("-v,--values", values, "Axis values (default: the axis' standard set)")->delimiter(',');
  sweep->add_option("-s,--seeds", seeds, "Seeds per value, starting at the config seed")->check(CLI::Range(1, 1000));
  sweep->add_option("-j,--jobs", jobs, "Worker threads")->check(CLI::PositiveNumber);
  sweep->add_option("-o,--output", sweep_out, "CSV destination (default stdout)");

  std::string kind = "sigmoid", preview_out;
  int r_max = 2048, r_min = 256, epochs = 150;
  double steepness = 0.5, midpoint = 0;
  auto* preview = app.add_subcommand("schedule-preview", "Print the rank schedule as CSV (epoch,rank)");
  preview->add_option("-k,--kind", kind, "linear | cosine | sigmoid | exponential | constant");
  preview->add_option("--r-max", r_max, "Largest rank");
  preview->add_option("--r-min", r_min, "Smallest rank");
  preview->add_option("-T,--epochs", epochs, "Epochs of decay");
  preview->add_option("--steepness", steepness, "Steepness for sigmoid and exponential");
  auto* mid_opt = preview->add_option("--midpoint", midpoint, "Sigmoid midpoint (default epochs/2)");
  preview->add_option("-o,--output", preview_out, "CSV destination (default stdout)");

  std::string inspect_path;
  auto* inspect = app.add_subcommand("checkpoint-inspect", "Print a checkpoint's header and manifest as JSON");
  inspect->add_option("checkpoint", inspect_path, "Checkpoint file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return DRIFT_ERR_CONFIG;
  }
  drift_set_log_level(quiet ? 1 : 0);

  auto load_config = [](const ConfigArgs& c, std::string& text) {
    if (!read_text(c.path, text)) {
      std::cerr << "error: " << c.path << ": cannot read configuration\n";
      return false;
    }
    return true;
  };

  if (*train) {
    std::string text;
    if (resume.empty()) {
      if (train_cfg.path.empty()) {
        std::cerr << "error: train needs --config or --resume\n";
        return DRIFT_ERR_CONFIG;
      }
      if (!load_config(train_cfg, text)) return DRIFT_ERR_CONFIG;
    }
    const auto ov = c_strings(train_cfg.overrides);
    Owned summary;
    const int rc = report(drift_train(resume.empty() ? text.c_str() : nullptr, train_cfg.path.c_str(), ov.data(),
                                      ov.size(), train_out.empty() ? nullptr : train_out.c_str(),
                                      resume.empty() ? nullptr : resume.c_str(), max_units, &summary.s));
    if (rc == 0) std::cout << summary.str() << "\n";
    return rc;
  }
  if (*eval) {
    const auto ov = c_strings(eval_env);
    Owned out;
    const int rc = report(drift_eval(eval_ckpt.c_str(), episodes, eval_seed, eval_expert ? 1 : 0, ov.data(),
                                     ov.size(), &out.s));
    if (rc == 0) std::cout << out.str() << "\n";
    return rc;
  }
  if (*bench) {
    std::string text;
    if (!load_config(bench_cfg, text)) return DRIFT_ERR_CONFIG;
    const auto ov = c_strings(bench_cfg.overrides);
    const auto rk = c_strings(ranks);
    Owned out;
    const int rc = report(drift_bench(text.c_str(), bench_cfg.path.c_str(), ov.data(), ov.size(), rk.data(),
                                      rk.size(), batches, &out.s));
    return rc == 0 ? emit(out.str(), bench_out) : rc;
  }
  if (*sweep) {
    std::string text;
    if (!load_config(sweep_cfg, text)) return DRIFT_ERR_CONFIG;
    const auto ov = c_strings(sweep_cfg.overrides);
    const auto vals = c_strings(values);
    Owned out;
    const int rc = report(drift_sweep(text.c_str(), sweep_cfg.path.c_str(), ov.data(), ov.size(), axis.c_str(),
                                      vals.data(), vals.size(), seeds, jobs, &out.s));
    return rc == 0 ? emit(out.str(), sweep_out) : rc;
  }
  if (*preview) {
    Owned out;
    const int rc = report(drift_schedule_preview(kind.c_str(), r_max, r_min, epochs, steepness,
                                                 mid_opt->count() > 0 ? 1 : 0, midpoint, &out.s));
    return rc == 0 ? emit(out.str(), preview_out) : rc;
  }
  if (*inspect) {
    Owned out;
    const int rc = report(drift_checkpoint_inspect(inspect_path.c_str(), &out.s));
    if (rc == 0) std::cout << out.str() << "\n";
    return rc;
  }
  return 0;
}
