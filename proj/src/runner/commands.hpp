#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"
#include "runner/config.hpp"
#include "schedule/rank_schedule.hpp"

namespace drift::runner {

struct TrainOptions {
  std::string output_dir;  // empty: the config's output_dir
  std::string resume;      // checkpoint to continue from; the config comes from it
  long max_units = -1;     // stop after this many session units (setup, epoch, iteration); < 0: run to the end
};

// Runs (or resumes) a session, writing under the output directory:
//   config.resolved.json, epochs.csv, checkpoints.csv, summary.json,
//   checkpoints/iter_NNNN.drft at every evaluation, latest.drft at exit.
// Returns the summary.
nlohmann::json train(const RunConfig& cfg, const TrainOptions& opts);

struct EvalOptions {
  std::size_t episodes = 50;
  std::uint64_t seed = 0;
  bool expert = false;                     // evaluate the scripted expert instead of the learner
  std::vector<std::string> env_overrides;  // "env.key=value", applied to the checkpoint's config
};

nlohmann::json evaluate_checkpoint(const std::string& path, const EvalOptions& opts);

struct BenchOptions {
  // Absolute ranks ("12"), or "p" / "p/<d>" for each layer's own bound divided by d.
  std::vector<std::string> ranks{"p", "p/2", "p/4", "p/8"};
  std::size_t batches = 50;
  std::size_t warmup = 5;
};

struct BenchRow {
  std::string label;
  std::string mode;
  std::size_t rank = 0;  // largest per-layer rank
  std::uint64_t fwd_flops = 0;
  std::uint64_t weight_flops = 0;
  std::uint64_t adapter_flops = 0;  // data-path FLOPs above the plain net (LoRA)
  std::size_t trainable_params = 0;  // conv blocks: weights or factors plus bias
  double fwd_ms_median = 0, fwd_ms_iqr = 0;
  double bwd_ms_median = 0, bwd_ms_iqr = 0;
  std::size_t batches = 0;
};

// Ranks are measured round-robin, one copy of the net per rank, so slow drift
// in machine speed affects all rows alike. Times are calling-thread CPU time.
std::vector<BenchRow> bench(const RunConfig& cfg, const BenchOptions& opts);
std::string bench_csv(const std::vector<BenchRow>& rows);

struct SweepOptions {
  std::string axis;                 // decay_fn | r_min
  std::vector<std::string> values;  // empty: the axis defaults
  std::size_t seeds = 3;
  std::size_t jobs = 1;
};

std::vector<std::string> default_sweep_values(const std::string& axis);
// One row per (value, seed, checkpoint).
std::string sweep(const RunConfig& cfg, const SweepOptions& opts);

std::string schedule_preview_csv(const sched::RankSchedule& s);

// Median and interquartile range with linear interpolation.
std::pair<double, double> median_iqr(std::vector<double> v);

}  // namespace drift::runner
