#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "harness/rollout.hpp"
#include "schedule/rank_schedule.hpp"

namespace drift::harness {

// Phase strategies:
//   drift_rm           factored blocks, scheduled rank offline, terminal rank online
//   fpmo               factored blocks, full rank offline, r_min online
//   mplo               factored blocks with the schedule offline, LoRA at r_min online
//   drift_lora_static  plain offline, LoRA at r_min online
//   drift_lora_sched   LoRA over a frozen random base, merged and re-injected per rank change
//   hg_full            full rank throughout (plain, or factored at full rank)
//   bc                 full rank; online iterations add complete expert rollouts
enum class Strategy { kDriftRm, kFpmo, kMplo, kDriftLoraStatic, kDriftLoraSched, kHgFull, kBc };

std::string to_string(Strategy s);
std::optional<Strategy> parse_strategy(const std::string& name);
// Block mode a strategy starts in when the configuration does not say.
diffusion::BlockMode default_mode(Strategy s);

// What the schedule's epoch count covers when it is left automatic.
enum class ScheduleSpan { kOffline, kCombined };
std::string to_string(ScheduleSpan s);
std::optional<ScheduleSpan> parse_schedule_span(const std::string& name);

struct SessionConfig {
  std::string run_id = "run";
  Strategy strategy = Strategy::kDriftRm;
  diffusion::NetConfig net;
  // r_max == 0 resolves to the net's largest layer rank; total_epochs == 0 to
  // offline_epochs, plus online_iterations under the combined span.
  sched::RankSchedule schedule{sched::DecayKind::kSigmoid, 0, 16, 0, 0.5, std::nullopt};
  ScheduleSpan schedule_span = ScheduleSpan::kCombined;
  int offline_epochs = 30;
  int online_iterations = 20;
  std::size_t offline_rollouts = 50;
  std::size_t eval_rollouts = 50;
  int checkpoint_every = 5;  // 0 disables evaluation
  std::uint64_t seed = 0;
  num::AdamOptions optimizer;
  std::size_t batch_size = 64;
  std::optional<double> gate_threshold;  // empty: derived from the offline data
  std::size_t diffusion_steps = 100;
  double beta_start = 1e-4;
  double beta_end = 2e-2;
  bool clip_sample = true;
  std::size_t exec_steps = 1;
  bool qr_refresh = false;
  PointReachParams env;
};

// Fills the automatic schedule fields and checks strategy/mode consistency.
// Throws ConfigError.
SessionConfig resolve(SessionConfig cfg);

// Independent streams derived from the run seed.
struct SeedPlan {
  std::uint64_t init;
  std::uint64_t offline_data;
  std::uint64_t online_episodes;
  std::uint64_t evaluation;
  num::Rng train;
  num::Rng adapter;
  num::Rng rollout;

  explicit SeedPlan(std::uint64_t seed);
};

struct EpochRecord {
  std::string phase;  // "offline" | "online"
  int epoch = 0;      // offline epoch or online iteration (1-based for online)
  int rank = 0;
  diffusion::BlockMode mode = diffusion::BlockMode::kPlain;
  double batch_time_s = 0;
  double train_time_s = 0;
  std::size_t batches = 0;
  double loss = 0;
  std::size_t nel = 0;
  std::size_t new_labels = 0;
  std::uint64_t weights_hash = 0;
};

struct CheckpointRecord {
  int iteration = 0;  // online iterations completed
  double sr = 0;
  double msd_mean = 0;
  double msd_std = 0;
  std::size_t nel = 0;
};

struct SessionState {
  bool setup_done = false;
  int offline_done = 0;
  bool transitioned = false;
  int online_done = 0;
  int last_eval = -1;
  double gate_threshold = 0;
  double reparam_time_s = 0;
  Dataset offline_data;  // D_B
  Dataset data;          // D
  std::unique_ptr<Learner> learner;
  num::Rng train_rng;
  num::Rng adapter_rng;
  num::Rng rollout_rng;
  std::vector<EpochRecord> epochs;
  std::vector<CheckpointRecord> checkpoints;
};

struct MetricsReport {
  std::size_t nel = 0;
  std::size_t offline_labels = 0;
  std::size_t online_labels = 0;
  std::optional<double> mbt_offline;
  std::optional<double> mbt_online;
  std::optional<double> mbt_all;
  double ct_s = 0;
  std::optional<CheckpointRecord> final_checkpoint;
};

// Resumable DRIFT-DAgger run. Each call to advance() performs one unit of
// work: setup, one offline epoch, or one online iteration (plus any due
// evaluation), so a run can be checkpointed between units.
class DaggerSession {
 public:
  explicit DaggerSession(SessionConfig cfg);

  const SessionConfig& config() const { return cfg_; }
  bool done() const;
  void advance();
  void run();

  SessionState& state() { return state_; }
  const SessionState& state() const { return state_; }
  Learner& learner() { return *state_.learner; }
  const Environment& env() const { return env_; }
  const ScriptedExpert& expert() const { return expert_; }
  const std::vector<std::uint64_t>& evaluation_seeds() const { return eval_seeds_; }

  // Builds a learner in the strategy's initial configuration.
  std::unique_ptr<Learner> make_learner() const;

 private:
  void setup();
  void offline_epoch();
  void transition();
  void online_iteration();
  void maybe_evaluate();
  void set_rank(int rank);
  void record(const std::string& phase, int epoch, const EpochStats& stats, std::size_t new_labels);

  SessionConfig cfg_;
  SeedPlan seeds_;
  PointReach2D env_;
  ScriptedExpert expert_;
  std::vector<std::uint64_t> eval_seeds_;
  SessionState state_;
};

MetricsReport metrics_aggregate(const DaggerSession& session);

struct DriverResult {
  std::unique_ptr<Learner> learner;
  std::vector<std::uint64_t> update_hashes;  // weights after every training pass
  std::size_t nel = 0;
};

// Standalone HG-DAgger: offline BC then gated online iterations, always at the
// learner's initial (full) rank. Shares primitives and seed derivation with
// DaggerSession.
DriverResult hg_dagger(const SessionConfig& cfg);

}  // namespace drift::harness
