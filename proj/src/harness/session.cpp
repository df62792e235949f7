#include "harness/session.hpp"

#include <chrono>

#include "numerics/log.hpp"

namespace drift::harness {

using diffusion::BlockMode;

namespace {

const std::pair<Strategy, const char*> kStrategyNames[] = {
    {Strategy::kDriftRm, "drift_rm"},
    {Strategy::kFpmo, "fpmo"},
    {Strategy::kMplo, "mplo"},
    {Strategy::kDriftLoraStatic, "drift_lora_static"},
    {Strategy::kDriftLoraSched, "drift_lora_sched"},
    {Strategy::kHgFull, "hg_full"},
    {Strategy::kBc, "bc"},
};

bool uses_scheduler(Strategy s) {
  return s == Strategy::kDriftRm || s == Strategy::kMplo || s == Strategy::kDriftLoraSched;
}

std::uint64_t derive(std::uint64_t seed, std::uint64_t stream) {
  return num::splitmix64(seed ^ num::splitmix64(stream));
}

std::unique_ptr<Learner> build_learner(const SessionConfig& cfg, std::uint64_t init_seed) {
  return std::make_unique<Learner>(cfg.net, init_seed, cfg.optimizer,
                                   diffusion::NoiseSchedule::linear(cfg.diffusion_steps, cfg.beta_start, cfg.beta_end),
                                   diffusion::SamplerOptions{true, cfg.clip_sample});
}

double resolve_gate(const SessionConfig& cfg, const Dataset& offline) {
  if (cfg.gate_threshold) return *cfg.gate_threshold;
  try {
    const double t = compute_gate_threshold(offline);
    log_info("gate threshold resolved from offline data: " + std::to_string(t));
    return t;
  } catch (const ContractError&) {
    throw ConfigError("gate.threshold is \"auto\" but the offline data has no consecutive expert actions");
  }
}

// Offline data, fitted action scaling and gate threshold shared by every driver.
void prepare(const SessionConfig& cfg, const SeedPlan& seeds, const Environment& env, const ScriptedExpert& expert,
             Dataset& offline, Learner& learner, double& threshold) {
  offline = collect_offline(env, expert, cfg.offline_rollouts, seeds.offline_data);
  const auto actions = offline.labeled_actions();
  learner.normalizer = actions.empty() ? diffusion::ActionNormalizer::identity(cfg.net.action_dim)
                                       : diffusion::ActionNormalizer::fit(actions, cfg.net.action_dim);
  threshold = cfg.online_iterations > 0 && cfg.strategy != Strategy::kBc ? resolve_gate(cfg, offline)
                                                                          : cfg.gate_threshold.value_or(1.0);
}

}  // namespace

std::string to_string(Strategy s) {
  for (const auto& [k, name] : kStrategyNames)
    if (k == s) return name;
  return "unknown";
}

std::optional<Strategy> parse_strategy(const std::string& name) {
  for (const auto& [k, n] : kStrategyNames)
    if (name == n) return k;
  return std::nullopt;
}

BlockMode default_mode(Strategy s) {
  switch (s) {
    case Strategy::kDriftLoraStatic:
    case Strategy::kHgFull:
    case Strategy::kBc:
      return BlockMode::kPlain;
    case Strategy::kDriftLoraSched:
      return BlockMode::kLora;
    default:
      return BlockMode::kFactored;
  }
}

std::string to_string(ScheduleSpan s) { return s == ScheduleSpan::kOffline ? "offline" : "combined"; }

std::optional<ScheduleSpan> parse_schedule_span(const std::string& name) {
  if (name == "offline") return ScheduleSpan::kOffline;
  if (name == "combined") return ScheduleSpan::kCombined;
  return std::nullopt;
}

SessionConfig resolve(SessionConfig cfg) {
  try {
    diffusion::validate(cfg.net);
  } catch (const ContractError& e) {
    throw ConfigError(e.what());
  }
  const BlockMode mode = cfg.net.mode;
  const bool full_rank = cfg.strategy == Strategy::kHgFull || cfg.strategy == Strategy::kBc;
  const bool consistent = full_rank ? mode != BlockMode::kLora : mode == default_mode(cfg.strategy);
  if (!consistent) {
    throw ConfigError("strategy " + to_string(cfg.strategy) + " cannot run with net mode " +
                      diffusion::to_string(mode) + " (expected " +
                      (full_rank ? std::string("plain or factored") : diffusion::to_string(default_mode(cfg.strategy))) +
                      ")");
  }
  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw ConfigError(what);
  };
  require(cfg.offline_epochs >= 0, "session.offline_epochs must be >= 0");
  require(cfg.online_iterations >= 0, "session.online_iterations must be >= 0");
  require(cfg.checkpoint_every >= 0, "session.checkpoint_every must be >= 0");
  require(cfg.batch_size > 0, "optimizer.batch_size must be positive");
  require(cfg.optimizer.lr > 0, "optimizer.lr must be positive");
  require(cfg.exec_steps > 0, "eval.exec_steps must be positive");
  require(cfg.diffusion_steps > 0, "diffusion.steps must be positive");
  require(cfg.beta_start > 0 && cfg.beta_end < 1 && cfg.beta_start <= cfg.beta_end,
          "diffusion betas must satisfy 0 < beta_start <= beta_end < 1");
  require(!cfg.gate_threshold || (*cfg.gate_threshold >= -1.0 && *cfg.gate_threshold <= 1.0),
          "gate.threshold must lie in [-1, 1]");

  if (cfg.schedule.r_max == 0) {
    diffusion::NetConfig probe = cfg.net;
    probe.mode = BlockMode::kPlain;
    cfg.schedule.r_max = static_cast<int>(diffusion::PolicyNet<float>(probe, 0).max_rank());
  }
  if (cfg.schedule.total_epochs == 0) {
    const int span = cfg.offline_epochs + (cfg.schedule_span == ScheduleSpan::kCombined ? cfg.online_iterations : 0);
    cfg.schedule.total_epochs = std::max(span, 1);
  }
  try {
    sched::validate(cfg.schedule);
  } catch (const ContractError& e) {
    throw ConfigError(e.what());
  }
  return cfg;
}

SeedPlan::SeedPlan(std::uint64_t seed)
    : init(derive(seed, 1)),
      offline_data(derive(seed, 2)),
      online_episodes(derive(seed, 3)),
      evaluation(derive(seed, 4)),
      train(derive(seed, 5)),
      adapter(derive(seed, 6)),
      rollout(derive(seed, 7)) {}

DaggerSession::DaggerSession(SessionConfig cfg)
    : cfg_(resolve(std::move(cfg))),
      seeds_(cfg_.seed),
      env_(cfg_.env),
      expert_{1.0, cfg_.env.v_max},
      eval_seeds_(eval_seeds(seeds_.evaluation, cfg_.eval_rollouts)) {
  state_.train_rng = seeds_.train;
  state_.adapter_rng = seeds_.adapter;
  state_.rollout_rng = seeds_.rollout;
}

std::unique_ptr<Learner> DaggerSession::make_learner() const { return build_learner(cfg_, seeds_.init); }

bool DaggerSession::done() const {
  return state_.setup_done && state_.transitioned && state_.online_done >= cfg_.online_iterations &&
         (cfg_.checkpoint_every == 0 || state_.last_eval >= cfg_.online_iterations);
}

void DaggerSession::run() {
  while (!done()) advance();
}

void DaggerSession::advance() {
  if (!state_.setup_done) {
    setup();
    state_.setup_done = true;
    if (cfg_.offline_epochs == 0) transition();
  } else if (state_.offline_done < cfg_.offline_epochs) {
    offline_epoch();
    ++state_.offline_done;
    if (state_.offline_done == cfg_.offline_epochs) transition();
  } else if (state_.online_done < cfg_.online_iterations) {
    online_iteration();
    ++state_.online_done;
  }
  maybe_evaluate();
}

void DaggerSession::setup() {
  state_.learner = make_learner();
  prepare(cfg_, seeds_, env_, expert_, state_.offline_data, *state_.learner, state_.gate_threshold);
}

void DaggerSession::set_rank(int rank) {
  const auto t0 = std::chrono::steady_clock::now();
  diffusion::set_policy_rank(learner().net, static_cast<std::size_t>(rank), state_.adapter_rng);
  learner().optimizer.prune(learner().net.parameters());
  state_.reparam_time_s += std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void DaggerSession::offline_epoch() {
  const int e = state_.offline_done;
  if (uses_scheduler(cfg_.strategy)) set_rank(sched::scheduled_rank(cfg_.schedule, e));
  else if (cfg_.strategy == Strategy::kFpmo) set_rank(cfg_.schedule.r_max);
  const EpochStats stats = train_epoch(learner(), state_.offline_data, cfg_.batch_size, state_.train_rng,
                                       cfg_.qr_refresh);
  record("offline", e, stats, e == 0 ? state_.offline_data.label_count() : 0);
}

void DaggerSession::transition() {
  const int r_min = cfg_.schedule.r_min;
  switch (cfg_.strategy) {
    case Strategy::kDriftRm:
    case Strategy::kDriftLoraSched:
      set_rank(sched::terminal_rank(cfg_.schedule));
      break;
    case Strategy::kFpmo:
      set_rank(r_min);
      break;
    case Strategy::kMplo:
    case Strategy::kDriftLoraStatic: {
      const auto t0 = std::chrono::steady_clock::now();
      learner().net.convert(BlockMode::kLora, static_cast<std::size_t>(r_min), state_.adapter_rng);
      learner().optimizer.prune(learner().net.parameters());
      state_.reparam_time_s += std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      break;
    }
    case Strategy::kHgFull:
    case Strategy::kBc:
      break;
  }
  state_.data = state_.offline_data;
  state_.transitioned = true;
}

void DaggerSession::online_iteration() {
  const int j = state_.online_done + 1;
  const std::uint64_t seed = episode_seed(seeds_.online_episodes, static_cast<std::uint64_t>(j - 1));
  const RolloutResult r =
      cfg_.strategy == Strategy::kBc
          ? expert_rollout(env_, expert_, seed)
          : rollout_with_gate(env_, learner().planner(), expert_, ExpertGate{state_.gate_threshold}, seed,
                              state_.rollout_rng);
  state_.data.append(r.labeled);
  const EpochStats stats = train_epoch(learner(), state_.data, cfg_.batch_size, state_.train_rng, cfg_.qr_refresh);
  record("online", j, stats, r.labeled.label_count());
}

void DaggerSession::maybe_evaluate() {
  if (!state_.transitioned || cfg_.checkpoint_every == 0) return;
  const int it = state_.online_done;
  const bool due = it % cfg_.checkpoint_every == 0 || it == cfg_.online_iterations;
  if (!due || state_.last_eval >= it) return;
  const Metrics m = evaluate(learner().planner(), env_, eval_seeds_, cfg_.exec_steps);
  state_.checkpoints.push_back({it, m.sr, m.msd_mean, m.msd_std, state_.data.label_count()});
  state_.last_eval = it;
}

void DaggerSession::record(const std::string& phase, int epoch, const EpochStats& stats, std::size_t new_labels) {
  EpochRecord r;
  r.phase = phase;
  r.epoch = epoch;
  r.rank = static_cast<int>(learner().net.current_rank());
  r.mode = learner().net.mode();
  r.batch_time_s = stats.batch_time_s;
  r.train_time_s = stats.train_time_s;
  r.batches = stats.batches;
  r.loss = stats.loss;
  r.nel = phase == "offline" ? state_.offline_data.label_count() : state_.data.label_count();
  r.new_labels = new_labels;
  r.weights_hash = weights_hash(learner().net);
  state_.epochs.push_back(r);
}

MetricsReport metrics_aggregate(const DaggerSession& session) {
  const SessionState& s = session.state();
  MetricsReport rep;
  rep.offline_labels = s.offline_data.label_count();
  rep.nel = s.transitioned ? s.data.label_count() : rep.offline_labels;
  rep.online_labels = rep.nel - rep.offline_labels;
  double time[2] = {0, 0};
  std::size_t batches[2] = {0, 0};
  for (const auto& e : s.epochs) {
    const int k = e.phase == "online" ? 1 : 0;
    time[k] += e.train_time_s;
    batches[k] += e.batches;
  }
  if (batches[0] > 0) rep.mbt_offline = time[0] / static_cast<double>(batches[0]);
  if (batches[1] > 0) rep.mbt_online = time[1] / static_cast<double>(batches[1]);
  double weighted = 0, weight = 0;
  if (rep.mbt_offline) {
    weighted += *rep.mbt_offline * static_cast<double>(rep.offline_labels);
    weight += static_cast<double>(rep.offline_labels);
  }
  if (rep.mbt_online) {
    weighted += *rep.mbt_online * static_cast<double>(rep.online_labels);
    weight += static_cast<double>(rep.online_labels);
  }
  if (weight > 0) rep.mbt_all = weighted / weight;
  rep.ct_s = time[0] + time[1] + s.reparam_time_s;
  if (!s.checkpoints.empty()) rep.final_checkpoint = s.checkpoints.back();
  return rep;
}

DriverResult hg_dagger(const SessionConfig& raw) {
  const SessionConfig cfg = resolve(raw);
  SeedPlan seeds(cfg.seed);
  PointReach2D env(cfg.env);
  const ScriptedExpert expert{1.0, cfg.env.v_max};
  DriverResult out;
  out.learner = build_learner(cfg, seeds.init);
  Learner& learner = *out.learner;
  Dataset offline;
  double threshold = 0;
  prepare(cfg, seeds, env, expert, offline, learner, threshold);

  num::Rng train_rng = seeds.train, rollout_rng = seeds.rollout;
  for (int e = 0; e < cfg.offline_epochs; ++e) {
    train_epoch(learner, offline, cfg.batch_size, train_rng, cfg.qr_refresh);
    out.update_hashes.push_back(weights_hash(learner.net));
  }
  Dataset data = offline;
  const ExpertGate gate{threshold};
  for (int j = 1; j <= cfg.online_iterations; ++j) {
    const auto r = rollout_with_gate(env, learner.planner(), expert, gate,
                                     episode_seed(seeds.online_episodes, static_cast<std::uint64_t>(j - 1)),
                                     rollout_rng);
    data.append(r.labeled);
    train_epoch(learner, data, cfg.batch_size, train_rng, cfg.qr_refresh);
    out.update_hashes.push_back(weights_hash(learner.net));
  }
  out.nel = data.label_count();
  return out;
}

}  // namespace drift::harness
