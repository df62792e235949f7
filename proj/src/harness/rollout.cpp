#include "harness/rollout.hpp"

#include <cmath>

namespace drift::harness {

namespace {

Metrics summarize(const std::vector<int>& durations, const std::vector<bool>& success) {
  Metrics m;
  m.episodes = durations.size();
  m.durations = durations;
  if (m.episodes == 0) return m;
  double sum = 0;
  for (std::size_t i = 0; i < m.episodes; ++i) {
    m.successes += success[i] ? 1 : 0;
    sum += durations[i];
  }
  const double n = static_cast<double>(m.episodes);
  m.sr = static_cast<double>(m.successes) / n;
  m.msd_mean = sum / n;
  double var = 0;
  for (int d : durations) var += (d - m.msd_mean) * (d - m.msd_mean);
  m.msd_std = std::sqrt(var / n);
  return m;
}

}  // namespace

RolloutResult rollout_with_gate(const Environment& env, const BatchPlanner& learner, const ScriptedExpert& expert,
                                const ExpertGate& gate, std::uint64_t seed, num::Rng& sampler_rng) {
  auto e = env.clone();
  RolloutResult out;
  std::vector<std::vector<Vec>> history(1);
  history[0].push_back(e->reset(seed));
  std::vector<num::Rng> rngs{sampler_rng};
  for (;;) {
    const Vec& obs = history[0].back();
    const Vec proposal = learner(history, rngs).at(0).at(0);
    const Vec correction = expert(obs);
    const bool takeover = gate.intervene(proposal, correction);
    const Vec action = takeover ? correction : proposal;
    StepResult r = e->step(action);
    out.trajectory.push(obs, action, takeover);
    if (r.done) {
      out.trajectory.success = r.success;
      break;
    }
    history[0].push_back(std::move(r.obs));
  }
  sampler_rng = rngs[0];
  if (out.trajectory.label_count() > 0) out.labeled.add(out.trajectory);
  return out;
}

RolloutResult expert_rollout(const Environment& env, const ScriptedExpert& expert, std::uint64_t seed) {
  auto e = env.clone();
  RolloutResult out;
  Vec obs = e->reset(seed);
  for (;;) {
    Vec a = expert(obs);
    StepResult r = e->step(a);
    out.trajectory.push(std::move(obs), std::move(a), true);
    obs = std::move(r.obs);
    if (r.done) {
      out.trajectory.success = r.success;
      break;
    }
  }
  out.labeled.add(out.trajectory);
  return out;
}

Metrics evaluate(const BatchPlanner& policy, const Environment& env, const std::vector<std::uint64_t>& seeds,
                 std::size_t exec_steps) {
  if (exec_steps == 0) throw ContractError("evaluate: exec_steps must be positive");
  const std::size_t n = seeds.size();
  std::vector<std::unique_ptr<Environment>> envs;
  std::vector<std::vector<Vec>> histories(n);
  std::vector<num::Rng> rngs;
  std::vector<int> durations(n, 0);
  std::vector<bool> done(n, false), success(n, false);
  for (std::size_t i = 0; i < n; ++i) {
    envs.push_back(env.clone());
    histories[i].push_back(envs[i]->reset(seeds[i]));
    rngs.emplace_back(num::splitmix64(seeds[i] ^ 0x5EEDF00DULL));
  }
  for (;;) {
    std::vector<std::size_t> active;
    for (std::size_t i = 0; i < n; ++i)
      if (!done[i]) active.push_back(i);
    if (active.empty()) break;
    std::vector<std::vector<Vec>> batch_hist;
    std::vector<num::Rng> batch_rngs;
    for (std::size_t i : active) {
      batch_hist.push_back(histories[i]);
      batch_rngs.push_back(rngs[i]);
    }
    const auto plans = policy(batch_hist, batch_rngs);
    for (std::size_t a = 0; a < active.size(); ++a) {
      const std::size_t i = active[a];
      rngs[i] = batch_rngs[a];
      const std::size_t steps = std::min(exec_steps, plans[a].size());
      for (std::size_t s = 0; s < steps && !done[i]; ++s) {
        StepResult r = envs[i]->step(plans[a][s]);
        ++durations[i];
        done[i] = r.done;
        success[i] = r.success;
        histories[i].push_back(std::move(r.obs));
      }
    }
  }
  return summarize(durations, success);
}

BatchPlanner expert_planner(const ScriptedExpert& expert) {
  return [expert](const std::vector<std::vector<Vec>>& h, std::vector<num::Rng>&) {
    std::vector<std::vector<Vec>> out;
    for (const auto& hist : h) out.push_back({expert(hist.back())});
    return out;
  };
}

BatchPlanner random_planner(double v_max) {
  return [v_max](const std::vector<std::vector<Vec>>& h, std::vector<num::Rng>& rngs) {
    std::vector<std::vector<Vec>> out;
    for (std::size_t i = 0; i < h.size(); ++i)
      out.push_back({{rngs[i].uniform(-v_max, v_max), rngs[i].uniform(-v_max, v_max)}});
    return out;
  };
}

std::vector<std::uint64_t> eval_seeds(std::uint64_t seed, std::size_t n) {
  std::vector<std::uint64_t> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(episode_seed(seed ^ 0xE7A1E7A1ULL, i));
  return out;
}

}  // namespace drift::harness
