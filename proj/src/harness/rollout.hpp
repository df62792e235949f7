#pragma once

#include <optional>
#include <vector>

#include "harness/learner.hpp"

namespace drift::harness {

struct RolloutResult {
  Trajectory trajectory;
  Dataset labeled;  // D_j: the trajectory when the expert labeled any step, else empty
};

// Learner-driven episode. The learner proposes the first action of a freshly
// planned horizon at every step; when the gate fires, the expert's action is
// executed and labeled instead. `sampler_rng` drives the learner's sampling.
RolloutResult rollout_with_gate(const Environment& env, const BatchPlanner& learner, const ScriptedExpert& expert,
                                const ExpertGate& gate, std::uint64_t seed, num::Rng& sampler_rng);

// Same loop with the expert executing and labeling every step (incremental BC).
RolloutResult expert_rollout(const Environment& env, const ScriptedExpert& expert, std::uint64_t seed);

struct Metrics {
  double sr = 0;        // success rate
  double msd_mean = 0;  // task duration in steps; failures count as max_steps
  double msd_std = 0;
  std::size_t episodes = 0;
  std::size_t successes = 0;
  std::vector<int> durations;

  bool operator==(const Metrics&) const = default;
};

// Closed-loop evaluation, one episode per seed, all episodes advanced in
// lockstep. Each replan executes up to `exec_steps` actions of the plan.
// Episode randomness derives from the seed alone.
Metrics evaluate(const BatchPlanner& policy, const Environment& env, const std::vector<std::uint64_t>& seeds,
                 std::size_t exec_steps);

BatchPlanner expert_planner(const ScriptedExpert& expert);
// Uniform velocity commands in the action box.
BatchPlanner random_planner(double v_max);

std::vector<std::uint64_t> eval_seeds(std::uint64_t seed, std::size_t n);

}  // namespace drift::harness
