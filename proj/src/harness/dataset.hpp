#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "harness/env.hpp"

namespace drift::harness {

struct Trajectory {
  std::vector<Vec> observations;  // observation seen before each action
  std::vector<Vec> actions;       // executed action
  std::vector<bool> expert_label;  // true where the expert produced the action
  bool success = false;

  std::size_t size() const { return actions.size(); }
  std::size_t label_count() const;
  void push(Vec obs, Vec action, bool labeled);
};

// Append-only store of trajectories.
struct Dataset {
  std::vector<Trajectory> trajectories;

  std::size_t label_count() const;
  std::size_t steps() const;
  bool empty() const { return trajectories.empty(); }
  void add(Trajectory t) { trajectories.push_back(std::move(t)); }
  void append(const Dataset& other);
  // Executed actions at labeled steps, flattened.
  std::vector<double> labeled_actions() const;
};

struct SampleIndex {
  std::uint32_t trajectory;
  std::uint32_t step;
};

// One training sample per labeled step.
std::vector<SampleIndex> labeled_samples(const Dataset& d);

// Observation history ending at the sample's step (oldest first, padded with the
// first observation) and the action window starting there, truncated to the
// contiguous labeled run and padded by repeating its last action. Actions are
// written channel-major: act_out[c * horizon + h].
void sample_window(const Dataset& d, SampleIndex s, std::size_t obs_horizon, std::size_t horizon, double* obs_out,
                   double* act_out);

// Last `obs_horizon` observations of a history, oldest first, padded with the first.
std::vector<double> stack_history(const std::vector<Vec>& history, std::size_t obs_horizon);

double cosine_similarity(const Vec& a, const Vec& b);

// The expert takes over when the learner's proposal points away from its own.
struct ExpertGate {
  double threshold = 0.0;
  bool intervene(const Vec& learner, const Vec& expert) const { return cosine_similarity(learner, expert) < threshold; }
};

// Mean cosine similarity over consecutive labeled action pairs within each trajectory.
double compute_gate_threshold(const Dataset& expert_data);

// Seed of the i-th episode of a seeded batch of rollouts.
std::uint64_t episode_seed(std::uint64_t seed, std::uint64_t i);

Dataset collect_offline(const Environment& env, const ScriptedExpert& expert, std::size_t n_rollouts,
                        std::uint64_t seed);

}  // namespace drift::harness
