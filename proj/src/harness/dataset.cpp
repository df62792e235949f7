#include "harness/dataset.hpp"

#include <algorithm>
#include <cmath>

#include "numerics/errors.hpp"
#include "numerics/rng.hpp"

namespace drift::harness {

std::size_t Trajectory::label_count() const {
  return static_cast<std::size_t>(std::count(expert_label.begin(), expert_label.end(), true));
}

void Trajectory::push(Vec obs, Vec action, bool labeled) {
  observations.push_back(std::move(obs));
  actions.push_back(std::move(action));
  expert_label.push_back(labeled);
}

std::size_t Dataset::label_count() const {
  std::size_t n = 0;
  for (const auto& t : trajectories) n += t.label_count();
  return n;
}

std::size_t Dataset::steps() const {
  std::size_t n = 0;
  for (const auto& t : trajectories) n += t.size();
  return n;
}

void Dataset::append(const Dataset& other) {
  trajectories.insert(trajectories.end(), other.trajectories.begin(), other.trajectories.end());
}

std::vector<double> Dataset::labeled_actions() const {
  std::vector<double> out;
  for (const auto& t : trajectories)
    for (std::size_t i = 0; i < t.size(); ++i)
      if (t.expert_label[i]) out.insert(out.end(), t.actions[i].begin(), t.actions[i].end());
  return out;
}

std::vector<SampleIndex> labeled_samples(const Dataset& d) {
  std::vector<SampleIndex> out;
  for (std::size_t j = 0; j < d.trajectories.size(); ++j) {
    const auto& t = d.trajectories[j];
    for (std::size_t i = 0; i < t.size(); ++i)
      if (t.expert_label[i]) out.push_back({static_cast<std::uint32_t>(j), static_cast<std::uint32_t>(i)});
  }
  return out;
}

void sample_window(const Dataset& d, SampleIndex s, std::size_t obs_horizon, std::size_t horizon, double* obs_out,
                   double* act_out) {
  const Trajectory& t = d.trajectories.at(s.trajectory);
  const std::size_t step = s.step;
  const std::size_t od = t.observations[step].size();
  for (std::size_t k = 0; k < obs_horizon; ++k) {
    const std::size_t back = obs_horizon - 1 - k;
    const std::size_t idx = step >= back ? step - back : 0;
    std::copy(t.observations[idx].begin(), t.observations[idx].end(), obs_out + k * od);
  }
  const std::size_t ad = t.actions[step].size();
  std::size_t last = step;
  bool contiguous = true;
  for (std::size_t h = 0; h < horizon; ++h) {
    const std::size_t idx = step + h;
    contiguous = contiguous && idx < t.size() && t.expert_label[idx];
    if (contiguous) last = idx;
    for (std::size_t c = 0; c < ad; ++c) act_out[c * horizon + h] = t.actions[last][c];
  }
}

std::vector<double> stack_history(const std::vector<Vec>& history, std::size_t obs_horizon) {
  if (history.empty()) throw ContractError("stack_history: empty history");
  std::vector<double> out;
  const std::size_t n = history.size();
  for (std::size_t k = 0; k < obs_horizon; ++k) {
    const std::size_t back = obs_horizon - 1 - k;
    const Vec& o = history[n - 1 >= back ? n - 1 - back : 0];
    out.insert(out.end(), o.begin(), o.end());
  }
  return out;
}

double cosine_similarity(const Vec& a, const Vec& b) {
  if (a.size() != b.size()) throw DimensionError("cosine_similarity: length mismatch");
  double dot = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  constexpr double tiny = 1e-24;
  // Two null actions agree; a null action against a real one has no direction.
  if (na <= tiny && nb <= tiny) return 1.0;
  if (na <= tiny || nb <= tiny) return 0.0;
  return std::clamp(dot / std::sqrt(na * nb), -1.0, 1.0);
}

double compute_gate_threshold(const Dataset& expert_data) {
  double total = 0;
  std::size_t pairs = 0;
  for (const auto& t : expert_data.trajectories)
    for (std::size_t i = 1; i < t.size(); ++i) {
      if (!t.expert_label[i - 1] || !t.expert_label[i]) continue;
      total += cosine_similarity(t.actions[i - 1], t.actions[i]);
      ++pairs;
    }
  if (pairs == 0) throw ContractError("compute_gate_threshold: no consecutive expert action pairs");
  return total / static_cast<double>(pairs);
}

std::uint64_t episode_seed(std::uint64_t seed, std::uint64_t i) {
  return num::splitmix64(num::splitmix64(seed) ^ (0xA24BAED4963EE407ULL * (i + 1)));
}

Dataset collect_offline(const Environment& env, const ScriptedExpert& expert, std::size_t n_rollouts,
                        std::uint64_t seed) {
  Dataset d;
  auto e = env.clone();
  for (std::size_t i = 0; i < n_rollouts; ++i) {
    Trajectory t;
    Vec obs = e->reset(episode_seed(seed, i));
    for (;;) {
      Vec a = expert(obs);
      StepResult r = e->step(a);
      t.push(std::move(obs), std::move(a), true);
      obs = std::move(r.obs);
      if (r.done) {
        t.success = r.success;
        break;
      }
    }
    d.add(std::move(t));
  }
  return d;
}

}  // namespace drift::harness
