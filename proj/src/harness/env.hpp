#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <vector>

namespace drift::harness {

using Vec = std::vector<double>;

struct StepResult {
  Vec obs;
  bool done = false;
  bool success = false;
};

// Episodic control task. Deterministic given the reset seed and the action sequence.
class Environment {
 public:
  virtual ~Environment() = default;
  virtual std::size_t obs_dim() const = 0;
  virtual std::size_t action_dim() const = 0;
  virtual int max_steps() const = 0;
  virtual Vec reset(std::uint64_t seed) = 0;
  virtual StepResult step(const Vec& action) = 0;
  virtual std::unique_ptr<Environment> clone() const = 0;
};

struct PointReachParams {
  double dt = 0.5;
  double v_max = 0.25;
  double tolerance = 0.05;
  int max_steps = 60;
  double min_separation = 0.3;
};

// A point agent in [-1, 1]^2 must visit two waypoints in order.
// Observation: (pos, active waypoint, phase one-hot).
class PointReach2D final : public Environment {
 public:
  explicit PointReach2D(PointReachParams params = {});

  std::size_t obs_dim() const override { return 6; }
  std::size_t action_dim() const override { return 2; }
  int max_steps() const override { return params_.max_steps; }
  Vec reset(std::uint64_t seed) override;
  StepResult step(const Vec& action) override;
  std::unique_ptr<Environment> clone() const override { return std::make_unique<PointReach2D>(*this); }

  const PointReachParams& params() const { return params_; }
  int phase() const { return phase_; }
  int steps() const { return steps_; }

 private:
  Vec observe() const;

  PointReachParams params_;
  double pos_[2] = {0, 0};
  double waypoints_[2][2] = {{0, 0}, {0, 0}};
  int phase_ = 0;
  int steps_ = 0;
  bool done_ = true;
};

// Velocity command that clips to norm <= v_max.
Vec clip_norm(const Vec& v, double v_max);

// Proportional controller toward the active waypoint, gain 1, norm-clipped.
struct ScriptedExpert {
  double gain = 1.0;
  double v_max = 0.25;
  Vec operator()(const Vec& obs) const;
};

}  // namespace drift::harness
