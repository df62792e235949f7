#include "harness/env.hpp"

#include <algorithm>
#include <cmath>

#include "numerics/errors.hpp"
#include "numerics/rng.hpp"

namespace drift::harness {

PointReach2D::PointReach2D(PointReachParams params) : params_(params) {
  if (params_.dt <= 0 || params_.v_max <= 0 || params_.tolerance <= 0 || params_.max_steps < 1)
    throw ContractError("PointReach2D: dt, v_max, tolerance and max_steps must be positive");
}

Vec PointReach2D::reset(std::uint64_t seed) {
  num::Rng rng(seed);
  pos_[0] = rng.uniform(-0.9, 0.9);
  pos_[1] = rng.uniform(-0.9, 0.9);
  // Rejection sampling keeps both legs of the task non-trivial.
  auto far_from = [&](const double* a, const double* b) {
    return std::hypot(a[0] - b[0], a[1] - b[1]) >= params_.min_separation;
  };
  do {
    waypoints_[0][0] = rng.uniform(-0.8, 0.8);
    waypoints_[0][1] = rng.uniform(-0.8, 0.8);
  } while (!far_from(waypoints_[0], pos_));
  do {
    waypoints_[1][0] = rng.uniform(-0.8, 0.8);
    waypoints_[1][1] = rng.uniform(-0.8, 0.8);
  } while (!far_from(waypoints_[1], waypoints_[0]));
  phase_ = 0;
  steps_ = 0;
  done_ = false;
  return observe();
}

StepResult PointReach2D::step(const Vec& action) {
  if (done_) throw ContractError("PointReach2D: step after episode end; call reset");
  if (action.size() != 2) throw DimensionError("PointReach2D: action must have 2 components");
  const Vec v = clip_norm(action, params_.v_max);
  for (int d = 0; d < 2; ++d) pos_[d] = std::clamp(pos_[d] + params_.dt * v[d], -1.0, 1.0);
  ++steps_;
  bool success = false;
  const double* wp = waypoints_[phase_];
  if (std::hypot(pos_[0] - wp[0], pos_[1] - wp[1]) <= params_.tolerance) {
    if (phase_ == 1) success = true;
    else phase_ = 1;
  }
  done_ = success || steps_ >= params_.max_steps;
  return {observe(), done_, success};
}

Vec PointReach2D::observe() const {
  const double* wp = waypoints_[phase_];
  return {pos_[0], pos_[1], wp[0], wp[1], phase_ == 0 ? 1.0 : 0.0, phase_ == 1 ? 1.0 : 0.0};
}

Vec clip_norm(const Vec& v, double v_max) {
  double norm = 0;
  for (double x : v) norm += x * x;
  norm = std::sqrt(norm);
  if (!std::isfinite(norm)) return Vec(v.size(), 0.0);
  if (norm <= v_max) return v;
  Vec out(v);
  for (double& x : out) x *= v_max / norm;
  return out;
}

Vec ScriptedExpert::operator()(const Vec& obs) const {
  if (obs.size() < 4) throw DimensionError("scripted expert: observation needs position and waypoint");
  return clip_norm({gain * (obs[2] - obs[0]), gain * (obs[3] - obs[1])}, v_max);
}

}  // namespace drift::harness
