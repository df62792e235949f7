#include "schedule/rank_schedule.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "numerics/errors.hpp"

namespace drift::sched {

namespace {

// values within a few ulps of an integer snap to it (cos(pi/3) and friends)
constexpr long double kSnapUlps = 64.0L * std::numeric_limits<long double>::epsilon();

int snapped_floor(long double x) {
  const long double nearest = std::round(x);
  if (std::fabs(x - nearest) <= kSnapUlps * std::max(1.0L, std::fabs(x))) return static_cast<int>(nearest);
  return static_cast<int>(std::floor(x));
}

// tolerance relative to the value itself, so tiny positive offsets still round up
long long snapped_ceil(long double x) {
  const long double nearest = std::round(x);
  if (nearest != 0.0L && std::fabs(x - nearest) <= kSnapUlps * std::fabs(x)) return static_cast<long long>(nearest);
  return static_cast<long long>(std::ceil(x));
}

}  // namespace

std::string to_string(DecayKind kind) {
  switch (kind) {
    case DecayKind::kLinear: return "linear";
    case DecayKind::kCosine: return "cosine";
    case DecayKind::kSigmoid: return "sigmoid";
    case DecayKind::kExponential: return "exponential";
    case DecayKind::kConstant: return "constant";
  }
  return "unknown";
}

std::optional<DecayKind> parse_decay_kind(const std::string& name) {
  if (name == "linear") return DecayKind::kLinear;
  if (name == "cosine" || name == "cos") return DecayKind::kCosine;
  if (name == "sigmoid" || name == "sig") return DecayKind::kSigmoid;
  if (name == "exponential" || name == "exp") return DecayKind::kExponential;
  if (name == "constant") return DecayKind::kConstant;
  return std::nullopt;
}

void validate(const RankSchedule& s) {
  if (s.r_min < 1 || s.r_min > s.r_max) {
    throw ContractError("rank schedule requires 1 <= r_min <= r_max, got r_min=" + std::to_string(s.r_min) +
                        " r_max=" + std::to_string(s.r_max));
  }
  if (s.total_epochs < 1) throw ContractError("rank schedule requires T >= 1");
  if ((s.kind == DecayKind::kSigmoid || s.kind == DecayKind::kExponential) && !(s.steepness > 0.0)) {
    throw ContractError("rank schedule steepness must be > 0");
  }
}

int scheduled_rank(const RankSchedule& s, int i) {
  validate(s);
  if (s.kind == DecayKind::kConstant) return s.r_max;
  if (i > s.total_epochs) return s.r_min;
  if (i < 0) throw ContractError("scheduled_rank: negative epoch index");

  const long double r_max = s.r_max, r_min = s.r_min, span = r_max - r_min;
  const long double t = static_cast<long double>(i) / static_cast<long double>(s.total_epochs);
  const long double tau = s.steepness;
  int r = s.r_max;
  switch (s.kind) {
    case DecayKind::kLinear: {
      // Exact in integers: floor(r_max - span*i/T) = r_max - ceil(span*i/T).
      const long long num = static_cast<long long>(s.r_max - s.r_min) * i;
      const long long den = s.total_epochs;
      r = s.r_max - static_cast<int>((num + den - 1) / den);
      break;
    }
    case DecayKind::kCosine:
      r = snapped_floor(r_min + 0.5L * span * (1.0L + std::cos(std::numbers::pi_v<long double> * t)));
      break;
    case DecayKind::kSigmoid: {
      const long double tm = s.effective_midpoint();
      // floor(r_max - d) = r_max - ceil(d); d can be far below one ulp of r_max
      const long double d = span / (1.0L + std::exp(-tau * (static_cast<long double>(i) - tm)));
      r = s.r_max - static_cast<int>(snapped_ceil(d));
      break;
    }
    case DecayKind::kExponential:
      r = snapped_floor(r_min + span * std::exp(-tau * static_cast<long double>(i)));
      break;
    case DecayKind::kConstant:
      break;
  }
  return std::clamp(r, s.r_min, s.r_max);
}

std::vector<std::pair<int, int>> schedule_table(const RankSchedule& s) {
  std::vector<std::pair<int, int>> out;
  out.reserve(static_cast<std::size_t>(s.total_epochs) + 1);
  for (int i = 0; i <= s.total_epochs; ++i) out.emplace_back(i, scheduled_rank(s, i));
  return out;
}

int terminal_rank(const RankSchedule& s) {
  validate(s);
  return s.kind == DecayKind::kConstant ? s.r_max : s.r_min;
}

}  // namespace drift::sched
