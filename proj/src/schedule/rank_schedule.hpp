#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace drift::sched {

enum class DecayKind { kLinear, kCosine, kSigmoid, kExponential, kConstant };

std::string to_string(DecayKind kind);
// Accepts "linear", "cosine", "sigmoid"/"sig", "exponential"/"exp", "constant".
std::optional<DecayKind> parse_decay_kind(const std::string& name);

struct RankSchedule {
  DecayKind kind = DecayKind::kSigmoid;
  int r_max = 1;
  int r_min = 1;
  int total_epochs = 1;      // T
  double steepness = 0.5;    // tau, sigmoid/exponential only
  std::optional<double> midpoint;  // t_m, sigmoid only; defaults to T/2

  double effective_midpoint() const { return midpoint ? *midpoint : 0.5 * total_epochs; }
};

// Throws ContractError when the schedule violates 1 <= r_min <= r_max, T >= 1 or tau > 0.
void validate(const RankSchedule& s);

// Floor of the decay formula at epoch i, clamped to [r_min, r_max]. The
// constant kind always returns r_max; for the other kinds i > T returns r_min.
int scheduled_rank(const RankSchedule& s, int i);

// (i, r_i) for i = 0..T.
std::vector<std::pair<int, int>> schedule_table(const RankSchedule& s);

// Rank held once the schedule has run out (r_max for constant, r_min otherwise).
int terminal_rank(const RankSchedule& s);

}  // namespace drift::sched
