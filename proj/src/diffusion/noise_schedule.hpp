#pragma once

#include <cstddef>
#include <vector>

#include "numerics/array.hpp"

namespace drift::diffusion {

// DDPM variance schedule indexed by t = 1..steps(); entry t lives at [t - 1].
struct NoiseSchedule {
  std::vector<double> betas;
  std::vector<double> alphas;
  std::vector<double> alpha_bars;

  static NoiseSchedule linear(std::size_t steps, double beta_start = 1e-4, double beta_end = 2e-2);
  static NoiseSchedule from_betas(std::vector<double> betas);

  int steps() const { return static_cast<int>(betas.size()); }
  double beta(int t) const { return betas.at(static_cast<std::size_t>(t - 1)); }
  double alpha(int t) const { return alphas.at(static_cast<std::size_t>(t - 1)); }
  // alpha_bar(0) == 1 by convention.
  double alpha_bar(int t) const { return t == 0 ? 1.0 : alpha_bars.at(static_cast<std::size_t>(t - 1)); }
  // Fixed-variance reverse step: sigma_t^2 = beta_t.
  double sigma(int t) const;
};

// sqrt(abar_t) x0 + sqrt(1 - abar_t) noise. Throws ContractError for t outside [1, T].
template <typename T>
num::Array<T> forward_diffuse(const num::Array<T>& x0, int t, const num::Array<T>& noise, const NoiseSchedule& ns);

}  // namespace drift::diffusion
