#include "diffusion/noise_schedule.hpp"

#include <cmath>
#include <string>

namespace drift::diffusion {

NoiseSchedule NoiseSchedule::linear(std::size_t steps, double beta_start, double beta_end) {
  if (steps == 0) throw ContractError("noise schedule needs at least one step");
  std::vector<double> betas(steps);
  for (std::size_t i = 0; i < steps; ++i) {
    const double frac = steps == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(steps - 1);
    betas[i] = beta_start + (beta_end - beta_start) * frac;
  }
  return from_betas(std::move(betas));
}

NoiseSchedule NoiseSchedule::from_betas(std::vector<double> betas) {
  NoiseSchedule ns;
  double prod = 1.0;
  for (double b : betas) {
    if (!(b >= 0.0 && b < 1.0)) throw ContractError("noise schedule betas must lie in [0, 1)");
    ns.alphas.push_back(1.0 - b);
    prod *= 1.0 - b;
    ns.alpha_bars.push_back(prod);
  }
  ns.betas = std::move(betas);
  return ns;
}

double NoiseSchedule::sigma(int t) const { return std::sqrt(beta(t)); }

template <typename T>
num::Array<T> forward_diffuse(const num::Array<T>& x0, int t, const num::Array<T>& noise, const NoiseSchedule& ns) {
  if (t < 1 || t > ns.steps()) {
    throw ContractError("forward_diffuse: t=" + std::to_string(t) + " outside [1, " + std::to_string(ns.steps()) + "]");
  }
  if (noise.shape != x0.shape) throw DimensionError("forward_diffuse: noise shape differs from x0");
  const double ab = ns.alpha_bar(t);
  const T a = static_cast<T>(std::sqrt(ab)), b = static_cast<T>(std::sqrt(1.0 - ab));
  num::Array<T> out(x0.shape);
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] = a * x0.data[i] + b * noise.data[i];
  return out;
}

template num::Array<float> forward_diffuse(const num::Array<float>&, int, const num::Array<float>&,
                                           const NoiseSchedule&);
template num::Array<double> forward_diffuse(const num::Array<double>&, int, const num::Array<double>&,
                                            const NoiseSchedule&);

}  // namespace drift::diffusion
