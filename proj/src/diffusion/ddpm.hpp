#pragma once

#include <vector>

#include "diffusion/noise_schedule.hpp"
#include "diffusion/policy_net.hpp"

namespace drift::diffusion {

// Noise-prediction loss: for each row, t ~ U{1..T} and eps ~ N(0, I);
// returns mean((net(x_t, t, obs) - eps)^2). x0: B x A x H, obs: B x cond_in.
template <typename T>
Tensor<T> ddpm_loss(const NoisePredictor<T>& net, const Array<T>& x0, const Array<T>& obs, const NoiseSchedule& ns,
                    num::Rng& rng);

struct SamplerOptions {
  bool stochastic = true;   // false: x_T = 0 and no per-step noise
  bool clip_sample = true;  // clip the predicted x0 to [-1, 1]
};

// Reverse chain from x_T to x_0 using the posterior mean of q(x_{t-1} | x_t, x0_hat)
// and sigma_t^2 = beta_t. One generator per batch row keeps rows independent
// of batch composition. Returns B x A x H; no graph is recorded.
template <typename T>
Array<T> sample_actions(const NoisePredictor<T>& net, const Array<T>& obs, std::size_t action_dim,
                        std::size_t horizon, const NoiseSchedule& ns, std::vector<num::Rng>& rngs,
                        SamplerOptions opts = {});

}  // namespace drift::diffusion
