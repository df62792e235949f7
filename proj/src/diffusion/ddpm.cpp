#include "diffusion/ddpm.hpp"

#include <algorithm>
#include <cmath>

#include "numerics/ops.hpp"

namespace drift::diffusion {

template <typename T>
Tensor<T> ddpm_loss(const NoisePredictor<T>& net, const Array<T>& x0, const Array<T>& obs, const NoiseSchedule& ns,
                    num::Rng& rng) {
  if (x0.ndim() != 3) throw DimensionError("ddpm_loss: x0 must be B x A x H, got " + num::shape_str(x0.shape));
  const std::size_t B = x0.shape[0];
  const std::size_t per = x0.size() / std::max<std::size_t>(B, 1);
  std::vector<int> ts(B);
  Array<T> noise(x0.shape);
  Array<T> x_t(x0.shape);
  for (std::size_t b = 0; b < B; ++b) {
    ts[b] = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(ns.steps())));
    const double ab = ns.alpha_bar(ts[b]);
    const double a = std::sqrt(ab), s = std::sqrt(1.0 - ab);
    for (std::size_t j = 0; j < per; ++j) {
      const std::size_t i = b * per + j;
      const double eps = rng.normal();
      noise.data[i] = static_cast<T>(eps);
      x_t.data[i] = static_cast<T>(a * static_cast<double>(x0.data[i]) + s * eps);
    }
  }
  const Tensor<T> pred = net.predict_noise(Tensor<T>::constant(std::move(x_t)), ts, Tensor<T>::constant(obs));
  return num::mse(pred, Tensor<T>::constant(std::move(noise)));
}

template <typename T>
Array<T> sample_actions(const NoisePredictor<T>& net, const Array<T>& obs, std::size_t action_dim,
                        std::size_t horizon, const NoiseSchedule& ns, std::vector<num::Rng>& rngs,
                        SamplerOptions opts) {
  if (obs.ndim() != 2) throw DimensionError("sample_actions: obs must be B x cond_in");
  const std::size_t B = obs.shape[0];
  if (rngs.size() != B) throw DimensionError("sample_actions: need one generator per batch row");
  const std::size_t per = action_dim * horizon;
  num::NoGradGuard no_grad;

  Array<T> x({B, action_dim, horizon});
  if (opts.stochastic) {
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t j = 0; j < per; ++j) x.data[b * per + j] = static_cast<T>(rngs[b].normal());
  }
  const Tensor<T> cond = Tensor<T>::constant(obs);
  for (int t = ns.steps(); t >= 1; --t) {
    const std::vector<int> ts(B, t);
    const Tensor<T> eps = net.predict_noise(Tensor<T>::constant(x), ts, cond);
    const auto e = eps.data();
    const double ab = ns.alpha_bar(t), ab_prev = ns.alpha_bar(t - 1);
    const double beta = ns.beta(t), alpha = ns.alpha(t);
    const double denom = 1.0 - ab;
    const double c_x0 = denom > 0 ? std::sqrt(ab_prev) * beta / denom : 1.0;
    const double c_xt = denom > 0 ? std::sqrt(alpha) * (1.0 - ab_prev) / denom : 0.0;
    const double sigma = ns.sigma(t);
    for (std::size_t b = 0; b < B; ++b) {
      for (std::size_t j = 0; j < per; ++j) {
        const std::size_t i = b * per + j;
        const double xt = static_cast<double>(x.data[i]);
        double x0 = (xt - std::sqrt(1.0 - ab) * static_cast<double>(e[i])) / std::sqrt(ab);
        if (opts.clip_sample) x0 = std::clamp(x0, -1.0, 1.0);
        double mean = c_x0 * x0 + c_xt * xt;
        if (opts.stochastic && t > 1) mean += sigma * rngs[b].normal();
        x.data[i] = static_cast<T>(mean);
      }
    }
  }
  return x;
}

template Tensor<float> ddpm_loss(const NoisePredictor<float>&, const Array<float>&, const Array<float>&,
                                 const NoiseSchedule&, num::Rng&);
template Tensor<double> ddpm_loss(const NoisePredictor<double>&, const Array<double>&, const Array<double>&,
                                  const NoiseSchedule&, num::Rng&);
template Array<float> sample_actions(const NoisePredictor<float>&, const Array<float>&, std::size_t, std::size_t,
                                     const NoiseSchedule&, std::vector<num::Rng>&, SamplerOptions);
template Array<double> sample_actions(const NoisePredictor<double>&, const Array<double>&, std::size_t, std::size_t,
                                      const NoiseSchedule&, std::vector<num::Rng>&, SamplerOptions);

}  // namespace drift::diffusion
