#include "harness/learner.hpp"

#include <chrono>
#include <cstring>
#include <numeric>

#include "numerics/ops.hpp"

namespace drift::harness {

Learner::Learner(const diffusion::NetConfig& cfg, std::uint64_t init_seed, num::AdamOptions opt,
                 diffusion::NoiseSchedule ns, diffusion::SamplerOptions sampler_opts)
    : net(cfg, init_seed),
      optimizer(opt),
      normalizer(diffusion::ActionNormalizer::identity(cfg.action_dim)),
      noise(std::move(ns)),
      sampler(sampler_opts) {}

std::vector<std::vector<Vec>> Learner::plan(const std::vector<std::vector<Vec>>& histories,
                                            std::vector<num::Rng>& rngs) const {
  const auto& cfg = net.config();
  const std::size_t B = histories.size(), oc = cfg.obs_cond_dim(), A = cfg.action_dim, H = cfg.horizon;
  num::Array<float> obs({B, oc});
  for (std::size_t b = 0; b < B; ++b) {
    const auto stacked = stack_history(histories[b], cfg.obs_horizon);
    if (stacked.size() != oc) throw DimensionError("learner: observation history has the wrong width");
    for (std::size_t j = 0; j < oc; ++j) obs.data[b * oc + j] = static_cast<float>(stacked[j]);
  }
  const num::Array<float> x = diffusion::sample_actions<float>(net, obs, A, H, noise, rngs, sampler);
  std::vector<std::vector<Vec>> out(B, std::vector<Vec>(H, Vec(A)));
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t c = 0; c < A; ++c)
      for (std::size_t h = 0; h < H; ++h) out[b][h][c] = normalizer.unnormalize(x(b, c, h), c);
  return out;
}

BatchPlanner Learner::planner() const {
  return [this](const std::vector<std::vector<Vec>>& h, std::vector<num::Rng>& r) { return plan(h, r); };
}

EpochStats train_epoch(Learner& learner, const Dataset& data, std::size_t batch_size, num::Rng& rng,
                       bool qr_refresh) {
  using clock = std::chrono::steady_clock;
  if (batch_size == 0) throw ContractError("train_epoch: batch size must be positive");
  std::vector<SampleIndex> samples = labeled_samples(data);
  EpochStats stats;
  if (samples.empty()) return stats;
  for (std::size_t i = samples.size() - 1; i > 0; --i) std::swap(samples[i], samples[rng.below(i + 1)]);

  const auto& cfg = learner.net.config();
  const std::size_t oc = cfg.obs_cond_dim(), A = cfg.action_dim, H = cfg.horizon;
  std::vector<double> obs_buf(oc), act_buf(A * H);
  double loss_sum = 0;
  for (std::size_t start = 0; start < samples.size(); start += batch_size) {
    const auto t0 = clock::now();
    const std::size_t B = std::min(batch_size, samples.size() - start);
    num::Array<float> x0({B, A, H}), obs({B, oc});
    for (std::size_t b = 0; b < B; ++b) {
      sample_window(data, samples[start + b], cfg.obs_horizon, H, obs_buf.data(), act_buf.data());
      for (std::size_t j = 0; j < oc; ++j) obs.data[b * oc + j] = static_cast<float>(obs_buf[j]);
      for (std::size_t c = 0; c < A; ++c)
        for (std::size_t h = 0; h < H; ++h)
          x0.data[(b * A + c) * H + h] = static_cast<float>(learner.normalizer.normalize(act_buf[c * H + h], c));
    }
    const auto params = learner.net.parameters();
    learner.optimizer.zero_grad(params);
    const auto loss = diffusion::ddpm_loss<float>(learner.net, x0, obs, learner.noise, rng);
    num::backward(loss);
    learner.optimizer.step(params);
    if (qr_refresh)
      for (auto* block : learner.net.conv_blocks())
        if (auto* f = block->factored()) lowrank::qr_refresh(*f);
    const double dt = std::chrono::duration<double>(clock::now() - t0).count();
    loss_sum += loss.item();
    stats.train_time_s += dt;
    ++stats.batches;
  }
  stats.loss = loss_sum / static_cast<double>(stats.batches);
  stats.batch_time_s = stats.train_time_s / static_cast<double>(stats.batches);
  return stats;
}

std::vector<EpochStats> bc_train(Learner& learner, const Dataset& data, int epochs, std::size_t batch_size,
                                 num::Rng& rng) {
  std::vector<EpochStats> out;
  for (int e = 0; e < epochs; ++e) out.push_back(train_epoch(learner, data, batch_size, rng));
  return out;
}

std::uint64_t weights_hash(const diffusion::PolicyNet<float>& net) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& p : net.parameters()) {
    for (char c : p.name) h = (h ^ static_cast<unsigned char>(c)) * 0x100000001b3ULL;
    for (float v : p.tensor.data()) {
      std::uint32_t bits;
      std::memcpy(&bits, &v, sizeof bits);
      for (int k = 0; k < 4; ++k) h = (h ^ ((bits >> (8 * k)) & 0xFF)) * 0x100000001b3ULL;
    }
  }
  return h;
}

}  // namespace drift::harness
