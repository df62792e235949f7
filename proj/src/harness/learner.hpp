#pragma once

#include <functional>
#include <vector>

#include "diffusion/ddpm.hpp"
#include "diffusion/normalizer.hpp"
#include "harness/dataset.hpp"
#include "numerics/adam.hpp"

namespace drift::harness {

// Maps each row's observation history to a planned sequence of actions.
using BatchPlanner =
    std::function<std::vector<std::vector<Vec>>(const std::vector<std::vector<Vec>>& histories, std::vector<num::Rng>& rngs)>;

// Diffusion policy with its optimizer and action scaling.
struct Learner {
  diffusion::PolicyNet<float> net;
  num::Adam<float> optimizer;
  diffusion::ActionNormalizer normalizer;
  diffusion::NoiseSchedule noise;
  diffusion::SamplerOptions sampler;

  Learner(const diffusion::NetConfig& cfg, std::uint64_t init_seed, num::AdamOptions opt,
          diffusion::NoiseSchedule ns, diffusion::SamplerOptions sampler_opts = {});

  // Denoised action horizons, one per row, in environment units.
  std::vector<std::vector<Vec>> plan(const std::vector<std::vector<Vec>>& histories, std::vector<num::Rng>& rngs) const;
  BatchPlanner planner() const;
};

struct EpochStats {
  double loss = 0;          // mean batch loss
  std::size_t batches = 0;
  double batch_time_s = 0;  // mean wall time per batch
  double train_time_s = 0;  // total wall time of the epoch's batches
};

// One shuffled pass over the labeled samples of `data`.
// With qr_refresh, factored blocks are re-orthonormalized after every step.
EpochStats train_epoch(Learner& learner, const Dataset& data, std::size_t batch_size, num::Rng& rng,
                       bool qr_refresh = false);

std::vector<EpochStats> bc_train(Learner& learner, const Dataset& data, int epochs, std::size_t batch_size,
                                 num::Rng& rng);

// FNV-1a over every parameter array of the net, in declaration order.
std::uint64_t weights_hash(const diffusion::PolicyNet<float>& net);

}  // namespace drift::harness
