#pragma once

#include <cstddef>
#include <memory>
#include <string>
#include <vector>

#include "diffusion/conv_block.hpp"
#include "numerics/rng.hpp"

namespace drift::diffusion {

// Anything that predicts the injected noise for a batch of noisy action
// sequences. x_t: B x A x H, t: B timesteps in [1, T], obs: B x cond_in.
template <typename T>
class NoisePredictor {
 public:
  virtual ~NoisePredictor() = default;
  virtual Tensor<T> predict_noise(const Tensor<T>& x_t, const std::vector<int>& t, const Tensor<T>& obs) const = 0;
};

struct NetConfig {
  std::size_t action_dim = 2;    // A
  std::size_t obs_dim = 6;
  std::size_t horizon = 8;       // H
  std::size_t obs_horizon = 2;   // O
  std::vector<std::size_t> channels{32, 64};
  std::size_t mid_blocks = 1;
  std::size_t kernel = 3;
  std::size_t time_embed_dim = 16;
  std::size_t cond_dim = 64;
  BlockMode mode = BlockMode::kFactored;
  double lora_alpha = 1.0;

  std::size_t obs_cond_dim() const { return obs_dim * obs_horizon; }
};

// Throws ContractError on inconsistent architecture parameters.
void validate(const NetConfig& cfg);

// Conditional 1-D U-Net noise predictor. Every convolution is a ConvBlock and
// all blocks share one mode; conditioning (sinusoidal timestep embedding
// concatenated with the flattened observation history) modulates each
// residual block through a feature-wise affine map.
template <typename T>
class PolicyNet final : public NoisePredictor<T> {
 public:
  PolicyNet(NetConfig cfg, std::uint64_t init_seed);

  Tensor<T> predict_noise(const Tensor<T>& x_t, const std::vector<int>& t, const Tensor<T>& obs) const override;

  const NetConfig& config() const { return cfg_; }
  BlockMode mode() const;
  // Largest per-layer rank bound across conv blocks.
  std::size_t max_rank() const;
  // Global trainable rank: the largest per-block rank.
  std::size_t current_rank() const;

  std::vector<ConvBlock<T>*> conv_blocks();
  std::vector<const ConvBlock<T>*> conv_blocks() const;
  std::vector<std::string> conv_block_names() const;

  // Every array of the net, trainable and frozen, in a stable order.
  std::vector<NamedParam<T>> parameters() const;
  std::size_t trainable_param_count() const;

  // Switches every block (plain <-> factored <-> lora), at the given rank.
  void convert(BlockMode mode, std::size_t rank, num::Rng& rng);

  struct Linear {
    Tensor<T> weight;
    Tensor<T> bias;
  };
  // Plain linear layers (conditioning MLP and per-block modulation maps).
  std::vector<std::pair<std::string, Linear*>> linears();

 private:
  struct ResBlock {
    std::unique_ptr<ConvBlock<T>> conv1;
    std::unique_ptr<ConvBlock<T>> conv2;
    std::unique_ptr<ConvBlock<T>> residual;  // null when channel counts match
    Linear film;
    std::size_t c_out = 0;
  };

  ResBlock make_res(std::size_t c_in, std::size_t c_out, num::Rng& rng) const;
  Tensor<T> run_res(const ResBlock& b, const Tensor<T>& x, const Tensor<T>& cond) const;
  Tensor<T> condition(const std::vector<int>& t, const Tensor<T>& obs) const;
  std::vector<std::pair<std::string, ConvBlock<T>*>> named_blocks() const;

  NetConfig cfg_;
  Linear cond1_, cond2_;
  std::vector<ResBlock> down_;
  std::vector<std::unique_ptr<ConvBlock<T>>> downsample_;
  std::vector<ResBlock> mid_;
  std::vector<ResBlock> up_;
  std::vector<std::unique_ptr<ConvBlock<T>>> upsample_;
  std::unique_ptr<ConvBlock<T>> final_;
};

// Applies a global trainable rank to every block, clamped per layer.
// Factored: re-SVD; LoRA: merge and re-inject. Plain nets: ContractError.
template <typename T>
void set_policy_rank(PolicyNet<T>& net, std::size_t rank, num::Rng& rng);

// Sets every block to max(1, floor(layer_max_rank / divisor)).
template <typename T>
void set_policy_rank_divisor(PolicyNet<T>& net, std::size_t divisor, num::Rng& rng);

// Sinusoidal embedding of a timestep, dimension `dim`.
std::vector<double> timestep_embedding(int t, std::size_t dim);

}  // namespace drift::diffusion
