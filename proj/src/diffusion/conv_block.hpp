#pragma once

#include <string>
#include <variant>
#include <vector>

#include "lowrank/factored.hpp"
#include "lowrank/lora.hpp"
#include "numerics/adam.hpp"
#include "numerics/rng.hpp"

namespace drift::diffusion {

using lowrank::ConvGeometry;
using num::Array;
using num::NamedParam;
using num::Tensor;

enum class BlockMode { kPlain, kFactored, kLora };

std::string to_string(BlockMode mode);

// A 1-D convolution whose weight is held either directly, as an SVD
// factorization with a trainable/frozen split, or as a frozen base with a
// LoRA adapter. The bias is always a plain trainable parameter.
template <typename T>
class ConvBlock {
 public:
  ConvBlock(ConvGeometry geom, Array<T> weight, Array<T> bias);

  Tensor<T> forward(const Tensor<T>& x) const;

  BlockMode mode() const;
  const ConvGeometry& geometry() const { return geom_; }
  // Trainable rank: min(m, n) for plain blocks.
  std::size_t rank() const;
  std::size_t max_rank() const { return geom_.max_rank(); }
  Array<T> effective_weight() const;

  void to_plain();
  void to_factored(std::size_t rank);
  void to_lora(std::size_t rank, T alpha, num::Rng& rng);
  // Factored: re-SVD at the clamped rank. LoRA: merge and re-inject a fresh
  // adapter when the clamped rank differs. Plain: ContractError.
  void set_rank(std::size_t rank, num::Rng& rng);

  // Every array (trainable and frozen), names prefixed with `prefix`.
  void collect(const std::string& prefix, std::vector<NamedParam<T>>& out) const;
  std::size_t trainable_params() const;

  const std::variant<Tensor<T>, lowrank::FactoredMatrix<T>, lowrank::LoraConv<T>>& state() const { return state_; }
  lowrank::FactoredMatrix<T>* factored() { return std::get_if<lowrank::FactoredMatrix<T>>(&state_); }
  const Tensor<T>& bias() const { return bias_; }

  void restore(std::variant<Tensor<T>, lowrank::FactoredMatrix<T>, lowrank::LoraConv<T>> state, Array<T> bias);

 private:
  ConvGeometry geom_;
  std::variant<Tensor<T>, lowrank::FactoredMatrix<T>, lowrank::LoraConv<T>> state_;
  Tensor<T> bias_;
};

}  // namespace drift::diffusion
