#include "diffusion/conv_block.hpp"

#include <algorithm>

#include "numerics/ops.hpp"

namespace drift::diffusion {

std::string to_string(BlockMode mode) {
  switch (mode) {
    case BlockMode::kPlain: return "plain";
    case BlockMode::kFactored: return "factored";
    case BlockMode::kLora: return "lora";
  }
  return "unknown";
}

namespace {

template <typename T>
Array<T> matrix_of(const Array<T>& conv) {
  return num::conv_to_matrix(Tensor<T>::constant(conv)).value();
}

template <typename T>
Array<T> conv_of(const Array<T>& matrix, std::size_t c_out, std::size_t k) {
  return num::matrix_to_conv(Tensor<T>::constant(matrix), c_out, k).value();
}

}  // namespace

template <typename T>
ConvBlock<T>::ConvBlock(ConvGeometry geom, Array<T> weight, Array<T> bias)
    : geom_(geom), state_(Tensor<T>::parameter(std::move(weight), true)),
      bias_(Tensor<T>::parameter(std::move(bias), true)) {
  if (std::get<Tensor<T>>(state_).shape() != num::Shape{geom.c_out, geom.c_in, geom.k} ||
      bias_.shape() != num::Shape{geom.c_out}) {
    throw DimensionError("ConvBlock: weight/bias shapes do not match geometry");
  }
}

template <typename T>
Tensor<T> ConvBlock<T>::forward(const Tensor<T>& x) const {
  switch (state_.index()) {
    case 0:
      return num::conv1d(x, std::get<0>(state_), bias_, geom_.stride, geom_.padding);
    case 1:
      return lowrank::factored_conv_forward(x, std::get<1>(state_), geom_, bias_);
    default:
      return lowrank::lora_forward(x, std::get<2>(state_), bias_);
  }
}

template <typename T>
BlockMode ConvBlock<T>::mode() const {
  return static_cast<BlockMode>(state_.index());
}

template <typename T>
std::size_t ConvBlock<T>::rank() const {
  switch (state_.index()) {
    case 0: return geom_.max_rank();
    case 1: return std::get<1>(state_).rank;
    default: return std::get<2>(state_).rank;
  }
}

template <typename T>
Array<T> ConvBlock<T>::effective_weight() const {
  switch (state_.index()) {
    case 0: return std::get<0>(state_).value();
    case 1: return conv_of(lowrank::merged_value(std::get<1>(state_)), geom_.c_out, geom_.k);
    default: return lowrank::lora_merge(std::get<2>(state_));
  }
}

template <typename T>
void ConvBlock<T>::to_plain() {
  if (state_.index() == 0) return;
  state_ = Tensor<T>::parameter(effective_weight(), true);
}

template <typename T>
void ConvBlock<T>::to_factored(std::size_t rank) {
  const std::size_t r = std::clamp<std::size_t>(rank, 1, geom_.max_rank());
  if (auto* f = std::get_if<1>(&state_)) {
    *f = lowrank::set_trainable_rank(*f, r);
    return;
  }
  state_ = lowrank::svd_partition(matrix_of(effective_weight()), r);
}

template <typename T>
void ConvBlock<T>::to_lora(std::size_t rank, T alpha, num::Rng& rng) {
  state_ = lowrank::make_lora(effective_weight(), geom_, rank, alpha, rng);
}

template <typename T>
void ConvBlock<T>::set_rank(std::size_t rank, num::Rng& rng) {
  const std::size_t r = std::clamp<std::size_t>(rank, 1, geom_.max_rank());
  switch (state_.index()) {
    case 0:
      throw ContractError("set_rank: block is in plain mode");
    case 1:
      std::get<1>(state_) = lowrank::set_trainable_rank(std::get<1>(state_), r);
      return;
    default: {
      auto& l = std::get<2>(state_);
      if (l.rank == r) return;
      state_ = lowrank::make_lora(lowrank::lora_merge(l), geom_, r, l.alpha, rng);
      return;
    }
  }
}

template <typename T>
void ConvBlock<T>::collect(const std::string& prefix, std::vector<NamedParam<T>>& out) const {
  switch (state_.index()) {
    case 0:
      out.push_back({prefix + ".weight", std::get<0>(state_)});
      break;
    case 1: {
      const auto& f = std::get<1>(state_);
      out.push_back({prefix + ".u_train", f.u_train});
      out.push_back({prefix + ".s_train", f.s_train});
      out.push_back({prefix + ".v_train", f.v_train});
      out.push_back({prefix + ".u_frozen", f.u_frozen});
      out.push_back({prefix + ".s_frozen", f.s_frozen});
      out.push_back({prefix + ".v_frozen", f.v_frozen});
      break;
    }
    default: {
      const auto& l = std::get<2>(state_);
      out.push_back({prefix + ".w_conv", l.w_conv});
      out.push_back({prefix + ".w_down", l.w_down});
      out.push_back({prefix + ".w_up", l.w_up});
      break;
    }
  }
  out.push_back({prefix + ".bias", bias_});
}

template <typename T>
std::size_t ConvBlock<T>::trainable_params() const {
  std::size_t n = geom_.c_out;  // bias
  switch (state_.index()) {
    case 0: return n + geom_.c_out * geom_.c_in * geom_.k;
    case 1: return n + lowrank::trainable_param_count(std::get<1>(state_));
    default: return n + lowrank::trainable_param_count(std::get<2>(state_));
  }
}

template <typename T>
void ConvBlock<T>::restore(std::variant<Tensor<T>, lowrank::FactoredMatrix<T>, lowrank::LoraConv<T>> state,
                           Array<T> bias) {
  if (bias.shape != num::Shape{geom_.c_out}) throw DimensionError("ConvBlock::restore: bias shape");
  state_ = std::move(state);
  bias_ = Tensor<T>::parameter(std::move(bias), true);
  if (effective_weight().shape != num::Shape{geom_.c_out, geom_.c_in, geom_.k}) {
    throw DimensionError("ConvBlock::restore: weight does not match geometry");
  }
}

template class ConvBlock<float>;
template class ConvBlock<double>;

}  // namespace drift::diffusion
