#include "diffusion/policy_net.hpp"

#include <algorithm>
#include <cmath>

#include "numerics/ops.hpp"

namespace drift::diffusion {

namespace {

template <typename T>
Array<T> uniform_init(num::Shape shape, std::size_t fan_in, num::Rng& rng) {
  Array<T> a(std::move(shape));
  const double bound = 1.0 / std::sqrt(static_cast<double>(std::max<std::size_t>(fan_in, 1)));
  for (auto& v : a.data) v = static_cast<T>(rng.uniform(-bound, bound));
  return a;
}

template <typename T>
std::unique_ptr<ConvBlock<T>> make_conv(std::size_t c_in, std::size_t c_out, std::size_t k, std::size_t stride,
                                        num::Rng& rng) {
  ConvGeometry g{c_out, c_in, k, stride, k / 2};
  auto w = uniform_init<T>({c_out, c_in, k}, c_in * k, rng);
  auto b = uniform_init<T>({c_out}, c_in * k, rng);
  return std::make_unique<ConvBlock<T>>(g, std::move(w), std::move(b));
}

}  // namespace

std::vector<double> timestep_embedding(int t, std::size_t dim) {
  std::vector<double> out(dim, 0.0);
  const std::size_t half = dim / 2;
  if (half == 0) return out;
  const double step = half > 1 ? std::log(10000.0) / static_cast<double>(half - 1) : 0.0;
  for (std::size_t j = 0; j < half; ++j) {
    const double f = std::exp(-step * static_cast<double>(j));
    out[j] = std::sin(t * f);
    out[half + j] = std::cos(t * f);
  }
  return out;
}

void validate(const NetConfig& cfg) {
  auto fail = [](const std::string& m) { throw ContractError("net config: " + m); };
  if (cfg.action_dim == 0 || cfg.obs_dim == 0 || cfg.obs_horizon == 0) fail("dimensions must be positive");
  if (cfg.channels.empty()) fail("channels must be non-empty");
  if (std::any_of(cfg.channels.begin(), cfg.channels.end(), [](std::size_t c) { return c == 0; }))
    fail("channel widths must be positive");
  if (cfg.kernel == 0 || cfg.kernel % 2 == 0) fail("kernel size must be odd");
  const std::size_t factor = std::size_t{1} << (cfg.channels.size() - 1);
  if (cfg.horizon == 0 || cfg.horizon % factor != 0)
    fail("horizon " + std::to_string(cfg.horizon) + " must be divisible by " + std::to_string(factor));
  if (cfg.time_embed_dim < 2 || cfg.cond_dim == 0) fail("embedding dimensions too small");
  if (cfg.lora_alpha < 0.0) fail("lora alpha must be >= 0");
}

template <typename T>
PolicyNet<T>::PolicyNet(NetConfig cfg, std::uint64_t init_seed) : cfg_(std::move(cfg)) {
  validate(cfg_);
  num::Rng rng(init_seed);
  const std::size_t cond_in = cfg_.time_embed_dim + cfg_.obs_cond_dim();
  cond1_ = {Tensor<T>::parameter(uniform_init<T>({cfg_.cond_dim, cond_in}, cond_in, rng)),
            Tensor<T>::parameter(uniform_init<T>({cfg_.cond_dim}, cond_in, rng))};
  cond2_ = {Tensor<T>::parameter(uniform_init<T>({cfg_.cond_dim, cfg_.cond_dim}, cfg_.cond_dim, rng)),
            Tensor<T>::parameter(uniform_init<T>({cfg_.cond_dim}, cfg_.cond_dim, rng))};

  const auto& ch = cfg_.channels;
  const std::size_t levels = ch.size();
  std::size_t prev = cfg_.action_dim;
  for (std::size_t l = 0; l < levels; ++l) {
    down_.push_back(make_res(prev, ch[l], rng));
    if (l + 1 < levels) downsample_.push_back(make_conv<T>(ch[l], ch[l], cfg_.kernel, 2, rng));
    prev = ch[l];
  }
  for (std::size_t i = 0; i < cfg_.mid_blocks; ++i) mid_.push_back(make_res(ch.back(), ch.back(), rng));
  for (std::size_t l = levels; l-- > 0;) {
    const std::size_t out = l > 0 ? ch[l - 1] : ch[0];
    up_.push_back(make_res(2 * ch[l], out, rng));
    if (l > 0) upsample_.push_back(make_conv<T>(out, out, cfg_.kernel, 1, rng));
  }
  final_ = make_conv<T>(ch[0], cfg_.action_dim, 1, 1, rng);

  if (cfg_.mode != BlockMode::kPlain) convert(cfg_.mode, max_rank(), rng);
}

template <typename T>
typename PolicyNet<T>::ResBlock PolicyNet<T>::make_res(std::size_t c_in, std::size_t c_out, num::Rng& rng) const {
  ResBlock b;
  b.c_out = c_out;
  b.conv1 = make_conv<T>(c_in, c_out, cfg_.kernel, 1, rng);
  b.film = {Tensor<T>::parameter(uniform_init<T>({2 * c_out, cfg_.cond_dim}, cfg_.cond_dim, rng)),
            Tensor<T>::parameter(uniform_init<T>({2 * c_out}, cfg_.cond_dim, rng))};
  b.conv2 = make_conv<T>(c_out, c_out, cfg_.kernel, 1, rng);
  if (c_in != c_out) b.residual = make_conv<T>(c_in, c_out, 1, 1, rng);
  return b;
}

template <typename T>
Tensor<T> PolicyNet<T>::run_res(const ResBlock& b, const Tensor<T>& x, const Tensor<T>& cond) const {
  Tensor<T> h = num::silu(b.conv1->forward(x));
  Tensor<T> mod = num::linear(cond, b.film.weight, b.film.bias);
  h = num::film(h, num::slice_cols(mod, 0, b.c_out), num::slice_cols(mod, b.c_out, b.c_out));
  h = num::silu(b.conv2->forward(h));
  return num::add(h, b.residual ? b.residual->forward(x) : x);
}

template <typename T>
Tensor<T> PolicyNet<T>::condition(const std::vector<int>& t, const Tensor<T>& obs) const {
  const std::size_t B = t.size(), te = cfg_.time_embed_dim, oc = cfg_.obs_cond_dim();
  if (obs.shape() != num::Shape{B, oc}) {
    throw DimensionError("policy net: observation conditioning must be " + num::shape_str({B, oc}) + ", got " +
                         num::shape_str(obs.shape()));
  }
  Array<T> in({B, te + oc});
  const auto ov = obs.data();
  for (std::size_t b = 0; b < B; ++b) {
    const auto emb = timestep_embedding(t[b], te);
    for (std::size_t j = 0; j < te; ++j) in.data[b * (te + oc) + j] = static_cast<T>(emb[j]);
    for (std::size_t j = 0; j < oc; ++j) in.data[b * (te + oc) + te + j] = ov[b * oc + j];
  }
  Tensor<T> h = num::silu(num::linear(Tensor<T>::constant(std::move(in)), cond1_.weight, cond1_.bias));
  return num::silu(num::linear(h, cond2_.weight, cond2_.bias));
}

template <typename T>
Tensor<T> PolicyNet<T>::predict_noise(const Tensor<T>& x_t, const std::vector<int>& t, const Tensor<T>& obs) const {
  const std::size_t B = t.size();
  if (x_t.shape() != num::Shape{B, cfg_.action_dim, cfg_.horizon}) {
    throw DimensionError("policy net: action input must be " + num::shape_str({B, cfg_.action_dim, cfg_.horizon}) +
                         ", got " + num::shape_str(x_t.shape()));
  }
  const Tensor<T> cond = condition(t, obs);
  const std::size_t levels = cfg_.channels.size();
  std::vector<Tensor<T>> skips;
  Tensor<T> h = x_t;
  for (std::size_t l = 0; l < levels; ++l) {
    h = run_res(down_[l], h, cond);
    skips.push_back(h);
    if (l + 1 < levels) h = downsample_[l]->forward(h);
  }
  for (const auto& m : mid_) h = run_res(m, h, cond);
  std::size_t up_idx = 0;
  for (std::size_t l = levels; l-- > 0; ++up_idx) {
    h = run_res(up_[up_idx], num::concat_channels(h, skips[l]), cond);
    if (l > 0) h = upsample_[up_idx]->forward(num::upsample_nearest2(h));
  }
  return final_->forward(h);
}

template <typename T>
std::vector<std::pair<std::string, ConvBlock<T>*>> PolicyNet<T>::named_blocks() const {
  std::vector<std::pair<std::string, ConvBlock<T>*>> out;
  auto add_res = [&out](const std::string& p, const ResBlock& b) {
    out.emplace_back(p + ".conv1", b.conv1.get());
    out.emplace_back(p + ".conv2", b.conv2.get());
    if (b.residual) out.emplace_back(p + ".res", b.residual.get());
  };
  for (std::size_t l = 0; l < down_.size(); ++l) {
    add_res("down" + std::to_string(l), down_[l]);
    if (l < downsample_.size()) out.emplace_back("down" + std::to_string(l) + ".sample", downsample_[l].get());
  }
  for (std::size_t i = 0; i < mid_.size(); ++i) add_res("mid" + std::to_string(i), mid_[i]);
  for (std::size_t i = 0; i < up_.size(); ++i) {
    add_res("up" + std::to_string(i), up_[i]);
    if (i < upsample_.size()) out.emplace_back("up" + std::to_string(i) + ".sample", upsample_[i].get());
  }
  out.emplace_back("final", final_.get());
  return out;
}

template <typename T>
std::vector<ConvBlock<T>*> PolicyNet<T>::conv_blocks() {
  std::vector<ConvBlock<T>*> out;
  for (auto& [name, b] : named_blocks()) out.push_back(b);
  return out;
}

template <typename T>
std::vector<const ConvBlock<T>*> PolicyNet<T>::conv_blocks() const {
  std::vector<const ConvBlock<T>*> out;
  for (auto& [name, b] : named_blocks()) out.push_back(b);
  return out;
}

template <typename T>
std::vector<std::string> PolicyNet<T>::conv_block_names() const {
  std::vector<std::string> out;
  for (auto& [name, b] : named_blocks()) out.push_back(name);
  return out;
}

template <typename T>
std::vector<std::pair<std::string, typename PolicyNet<T>::Linear*>> PolicyNet<T>::linears() {
  std::vector<std::pair<std::string, Linear*>> out{{"cond.l1", &cond1_}, {"cond.l2", &cond2_}};
  for (std::size_t l = 0; l < down_.size(); ++l) out.emplace_back("down" + std::to_string(l) + ".film", &down_[l].film);
  for (std::size_t i = 0; i < mid_.size(); ++i) out.emplace_back("mid" + std::to_string(i) + ".film", &mid_[i].film);
  for (std::size_t i = 0; i < up_.size(); ++i) out.emplace_back("up" + std::to_string(i) + ".film", &up_[i].film);
  return out;
}

template <typename T>
std::vector<NamedParam<T>> PolicyNet<T>::parameters() const {
  std::vector<NamedParam<T>> out;
  for (auto& [name, lin] : const_cast<PolicyNet*>(this)->linears()) {
    out.push_back({name + ".weight", lin->weight});
    out.push_back({name + ".bias", lin->bias});
  }
  for (auto& [name, b] : named_blocks()) b->collect(name, out);
  return out;
}

template <typename T>
std::size_t PolicyNet<T>::trainable_param_count() const {
  std::size_t n = 0;
  for (auto& [name, lin] : const_cast<PolicyNet*>(this)->linears()) n += lin->weight.numel() + lin->bias.numel();
  for (const auto* b : conv_blocks()) n += b->trainable_params();
  return n;
}

template <typename T>
BlockMode PolicyNet<T>::mode() const {
  return final_->mode();
}

template <typename T>
std::size_t PolicyNet<T>::max_rank() const {
  std::size_t r = 1;
  for (const auto* b : conv_blocks()) r = std::max(r, b->max_rank());
  return r;
}

template <typename T>
std::size_t PolicyNet<T>::current_rank() const {
  std::size_t r = 1;
  for (const auto* b : conv_blocks()) r = std::max(r, b->rank());
  return r;
}

template <typename T>
void PolicyNet<T>::convert(BlockMode mode, std::size_t rank, num::Rng& rng) {
  for (auto* b : conv_blocks()) {
    switch (mode) {
      case BlockMode::kPlain: b->to_plain(); break;
      case BlockMode::kFactored: b->to_factored(rank); break;
      case BlockMode::kLora: b->to_lora(rank, static_cast<T>(cfg_.lora_alpha), rng); break;
    }
  }
  cfg_.mode = mode;
}

template <typename T>
void set_policy_rank(PolicyNet<T>& net, std::size_t rank, num::Rng& rng) {
  if (net.mode() == BlockMode::kPlain) throw ContractError("set_policy_rank: net is in plain mode");
  for (auto* b : net.conv_blocks()) b->set_rank(rank, rng);
}

template <typename T>
void set_policy_rank_divisor(PolicyNet<T>& net, std::size_t divisor, num::Rng& rng) {
  if (net.mode() == BlockMode::kPlain) throw ContractError("set_policy_rank_divisor: net is in plain mode");
  if (divisor == 0) throw ContractError("set_policy_rank_divisor: divisor must be positive");
  for (auto* b : net.conv_blocks()) b->set_rank(std::max<std::size_t>(1, b->max_rank() / divisor), rng);
}

template class PolicyNet<float>;
template class PolicyNet<double>;
template void set_policy_rank(PolicyNet<float>&, std::size_t, num::Rng&);
template void set_policy_rank(PolicyNet<double>&, std::size_t, num::Rng&);
template void set_policy_rank_divisor(PolicyNet<float>&, std::size_t, num::Rng&);
template void set_policy_rank_divisor(PolicyNet<double>&, std::size_t, num::Rng&);

}  // namespace drift::diffusion
