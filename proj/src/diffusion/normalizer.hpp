#pragma once

#include <cstddef>
#include <vector>

namespace drift::diffusion {

// Per-dimension affine map of actions onto [-1, 1]. A dimension with no
// spread keeps unit scale so that it maps to 0.
struct ActionNormalizer {
  std::vector<double> center;
  std::vector<double> half_range;

  // rows: flattened N x dim values.
  static ActionNormalizer fit(const std::vector<double>& rows, std::size_t dim);
  static ActionNormalizer identity(std::size_t dim);

  std::size_t dim() const { return center.size(); }
  double normalize(double v, std::size_t d) const { return (v - center[d]) / half_range[d]; }
  double unnormalize(double v, std::size_t d) const { return v * half_range[d] + center[d]; }
};

}  // namespace drift::diffusion
