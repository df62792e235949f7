#include "diffusion/normalizer.hpp"

#include <algorithm>
#include <limits>

#include "numerics/errors.hpp"

namespace drift::diffusion {

ActionNormalizer ActionNormalizer::fit(const std::vector<double>& rows, std::size_t dim) {
  if (dim == 0 || rows.size() % dim != 0) throw DimensionError("normalizer: data is not a multiple of dim");
  if (rows.empty()) return identity(dim);
  std::vector<double> lo(dim, std::numeric_limits<double>::infinity());
  std::vector<double> hi(dim, -std::numeric_limits<double>::infinity());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    lo[i % dim] = std::min(lo[i % dim], rows[i]);
    hi[i % dim] = std::max(hi[i % dim], rows[i]);
  }
  ActionNormalizer n;
  for (std::size_t d = 0; d < dim; ++d) {
    n.center.push_back(0.5 * (lo[d] + hi[d]));
    const double h = 0.5 * (hi[d] - lo[d]);
    n.half_range.push_back(h > 1e-12 ? h : 1.0);
  }
  return n;
}

ActionNormalizer ActionNormalizer::identity(std::size_t dim) {
  return ActionNormalizer{std::vector<double>(dim, 0.0), std::vector<double>(dim, 1.0)};
}

}  // namespace drift::diffusion
