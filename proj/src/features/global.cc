#include <algorithm>
#include <cmath>

#include "vl/common/error.h"
#include "vl/features/features.h"

namespace vl {

std::vector<double> gem_pool_raw(std::span<const float> rows, std::size_t dim, double p) {
  if (dim == 0 || rows.empty()) throw Error(ErrorCode::empty_set, "GeM pooling over an empty set");
  const std::size_t n = rows.size() / dim;
  std::vector<double> out(dim, 0.0);
  for (std::size_t d = 0; d < dim; ++d) {
    // Factor out the max so large p cannot underflow.
    double vmax = 0;
    for (std::size_t i = 0; i < n; ++i) vmax = std::max(vmax, static_cast<double>(rows[i * dim + d]));
    if (vmax <= 0) continue;
    double acc = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const double v = std::max(0.0, static_cast<double>(rows[i * dim + d])) / vmax;
      acc += std::pow(v, p);
    }
    out[d] = vmax * std::pow(acc / static_cast<double>(n), 1.0 / p);
  }
  return out;
}

std::vector<float> gem_pool(std::span<const float> rows, std::size_t dim, double p) {
  const std::vector<double> raw = gem_pool_raw(rows, dim, p);
  double sq = 0;
  for (double v : raw) sq += v * v;
  const double norm = std::sqrt(sq);
  std::vector<float> out(dim, 0.0f);
  if (norm > 0) {
    for (std::size_t d = 0; d < dim; ++d) out[d] = static_cast<float>(raw[d] / norm);
  }
  return out;
}

GlobalDescriptor global_descriptor(std::span<const float> rows, std::size_t dim, double p,
                                   const WhiteningTransform* whitening) {
  GlobalDescriptor g{gem_pool(rows, dim, p)};
  if (whitening != nullptr) {
    g.values = apply_whitening(*whitening, g.values);
    normalize(g.values);
  }
  return g;
}

GlobalDescriptor global_descriptor(const LocalFeatureSet& local, double p, const WhiteningTransform* whitening) {
  return global_descriptor(local.descriptors, static_cast<std::size_t>(local.dim), p, whitening);
}

std::vector<float> valid_cells(const DescriptorGrid& grid) {
  std::vector<float> rows;
  rows.reserve(grid.valid_count() * grid.dim);
  for (int cy = 0; cy < grid.rows; ++cy) {
    for (int cx = 0; cx < grid.cols; ++cx) {
      if (!grid.is_valid(cx, cy)) continue;
      const auto c = grid.cell(cx, cy);
      rows.insert(rows.end(), c.begin(), c.end());
    }
  }
  return rows;
}

GlobalDescriptor global_descriptor(const DescriptorGrid& grid, double p, const WhiteningTransform* whitening) {
  return global_descriptor(valid_cells(grid), static_cast<std::size_t>(grid.dim), p, whitening);
}

}  // namespace vl
