#include <algorithm>
#include <cmath>
#include <numbers>

#include "vl/features/features.h"

namespace vl {

namespace {

constexpr int kCells = 4;
constexpr int kBins = 8;
constexpr int kPatch = 16;
constexpr double kCellSize = static_cast<double>(kPatch) / kCells;
constexpr double kWindowSigma = 0.5 * kPatch;
constexpr float kClamp = 0.2f;

}  // namespace

void LocalFeatureSet::push_back(const Keypoint& kp, std::span<const float> desc) {
  keypoints.push_back(kp);
  descriptors.insert(descriptors.end(), desc.begin(), desc.end());
}

std::size_t DescriptorGrid::valid_count() const {
  return static_cast<std::size_t>(std::count(valid.begin(), valid.end(), std::uint8_t{1}));
}

double normalize(std::span<float> v) {
  double sq = 0;
  for (float x : v) sq += static_cast<double>(x) * x;
  const double norm = std::sqrt(sq);
  if (norm > 0) {
    for (float& x : v) x = static_cast<float>(x / norm);
  }
  return norm;
}

bool describe_patch(const GradientField& grad, double x, double y, std::span<float> out) {
  std::fill(out.begin(), out.end(), 0.0f);
  double hist[kCells * kCells * kBins] = {};
  const int x0 = static_cast<int>(std::lround(x)) - kPatch / 2;
  const int y0 = static_cast<int>(std::lround(y)) - kPatch / 2;
  const double bin_scale = kBins / (2.0 * std::numbers::pi);
  bool any = false;
  for (int py = y0; py < y0 + kPatch; ++py) {
    for (int px = x0; px < x0 + kPatch; ++px) {
      if (!grad.magnitude.contains(px, py)) continue;
      const double mag = grad.magnitude(px, py);
      if (mag <= 0) continue;
      const double dx = px - x, dy = py - y;
      const double w = mag * std::exp(-(dx * dx + dy * dy) / (2.0 * kWindowSigma * kWindowSigma));
      // Continuous cell coordinates, cell centers at integers 0..3.
      const double u = (dx + 0.5 * kPatch) / kCellSize - 0.5;
      const double v = (dy + 0.5 * kPatch) / kCellSize - 0.5;
      const double o = grad.orientation(px, py) * bin_scale;
      const int u0 = static_cast<int>(std::floor(u));
      const int v0 = static_cast<int>(std::floor(v));
      const int o0 = static_cast<int>(std::floor(o));
      const double fu = u - u0, fv = v - v0, fo = o - o0;
      for (int iv = 0; iv < 2; ++iv) {
        const int cv = v0 + iv;
        if (cv < 0 || cv >= kCells) continue;
        const double wv = iv ? fv : 1.0 - fv;
        for (int iu = 0; iu < 2; ++iu) {
          const int cu = u0 + iu;
          if (cu < 0 || cu >= kCells) continue;
          const double wu = iu ? fu : 1.0 - fu;
          for (int io = 0; io < 2; ++io) {
            const int bin = ((o0 + io) % kBins + kBins) % kBins;
            const double wo = io ? fo : 1.0 - fo;
            hist[(cv * kCells + cu) * kBins + bin] += w * wu * wv * wo;
            any = true;
          }
        }
      }
    }
  }
  if (!any) return false;
  for (int i = 0; i < kCells * kCells * kBins; ++i) out[i] = static_cast<float>(hist[i]);
  if (normalize(out) <= 0) return false;
  for (float& f : out) f = std::min(f, kClamp);
  normalize(out);
  return true;
}

DescriptorGrid describe_grid(const GradientField& grad) {
  DescriptorGrid grid(grad.magnitude.width() / kGridStride, grad.magnitude.height() / kGridStride, kDescriptorDim);
  for (int cy = 0; cy < grid.rows; ++cy) {
    for (int cx = 0; cx < grid.cols; ++cx) {
      const Eigen::Vector2d c = DescriptorGrid::cell_center(cx, cy);
      grid.valid[grid.cell_index(cx, cy)] = describe_patch(grad, c.x(), c.y(), grid.cell(cx, cy)) ? 1 : 0;
    }
  }
  return grid;
}

DescriptorGrid describe_grid(const ColorImage& image) { return describe_grid(compute_gradients(to_gray(image))); }

}  // namespace vl
