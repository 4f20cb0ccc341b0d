#include <algorithm>
#include <cmath>
#include <numbers>

#include "vl/common/error.h"
#include "vl/features/features.h"

namespace vl {

namespace {

constexpr int kMinImageSize = 32;

template <typename T>
T clamped(const Grid<T>& g, int x, int y) {
  x = std::clamp(x, 0, g.width() - 1);
  y = std::clamp(y, 0, g.height() - 1);
  return g(x, y);
}

std::vector<double> gaussian_kernel(double sigma) {
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> k(2 * radius + 1);
  double sum = 0;
  for (int i = -radius; i <= radius; ++i) {
    k[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
    sum += k[i + radius];
  }
  for (double& v : k) v /= sum;
  return k;
}

Grid<double> blur(const Grid<double>& in, const std::vector<double>& kernel) {
  const int radius = static_cast<int>(kernel.size() / 2);
  Grid<double> tmp(in.width(), in.height());
  Grid<double> out(in.width(), in.height());
  for (int y = 0; y < in.height(); ++y) {
    for (int x = 0; x < in.width(); ++x) {
      double s = 0;
      for (int i = -radius; i <= radius; ++i) s += kernel[i + radius] * clamped(in, x + i, y);
      tmp(x, y) = s;
    }
  }
  for (int y = 0; y < in.height(); ++y) {
    for (int x = 0; x < in.width(); ++x) {
      double s = 0;
      for (int i = -radius; i <= radius; ++i) s += kernel[i + radius] * clamped(tmp, x, y + i);
      out(x, y) = s;
    }
  }
  return out;
}

// Vertex offset of a parabola through (-1, a), (0, b), (1, c).
double parabola_peak(double a, double b, double c) {
  const double denom = a - 2.0 * b + c;
  if (denom >= 0.0) return 0.0;
  return std::clamp(0.5 * (a - c) / denom, -0.5, 0.5);
}

}  // namespace

GradientField compute_gradients(const GrayImage& gray) {
  GradientField g{Grid<float>(gray.width(), gray.height()), Grid<float>(gray.width(), gray.height())};
  for (int y = 0; y < gray.height(); ++y) {
    for (int x = 0; x < gray.width(); ++x) {
      const float gx = 0.5f * (clamped(gray, x + 1, y) - clamped(gray, x - 1, y));
      const float gy = 0.5f * (clamped(gray, x, y + 1) - clamped(gray, x, y - 1));
      g.magnitude(x, y) = std::sqrt(gx * gx + gy * gy);
      float theta = std::atan2(gy, gx);
      if (theta < 0) theta += 2.0f * std::numbers::pi_v<float>;
      if (theta >= 2.0f * std::numbers::pi_v<float>) theta = 0.0f;
      g.orientation(x, y) = theta;
    }
  }
  return g;
}

Grid<double> harris_response(const GrayImage& gray, double k, double sigma) {
  const int w = gray.width(), h = gray.height();
  Grid<double> ixx(w, h), iyy(w, h), ixy(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double gx = 0.5 * (clamped(gray, x + 1, y) - clamped(gray, x - 1, y));
      const double gy = 0.5 * (clamped(gray, x, y + 1) - clamped(gray, x, y - 1));
      ixx(x, y) = gx * gx;
      iyy(x, y) = gy * gy;
      ixy(x, y) = gx * gy;
    }
  }
  const auto kernel = gaussian_kernel(sigma);
  const Grid<double> a = blur(ixx, kernel);
  const Grid<double> b = blur(iyy, kernel);
  const Grid<double> c = blur(ixy, kernel);
  Grid<double> r(w, h);
  for (std::size_t i = 0; i < r.data().size(); ++i) {
    const double det = a.data()[i] * b.data()[i] - c.data()[i] * c.data()[i];
    const double tr = a.data()[i] + b.data()[i];
    r.data()[i] = det - k * tr * tr;
  }
  return r;
}

LocalFeatureSet extract_local(const ColorImage& image, const DetectorParams& params) {
  if (image.width() < kMinImageSize || image.height() < kMinImageSize) {
    throw Error(ErrorCode::image_too_small,
                std::to_string(image.width()) + "x" + std::to_string(image.height()) + " is below 32x32");
  }
  const GrayImage gray = to_gray(image);
  const Grid<double> response = harris_response(gray, params.harris_k, params.sigma);
  const int w = gray.width(), h = gray.height();
  const int border = std::max(params.border, 1);

  double max_r = 0;
  for (int y = border; y < h - border; ++y)
    for (int x = border; x < w - border; ++x) max_r = std::max(max_r, response(x, y));
  const double threshold = std::max(params.absolute_threshold, params.relative_threshold * max_r);

  struct Candidate {
    double score;
    int x, y;
  };
  std::vector<Candidate> peaks;
  const int rad = params.nms_radius;
  for (int y = border; y < h - border; ++y) {
    for (int x = border; x < w - border; ++x) {
      const double v = response(x, y);
      if (!(v > threshold)) continue;
      bool is_max = true;
      for (int dy = -rad; dy <= rad && is_max; ++dy) {
        for (int dx = -rad; dx <= rad; ++dx) {
          if ((dx == 0 && dy == 0) || dx * dx + dy * dy > rad * rad) continue;
          const int qx = x + dx, qy = y + dy;
          if (!response.contains(qx, qy)) continue;
          const double q = response(qx, qy);
          // Equal responses: the earlier pixel in raster order wins.
          const bool q_earlier = qy < y || (qy == y && qx < x);
          if (q > v || (q == v && q_earlier)) {
            is_max = false;
            break;
          }
        }
      }
      if (is_max) peaks.push_back({v, x, y});
    }
  }
  std::stable_sort(peaks.begin(), peaks.end(), [](const Candidate& a, const Candidate& b) { return a.score > b.score; });
  if (peaks.size() > static_cast<std::size_t>(params.max_keypoints)) peaks.resize(params.max_keypoints);

  const GradientField grad = compute_gradients(gray);
  LocalFeatureSet out;
  out.dim = kDescriptorDim;
  std::vector<float> desc(kDescriptorDim);
  for (const Candidate& c : peaks) {
    const double ox = parabola_peak(response(c.x - 1, c.y), c.score, response(c.x + 1, c.y));
    const double oy = parabola_peak(response(c.x, c.y - 1), c.score, response(c.x, c.y + 1));
    const Keypoint kp{static_cast<float>(c.x + ox), static_cast<float>(c.y + oy), static_cast<float>(c.score)};
    if (!describe_patch(grad, kp.x, kp.y, desc)) continue;
    out.push_back(kp, desc);
  }
  return out;
}

}  // namespace vl
