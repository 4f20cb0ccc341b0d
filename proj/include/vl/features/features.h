#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "vl/common/image.h"

namespace vl {

inline constexpr int kDescriptorDim = 128;
inline constexpr int kGridStride = 8;

struct Keypoint {
  float x = 0, y = 0;
  float score = 0;
  bool operator==(const Keypoint&) const = default;
};

/// Keypoints with row-major descriptors (one row of `dim` floats per keypoint).
struct LocalFeatureSet {
  int dim = kDescriptorDim;
  std::vector<Keypoint> keypoints;
  std::vector<float> descriptors;

  std::size_t size() const { return keypoints.size(); }
  bool empty() const { return keypoints.empty(); }
  std::span<const float> descriptor(std::size_t i) const {
    return {descriptors.data() + i * static_cast<std::size_t>(dim), static_cast<std::size_t>(dim)};
  }
  std::span<float> descriptor(std::size_t i) {
    return {descriptors.data() + i * static_cast<std::size_t>(dim), static_cast<std::size_t>(dim)};
  }
  void push_back(const Keypoint& kp, std::span<const float> desc);

  bool operator==(const LocalFeatureSet&) const = default;
};

/// Dense descriptor field sampled at stride 8 (one cell per 8x8 block).
/// A cell is valid when its patch had any gradient; invalid cells are zero.
struct DescriptorGrid {
  int cols = 0, rows = 0, dim = kDescriptorDim;
  std::vector<float> values;
  std::vector<std::uint8_t> valid;

  DescriptorGrid() = default;
  DescriptorGrid(int cols_, int rows_, int dim_)
      : cols(cols_), rows(rows_), dim(dim_),
        values(static_cast<std::size_t>(cols_) * rows_ * dim_, 0.0f),
        valid(static_cast<std::size_t>(cols_) * rows_, 0) {}

  std::size_t cell_index(int cx, int cy) const { return static_cast<std::size_t>(cy) * cols + cx; }
  std::span<const float> cell(int cx, int cy) const {
    return {values.data() + cell_index(cx, cy) * dim, static_cast<std::size_t>(dim)};
  }
  std::span<float> cell(int cx, int cy) {
    return {values.data() + cell_index(cx, cy) * dim, static_cast<std::size_t>(dim)};
  }
  bool is_valid(int cx, int cy) const { return valid[cell_index(cx, cy)] != 0; }
  std::size_t valid_count() const;
  /// Pixel position of a cell's patch center.
  static Eigen::Vector2d cell_center(int cx, int cy) {
    return {kGridStride * cx + 0.5 * (kGridStride - 1), kGridStride * cy + 0.5 * (kGridStride - 1)};
  }

  bool operator==(const DescriptorGrid&) const = default;
};

struct GlobalDescriptor {
  std::vector<float> values;
  bool operator==(const GlobalDescriptor&) const = default;
};

struct DetectorParams {
  double harris_k = 0.04;
  double sigma = 1.0;
  int nms_radius = 4;
  int max_keypoints = 1024;
  int border = 4;
  double relative_threshold = 0.003;
  double absolute_threshold = 1e-9;
};

/// Image gradients shared by the detector and the descriptor.
struct GradientField {
  Grid<float> magnitude;
  Grid<float> orientation;  // radians in [0, 2*pi)
};

GradientField compute_gradients(const GrayImage& gray);

/// Harris response map (det - k * trace^2 of the Gaussian-smoothed structure tensor).
Grid<double> harris_response(const GrayImage& gray, double k, double sigma);

/// Harris corners + upright 4x4x8 orientation-histogram descriptors.
/// Sorted by descending score, ties in raster order. Throws ImageTooSmall
/// below 32x32.
LocalFeatureSet extract_local(const ColorImage& image, const DetectorParams& params = {});

/// Descriptor of the 16x16 patch centered at (x, y). Returns false (and
/// leaves `out` zero) when the patch has no gradient.
bool describe_patch(const GradientField& grad, double x, double y, std::span<float> out);

DescriptorGrid describe_grid(const ColorImage& image);
DescriptorGrid describe_grid(const GradientField& grad);

/// Component-wise generalized mean ((1/N) sum v^p)^(1/p) over rows of
/// non-negative values (negatives are rectified to 0), before normalization.
std::vector<double> gem_pool_raw(std::span<const float> rows, std::size_t dim, double p);
/// gem_pool_raw followed by L2 normalization. Throws EmptySet.
std::vector<float> gem_pool(std::span<const float> rows, std::size_t dim, double p);

/// PCA whitening: out = projection * (v - mean).
struct WhiteningTransform {
  Eigen::VectorXd mean;
  Eigen::MatrixXd projection;  // kept_dims x m

  int input_dim() const { return static_cast<int>(mean.size()); }
  int output_dim() const { return static_cast<int>(projection.rows()); }
  bool operator==(const WhiteningTransform&) const = default;
};

/// keep_dims <= 0 keeps all m dimensions. Directions whose variance is
/// below 1e-8 of the largest are mapped to zero. Throws TooFewSamples for
/// fewer than two samples.
WhiteningTransform fit_whitening(std::span<const std::vector<float>> samples, int keep_dims = 0);
std::vector<float> apply_whitening(const WhiteningTransform& t, std::span<const float> v);

/// L2-normalizes in place; zero vectors stay zero. Returns the original norm.
double normalize(std::span<float> v);

/// GeM over a descriptor set, then optional whitening, then L2 normalization.
GlobalDescriptor global_descriptor(std::span<const float> rows, std::size_t dim, double p,
                                   const WhiteningTransform* whitening = nullptr);
GlobalDescriptor global_descriptor(const LocalFeatureSet& local, double p,
                                   const WhiteningTransform* whitening = nullptr);
/// Pools the valid cells only.
GlobalDescriptor global_descriptor(const DescriptorGrid& grid, double p,
                                   const WhiteningTransform* whitening = nullptr);

/// Valid cells of a grid packed row-major.
std::vector<float> valid_cells(const DescriptorGrid& grid);

/// `.feat` container: "VLFT", u32 n, u32 m, u32 num_kp, per keypoint
/// (f32 x, f32 y, f32 score, n x f32), then m x f32 global; little-endian.
std::vector<std::uint8_t> encode_features(const LocalFeatureSet& local, const GlobalDescriptor& global);
void decode_features(std::span<const std::uint8_t> bytes, LocalFeatureSet& local, GlobalDescriptor& global);
void write_features(const std::filesystem::path& path, const LocalFeatureSet& local, const GlobalDescriptor& global);
void read_features(const std::filesystem::path& path, LocalFeatureSet& local, GlobalDescriptor& global);

}  // namespace vl
