#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "vl/features/features.h"
#include "vl/scene_db/scene_db.h"
#include "vl/virtual_view/virtual_view.h"

namespace vl {

inline constexpr int kColorStats = 6;  // mean and std of RGB per 8x8 cell
inline constexpr std::uint32_t kStudentFormatVersion = 1;

/// Two-layer perceptron y = W2 tanh(W1 x + b1) + b2, row-major weights.
struct Mlp {
  int input = 0, hidden = 0, output = 0;
  std::vector<double> w1, b1, w2, b2;

  Mlp() = default;
  Mlp(int in, int hid, int out);

  /// h and y receive the hidden activations and the output.
  void forward(std::span<const double> x, std::span<double> h, std::span<double> y) const;
  std::size_t parameter_count() const { return w1.size() + b1.size() + w2.size() + b2.size(); }

  bool operator==(const Mlp&) const = default;
};

/// Student renderers: global_net maps pooled color statistics plus pooled
/// F_p to an m-vector; local_net maps one F_p cell plus its color
/// statistics to an n-vector.
struct StudentParams {
  Mlp global_net;
  Mlp local_net;

  int descriptor_dim() const { return local_net.output; }
  int global_dim() const { return global_net.output; }
  int hidden() const { return global_net.hidden; }

  bool operator==(const StudentParams&) const = default;
};

/// Gaussian init (std 1/sqrt(fan_in)), zero biases.
StudentParams make_student(int n, int m, int hidden, std::uint64_t seed);

/// Network inputs derived from a ProjectedView.
struct StudentInputs {
  int cols = 0, rows = 0;
  int cell_dim = 0;                // n + kColorStats
  std::vector<double> global;      // kColorStats + n
  std::vector<double> cells;       // cols*rows x cell_dim
  std::vector<std::uint8_t> mask;  // feature_grid.valid

  std::span<const double> cell(std::size_t i) const {
    return {cells.data() + i * static_cast<std::size_t>(cell_dim), static_cast<std::size_t>(cell_dim)};
  }
};

/// Per-cell color mean/std over filled pixels (in [0,1]); zero for empty cells.
std::vector<double> cell_color_stats(const ProjectedView& v);
/// Throws EmptyMask.
StudentInputs student_inputs(const ProjectedView& v, double p = 3.0);

/// Raw (unnormalized) outputs.
std::vector<double> student_global(const StudentParams& s, const StudentInputs& in);
/// cols*rows x n, zero outside the mask.
std::vector<double> student_local(const StudentParams& s, const StudentInputs& in);

struct TrainingPair {
  ProjectedView input;
  StudentInputs inputs;
  std::vector<double> target_global;  // m
  std::vector<double> target_local;   // cols*rows x n
};

struct PairParams {
  std::size_t num_sources = 4;
  double gem_p = 3.0;
  RenderParams render;
};

/// Input rendered from the num_sources keyframes nearest to view_pose
/// (excluding `exclude`), targets from the teacher extractor on
/// `real_image`. Throws NoOverlap when nothing projects into the view.
TrainingPair make_training_pair(const SceneDatabase& db, const Pose& view_pose, const ColorImage& real_image,
                                std::optional<KeyframeId> exclude = std::nullopt, const PairParams& params = {});

/// One pair per keyframe, rendered from the other keyframes. Keyframes
/// that nothing projects into are skipped.
std::vector<TrainingPair> keyframe_training_pairs(const SceneDatabase& db, const PairParams& params = {});

struct Loss {
  double global = 0;
  double local = 0;
};

/// Throws ShapeMismatch.
Loss distill_loss(const StudentParams& s, const TrainingPair& pair);

/// Gradient of loss_g + lambda * loss_l, accumulated (scaled by `weight`)
/// into `grad`, which has the shape of `s`. Returns the loss.
Loss accumulate_gradient(const StudentParams& s, const TrainingPair& pair, double lambda, double weight,
                         StudentParams& grad);

struct TrainParams {
  int epochs = 10;
  int batch_size = 24;
  double lr = 1e-3;
  int lr_decay_epoch = 8;  // 0-based epoch from which lr is multiplied by lr_decay
  double lr_decay = 0.1;
  double lambda = 1.0;
  /// Pairs drawn per epoch (with replacement); 0 = one shuffled pass over all pairs.
  std::size_t pairs_per_epoch = 0;
  bool init_head = true;    // least-squares output layers on the first batch
  bool freeze_head = true;  // keep output layers fixed during SGD
  double head_ridge = 1e-3;  // relative to the mean diagonal of the normal equations
  std::uint64_t seed = 0;
};

struct HistoryRow {
  std::size_t step = 0;
  double loss_g = 0;
  double loss_l = 0;
};

struct TrainResult {
  StudentParams student;
  std::vector<HistoryRow> history;
};

/// Mini-batch SGD, deterministic given the seed.
TrainResult train(const StudentParams& initial, std::span<const TrainingPair> pairs, const TrainParams& params);

/// Least-squares fit of both output layers to the teacher targets.
void init_heads(StudentParams& s, std::span<const TrainingPair> pairs, double ridge = 1e-3);

/// Indices of the pairs visited in one epoch.
std::vector<std::size_t> epoch_schedule(std::size_t num_pairs, std::size_t pairs_per_epoch, std::uint64_t seed);

/// Central differences on >= 50 sampled weights (W1/W2 of both nets).
/// Returns max |g_a - g_fd| / max(1e-12, |g_a| + |g_fd|).
double gradient_check(const StudentParams& s, const TrainingPair& pair, double epsilon, std::uint64_t seed,
                      double lambda = 1.0, int samples = 64);

/// "VLST" u32 n, u32 m, u32 hidden, u32 version, then f32 weights
/// (global w1 b1 w2 b2, local w1 b1 w2 b2).
std::vector<std::uint8_t> encode_student(const StudentParams& s);
StudentParams decode_student(std::span<const std::uint8_t> bytes);
void write_student(const std::filesystem::path& path, const StudentParams& s);
StudentParams read_student(const std::filesystem::path& path);

/// step,loss_g,loss_l
std::string history_csv(std::span<const HistoryRow> history);

}  // namespace vl
