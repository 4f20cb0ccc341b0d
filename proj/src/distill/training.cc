#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include <Eigen/Dense>

#include "vl/common/error.h"
#include "vl/common/rng.h"
#include "vl/distill/distill.h"
#include "vl/simd/kernels.h"

namespace vl {

TrainingPair make_training_pair(const SceneDatabase& db, const Pose& view_pose, const ColorImage& real_image,
                                std::optional<KeyframeId> exclude, const PairParams& params) {
  if (db.empty()) throw Error(ErrorCode::empty_database, "training pair needs keyframes");
  const Intrinsics k = db.keyframes().front().intrinsics;
  if (real_image.width() != k.width || real_image.height() != k.height) {
    throw Error(ErrorCode::shape_mismatch, "teacher image size differs from the database intrinsics");
  }
  NearestParams np;
  np.k = params.num_sources;
  np.exclude = exclude;
  const std::vector<KeyframeId> sources = db.nearest_keyframes(view_pose, np);
  if (sources.empty()) throw Error(ErrorCode::no_sources, "no source keyframes besides the excluded one");

  TrainingPair pair;
  pair.input = render_projection(db, view_pose, k, sources, params.render);
  if (pair.input.feature_grid.valid_count() == 0) throw Error(ErrorCode::no_overlap, "nothing projects into the view");
  pair.inputs = student_inputs(pair.input, params.gem_p);

  const DescriptorGrid teacher = describe_grid(real_image);
  if (teacher.cols != pair.input.feature_grid.cols || teacher.rows != pair.input.feature_grid.rows ||
      teacher.dim != pair.input.feature_grid.dim) {
    throw Error(ErrorCode::shape_mismatch, "teacher grid differs from the projected grid");
  }
  if (teacher.valid_count() == 0) throw Error(ErrorCode::no_overlap, "teacher image has no texture");
  const GlobalDescriptor g = global_descriptor(teacher, params.gem_p);
  pair.target_global.assign(g.values.begin(), g.values.end());
  pair.target_local.assign(teacher.values.begin(), teacher.values.end());
  return pair;
}

std::vector<TrainingPair> keyframe_training_pairs(const SceneDatabase& db, const PairParams& params) {
  std::vector<TrainingPair> pairs;
  for (const Keyframe& kf : db.keyframes()) {
    try {
      pairs.push_back(make_training_pair(db, kf.pose, kf.image, kf.id, params));
    } catch (const Error& e) {
      if (e.code() != ErrorCode::no_overlap && e.code() != ErrorCode::no_sources) throw;
    }
  }
  return pairs;
}

namespace {

void check_pair(const StudentParams& s, const TrainingPair& pair) {
  const auto cells = pair.inputs.mask.size();
  if (static_cast<int>(pair.inputs.global.size()) != s.global_net.input || pair.inputs.cell_dim != s.local_net.input ||
      static_cast<int>(pair.target_global.size()) != s.global_net.output ||
      pair.target_local.size() != cells * static_cast<std::size_t>(s.local_net.output) ||
      pair.inputs.cells.size() != cells * static_cast<std::size_t>(pair.inputs.cell_dim)) {
    throw Error(ErrorCode::shape_mismatch, "training pair does not fit the student");
  }
}

std::size_t mask_count(const TrainingPair& pair) {
  return static_cast<std::size_t>(std::count(pair.inputs.mask.begin(), pair.inputs.mask.end(), 1));
}

// Backprop of dL/dy through one MLP evaluation, accumulated into grad.
void backward(const Mlp& net, std::span<const double> x, std::span<const double> h, std::span<const double> dy,
              Mlp& grad, std::vector<double>& dh) {
  const auto in = static_cast<std::size_t>(net.input), hid = static_cast<std::size_t>(net.hidden);
  std::fill(dh.begin(), dh.end(), 0.0);
  for (std::size_t o = 0; o < static_cast<std::size_t>(net.output); ++o) {
    if (dy[o] == 0.0) continue;
    grad.b2[o] += dy[o];
    simd::axpy(dy[o], h, {grad.w2.data() + o * hid, hid});
    simd::axpy(dy[o], {net.w2.data() + o * hid, hid}, dh);
  }
  for (std::size_t j = 0; j < hid; ++j) {
    const double da = dh[j] * (1.0 - h[j] * h[j]);
    if (da == 0.0) continue;
    grad.b1[j] += da;
    simd::axpy(da, x, {grad.w1.data() + j * in, in});
  }
}

Loss evaluate(const StudentParams& s, const TrainingPair& pair, double lambda, double weight, StudentParams* grad) {
  check_pair(s, pair);
  Loss loss;

  const auto m = static_cast<std::size_t>(s.global_net.output);
  std::vector<double> h(s.global_net.hidden), y(m), dy(m), dh(s.global_net.hidden);
  s.global_net.forward(pair.inputs.global, h, y);
  for (std::size_t i = 0; i < m; ++i) {
    const double d = y[i] - pair.target_global[i];
    loss.global += d * d;
    dy[i] = weight * 2.0 * d;
  }
  if (grad) backward(s.global_net, pair.inputs.global, h, dy, grad->global_net, dh);

  const auto n = static_cast<std::size_t>(s.local_net.output);
  const std::size_t active = mask_count(pair);
  const double scale = 1.0 / static_cast<double>(std::max<std::size_t>(1, active));
  std::vector<double> hl(s.local_net.hidden), yl(n), dyl(n), dhl(s.local_net.hidden);
  for (std::size_t c = 0; c < pair.inputs.mask.size(); ++c) {
    if (!pair.inputs.mask[c]) continue;
    s.local_net.forward(pair.inputs.cell(c), hl, yl);
    const double* t = pair.target_local.data() + c * n;
    double cell_loss = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const double d = yl[i] - t[i];
      cell_loss += d * d;
      dyl[i] = weight * lambda * scale * 2.0 * d;
    }
    loss.local += cell_loss;
    if (grad) backward(s.local_net, pair.inputs.cell(c), hl, dyl, grad->local_net, dhl);
  }
  loss.local *= scale;
  return loss;
}

StudentParams zeros_like(const StudentParams& s) {
  StudentParams g;
  g.global_net = Mlp(s.global_net.input, s.global_net.hidden, s.global_net.output);
  g.local_net = Mlp(s.local_net.input, s.local_net.hidden, s.local_net.output);
  return g;
}

void sgd_step(std::vector<double>& w, const std::vector<double>& g, double lr) {
  simd::axpy(-lr, g, w);
}

}  // namespace

Loss distill_loss(const StudentParams& s, const TrainingPair& pair) { return evaluate(s, pair, 1.0, 1.0, nullptr); }

Loss accumulate_gradient(const StudentParams& s, const TrainingPair& pair, double lambda, double weight,
                         StudentParams& grad) {
  return evaluate(s, pair, lambda, weight, &grad);
}

std::vector<std::size_t> epoch_schedule(std::size_t num_pairs, std::size_t pairs_per_epoch, std::uint64_t seed) {
  SplitMix64 rng(seed);
  std::vector<std::size_t> order;
  if (num_pairs == 0) return order;
  if (pairs_per_epoch == 0) {
    order.resize(num_pairs);
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t i = num_pairs; i > 1; --i) std::swap(order[i - 1], order[rng.index(i)]);
  } else {
    order.resize(pairs_per_epoch);
    for (std::size_t& i : order) i = rng.index(num_pairs);
  }
  return order;
}

void init_heads(StudentParams& s, std::span<const TrainingPair> pairs, double ridge) {
  if (pairs.empty()) return;
  auto fit = [ridge](Mlp& net, const Eigen::MatrixXd& hidden, const Eigen::MatrixXd& targets) {
    const Eigen::Index rows = hidden.rows(), hid = hidden.cols();
    Eigen::MatrixXd a(rows, hid + 1);
    a.leftCols(hid) = hidden;
    a.col(hid).setOnes();
    Eigen::MatrixXd normal = a.transpose() * a;
    // Ridge relative to the mean diagonal; the tanh features are close to
    // collinear and an absolute ridge lets the head weights blow up.
    normal.diagonal().array() += ridge * normal.trace() / static_cast<double>(normal.rows()) + 1e-12;
    const Eigen::MatrixXd x = normal.ldlt().solve(a.transpose() * targets);  // (hid+1) x out
    for (Eigen::Index o = 0; o < x.cols(); ++o) {
      for (Eigen::Index j = 0; j < hid; ++j) net.w2[o * hid + j] = x(j, o);
      net.b2[o] = x(hid, o);
    }
  };

  for (const TrainingPair& p : pairs) check_pair(s, p);
  const Eigen::Index gh = s.global_net.hidden, m = s.global_net.output;
  Eigen::MatrixXd hg(static_cast<Eigen::Index>(pairs.size()), gh), tg(static_cast<Eigen::Index>(pairs.size()), m);
  std::vector<double> h(gh), y(m);
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    s.global_net.forward(pairs[i].inputs.global, h, y);
    for (Eigen::Index j = 0; j < gh; ++j) hg(static_cast<Eigen::Index>(i), j) = h[j];
    for (Eigen::Index o = 0; o < m; ++o) tg(static_cast<Eigen::Index>(i), o) = pairs[i].target_global[o];
  }
  fit(s.global_net, hg, tg);

  const Eigen::Index lh = s.local_net.hidden, n = s.local_net.output;
  std::size_t rows = 0;
  for (const TrainingPair& p : pairs) rows += mask_count(p);
  if (rows == 0) return;
  Eigen::MatrixXd hl(static_cast<Eigen::Index>(rows), lh), tl(static_cast<Eigen::Index>(rows), n);
  std::vector<double> h2(lh), y2(n);
  Eigen::Index r = 0;
  for (const TrainingPair& p : pairs) {
    for (std::size_t c = 0; c < p.inputs.mask.size(); ++c) {
      if (!p.inputs.mask[c]) continue;
      s.local_net.forward(p.inputs.cell(c), h2, y2);
      for (Eigen::Index j = 0; j < lh; ++j) hl(r, j) = h2[j];
      for (Eigen::Index o = 0; o < n; ++o) tl(r, o) = p.target_local[c * n + o];
      ++r;
    }
  }
  fit(s.local_net, hl, tl);
}

TrainResult train(const StudentParams& initial, std::span<const TrainingPair> pairs, const TrainParams& params) {
  if (pairs.empty()) throw Error(ErrorCode::invalid_params, "training needs at least one pair");
  if (params.batch_size < 1 || params.epochs < 0) throw Error(ErrorCode::invalid_params, "bad batch size or epochs");
  TrainResult result;
  result.student = initial;
  StudentParams& s = result.student;

  if (params.init_head) {
    const auto first = epoch_schedule(pairs.size(), params.pairs_per_epoch, mix64(params.seed));
    std::vector<TrainingPair> init;
    for (std::size_t i = 0; i < first.size() && i < static_cast<std::size_t>(params.batch_size); ++i) {
      init.push_back(pairs[first[i]]);
    }
    init_heads(s, init, params.head_ridge);
  }

  std::size_t step = 0;
  for (int epoch = 0; epoch < params.epochs; ++epoch) {
    const double lr = params.lr * (epoch >= params.lr_decay_epoch ? params.lr_decay : 1.0);
    const auto order = epoch_schedule(pairs.size(), params.pairs_per_epoch, mix64(params.seed + epoch));
    for (std::size_t start = 0; start < order.size(); start += params.batch_size) {
      const std::size_t end = std::min(order.size(), start + params.batch_size);
      const double weight = 1.0 / static_cast<double>(end - start);
      StudentParams grad = zeros_like(s);
      HistoryRow row;
      row.step = step;
      for (std::size_t b = start; b < end; ++b) {
        const Loss l = accumulate_gradient(s, pairs[order[b]], params.lambda, weight, grad);
        row.loss_g += weight * l.global;
        row.loss_l += weight * l.local;
      }
      result.history.push_back(row);
      sgd_step(s.global_net.w1, grad.global_net.w1, lr);
      sgd_step(s.global_net.b1, grad.global_net.b1, lr);
      sgd_step(s.local_net.w1, grad.local_net.w1, lr);
      sgd_step(s.local_net.b1, grad.local_net.b1, lr);
      if (!params.freeze_head) {
        sgd_step(s.global_net.w2, grad.global_net.w2, lr);
        sgd_step(s.global_net.b2, grad.global_net.b2, lr);
        sgd_step(s.local_net.w2, grad.local_net.w2, lr);
        sgd_step(s.local_net.b2, grad.local_net.b2, lr);
      }
      ++step;
    }
  }
  return result;
}

double gradient_check(const StudentParams& s, const TrainingPair& pair, double epsilon, std::uint64_t seed,
                      double lambda, int samples) {
  if (!(epsilon >= 1e-7 && epsilon <= 1e-3)) throw Error(ErrorCode::invalid_params, "epsilon must be in [1e-7, 1e-3]");
  StudentParams grad = zeros_like(s);
  accumulate_gradient(s, pair, lambda, 1.0, grad);

  // Sampled weights index the concatenation [G.w1, G.w2, L.w1, L.w2].
  auto slot = [](StudentParams& p, std::size_t idx) -> double& {
    for (Mlp* net : {&p.global_net, &p.local_net}) {
      for (std::vector<double>* w : {&net->w1, &net->w2}) {
        if (idx < w->size()) return (*w)[idx];
        idx -= w->size();
      }
    }
    throw Error(ErrorCode::invalid_params, "weight index out of range");
  };
  const std::size_t total =
      s.global_net.w1.size() + s.global_net.w2.size() + s.local_net.w1.size() + s.local_net.w2.size();
  auto objective = [&](const StudentParams& p) {
    const Loss l = evaluate(p, pair, lambda, 1.0, nullptr);
    return l.global + lambda * l.local;
  };

  SplitMix64 rng(mix64(seed ^ 0x67726164636BULL));
  StudentParams probe = s;
  double worst = 0;
  const int count = std::max(50, samples);
  for (int i = 0; i < count; ++i) {
    const std::size_t idx = rng.index(total);
    double& w = slot(probe, idx);
    const double orig = w;
    w = orig + epsilon;
    const double plus = objective(probe);
    w = orig - epsilon;
    const double minus = objective(probe);
    w = orig;
    const double fd = (plus - minus) / (2.0 * epsilon);
    const double analytic = slot(grad, idx);
    const double rel = std::abs(analytic - fd) / std::max(1e-12, std::abs(analytic) + std::abs(fd));
    worst = std::max(worst, rel);
  }
  return worst;
}

std::string history_csv(std::span<const HistoryRow> history) {
  std::string out = "step,loss_g,loss_l\n";
  char line[128];
  for (const HistoryRow& r : history) {
    std::snprintf(line, sizeof line, "%zu,%.9g,%.9g\n", r.step, r.loss_g, r.loss_l);
    out += line;
  }
  return out;
}

}  // namespace vl
