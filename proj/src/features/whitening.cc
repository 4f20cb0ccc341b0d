#include <Eigen/Eigenvalues>

#include "vl/common/error.h"
#include "vl/features/features.h"

namespace vl {

namespace {
constexpr double kRelativeEigenFloor = 1e-8;
}

WhiteningTransform fit_whitening(std::span<const std::vector<float>> samples, int keep_dims) {
  if (samples.size() < 2) throw Error(ErrorCode::too_few_samples, "whitening needs at least 2 samples");
  const Eigen::Index m = static_cast<Eigen::Index>(samples.front().size());
  const double n = static_cast<double>(samples.size());

  Eigen::VectorXd mean = Eigen::VectorXd::Zero(m);
  for (const auto& s : samples) {
    if (static_cast<Eigen::Index>(s.size()) != m) throw Error(ErrorCode::shape_mismatch, "whitening samples differ in size");
    for (Eigen::Index d = 0; d < m; ++d) mean(d) += s[d];
  }
  mean /= n;

  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(m, m);
  Eigen::VectorXd centered(m);
  for (const auto& s : samples) {
    for (Eigen::Index d = 0; d < m; ++d) centered(d) = s[d] - mean(d);
    cov.selfadjointView<Eigen::Lower>().rankUpdate(centered);
  }
  cov = cov.selfadjointView<Eigen::Lower>();
  cov /= n;

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  // Eigen returns ascending eigenvalues; the basis is emitted largest first.
  const Eigen::VectorXd values = eig.eigenvalues();
  const Eigen::MatrixXd vectors = eig.eigenvectors();
  const Eigen::Index kept = (keep_dims > 0 && keep_dims < m) ? keep_dims : m;
  const double floor = kRelativeEigenFloor * std::max(values(m - 1), 0.0);

  WhiteningTransform t;
  t.mean = mean;
  t.projection = Eigen::MatrixXd::Zero(kept, m);
  for (Eigen::Index r = 0; r < kept; ++r) {
    const Eigen::Index src = m - 1 - r;
    const double lambda = values(src);
    if (lambda > floor && lambda > 0) t.projection.row(r) = vectors.col(src).transpose() / std::sqrt(lambda);
  }
  return t;
}

std::vector<float> apply_whitening(const WhiteningTransform& t, std::span<const float> v) {
  if (static_cast<int>(v.size()) != t.input_dim()) throw Error(ErrorCode::shape_mismatch, "whitening input dimension");
  Eigen::VectorXd x(t.input_dim());
  for (int d = 0; d < t.input_dim(); ++d) x(d) = v[d] - t.mean(d);
  const Eigen::VectorXd y = t.projection * x;
  std::vector<float> out(y.size());
  for (Eigen::Index d = 0; d < y.size(); ++d) out[d] = static_cast<float>(y(d));
  return out;
}

}  // namespace vl
