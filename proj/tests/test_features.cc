#include <algorithm>
#include <cmath>
#include <filesystem>

#include <Eigen/Dense>

#include "doctest.h"
#include "test_util.h"
#include "vl/common/error.h"
#include "vl/features/features.h"

using namespace vl;

namespace {

ColorImage flat_image(int w, int h, std::uint8_t v = 128) { return ColorImage(w, h, Rgb{v, v, v}); }

// Dark background with one bright axis-aligned square.
ColorImage square_image(int w, int h, int x0, int y0, int side) {
  ColorImage img = flat_image(w, h, 30);
  for (int y = y0; y < y0 + side; ++y)
    for (int x = x0; x < x0 + side; ++x) img(x, y) = Rgb{220, 220, 220};
  return img;
}

ColorImage noise_image(int w, int h, std::uint64_t seed) {
  SplitMix64 rng(seed);
  ColorImage img(w, h);
  for (auto& p : img.data()) {
    const auto v = static_cast<std::uint8_t>(rng.index(256));
    p = Rgb{v, v, v};
  }
  return img;
}

}  // namespace

TEST_CASE("harris fires at the corners of a bright square") {
  const ColorImage img = square_image(96, 96, 30, 34, 30);
  const LocalFeatureSet f = extract_local(img);
  REQUIRE(f.size() >= 4);
  const Eigen::Vector2d corners[] = {{29.5, 33.5}, {59.5, 33.5}, {29.5, 63.5}, {59.5, 63.5}};
  for (const auto& c : corners) {
    double best = 1e9;
    for (const Keypoint& kp : f.keypoints) best = std::min(best, (Eigen::Vector2d(kp.x, kp.y) - c).norm());
    CHECK(best < 2.0);
  }
}

TEST_CASE("a flat image has no keypoints and no valid grid cells") {
  const ColorImage img = flat_image(64, 48);
  CHECK(extract_local(img).empty());
  const DescriptorGrid g = describe_grid(img);
  CHECK(g.cols == 8);
  CHECK(g.rows == 6);
  CHECK(g.valid_count() == 0);
  CHECK(std::all_of(g.values.begin(), g.values.end(), [](float v) { return v == 0.0f; }));
}

TEST_CASE("keypoints are sorted by score and respect the border and the cap") {
  const ColorImage img = noise_image(128, 96, 3);
  DetectorParams p;
  p.max_keypoints = 40;
  const LocalFeatureSet f = extract_local(img, p);
  CHECK(f.size() <= 40);
  CHECK(f.size() > 10);
  CHECK(f.descriptors.size() == f.size() * kDescriptorDim);
  for (std::size_t i = 1; i < f.size(); ++i) CHECK(f.keypoints[i - 1].score >= f.keypoints[i].score);
  for (const Keypoint& kp : f.keypoints) {
    CHECK(kp.x >= p.border - 1);
    CHECK(kp.y >= p.border - 1);
    CHECK(kp.x <= img.width() - p.border);
    CHECK(kp.y <= img.height() - p.border);
  }
}

TEST_CASE("descriptors are unit length with clamped bins") {
  const LocalFeatureSet f = extract_local(noise_image(96, 96, 4));
  REQUIRE_FALSE(f.empty());
  for (std::size_t i = 0; i < f.size(); ++i) {
    const auto d = f.descriptor(i);
    double n = 0;
    for (const float v : d) {
      CHECK(v >= 0.0f);
      n += static_cast<double>(v) * v;
    }
    CHECK(n == doctest::Approx(1.0).epsilon(1e-5));
  }
}

TEST_CASE("extraction is deterministic") {
  const ColorImage img = noise_image(96, 80, 5);
  CHECK(extract_local(img) == extract_local(img));
  CHECK(describe_grid(img) == describe_grid(img));
}

TEST_CASE("images smaller than 32x32 are rejected") {
  try {
    extract_local(flat_image(31, 64));
    FAIL("expected ImageTooSmall");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::image_too_small);
  }
}

TEST_CASE("describe_patch leaves a zero descriptor on a flat patch") {
  const GradientField g = compute_gradients(to_gray(flat_image(40, 40)));
  std::vector<float> out(kDescriptorDim, 0.0f);
  CHECK_FALSE(describe_patch(g, 20, 20, out));
  CHECK(std::all_of(out.begin(), out.end(), [](float v) { return v == 0.0f; }));
}

TEST_CASE("GeM pooling matches the closed form") {
  // Two rows of dimension 3.
  const std::vector<float> rows = {1, 0, 4, 3, 0, 2};
  const auto mean = gem_pool_raw(rows, 3, 1.0);
  CHECK(mean[0] == doctest::Approx(2.0));
  CHECK(mean[1] == 0.0);
  CHECK(mean[2] == doctest::Approx(3.0));
  const auto cubic = gem_pool_raw(rows, 3, 3.0);
  CHECK(cubic[0] == doctest::Approx(std::cbrt((1.0 + 27.0) / 2.0)));
  CHECK(cubic[2] == doctest::Approx(std::cbrt((64.0 + 8.0) / 2.0)));
  const auto high = gem_pool_raw(rows, 3, 200.0);
  CHECK(high[0] == doctest::Approx(3.0 * std::pow(0.5, 1.0 / 200.0)));
  const auto unit = gem_pool(rows, 3, 3.0);
  CHECK(std::hypot(unit[0], unit[1], unit[2]) == doctest::Approx(1.0));
}

TEST_CASE("GeM rectifies negatives and rejects empty input") {
  const std::vector<float> rows = {-1, 2};
  const auto g = gem_pool_raw(rows, 1, 3.0);
  CHECK(g[0] == doctest::Approx(std::cbrt(8.0 / 2.0)));
  try {
    gem_pool(std::span<const float>{}, 4, 3.0);
    FAIL("expected EmptySet");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::empty_set);
  }
}

TEST_CASE("the grid global descriptor pools only valid cells") {
  DescriptorGrid g(2, 1, 2);
  g.cell(0, 0)[0] = 1.0f;
  g.valid[0] = 1;  // cell 1 stays invalid and zero
  const GlobalDescriptor d = global_descriptor(g, 3.0);
  CHECK(d.values[0] == doctest::Approx(1.0));
  CHECK(d.values[1] == 0.0f);
}

TEST_CASE("whitening decorrelates the fitted samples") {
  SplitMix64 rng(6);
  std::vector<std::vector<float>> samples;
  for (int i = 0; i < 400; ++i) {
    const double a = rng.normal(), b = rng.normal(), c = rng.normal();
    samples.push_back(
        {static_cast<float>(3 * a + 1), static_cast<float>(a + 0.5 * b), static_cast<float>(-2 + 0.1 * b + 0.2 * c)});
  }
  const WhiteningTransform t = fit_whitening(samples);
  CHECK(t.input_dim() == 3);
  CHECK(t.output_dim() == 3);
  Eigen::MatrixXd out(400, 3);
  for (int i = 0; i < 400; ++i) {
    const auto w = apply_whitening(t, samples[i]);
    for (int j = 0; j < 3; ++j) out(i, j) = w[j];
  }
  const Eigen::RowVectorXd mean = out.colwise().mean();
  CHECK(mean.norm() < 1e-5);
  const Eigen::MatrixXd centered = out.rowwise() - mean;
  const Eigen::MatrixXd cov = centered.transpose() * centered / 400.0;  // population covariance
  CHECK((cov - Eigen::MatrixXd::Identity(3, 3)).cwiseAbs().maxCoeff() < 1e-3);

  const WhiteningTransform two = fit_whitening(samples, 2);
  CHECK(two.output_dim() == 2);
}

TEST_CASE("whitening zeroes directions without variance") {
  SplitMix64 rng(9);
  std::vector<std::vector<float>> samples;
  for (int i = 0; i < 50; ++i) {
    const double a = rng.normal();
    samples.push_back({static_cast<float>(a), static_cast<float>(2 * a), 1.0f});
  }
  const WhiteningTransform t = fit_whitening(samples);
  for (const auto& s : samples) {
    const auto w = apply_whitening(t, s);
    int nonzero = 0;
    for (const float v : w) nonzero += std::abs(v) > 1e-6f ? 1 : 0;
    CHECK(nonzero <= 1);
  }
}

TEST_CASE("whitening needs two samples") {
  const std::vector<std::vector<float>> one = {{1, 2}};
  try {
    fit_whitening(one);
    FAIL("expected TooFewSamples");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::too_few_samples);
  }
}

TEST_CASE("normalize keeps zero vectors at zero") {
  std::vector<float> z(4, 0.0f);
  CHECK(normalize(z) == 0.0);
  CHECK(std::all_of(z.begin(), z.end(), [](float v) { return v == 0.0f; }));
  std::vector<float> v = {3, 4};
  CHECK(normalize(v) == doctest::Approx(5.0));
  CHECK(v[0] == doctest::Approx(0.6f));
}

TEST_CASE("feature containers round-trip bit-exactly") {
  const ColorImage img = noise_image(96, 64, 7);
  const LocalFeatureSet local = extract_local(img);
  const GlobalDescriptor global = global_descriptor(describe_grid(img), 3.0);
  LocalFeatureSet l2;
  GlobalDescriptor g2;
  decode_features(encode_features(local, global), l2, g2);
  CHECK(l2 == local);
  CHECK(g2 == global);

  const auto path = std::filesystem::temp_directory_path() / "vl_test_features.feat";
  write_features(path, local, global);
  LocalFeatureSet l3;
  GlobalDescriptor g3;
  read_features(path, l3, g3);
  CHECK(l3 == local);
  CHECK(g3 == global);
  std::filesystem::remove(path);
}

TEST_CASE("truncated feature containers are rejected") {
  const LocalFeatureSet local = extract_local(noise_image(64, 64, 8));
  auto bytes = encode_features(local, GlobalDescriptor{{1.0f, 0.0f}});
  bytes.resize(bytes.size() - 3);
  LocalFeatureSet l;
  GlobalDescriptor g;
  CHECK_THROWS_AS(decode_features(bytes, l, g), Error);
}
