#include <algorithm>
#include <cmath>

#include "vl/common/binary_io.h"
#include "vl/common/error.h"
#include "vl/common/rng.h"
#include "vl/distill/distill.h"
#include "vl/simd/kernels.h"

namespace vl {

Mlp::Mlp(int in, int hid, int out)
    : input(in), hidden(hid), output(out),
      w1(static_cast<std::size_t>(hid) * in, 0.0), b1(hid, 0.0),
      w2(static_cast<std::size_t>(out) * hid, 0.0), b2(out, 0.0) {}

void Mlp::forward(std::span<const double> x, std::span<double> h, std::span<double> y) const {
  const auto in = static_cast<std::size_t>(input), hid = static_cast<std::size_t>(hidden);
  for (std::size_t j = 0; j < hid; ++j) {
    h[j] = std::tanh(simd::dot({w1.data() + j * in, in}, x) + b1[j]);
  }
  for (std::size_t o = 0; o < static_cast<std::size_t>(output); ++o) {
    y[o] = simd::dot({w2.data() + o * hid, hid}, h) + b2[o];
  }
}

StudentParams make_student(int n, int m, int hidden, std::uint64_t seed) {
  if (n < 1 || m < 1 || hidden < 1) throw Error(ErrorCode::shape_mismatch, "student dimensions must be positive");
  StudentParams s;
  s.global_net = Mlp(kColorStats + n, hidden, m);
  s.local_net = Mlp(n + kColorStats, hidden, n);
  SplitMix64 rng(mix64(seed ^ 0x73747564656E74ULL));
  auto fill = [&](std::vector<double>& w, int fan_in) {
    const double scale = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (double& v : w) v = scale * rng.normal();
  };
  fill(s.global_net.w1, s.global_net.input);
  fill(s.global_net.w2, s.global_net.hidden);
  fill(s.local_net.w1, s.local_net.input);
  fill(s.local_net.w2, s.local_net.hidden);
  return s;
}

std::vector<double> cell_color_stats(const ProjectedView& v) {
  const int cols = v.feature_grid.cols, rows = v.feature_grid.rows;
  std::vector<double> out(static_cast<std::size_t>(cols) * rows * kColorStats, 0.0);
  for (int cy = 0; cy < rows; ++cy) {
    for (int cx = 0; cx < cols; ++cx) {
      double sum[3] = {}, sq[3] = {};
      int count = 0;
      for (int y = cy * kGridStride; y < (cy + 1) * kGridStride; ++y) {
        for (int x = cx * kGridStride; x < (cx + 1) * kGridStride; ++x) {
          if (!v.filled(x, y)) continue;
          const Rgb c = v.color_grid(x, y);
          const double ch[3] = {c.r / 255.0, c.g / 255.0, c.b / 255.0};
          for (int i = 0; i < 3; ++i) sum[i] += ch[i], sq[i] += ch[i] * ch[i];
          ++count;
        }
      }
      if (count == 0) continue;
      double* dst = out.data() + (static_cast<std::size_t>(cy) * cols + cx) * kColorStats;
      for (int i = 0; i < 3; ++i) {
        const double mean = sum[i] / count;
        dst[i] = mean;
        dst[3 + i] = std::sqrt(std::max(0.0, sq[i] / count - mean * mean));
      }
    }
  }
  return out;
}

StudentInputs student_inputs(const ProjectedView& v, double p) {
  const DescriptorGrid& fg = v.feature_grid;
  const std::vector<float> mask_cells = valid_cells(fg);
  if (mask_cells.empty()) throw Error(ErrorCode::empty_mask, "no projected feature cells");
  const std::vector<double> stats = cell_color_stats(v);
  const std::size_t num_cells = fg.valid.size();
  const auto n = static_cast<std::size_t>(fg.dim);

  StudentInputs in;
  in.cols = fg.cols;
  in.rows = fg.rows;
  in.cell_dim = static_cast<int>(n) + kColorStats;
  in.mask = fg.valid;

  // Pool color statistics over cells that received any pixel.
  std::vector<float> filled_stats;
  for (std::size_t c = 0; c < num_cells; ++c) {
    const double* s = stats.data() + c * kColorStats;
    if (std::all_of(s, s + kColorStats, [](double x) { return x == 0.0; })) continue;
    for (int i = 0; i < kColorStats; ++i) filled_stats.push_back(static_cast<float>(s[i]));
  }
  const std::vector<double> pooled_color =
      filled_stats.empty() ? std::vector<double>(kColorStats, 0.0) : gem_pool_raw(filled_stats, kColorStats, p);
  const std::vector<float> pooled_features = gem_pool(mask_cells, n, p);
  in.global.assign(pooled_color.begin(), pooled_color.end());
  in.global.insert(in.global.end(), pooled_features.begin(), pooled_features.end());

  in.cells.assign(num_cells * in.cell_dim, 0.0);
  for (std::size_t c = 0; c < num_cells; ++c) {
    double* dst = in.cells.data() + c * in.cell_dim;
    const float* f = fg.values.data() + c * n;
    for (std::size_t i = 0; i < n; ++i) dst[i] = f[i];
    for (int i = 0; i < kColorStats; ++i) dst[n + i] = stats[c * kColorStats + i];
  }
  return in;
}

namespace {

void check_shapes(const StudentParams& s, const StudentInputs& in) {
  if (static_cast<int>(in.global.size()) != s.global_net.input || in.cell_dim != s.local_net.input) {
    throw Error(ErrorCode::shape_mismatch, "student input dimensions do not match the projected view");
  }
}

}  // namespace

std::vector<double> student_global(const StudentParams& s, const StudentInputs& in) {
  check_shapes(s, in);
  std::vector<double> h(s.global_net.hidden), y(s.global_net.output);
  s.global_net.forward(in.global, h, y);
  return y;
}

std::vector<double> student_local(const StudentParams& s, const StudentInputs& in) {
  check_shapes(s, in);
  const auto n = static_cast<std::size_t>(s.local_net.output);
  std::vector<double> out(in.mask.size() * n, 0.0);
  std::vector<double> h(s.local_net.hidden);
  for (std::size_t c = 0; c < in.mask.size(); ++c) {
    if (!in.mask[c]) continue;
    s.local_net.forward(in.cell(c), h, {out.data() + c * n, n});
  }
  return out;
}

namespace {

void put(io::ByteWriter& w, const std::vector<double>& v) {
  for (const double x : v) w.f32(static_cast<float>(x));
}

void get(io::ByteReader& r, std::vector<double>& v) {
  for (double& x : v) x = r.f32();
}

}  // namespace

std::vector<std::uint8_t> encode_student(const StudentParams& s) {
  io::ByteWriter w;
  w.magic("VLST");
  w.u32(static_cast<std::uint32_t>(s.descriptor_dim()));
  w.u32(static_cast<std::uint32_t>(s.global_dim()));
  w.u32(static_cast<std::uint32_t>(s.hidden()));
  w.u32(kStudentFormatVersion);
  for (const Mlp* net : {&s.global_net, &s.local_net}) {
    put(w, net->w1);
    put(w, net->b1);
    put(w, net->w2);
    put(w, net->b2);
  }
  return w.bytes();
}

StudentParams decode_student(std::span<const std::uint8_t> bytes) {
  io::ByteReader r(bytes, "student");
  r.expect_magic("VLST");
  const auto n = static_cast<int>(r.u32());
  const auto m = static_cast<int>(r.u32());
  const auto hidden = static_cast<int>(r.u32());
  const std::uint32_t version = r.u32();
  if (version != kStudentFormatVersion) {
    throw Error(ErrorCode::format_version_mismatch, "student checkpoint version " + std::to_string(version));
  }
  if (n < 1 || m < 1 || hidden < 1 || n > (1 << 16) || m > (1 << 16) || hidden > (1 << 16)) {
    throw Error(ErrorCode::io, "student: implausible dimensions");
  }
  StudentParams s;
  s.global_net = Mlp(kColorStats + n, hidden, m);
  s.local_net = Mlp(n + kColorStats, hidden, n);
  if (r.remaining() != 4 * (s.global_net.parameter_count() + s.local_net.parameter_count())) {
    throw Error(ErrorCode::io, "student: size does not match header");
  }
  for (Mlp* net : {&s.global_net, &s.local_net}) {
    get(r, net->w1);
    get(r, net->b1);
    get(r, net->w2);
    get(r, net->b2);
  }
  return s;
}

void write_student(const std::filesystem::path& path, const StudentParams& s) {
  io::write_file(path, encode_student(s));
}

StudentParams read_student(const std::filesystem::path& path) { return decode_student(io::read_file(path)); }

}  // namespace vl
