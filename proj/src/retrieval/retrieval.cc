#include "vl/retrieval/retrieval.h"

#include <algorithm>
#include <cmath>

#include "vl/common/binary_io.h"
#include "vl/common/error.h"
#include "vl/simd/kernels.h"

namespace vl {

std::string_view to_string(EntryKind kind) { return kind == EntryKind::real ? "real" : "virtual"; }

RetrievalIndex RetrievalIndex::build(std::span<const RawEntry> entries, int keep_dims) {
  if (entries.empty()) throw Error(ErrorCode::empty_corpus, "retrieval index needs at least one entry");
  const std::size_t m = entries.front().global.size();
  if (m == 0) throw Error(ErrorCode::dimension_mismatch, "empty global descriptor");
  std::vector<std::vector<float>> samples;
  samples.reserve(entries.size());
  for (const RawEntry& e : entries) {
    if (e.global.size() != m) throw Error(ErrorCode::dimension_mismatch, "global descriptors differ in length");
    samples.push_back(e.global);
  }

  RetrievalIndex index;
  if (entries.size() >= 2) {
    index.whitening_ = fit_whitening(samples, keep_dims);
  } else {
    index.whitening_.mean = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(m));
    index.whitening_.projection = Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(m));
  }
  index.dim_ = index.whitening_.output_dim();
  index.descriptors_.reserve(entries.size() * index.dim_);
  for (std::size_t i = 0; i < entries.size(); ++i) {
    index.entries_.push_back({static_cast<std::uint32_t>(i), entries[i].kind, entries[i].ref, entries[i].pose});
    const std::vector<float> w = index.transform(entries[i].global);
    index.descriptors_.insert(index.descriptors_.end(), w.begin(), w.end());
  }
  return index;
}

std::vector<float> RetrievalIndex::transform(std::span<const float> raw_global) const {
  if (static_cast<int>(raw_global.size()) != whitening_.input_dim()) {
    throw Error(ErrorCode::dimension_mismatch, "query descriptor length differs from the index");
  }
  std::vector<float> w = apply_whitening(whitening_, raw_global);
  normalize(w);
  return w;
}

std::vector<Ranked> RetrievalIndex::query_topk(std::span<const float> raw_global, std::size_t k) const {
  if (entries_.empty()) throw Error(ErrorCode::empty_corpus, "query against an empty index");
  const std::vector<float> q = transform(raw_global);
  std::vector<double> sq(entries_.size());
  simd::squared_l2_rows(q, descriptors_, static_cast<std::size_t>(dim_), sq);
  std::vector<Ranked> all(entries_.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = {static_cast<std::uint32_t>(i), sq[i]};
  const std::size_t take = std::min(k, all.size());
  auto less = [](const Ranked& a, const Ranked& b) { return a.distance < b.distance || (a.distance == b.distance && a.id < b.id); };
  std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(take), all.end(), less);
  all.resize(take);
  for (Ranked& r : all) r.distance = std::sqrt(r.distance);
  return all;
}

std::vector<std::uint8_t> RetrievalIndex::encode() const {
  io::ByteWriter w;
  w.magic("VLIX");
  w.u32(static_cast<std::uint32_t>(dim_));
  w.u32(static_cast<std::uint32_t>(entries_.size()));
  w.u32(static_cast<std::uint32_t>(whitening_.input_dim()));
  w.u32(static_cast<std::uint32_t>(whitening_.output_dim()));
  w.f64s({whitening_.mean.data(), static_cast<std::size_t>(whitening_.mean.size())});
  const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> proj = whitening_.projection;
  w.f64s({proj.data(), static_cast<std::size_t>(proj.size())});
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    const IndexEntry& e = entries_[i];
    w.u32(e.id);
    w.u8(static_cast<std::uint8_t>(e.kind));
    w.u32(e.ref);
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) w.f64(e.pose.rotation(r, c));
    for (int r = 0; r < 3; ++r) w.f64(e.pose.translation(r));
    w.f32s(descriptor(static_cast<std::uint32_t>(i)));
  }
  return w.bytes();
}

RetrievalIndex RetrievalIndex::decode(std::span<const std::uint8_t> bytes) {
  io::ByteReader r(bytes, "index");
  r.expect_magic("VLIX");
  RetrievalIndex index;
  index.dim_ = static_cast<int>(r.u32());
  const std::uint32_t count = r.u32();
  const auto in = static_cast<Eigen::Index>(r.u32());
  const auto out = static_cast<Eigen::Index>(r.u32());
  if (out != index.dim_ || in <= 0 || out <= 0 || in > (1 << 16) || out > in) {
    throw Error(ErrorCode::io, "index: inconsistent dimensions");
  }
  index.whitening_.mean.resize(in);
  r.f64s({index.whitening_.mean.data(), static_cast<std::size_t>(in)});
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> proj(out, in);
  r.f64s({proj.data(), static_cast<std::size_t>(proj.size())});
  index.whitening_.projection = proj;
  const std::size_t record = 4 + 1 + 4 + 12 * 8 + static_cast<std::size_t>(out) * 4;
  if (r.remaining() != record * count) throw Error(ErrorCode::io, "index: size does not match header");
  index.descriptors_.resize(static_cast<std::size_t>(count) * out);
  for (std::uint32_t i = 0; i < count; ++i) {
    IndexEntry e;
    e.id = r.u32();
    const std::uint8_t kind = r.u8();
    if (e.id != i || kind > 1) throw Error(ErrorCode::io, "index: corrupt entry record");
    e.kind = static_cast<EntryKind>(kind);
    e.ref = r.u32();
    for (int rr = 0; rr < 3; ++rr)
      for (int c = 0; c < 3; ++c) e.pose.rotation(rr, c) = r.f64();
    for (int rr = 0; rr < 3; ++rr) e.pose.translation(rr) = r.f64();
    r.f32s({index.descriptors_.data() + static_cast<std::size_t>(i) * out, static_cast<std::size_t>(out)});
    index.entries_.push_back(e);
  }
  return index;
}

void RetrievalIndex::save(const std::filesystem::path& path) const { io::write_file(path, encode()); }

RetrievalIndex RetrievalIndex::load(const std::filesystem::path& path) { return decode(io::read_file(path)); }

std::vector<RawEntry> real_entries(const SceneDatabase& db) {
  std::vector<RawEntry> out;
  for (const Keyframe& kf : db.keyframes()) {
    if (!kf.global_feature) continue;
    out.push_back({EntryKind::real, kf.id, kf.pose, kf.global_feature->values});
  }
  return out;
}

}  // namespace vl
