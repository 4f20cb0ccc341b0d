#include "vl/common/binary_io.h"
#include "vl/features/features.h"

namespace vl {

std::vector<std::uint8_t> encode_features(const LocalFeatureSet& local, const GlobalDescriptor& global) {
  io::ByteWriter w;
  w.magic("VLFT");
  w.u32(static_cast<std::uint32_t>(local.dim));
  w.u32(static_cast<std::uint32_t>(global.values.size()));
  w.u32(static_cast<std::uint32_t>(local.size()));
  for (std::size_t i = 0; i < local.size(); ++i) {
    w.f32(local.keypoints[i].x);
    w.f32(local.keypoints[i].y);
    w.f32(local.keypoints[i].score);
    w.f32s(local.descriptor(i));
  }
  w.f32s(global.values);
  return w.bytes();
}

void decode_features(std::span<const std::uint8_t> bytes, LocalFeatureSet& local, GlobalDescriptor& global) {
  io::ByteReader r(bytes, "features");
  r.expect_magic("VLFT");
  const std::uint32_t n = r.u32();
  const std::uint32_t m = r.u32();
  const std::uint32_t count = r.u32();
  const std::size_t need = static_cast<std::size_t>(count) * (3 + n) * 4 + static_cast<std::size_t>(m) * 4;
  if (r.remaining() != need) throw Error(ErrorCode::io, "features: size does not match header");
  local = LocalFeatureSet{};
  local.dim = static_cast<int>(n);
  local.keypoints.resize(count);
  local.descriptors.resize(static_cast<std::size_t>(count) * n);
  for (std::uint32_t i = 0; i < count; ++i) {
    local.keypoints[i].x = r.f32();
    local.keypoints[i].y = r.f32();
    local.keypoints[i].score = r.f32();
    r.f32s(local.descriptor(i));
  }
  global.values.assign(m, 0.0f);
  r.f32s(global.values);
}

void write_features(const std::filesystem::path& path, const LocalFeatureSet& local, const GlobalDescriptor& global) {
  io::write_file(path, encode_features(local, global));
}

void read_features(const std::filesystem::path& path, LocalFeatureSet& local, GlobalDescriptor& global) {
  decode_features(io::read_file(path), local, global);
}

}  // namespace vl
