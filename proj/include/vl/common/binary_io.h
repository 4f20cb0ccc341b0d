#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "vl/common/error.h"

namespace vl::io {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

/// Append-only little-endian byte buffer.
class ByteWriter {
 public:
  void magic(std::string_view four_cc);
  void u8(std::uint8_t v) { bytes_.push_back(v); }
  void u32(std::uint32_t v) { raw(&v, sizeof v); }
  void u64(std::uint64_t v) { raw(&v, sizeof v); }
  void f32(float v) { raw(&v, sizeof v); }
  void f64(double v) { raw(&v, sizeof v); }
  void f32s(std::span<const float> v) { raw(v.data(), v.size_bytes()); }
  void f64s(std::span<const double> v) { raw(v.data(), v.size_bytes()); }
  void str(std::string_view s);
  void raw(const void* p, std::size_t n);

  const std::vector<std::uint8_t>& bytes() const { return bytes_; }

 private:
  std::vector<std::uint8_t> bytes_;
};

/// Bounds-checked reader; any overrun raises ErrorCode::io with the context label.
class ByteReader {
 public:
  ByteReader(std::span<const std::uint8_t> bytes, std::string context)
      : bytes_(bytes), context_(std::move(context)) {}

  void expect_magic(std::string_view four_cc);
  std::uint8_t u8();
  std::uint32_t u32();
  std::uint64_t u64();
  float f32();
  double f64();
  void f32s(std::span<float> out);
  void f64s(std::span<double> out);
  std::string str();
  void raw(void* p, std::size_t n);

  std::size_t remaining() const { return bytes_.size() - pos_; }
  const std::string& context() const { return context_; }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
  std::string context_;
};

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
void write_text(const std::filesystem::path& path, std::string_view text);
std::string read_text(const std::filesystem::path& path);

std::uint32_t crc32(std::span<const std::uint8_t> bytes);

}  // namespace vl::io
