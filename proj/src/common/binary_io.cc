#include "vl/common/binary_io.h"

#include <fstream>
#include <iterator>

#include <zlib.h>

namespace vl::io {

void ByteWriter::magic(std::string_view four_cc) { raw(four_cc.data(), 4); }

void ByteWriter::str(std::string_view s) {
  u32(static_cast<std::uint32_t>(s.size()));
  raw(s.data(), s.size());
}

void ByteWriter::raw(const void* p, std::size_t n) {
  const auto* b = static_cast<const std::uint8_t*>(p);
  bytes_.insert(bytes_.end(), b, b + n);
}

void ByteReader::raw(void* p, std::size_t n) {
  if (n > remaining()) {
    throw Error(ErrorCode::io, context_ + ": unexpected end of data");
  }
  std::memcpy(p, bytes_.data() + pos_, n);
  pos_ += n;
}

void ByteReader::expect_magic(std::string_view four_cc) {
  char m[4];
  raw(m, 4);
  if (std::string_view(m, 4) != four_cc) {
    throw Error(ErrorCode::io, context_ + ": bad magic, expected " + std::string(four_cc));
  }
}

std::uint8_t ByteReader::u8() {
  std::uint8_t v;
  raw(&v, 1);
  return v;
}

std::uint32_t ByteReader::u32() {
  std::uint32_t v;
  raw(&v, sizeof v);
  return v;
}

std::uint64_t ByteReader::u64() {
  std::uint64_t v;
  raw(&v, sizeof v);
  return v;
}

float ByteReader::f32() {
  float v;
  raw(&v, sizeof v);
  return v;
}

double ByteReader::f64() {
  double v;
  raw(&v, sizeof v);
  return v;
}

void ByteReader::f32s(std::span<float> out) { raw(out.data(), out.size_bytes()); }
void ByteReader::f64s(std::span<double> out) { raw(out.data(), out.size_bytes()); }

std::string ByteReader::str() {
  const std::uint32_t n = u32();
  std::string s(n, '\0');
  raw(s.data(), n);
  return s;
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::io, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::io, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::io, "write failed for " + path.string());
}

void write_text(const std::filesystem::path& path, std::string_view text) {
  write_file(path, {reinterpret_cast<const std::uint8_t*>(text.data()), text.size()});
}

std::string read_text(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  return {bytes.begin(), bytes.end()};
}

std::uint32_t crc32(std::span<const std::uint8_t> bytes) {
  uLong crc = ::crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed in chunks for very large files.
  std::size_t pos = 0;
  while (pos < bytes.size()) {
    const std::size_t chunk = std::min<std::size_t>(bytes.size() - pos, 1u << 30);
    crc = ::crc32(crc, bytes.data() + pos, static_cast<uInt>(chunk));
    pos += chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

}  // namespace vl::io
