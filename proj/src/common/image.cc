#include "vl/common/image.h"

#include <cctype>
#include <fstream>
#include <string>

#include "vl/common/binary_io.h"
#include "vl/common/error.h"

namespace vl {

GrayImage to_gray(const ColorImage& image) {
  GrayImage gray(image.width(), image.height());
  for (int y = 0; y < image.height(); ++y) {
    for (int x = 0; x < image.width(); ++x) {
      const Rgb c = image(x, y);
      gray(x, y) = (0.299f * c.r + 0.587f * c.g + 0.114f * c.b) / 255.0f;
    }
  }
  return gray;
}

std::vector<std::uint8_t> encode_ppm(const ColorImage& image) {
  const std::string header =
      "P6\n" + std::to_string(image.width()) + " " + std::to_string(image.height()) + "\n255\n";
  std::vector<std::uint8_t> bytes(header.begin(), header.end());
  bytes.reserve(bytes.size() + image.data().size() * 3);
  for (const Rgb& c : image.data()) {
    bytes.push_back(c.r);
    bytes.push_back(c.g);
    bytes.push_back(c.b);
  }
  return bytes;
}

void write_ppm(const std::filesystem::path& path, const ColorImage& image) { io::write_file(path, encode_ppm(image)); }

namespace {

// Reads one whitespace-delimited header token, skipping '#' comments.
std::string next_token(const std::vector<std::uint8_t>& bytes, std::size_t& pos) {
  std::string token;
  while (pos < bytes.size()) {
    const char c = static_cast<char>(bytes[pos]);
    if (c == '#') {
      while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
    } else if (std::isspace(static_cast<unsigned char>(c))) {
      ++pos;
    } else {
      break;
    }
  }
  while (pos < bytes.size() && !std::isspace(static_cast<unsigned char>(bytes[pos]))) {
    token.push_back(static_cast<char>(bytes[pos++]));
  }
  return token;
}

}  // namespace

ColorImage read_ppm(const std::filesystem::path& path) { return decode_ppm(io::read_file(path), path.string()); }

ColorImage decode_ppm(const std::vector<std::uint8_t>& bytes, const std::string& context) {
  std::size_t pos = 0;
  if (next_token(bytes, pos) != "P6") throw Error(ErrorCode::io, context + ": not a binary PPM");
  int w = 0, h = 0, maxval = 0;
  try {
    w = std::stoi(next_token(bytes, pos));
    h = std::stoi(next_token(bytes, pos));
    maxval = std::stoi(next_token(bytes, pos));
  } catch (const std::exception&) {
    throw Error(ErrorCode::io, context + ": malformed PPM header");
  }
  if (w <= 0 || h <= 0 || maxval != 255) throw Error(ErrorCode::io, context + ": unsupported PPM");
  ++pos;  // single whitespace after maxval
  const std::size_t need = static_cast<std::size_t>(w) * h * 3;
  if (bytes.size() < pos + need) throw Error(ErrorCode::io, context + ": truncated PPM");
  ColorImage image(w, h);
  for (std::size_t i = 0; i < image.data().size(); ++i) {
    image.data()[i] = {bytes[pos + 3 * i], bytes[pos + 3 * i + 1], bytes[pos + 3 * i + 2]};
  }
  return image;
}

}  // namespace vl
