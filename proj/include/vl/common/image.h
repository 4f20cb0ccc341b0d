#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace vl {

/// Row-major single-plane grid.
template <typename T>
class Grid {
 public:
  Grid() = default;
  Grid(int width, int height, T fill = T{})
      : width_(width), height_(height), data_(static_cast<std::size_t>(width) * height, fill) {}

  int width() const { return width_; }
  int height() const { return height_; }
  bool empty() const { return data_.empty(); }
  bool contains(int x, int y) const { return x >= 0 && y >= 0 && x < width_ && y < height_; }

  T& operator()(int x, int y) { return data_[static_cast<std::size_t>(y) * width_ + x]; }
  const T& operator()(int x, int y) const { return data_[static_cast<std::size_t>(y) * width_ + x]; }

  std::vector<T>& data() { return data_; }
  const std::vector<T>& data() const { return data_; }

  bool operator==(const Grid&) const = default;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<T> data_;
};

struct Rgb {
  std::uint8_t r = 0, g = 0, b = 0;
  bool operator==(const Rgb&) const = default;
};

using ColorImage = Grid<Rgb>;
using DepthMap = Grid<float>;  // meters, 0 = invalid
using GrayImage = Grid<float>;

/// Luma in [0, 1].
GrayImage to_gray(const ColorImage& image);

/// Binary P6 with maxval 255.
std::vector<std::uint8_t> encode_ppm(const ColorImage& image);
ColorImage decode_ppm(const std::vector<std::uint8_t>& bytes, const std::string& context = "ppm");
void write_ppm(const std::filesystem::path& path, const ColorImage& image);
ColorImage read_ppm(const std::filesystem::path& path);

}  // namespace vl
