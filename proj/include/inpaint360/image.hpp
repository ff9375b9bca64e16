#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "inpaint360/errors.hpp"

namespace inpaint360 {

// Row-major interleaved image. Pixel (x, y) channel c lives at
// ((y * width + x) * channels + c).
template <typename T>
class Image {
 public:
  Image() = default;
  Image(int width, int height, int channels, T fill = T{})
      : width_(width),
        height_(height),
        channels_(channels),
        data_(static_cast<std::size_t>(width) * height * channels, fill) {}

  int width() const { return width_; }
  int height() const { return height_; }
  int channels() const { return channels_; }
  std::size_t pixel_count() const { return static_cast<std::size_t>(width_) * height_; }
  bool empty() const { return data_.empty(); }

  T& at(int x, int y, int c = 0) { return data_[index(x, y, c)]; }
  const T& at(int x, int y, int c = 0) const { return data_[index(x, y, c)]; }

  bool contains(int x, int y) const { return x >= 0 && y >= 0 && x < width_ && y < height_; }

  std::span<T> data() { return data_; }
  std::span<const T> data() const { return data_; }
  std::vector<T>& storage() { return data_; }
  const std::vector<T>& storage() const { return data_; }

  bool same_shape(const Image& o) const {
    return width_ == o.width_ && height_ == o.height_ && channels_ == o.channels_;
  }
  template <typename U>
  bool same_size(const Image<U>& o) const {
    return width_ == o.width() && height_ == o.height();
  }

  bool operator==(const Image&) const = default;

 private:
  std::size_t index(int x, int y, int c) const {
    return (static_cast<std::size_t>(y) * width_ + x) * channels_ + c;
  }

  int width_ = 0;
  int height_ = 0;
  int channels_ = 0;
  std::vector<T> data_;
};

using RgbImage = Image<float>;        // 3 channels in [0, 1]
using DepthImage = Image<double>;     // 1 channel; +inf where nothing was hit
using Mask = Image<std::uint8_t>;     // 1 channel; exactly 0 or 1
using IdImage = Image<std::uint8_t>;  // 1 channel; 0 = background

template <typename A, typename B>
void require_same_size(const Image<A>& a, const Image<B>& b, const std::string& what) {
  if (a.width() != b.width() || a.height() != b.height())
    throw DimensionMismatch(what + ": " + std::to_string(a.width()) + "x" +
                            std::to_string(a.height()) + " vs " + std::to_string(b.width()) +
                            "x" + std::to_string(b.height()));
}

inline std::size_t mask_area(const Mask& m) {
  std::size_t n = 0;
  for (auto v : m.data()) n += v != 0;
  return n;
}

inline double mask_iou(const Mask& a, const Mask& b) {
  require_same_size(a, b, "mask_iou");
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < a.data().size(); ++i) {
    const bool x = a.data()[i] != 0, y = b.data()[i] != 0;
    inter += x && y;
    uni += x || y;
  }
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

}  // namespace inpaint360
