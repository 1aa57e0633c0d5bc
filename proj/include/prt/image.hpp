#pragma once

#include <Eigen/Core>

namespace prt {

// Row-major pixel grid with a fixed channel count. Pixel (x, y) is column
// y * width + x of the underlying Channels x (width * height) matrix, so whole
// images compose with ordinary Eigen expressions.
template <int Channels>
class Image {
 public:
  using Storage = Eigen::Matrix<double, Channels, Eigen::Dynamic>;
  using Pixel = Eigen::Matrix<double, Channels, 1>;

  Image() = default;
  Image(int width, int height, double fill = 0.0)
      : width_(width), height_(height),
        data_(Storage::Constant(Channels, static_cast<Eigen::Index>(width) * height, fill)) {}

  int width() const { return width_; }
  int height() const { return height_; }
  Eigen::Index size() const { return data_.cols(); }
  bool empty() const { return data_.cols() == 0; }
  static constexpr int channels() { return Channels; }

  auto pixel(int x, int y) { return data_.col(index(x, y)); }
  auto pixel(int x, int y) const { return data_.col(index(x, y)); }
  Eigen::Index index(int x, int y) const {
    return static_cast<Eigen::Index>(y) * width_ + x;
  }

  Storage& data() { return data_; }
  const Storage& data() const { return data_; }

  bool operator==(const Image& other) const {
    return width_ == other.width_ && height_ == other.height_ && data_ == other.data_;
  }

 private:
  int width_ = 0;
  int height_ = 0;
  Storage data_;
};

using Image1 = Image<1>;
using Image3 = Image<3>;

inline double luminance(const Eigen::Vector3d& rgb) {
  return 0.2126 * rgb.x() + 0.7152 * rgb.y() + 0.0722 * rgb.z();
}

}  // namespace prt
