#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace lungpipe {

/// Integer voxel index, ordered (z, y, x).
struct Index3 {
  std::int64_t z = 0;
  std::int64_t y = 0;
  std::int64_t x = 0;

  friend bool operator==(const Index3&, const Index3&) = default;
  friend auto operator<=>(const Index3&, const Index3&) = default;
};

/// Real-valued triple ordered (z, y, x); used for millimetre coordinates and spacings.
struct Vec3 {
  double z = 0.0;
  double y = 0.0;
  double x = 0.0;

  friend bool operator==(const Vec3&, const Vec3&) = default;
  Vec3 operator+(const Vec3& o) const { return {z + o.z, y + o.y, x + o.x}; }
  Vec3 operator-(const Vec3& o) const { return {z - o.z, y - o.y, x - o.x}; }
  Vec3 operator*(double s) const { return {z * s, y * s, x * s}; }
  double norm() const { return std::sqrt(z * z + y * y + x * x); }
};

inline double distance(const Vec3& a, const Vec3& b) { return (a - b).norm(); }

struct Shape3 {
  std::int64_t z = 0;
  std::int64_t y = 0;
  std::int64_t x = 0;

  friend bool operator==(const Shape3&, const Shape3&) = default;
  std::size_t count() const {
    return static_cast<std::size_t>(z) * static_cast<std::size_t>(y) *
           static_cast<std::size_t>(x);
  }
  bool contains(const Index3& i) const {
    return i.z >= 0 && i.y >= 0 && i.x >= 0 && i.z < z && i.y < y && i.x < x;
  }
};

/// Dense row-major 3D grid, x fastest.
template <typename T>
class Grid3 {
 public:
  Grid3() = default;
  explicit Grid3(Shape3 shape, T fill = T{}) : shape_(shape), data_(shape.count(), fill) {}

  const Shape3& shape() const { return shape_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::size_t offset(std::int64_t z, std::int64_t y, std::int64_t x) const {
    return (static_cast<std::size_t>(z) * static_cast<std::size_t>(shape_.y) +
            static_cast<std::size_t>(y)) *
               static_cast<std::size_t>(shape_.x) +
           static_cast<std::size_t>(x);
  }

  T& operator()(std::int64_t z, std::int64_t y, std::int64_t x) { return data_[offset(z, y, x)]; }
  const T& operator()(std::int64_t z, std::int64_t y, std::int64_t x) const {
    return data_[offset(z, y, x)];
  }
  T& operator[](const Index3& i) { return (*this)(i.z, i.y, i.x); }
  const T& operator[](const Index3& i) const { return (*this)(i.z, i.y, i.x); }

  std::span<T> values() { return data_; }
  std::span<const T> values() const { return data_; }
  std::vector<T>& storage() { return data_; }
  const std::vector<T>& storage() const { return data_; }

  friend bool operator==(const Grid3&, const Grid3&) = default;

 private:
  Shape3 shape_{};
  std::vector<T> data_;
};

}  // namespace lungpipe
