#pragma once

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

namespace branched {

/// Point (or displacement/velocity) in R^d with runtime dimension.
class Point {
 public:
  Point() = default;
  explicit Point(std::size_t dim, double fill = 0.0) : c_(dim, fill) {}
  Point(std::initializer_list<double> coords) : c_(coords) {}
  explicit Point(std::vector<double> coords) : c_(std::move(coords)) {}

  std::size_t dim() const noexcept { return c_.size(); }
  double& operator[](std::size_t i) { return c_[i]; }
  double operator[](std::size_t i) const { return c_[i]; }
  std::span<const double> coords() const noexcept { return c_; }
  const std::vector<double>& vec() const noexcept { return c_; }

  Point& operator+=(const Point& o) {
    assert(o.dim() == dim());
    for (std::size_t i = 0; i < c_.size(); ++i) c_[i] += o.c_[i];
    return *this;
  }
  Point& operator-=(const Point& o) {
    assert(o.dim() == dim());
    for (std::size_t i = 0; i < c_.size(); ++i) c_[i] -= o.c_[i];
    return *this;
  }
  Point& operator*=(double s) {
    for (double& x : c_) x *= s;
    return *this;
  }

  friend Point operator+(Point a, const Point& b) { return a += b; }
  friend Point operator-(Point a, const Point& b) { return a -= b; }
  friend Point operator*(Point a, double s) { return a *= s; }
  friend Point operator*(double s, Point a) { return a *= s; }
  friend bool operator==(const Point&, const Point&) = default;

  double norm_squared() const noexcept {
    double s = 0.0;
    for (double x : c_) s += x * x;
    return s;
  }
  double norm() const noexcept { return std::sqrt(norm_squared()); }

 private:
  std::vector<double> c_;
};

inline double dot(const Point& a, const Point& b) {
  assert(a.dim() == b.dim());
  double s = 0.0;
  for (std::size_t i = 0; i < a.dim(); ++i) s += a[i] * b[i];
  return s;
}

inline double distance(const Point& a, const Point& b) {
  assert(a.dim() == b.dim());
  double s = 0.0;
  for (std::size_t i = 0; i < a.dim(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return std::sqrt(s);
}

/// a + s (b - a)
inline Point lerp(const Point& a, const Point& b, double s) {
  Point r(a.dim());
  for (std::size_t i = 0; i < a.dim(); ++i) r[i] = a[i] + s * (b[i] - a[i]);
  return r;
}

/// Lexicographic order on coordinates; used for deterministic sorting only.
inline bool lex_less(const Point& a, const Point& b) {
  return std::lexicographical_compare(a.vec().begin(), a.vec().end(), b.vec().begin(),
                                      b.vec().end());
}

/// Distance from p to the segment [a, b] and the clamped parameter of the
/// closest point.
struct SegmentProjection {
  double distance;
  double param;
};

inline SegmentProjection project_on_segment(const Point& p, const Point& a, const Point& b) {
  const Point ab = b - a;
  const double len2 = ab.norm_squared();
  double s = 0.0;
  if (len2 > 0.0) s = std::clamp(dot(p - a, ab) / len2, 0.0, 1.0);
  return {distance(p, lerp(a, b, s)), s};
}

}  // namespace branched
