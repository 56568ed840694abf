#pragma once

#include <Eigen/Core>

#include <cmath>

namespace blab {

using Deriv = Eigen::Matrix<double, Eigen::Dynamic, 1, 0, 16, 1>;

// Forward-mode dual number. An empty gradient stands for zero, so constants mix freely with
// seeded variables. Storage is inline (at most 16 directions).
struct Dual {
  double v = 0.0;
  Deriv g;

  Dual() = default;
  Dual(double x) : v(x) {}
  Dual(double x, int n, int i) : v(x), g(Deriv::Zero(n)) { g(i) = 1.0; }
  Dual(double x, const Deriv& grad) : v(x), g(grad) {}

  double value() const { return v; }
  const Deriv& derivatives() const { return g; }

  Dual& operator+=(const Dual& o) { return *this = *this + o; }
  Dual& operator-=(const Dual& o) { return *this = *this - o; }
  Dual& operator*=(const Dual& o) { return *this = *this * o; }
  Dual& operator/=(const Dual& o) { return *this = *this / o; }

  friend Dual operator+(const Dual& a, const Dual& b) {
    if (b.g.size() == 0) return Dual(a.v + b.v, a.g);
    if (a.g.size() == 0) return Dual(a.v + b.v, b.g);
    return Dual(a.v + b.v, a.g + b.g);
  }
  friend Dual operator-(const Dual& a, const Dual& b) {
    if (b.g.size() == 0) return Dual(a.v - b.v, a.g);
    if (a.g.size() == 0) return Dual(a.v - b.v, -b.g);
    return Dual(a.v - b.v, a.g - b.g);
  }
  friend Dual operator-(const Dual& a) { return Dual(-a.v, -a.g); }
  friend bool operator==(const Dual& a, const Dual& b) { return a.v == b.v; }
  friend bool operator!=(const Dual& a, const Dual& b) { return a.v != b.v; }
  friend bool operator<(const Dual& a, const Dual& b) { return a.v < b.v; }
  friend bool operator>(const Dual& a, const Dual& b) { return a.v > b.v; }
  friend Dual operator*(const Dual& a, const Dual& b) {
    if (b.g.size() == 0) return Dual(a.v * b.v, a.g * b.v);
    if (a.g.size() == 0) return Dual(a.v * b.v, b.g * a.v);
    return Dual(a.v * b.v, a.g * b.v + b.g * a.v);
  }
  friend Dual operator/(const Dual& a, const Dual& b) {
    const double q = a.v / b.v;
    if (b.g.size() == 0) return Dual(q, a.g / b.v);
    if (a.g.size() == 0) return Dual(q, b.g * (-q / b.v));
    return Dual(q, (a.g - b.g * q) / b.v);
  }
};

inline Dual sqrt(const Dual& a) {
  const double s = std::sqrt(a.v);
  return Dual(s, a.g / (2.0 * s));
}
inline Dual abs(const Dual& a) { return a.v < 0 ? -a : a; }
inline Dual abs2(const Dual& a) { return a * a; }
inline Dual sin(const Dual& a) { return Dual(std::sin(a.v), a.g * std::cos(a.v)); }
inline Dual cos(const Dual& a) { return Dual(std::cos(a.v), a.g * (-std::sin(a.v))); }

}  // namespace blab

namespace Eigen {

template <>
struct NumTraits<blab::Dual> : NumTraits<double> {
  typedef blab::Dual Real;
  typedef blab::Dual NonInteger;
  typedef blab::Dual Nested;
  typedef blab::Dual Literal;
  enum {
    IsComplex = 0,
    IsInteger = 0,
    IsSigned = 1,
    RequireInitialization = 1,
    ReadCost = 1,
    AddCost = 4,
    MulCost = 4
  };
};

template <typename BinOp>
struct ScalarBinaryOpTraits<blab::Dual, double, BinOp> {
  typedef blab::Dual ReturnType;
};
template <typename BinOp>
struct ScalarBinaryOpTraits<double, blab::Dual, BinOp> {
  typedef blab::Dual ReturnType;
};

}  // namespace Eigen
