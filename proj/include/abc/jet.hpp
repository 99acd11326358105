#pragma once

#include <cmath>

#include <Eigen/Dense>

namespace abc {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;
using Mat32 = Eigen::Matrix<double, 3, 2>;

/// Second-order Taylor data of a bivariate function at one point:
/// value, both first partials and the three second partials.
template <class T>
struct Jet {
  T f, fu, fv, fuu, fuv, fvv;

  static Jet constant(const T& value, const T& zero) {
    return {value, zero, zero, zero, zero, zero};
  }
};

using ScalarJet = Jet<double>;
using Vec3Jet = Jet<Vec3>;
using Vec2Jet = Jet<Vec2>;

template <class T>
Jet<T> operator+(const Jet<T>& a, const Jet<T>& b) {
  return {a.f + b.f, a.fu + b.fu, a.fv + b.fv, a.fuu + b.fuu, a.fuv + b.fuv, a.fvv + b.fvv};
}

template <class T>
Jet<T> operator-(const Jet<T>& a, const Jet<T>& b) {
  return {a.f - b.f, a.fu - b.fu, a.fv - b.fv, a.fuu - b.fuu, a.fuv - b.fuv, a.fvv - b.fvv};
}

/// Leibniz rule for a scalar jet times a (scalar or vector) jet.
template <class T>
Jet<T> operator*(const ScalarJet& s, const Jet<T>& x) {
  return {s.f * x.f,
          s.fu * x.f + s.f * x.fu,
          s.fv * x.f + s.f * x.fv,
          s.fuu * x.f + 2.0 * s.fu * x.fu + s.f * x.fuu,
          s.fuv * x.f + s.fu * x.fv + s.fv * x.fu + s.f * x.fuv,
          s.fvv * x.f + 2.0 * s.fv * x.fv + s.f * x.fvv};
}

inline ScalarJet scale(const ScalarJet& a, double c) {
  return {c * a.f, c * a.fu, c * a.fv, c * a.fuu, c * a.fuv, c * a.fvv};
}

/// Integer power of a scalar jet, r >= 0.
inline ScalarJet pow(const ScalarJet& a, int r) {
  if (r == 0) return ScalarJet::constant(1.0, 0.0);
  const double p1 = std::pow(a.f, r - 1);
  const double p2 = r >= 2 ? std::pow(a.f, r - 2) : 0.0;
  const double c1 = r * p1;
  const double c2 = r * (r - 1) * p2;
  return {std::pow(a.f, r),
          c1 * a.fu,
          c1 * a.fv,
          c2 * a.fu * a.fu + c1 * a.fuu,
          c2 * a.fu * a.fv + c1 * a.fuv,
          c2 * a.fv * a.fv + c1 * a.fvv};
}

/// Quotient rule: x / d for a scalar denominator jet with d.f != 0.
template <class T>
Jet<T> divide(const Jet<T>& x, const ScalarJet& d) {
  // y = x / d  =>  x = y d; solve order by order.
  const double inv = 1.0 / d.f;
  Jet<T> y;
  y.f = x.f * inv;
  y.fu = (x.fu - d.fu * y.f) * inv;
  y.fv = (x.fv - d.fv * y.f) * inv;
  y.fuu = (x.fuu - 2.0 * d.fu * y.fu - d.fuu * y.f) * inv;
  y.fuv = (x.fuv - d.fu * y.fv - d.fv * y.fu - d.fuv * y.f) * inv;
  y.fvv = (x.fvv - 2.0 * d.fv * y.fv - d.fvv * y.f) * inv;
  return y;
}

/// Chain rule: outer(s,t) composed with an inner map (u,v) -> (s,t).
template <class T>
Jet<T> compose(const Jet<T>& outer, const Vec2Jet& inner) {
  const double su = inner.fu.x(), sv = inner.fv.x();
  const double tu = inner.fu.y(), tv = inner.fv.y();
  Jet<T> r;
  r.f = outer.f;
  r.fu = outer.fu * su + outer.fv * tu;
  r.fv = outer.fu * sv + outer.fv * tv;
  r.fuu = outer.fuu * (su * su) + outer.fuv * (2.0 * su * tu) + outer.fvv * (tu * tu) +
          outer.fu * inner.fuu.x() + outer.fv * inner.fuu.y();
  r.fuv = outer.fuu * (su * sv) + outer.fuv * (su * tv + sv * tu) + outer.fvv * (tu * tv) +
          outer.fu * inner.fuv.x() + outer.fv * inner.fuv.y();
  r.fvv = outer.fuu * (sv * sv) + outer.fuv * (2.0 * sv * tv) + outer.fvv * (tv * tv) +
          outer.fu * inner.fvv.x() + outer.fv * inner.fvv.y();
  return r;
}

inline Mat32 jacobian(const Vec3Jet& j) {
  Mat32 d;
  d.col(0) = j.fu;
  d.col(1) = j.fv;
  return d;
}

inline Mat2 jacobian(const Vec2Jet& j) {
  Mat2 d;
  d.col(0) = j.fu;
  d.col(1) = j.fv;
  return d;
}

}  // namespace abc
