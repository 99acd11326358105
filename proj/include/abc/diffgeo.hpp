#pragma once

// Frames, fundamental forms and the ambient curvature tensor of a surface.
// Everything works on second-order jets so that the same code serves
// splines, rational blends and closed-form test surfaces.

#include <algorithm>
#include <cmath>

#include <Eigen/Dense>

#include "abc/error.hpp"
#include "abc/jet.hpp"

namespace abc {

struct SurfaceFrame {
  Vec3 point;
  Mat32 jacobian;
  Vec3 normal;
};

/// Symmetric 3x3 tensor E = D G^-1 B G^-1 D^T; it maps tangent vectors to
/// the derivative of the normal (up to sign) and annihilates the normal.
struct CurvatureTensor {
  Mat3 matrix = Mat3::Zero();
};

struct Curvatures {
  double gaussian = 0.0;
  double mean = 0.0;
};

inline SurfaceFrame frame(const Vec3Jet& j) {
  const Vec3 c = j.fu.cross(j.fv);
  const double len = c.norm();
  if (len < 1e-12) throw numerical_error("diffgeo", "degenerate frame: Jacobian columns are dependent");
  return {j.f, jacobian(j), c / len};
}

/// First and second fundamental forms.
struct FundamentalForms {
  Mat2 g;
  Mat2 b;
};

inline FundamentalForms fundamental_forms(const Vec3Jet& j) {
  const SurfaceFrame fr = frame(j);
  FundamentalForms ff;
  ff.g = fr.jacobian.transpose() * fr.jacobian;
  ff.b << fr.normal.dot(j.fuu), fr.normal.dot(j.fuv), fr.normal.dot(j.fuv), fr.normal.dot(j.fvv);
  return ff;
}

/// Shape operator S = G^-1 B in coordinates.
inline Mat2 shape_operator(const Vec3Jet& j) {
  const auto ff = fundamental_forms(j);
  return ff.g.inverse() * ff.b;
}

inline CurvatureTensor curvature_tensor(const Vec3Jet& j) {
  const auto fr = frame(j);
  const auto ff = fundamental_forms(j);
  const Mat2 gi = ff.g.inverse();
  CurvatureTensor e;
  e.matrix = fr.jacobian * gi * ff.b * gi * fr.jacobian.transpose();
  e.matrix = 0.5 * (e.matrix + e.matrix.transpose()).eval();
  return e;
}

/// K and H from the 2x2 shape operator.
inline Curvatures gaussian_mean(const Vec3Jet& j) {
  const auto ff = fundamental_forms(j);
  return {ff.b.determinant() / ff.g.determinant(), 0.5 * (ff.g.inverse() * ff.b).trace()};
}

/// K and H from the tangential eigenvalues of the ambient tensor.
inline Curvatures gaussian_mean(const CurvatureTensor& e, const Vec3& normal) {
  // Restrict to an orthonormal tangent basis.
  Vec3 t1 = normal.unitOrthogonal();
  Vec3 t2 = normal.cross(t1);
  Eigen::Matrix<double, 3, 2> t;
  t << t1, t2;
  const Mat2 m = t.transpose() * e.matrix * t;
  const Eigen::SelfAdjointEigenSolver<Mat2> es(m);
  const auto k = es.eigenvalues();
  return {k[0] * k[1], 0.5 * (k[0] + k[1])};
}

inline double isophote_value(const SurfaceFrame& f, const Vec3& light) { return f.normal.dot(light); }

/// Compare normals up to a global sign; returns the angle and the sign that
/// realizes it (+1 when orientations agree).
struct OrientedComparison {
  double normal_angle = 0.0;
  double tensor_diff = 0.0;
  int sign = 1;
};

inline OrientedComparison compare_oriented(const Vec3& n1, const CurvatureTensor& e1, const Vec3& n2,
                                           const CurvatureTensor& e2) {
  const double c = std::clamp(n1.dot(n2), -1.0, 1.0);
  OrientedComparison out;
  out.sign = c >= 0 ? 1 : -1;
  out.normal_angle = std::atan2(n1.cross(n2).norm(), std::abs(n1.dot(n2)));
  // E changes sign with the normal (B = <n, d2 s>).
  out.tensor_diff = (e1.matrix - out.sign * e2.matrix).norm();
  return out;
}

}  // namespace abc
