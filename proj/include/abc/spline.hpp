#pragma once

// Tensor-product polynomial B-splines over clamped knot vectors.
//
// Evaluation outside the natural domain prolongs the boundary polynomial
// pieces, so every spline is a total function on R^2.  Arithmetic (sum,
// product, power) is exact: operands are split into Bernstein pieces over the
// merged breakpoints, combined per piece, and re-assembled into a B-spline
// whose knot multiplicities reflect the actual continuity of the result.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "abc/error.hpp"
#include "abc/jet.hpp"

namespace abc {

/// Absolute tolerance used when merging or comparing knot values.
inline constexpr double kKnotTol = 1e-12;

enum class Dir { U = 0, V = 1 };

/// Coordinate degree of a bivariate polynomial or spline.
struct DegreePair {
  int u = 0;
  int v = 0;

  friend bool operator==(const DegreePair&, const DegreePair&) = default;
  friend DegreePair operator+(DegreePair a, DegreePair b) { return {a.u + b.u, a.v + b.v}; }
  friend DegreePair operator*(int k, DegreePair a) { return {k * a.u, k * a.v}; }
  int total() const { return u + v; }
};

inline DegreePair max(DegreePair a, DegreePair b) { return {std::max(a.u, b.u), std::max(a.v, b.v)}; }

inline bool operator<=(DegreePair a, DegreePair b) { return a.u <= b.u && a.v <= b.v; }

inline std::string to_string(DegreePair d) {
  return "[" + std::to_string(d.u) + "," + std::to_string(d.v) + "]";
}

/// Axis-aligned rectangle [u0,u1] x [v0,v1].
struct Rect {
  double u0 = 0, u1 = 1, v0 = 0, v1 = 1;

  bool contains(const Vec2& p, double tol = 0.0) const {
    return p.x() >= u0 - tol && p.x() <= u1 + tol && p.y() >= v0 - tol && p.y() <= v1 + tol;
  }
  Vec2 center() const { return {0.5 * (u0 + u1), 0.5 * (v0 + v1)}; }
  double width() const { return u1 - u0; }
  double height() const { return v1 - v0; }
};

// ---------------------------------------------------------------------------
// Knot vectors

class KnotVector {
 public:
  KnotVector() = default;

  KnotVector(int degree, std::vector<double> knots) : degree_(degree), knots_(std::move(knots)) {
    validate();
  }

  /// Clamped knot vector without inner knots.
  static KnotVector bezier(int degree, double lo, double hi) {
    std::vector<double> k(degree + 1, lo);
    k.insert(k.end(), degree + 1, hi);
    return KnotVector(degree, std::move(k));
  }

  /// Clamped knot vector with `spans` equal spans and simple inner knots.
  static KnotVector uniform(int degree, double lo, double hi, int spans) {
    std::vector<double> k(degree + 1, lo);
    for (int i = 1; i < spans; ++i) k.push_back(lo + (hi - lo) * i / spans);
    k.insert(k.end(), degree + 1, hi);
    return KnotVector(degree, std::move(k));
  }

  /// Clamped knot vector with the given inner knots (each simple).
  static KnotVector with_inner(int degree, double lo, double hi, const std::vector<double>& inner) {
    std::vector<double> k(degree + 1, lo);
    k.insert(k.end(), inner.begin(), inner.end());
    k.insert(k.end(), degree + 1, hi);
    return KnotVector(degree, std::move(k));
  }

  int degree() const { return degree_; }
  const std::vector<double>& knots() const { return knots_; }
  /// Number of B-spline basis functions.
  int size() const { return static_cast<int>(knots_.size()) - degree_ - 1; }
  double lo() const { return knots_[degree_]; }
  double hi() const { return knots_[knots_.size() - 1 - degree_]; }

  /// Knot span index i (degree <= i < size()) with a nonempty interval
  /// [k_i, k_{i+1}) containing u.  Values outside the domain select the
  /// boundary spans, which realizes prolongation of the end pieces.
  int span(double u) const {
    const int n = size();
    int i = static_cast<int>(std::upper_bound(knots_.begin(), knots_.end(), u) - knots_.begin()) - 1;
    i = std::clamp(i, degree_, n - 1);
    while (i > degree_ && knots_[i] == knots_[i + 1]) --i;
    while (i < n - 1 && knots_[i] == knots_[i + 1]) ++i;
    return i;
  }

  /// Basis values and derivatives up to `nder` of the p+1 functions that are
  /// nonzero on span `i`, evaluated at u (any real u; the polynomial pieces
  /// of span i are used).  Row k holds the k-th derivatives.
  Eigen::MatrixXd basis(int i, double u, int nder) const {
    const int p = degree_;
    Eigen::MatrixXd ders = Eigen::MatrixXd::Zero(nder + 1, p + 1);
    Eigen::MatrixXd ndu(p + 1, p + 1);
    std::vector<double> left(p + 1), right(p + 1);
    ndu(0, 0) = 1.0;
    for (int j = 1; j <= p; ++j) {
      left[j] = u - knots_[i + 1 - j];
      right[j] = knots_[i + j] - u;
      double saved = 0.0;
      for (int r = 0; r < j; ++r) {
        ndu(j, r) = right[r + 1] + left[j - r];
        const double temp = ndu(r, j - 1) / ndu(j, r);
        ndu(r, j) = saved + right[r + 1] * temp;
        saved = left[j - r] * temp;
      }
      ndu(j, j) = saved;
    }
    for (int j = 0; j <= p; ++j) ders(0, j) = ndu(j, p);
    if (nder == 0) return ders;
    Eigen::MatrixXd a(2, p + 1);
    for (int r = 0; r <= p; ++r) {
      int s1 = 0, s2 = 1;
      a(0, 0) = 1.0;
      for (int k = 1; k <= nder; ++k) {
        double d = 0.0;
        const int rk = r - k, pk = p - k;
        if (r >= k) {
          a(s2, 0) = a(s1, 0) / ndu(pk + 1, rk);
          d = a(s2, 0) * ndu(rk, pk);
        }
        const int j1 = rk >= -1 ? 1 : -rk;
        const int j2 = (r - 1 <= pk) ? k - 1 : p - r;
        for (int j = j1; j <= j2; ++j) {
          a(s2, j) = (a(s1, j) - a(s1, j - 1)) / ndu(pk + 1, rk + j);
          d += a(s2, j) * ndu(rk + j, pk);
        }
        if (r <= pk) {
          a(s2, k) = -a(s1, k - 1) / ndu(pk + 1, r);
          d += a(s2, k) * ndu(r, pk);
        }
        ders(k, r) = d;
        std::swap(s1, s2);
      }
    }
    double fac = p;
    for (int k = 1; k <= nder; ++k) {
      ders.row(k) *= (k <= p ? fac : 0.0);
      fac *= (p - k);
    }
    return ders;
  }

  /// Distinct knot values, ends included.
  std::vector<double> breaks() const {
    std::vector<double> b;
    for (int i = degree_; i <= size(); ++i)
      if (b.empty() || knots_[i] > b.back() + kKnotTol) b.push_back(knots_[i]);
    return b;
  }

  /// Distinct inner knot values.
  std::vector<double> inner_knots() const {
    auto b = breaks();
    if (b.size() <= 2) return {};
    return {b.begin() + 1, b.end() - 1};
  }

  int multiplicity(double u) const {
    return static_cast<int>(std::count_if(knots_.begin(), knots_.end(),
                                          [&](double k) { return std::abs(k - u) <= kKnotTol; }));
  }

  /// Support [k_i, k_{i+p+1}] of basis function i.
  std::pair<double, double> support(int i) const { return {knots_[i], knots_[i + degree_ + 1]}; }

  std::vector<double> greville() const {
    std::vector<double> g(size());
    for (int i = 0; i < size(); ++i) {
      double s = 0.0;
      for (int k = 1; k <= degree_; ++k) s += knots_[i + k];
      g[i] = degree_ == 0 ? 0.5 * (knots_[i] + knots_[i + 1]) : s / degree_;
    }
    return g;
  }

  friend bool operator==(const KnotVector& a, const KnotVector& b) {
    return a.degree_ == b.degree_ && a.knots_ == b.knots_;
  }

 private:
  void validate() const {
    const std::string stage = "spline_core";
    if (degree_ < 0) throw validation_error(stage, "negative degree");
    const int p = degree_;
    if (static_cast<int>(knots_.size()) < 2 * p + 2)
      throw validation_error(stage, "knot vector too short for degree " + std::to_string(p));
    for (std::size_t i = 1; i < knots_.size(); ++i)
      if (knots_[i] < knots_[i - 1]) throw validation_error(stage, "knots not nondecreasing");
    for (int i = 1; i <= p; ++i)
      if (knots_[i] != knots_[0] || knots_[knots_.size() - 1 - i] != knots_.back())
        throw validation_error(stage, "knot vector is not clamped");
    if (!(lo() < hi())) throw validation_error(stage, "empty natural domain");
    for (double k : inner_knots())
      if (multiplicity(k) > p + 1)
        throw validation_error(stage, "knot multiplicity exceeds degree+1 at " + std::to_string(k));
  }

  int degree_ = 0;
  std::vector<double> knots_{0.0, 1.0};
};

// ---------------------------------------------------------------------------
// Bernstein helpers (coefficient blocks of single polynomial pieces)

namespace bernstein {

inline double binom(int n, int k) {
  if (k < 0 || k > n) return 0.0;
  double r = 1.0;
  for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

/// Product of two bivariate Bernstein blocks on the same rectangle.
inline Eigen::MatrixXd multiply(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  const int pa = static_cast<int>(a.rows()) - 1, qa = static_cast<int>(a.cols()) - 1;
  const int pb = static_cast<int>(b.rows()) - 1, qb = static_cast<int>(b.cols()) - 1;
  const int p = pa + pb, q = qa + qb;
  Eigen::MatrixXd c = Eigen::MatrixXd::Zero(p + 1, q + 1);
  std::vector<double> bu(p + 1), bv(q + 1);
  for (int i = 0; i <= p; ++i) bu[i] = binom(p, i);
  for (int j = 0; j <= q; ++j) bv[j] = binom(q, j);
  Eigen::MatrixXd as(pa + 1, qa + 1), bs(pb + 1, qb + 1);
  for (int i = 0; i <= pa; ++i)
    for (int j = 0; j <= qa; ++j) as(i, j) = a(i, j) * binom(pa, i) * binom(qa, j);
  for (int i = 0; i <= pb; ++i)
    for (int j = 0; j <= qb; ++j) bs(i, j) = b(i, j) * binom(pb, i) * binom(qb, j);
  for (int i = 0; i <= pa; ++i)
    for (int j = 0; j <= qa; ++j) {
      const double x = as(i, j);
      if (x == 0.0) continue;
      for (int k = 0; k <= pb; ++k)
        for (int l = 0; l <= qb; ++l) c(i + k, j + l) += x * bs(k, l);
    }
  for (int i = 0; i <= p; ++i)
    for (int j = 0; j <= q; ++j) c(i, j) /= bu[i] * bv[j];
  return c;
}

/// Degree elevation matrix mapping degree-p coefficients to degree-m ones.
inline Eigen::MatrixXd elevation_matrix(int p, int m) {
  Eigen::MatrixXd e = Eigen::MatrixXd::Zero(m + 1, p + 1);
  for (int i = 0; i <= m; ++i)
    for (int k = std::max(0, i - (m - p)); k <= std::min(p, i); ++k)
      e(i, k) = binom(p, k) * binom(m - p, i - k) / binom(m, i);
  return e;
}

inline Eigen::MatrixXd elevate(const Eigen::MatrixXd& a, int p, int q) {
  const int pa = static_cast<int>(a.rows()) - 1, qa = static_cast<int>(a.cols()) - 1;
  return elevation_matrix(pa, p) * a * elevation_matrix(qa, q).transpose();
}

/// Coefficients (rows) of the same polynomial re-expressed on the local
/// parameter interval [t0, t1] (t in units of the current interval; values
/// outside [0,1] extrapolate exactly).  Computed via the blossom.
inline Eigen::MatrixXd reparam_rows(const Eigen::MatrixXd& c, double t0, double t1) {
  const int p = static_cast<int>(c.rows()) - 1;
  Eigen::MatrixXd out(p + 1, c.cols());
  std::vector<double> args(p);
  for (int k = 0; k <= p; ++k) {
    for (int i = 0; i < p; ++i) args[i] = i < p - k ? t0 : t1;
    Eigen::MatrixXd w = c;
    for (int r = 1; r <= p; ++r) {
      const double t = args[r - 1];
      for (int i = 0; i <= p - r; ++i) w.row(i) = (1.0 - t) * w.row(i) + t * w.row(i + 1);
    }
    out.row(k) = w.row(0);
  }
  return out;
}

/// Bernstein basis values of degree p at t in [0,1] (any t).
inline Eigen::VectorXd basis(int p, double t) {
  Eigen::VectorXd b(p + 1);
  for (int i = 0; i <= p; ++i) b[i] = binom(p, i) * std::pow(t, i) * std::pow(1.0 - t, p - i);
  return b;
}

/// Smallest degree in each direction that represents the block, using
/// vanishing finite differences of the Bernstein coefficients.
inline DegreePair effective_degree(const Eigen::MatrixXd& a, double rel_tol = 1e-10) {
  const double scale = std::max(a.cwiseAbs().maxCoeff(), std::numeric_limits<double>::min());
  auto deg_rows = [&](const Eigen::MatrixXd& m) {
    const int p = static_cast<int>(m.rows()) - 1;
    // Degree <= k iff the (k+1)-th differences of the degree-p coefficients
    // vanish; differences are scaled so that they are derivative values.
    Eigen::MatrixXd d = m;
    int deg = p;
    std::vector<bool> zero(p + 2, false);
    for (int order = 1; order <= p; ++order) {
      Eigen::MatrixXd nd(d.rows() - 1, d.cols());
      for (int i = 0; i + 1 < d.rows(); ++i) nd.row(i) = d.row(i + 1) - d.row(i);
      d = nd;
      zero[order] = d.cwiseAbs().maxCoeff() <= rel_tol * scale * std::pow(2.0, order);
    }
    for (int k = p - 1; k >= 0; --k) {
      if (zero[k + 1]) deg = k;
      else break;
    }
    return deg;
  };
  return {deg_rows(a), deg_rows(a.transpose())};
}

/// Express a block in the lower degree (du, dv); the caller guarantees
/// exact representability (see effective_degree).
inline Eigen::MatrixXd reduce(const Eigen::MatrixXd& a, int du, int dv) {
  const int p = static_cast<int>(a.rows()) - 1, q = static_cast<int>(a.cols()) - 1;
  const Eigen::MatrixXd eu = elevation_matrix(du, p), ev = elevation_matrix(dv, q);
  const Eigen::MatrixXd x = eu.colPivHouseholderQr().solve(a);
  return ev.colPivHouseholderQr().solve(x.transpose()).transpose();
}

/// Chebyshev points of the first kind mapped to [0,1] (n points).
inline std::vector<double> chebyshev01(int n) {
  std::vector<double> t(n);
  if (n == 1) {
    t[0] = 0.5;
    return t;
  }
  for (int i = 0; i < n; ++i) t[i] = 0.5 - 0.5 * std::cos(std::numbers::pi * (2.0 * i + 1.0) / (2.0 * n));
  return t;
}

}  // namespace bernstein

// ---------------------------------------------------------------------------
// 1D operations on coefficient rows (each column is an independent spline)

namespace rows {

/// Boehm insertion of u into (kv, c); returns the refined pair.
inline std::pair<KnotVector, Eigen::MatrixXd> insert(const KnotVector& kv, const Eigen::MatrixXd& c,
                                                     double u) {
  const int p = kv.degree();
  const auto& U = kv.knots();
  if (!(u > kv.lo() - kKnotTol && u < kv.hi() + kKnotTol))
    throw validation_error("spline_core", "knot " + std::to_string(u) + " outside natural domain");
  if (u <= kv.lo() || u >= kv.hi())
    throw validation_error("spline_core", "knot at domain end has full multiplicity already");
  if (kv.multiplicity(u) >= p + 1)
    throw validation_error("spline_core", "multiplicity would exceed degree+1 at " + std::to_string(u));
  const int n = kv.size();
  const int k = static_cast<int>(std::upper_bound(U.begin(), U.end(), u) - U.begin()) - 1;
  Eigen::MatrixXd q(n + 1, c.cols());
  for (int i = 0; i <= k - p; ++i) q.row(i) = c.row(i);
  for (int i = std::max(k - p + 1, 0); i <= k; ++i) {
    const double a = (u - U[i]) / (U[i + p] - U[i]);
    q.row(i) = a * c.row(i) + (1.0 - a) * c.row(i - 1);
  }
  for (int i = k + 1; i <= n; ++i) q.row(i) = c.row(i - 1);
  std::vector<double> nk(U);
  nk.insert(nk.begin() + k + 1, u);
  return {KnotVector(p, std::move(nk)), std::move(q)};
}

/// Insert every value of `breaks` (inner values only) until it has
/// multiplicity `target` (capped at the degree).
inline std::pair<KnotVector, Eigen::MatrixXd> refine_to(const KnotVector& kv, const Eigen::MatrixXd& c,
                                                        const std::vector<double>& breaks, int target) {
  KnotVector k = kv;
  Eigen::MatrixXd m = c;
  for (double b : breaks) {
    if (b <= kv.lo() + kKnotTol || b >= kv.hi() - kKnotTol) continue;
    // Snap to an existing knot within tolerance.
    double val = b;
    for (double e : k.knots())
      if (std::abs(e - b) <= kKnotTol) val = e;
    while (k.multiplicity(val) < std::min(target, k.degree())) std::tie(k, m) = insert(k, m, val);
  }
  return {k, m};
}

/// Derivative of the row splines.
inline std::pair<KnotVector, Eigen::MatrixXd> derivative(const KnotVector& kv, const Eigen::MatrixXd& c) {
  const int p = kv.degree();
  const auto& U = kv.knots();
  if (p == 0) {
    return {KnotVector(0, {kv.lo(), kv.hi()}), Eigen::MatrixXd::Zero(1, c.cols())};
  }
  const int n = kv.size();
  Eigen::MatrixXd d(n - 1, c.cols());
  for (int i = 0; i < n - 1; ++i) {
    const double den = U[i + p + 1] - U[i + 1];
    if (den > 0) d.row(i) = (p / den) * (c.row(i + 1) - c.row(i));
    else d.row(i).setZero();
  }
  return {KnotVector(p - 1, std::vector<double>(U.begin() + 1, U.end() - 1)), std::move(d)};
}

/// Index of the first coefficient row of the Bernstein block for the span
/// starting at knot index i (after extraction to multiplicity p).
inline int block_start(const KnotVector& kv, int span) { return span - kv.degree(); }

/// Matrix T with  fine = T * coarse  for a refinement coarse -> fine.
inline Eigen::MatrixXd refinement_matrix(const KnotVector& coarse, const std::vector<double>& breaks,
                                         int target) {
  Eigen::MatrixXd id = Eigen::MatrixXd::Identity(coarse.size(), coarse.size());
  return refine_to(coarse, id, breaks, target).second;
}

}  // namespace rows

// ---------------------------------------------------------------------------
// Scalar bivariate spline

class Spline2 {
 public:
  Spline2() : ku_(KnotVector::bezier(0, 0, 1)), kv_(KnotVector::bezier(0, 0, 1)), c_(Eigen::MatrixXd::Zero(1, 1)) {}

  Spline2(KnotVector ku, KnotVector kv, Eigen::MatrixXd coeffs)
      : ku_(std::move(ku)), kv_(std::move(kv)), c_(std::move(coeffs)) {
    if (c_.rows() != ku_.size() || c_.cols() != kv_.size())
      throw validation_error("spline_core", "coefficient grid " + std::to_string(c_.rows()) + "x" +
                                                std::to_string(c_.cols()) + " does not match basis " +
                                                std::to_string(ku_.size()) + "x" + std::to_string(kv_.size()));
  }

  static Spline2 constant(double value, const Rect& dom) {
    return {KnotVector::bezier(0, dom.u0, dom.u1), KnotVector::bezier(0, dom.v0, dom.v1),
            Eigen::MatrixXd::Constant(1, 1, value)};
  }

  /// Affine function a + b*u + c*v as a bilinear Bezier patch over dom.
  static Spline2 affine(double a, double bu, double bv, const Rect& dom) {
    Eigen::MatrixXd c(2, 2);
    c(0, 0) = a + bu * dom.u0 + bv * dom.v0;
    c(1, 0) = a + bu * dom.u1 + bv * dom.v0;
    c(0, 1) = a + bu * dom.u0 + bv * dom.v1;
    c(1, 1) = a + bu * dom.u1 + bv * dom.v1;
    return {KnotVector::bezier(1, dom.u0, dom.u1), KnotVector::bezier(1, dom.v0, dom.v1), c};
  }

  const KnotVector& knots(Dir d) const { return d == Dir::U ? ku_ : kv_; }
  const KnotVector& knots_u() const { return ku_; }
  const KnotVector& knots_v() const { return kv_; }
  const Eigen::MatrixXd& coeffs() const { return c_; }
  DegreePair degree() const { return {ku_.degree(), kv_.degree()}; }
  Rect domain() const { return {ku_.lo(), ku_.hi(), kv_.lo(), kv_.hi()}; }

  double operator()(const Vec2& s) const { return eval(s); }

  double eval(const Vec2& s) const { return eval_piece(s, ku_.span(s.x()), kv_.span(s.y())); }

  /// Evaluate the polynomial piece of the given spans at s.
  double eval_piece(const Vec2& s, int su, int sv) const {
    const Eigen::MatrixXd bu = ku_.basis(su, s.x(), 0), bv = kv_.basis(sv, s.y(), 0);
    const int p = ku_.degree(), q = kv_.degree();
    return (bu.row(0) * c_.block(su - p, sv - q, p + 1, q + 1) * bv.row(0).transpose())(0, 0);
  }

  ScalarJet jet(const Vec2& s) const { return jet_piece(s, ku_.span(s.x()), kv_.span(s.y())); }

  ScalarJet jet_piece(const Vec2& s, int su, int sv) const {
    const Eigen::MatrixXd bu = ku_.basis(su, s.x(), 2), bv = kv_.basis(sv, s.y(), 2);
    const int p = ku_.degree(), q = kv_.degree();
    const Eigen::MatrixXd m = bu * c_.block(su - p, sv - q, p + 1, q + 1) * bv.transpose();
    return {m(0, 0), m(1, 0), m(0, 1), m(2, 0), m(1, 1), m(0, 2)};
  }

  /// Exact partial derivative spline of the given order.
  Spline2 partial(Dir d, int order = 1) const {
    if (order > degree_in(d)) {
      const Rect r = domain();
      return constant(0.0, r);
    }
    KnotVector k = knots(d);
    Eigen::MatrixXd m = d == Dir::U ? c_ : Eigen::MatrixXd(c_.transpose());
    for (int i = 0; i < order; ++i) std::tie(k, m) = rows::derivative(k, m);
    return d == Dir::U ? Spline2(k, kv_, m) : Spline2(ku_, k, m.transpose());
  }

  /// Boehm knot insertion; the result is pointwise identical.
  Spline2 insert_knot(Dir d, double u) const {
    if (d == Dir::U) {
      auto [k, m] = rows::insert(ku_, c_, u);
      return {k, kv_, m};
    }
    auto [k, m] = rows::insert(kv_, c_.transpose(), u);
    return {ku_, k, m.transpose()};
  }

  /// Insert all given breaks in each direction up to multiplicity `target`
  /// (capped at the degree).
  Spline2 refined(const std::vector<double>& bu, const std::vector<double>& bv, int target_u,
                  int target_v) const {
    auto [ku, m] = rows::refine_to(ku_, c_, bu, target_u);
    auto [kv, mt] = rows::refine_to(kv_, m.transpose(), bv, target_v);
    return {ku, kv, mt.transpose()};
  }

  /// Full Bezier extraction: every inner knot gets multiplicity = degree.
  Spline2 extracted() const {
    return refined(ku_.inner_knots(), kv_.inner_knots(), ku_.degree(), kv_.degree());
  }

  /// Bernstein coefficients of the polynomial piece (su, sv) re-expressed on
  /// the rectangle `cell` (which may extend beyond the span, prolonging it).
  Eigen::MatrixXd bernstein_on(const Rect& cell, int su, int sv) const;

  /// Bernstein coefficients on `cell` using the piece containing its center.
  Eigen::MatrixXd bernstein_on(const Rect& cell) const {
    const Vec2 c = cell.center();
    return bernstein_on(cell, ku_.span(c.x()), kv_.span(c.y()));
  }

  Spline2 scaled(double s) const { return {ku_, kv_, s * c_}; }
  Spline2 negated() const { return scaled(-1.0); }

  /// Copy with replaced coefficients (same knots).
  Spline2 with_coeffs(Eigen::MatrixXd c) const { return {ku_, kv_, std::move(c)}; }

 private:
  int degree_in(Dir d) const { return d == Dir::U ? ku_.degree() : kv_.degree(); }

  KnotVector ku_, kv_;
  Eigen::MatrixXd c_;
};

namespace detail {

/// Bernstein rows of the span starting at knot index `span` of (kv, c):
/// insert the span's end knots to multiplicity p and read the block.
inline Eigen::MatrixXd span_rows(const KnotVector& kv, const Eigen::MatrixXd& c, int span) {
  const int p = kv.degree();
  const double a = kv.knots()[span], b = kv.knots()[span + 1];
  auto [k, m] = rows::refine_to(kv, c, {a, b}, p);
  const int s = k.span(0.5 * (a + b));
  return m.middleRows(s - p, p + 1);
}

}  // namespace detail

inline Eigen::MatrixXd Spline2::bernstein_on(const Rect& cell, int su, int sv) const {
  const double a0 = ku_.knots()[su], a1 = ku_.knots()[su + 1];
  const double b0 = kv_.knots()[sv], b1 = kv_.knots()[sv + 1];
  Eigen::MatrixXd m = detail::span_rows(ku_, c_, su);
  m = bernstein::reparam_rows(m, (cell.u0 - a0) / (a1 - a0), (cell.u1 - a0) / (a1 - a0));
  Eigen::MatrixXd mt = detail::span_rows(kv_, m.transpose(), sv);
  mt = bernstein::reparam_rows(mt, (cell.v0 - b0) / (b1 - b0), (cell.v1 - b0) / (b1 - b0));
  return mt.transpose();
}

/// Evaluate a Bernstein block on `cell` at s.
inline double eval_bernstein(const Eigen::MatrixXd& b, const Rect& cell, const Vec2& s) {
  const Eigen::VectorXd bu = bernstein::basis(static_cast<int>(b.rows()) - 1, (s.x() - cell.u0) / cell.width());
  const Eigen::VectorXd bv = bernstein::basis(static_cast<int>(b.cols()) - 1, (s.y() - cell.v0) / cell.height());
  return bu.dot(b * bv);
}

/// A Bernstein block on `cell` as a single-piece spline.
inline Spline2 bezier_patch(const Eigen::MatrixXd& b, const Rect& cell) {
  return {KnotVector::bezier(static_cast<int>(b.rows()) - 1, cell.u0, cell.u1),
          KnotVector::bezier(static_cast<int>(b.cols()) - 1, cell.v0, cell.v1), b};
}

// ---------------------------------------------------------------------------
// Exact arithmetic

namespace detail {

inline std::vector<double> merge_breaks(const std::vector<double>& a, const std::vector<double>& b) {
  std::vector<double> all(a);
  all.insert(all.end(), b.begin(), b.end());
  std::sort(all.begin(), all.end());
  std::vector<double> out;
  for (double x : all)
    if (out.empty() || x > out.back() + kKnotTol) out.push_back(x);
  return out;
}

/// Continuity order (C^k) of a spline at break x; large if x is not a knot.
inline int continuity(const KnotVector& kv, double x) {
  const int m = kv.multiplicity(x);
  return m == 0 ? std::numeric_limits<int>::max() / 4 : kv.degree() - m;
}

/// Target knot vector of degree p over `breaks` with the given multiplicities.
inline KnotVector knots_from_breaks(int p, const std::vector<double>& breaks, const std::vector<int>& mult) {
  std::vector<double> k(p + 1, breaks.front());
  for (std::size_t i = 1; i + 1 < breaks.size(); ++i) k.insert(k.end(), mult[i], breaks[i]);
  k.insert(k.end(), p + 1, breaks.back());
  return KnotVector(p, std::move(k));
}

/// Solve T_u X T_v^T = F in the least-squares sense.
inline Eigen::MatrixXd solve_refinement(const Eigen::MatrixXd& tu, const Eigen::MatrixXd& tv,
                                        const Eigen::MatrixXd& fine) {
  const Eigen::MatrixXd x = tu.colPivHouseholderQr().solve(fine);
  return tv.colPivHouseholderQr().solve(x.transpose()).transpose();
}

inline void require_common_domain(const Spline2& f, const Spline2& g) {
  const Rect a = f.domain(), b = g.domain();
  if (std::abs(a.u0 - b.u0) > kKnotTol || std::abs(a.u1 - b.u1) > kKnotTol || std::abs(a.v0 - b.v0) > kKnotTol ||
      std::abs(a.v1 - b.v1) > kKnotTol)
    throw validation_error("spline_core", "operands are defined over different rectangles");
}

/// Combine f and g piecewise on the merged breakpoints with `op` acting on
/// Bernstein blocks of the two operands, producing degree `deg`.
template <class Op>
Spline2 combine(const Spline2& f, const Spline2& g, DegreePair deg, Op op) {
  require_common_domain(f, g);
  const auto bu = merge_breaks(f.knots_u().breaks(), g.knots_u().breaks());
  const auto bv = merge_breaks(f.knots_v().breaks(), g.knots_v().breaks());
  const Spline2 fe = f.refined(bu, bv, f.degree().u, f.degree().v);
  const Spline2 ge = g.refined(bu, bv, g.degree().u, g.degree().v);
  const int cu = static_cast<int>(bu.size()) - 1, cv = static_cast<int>(bv.size()) - 1;
  const int p = deg.u, q = deg.v;
  Eigen::MatrixXd fine(cu * p + 1, cv * q + 1);
  for (int i = 0; i < cu; ++i)
    for (int j = 0; j < cv; ++j) {
      const Vec2 mid(0.5 * (bu[i] + bu[i + 1]), 0.5 * (bv[j] + bv[j + 1]));
      auto block = [&](const Spline2& s) {
        const int su = s.knots_u().span(mid.x()), sv = s.knots_v().span(mid.y());
        const int pu = s.degree().u, pv = s.degree().v;
        return Eigen::MatrixXd(s.coeffs().block(su - pu, sv - pv, pu + 1, pv + 1));
      };
      fine.block(i * p, j * q, p + 1, q + 1) = op(block(fe), block(ge));
    }
  // Continuity of the result at each break is the weaker of the operands'.
  std::vector<int> mu(bu.size(), p), mv(bv.size(), q);
  for (std::size_t i = 1; i + 1 < bu.size(); ++i) {
    const int c = std::min(continuity(f.knots_u(), bu[i]), continuity(g.knots_u(), bu[i]));
    mu[i] = std::clamp(p - c, 1, p == 0 ? 1 : p);
  }
  for (std::size_t j = 1; j + 1 < bv.size(); ++j) {
    const int c = std::min(continuity(f.knots_v(), bv[j]), continuity(g.knots_v(), bv[j]));
    mv[j] = std::clamp(q - c, 1, q == 0 ? 1 : q);
  }
  if (p == 0 || q == 0) {
    // Degree-0 directions are piecewise constant: one coefficient per cell.
    const KnotVector ku = p == 0 ? knots_from_breaks(0, bu, std::vector<int>(bu.size(), 1))
                                 : knots_from_breaks(p, bu, std::vector<int>(bu.size(), p));
    const KnotVector kv = q == 0 ? knots_from_breaks(0, bv, std::vector<int>(bv.size(), 1))
                                 : knots_from_breaks(q, bv, std::vector<int>(bv.size(), q));
    Eigen::MatrixXd c(ku.size(), kv.size());
    for (int i = 0; i < cu; ++i)
      for (int j = 0; j < cv; ++j) {
        const int r0 = p == 0 ? i : i * p, c0 = q == 0 ? j : j * q;
        c.block(r0, c0, p + 1, q + 1) = fine.block(i * p, j * q, p + 1, q + 1);
      }
    if (p > 0 || q > 0) {
      // Re-assemble at the requested continuity in the non-constant direction.
      const Spline2 full(ku, kv, c);
      const KnotVector tu = p == 0 ? ku : knots_from_breaks(p, bu, mu);
      const KnotVector tv = q == 0 ? kv : knots_from_breaks(q, bv, mv);
      const Eigen::MatrixXd Tu = p == 0 ? Eigen::MatrixXd::Identity(ku.size(), ku.size())
                                        : rows::refinement_matrix(tu, bu, p);
      const Eigen::MatrixXd Tv = q == 0 ? Eigen::MatrixXd::Identity(kv.size(), kv.size())
                                        : rows::refinement_matrix(tv, bv, q);
      return {tu, tv, solve_refinement(Tu, Tv, c)};
    }
    return {ku, kv, c};
  }
  const KnotVector tu = knots_from_breaks(p, bu, mu), tv = knots_from_breaks(q, bv, mv);
  const Eigen::MatrixXd Tu = rows::refinement_matrix(tu, bu, p);
  const Eigen::MatrixXd Tv = rows::refinement_matrix(tv, bv, q);
  return {tu, tv, solve_refinement(Tu, Tv, fine)};
}

}  // namespace detail

/// Exact product; degree is the componentwise sum of the operand degrees.
inline Spline2 multiply(const Spline2& f, const Spline2& g) {
  return detail::combine(f, g, f.degree() + g.degree(),
                         [](const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) { return bernstein::multiply(a, b); });
}

/// Exact sum; degree is the componentwise maximum.
inline Spline2 add(const Spline2& f, const Spline2& g) {
  const DegreePair d = max(f.degree(), g.degree());
  return detail::combine(f, g, d, [&](const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
    return Eigen::MatrixXd(bernstein::elevate(a, d.u, d.v) + bernstein::elevate(b, d.u, d.v));
  });
}

/// Exact r-th power by repeated multiplication.
inline Spline2 power(const Spline2& f, int r) {
  if (r < 1) throw validation_error("spline_core", "power exponent must be positive");
  Spline2 out = f;
  for (int i = 1; i < r; ++i) out = multiply(out, f);
  return out;
}

/// Interpolate a function known to lie in the spline space at the tensor
/// Greville grid.  For functions outside the space this is ordinary
/// spline interpolation.
inline Spline2 interpolate(const KnotVector& ku, const KnotVector& kv, const std::function<double(const Vec2&)>& fn) {
  const auto gu = ku.greville(), gv = kv.greville();
  auto collocation = [](const KnotVector& k, const std::vector<double>& g) {
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(k.size(), k.size());
    for (int i = 0; i < k.size(); ++i) {
      const int s = k.span(g[i]);
      a.block(i, s - k.degree(), 1, k.degree() + 1) = k.basis(s, g[i], 0);
    }
    return a;
  };
  Eigen::MatrixXd f(ku.size(), kv.size());
  for (int i = 0; i < ku.size(); ++i)
    for (int j = 0; j < kv.size(); ++j) f(i, j) = fn(Vec2(gu[i], gv[j]));
  const Eigen::MatrixXd au = collocation(ku, gu), av = collocation(kv, gv);
  const Eigen::MatrixXd x = au.partialPivLu().solve(f);
  return {ku, kv, av.partialPivLu().solve(x.transpose()).transpose()};
}

// ---------------------------------------------------------------------------
// Vector-valued splines

/// 2 or 3 scalar components sharing knot vectors.
class VectorSpline {
 public:
  VectorSpline() = default;

  explicit VectorSpline(std::vector<Spline2> comps) : comps_(std::move(comps)) {
    if (comps_.empty()) throw validation_error("spline_core", "vector spline without components");
    for (const auto& c : comps_)
      if (!(c.knots_u() == comps_[0].knots_u()) || !(c.knots_v() == comps_[0].knots_v()))
        throw validation_error("spline_core", "vector spline components must share knot vectors");
  }

  /// Build from knots and a control net given per component.
  VectorSpline(const KnotVector& ku, const KnotVector& kv, const std::vector<Eigen::MatrixXd>& nets) {
    for (const auto& n : nets) comps_.emplace_back(ku, kv, n);
  }

  int dim() const { return static_cast<int>(comps_.size()); }
  const Spline2& operator[](int i) const { return comps_[i]; }
  const std::vector<Spline2>& components() const { return comps_; }
  const KnotVector& knots_u() const { return comps_[0].knots_u(); }
  const KnotVector& knots_v() const { return comps_[0].knots_v(); }
  DegreePair degree() const { return comps_[0].degree(); }
  Rect domain() const { return comps_[0].domain(); }

  Eigen::VectorXd eval(const Vec2& s) const {
    return eval_piece(s, knots_u().span(s.x()), knots_v().span(s.y()));
  }

  Eigen::VectorXd eval_piece(const Vec2& s, int su, int sv) const {
    const Eigen::MatrixXd bu = knots_u().basis(su, s.x(), 0), bv = knots_v().basis(sv, s.y(), 0);
    const int p = degree().u, q = degree().v;
    Eigen::VectorXd out(dim());
    for (int d = 0; d < dim(); ++d)
      out[d] = (bu.row(0) * comps_[d].coeffs().block(su - p, sv - q, p + 1, q + 1) * bv.row(0).transpose())(0, 0);
    return out;
  }

  Vec3 point(const Vec2& s) const { return eval(s).head<3>(); }
  Vec2 point2(const Vec2& s) const { return eval(s).head<2>(); }

  Vec3Jet jet3(const Vec2& s) const { return jet_piece<3>(s, knots_u().span(s.x()), knots_v().span(s.y())); }
  Vec2Jet jet2(const Vec2& s) const { return jet_piece<2>(s, knots_u().span(s.x()), knots_v().span(s.y())); }

  template <int D>
  Jet<Eigen::Matrix<double, D, 1>> jet_piece(const Vec2& s, int su, int sv) const {
    const Eigen::MatrixXd bu = knots_u().basis(su, s.x(), 2), bv = knots_v().basis(sv, s.y(), 2);
    const int p = degree().u, q = degree().v;
    Jet<Eigen::Matrix<double, D, 1>> j;
    for (int d = 0; d < D; ++d) {
      const Eigen::MatrixXd m = bu * comps_[d].coeffs().block(su - p, sv - q, p + 1, q + 1) * bv.transpose();
      j.f[d] = m(0, 0);
      j.fu[d] = m(1, 0);
      j.fv[d] = m(0, 1);
      j.fuu[d] = m(2, 0);
      j.fuv[d] = m(1, 1);
      j.fvv[d] = m(0, 2);
    }
    return j;
  }

  VectorSpline insert_knot(Dir d, double u) const {
    std::vector<Spline2> out;
    for (const auto& c : comps_) out.push_back(c.insert_knot(d, u));
    return VectorSpline(std::move(out));
  }

 private:
  std::vector<Spline2> comps_;
};

// ---------------------------------------------------------------------------
// Composition on a cell

/// Result of composing a ribbon with a reparametrization over one cell.
struct ComposedPatch {
  Rect cell;
  DegreePair degree;
  std::vector<Eigen::MatrixXd> coeffs;  ///< Bernstein block per coordinate

  Eigen::VectorXd eval(const Vec2& s) const {
    Eigen::VectorXd out(coeffs.size());
    for (std::size_t d = 0; d < coeffs.size(); ++d) out[d] = eval_bernstein(coeffs[d], cell, s);
    return out;
  }
};

/// Span of `outer` in direction d that hosts the values [lo, hi] of the
/// inner map; throws naming the violated knot when they straddle a break.
inline int hosting_span(const KnotVector& kv, double lo, double hi, const char* dir, double tol = 1e-9) {
  const int s = kv.span(0.5 * (lo + hi));
  const auto& k = kv.knots();
  const bool first = s == kv.degree(), last = s == kv.size() - 1;
  if (!first && lo < k[s] - tol) {
    std::ostringstream os;
    os << "image straddles breakpoint " << dir << "=" << k[s] << " of the outer spline";
    throw validation_error("spline_core", os.str());
  }
  if (!last && hi > k[s + 1] + tol) {
    std::ostringstream os;
    os << "image straddles breakpoint " << dir << "=" << k[s + 1] << " of the outer spline";
    throw validation_error("spline_core", os.str());
  }
  return s;
}

/// Exact composition r o kappa over `cell` in Bernstein form.  `kappa` must be
/// a single polynomial piece on the cell.  When `spans` is given, those pieces
/// of r are used (prolonged as needed); otherwise the image of the cell under
/// kappa must lie within one piece of r.
inline ComposedPatch compose_cell(const VectorSpline& r, const VectorSpline& kappa, const Rect& cell,
                                  std::optional<std::pair<int, int>> spans = std::nullopt) {
  const std::string stage = "spline_core";
  if (!(cell.u1 > cell.u0) || !(cell.v1 > cell.v0))
    throw validation_error(stage, "degenerate cell with empty interior");
  if (kappa.dim() != 2) throw validation_error(stage, "reparametrization must be planar");
  const auto& ku = kappa.knots_u();
  const auto& kv = kappa.knots_v();
  const int su = ku.span(cell.center().x()), sv = kv.span(cell.center().y());
  auto inside_span = [](const KnotVector& k, int s, double a, double b) {
    const bool first = s == k.degree(), last = s == k.size() - 1;
    return (first || a >= k.knots()[s] - kKnotTol) && (last || b <= k.knots()[s + 1] + kKnotTol);
  };
  if (!inside_span(ku, su, cell.u0, cell.u1) || !inside_span(kv, sv, cell.v0, cell.v1))
    throw validation_error(stage, "cell crosses a breakpoint of the reparametrization");

  const DegreePair dk = kappa.degree();
  const int tot = r.degree().total();
  const DegreePair deg{tot * dk.u, tot * dk.v};

  int ru = 0, rv = 0;
  if (spans) {
    std::tie(ru, rv) = *spans;
  } else {
    double lo_u = 1e300, hi_u = -1e300, lo_v = 1e300, hi_v = -1e300;
    const int ns = std::max(8, 2 * std::max(dk.u, dk.v) + 2);
    for (int i = 0; i <= ns; ++i)
      for (int j = 0; j <= ns; ++j) {
        const Vec2 s(cell.u0 + cell.width() * i / ns, cell.v0 + cell.height() * j / ns);
        const Eigen::VectorXd k = kappa.eval_piece(s, su, sv);
        lo_u = std::min(lo_u, k[0]);
        hi_u = std::max(hi_u, k[0]);
        lo_v = std::min(lo_v, k[1]);
        hi_v = std::max(hi_v, k[1]);
      }
    ru = hosting_span(r.knots_u(), lo_u, hi_u, "u");
    rv = hosting_span(r.knots_v(), lo_v, hi_v, "v");
  }

  // Interpolate at a tensor Chebyshev grid of the exact composed degree.
  const auto tu = bernstein::chebyshev01(deg.u + 1), tv = bernstein::chebyshev01(deg.v + 1);
  Eigen::MatrixXd au(deg.u + 1, deg.u + 1), av(deg.v + 1, deg.v + 1);
  for (int i = 0; i <= deg.u; ++i) au.row(i) = bernstein::basis(deg.u, tu[i]).transpose();
  for (int j = 0; j <= deg.v; ++j) av.row(j) = bernstein::basis(deg.v, tv[j]).transpose();
  std::vector<Eigen::MatrixXd> vals(r.dim(), Eigen::MatrixXd(deg.u + 1, deg.v + 1));
  for (int i = 0; i <= deg.u; ++i)
    for (int j = 0; j <= deg.v; ++j) {
      const Vec2 s(cell.u0 + cell.width() * tu[i], cell.v0 + cell.height() * tv[j]);
      const Eigen::VectorXd k = kappa.eval_piece(s, su, sv);
      const Eigen::VectorXd x = r.eval_piece(Vec2(k[0], k[1]), ru, rv);
      for (int d = 0; d < r.dim(); ++d) vals[d](i, j) = x[d];
    }
  const auto lu = au.partialPivLu();
  const auto lv = av.partialPivLu();
  ComposedPatch out{cell, deg, {}};
  for (int d = 0; d < r.dim(); ++d) {
    const Eigen::MatrixXd x = lu.solve(vals[d]);
    out.coeffs.push_back(lv.solve(x.transpose()).transpose());
  }
  return out;
}

}  // namespace abc
