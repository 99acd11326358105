#pragma once

// Weights of the blend.  Every weight is a product of powers of scalar
// splines times a constant; the product is kept factored and only expanded
// on demand (cell extraction, degree reports), since expanding it globally
// would produce needlessly large coefficient grids.

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "abc/error.hpp"
#include "abc/fit.hpp"
#include "abc/spline.hpp"
#include "abc/trim.hpp"

namespace abc {

struct FactoredWeight {
  double scale = 1.0;
  std::vector<Spline2> factors;
  std::vector<int> exponents;

  double operator()(const Vec2& s) const {
    double v = scale;
    for (std::size_t i = 0; i < factors.size(); ++i) v *= std::pow(factors[i](s), exponents[i]);
    return v;
  }

  ScalarJet jet(const Vec2& s) const {
    ScalarJet j = ScalarJet::constant(scale, 0.0);
    for (std::size_t i = 0; i < factors.size(); ++i) {
      const ScalarJet f = pow(factors[i].jet(s), exponents[i]);
      j = f * j;
    }
    return j;
  }

  /// Sum of exponent times factor degree.
  DegreePair degree() const {
    DegreePair d;
    for (std::size_t i = 0; i < factors.size(); ++i) d = d + exponents[i] * factors[i].degree();
    return d;
  }

  /// Bernstein block of the expanded product on `cell` (pieces taken at the
  /// cell center), at its natural degree after dropping constant factors.
  Eigen::MatrixXd bernstein_on(const Rect& cell) const {
    Eigen::MatrixXd acc = Eigen::MatrixXd::Constant(1, 1, scale);
    for (std::size_t i = 0; i < factors.size(); ++i) {
      Eigen::MatrixXd b = factors[i].bernstein_on(cell);
      const DegreePair eff = bernstein::effective_degree(b);
      if (eff.u == 0 && eff.v == 0) {
        acc *= std::pow(b(0, 0), exponents[i]);
        continue;
      }
      Eigen::MatrixXd pw = Eigen::MatrixXd::Constant(1, 1, 1.0);
      for (int e = 0; e < exponents[i]; ++e) pw = bernstein::multiply(pw, b);
      acc = bernstein::multiply(acc, pw);
    }
    return acc;
  }

  /// Degree of the product restricted to a cell: factors that are constant
  /// on the cell do not contribute.
  DegreePair local_degree(const Rect& cell) const {
    DegreePair d;
    for (std::size_t i = 0; i < factors.size(); ++i) {
      const DegreePair eff = bernstein::effective_degree(factors[i].bernstein_on(cell));
      if (eff.u == 0 && eff.v == 0) continue;
      d = d + exponents[i] * factors[i].degree();
    }
    return d;
  }

  /// Fully expanded spline (exact products and powers).
  Spline2 materialize() const {
    if (factors.empty()) return Spline2::constant(scale, Rect{});
    Spline2 acc = power(factors[0], exponents[0]);
    for (std::size_t i = 1; i < factors.size(); ++i) acc = multiply(acc, power(factors[i], exponents[i]));
    return acc.scaled(scale);
  }
};

struct WeightSystem {
  FactoredWeight w;
  std::vector<FactoredWeight> w_ribbon;
  std::vector<int> exponents;
  bool plateau = false;
  double plateau_value = 0.0;
  std::vector<Spline2> qbar;    ///< plateau factors (empty for plain weights)
  std::vector<Spline2> cutoff;  ///< cutoff factors of the ribbon weights
};

// ---------------------------------------------------------------------------
// Plain weights

struct PositivityOptions {
  int grid = 512;
  double band = 1e-3;  ///< samples closer than this to the boundary are skipped
};

inline WeightSystem plain_weights(const TrimLoop& loop, const std::vector<int>& exponents,
                                  const PositivityOptions& opt = {}) {
  const std::string stage = "weight_builder";
  const int L = loop.size();
  if (static_cast<int>(exponents.size()) != L) throw validation_error(stage, "one exponent per curve required");
  for (int r : exponents)
    if (r < 1) throw validation_error(stage, "exponents must be >= 1");
  WeightSystem ws;
  ws.exponents = exponents;
  for (int l = 0; l < L; ++l) {
    ws.w.factors.push_back(loop.reparams[l].q);
    ws.w.exponents.push_back(exponents[l]);
  }
  for (int l = 0; l < L; ++l) {
    FactoredWeight f;
    for (int j = 0; j < L; ++j)
      if (j != l) {
        f.factors.push_back(loop.reparams[j].q);
        f.exponents.push_back(exponents[j]);
      }
    ws.w_ribbon.push_back(f);
  }
  // Screen: every factor must be positive at interior samples off the band.
  const auto poly = loop.polygon();
  const Rect box = loop.bounding_box();
  const int g = opt.grid;
  for (int i = 0; i < g; ++i)
    for (int j = 0; j < g; ++j) {
      const Vec2 s(box.u0 + box.width() * (i + 0.5) / g, box.v0 + box.height() * (j + 0.5) / g);
      if (!point_in_polygon(poly, s) || distance_to_polyline(poly, s, true) < opt.band) continue;
      for (int l = 0; l < L; ++l)
        if (!(loop.reparams[l].q(s) > 0)) {
          std::ostringstream os;
          os << "factor q_" << l << " is not positive inside the domain near (" << s.x() << "," << s.y()
             << "); zeros near the boundary persist, adjust its control points";
          throw numerical_error(stage, os.str());
        }
    }
  return ws;
}

// ---------------------------------------------------------------------------
// Index classification and plateau construction

struct IndexClassification {
  Spline2 q;                  ///< refined spline the indices refer to
  std::vector<char> in_i;     ///< flattened u-major
  std::vector<char> in_j;
  int rounds = 0;

  int count_i() const { return static_cast<int>(std::count(in_i.begin(), in_i.end(), 1)); }
  int count_j() const { return static_cast<int>(std::count(in_j.begin(), in_j.end(), 1)); }
};

namespace detail {

/// Sampled min/max of q over each nonempty knot span cell.
inline void span_extrema(const Spline2& q, std::vector<double>& bu, std::vector<double>& bv, Eigen::MatrixXd& mn,
                         Eigen::MatrixXd& mx, int per_span = 6) {
  bu = q.knots_u().breaks();
  bv = q.knots_v().breaks();
  const int cu = static_cast<int>(bu.size()) - 1, cv = static_cast<int>(bv.size()) - 1;
  mn.resize(cu, cv);
  mx.resize(cu, cv);
  for (int a = 0; a < cu; ++a)
    for (int b = 0; b < cv; ++b) {
      double lo = 1e300, hi = -1e300;
      for (int i = 0; i <= per_span; ++i)
        for (int j = 0; j <= per_span; ++j) {
          const Vec2 s(bu[a] + (bu[a + 1] - bu[a]) * i / per_span, bv[b] + (bv[b + 1] - bv[b]) * j / per_span);
          const double v = q(s);
          lo = std::min(lo, v);
          hi = std::max(hi, v);
        }
      mn(a, b) = lo;
      mx(a, b) = hi;
    }
}

/// Range of break-cell indices covered by the support of basis function i.
inline std::pair<int, int> support_cells(const KnotVector& kv, const std::vector<double>& br, int i) {
  const auto [a, b] = kv.support(i);
  int lo = static_cast<int>(std::lower_bound(br.begin(), br.end(), a - kKnotTol) - br.begin());
  int hi = static_cast<int>(std::lower_bound(br.begin(), br.end(), b - kKnotTol) - br.begin());
  return {lo, hi};  // cells lo .. hi-1
}

}  // namespace detail

/// I: supports on which q takes the value 0 (sampled, margin), J: supports
/// reaching {q > h}.  Spans of conflicting supports are bisected until the
/// sets are disjoint.  Only supports meeting `region` are considered.
inline IndexClassification classify_indices(const Spline2& q, double h, const Rect& region, int max_rounds = 12,
                                            double margin = 1e-10) {
  const std::string stage = "weight_builder";
  IndexClassification c;
  c.q = q;
  for (int round = 0;; ++round) {
    std::vector<double> bu, bv;
    Eigen::MatrixXd mn, mx;
    detail::span_extrema(c.q, bu, bv, mn, mx);
    const auto& ku = c.q.knots_u();
    const auto& kv = c.q.knots_v();
    const int nu = ku.size(), nv = kv.size();
    c.in_i.assign(nu * nv, 0);
    c.in_j.assign(nu * nv, 0);
    std::set<double> split_u, split_v;
    bool conflict = false;
    for (int i = 0; i < nu; ++i) {
      const auto [a0, a1] = detail::support_cells(ku, bu, i);
      for (int j = 0; j < nv; ++j) {
        const auto [b0, b1] = detail::support_cells(kv, bv, j);
        double lo = 1e300, hi = -1e300;
        for (int a = a0; a < a1; ++a)
          for (int b = b0; b < b1; ++b) {
            // Only cells that meet the region matter.
            if (bu[a + 1] < region.u0 || bu[a] > region.u1 || bv[b + 1] < region.v0 || bv[b] > region.v1) continue;
            lo = std::min(lo, mn(a, b));
            hi = std::max(hi, mx(a, b));
          }
        if (lo > hi) continue;
        const bool zero = lo <= margin && hi >= -margin;
        const bool beyond = hi > h + margin;
        c.in_i[i * nv + j] = zero;
        c.in_j[i * nv + j] = beyond;
        if (zero && beyond) {
          conflict = true;
          for (int a = a0; a < a1; ++a) split_u.insert(0.5 * (bu[a] + bu[a + 1]));
          for (int b = b0; b < b1; ++b) split_v.insert(0.5 * (bv[b] + bv[b + 1]));
        }
      }
    }
    c.rounds = round;
    if (!conflict) return c;
    if (round >= max_rounds) {
      std::ostringstream os;
      os << "index sets still overlap after " << max_rounds << " refinement rounds; the stripe width " << h
         << " is too large for the knot budget";
      throw numerical_error(stage, os.str());
    }
    c.q = c.q.refined({split_u.begin(), split_u.end()}, {split_v.begin(), split_v.end()}, 1, 1);
  }
}

/// Sparse thin-plate energy (u-major flattening).
inline Eigen::SparseMatrix<double> thin_plate_sparse(const KnotVector& ku, const KnotVector& kv) {
  const auto mu = detail::gram(ku), mv = detail::gram(kv);
  const int nu = ku.size(), nv = kv.size();
  std::vector<Eigen::Triplet<double>> t;
  for (int i = 0; i < nu; ++i)
    for (int k = std::max(0, i - ku.degree()); k <= std::min(nu - 1, i + ku.degree()); ++k)
      for (int j = 0; j < nv; ++j)
        for (int l = std::max(0, j - kv.degree()); l <= std::min(nv - 1, j + kv.degree()); ++l) {
          const double v = mu[2](i, k) * mv[0](j, l) + 2.0 * mu[1](i, k) * mv[1](j, l) + mu[0](i, k) * mv[2](j, l);
          if (v != 0.0) t.emplace_back(i * nv + j, k * nv + l, v);
        }
  Eigen::SparseMatrix<double> f(nu * nv, nu * nv);
  f.setFromTriplets(t.begin(), t.end());
  return f;
}

/// Fill free coefficients of `coeffs` by minimizing the thin-plate energy
/// with the `fixed` ones held, then clamp them to [lo, hi].
inline Eigen::MatrixXd fair_fill(const KnotVector& ku, const KnotVector& kv, const Eigen::MatrixXd& coeffs,
                                 const std::vector<char>& fixed, double lo, double hi) {
  const int nu = ku.size(), nv = kv.size(), n = nu * nv;
  std::vector<int> free_idx, map(n, -1);
  for (int k = 0; k < n; ++k)
    if (!fixed[k]) {
      map[k] = static_cast<int>(free_idx.size());
      free_idx.push_back(k);
    }
  Eigen::VectorXd x = flatten(coeffs);
  if (free_idx.empty()) return coeffs;
  const Eigen::SparseMatrix<double> f = thin_plate_sparse(ku, kv);
  const int m = static_cast<int>(free_idx.size());
  std::vector<Eigen::Triplet<double>> t;
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(m);
  for (int col = 0; col < f.outerSize(); ++col)
    for (Eigen::SparseMatrix<double>::InnerIterator it(f, col); it; ++it) {
      const int r = static_cast<int>(it.row()), c = static_cast<int>(it.col());
      if (map[r] < 0) continue;
      if (map[c] >= 0) t.emplace_back(map[r], map[c], it.value());
      else rhs[map[r]] -= it.value() * x[c];
    }
  Eigen::SparseMatrix<double> a(m, m);
  a.setFromTriplets(t.begin(), t.end());
  // A tiny ridge keeps components without fixed neighbors well posed.
  const double ridge = 1e-12 * std::max(1.0, a.diagonal().cwiseAbs().maxCoeff());
  for (int k = 0; k < m; ++k) a.coeffRef(k, k) += ridge;
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver(a);
  if (solver.info() != Eigen::Success) throw numerical_error("weight_builder", "fairness system is singular");
  const Eigen::VectorXd sol = solver.solve(rhs);
  if (solver.info() != Eigen::Success || !sol.allFinite())
    throw numerical_error("weight_builder", "fairness solve failed");
  for (int k = 0; k < m; ++k) x[free_idx[k]] = std::clamp(sol[k], lo, hi);
  return unflatten(x, nu, nv);
}

/// q_bar: q near its zero set, the constant h beyond the stripe.
inline Spline2 plateau_weight(const IndexClassification& c, double h) {
  const auto& q = c.q;
  Eigen::MatrixXd coeffs = q.coeffs();
  const int nv = q.knots_v().size();
  std::vector<char> fixed(coeffs.size(), 0);
  for (int i = 0; i < coeffs.rows(); ++i)
    for (int j = 0; j < coeffs.cols(); ++j) {
      const int k = i * nv + j;
      if (c.in_i[k]) fixed[k] = 1;
      else if (c.in_j[k]) {
        coeffs(i, j) = h;
        fixed[k] = 1;
      }
    }
  return q.with_coeffs(fair_fill(q.knots_u(), q.knots_v(), coeffs, fixed, 0.0, h));
}

/// Cutoff z: 1 near the zero set, 0 beyond the stripe.
inline Spline2 cutoff_weight(const IndexClassification& c) {
  const auto& q = c.q;
  Eigen::MatrixXd coeffs = Eigen::MatrixXd::Zero(q.coeffs().rows(), q.coeffs().cols());
  const int nv = q.knots_v().size();
  std::vector<char> fixed(coeffs.size(), 0);
  for (int i = 0; i < coeffs.rows(); ++i)
    for (int j = 0; j < coeffs.cols(); ++j) {
      const int k = i * nv + j;
      if (c.in_i[k]) {
        coeffs(i, j) = 1.0;
        fixed[k] = 1;
      } else if (c.in_j[k]) {
        fixed[k] = 1;
      }
    }
  return q.with_coeffs(fair_fill(q.knots_u(), q.knots_v(), coeffs, fixed, 0.0, 1.0));
}

struct PlateauOptions {
  int max_rounds = 12;
  int stripe_grid = 256;
  bool check_topology = true;
};

/// w = prod qbar_l^r_l;  w_l = c_l qbar_{l-1}^r_{l-1} qbar_{l+1}^r_{l+1} z_l^r_l with the
/// constant c_l chosen so that w / w_l = q_l^r_l in the middle of curve l.
inline WeightSystem plateau_weights(const TrimLoop& loop, const std::vector<int>& exponents,
                                    const PlateauOptions& opt = {}) {
  const std::string stage = "weight_builder";
  const int L = loop.size();
  if (static_cast<int>(exponents.size()) != L) throw validation_error(stage, "one exponent per curve required");
  for (int r : exponents)
    if (r < 1) throw validation_error(stage, "exponents must be >= 1");
  const Rect box = loop.bounding_box();
  WeightSystem ws;
  ws.plateau = true;
  ws.exponents = exponents;
  ws.plateau_value = 1.0;
  std::vector<IndexClassification> cls;
  for (int l = 0; l < L; ++l) {
    cls.push_back(classify_indices(loop.reparams[l].q, loop.widths[l], box, opt.max_rounds));
    ws.qbar.push_back(plateau_weight(cls.back(), loop.widths[l]));
    ws.cutoff.push_back(cutoff_weight(cls.back()));
    ws.plateau_value *= std::pow(loop.widths[l], exponents[l]);
  }
  if (opt.check_topology) {
    std::vector<Spline2> qs;
    for (const auto& k : loop.reparams) qs.push_back(k.q);
    const auto rep = check_stripes(loop, qs, opt.stripe_grid);
    if (!rep.ok) throw validation_error(stage, "stripe topology: " + rep.problems.front());
  }
  for (int l = 0; l < L; ++l) {
    ws.w.factors.push_back(ws.qbar[l]);
    ws.w.exponents.push_back(exponents[l]);
  }
  for (int l = 0; l < L; ++l) {
    FactoredWeight f;
    const int a = loop.prev(l), b = loop.next(l);
    f.scale = 1.0;
    // Normalize by the far plateau constants.
    for (int k = 0; k < L; ++k)
      if (k != l && k != a && k != b) f.scale *= std::pow(loop.widths[k], exponents[k]);
    f.factors.push_back(ws.qbar[a]);
    f.exponents.push_back(exponents[a]);
    if (b != a) {
      f.factors.push_back(ws.qbar[b]);
      f.exponents.push_back(exponents[b]);
    }
    f.factors.push_back(ws.cutoff[l]);
    f.exponents.push_back(exponents[l]);
    ws.w_ribbon.push_back(f);
  }
  return ws;
}

/// Degree figures of the weight construction, by formula.
struct DegreeAccounting {
  DegreePair plain_w;
  DegreePair plateau_w_bound;  ///< max over neighbors of r_l deg q_l + r_{l+1} deg q_{l+1}
  DegreePair plateau_w_ribbon; ///< max over l of r_l max(deg q_{l-1}, deg q_{l+1})
};

inline DegreeAccounting degree_accounting(const std::vector<DegreePair>& deg_q, const std::vector<int>& r) {
  DegreeAccounting d;
  const int L = static_cast<int>(deg_q.size());
  for (int l = 0; l < L; ++l) {
    d.plain_w = d.plain_w + r[l] * deg_q[l];
    const int nx = (l + 1) % L, pv = (l + L - 1) % L;
    d.plateau_w_bound = max(d.plateau_w_bound, r[l] * deg_q[l] + r[nx] * deg_q[nx]);
    d.plateau_w_ribbon = max(d.plateau_w_ribbon, r[l] * max(deg_q[pv], deg_q[nx]));
  }
  return d;
}

/// deg a for deg b = deg kappa = [n,n], deg r = [n,m], uniform r, plateau
/// weights: max{2r+1, r+n+m} [n,n].
inline DegreePair blend_degree_formula(int n, int m, int r) {
  const int k = std::max(2 * r + 1, r + n + m);
  return {k * n, k * n};
}

}  // namespace abc
