#pragma once

// The blend a = (w b + sum w_l r_l o kappa_l) / (w + sum w_l) and the
// numerical checks of its boundary behavior.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "abc/diffgeo.hpp"
#include "abc/error.hpp"
#include "abc/spline.hpp"
#include "abc/trim.hpp"
#include "abc/weights.hpp"

namespace abc {

/// Corner where ribbon `prev` (at its u = 1 end) meets ribbon `next` (u = 0).
struct CornerLink {
  Vec2 sigma;
  int prev = 0;
  int next = 0;
};

struct AbcSurface {
  VectorSpline base;
  std::vector<VectorSpline> ribbons;
  TrimLoop loop;
  WeightSystem weights;
  std::vector<CornerLink> links;
  double corner_tol = 1e-9;

  int size() const { return static_cast<int>(ribbons.size()); }
  const Reparametrization& kappa(int l) const { return loop.reparams[l]; }
};

/// Corner links of a closed loop.
inline std::vector<CornerLink> loop_links(const TrimLoop& loop) {
  std::vector<CornerLink> out;
  for (int l = 0; l < loop.size(); ++l) out.push_back({loop.corners[l], loop.prev(l), l});
  return out;
}

inline AbcSurface make_surface(VectorSpline base, std::vector<VectorSpline> ribbons, TrimLoop loop,
                               WeightSystem weights) {
  const std::string stage = "abc_surface";
  const int L = static_cast<int>(ribbons.size());
  if (loop.size() != L || static_cast<int>(weights.w_ribbon.size()) != L)
    throw validation_error(stage, "ribbon, reparametrization and weight counts differ");
  if (base.dim() != 3) throw validation_error(stage, "base must be a spatial surface");
  for (int l = 0; l < L; ++l) {
    if (ribbons[l].dim() != 3) throw validation_error(stage, "ribbon " + std::to_string(l) + " is not spatial");
    if (!ribbons[l].knots_v().inner_knots().empty())
      throw validation_error(stage, "ribbon " + std::to_string(l) + " has inner v-knots; ribbons must be Bezier in v");
  }
  AbcSurface a{std::move(base), std::move(ribbons), std::move(loop), std::move(weights), {}, 1e-9};
  a.links = loop_links(a.loop);
  return a;
}

/// Reparametrized ribbon r_l o kappa_l as a jet in sigma.
inline Vec3Jet ribbon_bar_jet(const AbcSurface& a, int l, const Vec2& s) {
  const Vec2Jet k = a.kappa(l).jet(s);
  return compose(a.ribbons[l].jet3(k.f), k);
}

namespace detail {

inline std::optional<int> corner_at(const AbcSurface& a, const Vec2& s) {
  for (const auto& c : a.links)
    if ((s - c.sigma).norm() < a.corner_tol) return c.next;
  return std::nullopt;
}

}  // namespace detail

inline Vec3 eval_abc(const AbcSurface& a, const Vec2& s) {
  if (auto l = detail::corner_at(a, s)) return a.ribbons[*l].point(Vec2(0, 0));
  const double w = a.weights.w(s);
  Vec3 num = w == 0.0 ? Vec3::Zero() : Vec3(w * a.base.point(s));
  double den = w;
  for (int l = 0; l < a.size(); ++l) {
    const double wl = a.weights.w_ribbon[l](s);
    if (wl == 0.0) continue;
    num += wl * a.ribbons[l].point(a.kappa(l)(s));
    den += wl;
  }
  if (!(std::abs(den) > 0) || !std::isfinite(den)) {
    std::ostringstream os;
    os << "weight sum vanishes at (" << s.x() << "," << s.y() << ") away from corners";
    throw numerical_error("abc_surface", os.str());
  }
  return num / den;
}

/// Second-order jet of the blend via product, chain and quotient rules.
inline Vec3Jet blend_jet(const AbcSurface& a, const Vec2& s) {
  const ScalarJet w = a.weights.w.jet(s);
  const Vec3Jet zero3 = Vec3Jet::constant(Vec3::Zero(), Vec3::Zero());
  Vec3Jet num = w.f == 0.0 && w.fu == 0.0 && w.fv == 0.0 && w.fuu == 0.0 && w.fuv == 0.0 && w.fvv == 0.0
                    ? zero3
                    : w * a.base.jet3(s);
  ScalarJet den = w;
  for (int l = 0; l < a.size(); ++l) {
    const ScalarJet wl = a.weights.w_ribbon[l].jet(s);
    if (wl.f == 0.0 && wl.fu == 0.0 && wl.fv == 0.0 && wl.fuu == 0.0 && wl.fuv == 0.0 && wl.fvv == 0.0) continue;
    num = num + wl * ribbon_bar_jet(a, l, s);
    den = den + wl;
  }
  if (!(std::abs(den.f) > 0) || !std::isfinite(den.f)) {
    std::ostringstream os;
    os << "weight sum vanishes at (" << s.x() << "," << s.y() << ")";
    throw numerical_error("abc_surface", os.str());
  }
  return divide(num, den);
}

inline Vec3 eval_normal(const AbcSurface& a, const Vec2& s) {
  if (auto l = detail::corner_at(a, s)) return frame(a.ribbons[*l].jet3(Vec2(0, 0))).normal;
  return frame(blend_jet(a, s)).normal;
}

inline CurvatureTensor eval_curvature(const AbcSurface& a, const Vec2& s) {
  if (auto l = detail::corner_at(a, s)) return curvature_tensor(a.ribbons[*l].jet3(Vec2(0, 0)));
  return curvature_tensor(blend_jet(a, s));
}

// ---------------------------------------------------------------------------
// Contact order

// Slanted rays pick up O(tau_max) bias from the non-vanishing factors, so
// the window sits well inside the asymptotic regime.
struct SlopeOptions {
  double tau_min = 1e-6;
  double tau_max = 1e-3;
  int steps = 12;
  int rays = 3;  ///< fan of directions around the inward normal
  double fan_angle = std::numbers::pi / 6;
};

struct SlopeResult {
  std::vector<double> wbar;                  ///< slope of w / w_j per ray
  std::vector<std::vector<double>> wbar_l;   ///< [l][ray]; empty when w_l vanishes identically
  int skipped_rays = 0;
};

inline double regression_slope(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
    sxx += x[i] * x[i];
    sxy += x[i] * y[i];
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

/// Inward unit normal of curve j at s (q_j increases inward).
inline Vec2 inward_direction(const AbcSurface& a, int j, const Vec2& s) {
  const ScalarJet q = a.kappa(j).q.jet(s);
  return Vec2(q.fu, q.fv).normalized();
}

/// Log-log slopes of w/w_j and w_l/w_j along rays from sigma on curve j.
inline SlopeResult contact_order_estimate(const AbcSurface& a, int j, const Vec2& sigma, bool at_corner = false,
                                          const SlopeOptions& opt = {}) {
  SlopeResult res;
  res.wbar_l.assign(a.size(), {});
  const Vec2 nrm = inward_direction(a, j, sigma);
  for (int r = 0; r < opt.rays; ++r) {
    const double ang = opt.rays == 1 ? 0.0 : -opt.fan_angle + 2.0 * opt.fan_angle * r / (opt.rays - 1);
    const Vec2 dir(std::cos(ang) * nrm.x() - std::sin(ang) * nrm.y(), std::sin(ang) * nrm.x() + std::cos(ang) * nrm.y());
    if (!a.loop.traces.empty() && !contains(a.loop, sigma + opt.tau_max * dir)) {
      ++res.skipped_rays;
      continue;
    }
    std::vector<double> lx, lw;
    std::vector<std::vector<double>> ll(a.size());
    bool ok = true;
    std::vector<bool> zero(a.size(), false);
    for (int k = 0; k <= opt.steps; ++k) {
      const double t = opt.tau_min * std::pow(opt.tau_max / opt.tau_min, static_cast<double>(k) / opt.steps);
      const Vec2 s = sigma + t * dir;
      const double wj = a.weights.w_ribbon[j](s);
      if (!(wj > 0)) {
        ok = false;
        break;
      }
      lx.push_back(std::log(t));
      lw.push_back(std::log(std::abs(a.weights.w(s) / wj)));
      for (int l = 0; l < a.size(); ++l) {
        if (l == j) continue;
        const double v = a.weights.w_ribbon[l](s);
        if (v == 0.0) zero[l] = true;
        else ll[l].push_back(std::log(std::abs(v / wj)));
      }
    }
    if (!ok) {
      ++res.skipped_rays;
      continue;
    }
    res.wbar.push_back(regression_slope(lx, lw));
    for (int l = 0; l < a.size(); ++l) {
      if (l == j || zero[l]) continue;
      // Def. of contact order excludes l = j-1 at the corner sigma_j.
      if (at_corner && l == a.loop.prev(j)) continue;
      res.wbar_l[l].push_back(regression_slope(lx, ll[l]));
    }
  }
  return res;
}

// ---------------------------------------------------------------------------
// Theorem checks

enum class Level { G0 = 0, G1 = 1, G2 = 2 };

inline const char* to_string(Level l) {
  switch (l) {
    case Level::G0: return "G0";
    case Level::G1: return "G1";
    case Level::G2: return "G2";
  }
  return "?";
}

struct VerifyOptions {
  int rank_grid = 33;
  double rank_tol = 1e-8;
  double point_tol = 1e-9;
  double normal_tol = 1e-8;   ///< corner normal consistency (rad)
  double tensor_tol = 1e-6;   ///< corner curvature consistency
  double jac_tol = 1e-9;      ///< Dr-bar equality
  int boundary_samples = 200;
  double g1_offset = 1e-4;
  double g1_angle = 1e-3;
  double g2_offset = 1e-3;
  double g2_tensor = 1e-2;
  double g0_gap = 1e-9;
  int slope_points = 3;
  double slope_slack = 0.1;
  int corner_rays = 5;
};

struct CornerReport {
  int prev = 0, next = 0;
  double point_gap = 0.0;
  double normal_angle = 0.0;
  int orientation = 1;
  double tensor_gap = 0.0;
  double min_singular = 0.0;   ///< over the t-grid of the regularity condition
  double jac_gap = 0.0;        ///< |Dr-bar_{j-1}(0) - Dr-bar_j(0)|
  Mat32 dr_prev = Mat32::Zero(), dr_next = Mat32::Zero();
  bool point_ok = false, normal_ok = false, rank_ok = false, tensor_ok = false, jac_ok = false;
  double approach_normal = 0.0;  ///< max normal angle on corner-approach rays
  double approach_tensor = 0.0;  ///< max tensor gap on corner-approach rays
};

struct SegmentReport {
  int index = 0;
  int claimed_order = 0;
  double position_gap = 0.0;
  double normal_angle = 0.0;   ///< at offset g1_offset
  double tensor_gap = 0.0;     ///< at offset g2_offset
  double min_slope_w = 1e300;
  double min_slope_wl = 1e300;
};

struct ContactReport {
  Level level = Level::G0;
  std::vector<CornerReport> corners;
  std::vector<SegmentReport> segments;
  bool g0 = false, g1 = false, g2 = false;
  std::vector<std::string> failures;

  bool verdict() const {
    switch (level) {
      case Level::G0: return g0;
      case Level::G1: return g1;
      case Level::G2: return g2;
    }
    return false;
  }
};

inline ContactReport verify_contact(const AbcSurface& a, Level level, const VerifyOptions& opt = {}) {
  ContactReport rep;
  rep.level = level;
  bool h0 = true, h1 = true, h2 = true;   // theorem hypotheses
  bool m0 = true, m1 = true, m2 = true;   // measurements
  auto fail = [&](const std::string& s) { rep.failures.push_back(s); };

  for (const auto& c : a.links) {
    CornerReport cr;
    cr.prev = c.prev;
    cr.next = c.next;
    const Vec3Jet jp = ribbon_bar_jet(a, c.prev, c.sigma);
    const Vec3Jet jn = ribbon_bar_jet(a, c.next, c.sigma);
    cr.point_gap = (jp.f - jn.f).norm();
    cr.point_ok = cr.point_gap < opt.point_tol;
    // Normals and tensors of the ribbons themselves (reparametrization invariant).
    const Vec3Jet rp = a.ribbons[c.prev].jet3(a.kappa(c.prev)(c.sigma));
    const Vec3Jet rn = a.ribbons[c.next].jet3(a.kappa(c.next)(c.sigma));
    const auto cmp = compare_oriented(frame(rp).normal, curvature_tensor(rp), frame(rn).normal, curvature_tensor(rn));
    cr.normal_angle = cmp.normal_angle;
    cr.orientation = cmp.sign;
    cr.tensor_gap = cmp.tensor_diff;
    cr.normal_ok = cr.normal_angle < opt.normal_tol;
    cr.tensor_ok = cr.tensor_gap < opt.tensor_tol;
    cr.dr_prev = jacobian(jp);
    cr.dr_next = jacobian(jn);
    cr.min_singular = 1e300;
    const double scale = std::max(cr.dr_prev.norm(), cr.dr_next.norm());
    for (int k = 0; k < opt.rank_grid; ++k) {
      const double t = static_cast<double>(k) / (opt.rank_grid - 1);
      const Mat32 m = t * cr.dr_next + (1 - t) * cr.dr_prev;
      Eigen::JacobiSVD<Mat32> svd(m);
      cr.min_singular = std::min(cr.min_singular, svd.singularValues()[1]);
    }
    cr.rank_ok = cr.min_singular > opt.rank_tol * std::max(1.0, scale);
    cr.jac_gap = (cr.dr_prev - cr.dr_next).norm();
    cr.jac_ok = cr.jac_gap < opt.jac_tol * std::max(1.0, scale);
    const std::string tag = "corner " + std::to_string(c.prev) + "|" + std::to_string(c.next);
    if (!cr.point_ok) fail(tag + ": ribbon corner points differ by " + std::to_string(cr.point_gap));
    if (!cr.normal_ok) fail(tag + ": ribbon normals differ by " + std::to_string(cr.normal_angle) + " rad");
    if (!cr.rank_ok) fail(tag + ": regularity condition fails (min singular value " + std::to_string(cr.min_singular) + ")");
    if (level == Level::G2 && !cr.tensor_ok) fail(tag + ": ribbon curvature tensors differ");
    if (level == Level::G2 && !cr.jac_ok) {
      std::ostringstream os;
      os << tag << ": reparametrized ribbon Jacobians differ by " << cr.jac_gap;
      fail(os.str());
    }
    h0 = h0 && cr.point_ok;
    h1 = h1 && cr.point_ok && cr.normal_ok && cr.rank_ok;
    h2 = h2 && cr.point_ok && cr.normal_ok && cr.rank_ok && cr.tensor_ok && cr.jac_ok;

    // Corner-approach rays through the interior sector.
    if (!a.loop.traces.empty()) {
      const Vec2 d0 = inward_direction(a, c.next, c.sigma), d1 = inward_direction(a, c.prev, c.sigma);
      for (int k = 1; k < opt.corner_rays + 1; ++k) {
        const double t = static_cast<double>(k) / (opt.corner_rays + 1);
        const Vec2 dir = ((1 - t) * d0 + t * d1).normalized();
        for (double rho : {opt.g1_offset, opt.g2_offset}) {
          const Vec2 s = c.sigma + rho * dir;
          if (!contains(a.loop, s)) continue;
          const Vec3Jet ja = blend_jet(a, s);
          const Vec3 na = frame(ja).normal;
          const auto ea = curvature_tensor(ja);
          double nmax = 0.0, emax = 0.0;
          for (int l : {c.prev, c.next}) {
            const Vec3Jet jr = a.ribbons[l].jet3(a.kappa(l)(s));
            const auto q = compare_oriented(na, ea, frame(jr).normal, curvature_tensor(jr));
            nmax = std::max(nmax, q.normal_angle);
            emax = std::max(emax, q.tensor_diff);
          }
          if (rho == opt.g1_offset) cr.approach_normal = std::max(cr.approach_normal, nmax);
          if (rho == opt.g2_offset) cr.approach_tensor = std::max(cr.approach_tensor, emax);
        }
      }
    }
    rep.corners.push_back(cr);
  }

  // Boundary segments.
  for (int j = 0; j < a.size() && !a.loop.traces.empty(); ++j) {
    SegmentReport sr;
    sr.index = j;
    sr.claimed_order = a.weights.exponents.empty() ? 0 : a.weights.exponents[j] - 1;
    const int n = opt.boundary_samples;
    for (int i = 0; i <= n; ++i) {
      const double u = static_cast<double>(i) / n;
      // Locate gamma_j(u) from the nearest trace point.
      const auto& tr = a.loop.traces[j];
      const double pos = u * (tr.size() - 1);
      const std::size_t i0 = std::min<std::size_t>(static_cast<std::size_t>(pos), tr.size() - 2);
      Vec2 g = tr[i0] + (pos - i0) * (tr[i0 + 1] - tr[i0]);
      g = solve_corner(a.kappa(j), Vec2(u, 0.0), g);
      sr.position_gap = std::max(sr.position_gap, (eval_abc(a, g) - a.ribbons[j].point(Vec2(u, 0.0))).norm());
      if (i == 0 || i == n) continue;  // corners are covered by approach rays
      const Vec2 nrm = inward_direction(a, j, g);
      for (double rho : {opt.g1_offset, opt.g2_offset}) {
        const Vec2 s = g + rho * nrm;
        if (!contains(a.loop, s)) continue;
        const Vec3Jet ja = blend_jet(a, s);
        const Vec3Jet jr = a.ribbons[j].jet3(a.kappa(j)(s));
        const auto q = compare_oriented(frame(ja).normal, curvature_tensor(ja), frame(jr).normal, curvature_tensor(jr));
        if (rho == opt.g1_offset) sr.normal_angle = std::max(sr.normal_angle, q.normal_angle);
        if (rho == opt.g2_offset) sr.tensor_gap = std::max(sr.tensor_gap, q.tensor_diff);
      }
    }
    for (int k = 1; k <= opt.slope_points; ++k) {
      const double u = static_cast<double>(k) / (opt.slope_points + 1);
      const Vec2 g = solve_corner(a.kappa(j), Vec2(u, 0.0), a.loop.traces[j][static_cast<std::size_t>(u * (a.loop.traces[j].size() - 1))]);
      const auto sl = contact_order_estimate(a, j, g);
      for (double v : sl.wbar) sr.min_slope_w = std::min(sr.min_slope_w, v);
      for (const auto& vs : sl.wbar_l)
        for (double v : vs) sr.min_slope_wl = std::min(sr.min_slope_wl, v);
    }
    const std::string tag = "segment " + std::to_string(j);
    if (sr.position_gap >= opt.g0_gap) {
      m0 = false;
      fail(tag + ": boundary position gap " + std::to_string(sr.position_gap));
    }
    const double need = sr.claimed_order + 1 - opt.slope_slack;
    const bool slopes_ok = sr.min_slope_w >= need && sr.min_slope_wl >= need;
    if (level >= Level::G1) {
      if (sr.normal_angle >= opt.g1_angle) {
        m1 = false;
        fail(tag + ": normal angle " + std::to_string(sr.normal_angle) + " rad at offset");
      }
      if (!slopes_ok || sr.claimed_order < 1) {
        m1 = false;
        fail(tag + ": contact order below 1 (slope " + std::to_string(std::min(sr.min_slope_w, sr.min_slope_wl)) + ")");
      }
    }
    if (level == Level::G2) {
      if (sr.tensor_gap >= opt.g2_tensor) {
        m2 = false;
        fail(tag + ": curvature tensor gap " + std::to_string(sr.tensor_gap) + " at offset");
      }
      if (!slopes_ok || sr.claimed_order < 2) {
        m2 = false;
        fail(tag + ": contact order below 2");
      }
    }
    rep.segments.push_back(sr);
  }
  for (const auto& cr : rep.corners) {
    if (cr.approach_normal >= opt.g1_angle && level >= Level::G1) {
      m1 = false;
      fail("corner " + std::to_string(cr.next) + ": normal angle on approach rays " + std::to_string(cr.approach_normal));
    }
    if (cr.approach_tensor >= opt.g2_tensor && level == Level::G2) {
      m2 = false;
      fail("corner " + std::to_string(cr.next) + ": curvature gap on approach rays " + std::to_string(cr.approach_tensor));
    }
  }
  rep.g0 = h0 && m0;
  rep.g1 = rep.g0 && h1 && m1;
  rep.g2 = rep.g1 && h2 && m2;
  return rep;
}

// ---------------------------------------------------------------------------
// The closed-form counterexample

/// Ribbons [x, y, x^2] and [2x, 2y, 4x^2] with weights x^3 and y^3, zero base,
/// identity reparametrizations; the corner sits at the origin.
inline AbcSurface build_counterexample() {
  const Rect dom{0, 1, 0, 1};
  const KnotVector k2u = KnotVector::bezier(2, 0, 1), k1v = KnotVector::bezier(1, 0, 1);
  auto ribbon = [&](double s, double c) {
    const Spline2 x = interpolate(k2u, k1v, [&](const Vec2& p) { return s * p.x(); });
    const Spline2 y = interpolate(k2u, k1v, [&](const Vec2& p) { return s * p.y(); });
    const Spline2 z = interpolate(k2u, k1v, [&](const Vec2& p) { return c * p.x() * p.x(); });
    return VectorSpline({x, y, z});
  };
  const Spline2 zero = Spline2::constant(0.0, dom);
  AbcSurface a;
  a.base = VectorSpline({zero, zero, zero});
  a.ribbons = {ribbon(1.0, 1.0), ribbon(2.0, 4.0)};
  const Reparametrization id{Spline2::affine(0, 1, 0, dom), Spline2::affine(0, 0, 1, dom)};
  a.loop.reparams = {id, id};
  a.loop.corners = {Vec2(0, 0)};
  a.loop.widths = {1.0, 1.0};
  a.weights.w.scale = 0.0;
  FactoredWeight wp, wn;
  wp.factors = {Spline2::affine(0, 1, 0, dom)};
  wp.exponents = {3};
  wn.factors = {Spline2::affine(0, 0, 1, dom)};
  wn.exponents = {3};
  a.weights.w_ribbon = {wp, wn};
  a.weights.exponents = {3, 3};
  a.links = {{Vec2(0, 0), 0, 1}};
  return a;
}

/// The closed form of the counterexample blend.
inline Vec3 counterexample_closed_form(double x, double y) {
  const double x3 = x * x * x, y3 = y * y * y, d = x3 + y3;
  return Vec3(x * (x3 + 2 * y3), y * (x3 + 2 * y3), x * x * (x3 + 4 * y3)) / d;
}

}  // namespace abc
