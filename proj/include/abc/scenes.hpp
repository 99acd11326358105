#pragma once

// Programmatic example scenes.  Ribbons are built as Taylor ribbons of a
// target surface F along planar edge curves: r(u,v) is the degree-m
// expansion in v of F(e(u) + v D(u)), so all ribbons derived from the same F
// agree in position, tangent plane and curvature at shared corners.

#include <cmath>
#include <functional>
#include <numbers>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "abc/error.hpp"
#include "abc/fit.hpp"
#include "abc/spline.hpp"
#include "abc/surface.hpp"
#include "abc/trim.hpp"
#include "abc/weights.hpp"

namespace abc {

using SurfaceFn = std::function<Vec3Jet(const Vec2&)>;

/// Edge e(u) and transversal direction D(u) in the parameter plane of F.
struct EdgeMap {
  std::function<Vec2(double)> e;
  std::function<Vec2(double)> d;
};

inline VectorSpline taylor_ribbon(const SurfaceFn& f, const EdgeMap& edge, const KnotVector& ku, int m) {
  if (m < 0 || m > 2) throw validation_error("scenes", "Taylor ribbons support transversal degree 0..2");
  const KnotVector kv = KnotVector::bezier(m, 0.0, 1.0);
  std::vector<Spline2> comps;
  for (int c = 0; c < 3; ++c) {
    comps.push_back(interpolate(ku, kv, [&](const Vec2& t) {
      const Vec2 x = edge.e(t.x()), d = edge.d(t.x());
      const Vec3Jet j = f(x);
      double g = j.f[c];
      if (m >= 1) g += t.y() * (j.fu[c] * d.x() + j.fv[c] * d.y());
      if (m >= 2)
        g += 0.5 * t.y() * t.y() * (j.fuu[c] * d.x() * d.x() + 2 * j.fuv[c] * d.x() * d.y() + j.fvv[c] * d.y() * d.y());
      return g;
    }));
  }
  return VectorSpline(comps);
}

/// Spline interpolant of a surface function.
inline VectorSpline spline_of(const SurfaceFn& f, const KnotVector& ku, const KnotVector& kv) {
  std::vector<Spline2> comps;
  for (int c = 0; c < 3; ++c) comps.push_back(interpolate(ku, kv, [&](const Vec2& s) { return f(s).f[c]; }));
  return VectorSpline(comps);
}

/// Graph surface [x, y, h(x,y)] from a scalar jet function.
inline SurfaceFn graph(std::function<ScalarJet(const Vec2&)> h) {
  return [h](const Vec2& s) {
    const ScalarJet z = h(s);
    Vec3Jet j;
    j.f = {s.x(), s.y(), z.f};
    j.fu = {1, 0, z.fu};
    j.fv = {0, 1, z.fv};
    j.fuu = {0, 0, z.fuu};
    j.fuv = {0, 0, z.fuv};
    j.fvv = {0, 0, z.fvv};
    return j;
  };
}

/// Affine scalar a + bu*x + bv*y elevated to degree [n,n] over dom.
inline Spline2 affine_spline(double a, double bu, double bv, const Rect& dom, int n) {
  return interpolate(KnotVector::bezier(n, dom.u0, dom.u1), KnotVector::bezier(n, dom.v0, dom.v1),
                     [=](const Vec2& s) { return a + bu * s.x() + bv * s.y(); });
}

// ---------------------------------------------------------------------------
// Unit square

struct SquareOptions {
  int n = 3;            ///< degree of base and reparametrizations
  int m = 2;            ///< transversal ribbon degree
  int r = 3;            ///< uniform exponent
  std::vector<int> exponents;  ///< overrides r when non-empty
  bool plateau = true;
  double h = 0.25;
  int ribbon0_inner_knots = 0;  ///< uniform inner u-knots in ribbon 0
  int ribbon_spans = 1;         ///< uniform spans in every ribbon (before ribbon 0 extras)
};

/// Unit square domain, base and ribbons from two different quadratic graphs,
/// affine reparametrizations.  a = b in the middle and follows the ribbons
/// near the edges.
inline AbcSurface square_scene(const SquareOptions& o = {}) {
  const Rect box{-0.25, 1.25, -0.25, 1.25};
  const auto target = graph([](const Vec2& s) {
    const double x = s.x(), y = s.y();
    return ScalarJet{0.3 * x * y - 0.2 * x * x + 0.25 * y * y, 0.3 * y - 0.4 * x, 0.3 * x + 0.5 * y, -0.4, 0.3, 0.5};
  });
  const auto basefn = graph([](const Vec2& s) {
    const double x = s.x(), y = s.y();
    return ScalarJet{0.1 + 0.3 * x * y - 0.2 * x * x + 0.25 * y * y + 0.2 * x * (1 - x) * y * (1 - y), 0, 0, 0, 0, 0};
  });
  const VectorSpline base = spline_of(basefn, KnotVector::uniform(o.n, box.u0, box.u1, 3),
                                      KnotVector::uniform(o.n, box.v0, box.v1, 3));
  // phi_l maps ribbon parameters to the plane; kappa_l is its inverse.
  const std::vector<EdgeMap> edges = {
      {[](double u) { return Vec2(u, 0); }, [](double) { return Vec2(0, 1); }},
      {[](double u) { return Vec2(1, u); }, [](double) { return Vec2(-1, 0); }},
      {[](double u) { return Vec2(1 - u, 1); }, [](double) { return Vec2(0, -1); }},
      {[](double u) { return Vec2(0, 1 - u); }, [](double) { return Vec2(1, 0); }}};
  std::vector<VectorSpline> ribbons;
  for (int l = 0; l < 4; ++l) {
    int spans = o.ribbon_spans + (l == 0 ? o.ribbon0_inner_knots : 0);
    ribbons.push_back(taylor_ribbon(target, edges[l], KnotVector::uniform(o.n, 0, 1, spans), o.m));
  }
  const int n = o.n;
  std::vector<Reparametrization> k = {{affine_spline(0, 1, 0, box, n), affine_spline(0, 0, 1, box, n)},
                                      {affine_spline(0, 0, 1, box, n), affine_spline(1, -1, 0, box, n)},
                                      {affine_spline(1, -1, 0, box, n), affine_spline(1, 0, -1, box, n)},
                                      {affine_spline(1, 0, -1, box, n), affine_spline(0, 1, 0, box, n)}};
  TrimLoop loop = make_loop(k, std::vector<double>(4, o.h), {Vec2(0, 0), Vec2(1, 0), Vec2(1, 1), Vec2(0, 1)}, 100);
  const std::vector<int> ex = o.exponents.empty() ? std::vector<int>(4, o.r) : o.exponents;
  WeightSystem ws = o.plateau ? plateau_weights(loop, ex) : plain_weights(loop, ex);
  return make_surface(base, ribbons, loop, ws);
}

// ---------------------------------------------------------------------------
// Hexagon with cubic boundary curves (weights only)

/// Regular hexagon of circumradius 1 with edges bent by a cubic term; every
/// q_l has coordinate degree [3,3].
inline TrimLoop hexagon_loop(double h = 0.15, double bend = 0.08) {
  const Rect box{-1.3, 1.3, -1.3, 1.3};
  const int L = 6;
  std::vector<Vec2> v;
  for (int l = 0; l < L; ++l) {
    const double a = std::numbers::pi / 3 * l - std::numbers::pi / 2 - std::numbers::pi / 6;
    v.emplace_back(std::cos(a), std::sin(a));
  }
  std::vector<Reparametrization> k;
  const KnotVector k3 = KnotVector::bezier(3, box.u0, box.u1), k3v = KnotVector::bezier(3, box.v0, box.v1);
  for (int l = 0; l < L; ++l) {
    const Vec2 a = v[l], b = v[(l + 1) % L];
    const Vec2 t = b - a;
    const double len2 = t.squaredNorm();
    const Vec2 nrm = Vec2(-t.y(), t.x()) / std::sqrt(len2);  // inward for counterclockwise order
    auto s_of = [=](const Vec2& x) { return (x - a).dot(t) / len2; };
    auto d_of = [=](const Vec2& x) { return (x - a).dot(nrm); };
    const Spline2 p = interpolate(k3, k3v, s_of);
    const Spline2 q = interpolate(k3, k3v, [=](const Vec2& x) {
      const double s = s_of(x);
      return d_of(x) + bend * s * (1 - s) * (s - 0.5);
    });
    k.push_back({p, q});
  }
  return make_loop(k, std::vector<double>(L, h), v, 100);
}

// ---------------------------------------------------------------------------
// Scenes with fitted reparametrizations

struct FitSceneOptions {
  FitSpace space;
  Rect search;                  ///< parameter rectangle of b for projections
  std::vector<double> widths;   ///< stripe widths h_l (in q units)
  std::vector<int> exponents;
  bool plateau = true;
  bool corner_jacobian = false;  ///< impose Dr-bar equality at corners
  bool straighten = false;       ///< straight p level sets at inner ribbon knots
  int harvest_u = 24;
  int harvest_v = 8;
  double u_extend = 0.15;
  double v_lo = -0.1;
  double v_hi = 0.8;
  double lambda = 1e-6;
  int trace_samples = 200;
};

struct FittedScene {
  AbcSurface surface;
  std::vector<FitReport> fits;
  std::vector<Vec2> corners;
  int dropped = 0;
};

/// Fits kappa_l by projecting ribbon samples onto the base, then builds the
/// loop, the weights and the surface.
inline FittedScene fit_scene(const VectorSpline& base, const std::vector<VectorSpline>& ribbons,
                             const FitSceneOptions& o) {
  const int L = static_cast<int>(ribbons.size());
  if (L < 3) throw validation_error("scenes", "at least three ribbons required");
  FittedScene out;
  for (int l = 0; l < L; ++l) {
    const VectorSpline& prev = ribbons[(l + L - 1) % L];
    const Vec3 x = ribbons[l].point(Vec2(0, 0));
    if ((prev.point(Vec2(1, 0)) - x).norm() > 1e-9) {
      std::ostringstream os;
      os << "ribbons " << (l + L - 1) % L << " and " << l << " do not meet at corner " << l;
      throw validation_error("scenes", os.str());
    }
    const auto c = harvest_correspondences(base, ribbons[l], {Vec2(0, 0)}, o.search);
    if (c.approximate.empty()) throw numerical_error("scenes", "corner projection failed");
    out.corners.push_back(c.approximate[0].sigma);
  }
  std::vector<Reparametrization> ks;
  for (int l = 0; l < L; ++l) {
    const VectorSpline& r = ribbons[l];
    std::vector<Vec2> taus;
    for (int i = 0; i <= o.harvest_u; ++i)
      for (int j = 0; j <= o.harvest_v; ++j)
        taus.emplace_back(-o.u_extend + (1 + 2 * o.u_extend) * i / o.harvest_u,
                          o.v_lo + (o.v_hi - o.v_lo) * j / o.harvest_v);
    CorrespondenceSet cs = harvest_correspondences(base, r, taus, o.search);
    out.dropped += static_cast<int>(cs.dropped.size());
    const Vec2 s0 = out.corners[l], s1 = out.corners[(l + 1) % L];
    cs.interpolate.push_back({s0, Vec2(0, 0)});
    cs.interpolate.push_back({s1, Vec2(1, 0)});
    if (o.straighten) {
      // Along a line kappa has degree ku + kv per piece; pin every piece.
      const int count = o.space.ku.degree() + o.space.kv.degree() + 1;
      for (double u : r.knots_u().inner_knots()) {
        const auto a = harvest_correspondences(base, r, {Vec2(u, 0)}, o.search);
        if (a.approximate.empty()) throw numerical_error("scenes", "level-set anchor projection failed");
        const Vec2 anchor = a.approximate[0].sigma;
        const Vec2 delta = levelset_direction(base, anchor, r, u);
        const double reach = kLevelsetReach * o.widths[l];
        std::vector<double> ts = {0.0, reach};
        for (int d = 0; d < 2; ++d) {
          if (std::abs(delta[d]) < 1e-14) continue;
          for (double k : (d == 0 ? o.space.ku : o.space.kv).breaks()) {
            const double t = (k - anchor[d]) / delta[d];
            if (t > 1e-9 && t < reach - 1e-9) ts.push_back(t);
          }
        }
        std::sort(ts.begin(), ts.end());
        for (std::size_t i = 0; i + 1 < ts.size(); ++i) {
          const Vec2 a0 = anchor + ts[i] * delta;
          auto seg = straightening_constraints(a0, delta, u, ts[i + 1] - ts[i], count);
          for (std::size_t k = (i == 0 ? 0 : 1); k < seg.size(); ++k) {
            seg[k].tau.y() += ts[i];
            cs.interpolate.push_back(seg[k]);
          }
        }
      }
    }
    std::vector<JacobianCondition> jac;
    if (o.corner_jacobian) {
      for (int e = 0; e < 2; ++e) {
        const Vec2 sig = e == 0 ? s0 : s1;
        const Vec2 tau = e == 0 ? Vec2(0, 0) : Vec2(1, 0);
        const Vec3Jet rj = r.jet3(tau);
        const Mat32 t = corner_tangent_frame(jacobian(base.jet3(sig)), frame(rj).normal);
        jac.push_back({sig, jacobian_preimage(jacobian(rj), t)});
      }
    }
    FitOptions fo;
    fo.lambda = o.lambda;
    FitReport rep;
    ks.push_back(fit_reparam(o.space, cs, jac, fo, &rep));
    out.fits.push_back(rep);
  }
  TrimLoop loop = make_loop(ks, o.widths, out.corners, o.trace_samples);
  WeightSystem ws = o.plateau ? plateau_weights(loop, o.exponents) : plain_weights(loop, o.exponents);
  out.surface = make_surface(base, ribbons, loop, ws);
  return out;
}

/// Quadratic edge from a to b bulging by `bulge` (relative to the chord,
/// positive to the right of travel), with an inward direction of length
/// `depth` that tilts linearly along the edge by `skew`.
inline EdgeMap bent_edge(const Vec2& a, const Vec2& b, double bulge, double depth, double skew) {
  const Vec2 t = b - a;
  const Vec2 in = Vec2(-t.y(), t.x()).normalized();
  const Vec2 c = 0.5 * (a + b) - bulge * t.norm() * in;
  return {[=](double u) { return Vec2((1 - u) * (1 - u) * a + 2 * u * (1 - u) * c + u * u * b); },
          [=](double u) { return Vec2(depth * (in + skew * (u - 0.5) * t.normalized())); }};
}

struct TriangleOptions {
  bool corner_jacobian = true;
  int r = 3;
  double h = 0.35;
};

/// Curved triangular hole: cubic target graph, quadratic edges, skewed
/// transversals, base differing from the target by a bump.  Intended as a
/// G2 scene (m = 2, r = 3).
inline FittedScene triangle_scene(const TriangleOptions& to = {}) {
  const auto target = graph([](const Vec2& s) {
    const double x = s.x(), y = s.y();
    return ScalarJet{0.2 * x * x * x - 0.3 * x * y * y + 0.25 * x * y + 0.1 * y * y,
                     0.6 * x * x - 0.3 * y * y + 0.25 * y,
                     -0.6 * x * y + 0.25 * x + 0.2 * y,
                     1.2 * x,
                     -0.6 * y + 0.25,
                     -0.6 * x + 0.2};
  });
  const auto basefn = graph([](const Vec2& s) {
    const double x = s.x(), y = s.y();
    const double z = 0.2 * x * x * x - 0.3 * x * y * y + 0.25 * x * y + 0.1 * y * y;
    return ScalarJet{z + 0.02 + 0.08 * (x - 0.5) * (x - 0.5) * y, 0, 0, 0, 0, 0};
  });
  const Rect box{-0.35, 1.35, -0.35, 1.2};
  const VectorSpline base = spline_of(basefn, KnotVector::uniform(3, box.u0, box.u1, 3),
                                      KnotVector::uniform(3, box.v0, box.v1, 3));
  const std::vector<Vec2> v = {Vec2(0, 0), Vec2(1, 0), Vec2(0.5, 0.85)};
  std::vector<VectorSpline> ribbons;
  for (int l = 0; l < 3; ++l)
    ribbons.push_back(taylor_ribbon(target, bent_edge(v[l], v[(l + 1) % 3], 0.06, 0.3, 0.25),
                                    KnotVector::bezier(6, 0, 1), 2));
  FitSceneOptions o;
  o.space = {KnotVector::uniform(3, box.u0, box.u1, 4), KnotVector::uniform(3, box.v0, box.v1, 4)};
  o.search = box;
  o.widths.assign(3, to.h);
  o.exponents.assign(3, to.r);
  o.corner_jacobian = to.corner_jacobian;
  o.v_hi = 1.0;
  return fit_scene(base, ribbons, o);
}

/// Fender-like pair of quadrilateral patches on a saddle target, sharing one
/// edge; linear-in-v ribbons, r = 2 (G1).  Patch 1 mirrors the shared ribbon.
inline std::vector<FittedScene> fender_scene(int r = 2, double h = 0.35) {
  const auto target = graph([](const Vec2& s) {
    const double x = s.x(), y = s.y();
    return ScalarJet{0.4 * x * x - 0.1 * y * y + 0.15 * x * y, 0.8 * x + 0.15 * y, -0.2 * y + 0.15 * x, 0.8, 0.15,
                     -0.2};
  });
  auto bump = [](double dz) {
    return graph([dz](const Vec2& s) {
      const double x = s.x(), y = s.y();
      return ScalarJet{0.4 * x * x - 0.1 * y * y + 0.15 * x * y + dz + 0.05 * x * y, 0, 0, 0, 0, 0};
    });
  };
  // Shared edge from (1,0.8) to (-0.1,0.7) for patch 0, reversed for patch 1.
  const std::vector<std::vector<Vec2>> quads = {{Vec2(0, 0), Vec2(1, 0), Vec2(1, 0.8), Vec2(-0.1, 0.7)},
                                                {Vec2(-0.1, 0.7), Vec2(1, 0.8), Vec2(1.05, 1.6), Vec2(0, 1.5)}};
  std::vector<FittedScene> out;
  for (int p = 0; p < 2; ++p) {
    const auto& v = quads[p];
    const Rect box = p == 0 ? Rect{-0.4, 1.4, -0.35, 1.1} : Rect{-0.45, 1.4, 0.35, 1.9};
    const VectorSpline base = spline_of(bump(p == 0 ? 0.03 : -0.03), KnotVector::uniform(3, box.u0, box.u1, 3),
                                        KnotVector::uniform(3, box.v0, box.v1, 3));
    std::vector<VectorSpline> ribbons;
    for (int l = 0; l < 4; ++l) {
      // The shared edge is straight so both sides describe the same curve.
      const bool shared = (p == 0 && l == 2) || (p == 1 && l == 0);
      ribbons.push_back(taylor_ribbon(target, bent_edge(v[l], v[(l + 1) % 4], shared ? 0.0 : 0.05, 0.3, 0.2),
                                      KnotVector::uniform(4, 0, 1, 2), 1));
    }
    FitSceneOptions o;
    o.space = {KnotVector::uniform(3, box.u0, box.u1, 4), KnotVector::uniform(3, box.v0, box.v1, 4)};
    o.search = box;
    o.widths.assign(4, h);
    o.exponents.assign(4, r);
    o.v_hi = 1.0;
    out.push_back(fit_scene(base, ribbons, o));
  }
  return out;
}

/// Two cylinders y^2+z^2 = 1 and x^2+z^2 = 1 cut along their common curve
/// (sin t, sin t, cos t).  Each side is an ABC surface over (x, t) whose cut
/// ribbon carries 9 inner knots.  The second patch swaps x and y.
inline std::vector<FittedScene> cylinders_scene(int r = 1, double h = 0.3, bool straighten = false) {
  const double t0 = -std::numbers::pi / 3, t1 = std::numbers::pi / 3;
  const SurfaceFn cyl = [](const Vec2& s) {
    const double c = std::cos(s.y()), sn = std::sin(s.y());
    Vec3Jet j;
    j.f = {s.x(), sn, c};
    j.fu = {1, 0, 0};
    j.fv = {0, c, -sn};
    j.fuu = {0, 0, 0};
    j.fuv = {0, 0, 0};
    j.fvv = {0, -sn, -c};
    return j;
  };
  const SurfaceFn basefn = [](const Vec2& s) {
    const double rad = 1.0 + 0.03 * (s.x() + 1.6) * std::cos(s.y());
    Vec3Jet j;
    j.f = {s.x(), rad * std::sin(s.y()), rad * std::cos(s.y())};
    return j;
  };
  const Rect box{-1.75, 1.05, -1.3, 1.3};
  const VectorSpline base = spline_of(basefn, KnotVector::uniform(3, box.u0, box.u1, 6),
                                      KnotVector::uniform(3, box.v0, box.v1, 8));
  const Vec2 p0(-1.5, t0), p1(std::sin(t0), t0), p2(std::sin(t1), t1), p3(-1.5, t1);
  const double d = 0.3;
  std::vector<EdgeMap> edges = {
      {[=](double u) { return Vec2((1 - u) * p0 + u * p1); }, [=](double) { return Vec2(0, d); }},
      {[=](double u) {
         const double t = t0 + u * (t1 - t0);
         return Vec2(std::sin(t), t);
       },
       [=](double) { return Vec2(-d, 0); }},
      {[=](double u) { return Vec2((1 - u) * p2 + u * p3); }, [=](double) { return Vec2(0, -d); }},
      {[=](double u) { return Vec2((1 - u) * p3 + u * p0); }, [=](double) { return Vec2(d, 0); }}};
  std::vector<VectorSpline> ribbons;
  for (int l = 0; l < 4; ++l)
    ribbons.push_back(taylor_ribbon(cyl, edges[l], KnotVector::uniform(3, 0, 1, l == 1 ? 10 : 4), 1));
  FitSceneOptions o;
  o.space = {KnotVector::uniform(3, box.u0, box.u1, 6), KnotVector::uniform(3, box.v0, box.v1, straighten ? 12 : 6)};
  o.search = box;
  o.widths.assign(4, h);
  o.exponents.assign(4, r);
  o.straighten = straighten;
  o.harvest_u = 40;
  o.v_hi = 1.0;
  FittedScene a = fit_scene(base, ribbons, o);
  // Second cylinder: same parameter plane, x and y swapped in space.
  auto swap_xy = [](const VectorSpline& s) { return VectorSpline({s[1], s[0], s[2]}); };
  FittedScene b = a;
  b.surface.base = swap_xy(a.surface.base);
  for (auto& rb : b.surface.ribbons) rb = swap_xy(rb);
  return {a, b};
}

}  // namespace abc
