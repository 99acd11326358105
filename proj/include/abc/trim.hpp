#pragma once

// Implicitly trimmed domains.  A reparametrization kappa = [p, q] defines a
// boundary curve as the preimage of the segment [0,1] x {0}; consecutive
// curves meet at corners where kappa_l = [0,0] and kappa_{l-1} = [1,0].

#include <algorithm>
#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "abc/error.hpp"
#include "abc/jet.hpp"
#include "abc/spline.hpp"

namespace abc {

struct Reparametrization {
  Spline2 p;
  Spline2 q;

  Vec2 operator()(const Vec2& s) const { return {p(s), q(s)}; }

  Vec2Jet jet(const Vec2& s) const {
    const ScalarJet a = p.jet(s), b = q.jet(s);
    return {{a.f, b.f}, {a.fu, b.fu}, {a.fv, b.fv}, {a.fuu, b.fuu}, {a.fuv, b.fuv}, {a.fvv, b.fvv}};
  }

  Mat2 jacobian(const Vec2& s) const { return abc::jacobian(jet(s)); }

  /// The pair as a planar vector spline (requires shared knots).
  VectorSpline map() const { return VectorSpline({p, q}); }

  Reparametrization flipped() const { return {p, q.negated()}; }
};

/// Newton solve of kappa(s) = target.
inline Vec2 solve_corner(const Reparametrization& k, const Vec2& target, Vec2 guess, int max_iter = 50,
                         double tol = 1e-11) {
  double res = 0.0;
  for (int it = 0; it < max_iter; ++it) {
    const Vec2 r = k(guess) - target;
    res = r.norm();
    if (res < tol) return guess;
    const Mat2 d = k.jacobian(guess);
    if (std::abs(d.determinant()) < 1e-300) break;
    guess -= d.partialPivLu().solve(r);
  }
  const Vec2 r = k(guess) - target;
  if (r.norm() < tol) return guess;
  std::ostringstream os;
  os << "corner Newton did not converge, last residual " << r.norm();
  throw numerical_error("trim_domain", os.str());
}

/// Points xi_i with kappa(xi_i) = [i/M, 0], by continuation from `start`
/// (a point near the u = 0 end of the curve).
inline std::vector<Vec2> trace_boundary(const Reparametrization& k, int samples, const Vec2& start) {
  if (samples < 1) throw validation_error("trim_domain", "trace needs at least one step");
  const std::string stage = "trim_domain";
  auto correct = [&](Vec2 x, double u, bool& ok) {
    ok = false;
    for (int it = 0; it < 30; ++it) {
      const Vec2 r = k(x) - Vec2(u, 0.0);
      if (r.norm() < 1e-12) {
        ok = true;
        return x;
      }
      const Mat2 d = k.jacobian(x);
      if (std::abs(d.determinant()) < 1e-14) return x;
      x -= d.partialPivLu().solve(r);
    }
    ok = (k(x) - Vec2(u, 0.0)).norm() < 1e-10;
    return x;
  };
  bool ok = false;
  Vec2 x = correct(start, 0.0, ok);
  if (!ok) throw numerical_error(stage, "trace start does not converge to the curve at u=0");
  std::vector<Vec2> pts{x};
  for (int i = 1; i <= samples; ++i) {
    const double u1 = static_cast<double>(i) / samples;
    double u = static_cast<double>(i - 1) / samples;
    double step = u1 - u;
    int halvings = 0;
    while (u < u1) {
      step = std::min(step, u1 - u);
      const Mat2 d = k.jacobian(x);
      if (std::abs(d.determinant()) < 1e-14) {
        std::ostringstream os;
        os << "singular reparametrization Jacobian along the trace at u=" << u;
        throw numerical_error(stage, os.str());
      }
      const Vec2 tangent = d.partialPivLu().solve(Vec2(1.0, 0.0));
      const Vec2 pred = x + step * tangent;
      Vec2 y = correct(pred, u + step, ok);
      if (ok && (y - pred).norm() < 0.5 * std::max(step * tangent.norm(), 1e-12) + 1e-9) {
        x = y;
        u += step;
        halvings = 0;
      } else {
        step *= 0.5;
        if (++halvings > 40) {
          std::ostringstream os;
          os << "trace corrector failed at u=" << u;
          throw numerical_error(stage, os.str());
        }
      }
    }
    pts.push_back(x);
  }
  return pts;
}

// ---------------------------------------------------------------------------
// Polygons

inline double polygon_area(const std::vector<Vec2>& poly) {
  double a = 0.0;
  for (std::size_t i = 0; i < poly.size(); ++i) {
    const Vec2& p = poly[i];
    const Vec2& q = poly[(i + 1) % poly.size()];
    a += p.x() * q.y() - q.x() * p.y();
  }
  return 0.5 * a;
}

inline Vec2 polygon_centroid(const std::vector<Vec2>& poly) {
  double a = 0.0;
  Vec2 c = Vec2::Zero();
  for (std::size_t i = 0; i < poly.size(); ++i) {
    const Vec2& p = poly[i];
    const Vec2& q = poly[(i + 1) % poly.size()];
    const double cr = p.x() * q.y() - q.x() * p.y();
    a += cr;
    c += cr * (p + q);
  }
  if (std::abs(a) < 1e-300) return poly.front();
  return c / (3.0 * a);
}

/// Even-odd rule.
inline bool point_in_polygon(const std::vector<Vec2>& poly, const Vec2& s) {
  bool in = false;
  for (std::size_t i = 0, j = poly.size() - 1; i < poly.size(); j = i++) {
    const Vec2& a = poly[i];
    const Vec2& b = poly[j];
    if ((a.y() > s.y()) != (b.y() > s.y()) && s.x() < (b.x() - a.x()) * (s.y() - a.y()) / (b.y() - a.y()) + a.x())
      in = !in;
  }
  return in;
}

inline double distance_to_segment(const Vec2& s, const Vec2& a, const Vec2& b) {
  const Vec2 d = b - a;
  const double l2 = d.squaredNorm();
  const double t = l2 > 0 ? std::clamp((s - a).dot(d) / l2, 0.0, 1.0) : 0.0;
  return (a + t * d - s).norm();
}

inline double distance_to_polyline(const std::vector<Vec2>& poly, const Vec2& s, bool closed) {
  double best = 1e300;
  const std::size_t n = poly.size();
  for (std::size_t i = 0; i + 1 < n + (closed ? 1 : 0); ++i)
    best = std::min(best, distance_to_segment(s, poly[i], poly[(i + 1) % n]));
  return best;
}

inline bool segments_cross(const Vec2& a, const Vec2& b, const Vec2& c, const Vec2& d) {
  auto orient = [](const Vec2& p, const Vec2& q, const Vec2& r) {
    return (q.x() - p.x()) * (r.y() - p.y()) - (q.y() - p.y()) * (r.x() - p.x());
  };
  const double o1 = orient(a, b, c), o2 = orient(a, b, d), o3 = orient(c, d, a), o4 = orient(c, d, b);
  return o1 * o2 < 0 && o3 * o4 < 0;
}

/// True if no two non-adjacent edges of the closed polygon cross.
inline bool polygon_is_simple(const std::vector<Vec2>& poly) {
  const std::size_t n = poly.size();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 2; j < n; ++j) {
      if (i == 0 && j == n - 1) continue;
      if (segments_cross(poly[i], poly[(i + 1) % n], poly[j], poly[(j + 1) % n])) return false;
    }
  return true;
}

// ---------------------------------------------------------------------------
// Trim loops

struct TrimLoop {
  std::vector<Reparametrization> reparams;
  std::vector<Vec2> corners;           ///< corners[l] joins curve l-1 (u=1) and curve l (u=0)
  std::vector<double> widths;          ///< stripe widths h_l
  std::vector<std::vector<Vec2>> traces;
  std::vector<bool> flipped;           ///< q_l negated to make it positive inside

  int size() const { return static_cast<int>(reparams.size()); }
  int prev(int l) const { return (l + size() - 1) % size(); }
  int next(int l) const { return (l + 1) % size(); }

  /// Closed polygon of all traces (shared corners listed once).
  std::vector<Vec2> polygon() const {
    std::vector<Vec2> poly;
    for (const auto& t : traces) poly.insert(poly.end(), t.begin(), t.end() - 1);
    return poly;
  }

  Rect bounding_box() const {
    Rect r{1e300, -1e300, 1e300, -1e300};
    for (const auto& t : traces)
      for (const auto& p : t) {
        r.u0 = std::min(r.u0, p.x());
        r.u1 = std::max(r.u1, p.x());
        r.v0 = std::min(r.v0, p.y());
        r.v1 = std::max(r.v1, p.y());
      }
    return r;
  }
};

/// Solve corners from guesses, trace all curves, orient every q to be
/// positive inside, and check closure and simplicity.
inline TrimLoop make_loop(std::vector<Reparametrization> reparams, std::vector<double> widths,
                          const std::vector<Vec2>& corner_guesses, int trace_samples = 200) {
  const std::string stage = "trim_domain";
  const int L = static_cast<int>(reparams.size());
  if (L < 2) throw validation_error(stage, "a trim loop needs at least two curves");
  if (static_cast<int>(widths.size()) != L || static_cast<int>(corner_guesses.size()) != L)
    throw validation_error(stage, "widths and corner guesses must have one entry per curve");
  for (double h : widths)
    if (!(h > 0)) throw validation_error(stage, "stripe widths must be positive");
  TrimLoop loop;
  loop.reparams = std::move(reparams);
  loop.widths = std::move(widths);
  for (int l = 0; l < L; ++l) {
    const Vec2 c = solve_corner(loop.reparams[l], Vec2(0, 0), corner_guesses[l]);
    const Vec2 other = loop.reparams[loop.prev(l)](c);
    if ((other - Vec2(1, 0)).norm() > 1e-9) {
      std::ostringstream os;
      os << "corner " << l << ": previous reparametrization maps it to [" << other.x() << "," << other.y()
         << "] instead of [1,0]";
      throw validation_error(stage, os.str());
    }
    loop.corners.push_back(c);
  }
  for (int l = 0; l < L; ++l) {
    loop.traces.push_back(trace_boundary(loop.reparams[l], trace_samples, loop.corners[l]));
    if ((loop.traces[l].back() - loop.corners[loop.next(l)]).norm() > 1e-9) {
      std::ostringstream os;
      os << "curve " << l << " does not end at the next corner";
      throw validation_error(stage, os.str());
    }
  }
  const auto poly = loop.polygon();
  if (!polygon_is_simple(poly)) throw validation_error(stage, "traced boundary loop self-intersects");
  const Vec2 centroid = polygon_centroid(poly);
  loop.flipped.assign(L, false);
  for (int l = 0; l < L; ++l)
    if (loop.reparams[l].q(centroid) < 0) {
      loop.reparams[l] = loop.reparams[l].flipped();
      loop.flipped[l] = true;
    }
  return loop;
}

/// q_l >= 0 for all l.
inline bool contains(const TrimLoop& loop, const Vec2& s) {
  for (const auto& k : loop.reparams)
    if (k.q(s) < 0) return false;
  return true;
}

inline bool stripe_contains(const Spline2& qbar, double h, const Vec2& s) { return qbar(s) <= h; }

/// Sampled check that only neighboring stripes meet and that each stripe and
/// each neighbor intersection is a single connected set of grid cells.
struct StripeTopologyReport {
  bool ok = true;
  std::vector<std::string> problems;
};

inline StripeTopologyReport check_stripes(const TrimLoop& loop, const std::vector<Spline2>& qs, int grid = 256) {
  StripeTopologyReport rep;
  const int L = loop.size();
  const Rect box = loop.bounding_box();
  const auto poly = loop.polygon();
  std::vector<std::vector<char>> inside(grid, std::vector<char>(grid, 0));
  std::vector<std::vector<std::uint32_t>> mask(grid, std::vector<std::uint32_t>(grid, 0));
  for (int i = 0; i < grid; ++i)
    for (int j = 0; j < grid; ++j) {
      const Vec2 s(box.u0 + box.width() * (i + 0.5) / grid, box.v0 + box.height() * (j + 0.5) / grid);
      if (!point_in_polygon(poly, s)) continue;
      inside[i][j] = 1;
      for (int l = 0; l < L; ++l)
        if (qs[l](s) <= loop.widths[l]) mask[i][j] |= 1u << l;
    }
  auto components = [&](auto pred) {
    std::vector<std::vector<char>> seen(grid, std::vector<char>(grid, 0));
    int count = 0;
    for (int i = 0; i < grid; ++i)
      for (int j = 0; j < grid; ++j) {
        if (seen[i][j] || !inside[i][j] || !pred(mask[i][j])) continue;
        ++count;
        std::vector<std::pair<int, int>> stack{{i, j}};
        seen[i][j] = 1;
        while (!stack.empty()) {
          auto [a, b] = stack.back();
          stack.pop_back();
          const int di[4] = {1, -1, 0, 0}, dj[4] = {0, 0, 1, -1};
          for (int k = 0; k < 4; ++k) {
            const int x = a + di[k], y = b + dj[k];
            if (x < 0 || y < 0 || x >= grid || y >= grid || seen[x][y] || !inside[x][y] || !pred(mask[x][y]))
              continue;
            seen[x][y] = 1;
            stack.push_back({x, y});
          }
        }
      }
    return count;
  };
  for (int l = 0; l < L; ++l) {
    const std::uint32_t bit = 1u << l;
    if (components([&](std::uint32_t m) { return (m & bit) != 0; }) > 1) {
      rep.ok = false;
      rep.problems.push_back("stripe " + std::to_string(l) + " is not connected");
    }
    for (int k = l + 1; k < L; ++k) {
      const std::uint32_t both = bit | (1u << k);
      const int n = components([&](std::uint32_t m) { return (m & both) == both; });
      const bool neighbors = k == loop.next(l) || l == loop.next(k);
      if (!neighbors && n > 0) {
        rep.ok = false;
        rep.problems.push_back("stripes " + std::to_string(l) + " and " + std::to_string(k) +
                               " are not neighbors but intersect");
      } else if (n > 1) {
        rep.ok = false;
        rep.problems.push_back("intersection of stripes " + std::to_string(l) + " and " + std::to_string(k) +
                               " is not connected");
      }
    }
  }
  return rep;
}

}  // namespace abc
