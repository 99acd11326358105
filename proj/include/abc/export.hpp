#pragma once

// Read-only rational form of a blend.  The domain is split into boundary
// bands (between straight p level sets, cut at corners by separators) and an
// interior part; each piece is further cut along every ingredient breakpoint
// so that the blend is one rational polynomial on it.

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <istream>
#include <map>
#include <ostream>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "abc/error.hpp"
#include "abc/fit.hpp"
#include "abc/spline.hpp"
#include "abc/surface.hpp"
#include "abc/trim.hpp"

namespace abc {

enum class EdgeKind { boundary, levelset, separator, auxiliary, breakline };

inline const char* to_string(EdgeKind k) {
  switch (k) {
    case EdgeKind::boundary: return "gamma";
    case EdgeKind::levelset: return "mu";
    case EdgeKind::separator: return "separator";
    case EdgeKind::auxiliary: return "alpha";
    case EdgeKind::breakline: return "break";
  }
  return "?";
}

/// Tag of the polygon edge that starts at a vertex.
struct EdgeTag {
  EdgeKind kind = EdgeKind::breakline;
  int ribbon = -1;
};

struct TaggedVertex {
  Vec2 p;
  EdgeTag tag;
};

using TaggedPolygon = std::vector<TaggedVertex>;

inline std::vector<Vec2> points_of(const TaggedPolygon& poly) {
  std::vector<Vec2> out;
  for (const auto& v : poly) out.push_back(v.p);
  return out;
}

struct LevelSegment {
  int ribbon = 0;
  double u = 0.0;
  Vec2 anchor;
  Vec2 direction;  ///< kappa(anchor + t direction) = (u, t)
  double reach = 0.0;
  Vec2 far() const { return anchor + reach * direction; }
};

struct PartitionCell {
  int ribbon = -1;  ///< -1 for the interior part
  int band = -1;    ///< index of the ribbon knot interval
  TaggedPolygon polygon;
};

struct DomainPartition {
  std::vector<PartitionCell> cells;     ///< bands of all ribbons, then the interior
  std::vector<LevelSegment> levelsets;
  std::vector<int> band_counts;         ///< per ribbon
  std::vector<Vec2> separator_ends;     ///< per corner
  double area_error = 0.0;              ///< |sum of cell areas - domain area| / domain area

  const PartitionCell& interior() const { return cells.back(); }
};

struct PartitionOptions {
  double reach = kLevelsetReach;  ///< level sets and separators extend to q = reach * h
  int alpha_samples = 16;
  double straight_tol = 1e-9;
};

namespace detail {

/// Cubic Hermite arc sampled from a to b (inclusive).
inline std::vector<Vec2> hermite_arc(const Vec2& a, const Vec2& ta, const Vec2& b, const Vec2& tb, int n) {
  const double len = (b - a).norm();
  const Vec2 c1 = a + len / 3.0 * ta.normalized(), c2 = b - len / 3.0 * tb.normalized();
  std::vector<Vec2> out;
  for (int i = 0; i <= n; ++i) {
    const double t = static_cast<double>(i) / n, s = 1 - t;
    out.push_back(s * s * s * a + 3 * s * s * t * c1 + 3 * s * t * t * c2 + t * t * t * b);
  }
  return out;
}

/// Tangent of the level curve q = const of kappa (direction of increasing p).
inline Vec2 level_tangent(const Reparametrization& k, const Vec2& s) {
  const Mat2 j = k.jacobian(s);
  return j.inverse().col(0).normalized();
}

/// Points of curve l strictly between parameters u0 < u1, taken from the trace.
inline std::vector<Vec2> trace_between(const TrimLoop& loop, int l, double u0, double u1) {
  const auto& tr = loop.traces[l];
  const int n = static_cast<int>(tr.size()) - 1;
  std::vector<Vec2> out;
  for (int i = 0; i <= n; ++i) {
    const double u = static_cast<double>(i) / n;
    if (u > u0 + 1e-12 && u < u1 - 1e-12) out.push_back(tr[i]);
  }
  return out;
}

}  // namespace detail

/// Straight level set of p_l through the boundary point at parameter u.
inline LevelSegment level_segment(const AbcSurface& a, int l, double u, double reach, double tol) {
  const auto& k = a.kappa(l);
  const auto& tr = a.loop.traces[l];
  const int n = static_cast<int>(tr.size()) - 1;
  LevelSegment seg;
  seg.ribbon = l;
  seg.u = u;
  seg.anchor = solve_corner(k, Vec2(u, 0), tr[static_cast<int>(std::lround(u * n))]);
  seg.direction = k.jacobian(seg.anchor).inverse().col(1);
  seg.reach = reach * a.loop.widths[l];
  for (int i = 1; i <= 8; ++i) {
    const double t = seg.reach * i / 8;
    const Vec2 e = k(seg.anchor + t * seg.direction) - Vec2(u, t);
    if (e.cwiseAbs().maxCoeff() > tol) {
      std::ostringstream os;
      os << "level set p_" << l << " = " << u << " is not straight within its stripe (deviation " << e.norm()
         << "); fit with straightening constraints";
      throw verification_error("nurbs_export", os.str());
    }
  }
  return seg;
}

/// End of the corner separator: march along the bisector of the inward
/// normals until both adjacent q exceed their reach.
inline Vec2 separator_end(const AbcSurface& a, int corner, double reach) {
  const int nx = a.links[corner].next, pv = a.links[corner].prev;
  const Vec2 s = a.links[corner].sigma;
  const Vec2 dir = (inward_direction(a, nx, s) + inward_direction(a, pv, s)).normalized();
  const Rect box = a.loop.bounding_box();
  const double step = 1e-3 * std::max(box.width(), box.height());
  const double hn = reach * a.loop.widths[nx], hp = reach * a.loop.widths[pv];
  for (int i = 1; i < 4000; ++i) {
    const Vec2 x = s + i * step * dir;
    if (a.kappa(nx).q(x) >= hn && a.kappa(pv).q(x) >= hp) return x;
  }
  std::ostringstream os;
  os << "corner separator at corner " << corner << " never leaves the stripes";
  throw verification_error("nurbs_export", os.str());
}

inline DomainPartition partition(const AbcSurface& a, const PartitionOptions& opt = {}) {
  const std::string stage = "nurbs_export";
  const int L = a.size();
  if (a.loop.traces.empty()) throw validation_error(stage, "partition needs traced boundary curves");
  for (const auto& r : a.ribbons)
    if (r.knots_v().breaks().size() != 2) throw validation_error(stage, "ribbons must be Bezier in v");
  DomainPartition part;
  // corner c joins curve c-1 (at u = 1) and curve c (at u = 0)
  for (int c = 0; c < L; ++c) part.separator_ends.push_back(separator_end(a, c, opt.reach));

  struct Node {
    double u;
    Vec2 near, far;
    EdgeKind kind;
    Vec2 far_tangent;  ///< direction of increasing u at the far end
    bool has_tangent;
  };
  std::vector<std::vector<Node>> nodes(L);
  for (int l = 0; l < L; ++l) {
    const int nx = (l + 1) % L;
    nodes[l].push_back({0.0, a.loop.corners[l], part.separator_ends[l], EdgeKind::separator, Vec2::Zero(), false});
    for (double u : a.ribbons[l].knots_u().inner_knots()) {
      if (!nodes[l].empty() && std::abs(nodes[l].back().u - u) < 1e-12) continue;
      const LevelSegment seg = level_segment(a, l, u, opt.reach, opt.straight_tol);
      part.levelsets.push_back(seg);
      nodes[l].push_back({u, seg.anchor, seg.far(), EdgeKind::levelset,
                          detail::level_tangent(a.kappa(l), seg.far()), true});
    }
    nodes[l].push_back({1.0, a.loop.corners[nx], part.separator_ends[nx], EdgeKind::separator, Vec2::Zero(), false});
  }

  // Auxiliary arc between the far ends of consecutive nodes of curve l.
  auto alpha = [&](const Node& n0, const Node& n1) {
    const Vec2 chord = n1.far - n0.far;
    return detail::hermite_arc(n0.far, n0.has_tangent ? n0.far_tangent : chord, n1.far,
                               n1.has_tangent ? n1.far_tangent : chord, opt.alpha_samples);
  };

  std::vector<TaggedVertex> interior;
  for (int l = 0; l < L; ++l) {
    const auto& nd = nodes[l];
    part.band_counts.push_back(static_cast<int>(nd.size()) - 1);
    for (std::size_t i = 0; i + 1 < nd.size(); ++i) {
      PartitionCell cell;
      cell.ribbon = l;
      cell.band = static_cast<int>(i);
      TaggedPolygon& poly = cell.polygon;
      poly.push_back({nd[i].near, {EdgeKind::boundary, l}});
      for (const Vec2& p : detail::trace_between(a.loop, l, nd[i].u, nd[i + 1].u))
        poly.push_back({p, {EdgeKind::boundary, l}});
      poly.push_back({nd[i + 1].near, {nd[i + 1].kind, l}});
      const auto arc = alpha(nd[i], nd[i + 1]);
      for (int k = static_cast<int>(arc.size()) - 1; k >= 1; --k) poly.push_back({arc[k], {EdgeKind::auxiliary, l}});
      poly.push_back({nd[i].far, {nd[i].kind, l}});
      part.cells.push_back(cell);
      for (std::size_t k = 0; k + 1 < arc.size(); ++k) interior.push_back({arc[k], {EdgeKind::auxiliary, l}});
    }
  }
  part.cells.push_back({-1, -1, interior});

  const double domain = std::abs(polygon_area(a.loop.polygon()));
  double sum = 0.0;
  for (const auto& c : part.cells) {
    const auto pts = points_of(c.polygon);
    if (!polygon_is_simple(pts)) {
      std::ostringstream os;
      if (c.ribbon < 0) os << "interior cell boundary self-intersects";
      else os << "band " << c.band << " of curve " << c.ribbon << " self-intersects";
      throw verification_error(stage, os.str());
    }
    sum += std::abs(polygon_area(pts));
  }
  part.area_error = std::abs(sum - domain) / domain;
  return part;
}

// ---------------------------------------------------------------------------
// Breakpoint grid and clipping

/// Sorted distinct breakpoints of every ingredient in each direction.
inline std::pair<std::vector<double>, std::vector<double>> merged_breaks(const AbcSurface& a) {
  std::vector<double> bu, bv;
  auto add = [&](const Spline2& s) {
    for (double x : s.knots_u().breaks()) bu.push_back(x);
    for (double y : s.knots_v().breaks()) bv.push_back(y);
  };
  for (int c = 0; c < a.base.dim(); ++c) add(a.base[c]);
  for (int l = 0; l < a.size(); ++l) {
    add(a.kappa(l).p);
    add(a.kappa(l).q);
  }
  for (const auto& f : a.weights.w.factors) add(f);
  for (const auto& fw : a.weights.w_ribbon)
    for (const auto& f : fw.factors) add(f);
  auto uniq = [](std::vector<double>& v) {
    std::sort(v.begin(), v.end());
    std::vector<double> out;
    for (double x : v)
      if (out.empty() || x - out.back() > kKnotTol) out.push_back(x);
    v = out;
  };
  uniq(bu);
  uniq(bv);
  return {bu, bv};
}

namespace detail {

/// Sutherland-Hodgman against one half plane  sign*(coord - c) >= 0.
inline TaggedPolygon clip_half(const TaggedPolygon& in, int axis, double c, double sign) {
  TaggedPolygon out;
  const std::size_t n = in.size();
  if (n == 0) return out;
  auto inside = [&](const Vec2& p) { return sign * (p[axis] - c) >= 0; };
  for (std::size_t i = 0; i < n; ++i) {
    const TaggedVertex& s = in[(i + n - 1) % n];
    const TaggedVertex& e = in[i];
    const bool si = inside(s.p), ei = inside(e.p);
    auto cut = [&] {
      const double t = (c - s.p[axis]) / (e.p[axis] - s.p[axis]);
      Vec2 p = s.p + t * (e.p - s.p);
      p[axis] = c;
      return p;
    };
    if (si && ei) {
      out.push_back(e);
    } else if (si && !ei) {
      out.push_back({cut(), {EdgeKind::breakline, -1}});
    } else if (!si && ei) {
      out.push_back({cut(), s.tag});
      out.push_back(e);
    }
  }
  return out;
}

}  // namespace detail

inline TaggedPolygon clip_to_rect(const TaggedPolygon& poly, const Rect& r) {
  TaggedPolygon p = detail::clip_half(poly, 0, r.u0, 1.0);
  p = detail::clip_half(p, 0, r.u1, -1.0);
  p = detail::clip_half(p, 1, r.v0, 1.0);
  p = detail::clip_half(p, 1, r.v1, -1.0);
  // Drop repeated vertices.
  TaggedPolygon out;
  for (const auto& v : p)
    if (out.empty() || (v.p - out.back().p).norm() > 1e-14) out.push_back(v);
  while (out.size() > 1 && (out.front().p - out.back().p).norm() <= 1e-14) out.pop_back();
  return out;
}

// ---------------------------------------------------------------------------
// Rational pieces

struct RationalPatch {
  Rect box;
  std::vector<Eigen::MatrixXd> numerator;  ///< Bernstein block per coordinate
  Eigen::MatrixXd denominator;
  TaggedPolygon trim;
  int ribbon = -1;  ///< partition cell the piece came from
  int band = -1;
  std::vector<int> active;                   ///< ribbons contributing on the piece
  std::vector<std::pair<int, int>> spans;    ///< ribbon spans used, parallel to `active`

  DegreePair degree() const {
    return {static_cast<int>(denominator.rows()) - 1, static_cast<int>(denominator.cols()) - 1};
  }

  Vec3 eval(const Vec2& s) const {
    const double d = eval_bernstein(denominator, box, s);
    return Vec3(eval_bernstein(numerator[0], box, s), eval_bernstein(numerator[1], box, s),
                eval_bernstein(numerator[2], box, s)) /
           d;
  }
};

namespace detail {

inline Eigen::MatrixXd add_blocks(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  const int p = static_cast<int>(std::max(a.rows(), b.rows())) - 1;
  const int q = static_cast<int>(std::max(a.cols(), b.cols())) - 1;
  return bernstein::elevate(a, p, q) + bernstein::elevate(b, p, q);
}

inline bool all_zero(const Eigen::MatrixXd& m) { return m.cwiseAbs().maxCoeff() == 0.0; }

/// Deterministic interior samples of a polygon.
inline std::vector<Vec2> polygon_samples(const std::vector<Vec2>& poly, const Rect& box, int count,
                                         std::mt19937& rng) {
  std::uniform_real_distribution<double> du(box.u0, box.u1), dv(box.v0, box.v1);
  std::vector<Vec2> out;
  for (int tries = 0; static_cast<int>(out.size()) < count && tries < 200 * count; ++tries) {
    const Vec2 s(du(rng), dv(rng));
    if (point_in_polygon(poly, s)) out.push_back(s);
  }
  return out;
}

}  // namespace detail

/// Exact rational piece of the blend on `trim`, whose bounding rectangle
/// `box` is free of ingredient breakpoints.  Ribbon spans are read off the
/// samples where the ribbon weight is nonzero; a piece on which a ribbon
/// parameter crosses one of its knots is rejected.
inline RationalPatch extract_rational(const AbcSurface& a, const Rect& box, const TaggedPolygon& trim,
                                      int samples = 64, unsigned seed = 1) {
  const std::string stage = "nurbs_export";
  RationalPatch rp;
  rp.box = box;
  rp.trim = trim;
  const auto poly = points_of(trim);
  std::mt19937 rng(seed);
  auto pts = detail::polygon_samples(poly, box, samples, rng);
  if (pts.empty()) pts.push_back(polygon_centroid(poly));

  const Eigen::MatrixXd w = a.weights.w.bernstein_on(box);
  Eigen::MatrixXd den = w;
  std::vector<Eigen::MatrixXd> num(3);
  const bool base_on = !detail::all_zero(w);
  if (base_on) {
    for (int c = 0; c < 3; ++c) num[c] = bernstein::multiply(w, a.base[c].bernstein_on(box));
  } else {
    for (int c = 0; c < 3; ++c) num[c] = Eigen::MatrixXd::Zero(1, 1);
  }
  for (int l = 0; l < a.size(); ++l) {
    const Eigen::MatrixXd wl = a.weights.w_ribbon[l].bernstein_on(box);
    if (detail::all_zero(wl)) continue;
    const KnotVector& ku = a.ribbons[l].knots_u();
    std::optional<int> span;
    double lo = 1e300, hi = -1e300;
    for (const Vec2& s : pts) {
      if (a.weights.w_ribbon[l](s) == 0.0) continue;
      const double p = a.kappa(l).p(s);
      lo = std::min(lo, p);
      hi = std::max(hi, p);
    }
    if (lo > hi) {
      // Weight vanishes at every sample: any piece gives the same blend.
      const double p = a.kappa(l).p(pts.front());
      lo = hi = p;
    }
    try {
      span = hosting_span(ku, lo, hi, "u");
    } catch (const Error&) {
      std::ostringstream os;
      os << "ribbon " << l << " parameter crosses a knot inside the piece at box [" << box.u0 << "," << box.u1
         << "]x[" << box.v0 << "," << box.v1 << "]";
      throw verification_error(stage, os.str());
    }
    const int sv = a.ribbons[l].knots_v().degree();
    const ComposedPatch cp = compose_cell(a.ribbons[l], a.kappa(l).map(), box, std::make_pair(*span, sv));
    for (int c = 0; c < 3; ++c) num[c] = detail::add_blocks(num[c], bernstein::multiply(wl, cp.coeffs[c]));
    den = detail::add_blocks(den, wl);
    rp.active.push_back(l);
    rp.spans.emplace_back(*span, sv);
  }
  // Bring all blocks to a common degree.
  int p = static_cast<int>(den.rows()) - 1, q = static_cast<int>(den.cols()) - 1;
  for (const auto& m : num) {
    p = std::max(p, static_cast<int>(m.rows()) - 1);
    q = std::max(q, static_cast<int>(m.cols()) - 1);
  }
  rp.denominator = bernstein::elevate(den, p, q);
  for (auto& m : num) rp.numerator.push_back(bernstein::elevate(m, p, q));
  return rp;
}

struct ExportStats {
  int pieces = 0;
  double max_rel_error = 0.0;
  double min_denominator = 1e300;
  DegreePair max_degree;
};

struct ExportOptions {
  PartitionOptions partition;
  int check_samples = 500;
  double tolerance = 1e-9;
  double min_area = 1e-14;
  unsigned seed = 1;
};

struct RationalAssembly {
  DomainPartition partition;
  std::vector<RationalPatch> patches;
  ExportStats stats;
};

/// Relative deviation of a patch from the blend at random interior samples.
inline double patch_error(const AbcSurface& a, const RationalPatch& rp, int samples, std::mt19937& rng,
                          double* min_den = nullptr) {
  double err = 0.0;
  for (const Vec2& s : detail::polygon_samples(points_of(rp.trim), rp.box, samples, rng)) {
    const Vec3 ref = eval_abc(a, s);
    err = std::max(err, (rp.eval(s) - ref).norm() / std::max(1.0, ref.norm()));
    if (min_den) *min_den = std::min(*min_den, eval_bernstein(rp.denominator, rp.box, s));
  }
  return err;
}

/// Partition, cut along breakpoints, extract every piece and check it.
inline RationalAssembly to_rational(const AbcSurface& a, const ExportOptions& opt = {}) {
  const std::string stage = "nurbs_export";
  RationalAssembly out;
  out.partition = partition(a, opt.partition);
  const auto [bu, bv] = merged_breaks(a);
  std::mt19937 rng(opt.seed);
  for (const auto& cell : out.partition.cells) {
    const auto pts = points_of(cell.polygon);
    Rect bb{1e300, -1e300, 1e300, -1e300};
    for (const Vec2& p : pts) {
      bb.u0 = std::min(bb.u0, p.x());
      bb.u1 = std::max(bb.u1, p.x());
      bb.v0 = std::min(bb.v0, p.y());
      bb.v1 = std::max(bb.v1, p.y());
    }
    for (std::size_t i = 0; i + 1 < bu.size(); ++i) {
      if (bu[i + 1] <= bb.u0 || bu[i] >= bb.u1) continue;
      for (std::size_t j = 0; j + 1 < bv.size(); ++j) {
        if (bv[j + 1] <= bb.v0 || bv[j] >= bb.v1) continue;
        const Rect box{bu[i], bu[i + 1], bv[j], bv[j + 1]};
        TaggedPolygon piece = clip_to_rect(cell.polygon, box);
        if (piece.size() < 3 || std::abs(polygon_area(points_of(piece))) < opt.min_area) continue;
        RationalPatch rp = extract_rational(a, box, piece, 64, opt.seed + static_cast<unsigned>(out.patches.size()));
        rp.ribbon = cell.ribbon;
        rp.band = cell.band;
        double min_den = 1e300;
        const double err = patch_error(a, rp, opt.check_samples, rng, &min_den);
        out.stats.max_rel_error = std::max(out.stats.max_rel_error, err);
        out.stats.min_denominator = std::min(out.stats.min_denominator, min_den);
        out.stats.max_degree = max(out.stats.max_degree, rp.degree());
        if (err > opt.tolerance || !(min_den > 0)) {
          std::ostringstream os;
          os << "piece on [" << box.u0 << "," << box.u1 << "]x[" << box.v0 << "," << box.v1
             << "] deviates from the blend by " << err << " (denominator min " << min_den << ")";
          throw verification_error(stage, os.str());
        }
        out.patches.push_back(std::move(rp));
      }
    }
  }
  out.stats.pieces = static_cast<int>(out.patches.size());
  return out;
}

// ---------------------------------------------------------------------------
// Trim curves and the exchange format

enum class TrimMode { parametric, geometric, hybrid };

inline const char* to_string(TrimMode m) {
  switch (m) {
    case TrimMode::parametric: return "parametric";
    case TrimMode::geometric: return "geometric";
    case TrimMode::hybrid: return "hybrid";
  }
  return "?";
}

inline TrimMode parse_trim_mode(const std::string& s) {
  if (s == "parametric") return TrimMode::parametric;
  if (s == "geometric") return TrimMode::geometric;
  if (s == "hybrid") return TrimMode::hybrid;
  throw validation_error("nurbs_export", "unknown trimming mode '" + s + "' (parametric, geometric, hybrid)");
}

/// Clamped B-spline curve in the plane (dim 2) or in space (dim 3).
struct TrimCurve {
  bool spatial = false;
  EdgeKind kind = EdgeKind::breakline;
  int ribbon = -1;
  bool exact = true;  ///< false for spatial images of planar edges (interpolated)
  int degree = 1;
  std::vector<double> knots;
  std::vector<Eigen::VectorXd> points;

  Eigen::VectorXd eval(double t) const {
    const KnotVector kv(degree, knots);
    const int s = kv.span(t);
    const Eigen::MatrixXd b = kv.basis(s, t, 0);
    Eigen::VectorXd x = Eigen::VectorXd::Zero(points.front().size());
    for (int i = 0; i <= degree; ++i) x += b(0, i) * points[s - degree + i];
    return x;
  }
  double t0() const { return knots.front(); }
  double t1() const { return knots.back(); }
};

namespace detail {

inline TrimCurve polyline_curve(const std::vector<Eigen::VectorXd>& pts, bool spatial, EdgeTag tag, bool exact) {
  TrimCurve c;
  c.spatial = spatial;
  c.kind = tag.kind;
  c.ribbon = tag.ribbon;
  c.exact = exact;
  c.degree = 1;
  c.points = pts;
  c.knots.push_back(0.0);
  double acc = 0.0;
  c.knots.push_back(0.0);
  for (std::size_t i = 1; i < pts.size(); ++i) {
    acc += std::max((pts[i] - pts[i - 1]).norm(), 1e-300);
    c.knots.push_back(acc);
  }
  c.knots.push_back(acc);
  return c;
}

/// Maximal runs of consecutive polygon edges with equal tags; each run is the
/// vertex list from its first vertex to the start of the next run.
inline std::vector<std::pair<EdgeTag, std::vector<Vec2>>> tag_runs(const TaggedPolygon& poly) {
  const std::size_t n = poly.size();
  auto same = [](const EdgeTag& a, const EdgeTag& b) { return a.kind == b.kind && a.ribbon == b.ribbon; };
  std::size_t start = 0;
  for (std::size_t i = 0; i < n; ++i)
    if (!same(poly[i].tag, poly[(i + n - 1) % n].tag)) {
      start = i;
      break;
    }
  std::vector<std::pair<EdgeTag, std::vector<Vec2>>> runs;
  for (std::size_t k = 0; k < n; ++k) {
    const auto& v = poly[(start + k) % n];
    if (runs.empty() || !same(runs.back().first, v.tag)) {
      if (!runs.empty()) runs.back().second.push_back(v.p);
      runs.push_back({v.tag, {v.p}});
    } else {
      runs.back().second.push_back(v.p);
    }
  }
  if (!runs.empty()) runs.back().second.push_back(poly[start].p);
  return runs;
}

}  // namespace detail

/// c_l restricted to [u0, u1]: the v = 0 row of ribbon l, as a Bezier curve.
/// The interval must lie within one knot span of the ribbon.
inline TrimCurve boundary_curve(const AbcSurface& a, int l, double u0, double u1) {
  const VectorSpline& r = a.ribbons[l];
  const bool rev = u1 < u0;
  const double lo = std::min(u0, u1), hi = std::max(u0, u1);
  if (!(hi > lo)) throw validation_error("nurbs_export", "empty boundary arc");
  const int su = hosting_span(r.knots_u(), lo, hi, "u");
  const Rect cell{lo, hi, 0.0, 1.0};
  TrimCurve c;
  c.spatial = true;
  c.kind = EdgeKind::boundary;
  c.ribbon = l;
  c.degree = r.knots_u().degree();
  std::vector<Eigen::MatrixXd> blocks;
  for (int d = 0; d < 3; ++d) blocks.push_back(r[d].bernstein_on(cell, su, r.knots_v().degree()));
  for (int i = 0; i <= c.degree; ++i) {
    Eigen::VectorXd x(3);
    for (int d = 0; d < 3; ++d) x[d] = blocks[d](i, 0);
    c.points.push_back(x);
  }
  if (rev) std::reverse(c.points.begin(), c.points.end());
  c.knots.assign(c.degree + 1, 0.0);
  c.knots.insert(c.knots.end(), c.degree + 1, 1.0);
  return c;
}

/// Trim loop of a piece in the requested description.
inline std::vector<TrimCurve> trim_curves(const AbcSurface& a, const RationalPatch& rp, TrimMode mode) {
  std::vector<TrimCurve> out;
  for (const auto& [tag, pts] : detail::tag_runs(rp.trim)) {
    const bool gamma = tag.kind == EdgeKind::boundary && tag.ribbon >= 0;
    const bool spatial = mode == TrimMode::geometric || (mode == TrimMode::hybrid && gamma);
    if (!spatial) {
      // Interior edges are the exact piece boundaries; a planar gamma edge
      // only interpolates the trimming curve.
      std::vector<Eigen::VectorXd> p2;
      for (const Vec2& p : pts) p2.push_back(p);
      out.push_back(detail::polyline_curve(p2, false, tag, !gamma));
    } else if (gamma) {
      const auto& k = a.kappa(tag.ribbon);
      out.push_back(boundary_curve(a, tag.ribbon, k.p(pts.front()), k.p(pts.back())));
    } else {
      // Spatial image of a planar edge: interpolating polyline of the blend.
      std::vector<Eigen::VectorXd> p3;
      for (std::size_t i = 0; i + 1 < pts.size(); ++i)
        for (int k = 0; k < 4; ++k) p3.push_back(eval_abc(a, pts[i] + 0.25 * k * (pts[i + 1] - pts[i])));
      p3.push_back(eval_abc(a, pts.back()));
      out.push_back(detail::polyline_curve(p3, true, tag, false));
    }
  }
  return out;
}

inline constexpr const char* kFormatHeader = "abc-nurbs";
inline constexpr int kFormatVersion = 1;

/// Piece as read back: homogeneous rational Bezier net plus trims.
struct StoredPatch {
  Rect box;
  std::vector<Eigen::MatrixXd> hom;  ///< w*x, w*y, w*z, w
  std::vector<TrimCurve> trims;

  Vec3 eval(const Vec2& s) const {
    const double d = eval_bernstein(hom[3], box, s);
    return Vec3(eval_bernstein(hom[0], box, s), eval_bernstein(hom[1], box, s), eval_bernstein(hom[2], box, s)) / d;
  }
};

struct StoredAssembly {
  int version = 0;
  bool read_only = false;
  TrimMode mode = TrimMode::hybrid;
  std::vector<StoredPatch> patches;
};

inline void write_assembly(std::ostream& os, const AbcSurface& a, const RationalAssembly& ra, TrimMode mode) {
  os << kFormatHeader << " " << kFormatVersion << "\n";
  os << "read_only 1\n";
  os << "mode " << to_string(mode) << "\n";
  os << "patches " << ra.patches.size() << "\n";
  os << std::setprecision(17);
  for (std::size_t i = 0; i < ra.patches.size(); ++i) {
    const RationalPatch& rp = ra.patches[i];
    const DegreePair d = rp.degree();
    os << "patch " << i << " cell " << rp.ribbon << " " << rp.band << "\n";
    os << "degree " << d.u << " " << d.v << "\n";
    os << "knots_u";
    for (int k = 0; k <= d.u; ++k) os << " " << rp.box.u0;
    for (int k = 0; k <= d.u; ++k) os << " " << rp.box.u1;
    os << "\nknots_v";
    for (int k = 0; k <= d.v; ++k) os << " " << rp.box.v0;
    for (int k = 0; k <= d.v; ++k) os << " " << rp.box.v1;
    os << "\n";
    // Homogeneous control points (w x, w y, w z, w), u-major.
    for (int iu = 0; iu <= d.u; ++iu)
      for (int iv = 0; iv <= d.v; ++iv)
        os << "cp " << rp.numerator[0](iu, iv) << " " << rp.numerator[1](iu, iv) << " " << rp.numerator[2](iu, iv)
           << " " << rp.denominator(iu, iv) << "\n";
    const auto trims = trim_curves(a, rp, mode);
    os << "loop " << trims.size() << "\n";
    for (const auto& c : trims) {
      os << "curve " << (c.spatial ? "spatial" : "planar") << " " << to_string(c.kind) << " " << c.ribbon << " "
         << (c.exact ? "exact" : "interpolated") << " " << c.degree << " " << c.points.size() << "\n";
      os << "knots";
      for (double k : c.knots) os << " " << k;
      os << "\n";
      for (const auto& p : c.points) {
        os << "pt";
        for (int k = 0; k < p.size(); ++k) os << " " << p[k];
        os << "\n";
      }
    }
  }
  os << "end\n";
  if (!os) throw io_error("nurbs_export", "write failed");
}

inline StoredAssembly read_assembly(std::istream& is) {
  const std::string stage = "nurbs_export";
  auto expect = [&](const std::string& w) {
    std::string t;
    if (!(is >> t) || t != w) throw io_error(stage, "malformed file: expected '" + w + "', got '" + t + "'");
  };
  StoredAssembly sa;
  expect(kFormatHeader);
  is >> sa.version;
  if (sa.version != kFormatVersion) throw io_error(stage, "unsupported format version");
  expect("read_only");
  is >> sa.read_only;
  expect("mode");
  std::string mode;
  is >> mode;
  sa.mode = parse_trim_mode(mode);
  expect("patches");
  std::size_t n = 0;
  is >> n;
  for (std::size_t i = 0; i < n; ++i) {
    StoredPatch sp;
    std::size_t idx = 0;
    int ribbon = 0, band = 0;
    expect("patch");
    is >> idx;
    expect("cell");
    is >> ribbon >> band;
    int du = 0, dv = 0;
    expect("degree");
    is >> du >> dv;
    std::vector<double> ku(2 * (du + 1)), kv(2 * (dv + 1));
    expect("knots_u");
    for (double& k : ku) is >> k;
    expect("knots_v");
    for (double& k : kv) is >> k;
    sp.box = {ku.front(), ku.back(), kv.front(), kv.back()};
    sp.hom.assign(4, Eigen::MatrixXd(du + 1, dv + 1));
    for (int iu = 0; iu <= du; ++iu)
      for (int iv = 0; iv <= dv; ++iv) {
        expect("cp");
        for (int c = 0; c < 4; ++c) is >> sp.hom[c](iu, iv);
      }
    expect("loop");
    std::size_t nc = 0;
    is >> nc;
    for (std::size_t c = 0; c < nc; ++c) {
      TrimCurve tc;
      std::string kind, sp_kind, exact;
      std::size_t np = 0;
      expect("curve");
      is >> sp_kind >> kind >> tc.ribbon >> exact >> tc.degree >> np;
      tc.spatial = sp_kind == "spatial";
      tc.exact = exact == "exact";
      for (EdgeKind k : {EdgeKind::boundary, EdgeKind::levelset, EdgeKind::separator, EdgeKind::auxiliary,
                         EdgeKind::breakline})
        if (kind == to_string(k)) tc.kind = k;
      expect("knots");
      tc.knots.resize(np + tc.degree + 1);
      for (double& k : tc.knots) is >> k;
      const int dim = tc.spatial ? 3 : 2;
      for (std::size_t k = 0; k < np; ++k) {
        expect("pt");
        Eigen::VectorXd p(dim);
        for (int d = 0; d < dim; ++d) is >> p[d];
        tc.points.push_back(p);
      }
      sp.trims.push_back(tc);
    }
    if (!is) throw io_error(stage, "truncated file");
    sa.patches.push_back(std::move(sp));
  }
  expect("end");
  return sa;
}

/// Triangles of a regular grid over each piece, kept when the centroid is
/// inside the trim polygon.
inline void write_obj(std::ostream& os, const RationalAssembly& ra, int density = 8) {
  os << std::setprecision(12);
  int base = 1;
  for (const auto& rp : ra.patches) {
    const auto poly = points_of(rp.trim);
    const int n = std::max(1, density);
    std::vector<Vec2> uv;
    for (int i = 0; i <= n; ++i)
      for (int j = 0; j <= n; ++j)
        uv.emplace_back(rp.box.u0 + rp.box.width() * i / n, rp.box.v0 + rp.box.height() * j / n);
    std::vector<std::array<int, 3>> tris;
    auto id = [&](int i, int j) { return i * (n + 1) + j; };
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        const std::array<std::array<int, 3>, 2> t = {{{id(i, j), id(i + 1, j), id(i + 1, j + 1)},
                                                      {id(i, j), id(i + 1, j + 1), id(i, j + 1)}}};
        for (const auto& tr : t)
          if (point_in_polygon(poly, (uv[tr[0]] + uv[tr[1]] + uv[tr[2]]) / 3.0)) tris.push_back(tr);
      }
    if (tris.empty()) continue;
    for (const Vec2& s : uv) {
      const Vec3 x = rp.eval(s);
      os << "v " << x.x() << " " << x.y() << " " << x.z() << "\n";
    }
    for (const auto& t : tris) os << "f " << base + t[0] << " " << base + t[1] << " " << base + t[2] << "\n";
    base += static_cast<int>(uv.size());
  }
  if (!os) throw io_error("nurbs_export", "OBJ write failed");
}

/// Writes `path` (exchange format) and `path` with extension .obj.
inline void emit(const AbcSurface& a, const RationalAssembly& ra, TrimMode mode, const std::filesystem::path& path,
                 int obj_density = 8) {
  std::ofstream f(path);
  if (!f) throw io_error("nurbs_export", "cannot open " + path.string() + " for writing");
  write_assembly(f, a, ra, mode);
  std::filesystem::path obj = path;
  obj.replace_extension(".obj");
  std::ofstream g(obj);
  if (!g) throw io_error("nurbs_export", "cannot open " + obj.string() + " for writing");
  write_obj(g, ra, obj_density);
}

}  // namespace abc
