#include <cmath>
#include <map>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "abc/export.hpp"
#include "abc/scenes.hpp"

using namespace abc;

namespace {

VectorSpline plane_embedding(double scale) {
  const Rect d{-1, 1, -1, 1};
  return VectorSpline({affine_spline(0, scale, 0, d, 1), affine_spline(0, 0, scale, d, 1),
                       affine_spline(0, 0, 0, d, 1)});
}

VectorSpline transversal_ribbon() {
  const Rect d{0, 1, 0, 1};
  return VectorSpline({affine_spline(0, 1, 0, d, 1), affine_spline(0, 0, 1, d, 1), affine_spline(0, 0, 0, d, 1)});
}

const AbcSurface& small_square() {
  static const AbcSurface a = [] {
    SquareOptions o;
    o.n = 2;
    o.m = 1;
    o.r = 2;
    o.ribbon0_inner_knots = 1;
    return square_scene(o);
  }();
  return a;
}

const RationalAssembly& small_assembly() {
  static const RationalAssembly ra = to_rational(small_square());
  return ra;
}

}  // namespace

TEST(Levelset, DirectionOfIdentityAndScaledPlane) {
  const VectorSpline r = transversal_ribbon();
  const Vec2 d1 = levelset_direction(plane_embedding(1.0), Vec2(0.2, 0.1), r, 0.5);
  EXPECT_NEAR((d1 - Vec2(0, 1)).norm(), 0.0, 1e-14);
  const Vec2 d2 = levelset_direction(plane_embedding(2.0), Vec2(0.2, 0.1), r, 0.5);
  EXPECT_NEAR((d2 - Vec2(0, 0.5)).norm(), 0.0, 1e-14);
}

TEST(Levelset, DirectionIsTangentialProjection) {
  // Curved base: Db * delta must equal the tangential part of dr/dv.
  const Rect d{-1, 1, -1, 1};
  const VectorSpline b = spline_of(graph([](const Vec2& s) {
                                     const double x = s.x(), y = s.y();
                                     return ScalarJet{0.3 * x * x + 0.2 * x * y - 0.1 * y * y, 0, 0, 0, 0, 0};
                                   }),
                                   KnotVector::bezier(2, d.u0, d.u1), KnotVector::bezier(2, d.v0, d.v1));
  const VectorSpline r({affine_spline(0, 1, 0.3, Rect{0, 1, 0, 1}, 1), affine_spline(0, 0, 1, Rect{0, 1, 0, 1}, 1),
                        affine_spline(0, 0, 0.7, Rect{0, 1, 0, 1}, 1)});
  const Vec2 anchor(0.3, -0.2);
  const Vec2 delta = levelset_direction(b, anchor, r, 0.4);
  const Vec3Jet j = b.jet3(anchor);
  const Vec3 n = frame(j).normal;
  const Vec3 dv = r.jet3(Vec2(0.4, 0)).fv;
  const Vec3 tangential = dv - n * n.dot(dv);
  EXPECT_LE((jacobian(j) * delta - tangential).norm(), 1e-10);
}

TEST(Levelset, StraighteningPairs) {
  const auto pairs = straightening_constraints(Vec2(1, 2), Vec2(0.5, -1), 0.3, 0.2, 3);
  ASSERT_EQ(pairs.size(), 3u);
  for (const auto& c : pairs) {
    const double t = c.tau.y();
    EXPECT_NEAR((c.sigma - (Vec2(1, 2) + t * Vec2(0.5, -1))).norm(), 0.0, 1e-15);
    EXPECT_EQ(c.tau.x(), 0.3);
  }
  EXPECT_EQ(pairs.back().tau.y(), 0.2);
}

TEST(Partition, CountsOnSquare) {
  SquareOptions o;
  o.n = 2;
  o.m = 1;
  o.r = 2;
  const DomainPartition p0 = partition(square_scene(o));
  EXPECT_EQ(p0.cells.size(), 5u);
  EXPECT_TRUE(p0.levelsets.empty());
  EXPECT_LE(p0.area_error, 1e-6);
  const DomainPartition p1 = partition(small_square());
  EXPECT_EQ(p1.band_counts, (std::vector<int>{2, 1, 1, 1}));
  EXPECT_EQ(p1.levelsets.size(), 1u);
  EXPECT_LE(p1.area_error, 1e-6);
}

TEST(Partition, CylinderSideWithNineKnotsHasTenBands) {
  const auto cyl = cylinders_scene(1, 0.3, true);
  const DomainPartition p = partition(cyl[0].surface);
  EXPECT_EQ(p.band_counts[1], 10);
  EXPECT_LE(p.area_error, 1e-6);
  // Straightened level sets: p = u and q = t along each segment.
  for (const auto& s : p.levelsets)
    for (int i = 0; i <= 10; ++i) {
      const double t = s.reach * i / 10;
      const Vec2 k = cyl[0].surface.kappa(s.ribbon)(s.anchor + t * s.direction);
      EXPECT_NEAR(k.x(), s.u, 1e-9);
      EXPECT_NEAR(k.y(), t, 1e-9);
    }
}

TEST(Partition, CurvedLevelsetRejected) {
  // Without straightening the fitted level sets bend.
  const auto cyl = cylinders_scene(1, 0.3, false);
  EXPECT_THROW(partition(cyl[0].surface), Error);
}

TEST(Extract, PiecesMatchBlendAndDegrees) {
  const AbcSurface& a = small_square();
  const RationalAssembly& ra = small_assembly();
  EXPECT_LE(ra.stats.max_rel_error, 1e-9);
  EXPECT_GT(ra.stats.min_denominator, 0.0);
  int interior = 0;
  DegreePair single;
  for (const auto& p : ra.patches) {
    if (p.ribbon < 0) {
      // Interior plateau: constant denominator, patch equals the base.
      ++interior;
      EXPECT_LE(bernstein::effective_degree(p.denominator).total(), 0);
      const Vec2 c = polygon_centroid(points_of(p.trim));
      EXPECT_LE((p.eval(c) - a.base.point(c)).norm(), 1e-12);
    }
    if (p.active.size() == 1) single = max(single, p.degree());
  }
  EXPECT_GT(interior, 0);
  // Pieces away from corners reach the formula degree exactly.
  EXPECT_EQ(single, blend_degree_formula(2, 1, 2));
}

TEST(Extract, AdjacentPiecesAgreeOnSharedVertices) {
  const RationalAssembly& ra = small_assembly();
  std::map<std::pair<long long, long long>, std::vector<std::pair<int, Vec2>>> shared;
  for (int i = 0; i < static_cast<int>(ra.patches.size()); ++i)
    for (const auto& v : ra.patches[i].trim)
      shared[{std::llround(v.p.x() * 1e9), std::llround(v.p.y() * 1e9)}].push_back({i, v.p});
  double gap = 0;
  int pairs = 0;
  for (const auto& [key, list] : shared)
    for (std::size_t k = 1; k < list.size(); ++k) {
      gap = std::max(gap, (ra.patches[list[0].first].eval(list[0].second) -
                           ra.patches[list[k].first].eval(list[k].second))
                              .norm());
      ++pairs;
    }
  EXPECT_GT(pairs, 100);
  EXPECT_LE(gap, 1e-9);
}

TEST(Emit, RoundTripIsEvaluationIdentical) {
  const AbcSurface& a = small_square();
  const RationalAssembly& ra = small_assembly();
  for (TrimMode mode : {TrimMode::parametric, TrimMode::geometric, TrimMode::hybrid}) {
    std::stringstream ss;
    write_assembly(ss, a, ra, mode);
    const StoredAssembly sa = read_assembly(ss);
    EXPECT_TRUE(sa.read_only);
    EXPECT_EQ(sa.mode, mode);
    ASSERT_EQ(sa.patches.size(), ra.patches.size());
    std::mt19937 rng(3);
    double err = 0;
    for (std::size_t i = 0; i < ra.patches.size(); i += 7) {
      const auto& p = ra.patches[i];
      for (const Vec2& s : detail::polygon_samples(points_of(p.trim), p.box, 5, rng))
        err = std::max(err, (sa.patches[i].eval(s) - p.eval(s)).norm());
    }
    EXPECT_LE(err, 1e-12) << to_string(mode);
  }
}

TEST(Emit, SpatialBoundaryCurvesAreRibbonRows) {
  const AbcSurface& a = small_square();
  // Whole knot interval: control data equals the Bezier extraction of r(., 0).
  const TrimCurve c = boundary_curve(a, 0, 0.5, 1.0);
  const auto& r = a.ribbons[0];
  const int su = r.knots_u().span(0.75);
  for (int d = 0; d < 3; ++d) {
    const Eigen::MatrixXd blk = r[d].bernstein_on(Rect{0.5, 1.0, 0.0, 1.0}, su, r.knots_v().degree());
    for (int i = 0; i <= c.degree; ++i) EXPECT_EQ(c.points[i][d], blk(i, 0));
  }
  // c_l(u) = a(gamma_l(u)).
  double gap = 0;
  for (int i = 0; i <= 40; ++i) {
    const double u = 0.5 + 0.5 * i / 40;
    const Vec2 s = solve_corner(a.kappa(0), Vec2(u, 0), Vec2(u, 0.0));
    gap = std::max(gap, (Vec3(c.eval((u - 0.5) / 0.5)) - eval_abc(a, s)).norm());
  }
  EXPECT_LE(gap, 1e-9);
}

TEST(Emit, TrimModesDescribeGammaAsRequested) {
  const AbcSurface& a = small_square();
  const RationalAssembly& ra = small_assembly();
  int gamma_spatial = 0, other_spatial = 0, gamma_planar = 0;
  for (TrimMode mode : {TrimMode::parametric, TrimMode::hybrid}) {
    for (const auto& p : ra.patches)
      for (const auto& c : trim_curves(a, p, mode)) {
        const bool gamma = c.kind == EdgeKind::boundary;
        if (mode == TrimMode::parametric) {
          EXPECT_FALSE(c.spatial);
          gamma_planar += gamma;
        } else {
          if (gamma) gamma_spatial += c.spatial;
          else other_spatial += c.spatial;
        }
      }
  }
  EXPECT_GT(gamma_planar, 0);
  EXPECT_GT(gamma_spatial, 0);
  EXPECT_EQ(other_spatial, 0);
}

TEST(Emit, ObjSidecar) {
  std::stringstream ss;
  write_obj(ss, small_assembly(), 4);
  const std::string s = ss.str();
  EXPECT_NE(s.find("\nf "), std::string::npos);
  EXPECT_EQ(s.rfind("v ", 0), 0u);
}
