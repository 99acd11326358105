#include <cmath>
#include <numbers>
#include <random>

#include <gtest/gtest.h>

#include "abc/diffgeo.hpp"
#include "abc/fit.hpp"
#include "abc/trim.hpp"

using namespace abc;

namespace {

// Analytic jets of simple surfaces.
Vec3Jet cylinder_jet(double th, double z) {
  Vec3Jet j;
  j.f = {std::cos(th), std::sin(th), z};
  j.fu = {-std::sin(th), std::cos(th), 0};
  j.fv = {0, 0, 1};
  j.fuu = {-std::cos(th), -std::sin(th), 0};
  j.fuv = Vec3::Zero();
  j.fvv = Vec3::Zero();
  return j;
}

Vec3Jet sphere_jet(double th, double ph) {
  const double ct = std::cos(th), st = std::sin(th), cp = std::cos(ph), sp = std::sin(ph);
  Vec3Jet j;
  j.f = {st * cp, st * sp, ct};
  j.fu = {ct * cp, ct * sp, -st};
  j.fv = {-st * sp, st * cp, 0};
  j.fuu = {-st * cp, -st * sp, -ct};
  j.fuv = {-ct * sp, ct * cp, 0};
  j.fvv = {-st * cp, -st * sp, 0};
  return j;
}

Spline2 random_spline(std::mt19937& rng, int p, int q) {
  std::uniform_real_distribution<double> d(-0.3, 0.3);
  const auto ku = KnotVector::bezier(p, 0, 1), kv = KnotVector::bezier(q, 0, 1);
  Eigen::MatrixXd c(ku.size(), kv.size());
  for (int i = 0; i < c.rows(); ++i)
    for (int j = 0; j < c.cols(); ++j) c(i, j) = d(rng);
  return {ku, kv, c};
}

Spline2 fn(int p, int q, std::function<double(const Vec2&)> f) {
  return interpolate(KnotVector::bezier(p, 0, 1), KnotVector::bezier(q, 0, 1), f);
}

}  // namespace

TEST(Diffgeo, PlaneGraphAndDegenerate) {
  const auto plane = VectorSpline({fn(1, 1, [](auto& s) { return s.x(); }), fn(1, 1, [](auto& s) { return s.y(); }),
                                   fn(1, 1, [](auto&) { return 0.0; })});
  const auto j = plane.jet3(Vec2(0.3, 0.7));
  EXPECT_LT((frame(j).normal - Vec3(0, 0, 1)).norm(), 1e-14);
  EXPECT_LT(curvature_tensor(j).matrix.norm(), 1e-14);
  const auto km = gaussian_mean(j);
  EXPECT_EQ(km.gaussian, 0.0);
  EXPECT_EQ(km.mean, 0.0);
  EXPECT_NEAR(isophote_value(frame(j), Vec3(0, 0, 1)), 1.0, 1e-15);
  EXPECT_NEAR(isophote_value(frame(j), Vec3(1, 0, 0)), 0.0, 1e-15);

  const auto graph = VectorSpline({fn(2, 1, [](auto& s) { return s.x(); }), fn(2, 1, [](auto& s) { return s.y(); }),
                                   fn(2, 1, [](auto& s) { return s.x() * s.x(); })});
  EXPECT_LT((frame(graph.jet3(Vec2(0, 0))).normal - Vec3(0, 0, 1)).norm(), 1e-14);

  Vec3Jet bad = j;
  bad.fv = 2.0 * bad.fu;
  EXPECT_THROW(frame(bad), Error);
}

TEST(Diffgeo, CylinderAndSphere) {
  for (double th : {0.1, 1.0, 2.5}) {
    const auto j = cylinder_jet(th, 0.4);
    const auto fr = frame(j);
    EXPECT_LT((fr.normal.cross(Vec3(std::cos(th), std::sin(th), 0))).norm(), 1e-12);
    const auto e = curvature_tensor(j);
    Eigen::SelfAdjointEigenSolver<Mat3> es(e.matrix);
    std::vector<double> ev(es.eigenvalues().data(), es.eigenvalues().data() + 3);
    std::sort(ev.begin(), ev.end(), [](double a, double b) { return std::abs(a) < std::abs(b); });
    EXPECT_NEAR(ev[0], 0.0, 1e-12);
    EXPECT_NEAR(ev[1], 0.0, 1e-12);
    EXPECT_NEAR(std::abs(ev[2]), 1.0, 1e-12);
    EXPECT_NEAR(gaussian_mean(j).gaussian, 0.0, 1e-12);
    EXPECT_LT((e.matrix * fr.normal).norm(), 1e-10);
  }
  for (double th : {0.3, 0.9, 1.4}) {
    const auto j = sphere_jet(th, 0.7);
    EXPECT_NEAR(gaussian_mean(j).gaussian, 1.0, 1e-9);
    const auto fr = frame(j);
    const auto e = curvature_tensor(j);
    const auto a = gaussian_mean(j), b = gaussian_mean(e, fr.normal);
    EXPECT_NEAR(a.gaussian, b.gaussian, 1e-10);
    EXPECT_NEAR(a.mean, b.mean, 1e-10);
  }
}

TEST(Diffgeo, ReparametrizationInvariance) {
  std::mt19937 rng(4);
  const auto s = VectorSpline({fn(3, 3, [](auto& p) { return p.x() + 0.2 * p.y() * p.y(); }),
                               fn(3, 3, [](auto& p) { return p.y() - 0.1 * p.x() * p.y(); }),
                               random_spline(rng, 3, 3)});
  // phi: a regular polynomial map of the unit square into itself.
  const auto phi = VectorSpline({fn(2, 2, [](auto& p) { return 0.1 + 0.7 * p.x() + 0.1 * p.y() * p.y(); }),
                                 fn(2, 2, [](auto& p) { return 0.1 + 0.6 * p.y() + 0.15 * p.x() * p.y(); })});
  const auto comp = compose_cell(s, phi, {0, 1, 0, 1});
  const VectorSpline sc(KnotVector::bezier(comp.degree.u, 0, 1), KnotVector::bezier(comp.degree.v, 0, 1), comp.coeffs);
  std::uniform_real_distribution<double> d(0.05, 0.95);
  for (int k = 0; k < 50; ++k) {
    const Vec2 x(d(rng), d(rng));
    const auto j1 = sc.jet3(x);
    const auto j2 = s.jet3(phi.point2(x));
    const auto c = compare_oriented(frame(j1).normal, curvature_tensor(j1), frame(j2).normal, curvature_tensor(j2));
    EXPECT_LT(c.normal_angle, 1e-9);
    EXPECT_LT(c.tensor_diff, 1e-9);
    // Self-adjointness of the shape operator with respect to G.
    const auto ff = fundamental_forms(j1);
    const Mat2 gs = ff.g * shape_operator(j1);
    EXPECT_LT(std::abs(gs(0, 1) - gs(1, 0)), 1e-10);
  }
}

TEST(Trim, CornerSolve) {
  const Rect dom{-2, 2, -2, 2};
  const Reparametrization id{Spline2::affine(0, 1, 0, dom), Spline2::affine(0, 0, 1, dom)};
  EXPECT_LT(solve_corner(id, Vec2(0, 0), Vec2(0.3, -0.2)).norm(), 1e-12);
  const Reparametrization aff{Spline2::affine(0.5, 2, 1, dom), Spline2::affine(-0.25, 0.5, 3, dom)};
  Mat2 a;
  a << 2, 1, 0.5, 3;
  const Vec2 expect = a.inverse() * (Vec2(0.2, 0.1) - Vec2(0.5, -0.25));
  EXPECT_LT((solve_corner(aff, Vec2(0.2, 0.1), Vec2(0, 0)) - expect).norm(), 1e-12);
  const Reparametrization cubic{fn(3, 3, [](auto& p) { return p.x() + 0.1 * p.x() * p.x() * p.y(); }),
                                fn(3, 3, [](auto& p) { return p.y() - 0.05 * p.x() * p.x() * p.x(); })};
  const Vec2 s = solve_corner(cubic, Vec2(0.4, 0.3), Vec2(0.5, 0.5));
  EXPECT_LT((cubic(s) - Vec2(0.4, 0.3)).norm(), 1e-11);
  const Reparametrization flat{Spline2::affine(0, 1, 0, dom), Spline2::affine(1, 0, 0, dom)};
  EXPECT_THROW(solve_corner(flat, Vec2(0, 0), Vec2(0, 0)), Error);
}

TEST(Trim, TraceParabola) {
  const Rect dom{-1, 2, -1, 2};
  const auto q = interpolate(KnotVector::bezier(2, -1, 2), KnotVector::bezier(1, -1, 2),
                             [](const Vec2& p) { return p.y() - p.x() * p.x(); });
  const Reparametrization k{Spline2::affine(0, 1, 0, dom), q};
  const auto pts = trace_boundary(k, 50, Vec2(0.01, 0.02));
  ASSERT_EQ(pts.size(), 51u);
  for (std::size_t i = 0; i < pts.size(); ++i) {
    EXPECT_NEAR(pts[i].y(), pts[i].x() * pts[i].x(), 1e-10);
    EXPECT_LT((k(pts[i]) - Vec2(i / 50.0, 0)).norm(), 1e-10);
  }
}

namespace {

// Unit square with q = distance to each edge and p running counterclockwise.
TrimLoop square_loop(double h = 0.2) {
  const Rect dom{-0.5, 1.5, -0.5, 1.5};
  std::vector<Reparametrization> k = {
      {Spline2::affine(0, 1, 0, dom), Spline2::affine(0, 0, 1, dom)},     // bottom, u: x
      {Spline2::affine(0, 0, 1, dom), Spline2::affine(1, -1, 0, dom)},    // right, u: y
      {Spline2::affine(1, -1, 0, dom), Spline2::affine(1, 0, -1, dom)},   // top, u: 1-x
      {Spline2::affine(1, 0, -1, dom), Spline2::affine(0, 1, 0, dom)}};   // left, u: 1-y
  return make_loop(k, {h, h, h, h}, {Vec2(0, 0), Vec2(1, 0), Vec2(1, 1), Vec2(0, 1)}, 40);
}

}  // namespace

TEST(Trim, SquareLoopContainsAndStripes) {
  const auto loop = square_loop();
  EXPECT_TRUE(contains(loop, Vec2(0.5, 0.5)));
  EXPECT_FALSE(contains(loop, Vec2(-0.1, 0.5)));
  EXPECT_NEAR(polygon_area(loop.polygon()), 1.0, 1e-12);
  std::mt19937 rng(1);
  std::uniform_real_distribution<double> d(-0.3, 1.3);
  int agree = 0;
  const auto poly = loop.polygon();
  for (int i = 0; i < 1000; ++i) {
    const Vec2 s(d(rng), d(rng));
    if (contains(loop, s) == point_in_polygon(poly, s) || distance_to_polyline(poly, s, true) < 1e-8) ++agree;
  }
  EXPECT_GE(agree, 999);
  EXPECT_TRUE(stripe_contains(loop.reparams[0].q, 0.1, Vec2(0.5, 0.05)));
  EXPECT_FALSE(stripe_contains(loop.reparams[0].q, 0.1, Vec2(0.5, 0.2)));
  EXPECT_TRUE(stripe_contains(loop.reparams[0].q, 0.1, Vec2(0.5, 0.0)));
  std::vector<Spline2> qs;
  for (auto& k : loop.reparams) qs.push_back(k.q);
  EXPECT_TRUE(check_stripes(loop, qs, 64).ok);
  auto wide = loop;
  wide.widths.assign(4, 0.7);
  EXPECT_FALSE(check_stripes(wide, qs, 64).ok);
}

TEST(Trim, MismatchedCornerRejected) {
  const Rect dom{-0.5, 1.5, -0.5, 1.5};
  std::vector<Reparametrization> k = {{Spline2::affine(0, 1, 0, dom), Spline2::affine(0, 0, 1, dom)},
                                      {Spline2::affine(0, 0, 1, dom), Spline2::affine(1, -1, 0, dom)},
                                      {Spline2::affine(1, -1, 0, dom), Spline2::affine(1, 0, -1, dom)},
                                      {Spline2::affine(0.9, 0, -1, dom), Spline2::affine(0, 1, 0, dom)}};
  EXPECT_THROW(make_loop(k, {0.2, 0.2, 0.2, 0.2}, {Vec2(0, 0), Vec2(1, 0), Vec2(1, 1), Vec2(0, 1)}), Error);
}

TEST(Fit, AffineReproductionAndConstraints) {
  const FitSpace bilinear{KnotVector::bezier(1, 0, 1), KnotVector::bezier(1, 0, 1)};
  CorrespondenceSet c;
  auto aff = [](const Vec2& s) { return Vec2(0.1 + 0.8 * s.x() - 0.2 * s.y(), 0.3 * s.x() + 0.9 * s.y()); };
  for (int i = 0; i <= 6; ++i)
    for (int j = 0; j <= 6; ++j) {
      const Vec2 s(i / 6.0, j / 6.0);
      c.approximate.push_back({s, aff(s)});
    }
  const auto k = fit_reparam(bilinear, c);
  for (const auto& x : c.approximate) EXPECT_LT((k(x.sigma) - x.tau).norm(), 1e-11);

  // Corner pairs only: the minimal-energy interpolant; refitting to itself is idempotent.
  const FitSpace bicubic{KnotVector::uniform(3, 0, 1, 2), KnotVector::uniform(3, 0, 1, 2)};
  CorrespondenceSet corners;
  corners.interpolate = {{Vec2(0.1, 0.1), Vec2(0, 0)}, {Vec2(0.9, 0.2), Vec2(1, 0)}};
  const auto k1 = fit_reparam(bicubic, corners);
  EXPECT_LT((k1(Vec2(0.1, 0.1)) - Vec2(0, 0)).norm(), 1e-9);
  EXPECT_LT((k1(Vec2(0.9, 0.2)) - Vec2(1, 0)).norm(), 1e-9);
  CorrespondenceSet again = corners;
  for (int i = 0; i <= 8; ++i)
    for (int j = 0; j <= 8; ++j) again.approximate.push_back({Vec2(i / 8.0, j / 8.0), k1(Vec2(i / 8.0, j / 8.0))});
  const auto k2 = fit_reparam(bicubic, again);
  for (const auto& x : again.approximate) EXPECT_LT((k2(x.sigma) - x.tau).norm(), 1e-10);

  // Jacobian conditions hold exactly.
  Mat32 dr;
  dr << 1, 0.2, 0, 1, 0.3, -0.1;
  Mat2 a;
  a << 1.2, 0.1, -0.3, 0.8;
  const Mat32 t = dr * a;
  EXPECT_LT((jacobian_preimage(dr, t) - a).norm(), 1e-12);
  const std::vector<JacobianCondition> jac = {{Vec2(0.1, 0.1), a}};
  FitReport rep;
  const auto k3 = fit_reparam(bicubic, corners, jac, {}, &rep);
  EXPECT_LT((dr * k3.jacobian(Vec2(0.1, 0.1)) - t).norm(), 1e-9);
  EXPECT_LT(rep.max_interpolation_residual, 1e-9);

  // Contradicting interpolation at one point is infeasible and named.
  CorrespondenceSet bad = corners;
  bad.interpolate.push_back({Vec2(0.1, 0.1), Vec2(0.5, 0)});
  try {
    fit_reparam(bicubic, bad);
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("interpolation at (0.1,0.1)"), std::string::npos) << e.what();
  }
}

TEST(Fit, NestedSpacesDoNotIncreaseObjective) {
  CorrespondenceSet c;
  c.interpolate = {{Vec2(0, 0), Vec2(0, 0)}, {Vec2(1, 0), Vec2(1, 0)}};
  for (int i = 0; i <= 10; ++i)
    for (int j = 0; j <= 10; ++j) {
      const Vec2 s(i / 10.0, j / 10.0);
      c.approximate.push_back({s, Vec2(std::sin(s.x() * 2), std::cos(3 * s.y()) * s.x())});
    }
  FitOptions opt;
  opt.lambda = 0.0;
  FitReport r1, r2;
  fit_reparam({KnotVector::uniform(3, 0, 1, 2), KnotVector::uniform(3, 0, 1, 2)}, c, {}, opt, &r1);
  fit_reparam({KnotVector::uniform(3, 0, 1, 4), KnotVector::uniform(3, 0, 1, 4)}, c, {}, opt, &r2);
  EXPECT_LE(r2.objective, r1.objective + 1e-12);
}

TEST(Fit, ProjectionAndTangentFrame) {
  const auto b = VectorSpline({fn(2, 2, [](auto& p) { return p.x(); }), fn(2, 2, [](auto& p) { return p.y(); }),
                               fn(2, 2, [](auto& p) { return 0.2 * p.x() * p.x() - 0.1 * p.y() * p.y(); })});
  // Self-projection recovers the parameters.
  std::vector<Vec2> taus = {Vec2(0.2, 0.3), Vec2(0.7, 0.6), Vec2(0.5, 0.9)};
  const auto c = harvest_correspondences(b, b, taus, {0, 1, 0, 1});
  ASSERT_EQ(c.approximate.size(), 3u);
  for (const auto& x : c.approximate) EXPECT_LT((x.sigma - x.tau).norm(), 1e-9);
  // Offset points project orthogonally.
  for (const Vec2& t : taus) {
    const auto j = b.jet3(t);
    const Vec3 x = j.f + 0.05 * frame(j).normal;
    Vec2 s = t + Vec2(0.05, -0.05);
    ASSERT_TRUE(project_onto(b, x, s));
    const auto js = b.jet3(s);
    EXPECT_LT(std::abs((x - js.f).dot(js.fu)), 1e-8);
    EXPECT_LT(std::abs((x - js.f).dot(js.fv)), 1e-8);
  }
  const auto j = b.jet3(Vec2(0.4, 0.4));
  const Mat32 db = jacobian(j);
  const Vec3 n = frame(j).normal;
  EXPECT_LT((corner_tangent_frame(db, n) - db).norm(), 1e-12);
  const Vec3 tilted = (n + 1e-3 * j.fu.normalized()).normalized();
  const Mat32 t = corner_tangent_frame(db, tilted);
  EXPECT_LT((tilted.transpose() * t).norm(), 1e-14);
  EXPECT_LT((t - db).norm(), 5e-3);
}
