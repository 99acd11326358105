#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "abc/scenes.hpp"
#include "abc/surface.hpp"
#include "abc/weights.hpp"

using namespace abc;

namespace {

AbcSurface square(bool plateau, int r = 3) {
  SquareOptions o;
  o.plateau = plateau;
  o.r = r;
  return square_scene(o);
}

}  // namespace

TEST(Counterexample, MatchesClosedForm) {
  const AbcSurface a = build_counterexample();
  std::mt19937 rng(7);
  std::uniform_real_distribution<double> d(0.01, 1.0);
  for (int i = 0; i < 200; ++i) {
    const double x = d(rng), y = d(rng);
    const Vec3 got = eval_abc(a, {x, y});
    const Vec3 want = counterexample_closed_form(x, y);
    EXPECT_LE((got - want).norm(), 1e-12 * std::max(1.0, want.norm())) << x << "," << y;
  }
  // The corner value is the shared ribbon point.
  EXPECT_LE(eval_abc(a, {0, 0}).norm(), 1e-14);
}

TEST(PlainWeights, VanishOnEdgesWithExpectedOrder) {
  const AbcSurface a = square(false, 2);
  for (double t : {0.2, 0.5, 0.8}) {
    EXPECT_NEAR(a.weights.w({t, 0.0}), 0.0, 1e-14);
    EXPECT_GT(a.weights.w_ribbon[0]({t, 0.0}), 0.0);
    EXPECT_NEAR(a.weights.w_ribbon[1]({t, 0.0}), 0.0, 1e-14);
  }
  const SlopeResult s = contact_order_estimate(a, 0, {0.5, 0.0});
  ASSERT_FALSE(s.wbar.empty());
  for (double v : s.wbar) EXPECT_NEAR(v, 2.0, 0.05);
  for (int l : {1, 3})
    for (double v : s.wbar_l[l]) EXPECT_NEAR(v, 2.0, 0.05);
}

TEST(PlainWeights, RejectsNonPositiveFactor) {
  SquareOptions o;
  o.plateau = false;
  AbcSurface a = square_scene(o);
  TrimLoop loop = a.loop;
  loop.reparams[2].q = loop.reparams[2].q.negated();
  try {
    plain_weights(loop, {1, 1, 1, 1});
    FAIL() << "expected a positivity failure";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("q_2"), std::string::npos) << e.what();
  }
}

TEST(Plateau, ClassificationSeparatesSupports) {
  const AbcSurface a = square(true);
  const auto& q = a.kappa(0).q;
  const auto cls = classify_indices(q, 0.25, a.loop.bounding_box());
  EXPECT_GT(cls.count_i(), 0);
  EXPECT_GT(cls.count_j(), 0);
  for (std::size_t i = 0; i < cls.in_i.size(); ++i) EXPECT_FALSE(cls.in_i[i] && cls.in_j[i]);
  // qbar follows q near the curve and is the plateau constant far away.
  const Spline2& qb = a.weights.qbar[0];
  EXPECT_NEAR(qb({0.5, 0.01}), q({0.5, 0.01}), 1e-12);
  EXPECT_NEAR(qb({0.5, 0.8}), 0.25, 1e-12);
  const Spline2& z = a.weights.cutoff[0];
  EXPECT_NEAR(z({0.5, 0.01}), 1.0, 1e-12);
  EXPECT_NEAR(z({0.5, 0.8}), 0.0, 1e-12);
  for (int i = 0; i <= 40; ++i) {
    const Vec2 s(0.5, 1.0 * i / 40);
    EXPECT_GE(z(s), -1e-12);
    EXPECT_LE(z(s), 1.0 + 1e-12);
  }
}

TEST(Plateau, BlendReducesToBaseInTheMiddle) {
  const AbcSurface a = square(true);
  const Vec2 s(0.5, 0.5);
  EXPECT_LE((eval_abc(a, s) - a.base.point(s)).norm(), 1e-12);
}

TEST(Degrees, HexagonPlainAndPlateau) {
  const TrimLoop loop = hexagon_loop();
  const std::vector<int> r(6, 3);
  const WeightSystem plain = plain_weights(loop, r);
  EXPECT_EQ(plain.w.degree(), (DegreePair{54, 54}));
  const Spline2 w = plain.w.materialize();
  EXPECT_EQ(w.degree(), (DegreePair{54, 54}));
  for (const Vec2& s : {Vec2(0.1, 0.2), Vec2(-0.3, 0.4), Vec2(0.0, -0.5)})
    EXPECT_NEAR(w(s), plain.w(s), 1e-12 * std::max(1.0, std::abs(plain.w(s))));

  std::vector<DegreePair> dq(6, DegreePair{3, 3});
  const auto acc = degree_accounting(dq, r);
  EXPECT_EQ(acc.plain_w, (DegreePair{54, 54}));
  EXPECT_EQ(acc.plateau_w_bound, (DegreePair{18, 18}));
  EXPECT_EQ(blend_degree_formula(2, 1, 2), (DegreePair{10, 10}));
  EXPECT_EQ(blend_degree_formula(3, 2, 3), (DegreePair{24, 24}));
}

TEST(Blend, JetMatchesFiniteDifferences) {
  const AbcSurface a = square(true);
  const double h = 1e-5;
  for (const Vec2& s : {Vec2(0.3, 0.1), Vec2(0.12, 0.07), Vec2(0.6, 0.4)}) {
    const Vec3Jet j = blend_jet(a, s);
    EXPECT_LE((j.f - eval_abc(a, s)).norm(), 1e-12);
    const Vec3 fu = (eval_abc(a, s + Vec2(h, 0)) - eval_abc(a, s - Vec2(h, 0))) / (2 * h);
    const Vec3 fv = (eval_abc(a, s + Vec2(0, h)) - eval_abc(a, s - Vec2(0, h))) / (2 * h);
    EXPECT_LE((j.fu - fu).norm(), 1e-6);
    EXPECT_LE((j.fv - fv).norm(), 1e-6);
    const Vec3Jet ju = blend_jet(a, s + Vec2(h, 0)), jd = blend_jet(a, s - Vec2(h, 0));
    EXPECT_LE((j.fuu - (ju.fu - jd.fu) / (2 * h)).norm(), 1e-5);
    EXPECT_LE((j.fuv - (ju.fv - jd.fv) / (2 * h)).norm(), 1e-5);
  }
}

TEST(Blend, SquareSceneIsG2) {
  const AbcSurface a = square(true);
  const ContactReport rep = verify_contact(a, Level::G2);
  for (const auto& f : rep.failures) ADD_FAILURE() << f;
  EXPECT_TRUE(rep.g0);
  EXPECT_TRUE(rep.g1);
  EXPECT_TRUE(rep.g2);
}

TEST(Blend, LowExponentIsOnlyG0) {
  const AbcSurface a = square(true, 1);
  EXPECT_TRUE(verify_contact(a, Level::G0).verdict());
  EXPECT_FALSE(verify_contact(a, Level::G2).verdict());
}
