#include <random>

#include <gtest/gtest.h>

#include "abc/spline.hpp"

using namespace abc;

namespace {

Spline2 random_spline(std::mt19937& rng, int p, int q, const std::vector<double>& iu, const std::vector<double>& iv) {
  std::uniform_real_distribution<double> d(-1.0, 1.0);
  const auto ku = KnotVector::with_inner(p, 0.0, 1.0, iu);
  const auto kv = KnotVector::with_inner(q, 0.0, 1.0, iv);
  Eigen::MatrixXd c(ku.size(), kv.size());
  for (int i = 0; i < c.rows(); ++i)
    for (int j = 0; j < c.cols(); ++j) c(i, j) = d(rng);
  return {ku, kv, c};
}

std::vector<Vec2> samples(std::mt19937& rng, int n, double lo = 0.0, double hi = 1.0) {
  std::uniform_real_distribution<double> d(lo, hi);
  std::vector<Vec2> s;
  for (int i = 0; i < n; ++i) s.emplace_back(d(rng), d(rng));
  return s;
}

// Naive Cox-de Boor recursion, independent of the library's basis routine.
double cox_de_boor(const std::vector<double>& k, int i, int p, double u) {
  if (p == 0) {
    const bool last = k[i + 1] == k.back() && u == k.back() && k[i] < k[i + 1];
    return (k[i] <= u && u < k[i + 1]) || last ? 1.0 : 0.0;
  }
  double a = 0, b = 0;
  if (k[i + p] > k[i]) a = (u - k[i]) / (k[i + p] - k[i]) * cox_de_boor(k, i, p - 1, u);
  if (k[i + p + 1] > k[i + 1]) b = (k[i + p + 1] - u) / (k[i + p + 1] - k[i + 1]) * cox_de_boor(k, i + 1, p - 1, u);
  return a + b;
}

}  // namespace

TEST(KnotVector, RejectsMalformed) {
  EXPECT_THROW(KnotVector(2, {0, 0, 1, 1, 1}), Error);
  EXPECT_THROW(KnotVector(1, {0, 0, 0.7, 0.5, 1, 1}), Error);
  EXPECT_THROW(KnotVector(1, {0, 0, 0.5, 0.5, 0.5, 1, 1}), Error);
  EXPECT_NO_THROW(KnotVector(2, {0, 0, 0, 0.5, 0.5, 1, 1, 1}));
}

TEST(KnotVector, PartitionOfUnityAndNaiveBasis) {
  const KnotVector kv(3, {0, 0, 0, 0, 0.2, 0.5, 0.5, 0.9, 1, 1, 1, 1});
  for (int s = 0; s <= 200; ++s) {
    const double u = s / 200.0;
    const int i = kv.span(u);
    const Eigen::MatrixXd b = kv.basis(i, u, 2);
    EXPECT_NEAR(b.row(0).sum(), 1.0, 1e-13);
    EXPECT_NEAR(b.row(1).sum(), 0.0, 1e-10);
    for (int k = 0; k <= 3; ++k) EXPECT_NEAR(b(0, k), cox_de_boor(kv.knots(), i - 3 + k, 3, u), 1e-13);
  }
}

TEST(Spline2, DerivativesMatchFiniteDifferences) {
  std::mt19937 rng(7);
  const auto f = random_spline(rng, 3, 2, {0.3, 0.6}, {0.5});
  const double h = 1e-5;
  for (const auto& s : samples(rng, 50, 0.05, 0.95)) {
    const auto j = f.jet(s);
    const Vec2 eu(h, 0), ev(0, h);
    const double fu = (f(s + eu) - f(s - eu)) / (2 * h);
    const double fv = (f(s + ev) - f(s - ev)) / (2 * h);
    const double fuu = (f.jet(s + eu).fu - f.jet(s - eu).fu) / (2 * h);
    const double fuv = (f.jet(s + ev).fu - f.jet(s - ev).fu) / (2 * h);
    const double fvv = (f.jet(s + ev).fv - f.jet(s - ev).fv) / (2 * h);
    auto rel = [](double a, double b) { return std::abs(a - b) / std::max(1.0, std::abs(b)); };
    EXPECT_LT(rel(j.fu, fu), 1e-6);
    EXPECT_LT(rel(j.fv, fv), 1e-6);
    EXPECT_LT(rel(j.fuu, fuu), 1e-6);
    EXPECT_LT(rel(j.fuv, fuv), 1e-6);
    EXPECT_LT(rel(j.fvv, fvv), 1e-6);
    // The derivative spline agrees with the jet.
    EXPECT_NEAR(f.partial(Dir::U)(s), j.fu, 1e-10);
    EXPECT_NEAR(f.partial(Dir::V, 2)(s), j.fvv, 1e-9);
  }
  EXPECT_EQ(f.partial(Dir::V, 3)(Vec2(0.4, 0.4)), 0.0);
}

TEST(Spline2, KnotInsertionPreservesValues) {
  std::mt19937 rng(11);
  const auto f = random_spline(rng, 3, 3, {0.4}, {0.25, 0.75});
  auto g = f.insert_knot(Dir::U, 0.4).insert_knot(Dir::U, 0.7).insert_knot(Dir::V, 0.1);
  g = g.extracted();
  for (const auto& s : samples(rng, 100)) EXPECT_NEAR(f(s), g(s), 1e-13);
  EXPECT_THROW(f.insert_knot(Dir::U, 1.5), Error);
  auto h = f;
  for (int i = 0; i < 3; ++i) h = h.insert_knot(Dir::U, 0.4);
  EXPECT_THROW(h.insert_knot(Dir::U, 0.4), Error);
}

TEST(Spline2, ProlongationContinuesEndPiece) {
  std::mt19937 rng(3);
  const auto f = random_spline(rng, 2, 2, {0.5}, {0.5});
  // Outside the domain the end piece continues; compare with its Bernstein form.
  const Rect last{0.5, 1.0, 0.5, 1.0};
  const Eigen::MatrixXd b = f.bernstein_on(last);
  for (const Vec2 s : {Vec2(1.3, 1.1), Vec2(1.7, 0.8), Vec2(0.9, 1.6)})
    EXPECT_NEAR(f(s), eval_bernstein(b, last, s), 1e-11);
  // A cell larger than its span prolongs that span's piece.
  const Rect wide{0.5, 1.5, 0.5, 1.5};
  const Eigen::MatrixXd w = f.bernstein_on(wide, f.knots_u().span(0.7), f.knots_v().span(0.7));
  for (const Vec2 s : {Vec2(1.3, 1.1), Vec2(0.6, 0.9)}) EXPECT_NEAR(f(s), eval_bernstein(w, wide, s), 1e-11);
}

TEST(Arithmetic, ProductSumPowerPointwise) {
  std::mt19937 rng(5);
  const auto f = random_spline(rng, 2, 3, {0.3, 0.6}, {0.5});
  const auto g = random_spline(rng, 3, 1, {0.6, 0.8}, {0.2, 0.5});
  const auto fg = multiply(f, g);
  const auto sum = add(f, g);
  const auto f3 = power(f, 3);
  EXPECT_EQ(fg.degree(), (DegreePair{5, 4}));
  EXPECT_EQ(f3.degree(), (DegreePair{6, 9}));
  for (const auto& s : samples(rng, 200)) {
    EXPECT_NEAR(fg(s), f(s) * g(s), 1e-10);
    EXPECT_NEAR(sum(s), f(s) + g(s), 1e-12);
    EXPECT_NEAR(f3(s), std::pow(f(s), 3), 1e-10);
  }
  // Continuity: simple knots of f at 0.3 give a C1 product in u, so
  // multiplicity (2+3) - 1 = 4; a shared knot takes the weaker side.
  EXPECT_EQ(fg.knots_u().multiplicity(0.3), 4);
  EXPECT_EQ(fg.knots_u().multiplicity(0.6), 4);
  EXPECT_EQ(fg.knots_v().multiplicity(0.2), 4);
  const auto other = Spline2(KnotVector::bezier(1, 0, 2), KnotVector::bezier(1, 0, 1), Eigen::MatrixXd::Ones(2, 2));
  EXPECT_THROW(multiply(f, other), Error);
}

TEST(Arithmetic, EffectiveDegreeOfElevatedBlock) {
  Eigen::MatrixXd a(3, 2);
  a << 1, 2, 0.5, -1, 3, 0;
  const Eigen::MatrixXd e = bernstein::elevate(a, 7, 5);
  EXPECT_EQ(bernstein::effective_degree(e), (DegreePair{2, 1}));
  EXPECT_LT((bernstein::reduce(e, 2, 1) - a).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Compose, MatchesPointwiseComposition) {
  std::mt19937 rng(9);
  std::vector<Spline2> rc;
  for (int d = 0; d < 3; ++d) rc.push_back(random_spline(rng, 3, 2, {}, {}));
  const VectorSpline r(rc);
  // kappa: a polynomial map of the cell into the unit square.
  const Rect dom{0, 1, 0, 1};
  const auto p = interpolate(KnotVector::bezier(2, 0, 1), KnotVector::bezier(1, 0, 1),
                             [](const Vec2& s) { return 0.2 + 0.5 * s.x() * s.x() + 0.1 * s.y(); });
  const auto q = interpolate(KnotVector::bezier(2, 0, 1), KnotVector::bezier(1, 0, 1),
                             [](const Vec2& s) { return 0.3 * s.y() + 0.2 * s.x() * s.y(); });
  const VectorSpline kappa({p, q});
  const auto c = compose_cell(r, kappa, dom);
  EXPECT_EQ(c.degree, (DegreePair{10, 5}));
  for (const auto& s : samples(rng, 100)) {
    const Vec2 k = kappa.point2(s);
    EXPECT_LT((c.eval(s) - r.eval(k)).norm(), 1e-10);
  }
}

TEST(Compose, StraddlingImageNamesBreakpoint) {
  std::mt19937 rng(2);
  const VectorSpline r({random_spline(rng, 2, 2, {0.5}, {}), random_spline(rng, 2, 2, {0.5}, {})});
  const auto p = Spline2::affine(0.0, 1.0, 0.0, {0, 1, 0, 1});
  const auto q = Spline2::affine(0.0, 0.0, 1.0, {0, 1, 0, 1});
  try {
    compose_cell(r, VectorSpline({p, q}), {0, 1, 0, 1});
    FAIL() << "expected a straddle error";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::validation);
    EXPECT_NE(std::string(e.what()).find("u=0.5"), std::string::npos) << e.what();
  }
  EXPECT_NO_THROW(compose_cell(r, VectorSpline({p, q}), {0, 1, 0, 1}, std::pair{2, 2}));
}
