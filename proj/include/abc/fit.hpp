#pragma once

// Fitting of reparametrizations: equality-constrained least squares with a
// thin-plate fairness term, plus the geometric helpers that generate the
// data (orthogonal projection onto the base, corner tangent frames).

#include <algorithm>
#include <array>
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

namespace abc {

// ---------------------------------------------------------------------------
// Thin-plate energy

namespace detail {

/// Gauss-Legendre nodes/weights on [-1,1].
inline void gauss_legendre(int n, std::vector<double>& x, std::vector<double>& w) {
  x.assign(n, 0.0);
  w.assign(n, 0.0);
  for (int i = 0; i < n; ++i) {
    double z = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
    for (int it = 0; it < 100; ++it) {
      double p1 = 1.0, p2 = 0.0;
      for (int j = 1; j <= n; ++j) {
        const double p3 = p2;
        p2 = p1;
        p1 = ((2.0 * j - 1.0) * z * p2 - (j - 1.0) * p3) / j;
      }
      const double pp = n * (z * p1 - p2) / (z * z - 1.0);
      const double z1 = z;
      z = z1 - p1 / pp;
      if (std::abs(z - z1) < 1e-15) {
        x[i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * pp * pp);
        break;
      }
      x[i] = z;
      w[i] = 2.0 / ((1.0 - z * z) * pp * pp);
    }
  }
}

/// 1D Gram matrices M_k(i,j) = int B_i^(k) B_j^(k), k = 0,1,2.
inline std::array<Eigen::MatrixXd, 3> gram(const KnotVector& kv) {
  const int n = kv.size(), p = kv.degree();
  std::array<Eigen::MatrixXd, 3> m;
  for (auto& x : m) x = Eigen::MatrixXd::Zero(n, n);
  std::vector<double> gx, gw;
  gauss_legendre(p + 1, gx, gw);
  const auto br = kv.breaks();
  for (std::size_t s = 0; s + 1 < br.size(); ++s) {
    const double a = br[s], b = br[s + 1];
    for (std::size_t g = 0; g < gx.size(); ++g) {
      const double u = 0.5 * (a + b) + 0.5 * (b - a) * gx[g];
      const double wt = 0.5 * (b - a) * gw[g];
      const int span = kv.span(u);
      const Eigen::MatrixXd d = kv.basis(span, u, std::min(2, p));
      for (int k = 0; k <= std::min(2, p); ++k)
        for (int i = 0; i <= p; ++i)
          for (int j = 0; j <= p; ++j) m[k](span - p + i, span - p + j) += wt * d(k, i) * d(k, j);
    }
  }
  return m;
}

inline Eigen::MatrixXd kron(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  Eigen::MatrixXd k(a.rows() * b.rows(), a.cols() * b.cols());
  for (int i = 0; i < a.rows(); ++i)
    for (int j = 0; j < a.cols(); ++j) k.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  return k;
}

}  // namespace detail

/// Coefficients are flattened as index = i * nv + j (u-major).
inline Eigen::MatrixXd thin_plate_energy(const KnotVector& ku, const KnotVector& kv) {
  const auto mu = detail::gram(ku), mv = detail::gram(kv);
  return detail::kron(mu[2], mv[0]) + 2.0 * detail::kron(mu[1], mv[1]) + detail::kron(mu[0], mv[2]);
}

/// Row of the collocation matrix: derivative (du, dv) of all basis
/// functions of the tensor space at s (flattened u-major).
inline Eigen::RowVectorXd basis_row(const KnotVector& ku, const KnotVector& kv, const Vec2& s, int du = 0,
                                    int dv = 0) {
  Eigen::RowVectorXd row = Eigen::RowVectorXd::Zero(ku.size() * kv.size());
  const int su = ku.span(s.x()), sv = kv.span(s.y());
  const Eigen::MatrixXd bu = ku.basis(su, s.x(), du), bv = kv.basis(sv, s.y(), dv);
  const int p = ku.degree(), q = kv.degree();
  for (int i = 0; i <= p; ++i)
    for (int j = 0; j <= q; ++j) row[(su - p + i) * kv.size() + (sv - q + j)] = bu(du, i) * bv(dv, j);
  return row;
}

inline Eigen::MatrixXd unflatten(const Eigen::VectorXd& c, int nu, int nv) {
  Eigen::MatrixXd m(nu, nv);
  for (int i = 0; i < nu; ++i)
    for (int j = 0; j < nv; ++j) m(i, j) = c[i * nv + j];
  return m;
}

inline Eigen::VectorXd flatten(const Eigen::MatrixXd& m) {
  Eigen::VectorXd c(m.size());
  for (int i = 0; i < m.rows(); ++i)
    for (int j = 0; j < m.cols(); ++j) c[i * m.cols() + j] = m(i, j);
  return c;
}

// ---------------------------------------------------------------------------
// Equality-constrained least squares

struct LsqProblem {
  Eigen::MatrixXd a;             ///< data rows
  Eigen::VectorXd y;
  Eigen::MatrixXd c;             ///< equality rows
  Eigen::VectorXd d;
  std::vector<std::string> labels;  ///< one per equality row
  Eigen::MatrixXd fairness;
  double lambda = 1e-6;          ///< relative to trace(A^T A) / trace(F)
  double feasibility_tol = 1e-9;
};

struct LsqResult {
  Eigen::VectorXd x;
  double objective = 0.0;        ///< data residual + lambda * fairness
  double max_constraint_residual = 0.0;
  double lambda_abs = 0.0;
};

/// Null-space method: x = x0 + Z z with C x0 = d and C Z = 0.
inline LsqResult solve_constrained(const LsqProblem& pb, const std::string& stage = "reparam_fit") {
  const int n = static_cast<int>(pb.fairness.rows());
  Eigen::VectorXd x0 = Eigen::VectorXd::Zero(n);
  Eigen::MatrixXd z = Eigen::MatrixXd::Identity(n, n);
  if (pb.c.rows() > 0) {
    const Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(pb.c);
    x0 = cod.solve(pb.d);
    const Eigen::VectorXd res = pb.c * x0 - pb.d;
    const double scale = std::max(1.0, pb.d.cwiseAbs().maxCoeff());
    if (res.cwiseAbs().maxCoeff() > pb.feasibility_tol * scale) {
      std::vector<int> idx(res.size());
      for (int i = 0; i < res.size(); ++i) idx[i] = i;
      std::sort(idx.begin(), idx.end(), [&](int a, int b) { return std::abs(res[a]) > std::abs(res[b]); });
      std::ostringstream os;
      os << "infeasible equality constraints; worst offenders:";
      for (int k = 0; k < std::min<int>(3, static_cast<int>(idx.size())); ++k)
        os << " [" << (idx[k] < static_cast<int>(pb.labels.size()) ? pb.labels[idx[k]] : std::to_string(idx[k]))
           << " residual " << res[idx[k]] << "]";
      os << "; enlarge the spline space or drop constraints";
      throw validation_error(stage, os.str());
    }
    // Null space of C from a full QR of C^T.
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(pb.c.transpose());
    qr.setThreshold(1e-10);
    const int rank = static_cast<int>(qr.rank());
    const Eigen::MatrixXd q = qr.householderQ();
    z = q.rightCols(n - rank);
  }
  double lam = pb.lambda;
  Eigen::MatrixXd ata = Eigen::MatrixXd::Zero(n, n);
  Eigen::VectorXd aty = Eigen::VectorXd::Zero(n);
  if (pb.a.rows() > 0) {
    ata = pb.a.transpose() * pb.a;
    aty = pb.a.transpose() * pb.y;
    const double tf = pb.fairness.trace();
    if (tf > 0 && ata.trace() > 0) lam = pb.lambda * ata.trace() / tf;
  } else {
    lam = 1.0;
  }
  const Eigen::MatrixXd h = ata + lam * pb.fairness;
  LsqResult out;
  out.lambda_abs = lam;
  if (z.cols() > 0) {
    const Eigen::MatrixXd hz = z.transpose() * h * z;
    const Eigen::VectorXd g = z.transpose() * (aty - h * x0);
    const Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(hz);
    out.x = x0 + z * cod.solve(g);
  } else {
    out.x = x0;
  }
  if (pb.a.rows() > 0) out.objective = (pb.a * out.x - pb.y).squaredNorm();
  out.objective += lam * out.x.dot(pb.fairness * out.x);
  if (pb.c.rows() > 0) out.max_constraint_residual = (pb.c * out.x - pb.d).cwiseAbs().maxCoeff();
  return out;
}

// ---------------------------------------------------------------------------
// Reparametrization fitting

struct Correspondence {
  Vec2 sigma;
  Vec2 tau;
};

struct CorrespondenceSet {
  std::vector<Correspondence> interpolate;
  std::vector<Correspondence> approximate;
  std::vector<Vec2> dropped;  ///< tau values whose projection failed
};

/// Required Jacobian of kappa at a point.
struct JacobianCondition {
  Vec2 sigma;
  Mat2 dkappa;
};

struct FitSpace {
  KnotVector ku;
  KnotVector kv;
};

struct FitOptions {
  double lambda = 1e-6;
  double feasibility_tol = 1e-9;
};

struct FitReport {
  double max_interpolation_residual = 0.0;
  double max_jacobian_residual = 0.0;
  double rms_approximation = 0.0;
  double objective = 0.0;
};

/// p and q decouple: each is a scalar constrained fit in the same space.
inline Reparametrization fit_reparam(const FitSpace& space, const CorrespondenceSet& corr,
                                     const std::vector<JacobianCondition>& jac = {}, const FitOptions& opt = {},
                                     FitReport* report = nullptr) {
  const int n = space.ku.size() * space.kv.size();
  const Eigen::MatrixXd f = thin_plate_energy(space.ku, space.kv);
  Spline2 comps[2];
  FitReport rep;
  for (int comp = 0; comp < 2; ++comp) {
    LsqProblem pb;
    pb.fairness = f;
    pb.lambda = opt.lambda;
    pb.feasibility_tol = opt.feasibility_tol;
    const int ni = static_cast<int>(corr.interpolate.size());
    const int nj = static_cast<int>(jac.size());
    pb.c.resize(ni + 2 * nj, n);
    pb.d.resize(ni + 2 * nj);
    for (int i = 0; i < ni; ++i) {
      pb.c.row(i) = basis_row(space.ku, space.kv, corr.interpolate[i].sigma);
      pb.d[i] = corr.interpolate[i].tau[comp];
      std::ostringstream os;
      os << (comp == 0 ? "p" : "q") << " interpolation at (" << corr.interpolate[i].sigma.x() << ","
         << corr.interpolate[i].sigma.y() << ")";
      pb.labels.push_back(os.str());
    }
    for (int k = 0; k < nj; ++k) {
      for (int d = 0; d < 2; ++d) {
        pb.c.row(ni + 2 * k + d) = basis_row(space.ku, space.kv, jac[k].sigma, d == 0 ? 1 : 0, d == 1 ? 1 : 0);
        pb.d[ni + 2 * k + d] = jac[k].dkappa(comp, d);
        std::ostringstream os;
        os << (comp == 0 ? "p" : "q") << (d == 0 ? "_u" : "_v") << " Jacobian condition at (" << jac[k].sigma.x()
           << "," << jac[k].sigma.y() << ")";
        pb.labels.push_back(os.str());
      }
    }
    const int na = static_cast<int>(corr.approximate.size());
    pb.a.resize(na, n);
    pb.y.resize(na);
    for (int i = 0; i < na; ++i) {
      pb.a.row(i) = basis_row(space.ku, space.kv, corr.approximate[i].sigma);
      pb.y[i] = corr.approximate[i].tau[comp];
    }
    const LsqResult r = solve_constrained(pb);
    comps[comp] = Spline2(space.ku, space.kv, unflatten(r.x, space.ku.size(), space.kv.size()));
    rep.objective += r.objective;
  }
  Reparametrization k{comps[0], comps[1]};
  for (const auto& c : corr.interpolate)
    rep.max_interpolation_residual = std::max(rep.max_interpolation_residual, (k(c.sigma) - c.tau).norm());
  for (const auto& j : jac)
    rep.max_jacobian_residual = std::max(rep.max_jacobian_residual, (k.jacobian(j.sigma) - j.dkappa).norm());
  double ss = 0.0;
  for (const auto& c : corr.approximate) ss += (k(c.sigma) - c.tau).squaredNorm();
  rep.rms_approximation = corr.approximate.empty() ? 0.0 : std::sqrt(ss / corr.approximate.size());
  if (report) *report = rep;
  return k;
}

// ---------------------------------------------------------------------------
// Data generation

/// Foot point of the orthogonal projection of x onto b, Newton on the
/// normal equations from `guess`.  Returns false on divergence.
inline bool project_onto(const VectorSpline& b, const Vec3& x, Vec2& sigma, double* angle = nullptr) {
  Vec2 s = sigma;
  for (int it = 0; it < 50; ++it) {
    const Vec3Jet j = b.jet3(s);
    const Vec3 d = j.f - x;
    const Vec2 g(d.dot(j.fu), d.dot(j.fv));
    Mat2 h;
    h(0, 0) = j.fu.dot(j.fu) + d.dot(j.fuu);
    h(0, 1) = h(1, 0) = j.fu.dot(j.fv) + d.dot(j.fuv);
    h(1, 1) = j.fv.dot(j.fv) + d.dot(j.fvv);
    Vec2 step = h.partialPivLu().solve(g);
    if (!step.allFinite()) return false;
    // Damp to stay near the guess region.
    const double lim = 0.25 * std::max(b.domain().width(), b.domain().height());
    if (step.norm() > lim) step *= lim / step.norm();
    s -= step;
    if (step.norm() < 1e-15) break;
  }
  const Vec3Jet j = b.jet3(s);
  const Vec3 d = x - j.f;
  const Vec2 g(d.dot(j.fu) / j.fu.norm(), d.dot(j.fv) / j.fv.norm());
  const double ang = d.norm() < 1e-14 ? 0.0 : g.norm() / d.norm();
  if (angle) *angle = ang;
  if (!s.allFinite() || (ang > 1e-8 && g.cwiseAbs().maxCoeff() > 1e-12)) return false;
  sigma = s;
  return true;
}

/// For each tau, project r(tau) onto b.  Initial guesses come from a coarse
/// grid search over `search` (a parameter rectangle of b).
inline CorrespondenceSet harvest_correspondences(const VectorSpline& b, const VectorSpline& r,
                                                 const std::vector<Vec2>& taus, const Rect& search, int grid = 24) {
  CorrespondenceSet out;
  std::vector<Vec2> gs;
  std::vector<Vec3> gp;
  for (int i = 0; i <= grid; ++i)
    for (int j = 0; j <= grid; ++j) {
      const Vec2 s(search.u0 + search.width() * i / grid, search.v0 + search.height() * j / grid);
      gs.push_back(s);
      gp.push_back(b.point(s));
    }
  for (const Vec2& t : taus) {
    const Vec3 x = r.point(t);
    std::size_t best = 0;
    for (std::size_t k = 1; k < gp.size(); ++k)
      if ((gp[k] - x).squaredNorm() < (gp[best] - x).squaredNorm()) best = k;
    Vec2 s = gs[best];
    if (project_onto(b, x, s)) out.approximate.push_back({s, t});
    else out.dropped.push_back(t);
  }
  return out;
}

/// T = (I - n n^T) Db.
inline Mat32 corner_tangent_frame(const Mat32& db, const Vec3& n_corner) {
  const Vec3 n = n_corner.normalized();
  Mat32 t = (Mat3::Identity() - n * n.transpose()) * db;
  t -= n * (n.transpose() * t);  // second pass against round-off
  Eigen::JacobiSVD<Mat32> svd(t);
  if (svd.singularValues()[1] < 1e-10 * std::max(1.0, svd.singularValues()[0]))
    throw numerical_error("reparam_fit", "projected corner tangent frame is rank deficient");
  return t;
}

/// Least-squares preimage Dr^+ T.
inline Mat2 jacobian_preimage(const Mat32& dr, const Mat32& t) {
  Eigen::JacobiSVD<Mat32> svd(dr, Eigen::ComputeFullU | Eigen::ComputeFullV);
  if (svd.singularValues()[1] < 1e-12 * std::max(1.0, svd.singularValues()[0]))
    throw numerical_error("reparam_fit", "ribbon Jacobian at the corner is rank deficient");
  return svd.solve(t);
}

/// Targets for D kappa_{l-1}(sigma_l) (using Dr_{l-1}(1,0)) and
/// D kappa_l(sigma_l) (using Dr_l(0,0)).
inline std::pair<Mat2, Mat2> corner_jacobian_conditions(const Mat32& dr_prev_at_end, const Mat32& dr_next_at_start,
                                                        const Mat32& t) {
  return {jacobian_preimage(dr_prev_at_end, t), jacobian_preimage(dr_next_at_start, t)};
}

/// Level sets are straightened up to this multiple of the stripe width.
inline constexpr double kLevelsetReach = 1.25;

/// Planar direction of the p = u level set leaving the boundary point where
/// r(u,0) lands on b: the least-squares preimage Db^+ dr/dv.
inline Vec2 levelset_direction(const VectorSpline& b, const Vec2& anchor, const VectorSpline& r, double u) {
  const Mat32 db = jacobian(b.jet3(anchor));
  const Vec3 dv = r.jet3(Vec2(u, 0.0)).fv;
  Eigen::JacobiSVD<Mat32> svd(db, Eigen::ComputeFullU | Eigen::ComputeFullV);
  if (svd.singularValues()[1] < 1e-12 * std::max(1.0, svd.singularValues()[0]))
    throw numerical_error("reparam_fit", "base Jacobian is rank deficient at a level-set anchor");
  return svd.solve(dv);
}

/// Interpolation pairs forcing kappa(anchor + t delta) = (u, t) for t in
/// [0, t_max].  `count` points make the restriction exact when it exceeds
/// the degree of kappa along a line.
inline std::vector<Correspondence> straightening_constraints(const Vec2& anchor, const Vec2& delta, double u,
                                                             double t_max, int count) {
  std::vector<Correspondence> out;
  for (int i = 0; i < count; ++i) {
    const double t = t_max * i / (count - 1);
    out.push_back({anchor + t * delta, Vec2(u, t)});
  }
  return out;
}

}  // namespace abc
