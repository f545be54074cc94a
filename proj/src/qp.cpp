#include "psmpc/qp.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include <Eigen/SparseCholesky>

#include "psmpc/errors.hpp"

namespace psmpc {
namespace {

using Triplet = Eigen::Triplet<double>;
using Ldlt = Eigen::SimplicialLDLT<SparseMatrix, Eigen::Lower>;

constexpr double kMinScaling = 1e-4;
constexpr double kMaxScaling = 1e4;
constexpr double kRhoMin = 1e-6;
constexpr double kRhoMax = 1e6;
constexpr double kRhoEqualityFactor = 1e3;
constexpr double kPolishDelta = 1e-7;
constexpr int kPolishRefine = 5;

double InfNorm(const Eigen::VectorXd& v) {
  return v.size() == 0 ? 0.0 : v.cwiseAbs().maxCoeff();
}

Eigen::VectorXd ColumnInfNorms(const SparseMatrix& m) {
  Eigen::VectorXd out = Eigen::VectorXd::Zero(m.cols());
  for (int j = 0; j < m.outerSize(); ++j) {
    for (SparseMatrix::InnerIterator it(m, j); it; ++it) {
      out(j) = std::max(out(j), std::abs(it.value()));
    }
  }
  return out;
}

Eigen::VectorXd RowInfNorms(const SparseMatrix& m) {
  Eigen::VectorXd out = Eigen::VectorXd::Zero(m.rows());
  for (int j = 0; j < m.outerSize(); ++j) {
    for (SparseMatrix::InnerIterator it(m, j); it; ++it) {
      out(it.row()) = std::max(out(it.row()), std::abs(it.value()));
    }
  }
  return out;
}

double ClampScaling(double v) {
  if (v < kMinScaling) return 1.0;
  return std::min(v, kMaxScaling);
}

// Ruiz-equilibrated copy of the problem:
//   Ps = c D P D,  qs = c D q,  As = E A D,  ls = E l,  us = E u.
struct Scaled {
  SparseMatrix P;
  Eigen::VectorXd q;
  SparseMatrix A;
  Eigen::VectorXd l;
  Eigen::VectorXd u;
  Eigen::VectorXd D;
  Eigen::VectorXd E;
  double c = 1.0;
};

Scaled Equilibrate(const QpProblem& p, int iters) {
  Scaled s;
  const int n = p.num_vars();
  const int m = p.num_rows();
  s.P = p.Hc;
  s.q = p.g;
  s.A = p.C;
  s.D = Eigen::VectorXd::Ones(n);
  s.E = Eigen::VectorXd::Ones(m);
  for (int it = 0; it < iters; ++it) {
    Eigen::VectorXd dx = ColumnInfNorms(s.P).cwiseMax(ColumnInfNorms(s.A));
    Eigen::VectorXd dz = RowInfNorms(s.A);
    for (int j = 0; j < n; ++j) dx(j) = 1.0 / std::sqrt(ClampScaling(dx(j)));
    for (int i = 0; i < m; ++i) dz(i) = 1.0 / std::sqrt(ClampScaling(dz(i)));
    s.P = dx.asDiagonal() * s.P * dx.asDiagonal();
    s.A = dz.asDiagonal() * s.A * dx.asDiagonal();
    s.q = dx.cwiseProduct(s.q);
    s.D = s.D.cwiseProduct(dx);
    s.E = s.E.cwiseProduct(dz);

    const Eigen::VectorXd pcol = ColumnInfNorms(s.P);
    const double mean_p = n > 0 ? pcol.mean() : 0.0;
    const double gamma =
        1.0 / ClampScaling(std::max(mean_p, InfNorm(s.q)));
    s.P *= gamma;
    s.q *= gamma;
    s.c *= gamma;
  }
  s.l = s.E.cwiseProduct(p.lb);
  s.u = s.E.cwiseProduct(p.ub);
  return s;
}

// Lower triangle of [[P + sigma I, A'], [A, -diag(1/rho)]].
SparseMatrix AssembleKkt(const SparseMatrix& P, const SparseMatrix& A,
                         double sigma, const Eigen::VectorXd& rho) {
  const int n = static_cast<int>(P.rows());
  const int m = static_cast<int>(A.rows());
  std::vector<Triplet> t;
  t.reserve(P.nonZeros() + A.nonZeros() + n + m);
  for (int j = 0; j < P.outerSize(); ++j) {
    for (SparseMatrix::InnerIterator it(P, j); it; ++it) {
      if (it.row() > j) t.emplace_back(it.row(), j, it.value());
    }
  }
  for (int j = 0; j < n; ++j) t.emplace_back(j, j, P.coeff(j, j) + sigma);
  for (int j = 0; j < A.outerSize(); ++j) {
    for (SparseMatrix::InnerIterator it(A, j); it; ++it) {
      t.emplace_back(n + it.row(), j, it.value());
    }
  }
  for (int i = 0; i < m; ++i) t.emplace_back(n + i, n + i, -1.0 / rho(i));
  SparseMatrix K(n + m, n + m);
  K.setFromTriplets(t.begin(), t.end());
  return K;
}

struct Unscaled {
  Eigen::VectorXd x;
  Eigen::VectorXd y;
  Eigen::VectorXd z;
};

struct ResidualCheck {
  double prim = 0.0;
  double dual = 0.0;
  double eps_prim = 0.0;
  double eps_dual = 0.0;
  double prim_scale = 0.0;
  double dual_scale = 0.0;
  bool converged() const { return prim <= eps_prim && dual <= eps_dual; }
};

ResidualCheck CheckResiduals(const QpProblem& p, const QpSettings& st,
                             const Eigen::VectorXd& x,
                             const Eigen::VectorXd& z,
                             const Eigen::VectorXd& y) {
  const Eigen::VectorXd Ax = p.C * x;
  const Eigen::VectorXd Px = p.Hc * x;
  const Eigen::VectorXd Aty = p.C.transpose() * y;
  ResidualCheck r;
  r.prim = InfNorm(Ax - z);
  r.dual = InfNorm(Px + p.g + Aty);
  r.prim_scale = std::max(InfNorm(Ax), InfNorm(z));
  r.dual_scale = std::max({InfNorm(Px), InfNorm(Aty), InfNorm(p.g)});
  r.eps_prim = st.eps_abs + st.eps_rel * r.prim_scale;
  r.eps_dual = st.eps_abs + st.eps_rel * r.dual_scale;
  return r;
}

Eigen::VectorXd Clip(const Eigen::VectorXd& v, const Eigen::VectorXd& lo,
                     const Eigen::VectorXd& hi) {
  return v.cwiseMax(lo).cwiseMin(hi);
}

bool PrimalInfeasible(const QpProblem& p, const Eigen::VectorXd& dy_raw,
                      double eps) {
  Eigen::VectorXd dy = dy_raw;
  for (int i = 0; i < dy.size(); ++i) {
    const bool lo_inf = std::isinf(p.lb(i));
    const bool hi_inf = std::isinf(p.ub(i));
    if (lo_inf && hi_inf) {
      dy(i) = 0.0;
    } else if (hi_inf) {
      dy(i) = std::min(dy(i), 0.0);
    } else if (lo_inf) {
      dy(i) = std::max(dy(i), 0.0);
    }
  }
  const double norm = InfNorm(dy);
  if (norm < 1e-30) return false;
  if (InfNorm(p.C.transpose() * dy) > eps * norm) return false;
  double support = 0.0;
  for (int i = 0; i < dy.size(); ++i) {
    if (dy(i) > 0.0) support += p.ub(i) * dy(i);
    if (dy(i) < 0.0) support += p.lb(i) * dy(i);
  }
  return support < -eps * norm;
}

bool DualInfeasible(const QpProblem& p, const Eigen::VectorXd& dx,
                    double eps) {
  const double norm = InfNorm(dx);
  if (norm < 1e-30) return false;
  if (InfNorm(p.Hc * dx) > eps * norm) return false;
  if (p.g.dot(dx) > -eps * norm) return false;
  const Eigen::VectorXd Adx = p.C * dx;
  for (int i = 0; i < Adx.size(); ++i) {
    if (!std::isinf(p.ub(i)) && Adx(i) > eps * norm) return false;
    if (!std::isinf(p.lb(i)) && Adx(i) < -eps * norm) return false;
  }
  return true;
}

// Solves the equality-constrained QP on the guessed active set in the scaled
// space. Returns nullopt if the KKT system could not be factorized.
std::optional<std::pair<Eigen::VectorXd, Eigen::VectorXd>> PolishScaled(
    const Scaled& s, const Eigen::VectorXd& xs, const Eigen::VectorXd& zs,
    const Eigen::VectorXd& ys, double drop_below) {
  const int n = static_cast<int>(s.q.size());
  const int m = static_cast<int>(s.l.size());
  // active(i): -1 lower, +1 upper, 0 inactive.
  std::vector<int> active(m, 0);
  std::vector<int> rows;
  for (int i = 0; i < m; ++i) {
    if (s.l(i) == s.u(i)) {
      active[i] = 1;
    } else if (std::abs(ys(i)) < drop_below) {
      active[i] = 0;
    } else if (zs(i) - s.l(i) < -ys(i)) {
      active[i] = -1;
    } else if (s.u(i) - zs(i) < ys(i)) {
      active[i] = 1;
    }
    if (active[i] != 0) rows.push_back(i);
  }
  const int na = static_cast<int>(rows.size());
  std::vector<int> pos(m, -1);
  for (int k = 0; k < na; ++k) pos[rows[k]] = k;

  std::vector<Triplet> tk;
  std::vector<Triplet> t0;
  for (int j = 0; j < s.P.outerSize(); ++j) {
    for (SparseMatrix::InnerIterator it(s.P, j); it; ++it) {
      if (it.row() > j) {
        tk.emplace_back(it.row(), j, it.value());
      }
      t0.emplace_back(it.row(), j, it.value());
    }
  }
  for (int j = 0; j < n; ++j) tk.emplace_back(j, j, s.P.coeff(j, j) + kPolishDelta);
  for (int j = 0; j < s.A.outerSize(); ++j) {
    for (SparseMatrix::InnerIterator it(s.A, j); it; ++it) {
      const int k = pos[it.row()];
      if (k < 0) continue;
      tk.emplace_back(n + k, j, it.value());
      t0.emplace_back(n + k, j, it.value());
      t0.emplace_back(j, n + k, it.value());
    }
  }
  for (int k = 0; k < na; ++k) tk.emplace_back(n + k, n + k, -kPolishDelta);
  SparseMatrix K(n + na, n + na);
  K.setFromTriplets(tk.begin(), tk.end());
  SparseMatrix K0(n + na, n + na);
  K0.setFromTriplets(t0.begin(), t0.end());

  Ldlt ldlt;
  ldlt.compute(K);
  if (ldlt.info() != Eigen::Success) return std::nullopt;

  Eigen::VectorXd rhs(n + na);
  rhs.head(n) = -s.q;
  for (int k = 0; k < na; ++k) {
    const int i = rows[k];
    rhs(n + k) = active[i] < 0 ? s.l(i) : s.u(i);
  }
  // The first solve is anchored at the ADMM iterate so that directions left
  // free by a singular reduced KKT system stay near it.
  Eigen::VectorXd anchored = rhs;
  anchored.head(n) += kPolishDelta * xs;
  for (int k = 0; k < na; ++k) anchored(n + k) -= kPolishDelta * ys(rows[k]);
  Eigen::VectorXd sol = ldlt.solve(anchored);
  for (int r = 0; r < kPolishRefine; ++r) {
    const Eigen::VectorXd res = rhs - K0 * sol;
    sol += ldlt.solve(res);
  }
  if (!sol.allFinite()) return std::nullopt;

  Eigen::VectorXd y = Eigen::VectorXd::Zero(m);
  for (int k = 0; k < na; ++k) {
    const int i = rows[k];
    double v = sol(n + k);
    // A wrong-signed multiplier is dropped; if the guess was really wrong the
    // dual residual check afterwards rejects the polish.
    if (s.l(i) != s.u(i)) {
      if (active[i] < 0) v = std::min(v, 0.0);
      if (active[i] > 0) v = std::max(v, 0.0);
    }
    y(i) = v;
  }
  return std::make_pair(Eigen::VectorXd(sol.head(n)), y);
}

}  // namespace

std::string_view ToString(QpStatus s) {
  switch (s) {
    case QpStatus::kSolved:
      return "solved";
    case QpStatus::kPrimalInfeasible:
      return "primal_infeasible";
    case QpStatus::kDualInfeasible:
      return "dual_infeasible";
    case QpStatus::kMaxIter:
      return "max_iter";
  }
  return "unknown";
}

QpProblem QpProblem::FromDense(const Eigen::MatrixXd& Hc,
                               const Eigen::VectorXd& g,
                               const Eigen::MatrixXd& C,
                               const Eigen::VectorXd& lb,
                               const Eigen::VectorXd& ub) {
  QpProblem p;
  p.Hc = Hc.sparseView();
  p.g = g;
  p.C = C.sparseView();
  p.lb = lb;
  p.ub = ub;
  return p;
}

void QpProblem::Validate() const {
  const int n = num_vars();
  const int m = num_rows();
  if (Hc.rows() != n || Hc.cols() != n) {
    throw InvalidModel("QP cost matrix size does not match the cost vector");
  }
  if (C.cols() != n || C.rows() != m || ub.size() != m) {
    throw InvalidModel("QP constraint sizes are inconsistent");
  }
  SparseMatrix diff = SparseMatrix(Hc.transpose()) - Hc;
  for (int j = 0; j < diff.outerSize(); ++j) {
    for (SparseMatrix::InnerIterator it(diff, j); it; ++it) {
      if (std::abs(it.value()) > 1e-12) {
        throw InvalidModel("QP cost matrix is not symmetric");
      }
    }
  }
  for (int i = 0; i < m; ++i) {
    if (std::isnan(lb(i)) || std::isnan(ub(i)) || lb(i) > ub(i)) {
      throw InvalidModel("QP bounds violate lb <= ub");
    }
  }
  if (!g.allFinite()) throw InvalidModel("QP cost vector is not finite");
}

KktResiduals ComputeKktResiduals(const QpProblem& p, const Eigen::VectorXd& z,
                                 const Eigen::VectorXd& y) {
  KktResiduals r;
  const Eigen::VectorXd Cz = p.C * z;
  r.primal = InfNorm(Clip(Cz, p.lb, p.ub) - Cz);
  r.dual = InfNorm(p.Hc * z + p.g + p.C.transpose() * y);
  for (int i = 0; i < Cz.size(); ++i) {
    double gap = 0.0;
    if (y(i) > 0.0) {
      gap = std::isinf(p.ub(i)) ? kInf : std::abs(p.ub(i) - Cz(i));
    } else if (y(i) < 0.0) {
      gap = std::isinf(p.lb(i)) ? kInf : std::abs(Cz(i) - p.lb(i));
    }
    if (gap > 0.0) r.comp_slack = std::max(r.comp_slack, std::abs(y(i)) * gap);
  }
  return r;
}

QpSolution QpSolver::Solve(const QpProblem& p, const QpSolution* warm) const {
  p.Validate();
  const QpSettings& st = settings_;
  const int n = p.num_vars();
  const int m = p.num_rows();

  const Scaled s = Equilibrate(p, st.scaling_iters);

  Eigen::VectorXd rho(m);
  double rho_base = std::clamp(st.rho, kRhoMin, kRhoMax);
  auto fill_rho = [&](double base) {
    for (int i = 0; i < m; ++i) {
      if (std::isinf(p.lb(i)) && std::isinf(p.ub(i))) {
        rho(i) = kRhoMin;
      } else if (p.lb(i) == p.ub(i)) {
        rho(i) = std::min(kRhoEqualityFactor * base, kRhoMax);
      } else {
        rho(i) = base;
      }
    }
  };
  fill_rho(rho_base);

  SparseMatrix K = AssembleKkt(s.P, s.A, st.sigma, rho);
  Ldlt ldlt;
  ldlt.analyzePattern(K);
  ldlt.factorize(K);
  if (ldlt.info() != Eigen::Success) {
    throw InvalidModel("QP KKT factorization failed");
  }

  Eigen::VectorXd x = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd y = Eigen::VectorXd::Zero(m);
  Eigen::VectorXd z = Eigen::VectorXd::Zero(m);
  if (warm != nullptr && warm->z.size() == n && warm->y.size() == m &&
      warm->z.allFinite() && warm->y.allFinite()) {
    x = warm->z.cwiseQuotient(s.D);
    y = s.c * warm->y.cwiseQuotient(s.E);
    z = Clip(s.A * x, s.l, s.u);
  }

  auto unscale = [&](const Eigen::VectorXd& xs, const Eigen::VectorXd& zs,
                     const Eigen::VectorXd& ys) {
    Unscaled u;
    u.x = s.D.cwiseProduct(xs);
    u.z = zs.cwiseQuotient(s.E);
    u.y = s.E.cwiseProduct(ys) / s.c;
    return u;
  };

  QpSolution out;
  out.status = QpStatus::kMaxIter;

  auto finish = [&](const Eigen::VectorXd& xu, const Eigen::VectorXd& y_raw) {
    // Multipliers on one-sided rows may only push against the finite bound.
    Eigen::VectorXd yu = y_raw;
    for (int i = 0; i < m; ++i) {
      if (std::isinf(p.ub(i))) yu(i) = std::min(yu(i), 0.0);
      if (std::isinf(p.lb(i))) yu(i) = std::max(yu(i), 0.0);
    }
    out.z = xu;
    out.y = yu;
    out.obj = 0.5 * xu.dot(p.Hc * xu) + p.g.dot(xu);
    const KktResiduals r = ComputeKktResiduals(p, xu, yu);
    out.primal_res = r.primal;
    out.dual_res = r.dual;
  };

  auto try_polish = [&](const Eigen::VectorXd& xs, const Eigen::VectorXd& zs,
                        const Eigen::VectorXd& ys) -> bool {
    // Degenerate vertices give more near-active rows than the solution
    // needs; retry with rows carrying small multipliers released.
    const double y_max = InfNorm(ys);
    for (double frac : {0.0, 1e-3, 1e-2, 1e-1}) {
      auto pol = PolishScaled(s, xs, zs, ys, frac * y_max);
      if (!pol) continue;
      const Eigen::VectorXd xu = s.D.cwiseProduct(pol->first);
      const Eigen::VectorXd yu = s.E.cwiseProduct(pol->second) / s.c;
      const Eigen::VectorXd zu = Clip(p.C * xu, p.lb, p.ub);
      const ResidualCheck rc = CheckResiduals(p, st, xu, zu, yu);
      if (!rc.converged()) continue;
      finish(xu, yu);
      out.status = QpStatus::kSolved;
      out.polished = true;
      return true;
    }
    return false;
  };

  Eigen::VectorXd rhs(n + m);
  Eigen::VectorXd x_prev = x;
  Eigen::VectorXd y_prev = y;
  double best_score = kInf;
  Eigen::VectorXd best_x = x;
  Eigen::VectorXd best_y = y;
  double next_polish_level = 1e-3;

  int iter = 0;
  for (iter = 1; iter <= st.max_iter; ++iter) {
    x_prev = x;
    y_prev = y;
    rhs.head(n) = st.sigma * x - s.q;
    rhs.tail(m) = z - y.cwiseQuotient(rho);
    const Eigen::VectorXd sol = ldlt.solve(rhs);
    const Eigen::VectorXd x_tilde = sol.head(n);
    const Eigen::VectorXd z_tilde =
        z + (sol.tail(m) - y).cwiseQuotient(rho);
    x = st.alpha * x_tilde + (1.0 - st.alpha) * x;
    const Eigen::VectorXd z_relaxed =
        st.alpha * z_tilde + (1.0 - st.alpha) * z;
    const Eigen::VectorXd z_new =
        Clip(z_relaxed + y.cwiseQuotient(rho), s.l, s.u);
    y += rho.cwiseProduct(z_relaxed - z_new);
    z = z_new;

    if (iter % st.check_interval != 0 && iter != st.max_iter) continue;

    const Unscaled u = unscale(x, z, y);
    const ResidualCheck rc = CheckResiduals(p, st, u.x, u.z, u.y);
    const double score = std::max(rc.prim / std::max(rc.eps_prim, 1e-300),
                                  rc.dual / std::max(rc.eps_dual, 1e-300));
    if (score < best_score) {
      best_score = score;
      best_x = u.x;
      best_y = u.y;
    }

    if (rc.converged()) {
      out.iters = iter;
      if (st.polish && try_polish(x, z, y)) return out;
      finish(u.x, u.y);
      out.status = QpStatus::kSolved;
      return out;
    }

    // Attempt an early polish each time the residuals drop another decade.
    const double rel_p = rc.prim / (1.0 + rc.prim_scale);
    const double rel_d = rc.dual / (1.0 + rc.dual_scale);
    if (st.polish && std::max(rel_p, rel_d) <= next_polish_level) {
      while (std::max(rel_p, rel_d) <= next_polish_level) {
        next_polish_level *= 0.1;
      }
      if (try_polish(x, z, y)) {
        out.iters = iter;
        return out;
      }
    }

    const Eigen::VectorXd dy = s.E.cwiseProduct(y - y_prev);
    if (m > 0 && PrimalInfeasible(p, dy, st.eps_prim_inf)) {
      out.iters = iter;
      finish(u.x, u.y);
      out.status = QpStatus::kPrimalInfeasible;
      out.certificate = dy / InfNorm(dy);
      return out;
    }
    const Eigen::VectorXd dx = s.D.cwiseProduct(x - x_prev);
    if (DualInfeasible(p, dx, st.eps_dual_inf)) {
      out.iters = iter;
      finish(u.x, u.y);
      out.status = QpStatus::kDualInfeasible;
      out.certificate = dx / InfNorm(dx);
      return out;
    }

    if (st.adaptive_rho && m > 0) {
      const Eigen::VectorXd Ax = s.A * x;
      const Eigen::VectorXd Px = s.P * x;
      const Eigen::VectorXd Aty = s.A.transpose() * y;
      const double rp = InfNorm(Ax - z) /
                        (std::max(InfNorm(Ax), InfNorm(z)) + 1e-30);
      const double rd =
          InfNorm(Px + s.q + Aty) /
          (std::max({InfNorm(Px), InfNorm(Aty), InfNorm(s.q)}) + 1e-30);
      double rho_new = rho_base * std::sqrt(rp / (rd + 1e-30));
      rho_new = std::clamp(rho_new, kRhoMin, kRhoMax);
      if (rho_new > 5.0 * rho_base || rho_new < 0.2 * rho_base) {
        rho_base = rho_new;
        fill_rho(rho_base);
        for (int i = 0; i < m; ++i) K.coeffRef(n + i, n + i) = -1.0 / rho(i);
        ldlt.factorize(K);
        if (ldlt.info() != Eigen::Success) {
          throw InvalidModel("QP KKT refactorization failed");
        }
      }
    }
  }

  out.iters = st.max_iter;
  if (st.polish) {
    const Eigen::VectorXd xs = best_x.cwiseQuotient(s.D);
    const Eigen::VectorXd ys = s.c * best_y.cwiseQuotient(s.E);
    const Eigen::VectorXd zs = Clip(s.A * xs, s.l, s.u);
    if (try_polish(xs, zs, ys)) return out;
  }
  finish(best_x, best_y);
  out.status = QpStatus::kMaxIter;
  return out;
}

}  // namespace psmpc
