#pragma once

// Test-only reference computations. Nothing here shares code with the
// library paths it checks.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <random>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

namespace psmpc::testing {

/// Random convex QP with a planted optimum: z*, y* are chosen first and g, lb,
/// ub are derived so that (z*, y*) satisfies the KKT conditions exactly.
struct PlantedQp {
  Eigen::MatrixXd H;
  Eigen::VectorXd g;
  Eigen::MatrixXd C;
  Eigen::VectorXd lb;
  Eigen::VectorXd ub;
  Eigen::VectorXd z_star;
  double obj_star = 0.0;
};

inline PlantedQp MakePlantedQp(std::mt19937& rng, int p, int q, int rank) {
  std::normal_distribution<double> nd;
  std::uniform_real_distribution<double> ud(0.0, 1.0);
  PlantedQp out;
  const Eigen::MatrixXd M =
      Eigen::MatrixXd::NullaryExpr(p, rank, [&] { return nd(rng); });
  out.H = M * M.transpose();
  out.C = Eigen::MatrixXd::NullaryExpr(q, p, [&] { return nd(rng); });
  out.z_star = Eigen::VectorXd::NullaryExpr(p, [&] { return nd(rng); });
  const Eigen::VectorXd Cz = out.C * out.z_star;
  Eigen::VectorXd y = Eigen::VectorXd::Zero(q);
  out.lb.resize(q);
  out.ub.resize(q);
  const double inf = std::numeric_limits<double>::infinity();
  for (int i = 0; i < q; ++i) {
    const double kind = ud(rng);
    if (kind < 0.15) {  // equality
      out.lb(i) = out.ub(i) = Cz(i);
      y(i) = nd(rng);
    } else if (kind < 0.4) {  // upper active
      out.ub(i) = Cz(i);
      out.lb(i) = ud(rng) < 0.5 ? -inf : Cz(i) - 1.0 - ud(rng);
      y(i) = 0.1 + ud(rng);
    } else if (kind < 0.65) {  // lower active
      out.lb(i) = Cz(i);
      out.ub(i) = ud(rng) < 0.5 ? inf : Cz(i) + 1.0 + ud(rng);
      y(i) = -0.1 - ud(rng);
    } else {  // inactive
      out.lb(i) = Cz(i) - 0.5 - ud(rng);
      out.ub(i) = ud(rng) < 0.3 ? inf : Cz(i) + 0.5 + ud(rng);
    }
  }
  out.g = -out.H * out.z_star - out.C.transpose() * y;
  out.obj_star = 0.5 * out.z_star.dot(out.H * out.z_star) + out.g.dot(out.z_star);
  return out;
}

/// Optimal value of min 1/2 z'Hz + g'z s.t. lb <= Cz <= ub for H positive
/// definite, via accelerated proximal gradient on the dual
///   max_y  -1/2 (g + C'y)' H^-1 (g + C'y) - sum_i (ub_i y_i^+ - lb_i y_i^-).
inline double DualProximalGradientValue(const Eigen::MatrixXd& H,
                                        const Eigen::VectorXd& g,
                                        const Eigen::MatrixXd& C,
                                        const Eigen::VectorXd& lb,
                                        const Eigen::VectorXd& ub,
                                        int max_iter = 200000) {
  const Eigen::MatrixXd Hinv = H.inverse();
  const Eigen::MatrixXd G = C * Hinv * C.transpose();
  const double L = G.eigenvalues().cwiseAbs().maxCoeff();
  const double step = 1.0 / L;
  const int q = static_cast<int>(C.rows());
  auto smooth = [&](const Eigen::VectorXd& y) {
    const Eigen::VectorXd v = g + C.transpose() * y;
    return 0.5 * v.dot(Hinv * v);
  };
  auto nonsmooth = [&](const Eigen::VectorXd& y) {
    double s = 0.0;
    for (int i = 0; i < q; ++i) {
      if (y(i) > 0) s += ub(i) * y(i);
      if (y(i) < 0) s += lb(i) * y(i);
    }
    return s;
  };
  auto prox = [&](const Eigen::VectorXd& v) {
    Eigen::VectorXd y(q);
    for (int i = 0; i < q; ++i) {
      if (v(i) > step * ub(i)) {
        y(i) = v(i) - step * ub(i);
      } else if (v(i) < step * lb(i)) {
        y(i) = v(i) - step * lb(i);
      } else {
        y(i) = 0.0;
      }
    }
    return y;
  };
  Eigen::VectorXd y = Eigen::VectorXd::Zero(q);
  Eigen::VectorXd w = y;
  double t = 1.0;
  double prev = std::numeric_limits<double>::infinity();
  for (int it = 0; it < max_iter; ++it) {
    const Eigen::VectorXd grad = C * (Hinv * (g + C.transpose() * w));
    const Eigen::VectorXd y_next = prox(w - step * grad);
    const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
    w = y_next + ((t - 1.0) / t_next) * (y_next - y);
    y = y_next;
    t = t_next;
    if (it % 500 == 0) {
      const double val = smooth(y) + nonsmooth(y);
      if (std::abs(val - prev) <= 1e-13 * (1.0 + std::abs(val))) break;
      prev = val;
    }
  }
  return -(smooth(y) + nonsmooth(y));
}

/// max d'x over {x : H x <= h} by enumerating every n-subset of rows as a
/// candidate vertex. Only for tiny n.
inline std::optional<double> VertexEnumerationSupport(const Eigen::MatrixXd& H,
                                                      const Eigen::VectorXd& h,
                                                      const Eigen::VectorXd& d) {
  const int n = static_cast<int>(H.cols());
  const int q = static_cast<int>(H.rows());
  std::vector<int> idx(n);
  std::optional<double> best;
  std::function<void(int, int)> rec = [&](int start, int depth) {
    if (depth == n) {
      Eigen::MatrixXd A(n, n);
      Eigen::VectorXd b(n);
      for (int k = 0; k < n; ++k) {
        A.row(k) = H.row(idx[k]);
        b(k) = h(idx[k]);
      }
      Eigen::FullPivLU<Eigen::MatrixXd> lu(A);
      if (lu.rank() < n) return;
      const Eigen::VectorXd v = lu.solve(b);
      if (((H * v - h).array() > 1e-9).any()) return;
      const double val = d.dot(v);
      if (!best || val > *best) best = val;
      return;
    }
    for (int r = start; r < q; ++r) {
      idx[depth] = r;
      rec(r + 1, depth + 1);
    }
  };
  rec(0, 0);
  return best;
}

/// Stabilizing DARE solution from the stable eigenspace of the symplectic
/// matrix. Requires A invertible.
inline Eigen::MatrixXd SymplecticDare(const Eigen::MatrixXd& A,
                                      const Eigen::MatrixXd& B,
                                      const Eigen::MatrixXd& Q,
                                      const Eigen::MatrixXd& R) {
  const int n = static_cast<int>(A.rows());
  const Eigen::MatrixXd Ait = A.inverse().transpose();
  const Eigen::MatrixXd G = B * R.inverse() * B.transpose();
  Eigen::MatrixXd Z(2 * n, 2 * n);
  Z << A + G * Ait * Q, -G * Ait, -Ait * Q, Ait;
  Eigen::ComplexEigenSolver<Eigen::MatrixXd> es(Z);
  Eigen::MatrixXcd U(2 * n, n);
  int k = 0;
  for (int i = 0; i < 2 * n; ++i) {
    if (std::abs(es.eigenvalues()(i)) < 1.0 && k < n) U.col(k++) = es.eigenvectors().col(i);
  }
  const Eigen::MatrixXcd P = U.bottomRows(n) * U.topRows(n).inverse();
  return P.real();
}

/// Hit-and-run samples from {x : Hx <= h}, started at an interior point x0.
inline std::vector<Eigen::VectorXd> HitAndRun(const Eigen::MatrixXd& H,
                                              const Eigen::VectorXd& h,
                                              Eigen::VectorXd x0, int count,
                                              std::mt19937& rng, int thin = 5) {
  std::normal_distribution<double> nd;
  std::uniform_real_distribution<double> ud(0.0, 1.0);
  std::vector<Eigen::VectorXd> out;
  const int n = static_cast<int>(x0.size());
  Eigen::VectorXd x = std::move(x0);
  while (static_cast<int>(out.size()) < count) {
    for (int s = 0; s < thin; ++s) {
      Eigen::VectorXd d = Eigen::VectorXd::NullaryExpr(n, [&] { return nd(rng); });
      d.normalize();
      const Eigen::VectorXd Hd = H * d;
      const Eigen::VectorXd slack = h - H * x;
      double lo = -std::numeric_limits<double>::infinity();
      double hi = std::numeric_limits<double>::infinity();
      for (int r = 0; r < H.rows(); ++r) {
        if (Hd(r) > 1e-14) hi = std::min(hi, slack(r) / Hd(r));
        if (Hd(r) < -1e-14) lo = std::max(lo, slack(r) / Hd(r));
      }
      x += (lo + (hi - lo) * ud(rng)) * d;
    }
    out.push_back(x);
  }
  return out;
}

}  // namespace psmpc::testing
