#include "psmpc/terminal_ingredients.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>

#include <json.hpp>

#include "psmpc/errors.hpp"
#include "psmpc/qp.hpp"

namespace psmpc {
namespace {

constexpr int kDareMaxIter = 100000;
constexpr double kDareTol = 1e-12;
constexpr int kBetaBisectionSteps = 20;
// Rows are added to the invariant set well below the certification tolerance
// so certified margins keep slack.
constexpr double kMoasRowTol = 1e-9;

double SupNorm(const Eigen::MatrixXd& M) {
  return M.size() == 0 ? 0.0 : M.cwiseAbs().maxCoeff();
}

Eigen::MatrixXd RiccatiStep(const Eigen::MatrixXd& P, const Eigen::MatrixXd& A,
                            const Eigen::MatrixXd& B, const Eigen::MatrixXd& Q,
                            const Eigen::MatrixXd& R) {
  const Eigen::MatrixXd BtP = B.transpose() * P;
  const Eigen::MatrixXd S = R + BtP * B;
  const Eigen::MatrixXd gain = S.ldlt().solve(BtP * A);
  Eigen::MatrixXd next = A.transpose() * P * A - (BtP * A).transpose() * gain + Q;
  return 0.5 * (next + next.transpose());
}

void CheckWeights(const Eigen::MatrixXd& Ad, const Eigen::MatrixXd& Bd,
                  const Eigen::MatrixXd& Q, const Eigen::MatrixXd& R) {
  const int n = static_cast<int>(Ad.rows());
  const int m = static_cast<int>(Bd.cols());
  if (Ad.cols() != n || Bd.rows() != n || Q.rows() != n || Q.cols() != n ||
      R.rows() != m || R.cols() != m) {
    throw InvalidModel("DARE data has inconsistent dimensions");
  }
  if (SupNorm(Q - Q.transpose()) > 1e-12 || SupNorm(R - R.transpose()) > 1e-12) {
    throw InvalidModel("Q and R must be symmetric");
  }
  if (n > 0 && Q.selfadjointView<Eigen::Lower>().eigenvalues().minCoeff() < -1e-12) {
    throw InvalidModel("Q must be positive semidefinite");
  }
  if (m > 0 && R.selfadjointView<Eigen::Lower>().eigenvalues().minCoeff() <= 0.0) {
    throw InvalidModel("R must be positive definite");
  }
}

// Rows of the output map y = (x, -Kx) against X x U.
void OutputConstraints(const Polytope& X, const Polytope& U,
                       const std::vector<Eigen::MatrixXd>& gains,
                       Eigen::MatrixXd& G, Eigen::VectorXd& g) {
  const int n = X.dim();
  const int rows = X.num_rows() + static_cast<int>(gains.size()) * U.num_rows();
  G.resize(rows, n);
  g.resize(rows);
  G.topRows(X.num_rows()) = X.H();
  g.head(X.num_rows()) = X.h();
  int at = X.num_rows();
  for (const Eigen::MatrixXd& K : gains) {
    G.middleRows(at, U.num_rows()) = -U.H() * K;
    g.segment(at, U.num_rows()) = U.h();
    at += U.num_rows();
  }
}

void RequireOriginInterior(const Polytope& P, const char* what) {
  if ((P.h().array() <= 0.0).any()) {
    throw InvalidSet(std::string(what) + " must contain the origin in its interior");
  }
}

}  // namespace

Eigen::MatrixXd SolveDare(const Eigen::MatrixXd& Ad, const Eigen::MatrixXd& Bd,
                          const Eigen::MatrixXd& Q, const Eigen::MatrixXd& R) {
  CheckWeights(Ad, Bd, Q, R);
  Eigen::MatrixXd P = Q;
  for (int it = 0; it < kDareMaxIter; ++it) {
    const Eigen::MatrixXd next = RiccatiStep(P, Ad, Bd, Q, R);
    if (!next.allFinite()) {
      throw NotStabilizable("Riccati recursion diverged");
    }
    const double step = SupNorm(next - P);
    P = next;
    if (step <= kDareTol * std::max(1.0, SupNorm(P))) {
      const Eigen::MatrixXd Acl = Ad - Bd * LqrGain(P, Ad, Bd, R);
      if (SpectralRadius(Acl) >= 1.0) {
        throw NotStabilizable("Riccati fixed point is not stabilizing");
      }
      return P;
    }
  }
  throw NotStabilizable("Riccati recursion did not converge in " +
                        std::to_string(kDareMaxIter) + " iterations");
}

double DareResidual(const Eigen::MatrixXd& P, const Eigen::MatrixXd& Ad,
                    const Eigen::MatrixXd& Bd, const Eigen::MatrixXd& Q,
                    const Eigen::MatrixXd& R) {
  return SupNorm(P - RiccatiStep(P, Ad, Bd, Q, R));
}

Eigen::MatrixXd LqrGain(const Eigen::MatrixXd& P, const Eigen::MatrixXd& Ad,
                        const Eigen::MatrixXd& Bd, const Eigen::MatrixXd& R) {
  const Eigen::MatrixXd BtP = Bd.transpose() * P;
  const Eigen::MatrixXd S = R + BtP * Bd;
  Eigen::LDLT<Eigen::MatrixXd> ldlt(S);
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive() ||
      (S.size() > 0 && ldlt.vectorD().cwiseAbs().minCoeff() <= 1e-14 * SupNorm(S))) {
    throw NotStabilizable("R + B'PB is singular");
  }
  return ldlt.solve(BtP * Ad);
}

MoasResult ComputeMoas(const Eigen::MatrixXd& Acl, const Polytope& X,
                       const Polytope& U, const Eigen::MatrixXd& K, int max_t) {
  if (Acl.rows() != X.dim() || Acl.cols() != X.dim() || K.cols() != X.dim() ||
      K.rows() != U.dim()) {
    throw InvalidModel("MOAS data has inconsistent dimensions");
  }
  if (SpectralRadius(Acl) >= 1.0) {
    throw InvalidModel("MOAS needs a Schur-stable closed loop");
  }
  RequireOriginInterior(X, "state set");
  RequireOriginInterior(U, "input set");

  Eigen::MatrixXd G;
  Eigen::VectorXd g;
  OutputConstraints(X, U, {K}, G, g);
  Polytope O(G, g);

  // Rows of G Acl^(t+1) that O_t already implies are redundant and are not
  // appended; the set is the same, the LPs stay small.
  Eigen::MatrixXd Gpow = G * Acl;
  for (int t = 0; t < max_t; ++t) {
    std::vector<int> violating;
    for (int r = 0; r < Gpow.rows(); ++r) {
      const double norm = Gpow.row(r).norm();
      if (norm <= 1e-14 * std::max(1.0, G.row(r).norm())) continue;
      if (O.Support(Gpow.row(r).transpose()) > g(r) + kMoasRowTol) {
        violating.push_back(r);
      }
    }
    if (violating.empty()) {
      return MoasResult{O.RemoveRedundancy(), t};
    }
    Eigen::MatrixXd rows(static_cast<int>(violating.size()), X.dim());
    Eigen::VectorXd rhs(rows.rows());
    for (int k = 0; k < rows.rows(); ++k) {
      rows.row(k) = Gpow.row(violating[k]);
      rhs(k) = g(violating[k]);
    }
    O = O.WithRows(rows, rhs);
    Gpow = Gpow * Acl;
  }
  throw NotFinitelyDetermined("output admissible set not determined after " +
                              std::to_string(max_t) + " steps (" +
                              std::to_string(O.num_rows()) + " rows, rho(Acl)=" +
                              std::to_string(SpectralRadius(Acl)) + ")");
}

TerminalKit SynthesizeKit(const DiscreteModel& model, const Eigen::MatrixXd& Q,
                          const Eigen::MatrixXd& R, const Polytope& X,
                          const Polytope& U, int max_t) {
  TerminalKit kit;
  kit.P = SolveDare(model.Ad, model.Bd, Q, R);
  kit.K = LqrGain(kit.P, model.Ad, model.Bd, R);
  kit.Acl = model.Ad - model.Bd * kit.K;
  kit.dare_residual = DareResidual(kit.P, model.Ad, model.Bd, Q, R);
  MoasResult moas = ComputeMoas(kit.Acl, X, U, kit.K, max_t);
  kit.Xn = std::move(moas.Xn);
  kit.t_star = moas.t_star;
  return kit;
}

bool CertReport::passed() const {
  return std::all_of(pairs.begin(), pairs.end(),
                     [](const PairCertificate& c) { return c.passed(); });
}

std::string CertReport::ToText() const {
  auto name = [&](int i) {
    return i < static_cast<int>(names.size()) ? names[i] : std::to_string(i);
  };
  std::ostringstream os;
  os << "terminal-set cross-invariance: " << (passed() ? "PASS" : "FAIL") << "\n";
  os << "  beta = " << beta << (beta < 1.0 ? " (terminal sets shrunk)" : "")
     << "\n";
  if (common_set) os << "  using one common terminal set for all controllers\n";
  os << std::scientific << std::setprecision(3);
  for (const PairCertificate& c : pairs) {
    os << "  K[" << name(c.i) << "] on Xn[" << name(c.l) << "]: invariance "
       << (c.invariant() ? "ok" : "FAIL") << " (margin " << c.invariance_margin
       << "), inputs " << (c.input_admissible() ? "ok" : "FAIL") << " (margin "
       << c.input_margin << ")\n";
  }
  return os.str();
}

std::string CertReport::ToJson() const {
  nlohmann::json j;
  j["passed"] = passed();
  j["beta"] = beta;
  j["common_set"] = common_set;
  j["tolerance"] = kCertTol;
  j["names"] = names;
  j["pairs"] = nlohmann::json::array();
  for (const PairCertificate& c : pairs) {
    j["pairs"].push_back({{"i", c.i},
                          {"l", c.l},
                          {"invariance_margin", c.invariance_margin},
                          {"input_margin", c.input_margin},
                          {"passed", c.passed()}});
  }
  return j.dump(2);
}

CertReport CheckCrossInvariance(const std::vector<TerminalKit>& kits,
                            const std::vector<Polytope>& U_sets) {
  if (kits.size() != U_sets.size()) {
    throw InvalidModel("one input set per terminal kit is required");
  }
  CertReport report;
  for (std::size_t i = 0; i < kits.size(); ++i) {
    for (std::size_t l = 0; l < kits.size(); ++l) {
      const Polytope& Xn = kits[l].Xn;
      if (kits[i].Acl.rows() != Xn.dim()) {
        throw InvalidModel("terminal kits differ in state dimension");
      }
      PairCertificate c;
      c.i = static_cast<int>(i);
      c.l = static_cast<int>(l);
      c.invariance_margin = -kInf;
      c.input_margin = -kInf;
      for (int r = 0; r < Xn.num_rows(); ++r) {
        const Eigen::VectorXd d = kits[i].Acl.transpose() * Xn.H().row(r).transpose();
        c.invariance_margin =
            std::max(c.invariance_margin, Xn.Support(d) - Xn.h()(r));
      }
      const Polytope& U = U_sets[l];
      for (int r = 0; r < U.num_rows(); ++r) {
        const Eigen::VectorXd d = -kits[i].K.transpose() * U.H().row(r).transpose();
        c.input_margin = std::max(c.input_margin, Xn.Support(d) - U.h()(r));
      }
      report.pairs.push_back(c);
    }
  }
  return report;
}

Polytope CommonInvariantSet(const std::vector<TerminalKit>& kits,
                            const std::vector<Polytope>& X_sets,
                            const std::vector<Polytope>& U_sets, int max_t) {
  if (kits.empty() || X_sets.size() != kits.size() ||
      U_sets.size() != kits.size()) {
    throw InvalidModel("one state and input set per terminal kit is required");
  }
  std::vector<Eigen::MatrixXd> gains;
  for (const TerminalKit& k : kits) gains.push_back(k.K);
  Polytope O;
  for (std::size_t l = 0; l < kits.size(); ++l) {
    Eigen::MatrixXd G;
    Eigen::VectorXd g;
    OutputConstraints(X_sets[l], U_sets[l], gains, G, g);
    O = l == 0 ? Polytope(G, g) : O.WithRows(G, g);
  }
  O = O.RemoveRedundancy();

  // Only rows added in the last round can produce new preimage rows: older
  // ones were already certified against a superset.
  Eigen::MatrixXd frontier = O.H();
  Eigen::VectorXd frontier_h = O.h();
  for (int t = 0; t < max_t; ++t) {
    std::vector<Eigen::RowVectorXd> rows;
    std::vector<double> rhs;
    for (const TerminalKit& k : kits) {
      for (int r = 0; r < frontier.rows(); ++r) {
        const Eigen::RowVectorXd row = frontier.row(r) * k.Acl;
        if (row.norm() <= 1e-14) continue;
        if (O.Support(row.transpose()) > frontier_h(r) + kMoasRowTol) {
          rows.push_back(row);
          rhs.push_back(frontier_h(r));
        }
      }
    }
    if (rows.empty()) return O;
    Eigen::MatrixXd G(static_cast<int>(rows.size()), O.dim());
    Eigen::VectorXd g(G.rows());
    for (int k = 0; k < G.rows(); ++k) {
      G.row(k) = rows[k];
      g(k) = rhs[k];
    }
    const Polytope before = O;
    O = O.WithRows(G, g).RemoveRedundancy();
    // New frontier: rows of the reduced set that were not in the old one.
    std::vector<int> fresh;
    for (int r = 0; r < O.num_rows(); ++r) {
      bool old = false;
      for (int s = 0; s < before.num_rows() && !old; ++s) {
        old = (O.H().row(r) - before.H().row(s)).cwiseAbs().maxCoeff() <= 1e-12 &&
              std::abs(O.h()(r) - before.h()(s)) <= 1e-12;
      }
      if (!old) fresh.push_back(r);
    }
    frontier.resize(static_cast<int>(fresh.size()), O.dim());
    frontier_h.resize(frontier.rows());
    for (int k = 0; k < frontier.rows(); ++k) {
      frontier.row(k) = O.H().row(fresh[k]);
      frontier_h(k) = O.h()(fresh[k]);
    }
  }
  throw NotFinitelyDetermined("common invariant set not determined after " +
                              std::to_string(max_t) + " rounds");
}

CertReport EnforceCrossInvariance(std::vector<TerminalKit>& kits,
                              const std::vector<Polytope>& X_sets,
                              const std::vector<Polytope>& U_sets, int max_t) {
  CertReport report = CheckCrossInvariance(kits, U_sets);
  if (report.passed()) return report;

  const bool invariance_failed =
      std::any_of(report.pairs.begin(), report.pairs.end(),
                  [](const PairCertificate& c) { return !c.invariant(); });
  bool common = false;
  if (invariance_failed) {
    const Polytope shared = CommonInvariantSet(kits, X_sets, U_sets, max_t);
    for (TerminalKit& k : kits) k.Xn = shared;
    common = true;
    report = CheckCrossInvariance(kits, U_sets);
    report.common_set = true;
    if (report.passed()) return report;
  }

  std::vector<Polytope> original;
  for (const TerminalKit& k : kits) original.push_back(k.Xn);
  auto apply = [&](double beta) {
    for (std::size_t i = 0; i < kits.size(); ++i) {
      kits[i].Xn = original[i].Scaled(beta);
    }
  };
  double lo = 0.0;
  double hi = 1.0;
  for (int step = 0; step < kBetaBisectionSteps; ++step) {
    const double mid = 0.5 * (lo + hi);
    apply(mid);
    if (CheckCrossInvariance(kits, U_sets).passed()) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  apply(lo);
  report = CheckCrossInvariance(kits, U_sets);
  report.beta = lo;
  report.common_set = common;
  return report;
}

}  // namespace psmpc
