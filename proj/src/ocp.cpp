#include "psmpc/ocp.hpp"

#include <chrono>
#include <cmath>
#include <string>

#include "psmpc/errors.hpp"

namespace psmpc {
namespace {

using Triplet = Eigen::Triplet<double>;

bool SymmetricPd(const Eigen::MatrixXd& M) {
  if (M.rows() != M.cols() || M.size() == 0) return false;
  if ((M - M.transpose()).cwiseAbs().maxCoeff() > 1e-12) return false;
  return M.selfadjointView<Eigen::Lower>().eigenvalues().minCoeff() > 0.0;
}

// Accumulates constraint rows and the quadratic cost as triplets.
class QpBuilder {
 public:
  explicit QpBuilder(int vars) : vars_(vars), g_(Eigen::VectorXd::Zero(vars)) {}

  void AddCostBlock(int at, const Eigen::MatrixXd& W) {
    for (int r = 0; r < W.rows(); ++r) {
      for (int c = 0; c < W.cols(); ++c) {
        if (W(r, c) != 0.0) cost_.emplace_back(at + r, at + c, 2.0 * W(r, c));
      }
    }
  }
  void AddLinearCost(int at, const Eigen::VectorXd& v) {
    g_.segment(at, v.size()) += v;
  }

  // Rows lb <= sum_k A_k z[at_k ..] <= ub, several blocks per row set.
  int BeginRows(int count, const Eigen::VectorXd& lb, const Eigen::VectorXd& ub) {
    const int first = rows_;
    rows_ += count;
    lb_.insert(lb_.end(), lb.data(), lb.data() + lb.size());
    ub_.insert(ub_.end(), ub.data(), ub.data() + ub.size());
    return first;
  }
  void AddBlock(int row, int col, const Eigen::MatrixXd& A) {
    for (int r = 0; r < A.rows(); ++r) {
      for (int c = 0; c < A.cols(); ++c) {
        if (A(r, c) != 0.0) cons_.emplace_back(row + r, col + c, A(r, c));
      }
    }
  }

  // Polytope rows on one block.
  void AddSet(int col, const Polytope& P) {
    const int row = BeginRows(P.num_rows(), Eigen::VectorXd::Constant(P.num_rows(), -kInf),
                              P.h());
    AddBlock(row, col, P.H());
  }

  QpProblem Finish() {
    QpProblem qp;
    qp.Hc.resize(vars_, vars_);
    qp.Hc.setFromTriplets(cost_.begin(), cost_.end());
    qp.g = g_;
    qp.C.resize(rows_, vars_);
    qp.C.setFromTriplets(cons_.begin(), cons_.end());
    qp.lb = Eigen::Map<const Eigen::VectorXd>(lb_.data(), rows_);
    qp.ub = Eigen::Map<const Eigen::VectorXd>(ub_.data(), rows_);
    return qp;
  }

 private:
  int vars_;
  int rows_ = 0;
  Eigen::VectorXd g_;
  std::vector<Triplet> cost_;
  std::vector<Triplet> cons_;
  std::vector<double> lb_;
  std::vector<double> ub_;
};

int StateAt(int n, int s) { return n * s; }
int InputAt(int n, int m, int N, int s) { return n * (N + 1) + m * s; }

// Leader variables, dynamics, sets and cost. Stage-0 state constraints only
// when `constrain_x0`.
void AddLeader(QpBuilder& b, const MpcConfig& cfg, bool constrain_x0) {
  const int n = cfg.num_states();
  const int m = cfg.num_inputs();
  const int N = cfg.N;
  const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(n, n);
  for (int s = 0; s < N; ++s) {
    const int row = b.BeginRows(n, Eigen::VectorXd::Zero(n), Eigen::VectorXd::Zero(n));
    b.AddBlock(row, StateAt(n, s + 1), I);
    b.AddBlock(row, StateAt(n, s), -cfg.model.Ad);
    b.AddBlock(row, InputAt(n, m, N, s), -cfg.model.Bd);
  }
  for (int s = constrain_x0 ? 0 : 1; s < N; ++s) b.AddSet(StateAt(n, s), cfg.X);
  b.AddSet(StateAt(n, N), cfg.kit.Xn);
  for (int s = 0; s < N; ++s) b.AddSet(InputAt(n, m, N, s), cfg.U);

  for (int s = 0; s < N; ++s) b.AddCostBlock(StateAt(n, s), cfg.Q);
  b.AddCostBlock(StateAt(n, N), cfg.kit.P);
  for (int s = 0; s < N; ++s) b.AddCostBlock(InputAt(n, m, N, s), cfg.R);
}

void PinInitialState(QpBuilder& b, int n, const Eigen::VectorXd& x0) {
  const int row = b.BeginRows(n, x0, x0);
  b.AddBlock(row, 0, Eigen::MatrixXd::Identity(n, n));
}

OcpProblem Header(OcpKind kind, const MpcConfig& cfg, const Eigen::VectorXd& x0) {
  if (x0.size() != cfg.num_states() || !x0.allFinite()) {
    throw InvalidModel("initial state must be finite with " +
                       std::to_string(cfg.num_states()) + " entries");
  }
  OcpProblem p;
  p.kind = kind;
  p.n = cfg.num_states();
  p.m = cfg.num_inputs();
  p.N = cfg.N;
  p.x_measured = x0;
  p.Ad = cfg.model.Ad;
  p.Bd = cfg.model.Bd;
  return p;
}

// T_l T_i^-1 between two controllers' prediction states.
Eigen::MatrixXd Coupling(const MpcConfig& leader, const MpcConfig& restrictor) {
  const Eigen::MatrixXd& Ti = leader.translator.M;
  const Eigen::MatrixXd& Tl = restrictor.translator.M;
  if (Ti.size() == 0 && Tl.size() == 0) {
    return Eigen::MatrixXd::Identity(restrictor.num_states(), leader.num_states());
  }
  if (Ti.rows() != Ti.cols() || Tl.rows() != Tl.cols() || Ti.rows() != Tl.rows()) {
    throw InvalidModel("composition needs square translators of equal size");
  }
  Eigen::FullPivLU<Eigen::MatrixXd> lu(Ti);
  if (!lu.isInvertible()) {
    throw InvalidModel("leader translator must be invertible for composition");
  }
  return Tl * lu.inverse();
}

}  // namespace

void MpcConfig::Validate(bool robust) const {
  const int n = num_states();
  const int m = num_inputs();
  if (model.Ad.rows() != n || model.Ad.cols() != n || model.Bd.rows() != n || n == 0 ||
      m == 0) {
    throw InvalidModel("controller " + id + ": inconsistent prediction model");
  }
  if (N < 2) throw InvalidModel("controller " + id + ": horizon must be >= 2");
  if (!SymmetricPd(Q) || Q.rows() != n) {
    throw InvalidModel("controller " + id + ": Q must be symmetric positive definite");
  }
  if (!SymmetricPd(R) || R.rows() != m) {
    throw InvalidModel("controller " + id + ": R must be symmetric positive definite");
  }
  if (kit.P.rows() != n || kit.K.rows() != m || kit.K.cols() != n ||
      kit.Xn.dim() != n) {
    throw InvalidModel("controller " + id + ": terminal ingredients missing");
  }
  if (X.dim() != n || U.dim() != m) {
    throw InvalidModel("controller " + id + ": constraint set dimensions");
  }
  if (robust && !(lambda > 0.0)) {
    throw InvalidModel("controller " + id + ": robust mode needs lambda > 0");
  }
}

OcpProblem BuildNominal(const MpcConfig& cfg, const Eigen::VectorXd& x0) {
  OcpProblem p = Header(OcpKind::kNominal, cfg, x0);
  QpBuilder b(p.leader_vars());
  PinInitialState(b, p.n, x0);
  AddLeader(b, cfg, false);
  p.qp = b.Finish();
  return p;
}

OcpProblem BuildComposed(const MpcConfig& leader,
                         const std::vector<const MpcConfig*>& restrictors,
                         const Eigen::VectorXd& x0) {
  if (restrictors.empty()) return BuildNominal(leader, x0);
  OcpProblem p = Header(OcpKind::kComposed, leader, x0);
  const int n = p.n;
  const int m = p.m;
  const int N = p.N;
  int vars = p.leader_vars();
  for (const MpcConfig* r : restrictors) {
    if (r->num_inputs() != m) {
      throw InvalidModel("restrictor " + r->id + " has a different input dimension");
    }
    if (r->id == leader.id) {
      throw InvalidModel("leader " + leader.id + " cannot restrict itself");
    }
    vars += r->num_states() * N;
  }
  QpBuilder b(vars);
  PinInitialState(b, n, x0);
  AddLeader(b, leader, false);

  int at = p.leader_vars();
  for (const MpcConfig* r : restrictors) {
    const int nl = r->num_states();
    const Eigen::MatrixXd Il = Eigen::MatrixXd::Identity(nl, nl);
    OcpProblem::Restrictor info{r->model.Ad, r->model.Bd, Coupling(leader, *r)};
    auto xl = [&](int s) { return at + nl * (s - 1); };  // s = 1..N

    int row = b.BeginRows(nl, Eigen::VectorXd::Zero(nl), Eigen::VectorXd::Zero(nl));
    b.AddBlock(row, xl(1), Il);
    b.AddBlock(row, StateAt(n, 1), -info.M);
    for (int s = 1; s < N; ++s) {
      row = b.BeginRows(nl, Eigen::VectorXd::Zero(nl), Eigen::VectorXd::Zero(nl));
      b.AddBlock(row, xl(s + 1), Il);
      b.AddBlock(row, xl(s), -r->model.Ad);
      b.AddBlock(row, InputAt(n, m, N, s), -r->model.Bd);
    }
    for (int s = 1; s < N; ++s) b.AddSet(xl(s), r->X);
    b.AddSet(xl(N), r->kit.Xn);
    for (int s = 1; s < N; ++s) b.AddSet(InputAt(n, m, N, s), r->U);
    p.restrictors.push_back(std::move(info));
    at += nl * N;
  }
  p.qp = b.Finish();
  return p;
}

OcpProblem BuildRobust(const MpcConfig& cfg, const Eigen::VectorXd& x_measured) {
  if (!(cfg.lambda > 0.0)) {
    throw InvalidModel("controller " + cfg.id + ": robust mode needs lambda > 0");
  }
  OcpProblem p = Header(OcpKind::kRobust, cfg, x_measured);
  QpBuilder b(p.leader_vars());
  AddLeader(b, cfg, true);
  // lambda |x - xbar|_P^2 = lambda xbar'P xbar - 2 lambda x'P xbar + const.
  b.AddCostBlock(0, cfg.lambda * cfg.kit.P);
  b.AddLinearCost(0, -2.0 * cfg.lambda * cfg.kit.P * x_measured);
  p.constant = cfg.lambda * x_measured.dot(cfg.kit.P * x_measured);
  p.qp = b.Finish();
  return p;
}

OcpSolution SolveOcp(const OcpProblem& p, const OcpSolution* warm,
                     const QpSettings& settings) {
  const auto start = std::chrono::steady_clock::now();
  const QpSolution* warm_qp =
      warm != nullptr && warm->qp.z.size() == p.qp.num_vars() &&
              warm->qp.y.size() == p.qp.num_rows()
          ? &warm->qp
          : nullptr;
  QpSolution s = QpSolver(settings).Solve(p.qp, warm_qp);
  const auto stop = std::chrono::steady_clock::now();

  if (s.status == QpStatus::kPrimalInfeasible) {
    if (p.kind == OcpKind::kComposed) {
      throw RecursiveFeasibilityViolation("composed OCP infeasible at x = [" +
                            [&] {
                              std::string out;
                              for (int i = 0; i < p.x_measured.size(); ++i) {
                                out += (i ? ", " : "") + std::to_string(p.x_measured(i));
                              }
                              return out;
                            }() +
                            "]");
    }
    throw OcpInfeasible("OCP infeasible");
  }
  if (s.status == QpStatus::kDualInfeasible) {
    throw Error("OCP reported unbounded; the cost must be positive definite");
  }

  OcpSolution out;
  out.stats.status = s.status;
  out.stats.iters = s.iters;
  out.stats.primal_res = s.primal_res;
  out.stats.dual_res = s.dual_res;
  out.stats.solve_ms = std::chrono::duration<double, std::milli>(stop - start).count();
  out.feasible = s.solved() || s.primal_res <= 1e-6;
  out.X_star.resize(p.n, p.N + 1);
  for (int k = 0; k <= p.N; ++k) out.X_star.col(k) = s.z.segment(StateAt(p.n, k), p.n);
  out.U_star.resize(p.m, p.N);
  for (int k = 0; k < p.N; ++k) {
    out.U_star.col(k) = s.z.segment(InputAt(p.n, p.m, p.N, k), p.m);
  }
  out.xbar = out.X_star.col(0);
  out.V = std::max(0.0, s.obj + p.constant);
  out.qp = std::move(s);
  return out;
}

Eigen::MatrixXd ShiftedCandidate(const OcpSolution& prev, const MpcConfig& cfg) {
  const int N = static_cast<int>(prev.U_star.cols());
  Eigen::MatrixXd U(prev.U_star.rows(), N);
  U.leftCols(N - 1) = prev.U_star.rightCols(N - 1);
  U.col(N - 1) = -cfg.kit.K * prev.X_star.col(N);
  return U;
}

Eigen::VectorXd CandidateVector(const OcpProblem& p, const Eigen::MatrixXd& U,
                                const Eigen::VectorXd* xbar) {
  if (U.rows() != p.m || U.cols() != p.N) {
    throw InvalidModel("candidate input sequence has the wrong shape");
  }
  int vars = p.leader_vars();
  for (const auto& r : p.restrictors) vars += static_cast<int>(r.Ad.rows()) * p.N;
  Eigen::VectorXd z(vars);
  Eigen::VectorXd x = xbar != nullptr ? *xbar : p.x_measured;
  for (int s = 0; s <= p.N; ++s) {
    z.segment(StateAt(p.n, s), p.n) = x;
    if (s < p.N) {
      z.segment(InputAt(p.n, p.m, p.N, s), p.m) = U.col(s);
      x = p.Ad * x + p.Bd * U.col(s);
    }
  }
  int at = p.leader_vars();
  for (const auto& r : p.restrictors) {
    const int nl = static_cast<int>(r.Ad.rows());
    Eigen::VectorXd xl = r.M * z.segment(StateAt(p.n, 1), p.n);
    for (int s = 1; s <= p.N; ++s) {
      z.segment(at + nl * (s - 1), nl) = xl;
      if (s < p.N) xl = r.Ad * xl + r.Bd * U.col(s);
    }
    at += nl * p.N;
  }
  return z;
}

double MaxConstraintViolation(const QpProblem& qp, const Eigen::VectorXd& z) {
  const Eigen::VectorXd Cz = qp.C * z;
  double worst = 0.0;
  for (int i = 0; i < Cz.size(); ++i) {
    worst = std::max({worst, Cz(i) - qp.ub(i), qp.lb(i) - Cz(i)});
  }
  return worst;
}

double OcpCost(const OcpProblem& p, const Eigen::VectorXd& z) {
  return 0.5 * z.dot(p.qp.Hc * z) + p.qp.g.dot(z) + p.constant;
}

}  // namespace psmpc
