#include "psmpc/lp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <vector>

#include "psmpc/errors.hpp"

namespace psmpc {
namespace {

constexpr double kPivotTol = 1e-11;
constexpr double kCostTol = 1e-11;

enum class Rule { kDantzig, kBland };

class Tableau {
 public:
  // Rows 0..r-1 hold the constraints, the last row the reduced costs; the
  // last column is the right-hand side.
  Tableau(Eigen::MatrixXd T, std::vector<int> basis)
      : T_(std::move(T)), basis_(std::move(basis)) {}

  int rows() const { return static_cast<int>(T_.rows()) - 1; }
  int cols() const { return static_cast<int>(T_.cols()) - 1; }
  Eigen::MatrixXd& data() { return T_; }
  const std::vector<int>& basis() const { return basis_; }
  int pivots() const { return pivots_; }

  void Pivot(int row, int col) {
    T_.row(row) /= T_(row, col);
    for (int i = 0; i < T_.rows(); ++i) {
      if (i != row && T_(i, col) != 0.0) T_.row(i) -= T_(i, col) * T_.row(row);
    }
    basis_[row] = col;
    ++pivots_;
  }

  // Minimizes over columns [0, active_cols). Returns nullopt when the pivot
  // budget runs out, false when unbounded.
  std::optional<bool> Optimize(int active_cols, Rule rule, int budget) {
    const double scale =
        std::max(1.0, T_.row(rows()).head(active_cols).cwiseAbs().maxCoeff());
    for (int used = 0;; ++used) {
      if (used >= budget) return std::nullopt;
      int enter = -1;
      double most = -kCostTol * scale;
      for (int j = 0; j < active_cols; ++j) {
        if (T_(rows(), j) < most) {
          enter = j;
          if (rule == Rule::kBland) break;
          most = T_(rows(), j);
        }
      }
      if (enter < 0) return true;
      int leave = -1;
      double best = std::numeric_limits<double>::infinity();
      for (int i = 0; i < rows(); ++i) {
        const double a = T_(i, enter);
        if (a <= kPivotTol) continue;
        const double ratio = T_(i, cols()) / a;
        if (ratio < best || (ratio == best && basis_[i] < basis_[leave])) {
          best = ratio;
          leave = i;
        }
      }
      if (leave < 0) return false;
      Pivot(leave, enter);
    }
  }

 private:
  Eigen::MatrixXd T_;
  std::vector<int> basis_;
  int pivots_ = 0;
};

// Deterministic positive offsets in (0.5, 1], one per row.
Eigen::VectorXd Offsets(int r) {
  Eigen::VectorXd d(r);
  std::uint64_t s = 0x2545f4914f6cdd1dULL;
  for (int i = 0; i < r; ++i) {
    s ^= s << 13;
    s ^= s >> 7;
    s ^= s << 17;
    d(i) = 0.5 + 0.5 * static_cast<double>(s >> 11) / static_cast<double>(1ULL << 53);
  }
  return d;
}

struct Attempt {
  LpStatus status = LpStatus::kInfeasible;
  std::vector<int> basis;  // structural columns only
  bool finished = false;
  int pivots = 0;
};

Attempt Run(const Eigen::MatrixXd& A, const Eigen::VectorXd& b, const Eigen::VectorXd& c,
            double perturb, Rule rule, int budget) {
  const int r = static_cast<int>(A.rows());
  const int p = static_cast<int>(A.cols());
  const double b_scale = std::max(1.0, b.cwiseAbs().maxCoeff());
  const Eigen::VectorXd offsets = Offsets(r);

  // Phase one: artificials a >= 0 with A y + a = b, b >= 0, where b is
  // pushed slightly into the interior to break degeneracy.
  Eigen::MatrixXd T = Eigen::MatrixXd::Zero(r + 1, p + r + 1);
  std::vector<int> basis(r);
  for (int i = 0; i < r; ++i) {
    const double s = b(i) < 0.0 ? -1.0 : 1.0;
    T.row(i).head(p) = s * A.row(i);
    T(i, p + i) = 1.0;
    T(i, p + r) = s * b(i) + perturb * b_scale * offsets(i);
    basis[i] = p + i;
  }
  for (int i = 0; i < r; ++i) T.row(r) -= T.row(i);
  for (int i = 0; i < r; ++i) T(r, p + i) = 0.0;

  Tableau tab(std::move(T), std::move(basis));
  Attempt out;
  if (!tab.Optimize(p + r, rule, budget)) return out;
  Eigen::MatrixXd& D = tab.data();
  const double phase_one_tol = 1e-9 * b_scale + 2.0 * r * perturb * b_scale;
  if (-D(r, p + r) > phase_one_tol) {
    out.status = LpStatus::kInfeasible;
    out.finished = true;
    out.pivots = tab.pivots();
    return out;
  }

  // Drive artificials out of the basis; rows where that is impossible are
  // linearly dependent and get cleared.
  for (int i = 0; i < r; ++i) {
    if (tab.basis()[i] < p) continue;
    int col = -1;
    double biggest = 1e-9;
    for (int j = 0; j < p; ++j) {
      if (std::abs(D(i, j)) > biggest) {
        biggest = std::abs(D(i, j));
        col = j;
      }
    }
    if (col >= 0) {
      tab.Pivot(i, col);
    } else {
      D.row(i).setZero();
    }
  }

  // Phase two: reduced costs of c over the current basis. Artificials may
  // not re-enter.
  D.row(r).setZero();
  D.row(r).head(p) = c.transpose();
  for (int i = 0; i < r; ++i) {
    const int j = tab.basis()[i];
    if (j < p && c(j) != 0.0) D.row(r) -= c(j) * D.row(i);
  }
  const std::optional<bool> bounded = tab.Optimize(p, rule, budget);
  out.pivots = tab.pivots();
  if (!bounded) return out;
  out.finished = true;
  out.status = *bounded ? LpStatus::kOptimal : LpStatus::kUnbounded;
  for (int i = 0; i < r; ++i) {
    if (tab.basis()[i] < p) out.basis.push_back(tab.basis()[i]);
  }
  return out;
}

// Basic solution of the unperturbed system on the given basis.
std::optional<Eigen::VectorXd> Recover(const Eigen::MatrixXd& A, const Eigen::VectorXd& b,
                                       const std::vector<int>& basis) {
  const int p = static_cast<int>(A.cols());
  Eigen::VectorXd y = Eigen::VectorXd::Zero(p);
  if (basis.empty()) {
    if (b.cwiseAbs().maxCoeff() > 1e-12) return std::nullopt;
    return y;
  }
  Eigen::MatrixXd AB(A.rows(), static_cast<int>(basis.size()));
  for (std::size_t k = 0; k < basis.size(); ++k) AB.col(static_cast<int>(k)) = A.col(basis[k]);
  const Eigen::VectorXd yB = AB.colPivHouseholderQr().solve(b);
  const double scale = std::max(1.0, b.cwiseAbs().maxCoeff());
  if ((AB * yB - b).cwiseAbs().maxCoeff() > 1e-9 * scale) return std::nullopt;
  if (yB.minCoeff() < -1e-9 * scale) return std::nullopt;
  for (std::size_t k = 0; k < basis.size(); ++k) y(basis[k]) = std::max(0.0, yB(static_cast<int>(k)));
  return y;
}

}  // namespace

LpResult SolveStandardLp(const Eigen::MatrixXd& A, const Eigen::VectorXd& b,
                         const Eigen::VectorXd& c) {
  const int r = static_cast<int>(A.rows());
  const int p = static_cast<int>(A.cols());
  if (b.size() != r || c.size() != p) throw InvalidModel("LP dimensions do not match");
  if (!A.allFinite() || !b.allFinite() || !c.allFinite()) {
    throw InvalidModel("LP data must be finite");
  }
  const int budget = 50 * (r + p) + 1000;
  LpResult out;
  // Perturbed Dantzig first; Bland's rule on the exact data is the
  // cycle-free fallback.
  for (const auto& [perturb, rule] :
       {std::pair{1e-10, Rule::kDantzig}, std::pair{1e-8, Rule::kDantzig},
        std::pair{0.0, Rule::kBland}}) {
    const Attempt a = Run(A, b, c, perturb, rule, budget);
    out.pivots += a.pivots;
    if (!a.finished) continue;
    if (a.status != LpStatus::kOptimal) {
      out.status = a.status;
      return out;
    }
    const std::optional<Eigen::VectorXd> y = Recover(A, b, a.basis);
    if (!y) continue;
    out.status = LpStatus::kOptimal;
    out.y = *y;
    out.value = c.dot(out.y);
    return out;
  }
  throw Error("simplex did not terminate");
}

}  // namespace psmpc
