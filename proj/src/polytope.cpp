#include "psmpc/polytope.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "psmpc/errors.hpp"
#include "psmpc/lp.hpp"

namespace psmpc {
namespace {

constexpr double kZeroRow = 1e-12;
constexpr double kRedundancyTol = 1e-9;

double EmptyTol(const Eigen::VectorXd& h) {
  return 1e-12 * std::max(1.0, h.cwiseAbs().maxCoeff());
}

// Largest t with H x + t <= h for some x (capped at 1); negative iff empty.
// Dual: min h'y + s  s.t.  H'y = 0, 1'y + s = 1, y, s >= 0.
double ChebyshevSlack(const Eigen::MatrixXd& H, const Eigen::VectorXd& h) {
  const int n = static_cast<int>(H.cols());
  const int m = static_cast<int>(H.rows());
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(n + 1, m + 1);
  A.topLeftCorner(n, m) = H.transpose();
  A.row(n).setOnes();
  Eigen::VectorXd b = Eigen::VectorXd::Zero(n + 1);
  b(n) = 1.0;
  Eigen::VectorXd c(m + 1);
  c << h, 1.0;
  return SolveStandardLp(A, b, c).value;
}

// max d'x s.t. H x <= h, through the dual  min h'y  s.t. H'y = d, y >= 0.
// The dual has only dim() equality rows, so the simplex stays small.
double LpMax(const Eigen::MatrixXd& H, const Eigen::VectorXd& h,
             const Eigen::VectorXd& d) {
  const double norm = d.norm();
  if (norm == 0.0) {
    if (ChebyshevSlack(H, h) < -EmptyTol(h)) throw EmptySet("polytope is empty");
    return 0.0;
  }
  const LpResult dual = SolveStandardLp(H.transpose(), d / norm, h);
  switch (dual.status) {
    case LpStatus::kOptimal:
      return dual.value * norm;
    case LpStatus::kUnbounded:
      throw EmptySet("polytope is empty");
    case LpStatus::kInfeasible:
      break;
  }
  if (ChebyshevSlack(H, h) < -EmptyTol(h)) throw EmptySet("polytope is empty");
  throw Unbounded("polytope is unbounded in the requested direction");
}

}  // namespace

Polytope::Polytope(Eigen::MatrixXd H, Eigen::VectorXd h) {
  if (H.rows() != h.size()) {
    throw InvalidSet("polytope H and h row counts differ");
  }
  if (!H.allFinite() || !h.allFinite()) {
    throw InvalidSet("polytope data must be finite");
  }
  std::vector<int> keep;
  keep.reserve(H.rows());
  for (int r = 0; r < H.rows(); ++r) {
    const double norm = H.row(r).norm();
    if (norm <= kZeroRow) {
      if (h(r) < -kMembershipTol) throw EmptySet("polytope has row 0 <= h < 0");
      continue;
    }
    H.row(r) /= norm;
    h(r) /= norm;
    keep.push_back(r);
  }
  if (keep.empty()) {
    throw InvalidSet("polytope needs at least one nonzero row");
  }
  H_.resize(static_cast<int>(keep.size()), H.cols());
  h_.resize(static_cast<int>(keep.size()));
  for (int k = 0; k < static_cast<int>(keep.size()); ++k) {
    H_.row(k) = H.row(keep[k]);
    h_(k) = h(keep[k]);
  }
}

Polytope Polytope::FromBox(const Eigen::VectorXd& lower,
                           const Eigen::VectorXd& upper) {
  const int n = static_cast<int>(lower.size());
  if (upper.size() != n || n == 0) {
    throw InvalidSet("box bounds must have equal, nonzero length");
  }
  for (int i = 0; i < n; ++i) {
    if (!(lower(i) < upper(i))) {
      throw InvalidSet("box needs lower < upper in coordinate " +
                       std::to_string(i));
    }
  }
  Eigen::MatrixXd H(2 * n, n);
  H.topRows(n) = Eigen::MatrixXd::Identity(n, n);
  H.bottomRows(n) = -Eigen::MatrixXd::Identity(n, n);
  Eigen::VectorXd h(2 * n);
  h.head(n) = upper;
  h.tail(n) = -lower;
  return Polytope(std::move(H), std::move(h));
}

bool Polytope::Contains(const Eigen::VectorXd& x, double tol) const {
  if (x.size() != dim()) {
    throw InvalidSet("point dimension does not match polytope");
  }
  return ((H_ * x - h_).array() <= tol).all();
}

Polytope Polytope::Intersect(const Polytope& other) const {
  if (other.dim() != dim()) {
    throw InvalidSet("cannot intersect polytopes of different dimension");
  }
  Eigen::MatrixXd H(num_rows() + other.num_rows(), dim());
  H << H_, other.H_;
  Eigen::VectorXd h(num_rows() + other.num_rows());
  h << h_, other.h_;
  return Polytope(std::move(H), std::move(h));
}

Polytope Polytope::Scaled(double beta) const {
  Polytope out = *this;
  out.h_ *= beta;
  return out;
}

Polytope Polytope::WithRows(const Eigen::MatrixXd& G,
                            const Eigen::VectorXd& g) const {
  return Intersect(Polytope(G, g));
}

double Polytope::Support(const Eigen::VectorXd& d) const {
  if (d.size() != dim()) {
    throw InvalidSet("direction dimension does not match polytope");
  }
  return LpMax(H_, h_, d);
}

bool Polytope::IsEmpty() const {
  return ChebyshevSlack(H_, h_) < -EmptyTol(h_);
}

Polytope Polytope::RemoveRedundancy() const {
  if (IsEmpty()) throw EmptySet("cannot reduce an empty polytope");
  if (num_rows() == 1) return *this;

  // Exact duplicates first; they are cheap to spot and make the LPs
  // degenerate.
  std::vector<int> rows;
  for (int r = 0; r < num_rows(); ++r) {
    bool dup = false;
    for (int k : rows) {
      if ((H_.row(k) - H_.row(r)).cwiseAbs().maxCoeff() <= 1e-12) {
        dup = true;
        if (h_(r) < h_(k)) {
          // Keep the tighter of the two.
          std::replace(rows.begin(), rows.end(), k, r);
        }
        break;
      }
    }
    if (!dup) rows.push_back(r);
  }

  std::vector<bool> kept(rows.size(), true);
  for (std::size_t a = 0; a < rows.size(); ++a) {
    std::vector<int> others;
    for (std::size_t b = 0; b < rows.size(); ++b) {
      if (b != a && kept[b]) others.push_back(rows[b]);
    }
    const int r = rows[a];
    Eigen::MatrixXd H(static_cast<int>(others.size()) + 1, dim());
    Eigen::VectorXd h(H.rows());
    for (int k = 0; k < static_cast<int>(others.size()); ++k) {
      H.row(k) = H_.row(others[k]);
      h(k) = h_(others[k]);
    }
    H.row(H.rows() - 1) = H_.row(r);
    h(h.size() - 1) = h_(r) + 1.0;
    const double best = LpMax(H, h, H_.row(r).transpose());
    if (best <= h_(r) + kRedundancyTol) kept[a] = false;
  }

  std::vector<int> final_rows;
  for (std::size_t a = 0; a < rows.size(); ++a) {
    if (kept[a]) final_rows.push_back(rows[a]);
  }
  Eigen::MatrixXd H(static_cast<int>(final_rows.size()), dim());
  Eigen::VectorXd h(H.rows());
  for (int k = 0; k < static_cast<int>(final_rows.size()); ++k) {
    H.row(k) = H_.row(final_rows[k]);
    h(k) = h_(final_rows[k]);
  }
  return Polytope(std::move(H), std::move(h));
}

std::pair<Eigen::VectorXd, Eigen::VectorXd> Polytope::BoundingBox() const {
  Eigen::VectorXd lo(dim());
  Eigen::VectorXd hi(dim());
  for (int i = 0; i < dim(); ++i) {
    const Eigen::VectorXd e = Eigen::VectorXd::Unit(dim(), i);
    hi(i) = Support(e);
    lo(i) = -Support(-e);
  }
  return {lo, hi};
}

}  // namespace psmpc
