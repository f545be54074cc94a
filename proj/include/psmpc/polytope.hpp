#pragma once

#include <utility>

#include <Eigen/Dense>

namespace psmpc {

/// Closed polytope {x : H x <= h} in H-representation.
///
/// Rows are normalized to unit Euclidean length on construction, so the
/// membership tolerance is a distance. Rows that vanish under normalization
/// are dropped when trivially satisfied and make the set empty otherwise.
/// All queries that need optimization (support, emptiness, redundancy) are
/// linear programs solved by the QP kernel with a zero quadratic term.
class Polytope {
 public:
  static constexpr double kMembershipTol = 1e-9;

  Polytope() = default;
  Polytope(Eigen::MatrixXd H, Eigen::VectorXd h);

  /// lower <= x <= upper. Throws InvalidSet unless lower < upper everywhere.
  static Polytope FromBox(const Eigen::VectorXd& lower,
                          const Eigen::VectorXd& upper);

  int dim() const { return static_cast<int>(H_.cols()); }
  int num_rows() const { return static_cast<int>(H_.rows()); }
  const Eigen::MatrixXd& H() const { return H_; }
  const Eigen::VectorXd& h() const { return h_; }

  bool Contains(const Eigen::VectorXd& x, double tol = kMembershipTol) const;

  /// Stacked rows; redundancy is left in place.
  Polytope Intersect(const Polytope& other) const;

  /// {x : H x <= beta h}; for a set containing the origin this is the
  /// image under x -> beta x.
  Polytope Scaled(double beta) const;

  /// Adds rows G x <= g.
  Polytope WithRows(const Eigen::MatrixXd& G, const Eigen::VectorXd& g) const;

  /// max d'x over the set. Throws EmptySet or Unbounded.
  double Support(const Eigen::VectorXd& d) const;

  bool IsEmpty() const;

  /// Minimal H-representation. A row is dropped when the LP
  ///   max H_r x  s.t. other kept rows,  H_r x <= h_r + 1
  /// certifies H_r x <= h_r already. Throws EmptySet if the set is empty.
  Polytope RemoveRedundancy() const;

  /// Axis-aligned bounding box from 2n support queries.
  std::pair<Eigen::VectorXd, Eigen::VectorXd> BoundingBox() const;

 private:
  Eigen::MatrixXd H_;
  Eigen::VectorXd h_;
};

}  // namespace psmpc
