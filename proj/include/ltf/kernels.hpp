// RBF kernel, biased squared MMD, the greedy MMD witness, and the
// submodularity sufficient-condition check.
//
// Point sets are Eigen matrices with one point per COLUMN.

#pragma once

#include <cstdint>

#include <Eigen/Core>

namespace ltf {

struct KernelParams {
  double gamma = 1.0;
  /// false: k = exp(-gamma * ||x - y||) (the default, unsquared norm).
  /// true:  k = exp(-gamma * ||x - y||^2), the conventional Gaussian form.
  bool squared_distance = false;

  void validate() const;
};

double rbf(const Eigen::Ref<const Eigen::VectorXd>& x, const Eigen::Ref<const Eigen::VectorXd>& y,
           const KernelParams& p);

/// d k(x, y) / d x. At x == y the unsquared kernel is not differentiable;
/// the zero subgradient is returned.
Eigen::VectorXd rbf_grad_x(const Eigen::Ref<const Eigen::VectorXd>& x,
                           const Eigen::Ref<const Eigen::VectorXd>& y, const KernelParams& p);

/// K(i, j) = k(A.col(i), B.col(j)).
Eigen::MatrixXd gram(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, const KernelParams& p);

/// sum_{i,j} k(A.col(i), B.col(j)). When `grad_a` is given it receives, per
/// column i, sum_j d k(A.col(i), B.col(j)) / d A.col(i).
double cross_kernel_sum(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, const KernelParams& p,
                        Eigen::MatrixXd* grad_a = nullptr);

/// Biased V-statistic including diagonal self-terms:
///   mean_{A x A} k + mean_{B x B} k - 2 mean_{A x B} k.
double mmd_sq(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, const KernelParams& p);

/// Greedy witness for adding `v` to `sub` when matching `old`:
///   (2/|sub|) sum_{u in sub} k(v,u) - (2/|old|) sum_{u in old} k(v,u).
/// The first term is 0 when `sub` has no columns.
double j_mmd(const Eigen::Ref<const Eigen::VectorXd>& v, const Eigen::MatrixXd& sub,
             const Eigen::MatrixXd& old, const KernelParams& p);

struct KernelBoundReport {
  double max_offdiag = 0.0;
  double bound = 0.0;
  bool satisfied = false;
};

/// Checks 0 <= k(v,u) <= k(v,v) / (n^3 - 2n^2 - 2n - 3) over all off-diagonal
/// pairs, with n = n_ref. Requires n_ref >= 4.
KernelBoundReport kernel_bound_check(const Eigen::MatrixXd& points, const KernelParams& p,
                                     int n_ref);

/// gamma = 1 / median pairwise distance (1 / median^2 for the squared form)
/// over a seeded sample of at most `max_sample` points. Falls back to
/// gamma = 1 when the median distance is 0.
KernelParams median_heuristic_gamma(const Eigen::MatrixXd& points, std::uint64_t seed = 0,
                                    bool squared_distance = false, int max_sample = 1000);

}  // namespace ltf
