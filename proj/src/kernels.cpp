#include "ltf/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "ltf/util.hpp"

namespace ltf {

void KernelParams::validate() const {
  if (!(gamma > 0) || !std::isfinite(gamma))
    throw std::invalid_argument("kernel gamma must be a positive finite number");
}

namespace {

inline double kernel_from_dist2(double d2, const KernelParams& p) {
  return p.squared_distance ? std::exp(-p.gamma * d2) : std::exp(-p.gamma * std::sqrt(d2));
}

void check_dims(Eigen::Index a, Eigen::Index b) {
  if (a != b)
    throw std::invalid_argument("kernel dimension mismatch: " + std::to_string(a) + " vs " +
                                std::to_string(b));
}

}  // namespace

double rbf(const Eigen::Ref<const Eigen::VectorXd>& x, const Eigen::Ref<const Eigen::VectorXd>& y,
           const KernelParams& p) {
  check_dims(x.size(), y.size());
  if (!x.allFinite() || !y.allFinite()) throw std::invalid_argument("rbf: non-finite input");
  return kernel_from_dist2((x - y).squaredNorm(), p);
}

Eigen::VectorXd rbf_grad_x(const Eigen::Ref<const Eigen::VectorXd>& x,
                           const Eigen::Ref<const Eigen::VectorXd>& y, const KernelParams& p) {
  check_dims(x.size(), y.size());
  Eigen::VectorXd diff = x - y;
  const double d2 = diff.squaredNorm();
  const double k = kernel_from_dist2(d2, p);
  if (p.squared_distance) return (-2.0 * p.gamma * k) * diff;
  const double r = std::sqrt(d2);
  if (r == 0.0) return Eigen::VectorXd::Zero(x.size());
  return (-p.gamma * k / r) * diff;
}

Eigen::MatrixXd gram(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, const KernelParams& p) {
  check_dims(a.rows(), b.rows());
  Eigen::MatrixXd out(a.cols(), b.cols());
  for (Eigen::Index j = 0; j < b.cols(); ++j)
    for (Eigen::Index i = 0; i < a.cols(); ++i)
      out(i, j) = kernel_from_dist2((a.col(i) - b.col(j)).squaredNorm(), p);
  return out;
}

double cross_kernel_sum(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, const KernelParams& p,
                        Eigen::MatrixXd* grad_a) {
  check_dims(a.rows(), b.rows());
  if (grad_a) grad_a->setZero(a.rows(), a.cols());
  double sum = 0.0;
  for (Eigen::Index i = 0; i < a.cols(); ++i)
    for (Eigen::Index j = 0; j < b.cols(); ++j) {
      const double d2 = (a.col(i) - b.col(j)).squaredNorm();
      const double k = kernel_from_dist2(d2, p);
      sum += k;
      if (!grad_a) continue;
      double coef;
      if (p.squared_distance) {
        coef = -2.0 * p.gamma * k;
      } else {
        const double r = std::sqrt(d2);
        coef = r == 0.0 ? 0.0 : -p.gamma * k / r;
      }
      grad_a->col(i) += coef * (a.col(i) - b.col(j));
    }
  return sum;
}

double mmd_sq(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, const KernelParams& p) {
  if (a.cols() == 0 || b.cols() == 0) throw std::invalid_argument("mmd_sq: empty set");
  check_dims(a.rows(), b.rows());
  const double na = static_cast<double>(a.cols());
  const double nb = static_cast<double>(b.cols());
  const double aa = gram(a, a, p).sum() / (na * na);
  const double bb = gram(b, b, p).sum() / (nb * nb);
  const double ab = gram(a, b, p).sum() / (na * nb);
  return aa + bb - 2.0 * ab;
}

double j_mmd(const Eigen::Ref<const Eigen::VectorXd>& v, const Eigen::MatrixXd& sub,
             const Eigen::MatrixXd& old, const KernelParams& p) {
  if (old.cols() == 0) throw std::invalid_argument("j_mmd: empty reference set");
  check_dims(v.size(), old.rows());
  double sub_term = 0.0;
  if (sub.cols() > 0) {
    check_dims(v.size(), sub.rows());
    double s = 0.0;
    for (Eigen::Index i = 0; i < sub.cols(); ++i)
      s += kernel_from_dist2((v - sub.col(i)).squaredNorm(), p);
    sub_term = 2.0 * s / static_cast<double>(sub.cols());
  }
  double o = 0.0;
  for (Eigen::Index i = 0; i < old.cols(); ++i)
    o += kernel_from_dist2((v - old.col(i)).squaredNorm(), p);
  return sub_term - 2.0 * o / static_cast<double>(old.cols());
}

KernelBoundReport kernel_bound_check(const Eigen::MatrixXd& points, const KernelParams& p,
                                     int n_ref) {
  if (n_ref <= 3)
    throw std::invalid_argument("kernel_bound_check: n_ref must be >= 4 (denominator " +
                                std::to_string(static_cast<long long>(n_ref) * n_ref * n_ref -
                                               2LL * n_ref * n_ref - 2LL * n_ref - 3) +
                                " is not positive)");
  const double n = n_ref;
  KernelBoundReport rep;
  rep.bound = 1.0 / (n * n * n - 2.0 * n * n - 2.0 * n - 3.0);
  for (Eigen::Index i = 0; i < points.cols(); ++i)
    for (Eigen::Index j = 0; j < points.cols(); ++j)
      if (i != j)
        rep.max_offdiag = std::max(
            rep.max_offdiag, kernel_from_dist2((points.col(i) - points.col(j)).squaredNorm(), p));
  // k(v, v) = 1 for both kernel forms.
  rep.satisfied = rep.max_offdiag <= rep.bound;
  return rep;
}

KernelParams median_heuristic_gamma(const Eigen::MatrixXd& points, std::uint64_t seed,
                                    bool squared_distance, int max_sample) {
  if (points.cols() < 2) throw std::invalid_argument("median heuristic needs at least 2 points");
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(points.cols()));
  std::iota(idx.begin(), idx.end(), 0);
  if (static_cast<Eigen::Index>(max_sample) < points.cols()) {
    std::mt19937_64 rng(derive_seed({seed, 0x6D}));
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(static_cast<std::size_t>(std::max(max_sample, 2)));
  }
  std::vector<double> dists;
  dists.reserve(idx.size() * (idx.size() - 1) / 2);
  for (std::size_t i = 0; i < idx.size(); ++i)
    for (std::size_t j = i + 1; j < idx.size(); ++j)
      dists.push_back((points.col(idx[i]) - points.col(idx[j])).norm());
  const std::size_t mid = dists.size() / 2;
  std::nth_element(dists.begin(), dists.begin() + static_cast<std::ptrdiff_t>(mid), dists.end());
  double median = dists[mid];
  if (dists.size() % 2 == 0) {
    const double lower = *std::max_element(dists.begin(), dists.begin() + static_cast<std::ptrdiff_t>(mid));
    median = 0.5 * (median + lower);
  }
  KernelParams out;
  out.squared_distance = squared_distance;
  if (median > 0.0) out.gamma = squared_distance ? 1.0 / (median * median) : 1.0 / median;
  return out;
}

}  // namespace ltf
