// Shared fixtures and independent oracles for the test binaries.

#pragma once

#include <cmath>
#include <filesystem>
#include <random>
#include <string>

#include <Eigen/Core>

#include "ltf/graph.hpp"
#include "ltf/kernels.hpp"
#include "ltf/selector.hpp"

namespace ltf::test {

inline Eigen::MatrixXd random_points(int dim, int count, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> normal(0.0, scale);
  Eigen::MatrixXd m(dim, count);
  for (int j = 0; j < count; ++j)
    for (int i = 0; i < dim; ++i) m(i, j) = normal(rng);
  return m;
}

/// Candidate pool with ids 0..n-1, Gaussian embeddings and j_cls in [0, 2).
inline CandidatePool random_pool(int n, int dim, std::mt19937_64& rng) {
  CandidatePool pool;
  pool.emb = random_points(dim, n, rng);
  std::uniform_real_distribution<double> err(0.0, 2.0);
  for (int i = 0; i < n; ++i) {
    pool.ids.push_back(i);
    pool.labels.push_back(i % 3);
    pool.jcls.push_back(err(rng));
  }
  return pool;
}

/// Literal kernel value, written out from the definition.
inline double kernel_literal(const Eigen::VectorXd& x, const Eigen::VectorXd& y, const KernelParams& p) {
  double d2 = 0.0;
  for (Eigen::Index i = 0; i < x.size(); ++i) d2 += (x[i] - y[i]) * (x[i] - y[i]);
  return std::exp(-p.gamma * (p.squared_distance ? d2 : std::sqrt(d2)));
}

/// Squared MMD as three separate double sums over the two samples.
inline double mmd_literal(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, const KernelParams& p) {
  double aa = 0.0, bb = 0.0, ab = 0.0;
  for (Eigen::Index i = 0; i < a.cols(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j) aa += kernel_literal(a.col(i), a.col(j), p);
  for (Eigen::Index i = 0; i < b.cols(); ++i)
    for (Eigen::Index j = 0; j < b.cols(); ++j) bb += kernel_literal(b.col(i), b.col(j), p);
  for (Eigen::Index i = 0; i < a.cols(); ++i)
    for (Eigen::Index j = 0; j < b.cols(); ++j) ab += kernel_literal(a.col(i), b.col(j), p);
  const double na = static_cast<double>(a.cols()), nb = static_cast<double>(b.cols());
  return aa / (na * na) + bb / (nb * nb) - 2.0 * ab / (na * nb);
}

inline Eigen::MatrixXd columns(const Eigen::MatrixXd& m, const std::vector<std::size_t>& idx) {
  Eigen::MatrixXd out(m.rows(), static_cast<Eigen::Index>(idx.size()));
  for (std::size_t i = 0; i < idx.size(); ++i)
    out.col(static_cast<Eigen::Index>(i)) = m.col(static_cast<Eigen::Index>(idx[i]));
  return out;
}

/// Small, quick synthetic graph: 3 periods x 2 classes x `per_class` nodes.
inline SynthConfig small_synth(std::uint64_t seed = 1, int per_class = 30) {
  SynthConfig c;
  c.num_periods = 3;
  c.classes_per_period = 2;
  c.nodes_per_class_per_period = per_class;
  c.feature_dim = 4;
  c.events_per_node = 3;
  c.seed = seed;
  return c;
}

/// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("ltf_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace ltf::test
