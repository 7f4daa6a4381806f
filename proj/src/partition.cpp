// Partitioners for cost-reduced selection. Random chunking keeps each part
// distributed like the whole; the clustering variants exist for comparison
// and are rebalanced so that no part exceeds the requested size.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <random>
#include <stdexcept>

#include "ltf/selector.hpp"
#include "ltf/util.hpp"

namespace ltf {
namespace {

using Parts = std::vector<std::vector<std::size_t>>;

Parts random_chunks(std::size_t n, std::size_t w, std::uint64_t seed) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::mt19937_64 rng(derive_seed({seed, 0xA1}));
  std::shuffle(idx.begin(), idx.end(), rng);
  Parts parts(w);
  const std::size_t base = n / w, extra = n % w;
  std::size_t pos = 0;
  for (std::size_t i = 0; i < w; ++i) {
    const std::size_t len = base + (i < extra ? 1 : 0);
    parts[i].assign(idx.begin() + static_cast<std::ptrdiff_t>(pos),
                    idx.begin() + static_cast<std::ptrdiff_t>(pos + len));
    pos += len;
  }
  return parts;
}

Eigen::MatrixXd centroids_of(const Eigen::MatrixXd& x, const std::vector<int>& assign, int k) {
  Eigen::MatrixXd c = Eigen::MatrixXd::Zero(x.rows(), k);
  std::vector<int> count(static_cast<std::size_t>(k), 0);
  for (std::size_t i = 0; i < assign.size(); ++i) {
    c.col(assign[i]) += x.col(static_cast<Eigen::Index>(i));
    ++count[static_cast<std::size_t>(assign[i])];
  }
  for (int j = 0; j < k; ++j)
    if (count[static_cast<std::size_t>(j)] > 0) c.col(j) /= count[static_cast<std::size_t>(j)];
  return c;
}

/// Seeded Lloyd's iterations from a k-means++ start.
std::vector<int> kmeans_assign(const Eigen::MatrixXd& x, int k, std::uint64_t seed) {
  const Eigen::Index n = x.cols();
  std::mt19937_64 rng(derive_seed({seed, 0xB7}));
  Eigen::MatrixXd centers(x.rows(), k);
  std::uniform_int_distribution<Eigen::Index> first(0, n - 1);
  centers.col(0) = x.col(first(rng));
  std::vector<double> d2(static_cast<std::size_t>(n), std::numeric_limits<double>::infinity());
  for (int c = 1; c < k; ++c) {
    double total = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      d2[static_cast<std::size_t>(i)] =
          std::min(d2[static_cast<std::size_t>(i)], (x.col(i) - centers.col(c - 1)).squaredNorm());
      total += d2[static_cast<std::size_t>(i)];
    }
    Eigen::Index pick = 0;
    if (total > 0) {
      double r = std::uniform_real_distribution<double>(0.0, total)(rng);
      for (; pick < n - 1; ++pick) {
        r -= d2[static_cast<std::size_t>(pick)];
        if (r <= 0) break;
      }
    } else {
      pick = first(rng);
    }
    centers.col(c) = x.col(pick);
  }

  std::vector<int> assign(static_cast<std::size_t>(n), 0);
  for (int iter = 0; iter < 100; ++iter) {
    bool changed = false;
    for (Eigen::Index i = 0; i < n; ++i) {
      Eigen::Index best = 0;
      (centers.colwise() - x.col(i)).colwise().squaredNorm().minCoeff(&best);
      if (assign[static_cast<std::size_t>(i)] != static_cast<int>(best)) {
        assign[static_cast<std::size_t>(i)] = static_cast<int>(best);
        changed = true;
      }
    }
    Eigen::MatrixXd updated = centroids_of(x, assign, k);
    // keep the old center for clusters that lost all members
    std::vector<int> count(static_cast<std::size_t>(k), 0);
    for (int a : assign) ++count[static_cast<std::size_t>(a)];
    for (int c = 0; c < k; ++c)
      if (count[static_cast<std::size_t>(c)] > 0) centers.col(c) = updated.col(c);
    if (!changed && iter > 0) break;
  }
  return assign;
}

/// Average-linkage agglomeration cut at k clusters. Nearest-neighbour chain
/// produces the exact merge set for this reducible linkage; merges are then
/// replayed in height order with a union-find to cut the dendrogram.
std::vector<int> average_linkage_assign(const Eigen::MatrixXd& x, int k) {
  const std::size_t n = static_cast<std::size_t>(x.cols());
  std::vector<double> dist(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      dist[i * n + j] = dist[j * n + i] =
          (x.col(static_cast<Eigen::Index>(i)) - x.col(static_cast<Eigen::Index>(j))).norm();

  std::vector<std::size_t> size(n, 1);
  std::vector<char> active(n, 1);
  struct Merge {
    std::size_t a, b;
    double height;
  };
  std::vector<Merge> merges;
  std::vector<std::size_t> chain;
  std::size_t remaining = n;
  while (remaining > 1) {
    if (chain.empty()) {
      for (std::size_t i = 0; i < n; ++i)
        if (active[i]) {
          chain.push_back(i);
          break;
        }
    }
    const std::size_t a = chain.back();
    std::size_t b = n;
    double best = std::numeric_limits<double>::infinity();
    if (chain.size() >= 2) {
      b = chain[chain.size() - 2];
      best = dist[a * n + b];
    }
    for (std::size_t j = 0; j < n; ++j) {
      if (!active[j] || j == a) continue;
      if (dist[a * n + j] < best) {
        best = dist[a * n + j];
        b = j;
      }
    }
    if (chain.size() >= 2 && b == chain[chain.size() - 2]) {
      chain.pop_back();
      chain.pop_back();
      const std::size_t keep = std::min(a, b), drop = std::max(a, b);
      merges.push_back({keep, drop, best});
      const double wa = static_cast<double>(size[keep]), wb = static_cast<double>(size[drop]);
      for (std::size_t j = 0; j < n; ++j) {
        if (!active[j] || j == keep || j == drop) continue;
        const double d = (wa * dist[keep * n + j] + wb * dist[drop * n + j]) / (wa + wb);
        dist[keep * n + j] = dist[j * n + keep] = d;
      }
      size[keep] += size[drop];
      active[drop] = 0;
      --remaining;
    } else {
      chain.push_back(b);
    }
  }

  std::stable_sort(merges.begin(), merges.end(),
                   [](const Merge& l, const Merge& r) { return l.height < r.height; });
  std::vector<std::size_t> parent(n);
  std::iota(parent.begin(), parent.end(), 0);
  std::function<std::size_t(std::size_t)> find = [&](std::size_t v) {
    while (parent[v] != v) v = parent[v] = parent[parent[v]];
    return v;
  };
  const std::size_t to_apply = n - static_cast<std::size_t>(k);
  for (std::size_t i = 0; i < to_apply && i < merges.size(); ++i)
    parent[find(merges[i].b)] = find(merges[i].a);

  std::vector<int> assign(n, -1);
  std::vector<std::size_t> roots;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t r = find(i);
    auto it = std::find(roots.begin(), roots.end(), r);
    if (it == roots.end()) {
      roots.push_back(r);
      it = roots.end() - 1;
    }
    assign[i] = static_cast<int>(it - roots.begin());
  }
  return assign;
}

/// Moves points out of clusters larger than `cap`, one at a time, choosing
/// the move with the smallest increase in distance-to-centroid.
void balance(const Eigen::MatrixXd& x, std::vector<int>& assign, int k, std::size_t cap) {
  const Eigen::MatrixXd centers = centroids_of(x, assign, k);
  std::vector<std::size_t> count(static_cast<std::size_t>(k), 0);
  for (int a : assign) ++count[static_cast<std::size_t>(a)];
  while (true) {
    int over = -1;
    for (int c = 0; c < k; ++c)
      if (count[static_cast<std::size_t>(c)] > cap &&
          (over < 0 || count[static_cast<std::size_t>(c)] > count[static_cast<std::size_t>(over)]))
        over = c;
    if (over < 0) break;
    double best_cost = std::numeric_limits<double>::infinity();
    std::size_t best_i = 0;
    int best_to = -1;
    for (std::size_t i = 0; i < assign.size(); ++i) {
      if (assign[i] != over) continue;
      const auto col = x.col(static_cast<Eigen::Index>(i));
      const double here = (col - centers.col(over)).norm();
      for (int c = 0; c < k; ++c) {
        if (c == over || count[static_cast<std::size_t>(c)] >= cap) continue;
        const double cost = (col - centers.col(c)).norm() - here;
        if (cost < best_cost) {
          best_cost = cost;
          best_i = i;
          best_to = c;
        }
      }
    }
    assign[best_i] = best_to;
    --count[static_cast<std::size_t>(over)];
    ++count[static_cast<std::size_t>(best_to)];
  }
}

Parts from_assignment(const std::vector<int>& assign, int k) {
  Parts parts(static_cast<std::size_t>(k));
  for (std::size_t i = 0; i < assign.size(); ++i) parts[static_cast<std::size_t>(assign[i])].push_back(i);
  parts.erase(std::remove_if(parts.begin(), parts.end(), [](const auto& p) { return p.empty(); }),
              parts.end());
  return parts;
}

}  // namespace

std::vector<std::vector<std::size_t>> partition(const CandidatePool& pool, int partition_size,
                                                Partitioner kind, std::uint64_t seed) {
  if (partition_size < 1) throw std::invalid_argument("partition: size must be >= 1");
  const std::size_t n = pool.size();
  if (n == 0) throw std::invalid_argument("partition: nothing to partition");
  const std::size_t cap = static_cast<std::size_t>(partition_size);
  const std::size_t w = (n + cap - 1) / cap;
  if (w == 1) {
    Parts one(1);
    one[0].resize(n);
    std::iota(one[0].begin(), one[0].end(), 0);
    return one;
  }
  switch (kind) {
    case Partitioner::kRandom:
      return random_chunks(n, w, seed);
    case Partitioner::kKMeans: {
      auto assign = kmeans_assign(pool.emb, static_cast<int>(w), seed);
      balance(pool.emb, assign, static_cast<int>(w), cap);
      return from_assignment(assign, static_cast<int>(w));
    }
    case Partitioner::kHierarchical: {
      auto assign = average_linkage_assign(pool.emb, static_cast<int>(w));
      balance(pool.emb, assign, static_cast<int>(w), cap);
      return from_assignment(assign, static_cast<int>(w));
    }
  }
  throw std::logic_error("unreachable partitioner");
}

}  // namespace ltf
