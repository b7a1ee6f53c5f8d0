// Copyright 2026 The forest-smc Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef FOREST_SMC_ESS_HPP
#define FOREST_SMC_ESS_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

/**
 * \file
 * \brief Effective sample size over weight vectors, partitions and interaction matrices.
 *
 * Particle indices are 0-based throughout the library: a system of N particles
 * uses indices 0, ..., N-1.
 */

namespace forest_smc {

/// Strictly positive per-particle masses.
class WeightVector {
 public:
  explicit WeightVector(std::vector<double> values) : values_{std::move(values)} {
    if (values_.empty()) {
      throw std::invalid_argument("WeightVector: must hold at least one value");
    }
    for (const double v : values_) {
      if (!(v > 0.0) || !std::isfinite(v)) {
        throw std::invalid_argument("WeightVector: entries must be finite and strictly positive");
      }
    }
  }
  WeightVector(std::initializer_list<double> values) : WeightVector(std::vector<double>(values)) {}

  [[nodiscard]] std::size_t size() const noexcept { return values_.size(); }
  [[nodiscard]] double operator[](std::size_t i) const { return values_[i]; }
  [[nodiscard]] double at(std::size_t i) const { return values_.at(i); }
  [[nodiscard]] std::span<const double> values() const noexcept { return values_; }
  [[nodiscard]] double sum() const noexcept { return std::accumulate(values_.begin(), values_.end(), 0.0); }

 private:
  std::vector<double> values_;
};

/// A sorted set of particle indices.
class IndexSet {
 public:
  IndexSet() = default;
  explicit IndexSet(std::vector<std::size_t> members) : members_{std::move(members)} {
    std::sort(members_.begin(), members_.end());
    if (std::adjacent_find(members_.begin(), members_.end()) != members_.end()) {
      throw std::invalid_argument("IndexSet: duplicate index");
    }
  }
  IndexSet(std::initializer_list<std::size_t> members) : IndexSet(std::vector<std::size_t>(members)) {}

  /// {0, ..., n-1}.
  static IndexSet range(std::size_t n) {
    std::vector<std::size_t> m(n);
    std::iota(m.begin(), m.end(), std::size_t{0});
    return IndexSet{std::move(m)};
  }

  [[nodiscard]] std::size_t size() const noexcept { return members_.size(); }
  [[nodiscard]] bool empty() const noexcept { return members_.empty(); }
  [[nodiscard]] std::size_t front() const { return members_.front(); }
  [[nodiscard]] std::size_t back() const { return members_.back(); }
  [[nodiscard]] auto begin() const noexcept { return members_.begin(); }
  [[nodiscard]] auto end() const noexcept { return members_.end(); }
  [[nodiscard]] const std::vector<std::size_t>& members() const noexcept { return members_; }
  [[nodiscard]] bool contains(std::size_t i) const { return std::binary_search(members_.begin(), members_.end(), i); }

  [[nodiscard]] bool is_subset_of(const IndexSet& other) const {
    return std::includes(other.members_.begin(), other.members_.end(), members_.begin(), members_.end());
  }

  friend bool operator==(const IndexSet&, const IndexSet&) = default;
  friend auto operator<=>(const IndexSet&, const IndexSet&) = default;

 private:
  std::vector<std::size_t> members_;
};

/// Disjoint nonempty blocks whose union is the ground set.
/**
 * Blocks are stored in canonical order (by smallest member), so two partitions
 * describing the same grouping compare equal.
 */
class Partition {
 public:
  Partition() = default;
  explicit Partition(std::vector<IndexSet> blocks) : blocks_{std::move(blocks)} {
    std::vector<std::size_t> all;
    for (const auto& b : blocks_) {
      if (b.empty()) {
        throw std::invalid_argument("Partition: empty block");
      }
      all.insert(all.end(), b.begin(), b.end());
    }
    std::sort(all.begin(), all.end());
    if (std::adjacent_find(all.begin(), all.end()) != all.end()) {
      throw std::invalid_argument("Partition: blocks overlap");
    }
    ground_ = IndexSet{std::move(all)};
    std::sort(blocks_.begin(), blocks_.end(), [](const IndexSet& a, const IndexSet& b) { return a.front() < b.front(); });
  }
  Partition(std::initializer_list<IndexSet> blocks) : Partition(std::vector<IndexSet>(blocks)) {}

  static Partition singletons(const IndexSet& ground) {
    std::vector<IndexSet> blocks;
    blocks.reserve(ground.size());
    for (const auto i : ground) {
      blocks.push_back(IndexSet{i});
    }
    return Partition{std::move(blocks)};
  }

  static Partition single_block(const IndexSet& ground) {
    if (ground.empty()) {
      return Partition{};
    }
    return Partition{std::vector<IndexSet>{ground}};
  }

  [[nodiscard]] std::size_t size() const noexcept { return blocks_.size(); }
  [[nodiscard]] const std::vector<IndexSet>& blocks() const noexcept { return blocks_; }
  [[nodiscard]] const IndexSet& block(std::size_t k) const { return blocks_.at(k); }
  [[nodiscard]] const IndexSet& ground() const noexcept { return ground_; }

  friend bool operator==(const Partition& a, const Partition& b) { return a.blocks_ == b.blocks_; }

 private:
  std::vector<IndexSet> blocks_;
  IndexSet ground_;
};

/// Dense N x N substochastic matrix with a support set. Intended as a test oracle for small N.
class DenseAlpha {
 public:
  DenseAlpha(std::size_t n, IndexSet support) : n_{n}, support_{std::move(support)}, entries_(n * n, 0.0) {
    if (!support_.empty() && support_.back() >= n) {
      throw std::out_of_range("DenseAlpha: support index out of range");
    }
  }

  static DenseAlpha identity(std::size_t n, const IndexSet& support) {
    DenseAlpha a{n, support};
    for (const auto i : support) {
      a(i, i) = 1.0;
    }
    return a;
  }

  [[nodiscard]] std::size_t dimension() const noexcept { return n_; }
  [[nodiscard]] const IndexSet& support() const noexcept { return support_; }
  double& operator()(std::size_t i, std::size_t j) { return entries_[i * n_ + j]; }
  [[nodiscard]] double operator()(std::size_t i, std::size_t j) const { return entries_[i * n_ + j]; }

  /// Rows and columns over the support sum to one, entries outside support^2 vanish.
  [[nodiscard]] bool is_member(double tol = 1e-12) const {
    for (std::size_t i = 0; i < n_; ++i) {
      const bool in_i = support_.contains(i);
      double row = 0.0;
      double col = 0.0;
      for (std::size_t j = 0; j < n_; ++j) {
        const double aij = (*this)(i, j);
        if (aij < 0.0) {
          return false;
        }
        if ((!in_i || !support_.contains(j)) && aij != 0.0) {
          return false;
        }
        row += aij;
        col += (*this)(j, i);
      }
      const double expected = in_i ? 1.0 : 0.0;
      if (std::abs(row - expected) > tol || std::abs(col - expected) > tol) {
        return false;
      }
    }
    return true;
  }

  [[nodiscard]] bool is_symmetric() const {
    for (std::size_t i = 0; i < n_; ++i) {
      for (std::size_t j = 0; j < i; ++j) {
        if ((*this)(i, j) != (*this)(j, i)) {
          return false;
        }
      }
    }
    return true;
  }

  /// Sum of two members with disjoint supports.
  friend DenseAlpha operator+(const DenseAlpha& a, const DenseAlpha& b) {
    if (a.n_ != b.n_) {
      throw std::invalid_argument("DenseAlpha: dimension mismatch");
    }
    std::vector<std::size_t> joint = a.support_.members();
    joint.insert(joint.end(), b.support_.begin(), b.support_.end());
    DenseAlpha sum{a.n_, IndexSet{std::move(joint)}};
    for (std::size_t k = 0; k < sum.entries_.size(); ++k) {
      sum.entries_[k] = a.entries_[k] + b.entries_[k];
    }
    return sum;
  }

 private:
  std::size_t n_;
  IndexSet support_;
  std::vector<double> entries_;
};

/// Leaf count and mass of a group of particles; all partition-level ESS math runs on these.
struct BlockStat {
  std::size_t count{0};
  double mass{0.0};

  BlockStat& operator+=(const BlockStat& other) noexcept {
    count += other.count;
    mass += other.mass;
    return *this;
  }
  friend BlockStat operator+(BlockStat a, const BlockStat& b) noexcept { return a += b; }
  [[nodiscard]] double mean() const noexcept { return mass / static_cast<double>(count); }
  friend bool operator==(const BlockStat&, const BlockStat&) = default;
};

/// ESS of the weight vector in which each block's particles all carry the block mean.
/**
 * A single block returns its count exactly; no rounding can push it below the
 * maximum, which the coarsening searches rely on for termination.
 */
inline double ess_of_blocks(std::span<const BlockStat> blocks) {
  if (blocks.empty()) {
    return 0.0;
  }
  if (blocks.size() == 1) {
    return static_cast<double>(blocks.front().count);
  }
  double total = 0.0;
  double squares = 0.0;
  for (const auto& b : blocks) {
    total += b.mass;
    squares += b.mass * b.mass / static_cast<double>(b.count);
  }
  return total * total / squares;
}

/// ess_of_blocks divided by the total count; in [0, 1].
inline double rho_of_blocks(std::span<const BlockStat> blocks) {
  if (blocks.empty()) {
    return 0.0;
  }
  if (blocks.size() == 1) {
    return 1.0;
  }
  std::size_t count = 0;
  for (const auto& b : blocks) {
    count += b.count;
  }
  return ess_of_blocks(blocks) / static_cast<double>(count);
}

inline BlockStat block_stat(const IndexSet& block, const WeightVector& c) {
  BlockStat s{block.size(), 0.0};
  for (const auto j : block) {
    if (j >= c.size()) {
      throw std::out_of_range("block index " + std::to_string(j) + " outside weight vector");
    }
    s.mass += c[j];
  }
  return s;
}

inline std::vector<BlockStat> block_stats(const Partition& p, const WeightVector& c) {
  std::vector<BlockStat> stats;
  stats.reserve(p.size());
  for (const auto& b : p.blocks()) {
    stats.push_back(block_stat(b, c));
  }
  return stats;
}

/// Classical ESS (sum w)^2 / sum w^2 of a weight sequence.
inline double ess_of_weights(std::span<const double> w) {
  double total = 0.0;
  double squares = 0.0;
  for (const double x : w) {
    total += x;
    squares += x * x;
  }
  return squares > 0.0 ? total * total / squares : 0.0;
}

/// Generalized ESS of a dense interaction matrix: ESS of the row-mixed masses a c.
inline double ess_dense(const DenseAlpha& a, const WeightVector& c) {
  if (a.dimension() != c.size()) {
    throw std::invalid_argument("ess_dense: matrix dimension does not match weight vector");
  }
  if (a.support().empty()) {
    return 0.0;
  }
  const std::size_t n = a.dimension();
  std::vector<double> mixed(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      s += a(i, j) * c[j];
    }
    mixed[i] = s;
  }
  return ess_of_weights(mixed);
}

/// Generalized ESS of the block-diagonal matrix a partition induces, from block sums only.
inline double ess_partition(const Partition& p, const WeightVector& c) {
  const auto stats = block_stats(p, c);
  return ess_of_blocks(stats);
}

inline double rho(const Partition& p, const WeightVector& c) {
  const auto stats = block_stats(p, c);
  return rho_of_blocks(stats);
}

/// Matrix with entry 1/|S| where i and j share block S, zero elsewhere.
inline DenseAlpha partition_to_matrix(const Partition& p, std::size_t n) {
  if (!p.ground().empty() && p.ground().back() >= n) {
    throw std::out_of_range("partition_to_matrix: index outside dimension");
  }
  DenseAlpha a{n, p.ground()};
  for (const auto& b : p.blocks()) {
    const double v = 1.0 / static_cast<double>(b.size());
    for (const auto i : b) {
      for (const auto j : b) {
        a(i, j) = v;
      }
    }
  }
  return a;
}

/// True iff every block of `fine` lies inside some block of `coarse`.
inline bool is_coarsening(const Partition& fine, const Partition& coarse) {
  if (fine.ground() != coarse.ground()) {
    throw std::invalid_argument("is_coarsening: partitions have different ground sets");
  }
  for (const auto& b : fine.blocks()) {
    const auto it = std::find_if(coarse.blocks().begin(), coarse.blocks().end(),
                                 [&](const IndexSet& cb) { return cb.contains(b.front()); });
    if (it == coarse.blocks().end() || !b.is_subset_of(*it)) {
      return false;
    }
  }
  return true;
}

/// Recursive partition selection with a guaranteed ESS floor.
/**
 * `splitter(v, threshold, c)` must return a partition of `v` whose rho is at
 * least `threshold`; the single block {v} always qualifies. If the choice is
 * {v} the recursion stops, otherwise each block is refined further with the
 * threshold divided by the achieved rho. The union of the returned blocks has
 * ess_partition(result, c) >= tau * |v|.
 */
template <typename Splitter>
Partition choose_a_reference(const IndexSet& v, double tau, const WeightVector& c, Splitter&& splitter) {
  if (v.empty()) {
    throw std::invalid_argument("choose_a_reference: empty index set");
  }
  if (!(tau >= 0.0 && tau <= 1.0)) {
    throw std::invalid_argument("choose_a_reference: tau must lie in [0, 1]");
  }
  if (v.size() == 1) {
    return Partition::single_block(v);
  }
  const Partition p = splitter(v, tau, c);
  if (p.ground() != v) {
    throw std::logic_error("choose_a_reference: splitter returned a partition of a different set");
  }
  const double r = rho(p, c);
  if (!(r >= tau)) {
    throw std::logic_error("choose_a_reference: splitter missed the rho threshold");
  }
  if (p.size() == 1) {
    return p;
  }
  const double next = std::min(1.0, tau / r);
  std::vector<IndexSet> blocks;
  for (const auto& b : p.blocks()) {
    const auto sub = choose_a_reference(b, next, c, splitter);
    blocks.insert(blocks.end(), sub.blocks().begin(), sub.blocks().end());
  }
  return Partition{std::move(blocks)};
}

}  // namespace forest_smc

#endif  // FOREST_SMC_ESS_HPP
