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

#ifndef FOREST_SMC_TESTS_SUPPORT_HPP
#define FOREST_SMC_TESTS_SUPPORT_HPP

// Generators and brute-force oracles shared by the unit and acceptance suites.
// Nothing here calls into the code path it is used to check.

#include <forest_smc/ess.hpp>
#include <forest_smc/tree.hpp>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <map>
#include <numeric>
#include <random>
#include <utility>
#include <vector>

namespace forest_smc::testing {

using Rng = std::mt19937_64;

inline double uniform(Rng& rng, double lo = 0.0, double hi = 1.0) {
  return std::uniform_real_distribution<double>{lo, hi}(rng);
}

inline std::size_t uniform_index(Rng& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>{lo, hi}(rng);
}

/// Positive weights with a wide dynamic range (log-uniform over four decades).
inline WeightVector random_weights(Rng& rng, std::size_t n) {
  std::vector<double> c(n);
  for (auto& x : c) {
    x = std::pow(10.0, uniform(rng, -2.0, 2.0));
  }
  return WeightVector{std::move(c)};
}

/// Random subset of {0..n-1} of the given size.
inline IndexSet random_subset(Rng& rng, std::size_t n, std::size_t size) {
  std::vector<std::size_t> all(n);
  std::iota(all.begin(), all.end(), std::size_t{0});
  std::shuffle(all.begin(), all.end(), rng);
  all.resize(size);
  return IndexSet{std::move(all)};
}

/// Random member of A_V: a convex combination of permutation matrices on V.
inline DenseAlpha random_alpha(Rng& rng, std::size_t n, const IndexSet& v) {
  DenseAlpha a{n, v};
  if (v.empty()) {
    return a;
  }
  const std::size_t terms = uniform_index(rng, 1, 4);
  std::vector<double> lambda(terms);
  for (auto& l : lambda) {
    l = uniform(rng, 0.05, 1.0);
  }
  const double total = std::accumulate(lambda.begin(), lambda.end(), 0.0);
  std::vector<std::size_t> members = v.members();
  for (std::size_t t = 0; t < terms; ++t) {
    auto perm = members;
    std::shuffle(perm.begin(), perm.end(), rng);
    for (std::size_t k = 0; k < members.size(); ++k) {
      a(members[k], perm[k]) += lambda[t] / total;
    }
  }
  return a;
}

/// The constant 1/|V| block on V.
inline DenseAlpha uniform_alpha(std::size_t n, const IndexSet& v) {
  DenseAlpha a{n, v};
  for (const auto i : v) {
    for (const auto j : v) {
      a(i, j) = 1.0 / static_cast<double>(v.size());
    }
  }
  return a;
}

/// Random partition of `ground` by random labels.
inline Partition random_partition(Rng& rng, const IndexSet& ground) {
  const std::size_t k = uniform_index(rng, 1, ground.size());
  std::map<std::size_t, std::vector<std::size_t>> by_label;
  for (const auto i : ground) {
    by_label[uniform_index(rng, 0, k - 1)].push_back(i);
  }
  std::vector<IndexSet> blocks;
  for (auto& [label, members] : by_label) {
    blocks.emplace_back(std::move(members));
  }
  return Partition{std::move(blocks)};
}

/// Merges two distinct random blocks (p must have at least two).
inline Partition merge_random_pair(Rng& rng, const Partition& p) {
  const std::size_t a = uniform_index(rng, 0, p.size() - 1);
  std::size_t b = uniform_index(rng, 0, p.size() - 2);
  if (b >= a) {
    ++b;
  }
  std::vector<IndexSet> blocks;
  std::vector<std::size_t> merged = p.block(a).members();
  merged.insert(merged.end(), p.block(b).begin(), p.block(b).end());
  blocks.emplace_back(std::move(merged));
  for (std::size_t k = 0; k < p.size(); ++k) {
    if (k != a && k != b) {
      blocks.push_back(p.block(k));
    }
  }
  return Partition{std::move(blocks)};
}

/// Random coarsening: a random number of random pair merges.
inline Partition random_coarsening(Rng& rng, const Partition& p) {
  Partition q = p;
  const std::size_t merges = uniform_index(rng, 0, p.size() - 1);
  for (std::size_t m = 0; m < merges; ++m) {
    q = merge_random_pair(rng, q);
  }
  return q;
}

/// Generalized ESS straight from its matrix definition, for a partition.
inline double dense_ess_of_partition(const Partition& p, const WeightVector& c) {
  const std::size_t n = c.size();
  std::vector<double> mixed(n, 0.0);
  for (const auto& b : p.blocks()) {
    for (const auto i : b) {
      for (const auto j : b) {
        mixed[i] += c[j] / static_cast<double>(b.size());
      }
    }
  }
  double s = 0.0;
  double q = 0.0;
  for (const double x : mixed) {
    s += x;
    q += x * x;
  }
  return p.size() == 0 ? 0.0 : s * s / q;
}

/// All pairings of {0..2m-1}, each as a list of index pairs.
inline void enumerate_pairings(std::vector<std::size_t> rest, std::vector<std::pair<std::size_t, std::size_t>>& current,
                               const std::function<void(const std::vector<std::pair<std::size_t, std::size_t>>&)>& visit) {
  if (rest.empty()) {
    visit(current);
    return;
  }
  const std::size_t first = rest.front();
  for (std::size_t k = 1; k < rest.size(); ++k) {
    std::vector<std::size_t> next;
    for (std::size_t j = 1; j < rest.size(); ++j) {
      if (j != k) {
        next.push_back(rest[j]);
      }
    }
    current.emplace_back(first, rest[k]);
    enumerate_pairings(next, current, visit);
    current.pop_back();
  }
}

/// Random tree shape with `n` leaves: each internal node gets 1..max_children children.
inline Shape random_shape(Rng& rng, std::size_t n, std::size_t max_children = 5) {
  if (n == 1) {
    // Occasionally wrap a leaf in a unary chain.
    if (uniform(rng) < 0.1) {
      Shape s;
      s.children.push_back(Shape{});
      return s;
    }
    return Shape{};
  }
  std::size_t k = uniform_index(rng, 2, std::min(max_children, n));
  std::vector<std::size_t> sizes(k, 1);
  for (std::size_t extra = n - k; extra > 0; --extra) {
    ++sizes[uniform_index(rng, 0, k - 1)];
  }
  Shape s;
  for (const auto m : sizes) {
    s.children.push_back(random_shape(rng, m, max_children));
  }
  return s;
}

/// Flat inverse-CDF oracle over an explicit ordered index list.
inline std::size_t flat_inverse_cdf(const std::vector<std::size_t>& indices, const WeightVector& c, double u) {
  double total = 0.0;
  for (const auto i : indices) {
    total += c[i];
  }
  double cum = 0.0;
  for (const auto i : indices) {
    cum += c[i];
    if (cum >= u * total) {
      return i;
    }
  }
  return indices.back();
}

}  // namespace forest_smc::testing

#endif  // FOREST_SMC_TESTS_SUPPORT_HPP
