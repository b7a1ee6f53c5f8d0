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

#ifndef FOREST_SMC_SELECTION_HPP
#define FOREST_SMC_SELECTION_HPP

#include <forest_smc/ess.hpp>
#include <forest_smc/tree.hpp>

#include <algorithm>
#include <array>
#include <cstddef>
#include <numeric>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

/**
 * \file
 * \brief Adaptive forest selection with an effective-sample-size floor.
 *
 * At every node the children's leaf sets form the finest candidate partition.
 * A strategy produces successively coarser candidates until one reaches the
 * current rho threshold; merged groups become transient nodes, and singleton
 * groups are refined recursively with the threshold divided by the rho achieved.
 */

namespace forest_smc {

enum class Strategy { kPairing, kMatching, kMatchingExact, kArpf, kTwoLevel };

inline constexpr std::array<Strategy, 5> kAllStrategies{Strategy::kPairing, Strategy::kMatching,
                                                         Strategy::kMatchingExact, Strategy::kArpf,
                                                         Strategy::kTwoLevel};

inline std::string_view to_string(Strategy s) {
  switch (s) {
    case Strategy::kPairing:
      return "pairing";
    case Strategy::kMatching:
      return "matching";
    case Strategy::kMatchingExact:
      return "matching-exact";
    case Strategy::kArpf:
      return "arpf";
    case Strategy::kTwoLevel:
      return "two-level";
  }
  return "unknown";
}

inline Strategy parse_strategy(std::string_view name) {
  for (const auto s : kAllStrategies) {
    if (to_string(s) == name) {
      return s;
    }
  }
  throw std::invalid_argument("unknown strategy: " + std::string{name});
}

/// A grouping of K ordered items (tree children or partition blocks).
/**
 * `members[g]` lists item positions in group g, `stats[g]` their summed
 * (count, mass) and `keys[g]` the smallest item key, which breaks ties.
 * Groups are kept sorted by key.
 */
struct Grouping {
  std::vector<std::vector<std::size_t>> members;
  std::vector<BlockStat> stats;
  std::vector<std::size_t> keys;

  /// Finest grouping: one group per item.
  static Grouping finest(std::span<const BlockStat> items, std::span<const std::size_t> item_keys) {
    Grouping g;
    std::vector<std::size_t> order(items.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return item_keys[a] < item_keys[b]; });
    for (const auto k : order) {
      g.members.push_back({k});
      g.stats.push_back(items[k]);
      g.keys.push_back(item_keys[k]);
    }
    return g;
  }

  /// Single group over all items.
  [[nodiscard]] Grouping merged_all() const {
    Grouping g;
    std::vector<std::size_t> all;
    BlockStat s{};
    for (std::size_t k = 0; k < members.size(); ++k) {
      all.insert(all.end(), members[k].begin(), members[k].end());
      s += stats[k];
    }
    std::sort(all.begin(), all.end());
    g.members.push_back(std::move(all));
    g.stats.push_back(s);
    g.keys.push_back(*std::min_element(keys.begin(), keys.end()));
    return g;
  }

  [[nodiscard]] std::size_t size() const noexcept { return members.size(); }
  [[nodiscard]] double rho() const { return rho_of_blocks(stats); }
};

namespace detail {

inline Grouping assemble(const Grouping& from, const std::vector<std::vector<std::size_t>>& group_sets) {
  std::vector<std::size_t> order(group_sets.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<std::size_t> set_keys(group_sets.size());
  for (std::size_t s = 0; s < group_sets.size(); ++s) {
    std::size_t key = from.keys[group_sets[s].front()];
    for (const auto g : group_sets[s]) {
      key = std::min(key, from.keys[g]);
    }
    set_keys[s] = key;
  }
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return set_keys[a] < set_keys[b]; });
  Grouping out;
  for (const auto s : order) {
    std::vector<std::size_t> items;
    BlockStat stat{};
    for (const auto g : group_sets[s]) {
      items.insert(items.end(), from.members[g].begin(), from.members[g].end());
      stat += from.stats[g];
    }
    std::sort(items.begin(), items.end());
    out.members.push_back(std::move(items));
    out.stats.push_back(stat);
    out.keys.push_back(set_keys[s]);
  }
  return out;
}

inline Grouping merge_two(const Grouping& from, std::size_t a, std::size_t b) {
  std::vector<std::vector<std::size_t>> sets;
  sets.push_back({a, b});
  for (std::size_t g = 0; g < from.size(); ++g) {
    if (g != a && g != b) {
      sets.push_back({g});
    }
  }
  return assemble(from, sets);
}

}  // namespace detail

/// Variance-reduction score of merging two groups: |a||b|/(|a|+|b|) (mean_a - mean_b)^2.
inline double merge_gain(const BlockStat& a, const BlockStat& b) {
  const auto na = static_cast<double>(a.count);
  const auto nb = static_cast<double>(b.count);
  const double d = a.mean() - b.mean();
  return na * nb / (na + nb) * d * d;
}

/// Optimal pairing: sort by mass (ties by key), pair smallest with largest, and so on inward.
inline Grouping pair_groups(const Grouping& g) {
  if (g.size() % 2 != 0) {
    throw std::invalid_argument("pairing: odd number of blocks (" + std::to_string(g.size()) + ")");
  }
  for (const auto& s : g.stats) {
    if (s.count != g.stats.front().count) {
      throw std::invalid_argument("pairing: blocks have unequal sizes");
    }
  }
  std::vector<std::size_t> order(g.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (g.stats[a].mass != g.stats[b].mass) {
      return g.stats[a].mass < g.stats[b].mass;
    }
    return g.keys[a] < g.keys[b];
  });
  const std::size_t m = g.size() / 2;
  std::vector<std::vector<std::size_t>> sets;
  for (std::size_t i = 0; i < m; ++i) {
    sets.push_back({order[i], order[g.size() - 1 - i]});
  }
  return detail::assemble(g, sets);
}

/// Merge the group of least mean with the group of greatest mean.
/**
 * Ties go to the lowest key on both sides; when every mean is equal the first
 * and last groups (by key) are merged.
 */
inline Grouping match_groups(const Grouping& g) {
  if (g.size() < 2) {
    throw std::invalid_argument("matching: need at least two blocks");
  }
  std::size_t lo = 0;
  std::size_t hi = 0;
  for (std::size_t k = 1; k < g.size(); ++k) {
    const double m = g.stats[k].mean();
    if (m < g.stats[lo].mean()) {
      lo = k;
    }
    if (m > g.stats[hi].mean()) {
      hi = k;
    }
  }
  if (lo == hi) {
    lo = 0;
    hi = g.size() - 1;
  }
  return detail::merge_two(g, lo, hi);
}

/// Merge the pair of groups with the largest merge_gain; ties go to the first pair in key order.
inline Grouping match_groups_exact(const Grouping& g) {
  if (g.size() < 2) {
    throw std::invalid_argument("matching: need at least two blocks");
  }
  std::size_t best_a = 0;
  std::size_t best_b = 1;
  double best = -1.0;
  for (std::size_t a = 0; a < g.size(); ++a) {
    for (std::size_t b = a + 1; b < g.size(); ++b) {
      const double gain = merge_gain(g.stats[a], g.stats[b]);
      if (gain > best) {
        best = gain;
        best_a = a;
        best_b = b;
      }
    }
  }
  return detail::merge_two(g, best_a, best_b);
}

/// One coarsening step of `strategy`. ARPF has no stepwise form.
inline Grouping coarsen(const Grouping& g, Strategy strategy) {
  switch (strategy) {
    case Strategy::kPairing:
      return pair_groups(g);
    case Strategy::kMatching:
      return match_groups(g);
    case Strategy::kMatchingExact:
      return match_groups_exact(g);
    case Strategy::kTwoLevel:
      return g.merged_all();
    case Strategy::kArpf:
      break;
  }
  throw std::invalid_argument("coarsen: strategy " + std::string{to_string(strategy)} + " has no coarsening step");
}

/// Successively coarser groupings P0, P1, ... and the index of the first with rho >= tau.
struct CoarseningTrace {
  std::vector<Grouping> candidates;
  std::vector<double> rhos;
  std::size_t accepted{0};

  [[nodiscard]] const Grouping& chosen() const { return candidates.at(accepted); }
  [[nodiscard]] double chosen_rho() const { return rhos.at(accepted); }
};

namespace detail {

inline bool is_power_of_two(std::size_t k) { return k != 0 && (k & (k - 1)) == 0; }

}  // namespace detail

/// Runs the strategy from `start` until the rho threshold is met. A single group always qualifies.
inline CoarseningTrace coarsening_trace(Grouping start, double tau, Strategy strategy) {
  if (strategy == Strategy::kPairing && !detail::is_power_of_two(start.size())) {
    throw std::invalid_argument("pairing: block count " + std::to_string(start.size()) + " is not a power of two");
  }
  if (strategy == Strategy::kPairing) {
    for (const auto& s : start.stats) {
      if (s.count != start.stats.front().count) {
        throw std::invalid_argument("pairing: blocks have unequal sizes");
      }
    }
  }
  CoarseningTrace trace;
  trace.candidates.push_back(std::move(start));
  for (;;) {
    const auto& current = trace.candidates.back();
    const double r = current.rho();
    trace.rhos.push_back(r);
    if (current.size() == 1 || r >= tau) {
      trace.accepted = trace.candidates.size() - 1;
      return trace;
    }
    trace.candidates.push_back(coarsen(current, strategy));
  }
}

namespace detail {

inline Grouping grouping_of(const Partition& p, const WeightVector& c) {
  const auto stats = block_stats(p, c);
  std::vector<std::size_t> keys;
  keys.reserve(p.size());
  for (const auto& b : p.blocks()) {
    keys.push_back(b.front());
  }
  return Grouping::finest(stats, keys);
}

inline Partition partition_of(const Partition& base, const Grouping& g) {
  std::vector<IndexSet> blocks;
  for (const auto& items : g.members) {
    std::vector<std::size_t> m;
    for (const auto k : items) {
      m.insert(m.end(), base.block(k).begin(), base.block(k).end());
    }
    blocks.emplace_back(std::move(m));
  }
  return Partition{std::move(blocks)};
}

}  // namespace detail

/// Optimal pairing of an even number of equal-size blocks.
inline Partition pairing_step(const Partition& p, const WeightVector& c) {
  return detail::partition_of(p, pair_groups(detail::grouping_of(p, c)));
}

/// Merge the blocks of least and greatest mean.
inline Partition matching_step(const Partition& p, const WeightVector& c) {
  return detail::partition_of(p, match_groups(detail::grouping_of(p, c)));
}

/// Merge the two blocks with the largest merge_gain.
inline Partition matching_exact_step(const Partition& p, const WeightVector& c) {
  return detail::partition_of(p, match_groups_exact(detail::grouping_of(p, c)));
}

/// merge_gain of blocks k and l of `p` (canonical block order).
inline double merge_gain(const Partition& p, std::size_t k, std::size_t l, const WeightVector& c) {
  if (k == l) {
    throw std::invalid_argument("merge_gain: k and l must differ");
  }
  return merge_gain(block_stat(p.block(k), c), block_stat(p.block(l), c));
}

/// Partition-level trace from `start` (used by tests and the reference recursion).
inline std::vector<Partition> coarsening_partitions(const Partition& start, const WeightVector& c, double tau,
                                                    Strategy strategy, std::size_t* accepted = nullptr) {
  const auto trace = coarsening_trace(detail::grouping_of(start, c), tau, strategy);
  std::vector<Partition> out;
  for (const auto& g : trace.candidates) {
    out.push_back(detail::partition_of(start, g));
  }
  if (accepted != nullptr) {
    *accepted = trace.accepted;
  }
  return out;
}

/// Records, per visited node, what choose_forest looked at.
struct SelectionProbe {
  struct Visit {
    NodeId node{kNoNode};
    std::size_t child_count{0};
    std::size_t candidates{0};
    std::vector<NodeId> values_read;
  };
  std::vector<Visit> visits;
};

/// Identity forest over `node` if its leaves' own ESS reaches tau |l(node)|, else {S(node)}.
inline Forest arpf_select(const Tree& tree, NodeId node, double tau) {
  std::vector<double> masses;
  std::vector<NodeId> leaves;
  tree.for_each_leaf(node, [&](std::size_t i) {
    masses.push_back(tree.value(tree.leaf(i)).mass);
    leaves.push_back(tree.leaf(i));
  });
  if (ess_of_weights(masses) >= tau * static_cast<double>(masses.size())) {
    return Forest{tree, std::move(leaves)};
  }
  return Forest::whole(tree, node);
}

inline Forest arpf_select(const Tree& tree, double tau) { return arpf_select(tree, tree.root(), tau); }

namespace detail {

inline void choose_forest_into(Tree& tree, NodeId node, double tau, Strategy strategy, std::vector<NodeId>& roots,
                               SelectionProbe* probe) {
  if (tree.is_leaf(node)) {
    roots.push_back(node);
    return;
  }
  const std::vector<NodeId> kids(tree.children(node).begin(), tree.children(node).end());
  std::vector<BlockStat> stats;
  std::vector<std::size_t> keys;
  stats.reserve(kids.size());
  for (std::size_t k = 0; k < kids.size(); ++k) {
    stats.push_back(tree.value(kids[k]));
    keys.push_back(k);
  }
  const auto trace = coarsening_trace(Grouping::finest(stats, keys), tau, strategy);
  if (probe != nullptr) {
    probe->visits.push_back({node, kids.size(), trace.candidates.size(), kids});
  }
  const auto& chosen = trace.chosen();
  if (chosen.size() == 1) {
    roots.push_back(node);
    return;
  }
  const double next = std::min(1.0, tau / trace.chosen_rho());
  for (const auto& items : chosen.members) {
    if (items.size() > 1) {
      std::vector<NodeId> group;
      group.reserve(items.size());
      for (const auto k : items) {
        group.push_back(kids[k]);
      }
      roots.push_back(tree.add_transient(std::move(group)));
    } else {
      choose_forest_into(tree, kids[items.front()], next, strategy, roots, probe);
    }
  }
}

}  // namespace detail

/// Forest over leaves(node) whose induced ESS is at least tau |leaves(node)|.
/**
 * Requires `node`'s subtree to be populated. May append transient nodes to
 * the arena; they live until the next Tree::set_leaf_values or clear_transient.
 * With Strategy::kArpf the decision is the all-or-nothing rule of arpf_select.
 */
inline Forest choose_forest(Tree& tree, NodeId node, double tau, Strategy strategy, SelectionProbe* probe = nullptr) {
  if (!(tau >= 0.0 && tau <= 1.0)) {
    throw std::invalid_argument("choose_forest: tau must lie in [0, 1]");
  }
  if (strategy == Strategy::kArpf) {
    return arpf_select(tree, node, tau);
  }
  std::vector<NodeId> roots;
  detail::choose_forest_into(tree, node, tau, strategy, roots, probe);
  return Forest{tree, std::move(roots)};
}

}  // namespace forest_smc

#endif  // FOREST_SMC_SELECTION_HPP
