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

#ifndef FOREST_SMC_TREE_HPP
#define FOREST_SMC_TREE_HPP

#include <forest_smc/ess.hpp>

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <ostream>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

/**
 * \file
 * \brief Arena-held trees and forests describing the logical device topology.
 *
 * Leaves are particles, their parents are devices, and everything above is
 * network structure. Each node stores (leaf count, leaf mass) once populated.
 */

namespace forest_smc {

/// Handle of a node inside a Tree arena.
enum class NodeId : std::uint32_t {};

inline constexpr NodeId kNoNode{std::numeric_limits<std::uint32_t>::max()};

[[nodiscard]] constexpr std::size_t to_index(NodeId id) noexcept { return static_cast<std::size_t>(id); }

/// (number of descendant leaves, sum of their masses).
using NodeValue = BlockStat;

struct Node {
  std::vector<NodeId> children;
  std::optional<NodeValue> value;
  std::optional<std::size_t> leaf_index;
  NodeId parent{kNoNode};
  bool transient{false};

  [[nodiscard]] bool is_leaf() const noexcept { return children.empty(); }
};

/// Explicit nested tree shape; a node without children is a leaf.
struct Shape {
  std::vector<Shape> children;

  [[nodiscard]] std::size_t leaf_count() const {
    if (children.empty()) {
      return 1;
    }
    std::size_t n = 0;
    for (const auto& c : children) {
      n += c.leaf_count();
    }
    return n;
  }
};

/// How to lay out a tree: uniform per-level branching, or an explicit shape.
struct BranchingSpec {
  /// Children per node at each depth, root first. Ignored when `shape` is set.
  std::vector<std::size_t> levels;
  std::optional<Shape> shape;
  /// Depth of the device nodes; 0 means "the parents of the leaves".
  std::size_t device_level{0};
  /// Particle index carried by each leaf position (left to right). Empty means identity.
  std::vector<std::size_t> permutation;

  static BranchingSpec uniform(std::vector<std::size_t> levels) {
    BranchingSpec s;
    s.levels = std::move(levels);
    return s;
  }

  static BranchingSpec from_shape(Shape shape) {
    BranchingSpec s;
    s.shape = std::move(shape);
    return s;
  }

  [[nodiscard]] std::size_t leaf_count() const {
    if (shape) {
      return shape->leaf_count();
    }
    return std::accumulate(levels.begin(), levels.end(), std::size_t{1}, std::multiplies<>{});
  }

  /// Depth of the device layer, resolving the default.
  [[nodiscard]] std::size_t device_depth() const {
    if (device_level != 0) {
      return device_level;
    }
    return levels.empty() ? 0 : levels.size() - 1;
  }

  void validate() const {
    if (!shape) {
      if (levels.empty()) {
        throw std::invalid_argument("BranchingSpec: no levels given");
      }
      for (const auto l : levels) {
        if (l == 0) {
          throw std::invalid_argument("BranchingSpec: zero children at a level");
        }
      }
      if (device_level > levels.size()) {
        throw std::invalid_argument("BranchingSpec: device level deeper than the tree");
      }
    }
    if (!permutation.empty()) {
      const std::size_t n = leaf_count();
      if (permutation.size() != n) {
        throw std::invalid_argument("BranchingSpec: permutation length " + std::to_string(permutation.size()) +
                                    " does not match leaf count " + std::to_string(n));
      }
      std::vector<bool> seen(n, false);
      for (const auto p : permutation) {
        if (p >= n || seen[p]) {
          throw std::invalid_argument("BranchingSpec: permutation is not a bijection");
        }
        seen[p] = true;
      }
    }
  }
};

/// Uniformly random particle-to-leaf assignment.
template <typename Rng>
std::vector<std::size_t> random_leaf_permutation(std::size_t n, Rng& rng) {
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::shuffle(perm.begin(), perm.end(), rng);
  return perm;
}

/// Permutation that shuffles whole device blocks and keeps particles contiguous within each.
template <typename Rng>
std::vector<std::size_t> device_shuffle_permutation(const BranchingSpec& spec, Rng& rng) {
  spec.validate();
  if (spec.shape) {
    throw std::invalid_argument("device_shuffle_permutation: requires a uniform branching spec");
  }
  const std::size_t depth = spec.device_depth();
  const auto mid = spec.levels.begin() + static_cast<std::ptrdiff_t>(depth);
  const std::size_t devices = std::accumulate(spec.levels.begin(), mid, std::size_t{1}, std::multiplies<>{});
  const std::size_t per_device = std::accumulate(mid, spec.levels.end(), std::size_t{1}, std::multiplies<>{});
  std::vector<std::size_t> order(devices);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::size_t> perm;
  perm.reserve(devices * per_device);
  for (const auto d : order) {
    for (std::size_t o = 0; o < per_device; ++o) {
      perm.push_back(d * per_device + o);
    }
  }
  return perm;
}

/// A tree in an arena. Nodes appended after construction are transient and dropped on the next reset.
class Tree {
 public:
  static Tree build(const BranchingSpec& spec) {
    spec.validate();
    Tree t;
    const std::size_t n = spec.leaf_count();
    t.leaf_of_particle_.assign(n, kNoNode);
    std::size_t next_leaf = 0;
    const auto particle_at = [&](std::size_t position) {
      return spec.permutation.empty() ? position : spec.permutation[position];
    };
    if (spec.shape) {
      t.root_ = t.build_shape(*spec.shape, kNoNode, next_leaf, particle_at);
    } else {
      t.root_ = t.build_levels(spec.levels, 0, kNoNode, next_leaf, particle_at);
    }
    t.base_size_ = t.nodes_.size();
    return t;
  }

  [[nodiscard]] NodeId root() const noexcept { return root_; }
  [[nodiscard]] std::size_t leaf_count() const noexcept { return leaf_of_particle_.size(); }
  [[nodiscard]] std::size_t node_count() const noexcept { return nodes_.size(); }
  [[nodiscard]] std::size_t base_node_count() const noexcept { return base_size_; }

  [[nodiscard]] const Node& node(NodeId id) const { return nodes_.at(to_index(id)); }
  [[nodiscard]] std::span<const NodeId> children(NodeId id) const { return node(id).children; }
  [[nodiscard]] bool is_leaf(NodeId id) const { return node(id).is_leaf(); }

  /// Leaf node carrying particle `i`.
  [[nodiscard]] NodeId leaf(std::size_t i) const { return leaf_of_particle_.at(i); }

  [[nodiscard]] const NodeValue& value(NodeId id) const {
    const auto& v = node(id).value;
    if (!v) {
      throw std::logic_error("node " + std::to_string(to_index(id)) + " has no value; populate first");
    }
    return *v;
  }
  [[nodiscard]] bool has_value(NodeId id) const { return node(id).value.has_value(); }

  /// Sets leaf values (1, c[i]), clears every internal value and drops transient nodes.
  void set_leaf_values(const WeightVector& c) {
    if (c.size() != leaf_count()) {
      throw std::invalid_argument("set_leaf_values: expected " + std::to_string(leaf_count()) + " values, got " +
                                  std::to_string(c.size()));
    }
    clear_transient();
    for (auto& nd : nodes_) {
      nd.value.reset();
    }
    for (std::size_t i = 0; i < c.size(); ++i) {
      nodes_[to_index(leaf_of_particle_[i])].value = NodeValue{1, c[i]};
    }
  }

  /// Bottom-up reduction: every internal node under `id` receives the componentwise sum of its children.
  NodeValue populate(NodeId id) {
    auto& nd = nodes_.at(to_index(id));
    if (nd.is_leaf()) {
      if (!nd.value) {
        throw std::logic_error("populate: leaf " + std::to_string(to_index(id)) + " has no value");
      }
      return *nd.value;
    }
    NodeValue sum{};
    for (const auto child : nd.children) {
      sum += populate(child);
    }
    nd.value = sum;
    return sum;
  }

  /// Sorted particle indices under `id`.
  [[nodiscard]] IndexSet leaves(NodeId id) const {
    std::vector<std::size_t> out;
    collect_leaves(id, out);
    return IndexSet{std::move(out)};
  }

  /// Calls `fn(particle)` for every leaf under `id` in left-to-right order.
  template <typename Fn>
  void for_each_leaf(NodeId id, Fn&& fn) const {
    const auto& nd = node(id);
    if (nd.is_leaf()) {
      fn(*nd.leaf_index);
      return;
    }
    for (const auto c : nd.children) {
      for_each_leaf(c, fn);
    }
  }

  /// Appends a transient node over `kids`, valued by the componentwise sum of theirs.
  NodeId add_transient(std::vector<NodeId> kids) {
    if (kids.empty()) {
      throw std::invalid_argument("add_transient: a transient node needs children");
    }
    NodeValue sum{};
    for (const auto k : kids) {
      sum += value(k);
    }
    Node nd;
    nd.children = std::move(kids);
    nd.value = sum;
    nd.transient = true;
    nodes_.push_back(std::move(nd));
    return static_cast<NodeId>(nodes_.size() - 1);
  }

  void clear_transient() { nodes_.resize(base_size_); }

 private:
  template <typename ParticleAt>
  NodeId build_levels(const std::vector<std::size_t>& levels, std::size_t depth, NodeId parent, std::size_t& next_leaf,
                      const ParticleAt& particle_at) {
    const auto id = static_cast<NodeId>(nodes_.size());
    nodes_.push_back(Node{});
    nodes_.back().parent = parent;
    if (depth == levels.size()) {
      make_leaf(id, next_leaf++, particle_at);
      return id;
    }
    std::vector<NodeId> kids;
    kids.reserve(levels[depth]);
    for (std::size_t k = 0; k < levels[depth]; ++k) {
      kids.push_back(build_levels(levels, depth + 1, id, next_leaf, particle_at));
    }
    nodes_[to_index(id)].children = std::move(kids);
    return id;
  }

  template <typename ParticleAt>
  NodeId build_shape(const Shape& shape, NodeId parent, std::size_t& next_leaf, const ParticleAt& particle_at) {
    const auto id = static_cast<NodeId>(nodes_.size());
    nodes_.push_back(Node{});
    nodes_.back().parent = parent;
    if (shape.children.empty()) {
      make_leaf(id, next_leaf++, particle_at);
      return id;
    }
    std::vector<NodeId> kids;
    kids.reserve(shape.children.size());
    for (const auto& c : shape.children) {
      kids.push_back(build_shape(c, id, next_leaf, particle_at));
    }
    nodes_[to_index(id)].children = std::move(kids);
    return id;
  }

  template <typename ParticleAt>
  void make_leaf(NodeId id, std::size_t position, const ParticleAt& particle_at) {
    const std::size_t particle = particle_at(position);
    nodes_[to_index(id)].leaf_index = particle;
    leaf_of_particle_[particle] = id;
  }

  void collect_leaves(NodeId id, std::vector<std::size_t>& out) const {
    for_each_leaf(id, [&](std::size_t i) { out.push_back(i); });
  }

  std::vector<Node> nodes_;
  std::vector<NodeId> leaf_of_particle_;
  NodeId root_{kNoNode};
  std::size_t base_size_{0};
};

/// A set of subtrees with pairwise disjoint leaf sets.
class Forest {
 public:
  Forest() = default;

  Forest(const Tree& tree, std::vector<NodeId> roots)
      : roots_{std::move(roots)}, owner_(tree.leaf_count(), kNoNode), root_sizes_(roots_.size(), 0) {
    for (std::size_t r = 0; r < roots_.size(); ++r) {
      tree.for_each_leaf(roots_[r], [&](std::size_t i) {
        if (owner_[i] != kNoNode) {
          throw std::invalid_argument("Forest: particle " + std::to_string(i) + " is covered by two trees");
        }
        owner_[i] = roots_[r];
        ++root_sizes_[r];
      });
      covered_ += root_sizes_[r];
    }
  }

  /// The forest of all N single-leaf trees.
  static Forest leaves_of(const Tree& tree) {
    std::vector<NodeId> roots;
    roots.reserve(tree.leaf_count());
    for (std::size_t i = 0; i < tree.leaf_count(); ++i) {
      roots.push_back(tree.leaf(i));
    }
    return Forest{tree, std::move(roots)};
  }

  /// The forest {S(node)}.
  static Forest whole(const Tree& tree, NodeId node) { return Forest{tree, {node}}; }

  [[nodiscard]] const std::vector<NodeId>& roots() const noexcept { return roots_; }
  [[nodiscard]] std::size_t size() const noexcept { return roots_.size(); }
  [[nodiscard]] std::size_t covered() const noexcept { return covered_; }
  [[nodiscard]] std::size_t particle_count() const noexcept { return owner_.size(); }
  [[nodiscard]] bool covers(std::size_t i) const { return i < owner_.size() && owner_[i] != kNoNode; }
  [[nodiscard]] bool covers_all() const noexcept { return covered_ == owner_.size(); }
  /// Leaf counts of the trees, in root order.
  [[nodiscard]] const std::vector<std::size_t>& tree_sizes() const noexcept { return root_sizes_; }

  /// Root of the unique tree whose leaves contain particle `i`.
  [[nodiscard]] NodeId tree_of(std::size_t i) const {
    if (!covers(i)) {
      throw std::out_of_range("tree_of: particle " + std::to_string(i) + " is not covered by the forest");
    }
    return owner_[i];
  }

 private:
  std::vector<NodeId> roots_;
  std::vector<NodeId> owner_;
  std::vector<std::size_t> root_sizes_;
  std::size_t covered_{0};
};

/// The partition {leaves(T) : T in forest}.
inline Partition forest_partition(const Tree& tree, const Forest& forest) {
  std::vector<IndexSet> blocks;
  blocks.reserve(forest.size());
  for (const auto r : forest.roots()) {
    blocks.push_back(tree.leaves(r));
  }
  return Partition{std::move(blocks)};
}

/// Mean vertex degree (self-loops counted) of the interaction graph: sum |l(T)|^2 / N.
inline double avg_degree(const Forest& forest) {
  if (!forest.covers_all()) {
    throw std::invalid_argument("avg_degree: forest does not cover every particle");
  }
  double sum = 0.0;
  for (const auto s : forest.tree_sizes()) {
    sum += static_cast<double>(s) * static_cast<double>(s);
  }
  return sum / static_cast<double>(forest.particle_count());
}

/// Writes one line per arena node: "id parent count mass" ("-" for a missing parent or value).
inline void write_tree(std::ostream& os, const Tree& tree) {
  for (std::size_t k = 0; k < tree.node_count(); ++k) {
    const auto& nd = tree.node(static_cast<NodeId>(k));
    os << k << ' ';
    if (nd.parent == kNoNode) {
      os << '-';
    } else {
      os << to_index(nd.parent);
    }
    if (nd.value) {
      os << ' ' << nd.value->count << ' ' << nd.value->mass;
    } else {
      os << " - -";
    }
    os << '\n';
  }
}

}  // namespace forest_smc

#endif  // FOREST_SMC_TREE_HPP
