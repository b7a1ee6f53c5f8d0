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

#ifndef FOREST_SMC_SAMPLING_HPP
#define FOREST_SMC_SAMPLING_HPP

#include <forest_smc/tree.hpp>

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

/**
 * \file
 * \brief Ancestor sampling over populated trees and forests.
 */

namespace forest_smc {

/// Uniform double in [0, 1) from the top 53 bits of a 64-bit generator.
template <typename Rng>
double uniform01(Rng& rng) {
  static_assert(Rng::min() == 0 && Rng::max() == std::numeric_limits<std::uint64_t>::max(),
                "uniform01 requires a full-range 64-bit generator");
  return static_cast<double>(rng() >> 11U) * 0x1.0p-53;
}

/// Draws a particle under `node` with probability proportional to its mass, one categorical step per level.
template <typename Rng>
std::size_t sample(const Tree& tree, NodeId node, Rng& rng) {
  for (;;) {
    const auto& nd = tree.node(node);
    if (nd.is_leaf()) {
      return *nd.leaf_index;
    }
    double total = 0.0;
    for (const auto c : nd.children) {
      total += tree.value(c).mass;
    }
    const double target = uniform01(rng) * total;
    NodeId chosen = nd.children.back();
    double cum = 0.0;
    for (const auto c : nd.children) {
      cum += tree.value(c).mass;
      if (cum > target) {
        chosen = c;
        break;
      }
    }
    node = chosen;
  }
}

/// Exact distribution of `sample` from `node`, as (particle, probability) sorted by particle.
inline std::vector<std::pair<std::size_t, double>> node_pmf(const Tree& tree, NodeId node) {
  std::vector<std::pair<std::size_t, double>> out;
  const auto walk = [&](const auto& self, NodeId id, double p) -> void {
    const auto& nd = tree.node(id);
    if (nd.is_leaf()) {
      out.emplace_back(*nd.leaf_index, p);
      return;
    }
    double total = 0.0;
    for (const auto c : nd.children) {
      total += tree.value(c).mass;
    }
    for (const auto c : nd.children) {
      self(self, c, p * tree.value(c).mass / total);
    }
  };
  walk(walk, node, 1.0);
  std::sort(out.begin(), out.end());
  return out;
}

/// Inverse-transform selection with a single uniform, rescaled on the way down.
/**
 * With children ordered by particle index this returns the smallest k such
 * that the mass of leaves(node) up to k reaches u times the total mass.
 */
inline std::size_t select(const Tree& tree, NodeId node, double u) {
  if (!(u >= 0.0 && u <= 1.0)) {
    throw std::invalid_argument("select: u must lie in [0, 1]");
  }
  for (;;) {
    const auto& nd = tree.node(node);
    if (nd.is_leaf()) {
      return *nd.leaf_index;
    }
    double total = 0.0;
    for (const auto c : nd.children) {
      total += tree.value(c).mass;
    }
    const double target = u * total;
    std::size_t pick = nd.children.size() - 1;
    double before = 0.0;
    double cum = 0.0;
    for (std::size_t k = 0; k < nd.children.size(); ++k) {
      const double next = cum + tree.value(nd.children[k]).mass;
      if (next >= target) {
        pick = k;
        before = cum;
        break;
      }
      cum = next;
      before = cum;
    }
    const NodeId chosen = nd.children[pick];
    u = std::clamp((target - before) / tree.value(chosen).mass, 0.0, 1.0);
    node = chosen;
  }
}

enum class UScheme { kIid, kSystematic, kStratified };

inline std::string_view to_string(UScheme s) {
  switch (s) {
    case UScheme::kIid:
      return "iid";
    case UScheme::kSystematic:
      return "systematic";
    case UScheme::kStratified:
      return "stratified";
  }
  return "unknown";
}

inline UScheme parse_uscheme(std::string_view name) {
  if (name == "iid") {
    return UScheme::kIid;
  }
  if (name == "systematic") {
    return UScheme::kSystematic;
  }
  if (name == "stratified") {
    return UScheme::kStratified;
  }
  throw std::invalid_argument("unknown u scheme: " + std::string{name});
}

/// Uniforms driving inverse-transform ancestor selection; entry i belongs to particle i.
struct USequence {
  std::vector<double> u;
  UScheme scheme{UScheme::kIid};
};

/// Systematic sequence u_i = (i + offset) / n for a given offset in [0, 1).
inline USequence systematic_u(std::size_t n, double offset) {
  USequence s{std::vector<double>(n), UScheme::kSystematic};
  for (std::size_t i = 0; i < n; ++i) {
    s.u[i] = (static_cast<double>(i) + offset) / static_cast<double>(n);
  }
  return s;
}

template <typename Rng>
USequence generate_u(UScheme scheme, std::size_t n, Rng& rng) {
  if (n == 0) {
    throw std::invalid_argument("generate_u: n must be positive");
  }
  USequence s{std::vector<double>(n), scheme};
  const auto dn = static_cast<double>(n);
  switch (scheme) {
    case UScheme::kIid:
      for (auto& x : s.u) {
        x = uniform01(rng);
      }
      break;
    case UScheme::kSystematic:
      return systematic_u(n, uniform01(rng));
    case UScheme::kStratified:
      for (std::size_t i = 0; i < n; ++i) {
        s.u[i] = (static_cast<double>(i) + uniform01(rng)) / dn;
      }
      break;
  }
  return s;
}

/// Block mean of the masses in particle i's tree.
inline double weight_update(const Tree& tree, const Forest& forest, std::size_t i) {
  const auto& v = tree.value(forest.tree_of(i));
  return v.mean();
}

/// Ancestors drawn independently with `sample`, particles visited in index order.
template <typename Rng>
std::vector<std::size_t> assign_ancestors(const Tree& tree, const Forest& forest, Rng& rng) {
  if (!forest.covers_all()) {
    throw std::invalid_argument("assign_ancestors: forest does not cover every particle");
  }
  std::vector<std::size_t> a(forest.particle_count());
  for (std::size_t i = 0; i < a.size(); ++i) {
    a[i] = sample(tree, forest.tree_of(i), rng);
  }
  return a;
}

/// Ancestors by inverse transform: particle i selects from its own tree with u[i].
inline std::vector<std::size_t> assign_ancestors(const Tree& tree, const Forest& forest, const USequence& u) {
  if (!forest.covers_all()) {
    throw std::invalid_argument("assign_ancestors: forest does not cover every particle");
  }
  if (u.u.size() != forest.particle_count()) {
    throw std::invalid_argument("assign_ancestors: u sequence length does not match particle count");
  }
  std::vector<std::size_t> a(forest.particle_count());
  for (std::size_t i = 0; i < a.size(); ++i) {
    a[i] = select(tree, forest.tree_of(i), u.u[i]);
  }
  return a;
}

}  // namespace forest_smc

#endif  // FOREST_SMC_SAMPLING_HPP
