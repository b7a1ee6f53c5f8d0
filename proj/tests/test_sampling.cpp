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

#include <gtest/gtest.h>

#include <forest_smc/random.hpp>
#include <forest_smc/sampling.hpp>

#include <boost/math/distributions/chi_squared.hpp>

#include <algorithm>
#include <cstdint>
#include <vector>

#include "support.hpp"

namespace {

using forest_smc::BranchingSpec;
using forest_smc::Forest;
using forest_smc::IndexSet;
using forest_smc::NodeId;
using forest_smc::Shape;
using forest_smc::Tree;
using forest_smc::WeightVector;
namespace t = forest_smc::testing;

Tree populated(const BranchingSpec& spec, const WeightVector& c) {
  auto tree = Tree::build(spec);
  tree.set_leaf_values(c);
  tree.populate(tree.root());
  return tree;
}

// root -> {0, 1, {2, 3, 4}, 5}
Tree six_leaves(const WeightVector& c) {
  const Shape leaf{};
  return populated(BranchingSpec::from_shape(Shape{{leaf, leaf, Shape{{leaf, leaf, leaf}}, leaf}}), c);
}

// p-value of Pearson's statistic, pooling cells with expected count below 5 into one.
double chi_square_p(const std::vector<double>& probs, const std::vector<std::size_t>& counts, std::size_t draws) {
  double stat = 0.0;
  double pooled_expected = 0.0;
  double pooled_observed = 0.0;
  std::size_t cells = 0;
  for (std::size_t k = 0; k < probs.size(); ++k) {
    const double e = probs[k] * static_cast<double>(draws);
    if (e < 5.0) {
      pooled_expected += e;
      pooled_observed += static_cast<double>(counts[k]);
      continue;
    }
    const double d = static_cast<double>(counts[k]) - e;
    stat += d * d / e;
    ++cells;
  }
  if (pooled_expected > 0.0) {
    const double d = pooled_observed - pooled_expected;
    stat += d * d / std::max(pooled_expected, 1e-300);
    ++cells;
  }
  const boost::math::chi_squared dist{static_cast<double>(cells - 1)};
  return boost::math::cdf(boost::math::complement(dist, stat));
}

TEST(Sample, SingleLeaf) {
  const auto tree = six_leaves(WeightVector{1, 2, 3, 4, 5, 6});
  forest_smc::CounterRng rng{7};
  for (int k = 0; k < 10; ++k) {
    EXPECT_EQ(forest_smc::sample(tree, tree.leaf(5), rng), 5U);
  }
}

TEST(NodePmf, BinaryTreeExample) {
  const auto tree = populated(BranchingSpec::uniform({2, 2}), WeightVector{1, 2, 3, 4});
  const auto pmf = forest_smc::node_pmf(tree, tree.root());
  ASSERT_EQ(pmf.size(), 4U);
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(pmf[i].first, i);
    EXPECT_NEAR(pmf[i].second, 0.1 * static_cast<double>(i + 1), 1e-15);
  }
}

TEST(NodePmf, SubtreeExample) {
  const auto tree = six_leaves(WeightVector{1, 2, 3, 4, 5, 6});
  const auto sub = tree.children(tree.root())[2];
  EXPECT_EQ(tree.leaves(sub), (IndexSet{2, 3, 4}));
  const auto pmf = forest_smc::node_pmf(tree, sub);
  ASSERT_EQ(pmf.size(), 3U);
  EXPECT_NEAR(pmf[0].second, 0.25, 1e-15);
  EXPECT_NEAR(pmf[1].second, 1.0 / 3.0, 1e-15);
  EXPECT_NEAR(pmf[2].second, 5.0 / 12.0, 1e-15);
}

TEST(NodePmf, EqualsNormalizedRestrictionOnRandomTrees) {
  t::Rng rng{31};
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t n = t::uniform_index(rng, 1, 50);
    auto spec = BranchingSpec::from_shape(t::random_shape(rng, n));
    spec.permutation = forest_smc::random_leaf_permutation(n, rng);
    const auto c = t::random_weights(rng, n);
    const auto tree = populated(spec, c);
    const auto node = static_cast<NodeId>(t::uniform_index(rng, 0, tree.node_count() - 1));
    const auto support = tree.leaves(node);
    double total = 0.0;
    for (const auto i : support) {
      total += c[i];
    }
    const auto pmf = forest_smc::node_pmf(tree, node);
    ASSERT_EQ(pmf.size(), support.size());
    double sum = 0.0;
    for (std::size_t k = 0; k < pmf.size(); ++k) {
      EXPECT_EQ(pmf[k].first, support.members()[k]);
      EXPECT_NEAR(pmf[k].second, c[pmf[k].first] / total, 1e-12);
      sum += pmf[k].second;
    }
    EXPECT_NEAR(sum, 1.0, 1e-12);
  }
}

TEST(Sample, ChiSquareAgainstPmf) {
  // Nearly-degenerate masses spread over a three-level tree.
  std::vector<double> c(16);
  for (std::size_t i = 0; i < c.size(); ++i) {
    c[i] = i == 0 ? 1e-12 : static_cast<double>(i);
  }
  const auto tree = populated(BranchingSpec::uniform({2, 2, 4}), WeightVector{c});
  const auto pmf = forest_smc::node_pmf(tree, tree.root());
  std::vector<double> probs;
  for (const auto& [i, p] : pmf) {
    probs.push_back(p);
  }
  constexpr std::size_t kDraws = 100000;
  std::vector<std::size_t> counts(c.size(), 0);
  forest_smc::CounterRng rng{2026};
  for (std::size_t k = 0; k < kDraws; ++k) {
    ++counts[forest_smc::sample(tree, tree.root(), rng)];
  }
  EXPECT_GT(chi_square_p(probs, counts, kDraws), 0.001);
}

TEST(Select, Examples) {
  const auto tree = populated(BranchingSpec::uniform({2, 2}), WeightVector{1, 2, 3, 4});
  EXPECT_EQ(forest_smc::select(tree, tree.root(), 0.3), 1U);
  EXPECT_EQ(forest_smc::select(tree, tree.root(), 0.31), 2U);
  EXPECT_EQ(forest_smc::select(tree, tree.root(), 0.0), 0U);
  EXPECT_EQ(forest_smc::select(tree, tree.root(), 1.0), 3U);
  EXPECT_THROW(forest_smc::select(tree, tree.root(), 1.5), std::invalid_argument);
  EXPECT_THROW(forest_smc::select(tree, tree.root(), -0.1), std::invalid_argument);
}

TEST(Select, AgreesWithFlatInverseCdf) {
  t::Rng rng{32};
  std::size_t cases = 0;
  while (cases < 10000) {
    const std::size_t n = t::uniform_index(rng, 1, 30);
    const auto c = t::random_weights(rng, n);
    const auto tree = populated(BranchingSpec::from_shape(t::random_shape(rng, n)), c);
    for (int k = 0; k < 20; ++k, ++cases) {
      const auto node = static_cast<NodeId>(t::uniform_index(rng, 0, tree.node_count() - 1));
      const double u = t::uniform(rng);
      EXPECT_EQ(forest_smc::select(tree, node, u), t::flat_inverse_cdf(tree.leaves(node).members(), c, u));
    }
  }
}

TEST(GenerateU, SystematicExample) {
  const auto s = forest_smc::systematic_u(4, 0.5);
  EXPECT_EQ(s.u, (std::vector<double>{0.125, 0.375, 0.625, 0.875}));
}

TEST(GenerateU, StrataAndDeterminism) {
  forest_smc::CounterRng a{5};
  forest_smc::CounterRng b{5};
  const auto s = forest_smc::generate_u(forest_smc::UScheme::kStratified, 100, a);
  for (std::size_t i = 0; i < 100; ++i) {
    EXPECT_GE(s.u[i], static_cast<double>(i) / 100.0);
    EXPECT_LT(s.u[i], static_cast<double>(i + 1) / 100.0);
  }
  forest_smc::CounterRng c{9};
  forest_smc::CounterRng d{9};
  EXPECT_EQ(forest_smc::generate_u(forest_smc::UScheme::kIid, 50, c).u,
            forest_smc::generate_u(forest_smc::UScheme::kIid, 50, d).u);
  EXPECT_EQ(forest_smc::generate_u(forest_smc::UScheme::kStratified, 100, b).u, s.u);
  EXPECT_THROW(forest_smc::generate_u(forest_smc::UScheme::kIid, 0, c), std::invalid_argument);
  EXPECT_THROW(forest_smc::parse_uscheme("sobol"), std::invalid_argument);
}

TEST(GenerateU, RandomEntryIsMarginallyUniform) {
  // Pick one entry at random from each sequence; its law must be Uniform[0, 1).
  for (const auto scheme :
       {forest_smc::UScheme::kIid, forest_smc::UScheme::kSystematic, forest_smc::UScheme::kStratified}) {
    forest_smc::CounterRng rng{77};
    constexpr std::size_t kDraws = 20000;
    constexpr std::size_t kBins = 20;
    std::vector<std::size_t> counts(kBins, 0);
    for (std::size_t k = 0; k < kDraws; ++k) {
      const auto s = forest_smc::generate_u(scheme, 7, rng);
      const auto pick = static_cast<std::size_t>(forest_smc::uniform01(rng) * 7.0);
      ++counts[static_cast<std::size_t>(s.u[pick] * kBins)];
    }
    EXPECT_GT(chi_square_p(std::vector<double>(kBins, 1.0 / kBins), counts, kDraws), 0.001)
        << forest_smc::to_string(scheme);
  }
}

TEST(AssignAncestors, IdentityAndSupport) {
  t::Rng rng{33};
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = t::uniform_index(rng, 1, 40);
    auto spec = BranchingSpec::from_shape(t::random_shape(rng, n));
    spec.permutation = forest_smc::random_leaf_permutation(n, rng);
    const auto c = t::random_weights(rng, n);
    const auto tree = populated(spec, c);
    forest_smc::CounterRng crng{static_cast<std::uint64_t>(trial)};

    const auto identity = forest_smc::assign_ancestors(tree, Forest::leaves_of(tree), crng);
    for (std::size_t i = 0; i < n; ++i) {
      EXPECT_EQ(identity[i], i);
    }

    std::vector<NodeId> roots;
    std::vector<NodeId> stack{tree.root()};
    while (!stack.empty()) {
      const auto id = stack.back();
      stack.pop_back();
      if (tree.is_leaf(id) || t::uniform(rng) < 0.4) {
        roots.push_back(id);
      } else {
        stack.insert(stack.end(), tree.children(id).begin(), tree.children(id).end());
      }
    }
    const Forest f{tree, roots};
    const auto categorical = forest_smc::assign_ancestors(tree, f, crng);
    const auto inverse =
        forest_smc::assign_ancestors(tree, f, forest_smc::generate_u(forest_smc::UScheme::kSystematic, n, crng));
    double conserved = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      EXPECT_TRUE(tree.leaves(f.tree_of(i)).contains(categorical[i]));
      EXPECT_TRUE(tree.leaves(f.tree_of(i)).contains(inverse[i]));
      conserved += forest_smc::weight_update(tree, f, i);
    }
    EXPECT_NEAR(conserved, tree.value(tree.root()).mass, 1e-9 * tree.value(tree.root()).mass);
  }
}

TEST(AssignAncestors, PartialCoverThrows) {
  const auto tree = populated(BranchingSpec::uniform({2, 2}), WeightVector{1, 2, 3, 4});
  const Forest partial{tree, {tree.children(tree.root())[0]}};
  forest_smc::CounterRng rng{1};
  EXPECT_THROW(forest_smc::assign_ancestors(tree, partial, rng), std::invalid_argument);
  EXPECT_THROW(forest_smc::assign_ancestors(tree, partial, forest_smc::systematic_u(4, 0.5)), std::invalid_argument);
}

TEST(AssignAncestors, WholeTreeIsMultinomial) {
  const WeightVector c{1, 2, 3, 4};
  const auto tree = populated(BranchingSpec::uniform({2, 2}), c);
  forest_smc::CounterRng rng{3};
  constexpr std::size_t kRounds = 25000;
  std::vector<std::size_t> counts(4, 0);
  for (std::size_t r = 0; r < kRounds; ++r) {
    for (const auto a : forest_smc::assign_ancestors(tree, Forest::whole(tree, tree.root()), rng)) {
      ++counts[a];
    }
  }
  EXPECT_GT(chi_square_p({0.1, 0.2, 0.3, 0.4}, counts, 4 * kRounds), 0.001);
}

TEST(AssignAncestors, SystematicOnWholeTreeMatchesClassicalSystematic) {
  const WeightVector c{1, 2, 3, 4};
  const auto tree = populated(BranchingSpec::uniform({2, 2}), c);
  const auto a = forest_smc::assign_ancestors(tree, Forest::whole(tree, tree.root()), forest_smc::systematic_u(4, 0.5));
  // u = 0.125, 0.375, 0.625, 0.875 against cumulative masses 0.1, 0.3, 0.6, 1.0.
  EXPECT_EQ(a, (std::vector<std::size_t>{1, 2, 3, 3}));
}

TEST(WeightUpdate, Examples) {
  const WeightVector c{1, 2, 3, 4, 5, 6};
  const auto tree = six_leaves(c);
  const auto leaves = Forest::leaves_of(tree);
  const auto whole = Forest::whole(tree, tree.root());
  for (std::size_t i = 0; i < 6; ++i) {
    EXPECT_EQ(forest_smc::weight_update(tree, leaves, i), c[i]);
    EXPECT_DOUBLE_EQ(forest_smc::weight_update(tree, whole, i), 21.0 / 6.0);
  }
  const Forest f{tree, {tree.leaf(0), tree.leaf(1), tree.children(tree.root())[2], tree.leaf(5)}};
  EXPECT_EQ(forest_smc::weight_update(tree, f, 3), 4.0);
}

}  // namespace
