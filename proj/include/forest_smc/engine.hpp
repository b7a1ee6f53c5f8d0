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

#ifndef FOREST_SMC_ENGINE_HPP
#define FOREST_SMC_ENGINE_HPP

#include <forest_smc/ess.hpp>
#include <forest_smc/random.hpp>
#include <forest_smc/sampling.hpp>
#include <forest_smc/selection.hpp>
#include <forest_smc/tree.hpp>

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <numeric>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

/**
 * \file
 * \brief Particle filter driver with adaptive forest-structured interaction.
 *
 * Each step rebuilds the topology tree, loads the unnormalized masses
 * W g(x) into its leaves, chooses a forest meeting the ESS floor, averages
 * masses within each tree of the forest, draws ancestors inside the same tree
 * and propagates.
 */

namespace forest_smc {

/// A hidden Markov model with a bootstrap proposal.
/**
 * `potential(n, x)` must be strictly positive and bounded; a fixed observation
 * record can be folded into it through the step index.
 */
template <typename M>
concept Model = requires(const M& m, const typename M::state_type& x, CounterRng& rng, std::size_t n) {
  typename M::state_type;
  { m.sample_initial(rng) } -> std::convertible_to<typename M::state_type>;
  { m.sample_transition(x, rng) } -> std::convertible_to<typename M::state_type>;
  { m.potential(n, x) } -> std::convertible_to<double>;
};

/// Models that can evaluate log potentials directly, used by stabilized weights.
template <typename M>
concept LogPotentialModel = Model<M> && requires(const M& m, const typename M::state_type& x, std::size_t n) {
  { m.log_potential(n, x) } -> std::convertible_to<double>;
};

enum class ResampleMode { kCategorical, kIid, kSystematic, kStratified };

inline std::string_view to_string(ResampleMode m) {
  switch (m) {
    case ResampleMode::kCategorical:
      return "categorical";
    case ResampleMode::kIid:
      return "iid";
    case ResampleMode::kSystematic:
      return "systematic";
    case ResampleMode::kStratified:
      return "stratified";
  }
  return "unknown";
}

inline ResampleMode parse_resample_mode(std::string_view name) {
  for (const auto m : {ResampleMode::kCategorical, ResampleMode::kIid, ResampleMode::kSystematic,
                       ResampleMode::kStratified}) {
    if (to_string(m) == name) {
      return m;
    }
  }
  throw std::invalid_argument("unknown resample mode: " + std::string{name});
}

/// Linear keeps W literally. Stabilized keeps W / exp(log_scale) with the largest mass rescaled to 1.
enum class WeightMode { kLinear, kStabilized };

struct StepOptions {
  double tau{0.5};
  Strategy strategy{Strategy::kMatching};
  ResampleMode resample{ResampleMode::kCategorical};
  WeightMode weights{WeightMode::kLinear};
};

template <typename State>
struct ParticleSystem {
  std::vector<State> states;
  /// Weights, relative to exp(log_scale).
  std::vector<double> weights;
  double log_scale{0.0};
  std::size_t n{0};
  /// Ancestors drawn in the most recent step (empty before the first).
  std::vector<std::size_t> ancestors;

  [[nodiscard]] std::size_t size() const noexcept { return states.size(); }
};

struct StepRecord {
  std::size_t n{0};
  double ess{0.0};
  double degree{0.0};
  double z_estimate{0.0};
  Strategy strategy{Strategy::kMatching};
  double tau{0.0};
  std::size_t forest_size{0};
};

template <Model M>
ParticleSystem<typename M::state_type> init(const M& model, std::size_t n_particles, const RngStreams& streams) {
  if (n_particles == 0) {
    throw std::invalid_argument("init: need at least one particle");
  }
  ParticleSystem<typename M::state_type> sys;
  sys.states.reserve(n_particles);
  for (std::size_t i = 0; i < n_particles; ++i) {
    auto rng = streams.init_stream(i);
    sys.states.push_back(model.sample_initial(rng));
  }
  sys.weights.assign(n_particles, 1.0);
  return sys;
}

template <typename State>
double ess_current(const ParticleSystem<State>& sys) {
  return ess_of_weights(sys.weights);
}

/// (1/N) sum W, on the natural scale.
template <typename State>
double estimate_z(const ParticleSystem<State>& sys) {
  const double mean =
      std::accumulate(sys.weights.begin(), sys.weights.end(), 0.0) / static_cast<double>(sys.weights.size());
  return sys.log_scale == 0.0 ? mean : std::exp(sys.log_scale) * mean;
}

template <typename State>
double log_estimate_z(const ParticleSystem<State>& sys) {
  const double mean =
      std::accumulate(sys.weights.begin(), sys.weights.end(), 0.0) / static_cast<double>(sys.weights.size());
  return sys.log_scale + std::log(mean);
}

/// Self-normalized estimate sum W phi(x) / sum W.
template <typename State, typename Phi>
double estimate_pi(const ParticleSystem<State>& sys, Phi&& phi) {
  double num = 0.0;
  double den = 0.0;
  for (std::size_t i = 0; i < sys.size(); ++i) {
    num += sys.weights[i] * phi(sys.states[i]);
    den += sys.weights[i];
  }
  if (!(den > 0.0)) {
    throw std::logic_error("estimate_pi: weights sum to zero");
  }
  return num / den;
}

namespace detail {

template <Model M>
std::vector<double> incremental_masses(const M& model, ParticleSystem<typename M::state_type>& sys, WeightMode mode) {
  const std::size_t n = sys.size();
  std::vector<double> c(n);
  if (mode == WeightMode::kLinear) {
    for (std::size_t i = 0; i < n; ++i) {
      c[i] = sys.weights[i] * model.potential(sys.n, sys.states[i]);
    }
    return c;
  }
  for (std::size_t i = 0; i < n; ++i) {
    double lg = 0.0;
    if constexpr (LogPotentialModel<M>) {
      lg = model.log_potential(sys.n, sys.states[i]);
    } else {
      lg = std::log(model.potential(sys.n, sys.states[i]));
    }
    c[i] = std::log(sys.weights[i]) + lg;
  }
  const double top = *std::max_element(c.begin(), c.end());
  for (auto& x : c) {
    x = std::exp(x - top);
  }
  sys.log_scale += top;
  return c;
}

inline UScheme uscheme_of(ResampleMode m) {
  switch (m) {
    case ResampleMode::kSystematic:
      return UScheme::kSystematic;
    case ResampleMode::kStratified:
      return UScheme::kStratified;
    default:
      return UScheme::kIid;
  }
}

}  // namespace detail

/// Advances the system by one step and reports the step's ESS, cost and marginal likelihood estimate.
/**
 * Randomness: in categorical mode particle i draws its ancestor and then its
 * new state from `streams.particle_stream(n, i)`; in the inverse-transform
 * modes the uniforms come from `streams.uniforms_stream(n)` and particle i's
 * stream is used for propagation only. `n` is the new step index.
 */
template <Model M>
StepRecord step(ParticleSystem<typename M::state_type>& sys, const M& model, const StepOptions& opts,
                const BranchingSpec& spec, const RngStreams& streams) {
  const std::size_t n_particles = sys.size();
  Tree tree = Tree::build(spec);
  if (tree.leaf_count() != n_particles) {
    throw std::invalid_argument("step: tree has " + std::to_string(tree.leaf_count()) + " leaves for " +
                                std::to_string(n_particles) + " particles");
  }
  const WeightVector c{detail::incremental_masses(model, sys, opts.weights)};
  tree.set_leaf_values(c);
  tree.populate(tree.root());
  const Forest forest = choose_forest(tree, tree.root(), opts.tau, opts.strategy);

  const std::size_t next = sys.n + 1;
  std::vector<double> weights(n_particles);
  for (std::size_t i = 0; i < n_particles; ++i) {
    weights[i] = weight_update(tree, forest, i);
  }

  std::vector<std::size_t> ancestors(n_particles);
  std::vector<typename M::state_type> states;
  states.reserve(n_particles);
  if (opts.resample == ResampleMode::kCategorical) {
    for (std::size_t i = 0; i < n_particles; ++i) {
      auto rng = streams.particle_stream(next, i);
      ancestors[i] = sample(tree, forest.tree_of(i), rng);
      states.push_back(model.sample_transition(sys.states[ancestors[i]], rng));
    }
  } else {
    auto urng = streams.uniforms_stream(next);
    const auto u = generate_u(detail::uscheme_of(opts.resample), n_particles, urng);
    for (std::size_t i = 0; i < n_particles; ++i) {
      ancestors[i] = select(tree, forest.tree_of(i), u.u[i]);
      auto rng = streams.particle_stream(next, i);
      states.push_back(model.sample_transition(sys.states[ancestors[i]], rng));
    }
  }

  sys.states = std::move(states);
  sys.weights = std::move(weights);
  sys.ancestors = std::move(ancestors);
  sys.n = next;

  StepRecord rec;
  rec.n = next;
  rec.ess = ess_current(sys);
  rec.degree = avg_degree(forest);
  rec.z_estimate = estimate_z(sys);
  rec.strategy = opts.strategy;
  rec.tau = opts.tau;
  rec.forest_size = forest.size();
  return rec;
}

}  // namespace forest_smc

#endif  // FOREST_SMC_ENGINE_HPP
