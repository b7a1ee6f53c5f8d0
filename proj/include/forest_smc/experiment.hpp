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

#ifndef FOREST_SMC_EXPERIMENT_HPP
#define FOREST_SMC_EXPERIMENT_HPP

#include <forest_smc/engine.hpp>
#include <forest_smc/random.hpp>
#include <forest_smc/selection.hpp>
#include <forest_smc/tree.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <ostream>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <tuple>
#include <utility>
#include <vector>

/**
 * \file
 * \brief Toy-model benchmark harness: experiment grids, CSV output and statistical checks.
 */

namespace forest_smc {

/// Conditionally independent toy HMM: states are iid N(0, 1) and g(x) = exp(sigma x - sigma^2 / 2).
/**
 * Under the initial law g(X) is log-normal with mean 1 and variance exp(sigma^2) - 1.
 */
class ToyModel {
 public:
  using state_type = double;

  explicit ToyModel(double sigma) : sigma_{sigma} {
    if (!(sigma > 0.0) || !std::isfinite(sigma)) {
      throw std::invalid_argument("ToyModel: sigma must be positive");
    }
  }

  [[nodiscard]] double sigma() const noexcept { return sigma_; }

  template <typename Rng>
  double sample_initial(Rng& rng) const {
    return std::normal_distribution<double>{}(rng);
  }

  template <typename Rng>
  double sample_transition(double /*x*/, Rng& rng) const {
    return std::normal_distribution<double>{}(rng);
  }

  [[nodiscard]] double log_potential(std::size_t /*n*/, double x) const { return sigma_ * x - 0.5 * sigma_ * sigma_; }
  [[nodiscard]] double potential(std::size_t n, double x) const { return std::exp(log_potential(n, x)); }

  /// Variance of g(X) under the initial law.
  [[nodiscard]] double potential_variance() const { return std::expm1(sigma_ * sigma_); }

 private:
  double sigma_;
};

inline ToyModel toy_model(double sigma) { return ToyModel{sigma}; }

/// Three-level layout for N = 2^e: 16 particles per device when possible, upper levels split evenly.
/**
 * 4096 -> [16, 16, 16], 1024 -> [8, 8, 16], 256 -> [4, 4, 16]. Sizes that are
 * not powers of two get a single level.
 */
inline std::vector<std::size_t> default_branching(std::size_t n) {
  if (n == 0) {
    throw std::invalid_argument("default_branching: n must be positive");
  }
  if ((n & (n - 1)) != 0) {
    return {n};
  }
  std::size_t e = 0;
  while ((std::size_t{1} << e) < n) {
    ++e;
  }
  const std::size_t device = std::min<std::size_t>(4, e);
  const std::size_t rest = e - device;
  const std::size_t top = rest / 2;
  const std::size_t mid = rest - top;
  std::vector<std::size_t> levels;
  for (const auto x : {top, mid, device}) {
    if (x > 0) {
      levels.push_back(std::size_t{1} << x);
    }
  }
  if (levels.empty()) {
    levels.push_back(1);
  }
  return levels;
}

/// How the particle-to-leaf assignment is redrawn at every step.
enum class PermuteMode { kNone, kLeaves, kDevices };

inline std::string_view to_string(PermuteMode m) {
  switch (m) {
    case PermuteMode::kNone:
      return "none";
    case PermuteMode::kLeaves:
      return "leaves";
    case PermuteMode::kDevices:
      return "devices";
  }
  return "unknown";
}

inline PermuteMode parse_permute_mode(std::string_view name) {
  for (const auto m : {PermuteMode::kNone, PermuteMode::kLeaves, PermuteMode::kDevices}) {
    if (to_string(m) == name) {
      return m;
    }
  }
  throw std::invalid_argument("unknown permutation mode: " + std::string{name});
}

struct ExperimentConfig {
  std::size_t n_particles{256};
  std::size_t steps{200};
  std::vector<double> taus{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 224.0 / 225.0};
  std::vector<double> sigmas{0.5, 1.0};
  std::vector<Strategy> strategies{Strategy::kArpf, Strategy::kPairing, Strategy::kMatching};
  /// Empty means default_branching(n_particles).
  std::vector<std::size_t> branching;
  PermuteMode permute{PermuteMode::kLeaves};
  std::uint64_t seed{1};
  std::size_t replicates{1};
  ResampleMode resample{ResampleMode::kCategorical};
  WeightMode weights{WeightMode::kLinear};
  std::size_t threads{0};

  [[nodiscard]] std::vector<std::size_t> levels() const {
    return branching.empty() ? default_branching(n_particles) : branching;
  }

  void validate() const {
    const auto lv = levels();
    const std::size_t product = std::accumulate(lv.begin(), lv.end(), std::size_t{1}, std::multiplies<>{});
    if (product != n_particles) {
      throw std::invalid_argument("branching factors multiply to " + std::to_string(product) + ", not N = " +
                                  std::to_string(n_particles));
    }
    for (const double t : taus) {
      if (!(t >= 0.0 && t <= 1.0)) {
        throw std::invalid_argument("tau must lie in [0, 1]");
      }
    }
    for (const double s : sigmas) {
      if (!(s > 0.0)) {
        throw std::invalid_argument("sigma must be positive");
      }
    }
    if (taus.empty() || sigmas.empty() || strategies.empty()) {
      throw std::invalid_argument("empty tau, sigma or strategy grid");
    }
    if (replicates == 0) {
      throw std::invalid_argument("replicates must be positive");
    }
  }
};

/// One row of the per-step CSV.
struct StepRow {
  std::size_t replicate{0};
  std::size_t n{0};
  Strategy strategy{Strategy::kMatching};
  double tau{0.0};
  double sigma{0.0};
  double ess{0.0};
  double degree{0.0};
  double z_estimate{0.0};
};

struct SummaryRow {
  Strategy strategy{Strategy::kMatching};
  double tau{0.0};
  double sigma{0.0};
  double d_bar{0.0};
  double ess_bar{0.0};
  double z_mean{0.0};
  double z_var{0.0};
  double runtime{0.0};
};

struct ExperimentResult {
  std::vector<StepRow> steps;
  std::vector<SummaryRow> summary;
};

/// Output of one filter run.
struct RunTrace {
  std::vector<StepRecord> records;
  double final_z{1.0};
  double seconds{0.0};
};

struct RunSpec {
  std::size_t n_particles{256};
  std::vector<std::size_t> levels;
  std::size_t steps{200};
  PermuteMode permute{PermuteMode::kLeaves};
  StepOptions options;
};

/// Runs the toy model filter for `spec.steps` steps, redrawing the leaf permutation every step.
inline RunTrace run_toy_filter(const RunSpec& spec, double sigma, const RngStreams& streams) {
  const auto start = std::chrono::steady_clock::now();
  const ToyModel model{sigma};
  auto sys = init(model, spec.n_particles, streams);
  BranchingSpec branching = BranchingSpec::uniform(spec.levels);
  RunTrace trace;
  trace.records.reserve(spec.steps);
  for (std::size_t k = 0; k < spec.steps; ++k) {
    auto prng = streams.permutation_stream(sys.n + 1);
    switch (spec.permute) {
      case PermuteMode::kNone:
        branching.permutation.clear();
        break;
      case PermuteMode::kLeaves:
        branching.permutation = random_leaf_permutation(spec.n_particles, prng);
        break;
      case PermuteMode::kDevices:
        branching.permutation.clear();
        branching.permutation = device_shuffle_permutation(branching, prng);
        break;
    }
    trace.records.push_back(step(sys, model, spec.options, branching, streams));
  }
  trace.final_z = estimate_z(sys);
  trace.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return trace;
}

/// Runs `jobs` independent tasks on up to `threads` workers (0 = hardware concurrency). Results keep job order.
template <typename Result, typename Fn>
std::vector<Result> run_parallel(std::size_t jobs, std::size_t threads, Fn&& fn) {
  std::vector<Result> results(jobs);
  if (threads == 0) {
    threads = std::max<std::size_t>(1, std::thread::hardware_concurrency());
  }
  threads = std::min(threads, jobs);
  if (threads <= 1) {
    for (std::size_t j = 0; j < jobs; ++j) {
      results[j] = fn(j);
    }
    return results;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(threads);
  {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < threads; ++t) {
      pool.emplace_back([&, t] {
        try {
          for (std::size_t j = next++; j < jobs; j = next++) {
            results[j] = fn(j);
          }
        } catch (...) {
          errors[t] = std::current_exception();
        }
      });
    }
  }
  for (const auto& e : errors) {
    if (e) {
      std::rethrow_exception(e);
    }
  }
  return results;
}

/// Sample mean and unbiased sample variance (0 for a single value).
inline std::pair<double, double> mean_and_variance(std::span<const double> xs) {
  const double mean = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
  if (xs.size() < 2) {
    return {mean, 0.0};
  }
  double ss = 0.0;
  for (const double x : xs) {
    ss += (x - mean) * (x - mean);
  }
  return {mean, ss / static_cast<double>(xs.size() - 1)};
}

/// Every (strategy, sigma, tau, replicate) combination. Replicate r uses the same streams in every cell.
inline ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  struct Cell {
    Strategy strategy;
    double sigma;
    double tau;
  };
  std::vector<Cell> cells;
  for (const auto s : cfg.strategies) {
    for (const double sigma : cfg.sigmas) {
      for (const double tau : cfg.taus) {
        cells.push_back({s, sigma, tau});
      }
    }
  }
  const std::size_t jobs = cells.size() * cfg.replicates;
  const RngStreams master{cfg.seed};
  const auto traces = run_parallel<RunTrace>(jobs, cfg.threads, [&](std::size_t j) {
    const auto& cell = cells[j / cfg.replicates];
    RunSpec spec;
    spec.n_particles = cfg.n_particles;
    spec.levels = cfg.levels();
    spec.steps = cfg.steps;
    spec.permute = cfg.permute;
    spec.options = {cell.tau, cell.strategy, cfg.resample, cfg.weights};
    return run_toy_filter(spec, cell.sigma, master.replicate(j % cfg.replicates));
  });

  ExperimentResult out;
  for (std::size_t c = 0; c < cells.size(); ++c) {
    const auto& cell = cells[c];
    SummaryRow row{cell.strategy, cell.tau, cell.sigma};
    std::vector<double> zs;
    for (std::size_t r = 0; r < cfg.replicates; ++r) {
      const auto& trace = traces[c * cfg.replicates + r];
      double d = 0.0;
      double e = 0.0;
      for (const auto& rec : trace.records) {
        out.steps.push_back({r, rec.n, cell.strategy, cell.tau, cell.sigma, rec.ess, rec.degree, rec.z_estimate});
        d += rec.degree;
        e += rec.ess;
      }
      const auto steps = static_cast<double>(std::max<std::size_t>(1, trace.records.size()));
      row.d_bar += d / steps;
      row.ess_bar += e / steps;
      row.runtime += trace.seconds;
      zs.push_back(trace.final_z);
    }
    row.d_bar /= static_cast<double>(cfg.replicates);
    row.ess_bar /= static_cast<double>(cfg.replicates);
    std::tie(row.z_mean, row.z_var) = mean_and_variance(zs);
    out.summary.push_back(row);
  }
  return out;
}

/// Shortest round-trip decimal form of a double.
inline std::string format_double(double x) {
  char buf[64];
  for (int precision = 1; precision <= 17; ++precision) {
    std::snprintf(buf, sizeof(buf), "%.*g", precision, x);
    if (std::strtod(buf, nullptr) == x) {
      break;
    }
  }
  return buf;
}

inline constexpr std::string_view kStepHeader = "replicate,n,strategy,tau,sigma,ess,degree,z_estimate";
inline constexpr std::string_view kSummaryHeader = "strategy,tau,sigma,d_bar,ess_bar,z_mean,z_var";
inline constexpr std::string_view kTimingHeader = "strategy,tau,sigma,runtime";

inline void write_step_csv(std::ostream& os, std::span<const StepRow> rows) {
  os << kStepHeader << '\n';
  for (const auto& r : rows) {
    os << r.replicate << ',' << r.n << ',' << to_string(r.strategy) << ',' << format_double(r.tau) << ','
       << format_double(r.sigma) << ',' << format_double(r.ess) << ',' << format_double(r.degree) << ','
       << format_double(r.z_estimate) << '\n';
  }
}

/// Summary rows without wall-clock time, so output depends on the seed only.
inline void write_summary_csv(std::ostream& os, std::span<const SummaryRow> rows) {
  os << kSummaryHeader << '\n';
  for (const auto& r : rows) {
    os << to_string(r.strategy) << ',' << format_double(r.tau) << ',' << format_double(r.sigma) << ','
       << format_double(r.d_bar) << ',' << format_double(r.ess_bar) << ',' << format_double(r.z_mean) << ','
       << format_double(r.z_var) << '\n';
  }
}

inline void write_timing_csv(std::ostream& os, std::span<const SummaryRow> rows) {
  os << kTimingHeader << '\n';
  for (const auto& r : rows) {
    os << to_string(r.strategy) << ',' << format_double(r.tau) << ',' << format_double(r.sigma) << ','
       << format_double(r.runtime) << '\n';
  }
}

/// Writes steps.csv, summary.csv and timing.csv into `dir`.
inline void write_experiment(const std::filesystem::path& dir, const ExperimentResult& result) {
  std::filesystem::create_directories(dir);
  const auto open = [](const std::filesystem::path& p) {
    std::ofstream f{p};
    if (!f) {
      throw std::runtime_error("cannot open " + p.string() + " for writing");
    }
    return f;
  };
  {
    auto f = open(dir / "steps.csv");
    write_step_csv(f, result.steps);
  }
  {
    auto f = open(dir / "summary.csv");
    write_summary_csv(f, result.summary);
  }
  {
    auto f = open(dir / "timing.csv");
    write_timing_csv(f, result.summary);
  }
}

struct CheckConfig {
  std::size_t n_particles{256};
  std::vector<std::size_t> branching;
  double sigma{1.0};
  double tau{0.5};
  Strategy strategy{Strategy::kMatching};
  ResampleMode resample{ResampleMode::kCategorical};
  PermuteMode permute{PermuteMode::kLeaves};
  std::uint64_t seed{1};
  /// Filter steps: the pilot length for the variance check, the run length for the bias check.
  std::size_t steps{3};
  std::size_t threads{0};

  [[nodiscard]] RunSpec run_spec(std::size_t steps_override) const {
    RunSpec s;
    s.n_particles = n_particles;
    s.levels = branching.empty() ? default_branching(n_particles) : branching;
    s.steps = steps_override;
    s.permute = permute;
    s.options = {tau, strategy, resample, WeightMode::kLinear};
    return s;
  }
};

struct VarianceReport {
  std::size_t replicates{0};
  double ess_previous{0.0};
  double target{0.0};
  double sample_variance{0.0};
  double standard_error{0.0};
  double ratio_mean{0.0};
  bool pass{false};
};

/// Freezes the weights after a pilot run and replicates the next step's Z ratio.
/**
 * Conditional on the weights W entering a step, the toy model gives
 * Var(Z_next / Z_prev) = (exp(sigma^2) - 1) / ESS(W). Each replicate redraws
 * the current states from the model, runs one engine step, and records the
 * ratio. The check passes when the sample variance is within three standard
 * errors of the target, the standard error estimated from the fourth moment.
 */
inline VarianceReport verify_variance(const CheckConfig& cfg, std::size_t replicates) {
  if (replicates < 2) {
    throw std::invalid_argument("verify_variance: need at least two replicates");
  }
  const ToyModel model{cfg.sigma};
  const RngStreams master{cfg.seed};
  const RunSpec spec = cfg.run_spec(cfg.steps);

  auto pilot = init(model, cfg.n_particles, master.replicate(0));
  BranchingSpec branching = BranchingSpec::uniform(spec.levels);
  branching.validate();
  if (branching.leaf_count() != cfg.n_particles) {
    throw std::invalid_argument("verify_variance: branching does not match N");
  }
  for (std::size_t k = 0; k < cfg.steps; ++k) {
    step(pilot, model, spec.options, branching, master.replicate(0));
  }
  VarianceReport rep;
  rep.replicates = replicates;
  rep.ess_previous = ess_current(pilot);
  rep.target = model.potential_variance() / rep.ess_previous;
  const double z_prev = estimate_z(pilot);

  const RngStreams reps = master.replicate(1);
  const auto ratios = run_parallel<double>(replicates, cfg.threads, [&](std::size_t m) {
    auto sys = pilot;
    const RngStreams streams = reps.replicate(m);
    for (std::size_t i = 0; i < sys.size(); ++i) {
      auto rng = streams.stream({static_cast<std::uint64_t>(StreamTag::kPilot), i});
      sys.states[i] = model.sample_transition(sys.states[i], rng);
    }
    step(sys, model, spec.options, branching, streams);
    return estimate_z(sys) / z_prev;
  });

  const auto [mean, var] = mean_and_variance(ratios);
  double m4 = 0.0;
  for (const double r : ratios) {
    const double d = r - mean;
    m4 += d * d * d * d;
  }
  m4 /= static_cast<double>(replicates);
  rep.ratio_mean = mean;
  rep.sample_variance = var;
  rep.standard_error = std::sqrt(std::max(0.0, m4 - var * var) / static_cast<double>(replicates));
  rep.pass = std::abs(var - rep.target) <= 3.0 * rep.standard_error;
  return rep;
}

struct UnbiasedReport {
  std::size_t replicates{0};
  std::size_t steps{0};
  double mean{0.0};
  double standard_error{0.0};
  bool pass{false};
};

/// Independent runs of `cfg.steps` steps; Z_n should average to 1.
inline UnbiasedReport verify_unbiased(const CheckConfig& cfg, std::size_t replicates) {
  if (replicates == 0) {
    throw std::invalid_argument("verify_unbiased: need at least one replicate");
  }
  const RngStreams master{cfg.seed};
  const RunSpec spec = cfg.run_spec(cfg.steps);
  const auto zs = run_parallel<double>(replicates, cfg.threads, [&](std::size_t r) {
    return run_toy_filter(spec, cfg.sigma, master.replicate(r)).final_z;
  });
  UnbiasedReport rep;
  rep.replicates = replicates;
  rep.steps = cfg.steps;
  const auto [mean, var] = mean_and_variance(zs);
  rep.mean = mean;
  rep.standard_error = std::sqrt(var / static_cast<double>(replicates));
  rep.pass = std::abs(mean - 1.0) <= 3.0 * rep.standard_error;
  return rep;
}

struct SweepRow {
  std::size_t n_particles{0};
  double tau{0.0};
  double d_bar{0.0};
  double ess_bar{0.0};
};

struct SweepConfig {
  double target{2048.0};
  std::vector<std::size_t> n_grid{2048, 4096, 8192, 16384};
  double sigma{1.0};
  std::size_t steps{200};
  Strategy strategy{Strategy::kMatching};
  ResampleMode resample{ResampleMode::kCategorical};
  PermuteMode permute{PermuteMode::kLeaves};
  std::uint64_t seed{1};
  std::size_t replicates{1};
  std::size_t threads{0};
};

/// Average degree against N with N tau held at `target`.
inline std::vector<SweepRow> fixed_product_sweep(const SweepConfig& cfg) {
  for (const auto n : cfg.n_grid) {
    if (cfg.target > static_cast<double>(n) || !(cfg.target > 0.0)) {
      throw std::invalid_argument("fixed_product_sweep: target " + format_double(cfg.target) +
                                  " must lie in (0, N] for N = " + std::to_string(n));
    }
  }
  const RngStreams master{cfg.seed};
  const std::size_t jobs = cfg.n_grid.size() * cfg.replicates;
  const auto traces = run_parallel<RunTrace>(jobs, cfg.threads, [&](std::size_t j) {
    const std::size_t n = cfg.n_grid[j / cfg.replicates];
    RunSpec spec;
    spec.n_particles = n;
    spec.levels = default_branching(n);
    spec.steps = cfg.steps;
    spec.permute = cfg.permute;
    spec.options = {std::min(1.0, cfg.target / static_cast<double>(n)), cfg.strategy, cfg.resample,
                    WeightMode::kLinear};
    return run_toy_filter(spec, cfg.sigma, master.replicate(j % cfg.replicates));
  });
  std::vector<SweepRow> rows;
  for (std::size_t g = 0; g < cfg.n_grid.size(); ++g) {
    SweepRow row{cfg.n_grid[g], std::min(1.0, cfg.target / static_cast<double>(cfg.n_grid[g]))};
    for (std::size_t r = 0; r < cfg.replicates; ++r) {
      const auto& trace = traces[g * cfg.replicates + r];
      double d = 0.0;
      double e = 0.0;
      for (const auto& rec : trace.records) {
        d += rec.degree;
        e += rec.ess;
      }
      const auto steps = static_cast<double>(std::max<std::size_t>(1, trace.records.size()));
      row.d_bar += d / steps;
      row.ess_bar += e / steps;
    }
    row.d_bar /= static_cast<double>(cfg.replicates);
    row.ess_bar /= static_cast<double>(cfg.replicates);
    rows.push_back(row);
  }
  return rows;
}

inline void write_sweep_csv(std::ostream& os, std::span<const SweepRow> rows) {
  os << "n_particles,tau,d_bar,ess_bar\n";
  for (const auto& r : rows) {
    os << r.n_particles << ',' << format_double(r.tau) << ',' << format_double(r.d_bar) << ','
       << format_double(r.ess_bar) << '\n';
  }
}

}  // namespace forest_smc

#endif  // FOREST_SMC_EXPERIMENT_HPP
