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

// Command-line front end for the toy-model benchmark harness.
//
//   forest-smc run --n-particles 256 --tau 0.1,0.5,0.9 --out results/
//   forest-smc verify-variance --replicates 100000
//   forest-smc verify-unbiased --n-particles 64 --steps 50 --replicates 2000
//   forest-smc sweep-fixed-product --target 512 --n-grid 512,1024,2048,4096
//
// Flags may also come from a flat TOML-style file given with --config; flags
// on the command line win.

#include <forest_smc/forest_smc.hpp>

#include <CLI11.hpp>

#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace {

namespace fs = forest_smc;

struct Options {
  std::size_t n_particles{256};
  std::optional<std::size_t> steps;
  std::vector<double> taus;
  std::vector<double> sigmas;
  std::vector<std::string> strategies;
  std::vector<std::size_t> branching;
  std::uint64_t seed{1};
  std::optional<std::size_t> replicates;
  std::string out;
  std::string resample{"categorical"};
  std::string permute{"leaves"};
  std::string weights{"linear"};
  std::size_t threads{0};
  // sweep-fixed-product
  double target{512.0};
  std::vector<std::size_t> n_grid{512, 1024, 2048, 4096};
};

std::vector<fs::Strategy> parse_strategies(const std::vector<std::string>& names) {
  std::vector<fs::Strategy> out;
  for (const auto& n : names) {
    out.push_back(fs::parse_strategy(n));
  }
  return out;
}

template <typename T>
T single(const std::vector<T>& values, const T& fallback, const char* flag) {
  if (values.empty()) {
    return fallback;
  }
  if (values.size() > 1) {
    throw std::invalid_argument(std::string{"this subcommand takes a single value for "} + flag);
  }
  return values.front();
}

fs::CheckConfig check_config(const Options& o, std::size_t default_steps) {
  fs::CheckConfig cfg;
  cfg.n_particles = o.n_particles;
  cfg.branching = o.branching;
  cfg.sigma = single(o.sigmas, 1.0, "--sigma");
  cfg.tau = single(o.taus, 0.5, "--tau");
  cfg.strategy = fs::parse_strategy(single(o.strategies, std::string{"matching"}, "--strategy"));
  cfg.resample = fs::parse_resample_mode(o.resample);
  cfg.permute = fs::parse_permute_mode(o.permute);
  cfg.seed = o.seed;
  cfg.steps = o.steps.value_or(default_steps);
  cfg.threads = o.threads;
  return cfg;
}

// Writes to `path`, or stdout when it is empty.
template <typename Fn>
void emit(const std::string& path, Fn&& write) {
  if (path.empty()) {
    write(std::cout);
    return;
  }
  std::ofstream f{path};
  if (!f) {
    throw std::runtime_error("cannot open " + path);
  }
  write(f);
  if (!f) {
    throw std::runtime_error("write failed: " + path);
  }
}

int run(const Options& o) {
  fs::ExperimentConfig cfg;
  cfg.n_particles = o.n_particles;
  cfg.steps = o.steps.value_or(200);
  if (!o.taus.empty()) {
    cfg.taus = o.taus;
  }
  if (!o.sigmas.empty()) {
    cfg.sigmas = o.sigmas;
  }
  if (!o.strategies.empty()) {
    cfg.strategies = parse_strategies(o.strategies);
  }
  cfg.branching = o.branching;
  cfg.permute = fs::parse_permute_mode(o.permute);
  cfg.seed = o.seed;
  cfg.replicates = o.replicates.value_or(1);
  cfg.resample = fs::parse_resample_mode(o.resample);
  if (o.weights == "stabilized") {
    cfg.weights = fs::WeightMode::kStabilized;
  } else if (o.weights != "linear") {
    throw std::invalid_argument("unknown weight mode: " + o.weights);
  }
  cfg.threads = o.threads;
  cfg.validate();

  const auto result = fs::run_experiment(cfg);
  const std::filesystem::path dir = o.out.empty() ? std::filesystem::path{"."} : std::filesystem::path{o.out};
  fs::write_experiment(dir, result);
  fs::write_summary_csv(std::cout, result.summary);
  return 0;
}

int verify_variance(const Options& o) {
  const auto cfg = check_config(o, 3);
  const auto rep = fs::verify_variance(cfg, o.replicates.value_or(100000));
  std::printf("replicates=%zu\ness_previous=%s\ntarget=%s\nsample_variance=%s\nstandard_error=%s\nratio_mean=%s\n%s\n",
              rep.replicates, fs::format_double(rep.ess_previous).c_str(), fs::format_double(rep.target).c_str(),
              fs::format_double(rep.sample_variance).c_str(), fs::format_double(rep.standard_error).c_str(),
              fs::format_double(rep.ratio_mean).c_str(), rep.pass ? "PASS" : "FAIL");
  return rep.pass ? 0 : 1;
}

int verify_unbiased(const Options& o) {
  const auto cfg = check_config(o, 50);
  const auto rep = fs::verify_unbiased(cfg, o.replicates.value_or(2000));
  std::printf("replicates=%zu\nsteps=%zu\nmean=%s\nstandard_error=%s\n%s\n", rep.replicates, rep.steps,
              fs::format_double(rep.mean).c_str(), fs::format_double(rep.standard_error).c_str(),
              rep.pass ? "PASS" : "FAIL");
  return rep.pass ? 0 : 1;
}

int sweep(const Options& o) {
  fs::SweepConfig cfg;
  cfg.target = o.target;
  cfg.n_grid = o.n_grid;
  cfg.sigma = single(o.sigmas, 1.0, "--sigma");
  cfg.steps = o.steps.value_or(200);
  cfg.strategy = fs::parse_strategy(single(o.strategies, std::string{"matching"}, "--strategy"));
  cfg.resample = fs::parse_resample_mode(o.resample);
  cfg.permute = fs::parse_permute_mode(o.permute);
  cfg.seed = o.seed;
  cfg.replicates = o.replicates.value_or(1);
  cfg.threads = o.threads;
  const auto rows = fs::fixed_product_sweep(cfg);
  emit(o.out, [&](std::ostream& os) { fs::write_sweep_csv(os, rows); });
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Particle filtering with adaptive forest-structured resampling"};
  app.require_subcommand(1);
  app.set_config("--config", "", "Flat key = value file; command-line flags take precedence");

  Options o;
  app.add_option("--n-particles,-N", o.n_particles, "Number of particles")->capture_default_str();
  app.add_option("--steps", o.steps, "Filter steps (pilot length for verify-variance)");
  app.add_option("--tau", o.taus, "ESS floor fraction(s), comma separated")->delimiter(',');
  app.add_option("--sigma", o.sigmas, "Potential scale(s), comma separated")->delimiter(',');
  app.add_option("--strategy", o.strategies, "pairing|matching|matching-exact|arpf|two-level, comma separated")
      ->delimiter(',');
  app.add_option("--branching", o.branching, "Branching factors root to leaves, e.g. 4,4,16")->delimiter(',');
  app.add_option("--seed", o.seed, "Master seed")->capture_default_str();
  app.add_option("--replicates", o.replicates, "Independent replicates (M or R for the verify commands)");
  app.add_option("--out", o.out, "Output directory for run, output file for sweep-fixed-product");
  app.add_option("--resample-mode", o.resample, "categorical|iid|systematic|stratified")->capture_default_str();
  app.add_option("--permute", o.permute, "Particle-to-leaf assignment each step: none|leaves|devices")
      ->capture_default_str();
  app.add_option("--weights", o.weights, "linear|stabilized")->capture_default_str();
  app.add_option("--threads", o.threads, "Worker threads, 0 = hardware concurrency")->capture_default_str();

  auto* run_cmd = app.add_subcommand("run", "Run the experiment grid and write steps.csv, summary.csv, timing.csv");
  auto* var_cmd = app.add_subcommand("verify-variance", "Check the one-step variance of the Z ratio");
  auto* unb_cmd = app.add_subcommand("verify-unbiased", "Check that the Z estimate has mean one");
  auto* sweep_cmd = app.add_subcommand("sweep-fixed-product", "Average degree against N with N tau fixed");
  sweep_cmd->add_option("--target", o.target, "The fixed product N tau")->capture_default_str();
  sweep_cmd->add_option("--n-grid", o.n_grid, "Particle counts, comma separated")->delimiter(',');
  for (auto* sub : {run_cmd, var_cmd, unb_cmd, sweep_cmd}) {
    sub->fallthrough();
  }

  CLI11_PARSE(app, argc, argv);

  try {
    if (run_cmd->parsed()) {
      return run(o);
    }
    if (var_cmd->parsed()) {
      return verify_variance(o);
    }
    if (unb_cmd->parsed()) {
      return verify_unbiased(o);
    }
    return sweep(o);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "forest-smc: %s\n", e.what());
    return 2;
  }
}
