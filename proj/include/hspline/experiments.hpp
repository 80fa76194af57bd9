#pragma once

#include <cstdint>
#include <iosfwd>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "hspline/stps.hpp"

namespace hspline {

/// Shared knobs of the reproduction experiments. Defaults are the base case:
/// lambda = 1, eps = 1e-4, eta = 2, leaf size 32.
struct ExperimentParams {
  double sigma = 0.05;
  double lambda = 1.0;
  HMatrixParams hmatrix;
  CgConfig cg;
  std::uint64_t seed = 1;
  /// Side length of the structured truth grid used for rmse.
  std::size_t eval_grid = 40;
};

inline constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

struct ExperimentRecord {
  std::string experiment;
  std::size_t grid_m = 0;
  std::size_t n = 0;
  Method method = Method::kM1;
  double eps = kNaN;  // M3 only
  double eta = kNaN;  // M3 only
  double lambda = 0.0;
  double comp_err = kNaN;
  double rmse = kNaN;
  std::size_t iterations = 0;
  /// "ok", "unstable" (expected blow-up: rmse > 1 or CG failure in a
  /// compression sweep) or "failed".
  std::string status = "ok";
  std::string message;
  double time_total_s = kNaN;
  double time_solve_s = kNaN;
  double time_compress_s = kNaN;
};

/// Franke data on m^2 uniform sites. Sites and noise come from independent
/// streams derived from (seed, m).
ObservationSet make_dataset(std::size_t m, double sigma, std::uint64_t seed);

/// Per grid size: fit M1, M2, M3 on the same data; comp_err against M1 at the
/// fit sites, rmse against noiseless Franke values on the truth grid.
std::vector<ExperimentRecord> run_method_comparison(const std::vector<std::size_t>& grid_sizes,
                                                    const ExperimentParams& params);

struct TimingResult {
  std::vector<ExperimentRecord> records;
  /// Least-squares slope of log(time_solve_s) against log(n), per method.
  std::map<Method, double> solve_slope;
  /// Same for time_total_s.
  std::map<Method, double> total_slope;
};

/// Median-of-repetitions wall-clock per method and size. Run serially.
TimingResult run_timing_scaling(const std::vector<std::size_t>& grid_sizes, const ExperimentParams& params,
                                std::size_t repetitions);

/// Least-squares slope of log(y) on log(x).
double loglog_slope(const std::vector<double>& x, const std::vector<double>& y);

struct CompressionCase {
  double eps = 1e-4;
  double eta = 2.0;
};

/// The four compression settings of the sensitivity study.
std::vector<CompressionCase> default_compression_cases();

/// M3 on the base dataset (grid `base_m`) for each case; comp_err against an
/// M1 fit of the same data. CG failures and rmse > 1 are recorded as
/// "unstable" rows.
std::vector<ExperimentRecord> run_sensitivity_eps_eta(const std::vector<CompressionCase>& cases,
                                                      const ExperimentParams& params, std::size_t base_m = 80);

/// M3 rmse for every (lambda, eta) pair on the base dataset, eps from params.
std::vector<ExperimentRecord> run_sensitivity_lambda(const std::vector<double>& lambdas,
                                                     const std::vector<double>& etas, const ExperimentParams& params,
                                                     std::size_t base_m = 80);

struct MonteCarloConfig {
  std::size_t iterations = 1000;
  std::size_t grid_m = 20;
  double sigma = 1.0;
  /// Outer parallelism over iterations; 0 = hardware concurrency.
  unsigned threads = 1;
};

struct MonteCarloIteration {
  std::size_t iteration = 0;
  Method method = Method::kM1;
  double median = kNaN;
  double iqr = kNaN;
  bool ok = false;
  std::string message;
};

struct DistributionSummary {
  double mean = kNaN;
  double sd = kNaN;
  double variance = kNaN;
  /// mean +/- 1.96 sd / sqrt(count)
  double ci_low = kNaN;
  double ci_high = kNaN;
  /// 2.5% and 97.5% sample quantiles
  double q025 = kNaN;
  double q975 = kNaN;
};

struct MethodMonteCarlo {
  std::vector<double> medians;
  std::vector<double> iqrs;
  DistributionSummary median;
  DistributionSummary iqr;
  std::size_t failures = 0;
};

struct MonteCarloSummary {
  std::vector<MonteCarloIteration> iterations;
  MethodMonteCarlo m1;
  MethodMonteCarlo m3;
};

/// Each iteration draws fresh sites and fresh N(0, sigma^2) noise, rebuilds
/// the system, fits M1 and M3 and records the median and IQR of the fitted
/// values at the fit sites.
MonteCarloSummary run_monte_carlo(const MonteCarloConfig& mc, const ExperimentParams& params);

/// Linear-interpolation sample quantile (R type 7). `values` need not be
/// sorted.
double quantile(std::vector<double> values, double p);
DistributionSummary summarize(const std::vector<double>& values);

// CSV writers. With `timings == false` the timing columns are left empty so
// the output is deterministic.
void write_records_csv(std::ostream& out, const std::vector<ExperimentRecord>& records, bool timings);
void write_monte_carlo_csv(std::ostream& out, const MonteCarloSummary& summary);
void write_monte_carlo_summary_csv(std::ostream& out, const MonteCarloSummary& summary);

}  // namespace hspline
