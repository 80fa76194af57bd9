#include "hspline/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <ostream>

#include "hspline/error.hpp"
#include "hspline/parallel.hpp"
#include "hspline/rng.hpp"

namespace hspline {

namespace {

struct FitOutcome {
  ExperimentRecord record;
  std::optional<Vector> at_sites;  // fitted values at the fit sites
};

FitRequest make_request(const ObservationSet& obs, Method method, const ExperimentParams& params) {
  FitRequest req;
  req.observations = obs;
  req.lambda = params.lambda;
  req.method = method;
  req.hmatrix = params.hmatrix;
  req.cg = params.cg;
  return req;
}

/// Fits one method and fills in metrics. Never throws for solver failures;
/// those become the record status.
FitOutcome fit_and_score(const std::string& experiment, std::size_t m, const ObservationSet& obs, Method method,
                         const ExperimentParams& params, const SiteSet& truth_grid,
                         const std::vector<double>& truth_values, const std::optional<Vector>& reference) {
  FitOutcome out;
  ExperimentRecord& rec = out.record;
  rec.experiment = experiment;
  rec.grid_m = m;
  rec.n = obs.size();
  rec.method = method;
  rec.lambda = params.lambda;
  if (method == Method::kM3) {
    rec.eps = params.hmatrix.eps;
    rec.eta = params.hmatrix.eta;
  }
  try {
    const StpsModel model = fit(make_request(obs, method, params));
    rec.iterations = model.report.iterations;
    rec.time_total_s = model.report.timings.total_s;
    rec.time_solve_s = model.report.timings.solve_s;
    rec.time_compress_s = model.report.timings.compress_s;
    out.at_sites = interpolate(model, obs.sites);
    const Vector on_grid = interpolate(model, truth_grid);
    rec.rmse = rmse(truth_values, as_span(on_grid));
    if (reference) rec.comp_err = comp_err(as_span(*reference), as_span(*out.at_sites));
  } catch (const NumericalError& e) {
    rec.status = "failed";
    rec.message = e.what();
  } catch (const CollinearSitesError& e) {
    rec.status = "failed";
    rec.message = e.what();
  }
  return out;
}

std::string format_optional(double v) { return std::isnan(v) ? std::string() : format_double(v); }

}  // namespace

ObservationSet make_dataset(std::size_t m, double sigma, std::uint64_t seed) {
  const SiteSet sites = uniform_random_sites(m * m, mix_seed(seed, 2 * m));
  return synthesize_observations(sites, sigma, mix_seed(seed, 2 * m + 1));
}

std::vector<ExperimentRecord> run_method_comparison(const std::vector<std::size_t>& grid_sizes,
                                                    const ExperimentParams& params) {
  const SiteSet truth_grid = structured_grid(params.eval_grid);
  const std::vector<double> truth = franke(truth_grid);
  std::vector<ExperimentRecord> records;
  for (std::size_t m : grid_sizes) {
    if (m < 5) throw InvalidArgument("run_method_comparison: grid sizes must be >= 5");
    const ObservationSet obs = make_dataset(m, params.sigma, params.seed);
    FitOutcome m1 = fit_and_score("comparison", m, obs, Method::kM1, params, truth_grid, truth, std::nullopt);
    if (m1.at_sites) m1.record.comp_err = 0.0;
    records.push_back(m1.record);
    for (Method method : {Method::kM2, Method::kM3}) {
      records.push_back(fit_and_score("comparison", m, obs, method, params, truth_grid, truth, m1.at_sites).record);
    }
  }
  return records;
}

double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw InvalidArgument("loglog_slope: need at least two matching points");
  double mx = 0.0;
  double my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!(x[i] > 0.0) || !(y[i] > 0.0)) throw InvalidArgument("loglog_slope: values must be positive");
    mx += std::log(x[i]);
    my += std::log(y[i]);
  }
  mx /= static_cast<double>(x.size());
  my /= static_cast<double>(x.size());
  double sxy = 0.0;
  double sxx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = std::log(x[i]) - mx;
    sxy += dx * (std::log(y[i]) - my);
    sxx += dx * dx;
  }
  if (sxx == 0.0) throw InvalidArgument("loglog_slope: abscissae are all equal");
  return sxy / sxx;
}

TimingResult run_timing_scaling(const std::vector<std::size_t>& grid_sizes, const ExperimentParams& params,
                                std::size_t repetitions) {
  if (repetitions < 1) throw InvalidArgument("run_timing_scaling: repetitions must be >= 1");
  const SiteSet truth_grid = structured_grid(params.eval_grid);
  const std::vector<double> truth = franke(truth_grid);
  auto median = [](std::vector<double> v) { return quantile(std::move(v), 0.5); };

  TimingResult result;
  for (std::size_t m : grid_sizes) {
    if (m < 5) throw InvalidArgument("run_timing_scaling: grid sizes must be >= 5");
    const ObservationSet obs = make_dataset(m, params.sigma, params.seed);
    std::optional<Vector> reference;
    for (Method method : {Method::kM1, Method::kM2, Method::kM3}) {
      std::vector<double> total;
      std::vector<double> solve;
      std::vector<double> compress;
      FitOutcome last;
      for (std::size_t r = 0; r < repetitions; ++r) {
        last = fit_and_score("timing", m, obs, method, params, truth_grid, truth, reference);
        if (last.record.status != "ok") break;
        total.push_back(last.record.time_total_s);
        solve.push_back(last.record.time_solve_s);
        compress.push_back(last.record.time_compress_s);
      }
      if (last.record.status == "ok") {
        last.record.time_total_s = median(total);
        last.record.time_solve_s = median(solve);
        last.record.time_compress_s = median(compress);
      }
      if (method == Method::kM1) {
        reference = last.at_sites;
        if (reference) last.record.comp_err = 0.0;
      }
      result.records.push_back(last.record);
    }
  }

  for (Method method : {Method::kM1, Method::kM2, Method::kM3}) {
    std::vector<double> n;
    std::vector<double> solve;
    std::vector<double> total;
    for (const auto& rec : result.records) {
      if (rec.method != method || rec.status != "ok") continue;
      n.push_back(static_cast<double>(rec.n));
      solve.push_back(std::max(rec.time_solve_s, 1e-9));
      total.push_back(std::max(rec.time_total_s, 1e-9));
    }
    if (n.size() >= 2) {
      result.solve_slope[method] = loglog_slope(n, solve);
      result.total_slope[method] = loglog_slope(n, total);
    }
  }
  return result;
}

std::vector<CompressionCase> default_compression_cases() { return {{1e-2, 5.0}, {1e-2, 10.0}, {1e-1, 5.0}, {1e-1, 10.0}}; }

std::vector<ExperimentRecord> run_sensitivity_eps_eta(const std::vector<CompressionCase>& cases,
                                                      const ExperimentParams& params, std::size_t base_m) {
  const SiteSet truth_grid = structured_grid(params.eval_grid);
  const std::vector<double> truth = franke(truth_grid);
  const ObservationSet obs = make_dataset(base_m, params.sigma, params.seed);
  const FitOutcome m1 = fit_and_score("sensitivity-eps-eta", base_m, obs, Method::kM1, params, truth_grid, truth,
                                      std::nullopt);

  std::vector<ExperimentRecord> records;
  for (const auto& c : cases) {
    if (!(c.eps > 0.0) || !(c.eta > 0.0)) throw InvalidArgument("compression parameters must be positive");
    ExperimentParams p = params;
    p.hmatrix.eps = c.eps;
    p.hmatrix.eta = c.eta;
    ExperimentRecord rec =
        fit_and_score("sensitivity-eps-eta", base_m, obs, Method::kM3, p, truth_grid, truth, m1.at_sites).record;
    if (rec.status == "failed" || rec.rmse > 1.0) rec.status = "unstable";
    records.push_back(std::move(rec));
  }
  return records;
}

std::vector<ExperimentRecord> run_sensitivity_lambda(const std::vector<double>& lambdas,
                                                     const std::vector<double>& etas, const ExperimentParams& params,
                                                     std::size_t base_m) {
  const SiteSet truth_grid = structured_grid(params.eval_grid);
  const std::vector<double> truth = franke(truth_grid);
  const ObservationSet obs = make_dataset(base_m, params.sigma, params.seed);
  std::vector<ExperimentRecord> records;
  for (double eta : etas) {
    for (double lambda : lambdas) {
      if (!(lambda >= 0.0)) throw InvalidArgument("lambda must be >= 0");
      ExperimentParams p = params;
      p.lambda = lambda;
      p.hmatrix.eta = eta;
      records.push_back(
          fit_and_score("sensitivity-lambda", base_m, obs, Method::kM3, p, truth_grid, truth, std::nullopt).record);
    }
  }
  return records;
}

double quantile(std::vector<double> values, double p) {
  if (values.empty()) throw InvalidArgument("quantile of an empty sample");
  if (!(p >= 0.0 && p <= 1.0)) throw InvalidArgument("quantile probability must be in [0, 1]");
  std::sort(values.begin(), values.end());
  const double h = static_cast<double>(values.size() - 1) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

DistributionSummary summarize(const std::vector<double>& values) {
  DistributionSummary s;
  if (values.empty()) return s;
  const double count = static_cast<double>(values.size());
  s.mean = std::accumulate(values.begin(), values.end(), 0.0) / count;
  if (values.size() >= 2) {
    double ss = 0.0;
    for (double v : values) ss += (v - s.mean) * (v - s.mean);
    s.variance = ss / (count - 1.0);
    s.sd = std::sqrt(s.variance);
    s.ci_low = s.mean - 1.96 * s.sd / std::sqrt(count);
    s.ci_high = s.mean + 1.96 * s.sd / std::sqrt(count);
  }
  s.q025 = quantile(values, 0.025);
  s.q975 = quantile(values, 0.975);
  return s;
}

MonteCarloSummary run_monte_carlo(const MonteCarloConfig& mc, const ExperimentParams& params) {
  if (mc.iterations < 2) throw InvalidArgument("run_monte_carlo: at least 2 iterations are required");
  if (mc.grid_m < 2) throw InvalidArgument("run_monte_carlo: grid must have at least 2 sites per side");

  MonteCarloSummary summary;
  summary.iterations.resize(2 * mc.iterations);
  parallel_for(mc.iterations, mc.threads, [&](std::size_t it) {
    const ObservationSet obs = make_dataset(mc.grid_m, mc.sigma, mix_seed(params.seed, 0x4d43'0000ULL + it));
    std::size_t slot = 2 * it;
    for (Method method : {Method::kM1, Method::kM3}) {
      MonteCarloIteration& row = summary.iterations[slot++];
      row.iteration = it;
      row.method = method;
      try {
        const StpsModel model = fit(make_request(obs, method, params));
        const Vector g = interpolate(model, obs.sites);
        const std::vector<double> values(g.data(), g.data() + g.size());
        row.median = quantile(values, 0.5);
        row.iqr = quantile(values, 0.75) - quantile(values, 0.25);
        row.ok = true;
      } catch (const NumericalError& e) {
        row.message = e.what();
      }
    }
  });

  for (const auto& row : summary.iterations) {
    MethodMonteCarlo& target = row.method == Method::kM1 ? summary.m1 : summary.m3;
    if (!row.ok) {
      ++target.failures;
      continue;
    }
    target.medians.push_back(row.median);
    target.iqrs.push_back(row.iqr);
  }
  for (MethodMonteCarlo* m : {&summary.m1, &summary.m3}) {
    m->median = summarize(m->medians);
    m->iqr = summarize(m->iqrs);
  }
  return summary;
}

void write_records_csv(std::ostream& out, const std::vector<ExperimentRecord>& records, bool timings) {
  out << "experiment,grid_m,n,method,eps,eta,lambda,comp_err,rmse,iterations,status,time_total_s,time_solve_s,"
         "time_compress_s\n";
  for (const auto& r : records) {
    out << r.experiment << ',' << r.grid_m << ',' << r.n << ',' << to_string(r.method) << ','
        << format_optional(r.eps) << ',' << format_optional(r.eta) << ',' << format_double(r.lambda) << ','
        << format_optional(r.comp_err) << ',' << format_optional(r.rmse) << ',' << r.iterations << ',' << r.status
        << ',';
    if (timings) {
      out << format_optional(r.time_total_s) << ',' << format_optional(r.time_solve_s) << ','
          << format_optional(r.time_compress_s);
    } else {
      out << ",,";
    }
    out << '\n';
  }
}

void write_monte_carlo_csv(std::ostream& out, const MonteCarloSummary& summary) {
  out << "iteration,method,median,iqr,status\n";
  for (const auto& row : summary.iterations) {
    out << row.iteration << ',' << to_string(row.method) << ',' << format_optional(row.median) << ','
        << format_optional(row.iqr) << ',' << (row.ok ? "ok" : "failed") << '\n';
  }
}

void write_monte_carlo_summary_csv(std::ostream& out, const MonteCarloSummary& summary) {
  out << "method,statistic,count,failures,mean,sd,variance,ci_low,ci_high,q025,q975\n";
  auto emit = [&out](const char* method, const char* stat, const MethodMonteCarlo& m, const DistributionSummary& s,
                     std::size_t count) {
    out << method << ',' << stat << ',' << count << ',' << m.failures << ',' << format_optional(s.mean) << ','
        << format_optional(s.sd) << ',' << format_optional(s.variance) << ',' << format_optional(s.ci_low) << ','
        << format_optional(s.ci_high) << ',' << format_optional(s.q025) << ',' << format_optional(s.q975) << '\n';
  };
  emit("m1", "median", summary.m1, summary.m1.median, summary.m1.medians.size());
  emit("m1", "iqr", summary.m1, summary.m1.iqr, summary.m1.iqrs.size());
  emit("m3", "median", summary.m3, summary.m3.median, summary.m3.medians.size());
  emit("m3", "iqr", summary.m3, summary.m3.iqr, summary.m3.iqrs.size());
}

}  // namespace hspline
