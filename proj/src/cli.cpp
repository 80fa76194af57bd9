#include "hspline/cli.hpp"

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "hspline/error.hpp"
#include "hspline/experiments.hpp"
#include "hspline/stps.hpp"
#include "json.hpp"

namespace hspline {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

constexpr const char* kVersion = "1.0.0";

/// Reads `{"config": {...}}` (a run sidecar) or a flat JSON object whose keys
/// are long flag names without the leading dashes.
/// Keys are attached to the subcommand that was parsed, since CLI11 only
/// reads config files at the top level.
class JsonConfig : public CLI::Config {
 public:
  explicit JsonConfig(const CLI::App* root) : root_(root) {}

  std::string to_config(const CLI::App*, bool, bool, std::string) const override { return "{}"; }

  std::vector<CLI::ConfigItem> from_config(std::istream& input) const override {
    json doc;
    try {
      doc = json::parse(input);
    } catch (const json::exception& e) {
      throw CLI::ConversionError(std::string("config file is not valid JSON: ") + e.what());
    }
    if (doc.is_object() && doc.contains("config")) doc = doc["config"];
    if (!doc.is_object()) throw CLI::ConversionError("config file must hold a JSON object");

    std::vector<std::string> parents;
    if (const auto subs = root_->get_subcommands(); !subs.empty()) parents.push_back(subs.front()->get_name());

    std::vector<CLI::ConfigItem> items;
    for (const auto& [key, value] : doc.items()) {
      CLI::ConfigItem item;
      item.parents = parents;
      item.name = key;
      if (value.is_null() || (value.is_array() && value.empty())) continue;
      if (value.is_array()) {
        for (const auto& v : value) item.inputs.push_back(scalar(v));
      } else {
        item.inputs.push_back(scalar(value));
      }
      items.push_back(std::move(item));
    }
    return items;
  }

 private:
  static std::string scalar(const json& v) {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
    if (v.is_number_float()) return format_double(v.get<double>());
    return v.dump();
  }

  const CLI::App* root_;
};

struct CommonOptions {
  double lambda = 1.0;
  double eps = 1e-4;
  double eta = 2.0;
  std::size_t leaf_size = 32;
  std::size_t max_rank = 0;
  double cg_tol = 1e-8;
  std::size_t cg_max_iter = 0;
  std::uint64_t seed = 1;
  double sigma = 0.05;
  unsigned threads = 1;

  HMatrixParams hmatrix() const { return {eps, eta, leaf_size, max_rank, threads}; }
  CgConfig cg() const { return {cg_tol, cg_max_iter, true}; }

  json to_json() const {
    return json{{"lambda", lambda}, {"eps", eps},       {"eta", eta},
                {"leaf-size", leaf_size}, {"max-rank", max_rank}, {"cg-tol", cg_tol},
                {"cg-max-iter", cg_max_iter}, {"seed", seed},   {"sigma", sigma},
                {"threads", threads}};
  }
};

void add_common(CLI::App& app, CommonOptions& o) {
  app.add_option("--lambda", o.lambda, "Smoothing parameter")->check(CLI::NonNegativeNumber);
  app.add_option("--eps", o.eps, "ACA tolerance")->check(CLI::PositiveNumber);
  app.add_option("--eta", o.eta, "Admissibility parameter")->check(CLI::PositiveNumber);
  app.add_option("--leaf-size", o.leaf_size, "Cluster tree leaf size")->check(CLI::PositiveNumber);
  app.add_option("--max-rank", o.max_rank, "ACA rank cap (0 = none)");
  app.add_option("--cg-tol", o.cg_tol, "Relative CG tolerance")->check(CLI::PositiveNumber);
  app.add_option("--cg-max-iter", o.cg_max_iter, "CG iteration cap (0 = 10 n)");
  app.add_option("--seed", o.seed, "Master random seed");
  app.add_option("--sigma", o.sigma, "Noise standard deviation for synthetic data")->check(CLI::NonNegativeNumber);
  app.add_option("--threads", o.threads, "Worker threads (0 = auto)")->envname("HSPLINE_THREADS");
}

json report_json(const SolveReport& r) { return json(r); }

std::string utc_stamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y%m%dT%H%M%SZ", &tm);
  return buf;
}

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw InvalidArgument("cannot write " + path.string());
  f << content;
  if (!f) throw InvalidArgument("failed writing " + path.string());
}

// ---------------------------------------------------------------------------

struct FitOptions {
  CommonOptions common;
  std::string data;
  std::size_t synth = 0;
  std::string method = "m1";
  std::string out;
  std::string report;
};

int cmd_fit(const FitOptions& o, std::ostream& out, std::ostream& err) {
  if (o.data.empty() == (o.synth == 0)) {
    err << "fit: give exactly one data source, --data or --synth\n";
    return kExitUsage;
  }
  if (o.synth != 0 && o.synth < 3) {
    err << "fit: --synth m needs m >= 3 (a fit requires n >= 4 sites that are not all on one line)\n";
    return kExitUsage;
  }

  FitRequest req;
  if (!o.data.empty()) {
    std::ifstream f(o.data);
    if (!f) {
      err << "fit: cannot open " << o.data << '\n';
      return kExitUsage;
    }
    req.observations = read_observations_csv(f);
    if (req.observations.y.empty() && req.observations.size() > 0) {
      err << "fit: data file has no y column\n";
      return kExitUsage;
    }
  } else {
    req.observations = make_dataset(o.synth, o.common.sigma, o.common.seed);
  }
  if (req.observations.size() < 4) {
    err << "fit: at least 4 sites are required (n >= 4), got " << req.observations.size() << '\n';
    return kExitUsage;
  }
  req.lambda = o.common.lambda;
  req.method = parse_method(o.method);
  req.hmatrix = o.common.hmatrix();
  req.cg = o.common.cg();

  const std::string report_path = o.report.empty() ? o.out + ".json" : o.report;
  json report{{"command", "fit"}, {"n", req.observations.size()}};
  try {
    const StpsModel model = fit(req);
    std::ofstream f(o.out);
    if (!f) throw InvalidArgument("cannot write " + o.out);
    save_model(f, model);
    report["report"] = report_json(model.report);
    report["status"] = "ok";
    write_file(report_path, report.dump(2) + "\n");
    out << "method=" << to_string(model.report.method) << " n=" << req.observations.size()
        << " iterations=" << model.report.iterations << " residual=" << format_double(model.report.final_residual)
        << " total_s=" << model.report.timings.total_s << '\n';
    return kExitOk;
  } catch (const NumericalError& e) {
    report["status"] = "failed";
    report["error"] = e.what();
    if (const auto* nc = dynamic_cast<const NonConvergenceError*>(&e)) report["residual_history"] = nc->residual_history();
    write_file(report_path, report.dump(2) + "\n");
    err << "fit: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const CollinearSitesError& e) {
    report["status"] = "failed";
    report["error"] = e.what();
    write_file(report_path, report.dump(2) + "\n");
    err << "fit: " << e.what() << '\n';
    return kExitNumerical;
  }
}

// ---------------------------------------------------------------------------

struct InterpolateOptions {
  std::string model;
  std::size_t grid = 0;
  std::string query;
  std::string truth = "none";
  std::string out;
};

int cmd_interpolate(const InterpolateOptions& o, std::ostream& out, std::ostream& err) {
  if ((o.grid == 0) == o.query.empty()) {
    err << "interpolate: give exactly one of --grid or --query\n";
    return kExitUsage;
  }
  std::ifstream mf(o.model);
  if (!mf) {
    err << "interpolate: cannot open model file " << o.model << '\n';
    return kExitUsage;
  }
  StpsModel model;
  try {
    model = load_model(mf);
  } catch (const InvalidArgument& e) {
    err << "interpolate: malformed model file: " << e.what() << '\n';
    return kExitUsage;
  }

  SiteSet query;
  if (o.grid != 0) {
    query = structured_grid(o.grid);
  } else {
    std::ifstream qf(o.query);
    if (!qf) {
      err << "interpolate: cannot open " << o.query << '\n';
      return kExitUsage;
    }
    query = read_observations_csv(qf).sites;
  }

  const Vector g = interpolate(model, query);
  const bool with_truth = o.truth == "franke";
  std::vector<double> truth;
  if (with_truth) truth = franke(query);

  std::ostringstream csv;
  csv << (with_truth ? "x1,x2,g,f_true\n" : "x1,x2,g\n");
  for (std::size_t i = 0; i < query.size(); ++i) {
    csv << format_double(query[i].x1) << ',' << format_double(query[i].x2) << ','
        << format_double(g(static_cast<Eigen::Index>(i)));
    if (with_truth) csv << ',' << format_double(truth[i]);
    csv << '\n';
  }
  if (o.out.empty()) {
    out << csv.str();
  } else {
    write_file(o.out, csv.str());
  }
  if (with_truth) out << "rmse=" << format_double(rmse(truth, as_span(g))) << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct ExperimentOptions {
  CommonOptions common;
  std::string suite;
  std::vector<std::size_t> grids;
  std::size_t reps = 3;
  std::size_t base_grid = 80;
  std::size_t eval_grid = 40;
  std::vector<double> case_eps;
  std::vector<double> case_eta;
  std::vector<double> lambdas{1.0, 5.0, 10.0, 100.0};
  std::vector<double> etas{2.0, 5.0, 10.0};
  std::size_t iters = 1000;
  std::size_t mc_grid = 20;
  double mc_sigma = 1.0;
  std::string out_dir = ".";
  bool no_timings = false;

  json to_json() const {
    json j = common.to_json();
    j["suite"] = suite;
    j["grids"] = grids;
    j["reps"] = reps;
    j["base-grid"] = base_grid;
    j["eval-grid"] = eval_grid;
    j["case-eps"] = case_eps;
    j["case-eta"] = case_eta;
    j["lambdas"] = lambdas;
    j["etas"] = etas;
    j["iters"] = iters;
    j["mc-grid"] = mc_grid;
    j["mc-sigma"] = mc_sigma;
    j["out-dir"] = out_dir;
    j["no-timings"] = no_timings;
    return j;
  }
};

json records_json_summary(const std::vector<ExperimentRecord>& records) {
  json rows = json::array();
  for (const auto& r : records) {
    rows.push_back({{"grid_m", r.grid_m},
                    {"method", to_string(r.method)},
                    {"status", r.status},
                    {"message", r.message}});
  }
  return rows;
}

int status_exit(const std::vector<ExperimentRecord>& records) {
  bool failed = false;
  bool unstable = false;
  for (const auto& r : records) {
    failed |= r.status == "failed";
    unstable |= r.status == "unstable";
  }
  if (failed) return kExitNumerical;
  return unstable ? kExitExpectedInstability : kExitOk;
}

json dist_json(const DistributionSummary& s) {
  return json{{"mean", s.mean}, {"sd", s.sd},   {"variance", s.variance}, {"ci_low", s.ci_low},
              {"ci_high", s.ci_high}, {"q025", s.q025}, {"q975", s.q975}};
}

int cmd_experiment(const ExperimentOptions& o, std::ostream& out, std::ostream& err) {
  ExperimentParams params;
  params.sigma = o.common.sigma;
  params.lambda = o.common.lambda;
  params.hmatrix = o.common.hmatrix();
  params.cg = o.common.cg();
  params.seed = o.common.seed;
  params.eval_grid = o.eval_grid;

  fs::create_directories(o.out_dir);
  const std::string stamp = utc_stamp();
  fs::path stem = fs::path(o.out_dir) / (o.suite + "_" + stamp);
  for (int k = 1; fs::exists(stem.string() + ".csv"); ++k) {
    stem = fs::path(o.out_dir) / (o.suite + "_" + stamp + "-" + std::to_string(k));
  }

  json sidecar{{"experiment", o.suite}, {"created", stamp}, {"library_version", kVersion}, {"config", o.to_json()}};
  std::ostringstream csv;
  int code = kExitOk;

  if (o.suite == "comparison" || o.suite == "timing") {
    std::vector<std::size_t> grids = o.grids;
    if (grids.empty()) grids = o.suite == "comparison" ? std::vector<std::size_t>{20, 28, 40} : std::vector<std::size_t>{20, 28, 40, 57, 80};
    std::vector<ExperimentRecord> records;
    if (o.suite == "comparison") {
      records = run_method_comparison(grids, params);
    } else {
      const TimingResult t = run_timing_scaling(grids, params, o.reps);
      records = t.records;
      json slopes;
      for (const auto& [m, s] : t.solve_slope) {
        slopes[to_string(m)] = {{"solve", s}, {"total", t.total_slope.at(m)}};
        out << "slope " << to_string(m) << " solve=" << s << " total=" << t.total_slope.at(m) << '\n';
      }
      sidecar["results"]["slopes"] = slopes;
    }
    write_records_csv(csv, records, !o.no_timings);
    sidecar["results"]["rows"] = records_json_summary(records);
    code = status_exit(records);
  } else if (o.suite == "sensitivity-eps-eta") {
    std::vector<CompressionCase> cases;
    if (o.case_eps.size() != o.case_eta.size()) {
      err << "experiment: --case-eps and --case-eta must have the same length\n";
      return kExitUsage;
    }
    for (std::size_t i = 0; i < o.case_eps.size(); ++i) cases.push_back({o.case_eps[i], o.case_eta[i]});
    if (cases.empty()) cases = default_compression_cases();
    const auto records = run_sensitivity_eps_eta(cases, params, o.base_grid);
    write_records_csv(csv, records, !o.no_timings);
    sidecar["results"]["rows"] = records_json_summary(records);
    code = status_exit(records);
  } else if (o.suite == "sensitivity-lambda") {
    const auto records = run_sensitivity_lambda(o.lambdas, o.etas, params, o.base_grid);
    write_records_csv(csv, records, !o.no_timings);
    sidecar["results"]["rows"] = records_json_summary(records);
    code = status_exit(records);
  } else if (o.suite == "monte-carlo") {
    MonteCarloConfig mc;
    mc.iterations = o.iters;
    mc.grid_m = o.mc_grid;
    mc.sigma = o.mc_sigma;
    mc.threads = o.common.threads;
    params.hmatrix.threads = 1;
    const MonteCarloSummary summary = run_monte_carlo(mc, params);
    write_monte_carlo_csv(csv, summary);
    std::ostringstream summary_csv;
    write_monte_carlo_summary_csv(summary_csv, summary);
    write_file(stem.string() + "_summary.csv", summary_csv.str());
    for (const auto& [name, m] : {std::pair{"m1", &summary.m1}, std::pair{"m3", &summary.m3}}) {
      sidecar["results"][name] = {{"median", dist_json(m->median)}, {"iqr", dist_json(m->iqr)}, {"failures", m->failures}};
    }
    code = (summary.m1.failures + summary.m3.failures) ? kExitNumerical : kExitOk;
    out << summary_csv.str();
  } else {
    err << "experiment: unknown suite '" << o.suite << "'\n";
    return kExitUsage;
  }

  write_file(stem.string() + ".csv", csv.str());
  write_file(stem.string() + ".json", sidecar.dump(2) + "\n");
  out << "wrote " << stem.string() << ".csv\n";
  return code;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Smoothing thin plate splines with H-matrix accelerated solvers", "hspline"};
  app.config_formatter(std::make_shared<JsonConfig>(&app));
  app.set_config("--config", "", "JSON config file: flag names as keys, or a run sidecar");
  app.fallthrough();
  app.allow_config_extras(CLI::config_extras_mode::error);
  app.require_subcommand(1);

  FitOptions fit_opts;
  auto* fit_cmd = app.add_subcommand("fit", "Fit a smoothing spline and write a model file");
  add_common(*fit_cmd, fit_opts.common);
  auto* data_opt = fit_cmd->add_option("--data", fit_opts.data, "Observations CSV (x1,x2,y)");
  auto* synth_opt = fit_cmd->add_option("--synth", fit_opts.synth, "Synthetic Franke data on m^2 uniform sites");
  data_opt->excludes(synth_opt);
  fit_cmd->add_option("--method", fit_opts.method, "m1 | m2 | m3")
      ->check(CLI::IsMember({"m1", "m2", "m3", "M1", "M2", "M3"}));
  fit_cmd->add_option("--out", fit_opts.out, "Model file")->required();
  fit_cmd->add_option("--report", fit_opts.report, "Solve report JSON (default <out>.json)");

  InterpolateOptions interp_opts;
  auto* interp_cmd = app.add_subcommand("interpolate", "Evaluate a model on a grid or query sites");
  interp_cmd->add_option("--model", interp_opts.model, "Model file")->required();
  auto* grid_opt = interp_cmd->add_option("--grid", interp_opts.grid, "Structured m x m grid on the unit square");
  auto* query_opt = interp_cmd->add_option("--query", interp_opts.query, "Query sites CSV (x1,x2)");
  grid_opt->excludes(query_opt);
  interp_cmd->add_option("--truth", interp_opts.truth, "franke | none")->check(CLI::IsMember({"franke", "none"}));
  interp_cmd->add_option("--out", interp_opts.out, "Output CSV (default stdout)");

  ExperimentOptions exp_opts;
  auto* exp_cmd = app.add_subcommand("experiment", "Run a reproduction experiment");
  add_common(*exp_cmd, exp_opts.common);
  exp_cmd->add_option("--suite", exp_opts.suite, "comparison | timing | sensitivity-eps-eta | sensitivity-lambda | monte-carlo")
      ->required()
      ->check(CLI::IsMember({"comparison", "timing", "sensitivity-eps-eta", "sensitivity-lambda", "monte-carlo"}));
  exp_cmd->add_option("--grids", exp_opts.grids, "Grid sizes m (m^2 sites)")->delimiter(',');
  exp_cmd->add_option("--reps", exp_opts.reps, "Timing repetitions (median reported)")->check(CLI::PositiveNumber);
  exp_cmd->add_option("--base-grid", exp_opts.base_grid, "Grid size of the sensitivity base dataset");
  exp_cmd->add_option("--eval-grid", exp_opts.eval_grid, "Truth grid size for rmse");
  exp_cmd->add_option("--case-eps", exp_opts.case_eps, "Compression sweep eps values")->delimiter(',');
  exp_cmd->add_option("--case-eta", exp_opts.case_eta, "Compression sweep eta values")->delimiter(',');
  exp_cmd->add_option("--lambdas", exp_opts.lambdas, "Lambda sweep values")->delimiter(',');
  exp_cmd->add_option("--etas", exp_opts.etas, "Eta values for the lambda sweep")->delimiter(',');
  exp_cmd->add_option("--iters", exp_opts.iters, "Monte Carlo iterations");
  exp_cmd->add_option("--mc-grid", exp_opts.mc_grid, "Monte Carlo grid size m");
  exp_cmd->add_option("--mc-sigma", exp_opts.mc_sigma, "Monte Carlo noise standard deviation");
  exp_cmd->add_option("--out-dir", exp_opts.out_dir, "Output directory");
  exp_cmd->add_flag("--no-timings", exp_opts.no_timings, "Leave timing columns empty");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*fit_cmd) return cmd_fit(fit_opts, out, err);
    if (*interp_cmd) return cmd_interpolate(interp_opts, out, err);
    if (*exp_cmd) return cmd_experiment(exp_opts, out, err);
  } catch (const InvalidArgument& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const CollinearSitesError& e) {
    err << "error: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const NumericalError& e) {
    err << "error: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  }
  return kExitUsage;
}

}  // namespace hspline
