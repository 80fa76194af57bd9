#include "hspline/stps.hpp"

#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>

#include "hspline/error.hpp"

namespace hspline {

StpsModel fit(const FitRequest& req) {
  const auto& obs = req.observations;
  if (obs.y.size() != obs.sites.size()) throw InvalidArgument("fit: observation count mismatch");
  AugmentedSystem sys{obs.sites, Eigen::Map<const Vector>(obs.y.data(), static_cast<Eigen::Index>(obs.y.size())),
                      req.lambda};

  SolveResult solved;
  switch (req.method) {
    case Method::kM1: solved = solve_direct(sys); break;
    case Method::kM2: solved = solve_schur_cg(sys, E11Mode::dense(), req.cg); break;
    case Method::kM3: solved = solve_schur_cg(sys, E11Mode::compressed(req.hmatrix), req.cg); break;
  }
  return {std::move(solved.coeffs), obs.sites, req.lambda, std::move(solved.report)};
}

Vector interpolate(const StpsModel& model, const SiteSet& query) {
  return evaluate_spline(model.coeffs, model.fit_sites, query);
}

double comp_err(std::span<const double> f_ref, std::span<const double> f) {
  if (f_ref.size() != f.size()) throw InvalidArgument("comp_err: length mismatch");
  double sq = 0.0;
  for (std::size_t i = 0; i < f.size(); ++i) sq += (f_ref[i] - f[i]) * (f_ref[i] - f[i]);
  return std::sqrt(sq);
}

double rmse(std::span<const double> f_real, std::span<const double> f) {
  if (f_real.size() != f.size()) throw InvalidArgument("rmse: length mismatch");
  if (f.empty()) throw InvalidArgument("rmse: empty input");
  const double e = comp_err(f_real, f);
  return e / std::sqrt(static_cast<double>(f.size()));
}

void save_model(std::ostream& out, const StpsModel& model) {
  const std::size_t n = model.fit_sites.size();
  if (static_cast<std::size_t>(model.coeffs.c.size()) != n) throw InvalidArgument("save_model: inconsistent model");
  out << "hspline-model n=" << n << " lambda=" << format_double(model.lambda)
      << " method=" << to_string(model.report.method) << '\n';
  for (Eigen::Index i = 0; i < model.coeffs.c.size(); ++i) out << format_double(model.coeffs.c(i)) << '\n';
  for (Eigen::Index i = 0; i < 3; ++i) out << format_double(model.coeffs.d(i)) << '\n';
  write_sites_csv(out, model.fit_sites);
}

StpsModel load_model(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw InvalidArgument("model file is empty");
  std::istringstream header(line);
  std::string magic;
  std::string n_field;
  std::string lambda_field;
  std::string method_field;
  header >> magic >> n_field >> lambda_field >> method_field;
  if (magic != "hspline-model" || n_field.rfind("n=", 0) != 0 || lambda_field.rfind("lambda=", 0) != 0 ||
      method_field.rfind("method=", 0) != 0) {
    throw InvalidArgument("not a model file (bad header line)");
  }

  StpsModel model;
  std::size_t n = 0;
  try {
    n = std::stoull(n_field.substr(2));
    model.lambda = std::stod(lambda_field.substr(7));
  } catch (const std::exception&) {
    throw InvalidArgument("model header has malformed numbers");
  }
  model.report.method = parse_method(method_field.substr(7));

  auto read_number = [&in](const char* what) {
    std::string text;
    if (!std::getline(in, text)) throw InvalidArgument(std::string("model file truncated while reading ") + what);
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(text, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0) throw InvalidArgument(std::string("model file: bad number in ") + what);
    return v;
  };
  model.coeffs.c.resize(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) model.coeffs.c(static_cast<Eigen::Index>(i)) = read_number("c");
  for (Eigen::Index i = 0; i < 3; ++i) model.coeffs.d(i) = read_number("d");

  model.fit_sites = read_observations_csv(in).sites;
  if (model.fit_sites.size() != n) throw InvalidArgument("model file: site count does not match header");
  return model;
}

}  // namespace hspline
