#include "lowrank/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "lowrank/matrix_market.hpp"
#include "lowrank/model.hpp"
#include "lowrank/svg.hpp"

namespace lowrank {

namespace {

using nlohmann::json;

std::string format_double(double v) {
  if (std::isnan(v)) return "";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

double parse_double_field(const std::string& s) {
  if (s.empty()) return std::numeric_limits<double>::quiet_NaN();
  return std::stod(s);
}

Provenance provenance_from_string(const std::string& s) {
  if (s == "optimal") return Provenance::optimal;
  if (s == "hessian") return Provenance::hessian;
  if (s == "prior") return Provenance::prior;
  if (s == "frobenius") return Provenance::frobenius;
  if (s == "bfgs") return Provenance::bfgs;
  throw ConfigError("unknown covariance method '" + s + "'");
}

MeanKind mean_kind_from_string(const std::string& s) {
  if (s == "low_rank") return MeanKind::low_rank;
  if (s == "low_rank_update") return MeanKind::low_rank_update;
  if (s == "cgls") return MeanKind::cgls_baseline;
  throw ConfigError("unknown mean approximator kind '" + s + "'");
}

Family family_from_string(const std::string& s) {
  if (s == "synthetic") return Family::synthetic;
  if (s == "tomography") return Family::tomography;
  if (s == "heat") return Family::heat;
  throw ConfigError("unknown experiment family '" + s + "'");
}

TensorField tensor_from_string(const std::string& s) {
  if (s == "identity") return TensorField::identity;
  if (s == "rotating_anisotropic") return TensorField::rotating_anisotropic;
  throw ConfigError("unknown tensor field '" + s + "'");
}

std::string tensor_to_string(TensorField t) {
  return t == TensorField::identity ? "identity" : "rotating_anisotropic";
}

json spde_to_json(const SpdePriorConfig& c) {
  return json{{"kappa", c.kappa},
              {"gamma", c.gamma},
              {"tensor", tensor_to_string(c.tensor)},
              {"aniso_ratio", c.aniso_ratio}};
}

void spde_from_json(const json& j, SpdePriorConfig& c) {
  c.kappa = j.value("kappa", c.kappa);
  c.gamma = j.value("gamma", c.gamma);
  if (j.contains("tensor")) c.tensor = tensor_from_string(j.at("tensor"));
  c.aniso_ratio = j.value("aniso_ratio", c.aniso_ratio);
}

// simple index-based parallel for; tasks see their own index only
void parallel_for(Index count, int threads, const std::function<void(Index)>& fn) {
  threads = std::max(1, std::min<int>(threads, static_cast<int>(count)));
  if (threads == 1) {
    for (Index i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<Index> next{0};
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(static_cast<size_t>(threads));
  for (int t = 0; t < threads; ++t) {
    pool.emplace_back([&, t] {
      try {
        for (;;) {
          const Index i = next.fetch_add(1);
          if (i >= count) break;
          fn(i);
        }
      } catch (...) {
        errors[static_cast<size_t>(t)] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace

std::string to_string(Family f) {
  switch (f) {
    case Family::synthetic: return "synthetic";
    case Family::tomography: return "tomography";
    case Family::heat: return "heat";
  }
  return "?";
}

void ExperimentSpec::validate() const {
  if (ranks.empty()) throw ConfigError("spec: ranks must not be empty");
  if (!std::is_sorted(ranks.begin(), ranks.end()))
    throw ConfigError("spec: ranks must be sorted ascending");
  if (ranks.front() < 0) throw ConfigError("spec: ranks must be non-negative");
  if (realizations < 1) throw ConfigError("spec: realizations must be >= 1");
  if (methods.empty() && mean_kinds.empty())
    throw ConfigError("spec: nothing to do (no methods, no mean kinds)");
  if (mc_samples < 0) throw ConfigError("spec: mc_samples must be >= 0");
  if (threads < 1) throw ConfigError("spec: threads must be >= 1");
  if (heat_conductivity != "constant" && heat_conductivity != "zero" &&
      heat_conductivity != "sine")
    throw ConfigError("spec: unknown heat conductivity preset '" +
                      heat_conductivity + "'");
}

HeatProblemConfig ExperimentSpec::heat_config() const {
  HeatProblemConfig cfg;
  cfg.grid_n = heat_grid_n;
  cfg.dt = heat_dt;
  cfg.num_times = heat_num_times;
  cfg.sensor_grid = heat_sensor_grid;
  cfg.noise_sigma = heat_noise_sigma;
  cfg.prior = heat_prior;
  const double scale = heat_conductivity_value;
  if (heat_conductivity == "zero")
    cfg.conductivity = [](double, double) { return 0.0; };
  else if (heat_conductivity == "sine")
    cfg.conductivity = [scale](double x, double y) {
      return scale * (1.0 + 0.5 * std::sin(2.0 * M_PI * x) * std::sin(2.0 * M_PI * y));
    };
  else
    cfg.conductivity = [scale](double, double) { return scale; };
  return cfg;
}

ExperimentSpec ExperimentSpec::from_json_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("spec: invalid JSON: ") + e.what());
  }
  ExperimentSpec s;
  try {
    s.family = family_from_string(j.at("family"));
    for (const auto& r : j.at("ranks")) s.ranks.push_back(r.get<Index>());
    s.realizations = j.value("realizations", s.realizations);
    s.seed = j.value("seed", s.seed);
    if (j.contains("methods")) {
      s.methods.clear();
      for (const auto& m : j.at("methods"))
        s.methods.push_back(provenance_from_string(m));
    }
    if (j.contains("mean_kinds"))
      for (const auto& m : j.at("mean_kinds"))
        s.mean_kinds.push_back(mean_kind_from_string(m));
    s.mc_samples = j.value("mc_samples", s.mc_samples);
    s.measure_cpu_time = j.value("measure_cpu_time", s.measure_cpu_time);
    s.export_problem = j.value("export_problem", s.export_problem);
    s.dense_fallback_dim = j.value("dense_fallback_dim", s.dense_fallback_dim);
    s.threads = j.value("threads", s.threads);
    s.output_dir = j.value("output", s.output_dir);
    if (j.contains("synthetic")) {
      const json& sj = j.at("synthetic");
      s.synthetic.dim = sj.value("dim", s.synthetic.dim);
      if (sj.contains("hessian")) {
        s.synthetic.lambda0 = sj.at("hessian").value("lambda0", s.synthetic.lambda0);
        s.synthetic.alpha = sj.at("hessian").value("alpha", s.synthetic.alpha);
        s.synthetic.tau = sj.at("hessian").value("tau", s.synthetic.tau);
      }
      if (sj.contains("prior")) {
        s.synthetic.lambda0_tilde =
            sj.at("prior").value("lambda0", s.synthetic.lambda0_tilde);
        s.synthetic.alpha_tilde = sj.at("prior").value("alpha", s.synthetic.alpha_tilde);
        s.synthetic.tau_tilde = sj.at("prior").value("tau", s.synthetic.tau_tilde);
      }
    }
    if (j.contains("tomography")) {
      const json& tj = j.at("tomography");
      s.tomography.grid_n = tj.value("grid_n", s.tomography.grid_n);
      s.tomography.num_sources = tj.value("num_sources", s.tomography.num_sources);
      s.tomography.rays_per_source =
          tj.value("rays_per_source", s.tomography.rays_per_source);
      if (tj.contains("coverage")) {
        const std::string c = tj.at("coverage");
        if (c == "limited_90deg")
          s.tomography.coverage = ScanCoverage::limited_90deg;
        else if (c == "full_360deg")
          s.tomography.coverage = ScanCoverage::full_360deg;
        else
          throw ConfigError("unknown tomography coverage '" + c + "'");
      }
      s.tomography.noise_sigma = tj.value("noise_sigma", s.tomography.noise_sigma);
      if (tj.contains("prior")) spde_from_json(tj.at("prior"), s.tomography.prior);
    }
    if (j.contains("heat")) {
      const json& hj = j.at("heat");
      s.heat_grid_n = hj.value("grid_n", s.heat_grid_n);
      s.heat_dt = hj.value("dt", s.heat_dt);
      s.heat_num_times = hj.value("num_times", s.heat_num_times);
      s.heat_sensor_grid = hj.value("sensor_grid", s.heat_sensor_grid);
      s.heat_noise_sigma = hj.value("noise_sigma", s.heat_noise_sigma);
      s.heat_conductivity = hj.value("conductivity", s.heat_conductivity);
      s.heat_conductivity_value =
          hj.value("conductivity_value", s.heat_conductivity_value);
      if (hj.contains("prior")) spde_from_json(hj.at("prior"), s.heat_prior);
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("spec: ") + e.what());
  }
  s.validate();
  return s;
}

ExperimentSpec ExperimentSpec::from_json_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open spec file '" + path + "'");
  std::stringstream buf;
  buf << is.rdbuf();
  return from_json_text(buf.str());
}

std::string ExperimentSpec::canonical_json() const {
  json j;
  j["family"] = to_string(family);
  j["ranks"] = ranks;
  j["realizations"] = realizations;
  j["seed"] = seed;
  std::vector<std::string> ms;
  for (auto m : methods) ms.push_back(to_string(m));
  j["methods"] = ms;
  std::vector<std::string> ks;
  for (auto k : mean_kinds) ks.push_back(to_string(k));
  j["mean_kinds"] = ks;
  j["mc_samples"] = mc_samples;
  j["measure_cpu_time"] = measure_cpu_time;
  j["dense_fallback_dim"] = dense_fallback_dim;
  switch (family) {
    case Family::synthetic:
      j["synthetic"] = {{"dim", synthetic.dim},
                        {"hessian",
                         {{"lambda0", synthetic.lambda0},
                          {"alpha", synthetic.alpha},
                          {"tau", synthetic.tau}}},
                        {"prior",
                         {{"lambda0", synthetic.lambda0_tilde},
                          {"alpha", synthetic.alpha_tilde},
                          {"tau", synthetic.tau_tilde}}}};
      break;
    case Family::tomography:
      j["tomography"] = {
          {"grid_n", tomography.grid_n},
          {"num_sources", tomography.num_sources},
          {"rays_per_source", tomography.rays_per_source},
          {"coverage", tomography.coverage == ScanCoverage::limited_90deg
                           ? "limited_90deg"
                           : "full_360deg"},
          {"noise_sigma", tomography.noise_sigma},
          {"prior", spde_to_json(tomography.prior)}};
      break;
    case Family::heat:
      j["heat"] = {{"grid_n", heat_grid_n},
                   {"dt", heat_dt},
                   {"num_times", heat_num_times},
                   {"sensor_grid", heat_sensor_grid},
                   {"noise_sigma", heat_noise_sigma},
                   {"conductivity", heat_conductivity},
                   {"conductivity_value", heat_conductivity_value},
                   {"prior", spde_to_json(heat_prior)}};
      break;
  }
  return j.dump();  // nlohmann object keys are sorted
}

std::string ExperimentSpec::config_hash() const {
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(fnv1a64(canonical_json())));
  return buf;
}

// ---------------------------------------------------------------------------
// Result table IO

void ResultTable::write_csv(const std::string& path) const {
  std::ofstream os(path);
  if (!os) throw Error("cannot open '" + path + "' for writing");
  os << "# lowrank-results v" << kSchemaVersion << "\n";
  os << "family,method,r,realization,forstner,kl,hellinger,frobenius,"
        "risk_theory,risk_mc,rel_cpu_time,seed\n";
  for (const auto& row : rows) {
    os << row.family << "," << row.method << "," << row.r << "," << row.realization
       << "," << format_double(row.forstner) << "," << format_double(row.kl) << ","
       << format_double(row.hellinger) << "," << format_double(row.frobenius) << ","
       << format_double(row.risk_theory) << "," << format_double(row.risk_mc) << ","
       << format_double(row.rel_cpu_time) << "," << row.seed << "\n";
  }
}

ResultTable ResultTable::read_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw Error("cannot open '" + path + "' for reading");
  ResultTable table;
  std::string line;
  long line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    if (line.rfind("family,", 0) == 0) continue;  // header
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (!ss && !line.empty() && line.back() == ',') fields.push_back("");
    if (fields.size() != 12)
      throw ParseError("results csv: expected 12 fields, got " +
                           std::to_string(fields.size()),
                       line_no);
    try {
      ResultRow row;
      row.family = fields[0];
      row.method = fields[1];
      row.r = std::stol(fields[2]);
      row.realization = std::stol(fields[3]);
      row.forstner = parse_double_field(fields[4]);
      row.kl = parse_double_field(fields[5]);
      row.hellinger = parse_double_field(fields[6]);
      row.frobenius = parse_double_field(fields[7]);
      row.risk_theory = parse_double_field(fields[8]);
      row.risk_mc = parse_double_field(fields[9]);
      row.rel_cpu_time = parse_double_field(fields[10]);
      row.seed = std::stoull(fields[11]);
      table.rows.push_back(std::move(row));
    } catch (const std::exception&) {
      throw ParseError("results csv: malformed row '" + line + "'", line_no);
    }
  }
  return table;
}

// ---------------------------------------------------------------------------
// Runner

namespace {

struct DistanceSet {
  double forstner, kl, hellinger, frobenius;
};

// All pencil-based distances from one eigenvalue pass.
DistanceSet distances(const SpdMatrix& gamma_pos, const MatrixXd& gamma_hat) {
  const SpdMatrix approx(gamma_hat, "approximate posterior");
  const VectorXd sigma = pencil_eigenvalues(gamma_pos, approx);
  double forstner = 0, kl = 0, log_prod = 0.5 * sigma.size() * std::log(2.0);
  for (Index i = 0; i < sigma.size(); ++i) {
    const double s = sigma[i];
    const double l = std::log(s);
    forstner += l * l;
    kl += 0.5 * (s - l - 1.0);
    log_prod += 0.25 * l - 0.5 * std::log1p(s);
  }
  const double hell_sq = std::max(0.0, 1.0 - std::exp(log_prod));
  return DistanceSet{std::sqrt(forstner), kl, std::sqrt(hell_sq),
                     (gamma_pos.mat() - gamma_hat).norm()};
}

struct RealizationOutput {
  std::vector<ResultRow> rows;
  std::vector<MeanErrorRow> mean_errors;
  VectorXd delta_sq;
};

// Everything the per-realization measurement needs about one model.
struct ProblemContext {
  GaussianLinearModel model;
  VectorXd x_true;           // may be empty for synthetic (drawn per realization)
  std::optional<VectorXd> fixed_y;  // measured data for realization 0
};

CovarianceApproximation build_method(Provenance method,
                                     const GaussianLinearModel& model,
                                     const PencilDecomposition& pencil, Index r,
                                     std::uint64_t seed,
                                     Index dense_fallback_dim) {
  switch (method) {
    case Provenance::optimal: return optimal_covariance_update(pencil, r);
    case Provenance::hessian: return hessian_based_update(model, r);
    case Provenance::prior: return prior_based_update(model, r);
    case Provenance::frobenius:
      return frobenius_based_update(model, r, dense_fallback_dim);
    case Provenance::bfgs: return bfgs_based_update(model, r, seed);
  }
  throw Error("unknown covariance method");
}

RealizationOutput measure_realization(const ExperimentSpec& spec,
                                      const ProblemContext& ctx, Index realization,
                                      bool covariance_rows) {
  const GaussianLinearModel& model = ctx.model;
  const Index n = model.param_dim();
  const std::uint64_t seed_r = CounterRng::derive(spec.seed, 1000 + realization);

  const ExactPosterior exact = exact_posterior(model, spec.dense_fallback_dim);
  const PencilDecomposition pencil = pencil_decomposition(model, n);
  const SquareRootFactor s_pr = spd_sqrt(model.gamma_pr);
  const SquareRootFactor s_obs = spd_sqrt(model.gamma_obs);

  RealizationOutput out;
  out.delta_sq = pencil.delta_sq;

  if (covariance_rows) {
    for (Provenance method : spec.methods) {
      for (Index r : spec.ranks) {
        if (r > n) continue;
        const CovarianceApproximation approx = build_method(
            method, model, pencil, r, seed_r, spec.dense_fallback_dim);
        const DistanceSet d = distances(exact.gamma_pos, approx.posterior(model.gamma_pr));
        ResultRow row;
        row.family = to_string(spec.family);
        row.method = to_string(method);
        row.r = r;
        row.realization = realization;
        row.forstner = d.forstner;
        row.kl = d.kl;
        row.hellinger = d.hellinger;
        row.frobenius = d.frobenius;
        row.seed = seed_r;
        out.rows.push_back(std::move(row));
      }
    }
  }

  if (spec.mean_kinds.empty()) return out;

  // data realization for the error curves
  VectorXd x_true = ctx.x_true;
  if (x_true.size() == 0)
    x_true = sample_prior(model, 1, CounterRng::derive(seed_r, 0x7a0e)).col(0);
  VectorXd y;
  if (ctx.fixed_y && realization == 0)
    y = *ctx.fixed_y;
  else
    y = simulate_data(model, x_true, CounterRng::derive(seed_r, 0x7a0f));
  const VectorXd mu_exact = exact.mean_map * y;
  const double mu_norm =
      std::sqrt(mu_exact.dot(exact.precision.apply(mu_exact)));

  const Index k_triplets = std::min(model.data_dim(), n);
  const GsvdTriplets triplets = gsvd_triplets(model.g, s_pr, s_obs, k_triplets);

  for (MeanKind kind : spec.mean_kinds) {
    for (Index r : spec.ranks) {
      if (kind == MeanKind::low_rank && r > k_triplets) continue;
      if (kind == MeanKind::low_rank_update && r > n) continue;
      MeanApproximator approx = [&] {
        switch (kind) {
          case MeanKind::low_rank: return build_low_rank(triplets, r);
          case MeanKind::low_rank_update:
            return build_low_rank_update(optimal_covariance_update(pencil, r), model);
          case MeanKind::cgls_baseline: return build_cgls_baseline(model, r);
        }
        throw Error("unknown mean kind");
      }();

      ResultRow row;
      row.family = to_string(spec.family);
      row.method = to_string(kind);
      row.r = r;
      row.realization = realization;
      row.seed = seed_r;
      if (kind != MeanKind::cgls_baseline)
        row.risk_theory = theoretical_risk(kind, pencil.delta_sq, r, n);
      if (spec.mc_samples > 0) {
        const RiskReport mc = monte_carlo_risk(approx, model, spec.mc_samples,
                                               CounterRng::derive(seed_r, 0x3c),
                                               pencil.delta_sq);
        row.risk_mc = mc.risk_monte_carlo;
      }
      if (spec.measure_cpu_time) row.rel_cpu_time = relative_cpu_time(approx, model);

      const VectorXd err = approx.apply(y) - mu_exact;
      const double err_sq = err.dot(exact.precision.apply(err));
      MeanErrorRow mer;
      mer.kind = to_string(kind);
      mer.r = r;
      mer.realization = realization;
      mer.err_sq = err_sq;
      mer.err_normalized = mu_norm > 0 ? std::sqrt(err_sq) / mu_norm : 0.0;
      out.mean_errors.push_back(std::move(mer));
      out.rows.push_back(std::move(row));
    }
  }
  return out;
}

void sort_rows(std::vector<ResultRow>& rows) {
  std::sort(rows.begin(), rows.end(), [](const ResultRow& a, const ResultRow& b) {
    if (a.method != b.method) return a.method < b.method;
    if (a.r != b.r) return a.r < b.r;
    return a.realization < b.realization;
  });
}

std::vector<double> median_curve(const std::vector<ResultRow>& rows,
                                 const std::string& method,
                                 const std::vector<Index>& ranks,
                                 double ResultRow::*field) {
  std::vector<double> medians;
  for (Index r : ranks) {
    std::vector<double> vals;
    for (const auto& row : rows)
      if (row.method == method && row.r == r && std::isfinite(row.*field))
        vals.push_back(row.*field);
    if (vals.empty()) {
      medians.push_back(std::numeric_limits<double>::quiet_NaN());
      continue;
    }
    std::sort(vals.begin(), vals.end());
    const size_t mid = vals.size() / 2;
    medians.push_back(vals.size() % 2 ? vals[mid]
                                      : 0.5 * (vals[mid - 1] + vals[mid]));
  }
  return medians;
}

void write_plots(const ExperimentSpec& spec, const RunArtifacts& artifacts,
                 const std::string& dir) {
  const auto& rows = artifacts.table.rows;
  std::vector<double> ranks_x(spec.ranks.begin(), spec.ranks.end());

  // distance vs rank, medians over realizations
  {
    std::vector<svg::Series> series;
    for (Provenance m : spec.methods) {
      svg::Series s;
      s.label = to_string(m);
      s.x = ranks_x;
      s.y = median_curve(rows, to_string(m), spec.ranks, &ResultRow::forstner);
      series.push_back(std::move(s));
    }
    if (!series.empty())
      svg::write_line_chart(dir + "/forstner_vs_rank.svg", series,
                            {"Forstner distance to exact posterior vs update rank",
                             "rank of the update", "Forstner distance", true});
  }
  // difference to the optimal curve
  {
    const auto opt = median_curve(rows, "optimal", spec.ranks, &ResultRow::forstner);
    std::vector<svg::Series> series;
    for (Provenance m : spec.methods) {
      if (m == Provenance::optimal) continue;
      svg::Series s;
      s.label = to_string(m) + " - optimal";
      s.x = ranks_x;
      s.y = median_curve(rows, to_string(m), spec.ranks, &ResultRow::forstner);
      for (size_t i = 0; i < s.y.size(); ++i) s.y[i] -= opt[i];
      series.push_back(std::move(s));
    }
    if (!series.empty())
      svg::write_line_chart(dir + "/distance_diff_vs_optimal.svg", series,
                            {"Distance gap to the optimal update", "rank of the update",
                             "Forstner distance difference", true});
  }
  // mean error curves
  if (!artifacts.mean_errors.empty()) {
    std::vector<svg::Series> series;
    for (MeanKind k : spec.mean_kinds) {
      svg::Series s;
      s.label = to_string(k);
      for (Index r : spec.ranks) {
        std::vector<double> vals;
        for (const auto& e : artifacts.mean_errors)
          if (e.kind == to_string(k) && e.r == r) vals.push_back(e.err_normalized);
        if (vals.empty()) continue;
        std::sort(vals.begin(), vals.end());
        s.x.push_back(static_cast<double>(r));
        s.y.push_back(vals[vals.size() / 2]);
      }
      series.push_back(std::move(s));
    }
    svg::write_line_chart(dir + "/mean_error_vs_order.svg", series,
                          {"Posterior-mean approximation error vs order",
                           "order of the approximation", "normalized error", true});
  }
  // pencil spectrum decay
  if (artifacts.delta_sq.size() > 0) {
    svg::Series s;
    s.label = "median delta_i^2";
    for (Index i = 0; i < artifacts.delta_sq.rows(); ++i) {
      VectorXd row = artifacts.delta_sq.row(i);
      std::sort(row.begin(), row.end());
      s.x.push_back(static_cast<double>(i + 1));
      s.y.push_back(row[row.size() / 2]);
    }
    svg::write_line_chart(dir + "/eigenvalue_decay.svg", {s},
                          {"Generalized eigenvalues of the (H, prior precision) pencil",
                           "index", "delta_i^2", true});
  }
}

void render_tomography(const TomographyProblem& problem,
                       const TomographySetup& setup, const std::string& dir) {
  std::vector<svg::Segment> segments;
  for (size_t r = 0; r < problem.rays.size(); r += 25)
    segments.push_back({problem.rays[r].src.x(), problem.rays[r].src.y(),
                        problem.rays[r].dst.x(), problem.rays[r].dst.y(),
                        "#cccccc", 0.4});
  std::vector<svg::CircleMark> circles;
  for (const CircleSpec& c : truth_geometry_circles(setup))
    circles.push_back({c.x, c.y, c.radius, c.density > 0 ? "#333333" : "#999999",
                       false});
  for (size_t r = 0; r < problem.rays.size();
       r += static_cast<size_t>(setup.rays_per_source))
    circles.push_back({problem.rays[r].src.x(), problem.rays[r].src.y(), 0.012,
                       "#d62728", true});
  svg::write_scene(dir + "/tomography_setup.svg", segments, circles,
                   "acquisition geometry and truth object");

  const Index n = setup.grid_n;
  MatrixXd field(n, n);
  for (Index j = 0; j < n; ++j)
    for (Index i = 0; i < n; ++i) field(j, i) = problem.x_true[j * n + i];
  svg::write_heatmap(dir + "/tomography_truth.svg", field, "truth densities");
}

void render_heat(const HeatProblem& problem, const HeatProblemConfig& cfg,
                 const std::string& dir) {
  const Index n = cfg.grid_n;
  MatrixXd field(n, n);
  for (Index j = 0; j < n; ++j)
    for (Index i = 0; i < n; ++i) field(j, i) = problem.x_true[j * n + i];
  std::vector<svg::Overlay> sensors;
  for (Index cell : problem.sensor_cells) {
    const Index i = cell % n, j = cell / n;
    sensors.push_back({(i + 0.5) / static_cast<double>(n),
                       (j + 0.5) / static_cast<double>(n), "#000000"});
  }
  svg::write_heatmap(dir + "/heat_truth.svg", field,
                     "initial condition and sensors", sensors);
}

}  // namespace

RunArtifacts run(const ExperimentSpec& spec) {
  spec.validate();
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(spec.output_dir, ec);
  if (ec || !fs::is_directory(spec.output_dir))
    throw ConfigError("cannot create output directory '" + spec.output_dir + "'");

  // family-specific model construction
  std::optional<ProblemContext> shared_ctx;
  if (spec.family == Family::tomography) {
    TomographySetup setup = spec.tomography;
    setup.prior.grid_n = setup.grid_n;
    TomographyProblem problem = make_tomography(setup, spec.seed);
    if (spec.export_problem) {
      save_model(problem.model, spec.output_dir + "/model", "tomography", spec.seed);
      render_tomography(problem, setup, spec.output_dir);
    }
    shared_ctx = ProblemContext{std::move(problem.model), std::move(problem.x_true),
                                std::move(problem.y)};
  } else if (spec.family == Family::heat) {
    const HeatProblemConfig heat_cfg = spec.heat_config();
    HeatProblem problem = make_heat(heat_cfg, spec.seed);
    if (spec.export_problem) {
      save_model(problem.model, spec.output_dir + "/model", "heat", spec.seed);
      render_heat(problem, heat_cfg, spec.output_dir);
    }
    shared_ctx = ProblemContext{std::move(problem.model), std::move(problem.x_true),
                                std::move(problem.y)};
  }

  std::vector<RealizationOutput> outputs(static_cast<size_t>(spec.realizations));
  parallel_for(spec.realizations, spec.threads, [&](Index rlz) {
    if (shared_ctx) {
      // fixed geometry; realizations vary the measured data only, so the
      // covariance rows are computed once
      outputs[static_cast<size_t>(rlz)] =
          measure_realization(spec, *shared_ctx, rlz, rlz == 0);
    } else {
      SyntheticSpectrumConfig cfg = spec.synthetic;
      cfg.seed = CounterRng::derive(spec.seed, 500 + rlz);
      SyntheticProblem problem = make_synthetic(cfg);
      ProblemContext ctx{std::move(problem.model), VectorXd(), std::nullopt};
      outputs[static_cast<size_t>(rlz)] = measure_realization(spec, ctx, rlz, true);
    }
  });

  RunArtifacts artifacts;
  for (auto& o : outputs) {
    artifacts.table.rows.insert(artifacts.table.rows.end(), o.rows.begin(),
                                o.rows.end());
    artifacts.mean_errors.insert(artifacts.mean_errors.end(), o.mean_errors.begin(),
                                 o.mean_errors.end());
  }
  sort_rows(artifacts.table.rows);
  if (!outputs.empty() && outputs[0].delta_sq.size() > 0) {
    artifacts.delta_sq =
        MatrixXd(outputs[0].delta_sq.size(), spec.realizations);
    for (Index r = 0; r < spec.realizations; ++r)
      artifacts.delta_sq.col(r) = outputs[static_cast<size_t>(r)].delta_sq;
  }

  // persist results
  const std::string dir = spec.output_dir;
  artifacts.table.write_csv(dir + "/results.csv");
  {
    std::ofstream os(dir + "/mean_errors.csv");
    os << "kind,r,realization,err_sq,err_normalized\n";
    for (const auto& e : artifacts.mean_errors)
      os << e.kind << "," << e.r << "," << e.realization << ","
         << format_double(e.err_sq) << "," << format_double(e.err_normalized) << "\n";
  }
  if (artifacts.delta_sq.size() > 0) {
    std::ofstream os(dir + "/eigenvalues.csv");
    os << "index,realization,delta_sq\n";
    for (Index r = 0; r < artifacts.delta_sq.cols(); ++r)
      for (Index i = 0; i < artifacts.delta_sq.rows(); ++i)
        os << (i + 1) << "," << r << "," << format_double(artifacts.delta_sq(i, r))
           << "\n";
  }
  {
    nlohmann::json manifest{
        {"schema_version", ResultTable::kSchemaVersion},
        {"library_version", kLibraryVersion},
        {"config_hash", spec.config_hash()},
        {"seed", spec.seed},
        {"config", nlohmann::json::parse(spec.canonical_json())},
        {"thresholds",
         {{"prior_gap_fraction", 0.15}, {"hessian_gap_fraction", 0.15}}}};
    std::ofstream os(dir + "/manifest.json");
    os << manifest.dump(2) << "\n";
  }
  write_plots(spec, artifacts, dir);
  return artifacts;
}

ReportSummary report(const ResultTable& table, const std::string& output_dir) {
  if (table.rows.empty()) throw EmptyResultError("report: empty result table");

  ReportSummary summary;
  std::vector<std::string> methods;
  std::vector<Index> ranks;
  for (const auto& row : table.rows) {
    if (std::find(methods.begin(), methods.end(), row.method) == methods.end())
      methods.push_back(row.method);
    if (std::find(ranks.begin(), ranks.end(), row.r) == ranks.end())
      ranks.push_back(row.r);
  }
  std::sort(ranks.begin(), ranks.end());

  std::ostringstream text;
  text << "experiment report (" << table.rows.front().family << ")\n";
  for (const auto& m : methods) {
    const auto fors = median_curve(table.rows, m, ranks, &ResultRow::forstner);
    const auto risk = median_curve(table.rows, m, ranks, &ResultRow::risk_theory);
    const auto cpu = median_curve(table.rows, m, ranks, &ResultRow::rel_cpu_time);
    for (size_t i = 0; i < ranks.size(); ++i) {
      if (std::isfinite(fors[i])) summary.median_forstner[m][ranks[i]] = fors[i];
      if (std::isfinite(risk[i])) summary.median_risk_theory[m][ranks[i]] = risk[i];
      if (std::isfinite(cpu[i])) summary.median_rel_cpu_time[m][ranks[i]] = cpu[i];
    }
  }

  // crossover detection: the spectral decrement delta_{r+1}^2 equals the
  // drop of the low-rank theoretical risk between consecutive orders; the
  // crossover is the first listed order whose next per-unit drop is < 1.
  if (summary.median_risk_theory.count("low_rank")) {
    const auto& risk = summary.median_risk_theory.at("low_rank");
    for (size_t i = 0; i + 1 < ranks.size(); ++i) {
      const Index r0 = ranks[i], r1 = ranks[i + 1];
      if (!risk.count(r0) || !risk.count(r1)) continue;
      const double decrement = (risk.at(r0) - risk.at(r1)) / (r1 - r0);
      if (decrement < 1.0) {
        summary.crossover_rank = r0;
        break;
      }
    }
  }

  for (const auto& m : methods) {
    text << "method " << m << ":\n";
    if (summary.median_forstner.count(m))
      for (const auto& [r, v] : summary.median_forstner.at(m))
        text << "  r=" << r << "  forstner=" << v << "\n";
    if (summary.median_risk_theory.count(m))
      for (const auto& [r, v] : summary.median_risk_theory.at(m))
        text << "  r=" << r << "  risk=" << v << "\n";
  }
  if (summary.crossover_rank)
    text << "mean-approximator crossover order: " << *summary.crossover_rank << "\n";
  if (!summary.median_rel_cpu_time.empty()) {
    text << "relative cpu time (median):\n";
    for (const auto& [m, curve] : summary.median_rel_cpu_time)
      for (const auto& [r, v] : curve)
        text << "  " << m << " r=" << r << "  " << v << "\n";
  }
  summary.text = text.str();

  if (!output_dir.empty()) {
    std::ofstream os(output_dir + "/summary.txt");
    if (!os) throw Error("cannot write summary in " + output_dir);
    os << summary.text;
    std::vector<svg::Series> series;
    for (const auto& [m, curve] : summary.median_forstner) {
      svg::Series s;
      s.label = m;
      for (const auto& [r, v] : curve) {
        s.x.push_back(static_cast<double>(r));
        s.y.push_back(v);
      }
      series.push_back(std::move(s));
    }
    if (!series.empty())
      svg::write_line_chart(output_dir + "/report_forstner.svg", series,
                            {"Median Forstner distance vs rank", "rank",
                             "Forstner distance", true});
  }
  return summary;
}

}  // namespace lowrank
