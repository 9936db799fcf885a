#ifndef LOWRANK_EXPERIMENT_HPP
#define LOWRANK_EXPERIMENT_HPP

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "lowrank/covapprox.hpp"
#include "lowrank/meanapprox.hpp"
#include "lowrank/problems.hpp"

namespace lowrank {

inline constexpr const char* kLibraryVersion = "0.1.0";

enum class Family { synthetic, tomography, heat };

std::string to_string(Family f);

// Declarative description of one experiment run. The JSON schema mirrors
// these fields; the README documents it.
struct ExperimentSpec {
  Family family = Family::synthetic;
  std::vector<Index> ranks;  // sorted ascending
  Index realizations = 1;
  std::uint64_t seed = 0;
  std::vector<Provenance> methods{Provenance::optimal};
  std::vector<MeanKind> mean_kinds;
  Index mc_samples = 0;  // 0 disables Monte-Carlo risk
  bool measure_cpu_time = false;
  bool export_problem = false;  // serialize the model and render the setup
  Index dense_fallback_dim = kDenseFallbackDim;
  int threads = 1;
  std::string output_dir = "out";

  SyntheticSpectrumConfig synthetic;
  TomographySetup tomography;
  // heat configuration (conductivity given as a named preset)
  Index heat_grid_n = 20;
  double heat_dt = 2e-4;
  Index heat_num_times = 10;
  Index heat_sensor_grid = 3;
  double heat_noise_sigma = 1e-2;
  std::string heat_conductivity = "constant";  // constant | zero | sine
  double heat_conductivity_value = 1.0;
  SpdePriorConfig heat_prior{20, 8.0, 0.07, TensorField::rotating_anisotropic, 0.2};

  void validate() const;
  HeatProblemConfig heat_config() const;

  static ExperimentSpec from_json_file(const std::string& path);
  static ExperimentSpec from_json_text(const std::string& text);
  std::string canonical_json() const;  // semantic fields only, sorted keys
  std::string config_hash() const;     // fnv1a-64 of the canonical form
};

// One measurement row. Distance columns are filled for covariance methods,
// risk columns for mean approximators; the rest stay NaN (empty in CSV).
struct ResultRow {
  std::string family;
  std::string method;  // optimal|hessian|prior|frobenius|bfgs|low_rank|low_rank_update|cgls
  Index r = 0;
  Index realization = 0;
  double forstner = std::numeric_limits<double>::quiet_NaN();
  double kl = std::numeric_limits<double>::quiet_NaN();
  double hellinger = std::numeric_limits<double>::quiet_NaN();
  double frobenius = std::numeric_limits<double>::quiet_NaN();
  double risk_theory = std::numeric_limits<double>::quiet_NaN();
  double risk_mc = std::numeric_limits<double>::quiet_NaN();
  double rel_cpu_time = std::numeric_limits<double>::quiet_NaN();
  std::uint64_t seed = 0;
};

struct ResultTable {
  static constexpr int kSchemaVersion = 1;
  std::vector<ResultRow> rows;

  void write_csv(const std::string& path) const;
  static ResultTable read_csv(const std::string& path);
};

// Supplementary per-realization posterior-mean errors for one data draw.
struct MeanErrorRow {
  std::string kind;
  Index r = 0;
  Index realization = 0;
  double err_sq = 0;          // squared error weighted by the posterior precision
  double err_normalized = 0;  // relative to the exact posterior mean norm
};

struct RunArtifacts {
  ResultTable table;
  std::vector<MeanErrorRow> mean_errors;
  MatrixXd delta_sq;  // pencil spectrum per realization (k x realizations)
};

// Runs the experiment, writes results.csv, mean_errors.csv, eigenvalues.csv,
// manifest.json and the SVG plots into spec.output_dir. Deterministic for a
// fixed spec, independent of the thread count.
RunArtifacts run(const ExperimentSpec& spec);

struct ReportSummary {
  // median over realizations per (method, r)
  std::map<std::string, std::map<Index, double>> median_forstner;
  std::map<std::string, std::map<Index, double>> median_risk_theory;
  std::map<std::string, std::map<Index, double>> median_rel_cpu_time;
  std::optional<Index> crossover_rank;  // first r with next spectral decrement < 1
  std::string text;
};

// Aggregates a result table; writes summary.txt and aggregate plots when an
// output directory is given.
ReportSummary report(const ResultTable& table, const std::string& output_dir = "");

}  // namespace lowrank

#endif
