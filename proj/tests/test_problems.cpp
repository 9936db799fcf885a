#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include <Eigen/Dense>

#include "lowrank/covapprox.hpp"
#include "lowrank/metrics.hpp"
#include "lowrank/problems.hpp"

using namespace lowrank;
using Catch::Approx;

namespace {

// Independent chord-length oracle: march along the segment to bracket the
// inside/outside transitions of the unit square, then bisect each to 1e-12.
double ray_marching_chord(const Eigen::Vector2d& p0, const Eigen::Vector2d& p1) {
  auto inside = [](const Eigen::Vector2d& p) {
    return p.x() >= 0 && p.x() <= 1 && p.y() >= 0 && p.y() <= 1;
  };
  const int steps = 20000;
  double length = 0.0;
  double t_prev = 0.0;
  bool in_prev = inside(p0);
  double entry = in_prev ? 0.0 : -1.0;
  for (int k = 1; k <= steps; ++k) {
    const double t = static_cast<double>(k) / steps;
    const Eigen::Vector2d p = p0 + t * (p1 - p0);
    const bool in = inside(p);
    if (in != in_prev) {
      // bisect the transition
      double lo = t_prev, hi = t;
      for (int b = 0; b < 60; ++b) {
        const double mid = 0.5 * (lo + hi);
        if (inside(p0 + mid * (p1 - p0)) == in_prev)
          lo = mid;
        else
          hi = mid;
      }
      const double t_cross = 0.5 * (lo + hi);
      if (in_prev)
        length += t_cross - entry;
      else
        entry = t_cross;
    }
    in_prev = in;
    t_prev = t;
  }
  if (in_prev) length += 1.0 - entry;
  return length * (p1 - p0).norm();
}

}  // namespace

TEST_CASE("synthetic generator: orthogonality, spectra, reproducibility") {
  SyntheticSpectrumConfig cfg;
  cfg.dim = 30;
  cfg.seed = 5;
  SyntheticProblem problem = make_synthetic(cfg);

  // H realized through the forward operator
  const MatrixXd h = hessian(problem.model).materialize();
  CHECK((h - problem.hessian_dense).cwiseAbs().maxCoeff() <
        1e-10 * problem.hessian_dense.cwiseAbs().maxCoeff());

  // prescribed spectra match exactly
  EigenPairs he = sym_eig(problem.hessian_dense);
  EigenPairs pe = sym_eig(problem.model.gamma_pr.mat());
  CHECK((he.values - problem.hessian_spectrum).cwiseAbs().maxCoeff() < 1e-8);
  CHECK((pe.values - problem.prior_spectrum).cwiseAbs().maxCoeff() < 1e-10);

  // bitwise reproducibility
  SyntheticProblem again = make_synthetic(cfg);
  CHECK(again.hessian_dense == problem.hessian_dense);
  CHECK(again.model.gamma_pr.mat() == problem.model.gamma_pr.mat());
}

TEST_CASE("haar_orthogonal gives orthonormal frames with sane column statistics") {
  CounterRng rng(17);
  const Index n = 12;
  VectorXd mean_first = VectorXd::Zero(n);
  double mean_sq = 0.0;
  const int draws = 1000;
  for (int t = 0; t < draws; ++t) {
    const MatrixXd q = haar_orthogonal(n, rng);
    if (t < 5)
      CHECK((q.transpose() * q - MatrixXd::Identity(n, n)).cwiseAbs().maxCoeff() <
            1e-10);
    mean_first += q.col(0);
    mean_sq += q(0, 0) * q(0, 0);
  }
  // sphericity sanity: first column has zero mean and variance 1/n per entry
  CHECK(mean_first.cwiseAbs().maxCoeff() / draws < 0.05);
  CHECK(mean_sq / draws == Approx(1.0 / n).epsilon(0.2));
}

TEST_CASE("flat spectra make all reduction schemes equally good") {
  SyntheticSpectrumConfig cfg;
  cfg.dim = 12;
  cfg.alpha = 0.0;
  cfg.tau = 0.0;
  cfg.lambda0 = 7.0;
  cfg.alpha_tilde = 0.0;
  cfg.tau_tilde = 0.0;
  cfg.lambda0_tilde = 0.5;
  cfg.seed = 3;
  SyntheticProblem problem = make_synthetic(cfg);
  const ExactPosterior post = exact_posterior(problem.model);
  const PencilDecomposition pencil = pencil_decomposition(problem.model, 12);
  for (Index r : {Index(2), Index(6)}) {
    const double d_opt = forstner_distance(
        post.gamma_pos.mat(),
        optimal_covariance_update(pencil, r).posterior(problem.model.gamma_pr));
    const double d_hess = forstner_distance(
        post.gamma_pos.mat(),
        hessian_based_update(problem.model, r).posterior(problem.model.gamma_pr));
    const double d_prior = forstner_distance(
        post.gamma_pos.mat(),
        prior_based_update(problem.model, r).posterior(problem.model.gamma_pr));
    CHECK(d_hess == Approx(d_opt).margin(1e-8));
    CHECK(d_prior == Approx(d_opt).margin(1e-8));
  }
}

TEST_CASE("nearly flat hessian spectrum keeps the prior-based curve near optimal") {
  // spectra in the style of the first controlled-spectra figure
  SyntheticSpectrumConfig cfg;
  cfg.dim = 100;
  cfg.lambda0 = 500.0;
  cfg.alpha = 0.345;
  cfg.tau = 1e-6;
  cfg.lambda0_tilde = 1.0;
  cfg.alpha_tilde = 2.0;
  cfg.tau_tilde = 1e-6;
  cfg.seed = 11;
  SyntheticProblem problem = make_synthetic(cfg);
  const ExactPosterior post = exact_posterior(problem.model);
  const PencilDecomposition pencil = pencil_decomposition(problem.model, 100);
  const double d_opt_0 =
      forstner_distance(post.gamma_pos.mat(), problem.model.gamma_pr.mat());
  double max_gap = 0.0;
  for (Index r = 0; r <= 40; r += 5) {
    const double d_opt = forstner_distance(
        post.gamma_pos.mat(),
        optimal_covariance_update(pencil, r).posterior(problem.model.gamma_pr));
    const double d_prior = forstner_distance(
        post.gamma_pos.mat(),
        prior_based_update(problem.model, r).posterior(problem.model.gamma_pr));
    CHECK(d_prior >= d_opt - 1e-10);
    max_gap = std::max(max_gap, d_prior - d_opt);
  }
  CHECK(max_gap < 0.15 * d_opt_0);
}

TEST_CASE("spde prior: stationary operator has symmetric reflected stencil") {
  SpdePriorConfig cfg;
  cfg.grid_n = 8;
  cfg.kappa = 10.0;
  cfg.gamma = 5.0;
  SpdePrior prior = make_spde_prior(cfg);
  const Index n = cfg.grid_n;
  const MatrixXd p = prior.precision.mat();
  // reflection i -> n-1-i of both grid axes leaves the stencil invariant
  auto reflect = [n](Index cell) {
    const Index i = cell % n, j = cell / n;
    return (n - 1 - j) * n + (n - 1 - i);
  };
  for (Index a = 0; a < n * n; a += 7)
    for (Index b = 0; b < n * n; b += 5)
      CHECK(p(a, b) == Approx(p(reflect(a), reflect(b))).margin(1e-10 * p(0, 0)));
}

TEST_CASE("spde prior: large kappa concentrates the precision on the diagonal") {
  SpdePriorConfig cfg;
  cfg.grid_n = 8;
  cfg.kappa = 1e3;
  cfg.gamma = 1e-3;
  SpdePrior prior = make_spde_prior(cfg);
  const MatrixXd p = prior.precision.mat();
  double off_mass = 0.0, diag_mass = 0.0;
  for (Index i = 0; i < p.rows(); ++i) {
    diag_mass += std::abs(p(i, i));
    for (Index j = 0; j < p.cols(); ++j)
      if (i != j) off_mass += std::abs(p(i, j));
  }
  CHECK(off_mass < 0.01 * diag_mass);
}

TEST_CASE("spde prior: factors are mutually consistent") {
  SpdePriorConfig cfg;
  cfg.grid_n = 6;
  cfg.kappa = 8.0;
  cfg.gamma = 2.0;
  SpdePrior prior = make_spde_prior(cfg);
  CHECK((prior.precision_sqrt.reconstruct() - prior.precision.mat()).norm() <
        1e-10 * prior.precision.mat().norm());
  CHECK((prior.covariance_sqrt.reconstruct() - prior.covariance.mat()).norm() <
        1e-10 * prior.covariance.mat().norm());
  CHECK((prior.precision.mat() * prior.covariance.mat() -
         MatrixXd::Identity(36, 36)).cwiseAbs().maxCoeff() < 1e-7);
}

TEST_CASE("spde prior: sampled marginal variance matches the dense diagonal") {
  SpdePriorConfig cfg;
  cfg.grid_n = 8;
  cfg.kappa = 10.0;
  cfg.gamma = 28.284271247461902;
  SpdePrior prior = make_spde_prior(cfg);
  const Index dim = 64;
  CounterRng rng(4);
  const Index count = 10000;
  MatrixXd draws = prior.covariance_sqrt.apply(rng.normal_matrix(dim, count));
  VectorXd emp_var(dim);
  for (Index i = 0; i < dim; ++i) emp_var[i] = draws.row(i).squaredNorm() / count;
  const VectorXd dense_var = prior.covariance.mat().diagonal();
  // mean marginal variance within 10%
  CHECK(emp_var.mean() == Approx(dense_var.mean()).epsilon(0.10));
}

TEST_CASE("spde prior: anisotropic tensor stays positive definite") {
  SpdePriorConfig cfg;
  cfg.grid_n = 8;
  cfg.kappa = 8.0;
  cfg.gamma = 0.07;
  cfg.tensor = TensorField::rotating_anisotropic;
  cfg.aniso_ratio = 0.2;
  CHECK_NOTHROW(make_spde_prior(cfg));
  CHECK_THROWS_AS([&] {
    SpdePriorConfig bad = cfg;
    bad.kappa = -1.0;
    make_spde_prior(bad);
  }(), ConfigError);
}

TEST_CASE("trace_ray: axis-aligned ray crosses unit cells with unit lengths") {
  // unit-cell grid: n=4 over [0,1], so cells have side 1/4; scale lengths
  const Index n = 4;
  const auto cells = trace_ray({-0.2, 0.626}, {1.3, 0.626}, n);
  REQUIRE(cells.size() == 4);
  for (const auto& [cell, len] : cells) CHECK(len == Approx(0.25).margin(1e-12));
  // the traversed row is j = floor(0.626*4) = 2
  for (Index c = 0; c < 4; ++c) CHECK(cells[c].first == 2 * n + c);
}

TEST_CASE("trace_ray lengths sum to the domain chord") {
  CounterRng rng(6);
  for (int trial = 0; trial < 200; ++trial) {
    const Eigen::Vector2d p0(rng.normal() * 0.8 + 0.5, rng.normal() * 0.8 + 0.5);
    const Eigen::Vector2d p1(rng.normal() * 0.8 + 0.5, rng.normal() * 0.8 + 0.5);
    const auto cells = trace_ray(p0, p1, 16);
    double total = 0.0;
    for (const auto& [cell, len] : cells) total += len;
    CHECK(total == Approx(ray_marching_chord(p0, p1)).margin(1e-8));
  }
}

TEST_CASE("tomography rows sum to chord lengths from the marching oracle") {
  TomographySetup setup;
  setup.grid_n = 32;
  TomographyProblem problem = make_tomography(setup, 1);
  const SparseMatrixXd& g = problem.model.g.sparse();
  REQUIRE(problem.rays.size() == 1000);
  for (size_t r = 0; r < problem.rays.size(); r += 37) {
    const double row_sum = g.row(static_cast<Index>(r)).sum();
    const double oracle =
        ray_marching_chord(problem.rays[r].src, problem.rays[r].dst);
    CHECK(row_sum == Approx(oracle).margin(1e-6));
  }
  CHECK(problem.missed_rays.empty());
}

TEST_CASE("tomography data are generated from geometry, not the raster") {
  TomographySetup setup;
  setup.grid_n = 16;
  TomographyProblem problem = make_tomography(setup, 2);
  const VectorXd through_matrix = problem.model.g.apply(problem.x_true);
  // the two forward paths agree roughly but never exactly
  CHECK((through_matrix - problem.exact_integrals).cwiseAbs().maxCoeff() > 1e-8);
  CHECK((through_matrix - problem.exact_integrals).cwiseAbs().maxCoeff() <
        10 * setup.noise_sigma);
}

TEST_CASE("tomography data stay within the noise envelope of the raster forward") {
  TomographySetup setup;
  setup.grid_n = 16;
  TomographyProblem problem = make_tomography(setup, 3);
  const VectorXd predicted = problem.model.g.apply(problem.x_true);
  Index outliers = 0;
  for (Index i = 0; i < problem.y.size(); ++i)
    if (std::abs(problem.y[i] - predicted[i]) > 4.0 * setup.noise_sigma) ++outliers;
  // 0.1% of 1000 rays plus discretization slack
  CHECK(outliers <= 3);
}

TEST_CASE("tomography: zero-density object gives pure noise data") {
  TomographySetup setup;
  setup.grid_n = 8;
  setup.ring_density = 0.0;
  setup.inclusion_density = 0.0;
  TomographyProblem problem = make_tomography(setup, 4);
  CHECK(problem.exact_integrals.norm() == 0.0);
  CHECK(problem.x_true.norm() == 0.0);
  CHECK(problem.y.norm() > 0.0);
  CHECK(problem.y.cwiseAbs().maxCoeff() < 6.0 * setup.noise_sigma);
}

TEST_CASE("tomography model adjoint consistency") {
  TomographySetup setup;
  setup.grid_n = 8;
  setup.rays_per_source = 10;
  setup.num_sources = 4;
  TomographyProblem problem = make_tomography(setup, 5);
  CounterRng rng(8);
  for (int t = 0; t < 20; ++t) {
    const VectorXd u = rng.normal_vector(problem.model.param_dim());
    const VectorXd v = rng.normal_vector(problem.model.data_dim());
    const double lhs = problem.model.g.apply(u).dot(v);
    const double rhs = u.dot(problem.model.g.apply_transpose(v));
    CHECK(std::abs(lhs - rhs) <= 1e-9 * u.norm() * v.norm());
  }
}

TEST_CASE("heat: zero conductivity samples the initial condition directly") {
  HeatProblemConfig cfg;
  cfg.grid_n = 6;
  cfg.sensor_grid = 2;
  cfg.num_times = 3;
  cfg.conductivity = [](double, double) { return 0.0; };
  cfg.prior.grid_n = 6;
  cfg.prior.kappa = 8.0;
  cfg.prior.gamma = 0.07;
  HeatProblem problem = make_heat(cfg, 9);
  CounterRng rng(10);
  const VectorXd x = rng.normal_vector(36);
  const VectorXd d = problem.model.g.apply(x);
  for (Index t = 0; t < 3; ++t)
    for (Index k = 0; k < 4; ++k)
      CHECK(d[t * 4 + k] == Approx(x[problem.sensor_cells[k]]).margin(1e-12));
}

TEST_CASE("heat: constant initial condition is conserved under zero flux") {
  HeatProblemConfig cfg;
  cfg.grid_n = 10;
  cfg.sensor_grid = 2;
  cfg.num_times = 5;
  cfg.prior.grid_n = 10;
  cfg.prior.kappa = 8.0;
  cfg.prior.gamma = 0.07;
  HeatProblem problem = make_heat(cfg, 11);
  const VectorXd ones = VectorXd::Ones(100);
  const VectorXd d = problem.model.g.apply(ones);
  CHECK((d.array() - 1.0).abs().maxCoeff() < 1e-10);
}

TEST_CASE("heat: dense forward matrix matches columnwise forward runs") {
  HeatProblemConfig cfg;
  cfg.grid_n = 20;
  cfg.sensor_grid = 3;
  cfg.num_times = 10;
  cfg.prior.grid_n = 20;
  cfg.prior.kappa = 8.0;
  cfg.prior.gamma = 0.07;
  HeatProblem problem = make_heat(cfg, 12);
  const Index n = problem.model.param_dim();
  const MatrixXd dense = problem.model.g.materialize();
  CounterRng rng(13);
  for (int t = 0; t < 8; ++t) {
    const VectorXd v = rng.normal_vector(n);
    CHECK((problem.model.g.apply(v) - dense * v).cwiseAbs().maxCoeff() <
          1e-10 * (1.0 + v.norm()));
  }
}

TEST_CASE("heat model adjoint test") {
  HeatProblemConfig cfg;
  cfg.grid_n = 12;
  cfg.sensor_grid = 3;
  cfg.num_times = 6;
  cfg.conductivity = [](double x, double y) {
    return 1.0 + 0.5 * std::sin(2 * M_PI * x) * std::sin(2 * M_PI * y);
  };
  cfg.prior.grid_n = 12;
  cfg.prior.kappa = 8.0;
  cfg.prior.gamma = 0.07;
  HeatProblem problem = make_heat(cfg, 14);
  CounterRng rng(15);
  for (int t = 0; t < 20; ++t) {
    const VectorXd u = rng.normal_vector(problem.model.param_dim());
    const VectorXd v = rng.normal_vector(problem.model.data_dim());
    CHECK(std::abs(problem.model.g.apply(u).dot(v) -
                   u.dot(problem.model.g.apply_transpose(v))) <=
          1e-9 * u.norm() * v.norm());
  }
}

TEST_CASE("heat configuration validation") {
  HeatProblemConfig cfg;
  cfg.grid_n = 6;
  cfg.prior.grid_n = 6;
  cfg.prior.kappa = 8.0;
  cfg.prior.gamma = 0.07;
  cfg.dt = -1.0;
  CHECK_THROWS_AS(make_heat(cfg, 1), ConfigError);
  cfg.dt = 2e-4;
  cfg.sensor_grid = 99;
  CHECK_THROWS_AS(make_heat(cfg, 1), ConfigError);
}
