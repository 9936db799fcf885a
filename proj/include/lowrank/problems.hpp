#ifndef LOWRANK_PROBLEMS_HPP
#define LOWRANK_PROBLEMS_HPP

#include <cstdint>
#include <functional>
#include <utility>
#include <vector>

#include <Eigen/Geometry>

#include "lowrank/model.hpp"
#include "lowrank/rng.hpp"

namespace lowrank {

// ---------------------------------------------------------------------------
// Controlled-spectra random pencils

// Spectra lambda_k = lambda0 / k^alpha + tau for the data-misfit Hessian and
// lambda~_k = lambda0~ / k^alpha~ + tau~ for the prior covariance, with
// eigenvector bases drawn uniformly from the orthogonal group.
struct SyntheticSpectrumConfig {
  Index dim = 100;
  double lambda0 = 500.0, alpha = 0.345, tau = 1e-6;             // Hessian
  double lambda0_tilde = 1.0, alpha_tilde = 2.0, tau_tilde = 1e-6;  // prior
  std::uint64_t seed = 0;
};

struct SyntheticProblem {
  GaussianLinearModel model;
  MatrixXd hessian_dense;
  VectorXd hessian_spectrum;
  VectorXd prior_spectrum;
};

// Haar-distributed orthogonal matrix via Gram-Schmidt QR of a standard
// Gaussian matrix (Householder QR does not give the uniform distribution).
MatrixXd haar_orthogonal(Index n, CounterRng& rng);

// H = U diag(lambda) U^T and gamma_pr = V diag(lambda~) V^T; the returned
// model realizes H with G = diag(lambda)^{1/2} U^T and unit noise.
SyntheticProblem make_synthetic(const SyntheticSpectrumConfig& cfg);

// ---------------------------------------------------------------------------
// SPDE prior: gamma (kappa^2 I - div(c grad)) x = white noise

enum class TensorField { identity, rotating_anisotropic };

struct SpdePriorConfig {
  Index grid_n = 32;
  double kappa = 10.0;
  double gamma = 28.284271247461902;  // sqrt(800)
  TensorField tensor = TensorField::identity;
  // rotating_anisotropic: principal conductivities 1 and aniso_ratio, with
  // the principal axis direction rotating smoothly across the domain.
  double aniso_ratio = 0.2;
};

struct SpdePrior {
  SparseMatrixXd discrete_operator;  // A_h = kappa^2 I + L_c (grid-scaled)
  double gamma_h;                    // gamma scaled for grid resolution
  SpdMatrix precision;               // gamma_h^2 A_h^2
  SquareRootFactor precision_sqrt;   // L = gamma_h A_h,  precision = L L^T
  SpdMatrix covariance;
  SquareRootFactor covariance_sqrt;  // L^{-1}
};

// The scaling gamma_h = gamma * h keeps the discrete field consistent with
// the continuum white-noise normalization, so the marginal variance is
// resolution-independent up to discretization error.
SpdePrior make_spde_prior(const SpdePriorConfig& cfg);

// ---------------------------------------------------------------------------
// X-ray tomography

enum class ScanCoverage { limited_90deg, full_360deg };

struct TomographySetup {
  Index grid_n = 32;
  int num_sources = 10;
  int rays_per_source = 100;
  ScanCoverage coverage = ScanCoverage::limited_90deg;
  double noise_sigma = 0.002;
  // truth geometry: an annulus with three circular inclusions
  double ring_outer_radius = 0.40, ring_inner_radius = 0.33;
  double ring_density = 0.006, inclusion_density = 0.004;
  double inclusion_radius = 0.08, inclusion_offset = 0.17;
  // acquisition circle
  double source_radius = 0.95;
  double fan_half_angle = 1.1;
  SpdePriorConfig prior{32, 10.0, 28.284271247461902, TensorField::identity, 0.2};
};

struct Ray {
  Eigen::Vector2d src;
  Eigen::Vector2d dst;
};

struct TomographyProblem {
  GaussianLinearModel model;  // G sparse, gamma_obs = sigma^2 I, SPDE prior
  VectorXd x_true;            // truth densities rasterized on the grid
  VectorXd y;                 // -log(I_d/I_s) from exact geometry, plus noise
  VectorXd exact_integrals;   // noiseless geometric line integrals
  std::vector<Ray> rays;
  std::vector<int> missed_rays;  // rays with empty domain intersection
};

TomographyProblem make_tomography(const TomographySetup& setup, std::uint64_t seed);

// Circles making up the truth object (outer ring boundary, ring hole,
// inclusions), for rendering and diagnostics.
struct CircleSpec {
  double x, y, radius, density;
};
std::vector<CircleSpec> truth_geometry_circles(const TomographySetup& setup);

// Intersection lengths of the segment with the cells of an n x n grid on
// the unit square; the Siddon-style traversal behind the system matrix.
std::vector<std::pair<Index, double>> trace_ray(const Eigen::Vector2d& p0,
                                                const Eigen::Vector2d& p1, Index n);

// ---------------------------------------------------------------------------
// Heat-equation initial-condition inversion

struct HeatProblemConfig {
  Index grid_n = 20;
  double dt = 2e-4;
  Index num_times = 10;
  Index sensor_grid = 3;  // sensor_grid^2 sensors in the lower-left quadrant
  double noise_sigma = 1e-2;
  // positive conductivity field kappa(s); zero disables diffusion
  std::function<double(double, double)> conductivity;
  SpdePriorConfig prior{20, 8.0, 0.07, TensorField::rotating_anisotropic, 0.2};
};

struct HeatProblem {
  GaussianLinearModel model;  // implicit-Euler diffusion + sensor sampling
  VectorXd x_true;            // a prior draw
  VectorXd y;
  std::vector<Index> sensor_cells;
};

HeatProblem make_heat(const HeatProblemConfig& cfg, std::uint64_t seed);

}  // namespace lowrank

#endif
