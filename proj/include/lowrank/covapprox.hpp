#ifndef LOWRANK_COVAPPROX_HPP
#define LOWRANK_COVAPPROX_HPP

#include <cstdint>
#include <string>

#include "lowrank/linalg.hpp"
#include "lowrank/metrics.hpp"
#include "lowrank/model.hpp"

namespace lowrank {

// Ordered generalized eigenpairs (delta_i^2, w_hat_i) of the pencil
// (H, gamma_pr^{-1}) together with the companion directions
// w_tilde_i = gamma_pr^{-1} w_hat_i. The w_hat are orthonormal in the
// prior-precision inner product, the w_tilde in the prior-covariance one.
struct PencilDecomposition {
  VectorXd delta_sq;  // non-increasing
  MatrixXd w_hat;     // n x k
  MatrixXd w_tilde;   // n x k

  Index max_rank() const { return delta_sq.size(); }
};

PencilDecomposition pencil_decomposition(const LinearOperator& h,
                                         const SpdMatrix& prior, Index k,
                                         EigMethod method = EigMethod::dense_whitened,
                                         const EigOptions& opts = {});
PencilDecomposition pencil_decomposition(const GaussianLinearModel& model, Index k,
                                         EigMethod method = EigMethod::dense_whitened,
                                         const EigOptions& opts = {});

enum class Provenance { optimal, hessian, prior, frobenius, bfgs };

std::string to_string(Provenance p);

// A rank-r negative semidefinite update of the prior covariance:
// gamma_pos_hat = gamma_pr - K K^T. All approximation routes produce this
// type so that error curves are computed by a single code path.
struct CovarianceApproximation {
  Index rank = 0;          // requested order r
  MatrixXd update_factor;  // K; the bfgs route may carry up to 2r columns
  Provenance provenance = Provenance::optimal;
  std::string model_ref;
  bool truncated = false;  // set when a route stopped before the requested order

  MatrixXd posterior(const SpdMatrix& prior) const;
};

// The matching positive update of the prior precision:
// gamma_pos_hat^{-1} = gamma_pr^{-1} + U U^T.
struct PrecisionApproximation {
  Index rank = 0;
  MatrixXd update_factor;  // U

  MatrixXd precision(const SpdMatrix& prior) const;
};

// Idempotent but non-symmetric projector P_r = sum_i w_hat_i w_tilde_i^T
// onto the data-informed directions.
struct ObliqueProjector {
  Index rank = 0;
  MatrixXd w_hat;
  MatrixXd w_tilde;

  MatrixXd matrix() const { return w_hat * w_tilde.transpose(); }
  VectorXd apply(const VectorXd& v) const { return w_hat * (w_tilde.transpose() * v); }
};

// Non-symmetric square root of the optimal rank-r posterior approximation,
// S_hat = S_pr ( sum_i [ (1+delta_i^2)^{-1/2} - 1 ] w_i w_i^T + I ) with
// whitened directions w_i = S_pr^{-1} w_hat_i. Used for sampling.
struct PosteriorSquareRootApprox {
  Index rank = 0;
  MatrixXd factor;  // n x n

  MatrixXd reconstruct() const { return factor * factor.transpose(); }
  VectorXd apply(const VectorXd& z) const { return factor * z; }
  // mean + factor * z for standard normal z; deterministic in seed.
  MatrixXd sample(const VectorXd& mean, Index count, std::uint64_t seed) const;
};

// Optimal approximation: K K^T = sum_{i<=r} delta_i^2/(1+delta_i^2) w_hat_i w_hat_i^T.
// Directions with delta_i^2 = 0 carry zero weight and are dropped.
CovarianceApproximation optimal_covariance_update(const PencilDecomposition& pencil,
                                                  Index r,
                                                  std::string model_ref = "");

// Optimal precision update: U U^T = sum_{i<=r} delta_i^2 w_tilde_i w_tilde_i^T.
PrecisionApproximation optimal_precision_update(const PencilDecomposition& pencil,
                                                Index r);

ObliqueProjector optimal_projector(const PencilDecomposition& pencil, Index r);

// Baselines. Each returns a member of the same update class; all are
// suboptimal relative to optimal_covariance_update.
CovarianceApproximation hessian_based_update(const GaussianLinearModel& model, Index r);
CovarianceApproximation prior_based_update(const GaussianLinearModel& model, Index r);
CovarianceApproximation frobenius_based_update(const GaussianLinearModel& model, Index r,
                                               Index dense_fallback_dim = kDenseFallbackDim);
CovarianceApproximation bfgs_based_update(const GaussianLinearModel& model, Index r,
                                          std::uint64_t seed);

PosteriorSquareRootApprox posterior_sqrt_approx(const PencilDecomposition& pencil,
                                                const SquareRootFactor& s_pr, Index r);

// Closed-form minimum loss f(1) r + sum_{i>r} f(1/(1+delta_i^2)) of the
// optimal rank-r update; with the squared-log loss this is the squared
// Forstner distance to the exact posterior.
double optimal_update_loss(const LossSpec& spec, const VectorXd& delta_sq, Index r);

// Smallest r whose closed-form loss tail drops below the threshold
// (eigenvalues beyond those computed are treated as zero).
Index suggest_rank(const LossSpec& spec, const VectorXd& delta_sq, double threshold);

// Serialization: the update factor as a Matrix Market file plus a manifest
// carrying provenance, rank and the generating model's fingerprint.
void save_approximation(const CovarianceApproximation& approx, const std::string& dir,
                        const std::string& model_hash);
CovarianceApproximation load_approximation(const std::string& dir);

}  // namespace lowrank

#endif
