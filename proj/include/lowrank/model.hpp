#ifndef LOWRANK_MODEL_HPP
#define LOWRANK_MODEL_HPP

#include <cstdint>
#include <string>

#include "lowrank/linalg.hpp"

namespace lowrank {

// Gaussian-linear Bayesian model: y = G x + e with e ~ N(0, gamma_obs) and
// x ~ N(prior_mean, gamma_pr). Immutable after construction.
struct GaussianLinearModel {
  GaussianLinearModel(LinearOperator g_, SpdMatrix gamma_obs_, SpdMatrix gamma_pr_,
                      VectorXd prior_mean_ = VectorXd());

  LinearOperator g;
  SpdMatrix gamma_obs;
  SpdMatrix gamma_pr;
  VectorXd prior_mean;  // zero by default

  Index param_dim() const { return gamma_pr.dim(); }
  Index data_dim() const { return gamma_obs.dim(); }
};

// Exact posterior of the model, computed densely. Reference object for all
// approximations: gamma_pos = (H + gamma_pr^{-1})^{-1} and
// mean(y) = gamma_pos G^T gamma_obs^{-1} y.
struct ExactPosterior {
  SpdMatrix gamma_pos;
  SpdMatrix precision;
  MatrixXd mean_map;  // n x m
  VectorXd prior_mean;
  MatrixXd g_dense;  // forward operator, kept for the nonzero-mean shift

  // For a nonzero prior mean the data are shifted: mean(y) = mu_pr + M (y - G mu_pr).
  VectorXd mean(const VectorXd& y) const;
};

// Covariance of the marginal distribution of the data,
// gamma_y = gamma_obs + G gamma_pr G^T.
struct MarginalCovariance {
  SpdMatrix gamma_y;
  SquareRootFactor sqrt;
};

// Hessian of the negative log-likelihood, H = G^T gamma_obs^{-1} G, as a
// matrix-free symmetric PSD operator.
LinearOperator hessian(const GaussianLinearModel& model);

ExactPosterior exact_posterior(const GaussianLinearModel& model,
                               Index dense_fallback_dim = kDenseFallbackDim);

MarginalCovariance marginal_covariance(const GaussianLinearModel& model);

// `count` prior samples as columns; deterministic in (seed).
MatrixXd sample_prior(const GaussianLinearModel& model, Index count,
                      std::uint64_t seed);

// One synthetic data vector y = G x_true + S_obs z; deterministic in (seed).
VectorXd simulate_data(const GaussianLinearModel& model, const VectorXd& x_true,
                       std::uint64_t seed);

// Serialization: a directory of Matrix Market files plus manifest.json.
void save_model(const GaussianLinearModel& model, const std::string& dir,
                const std::string& name = "model", std::uint64_t seed = 0);
GaussianLinearModel load_model(const std::string& dir);

// Fingerprint of the model content (forward map, covariances, prior mean);
// recorded in approximation manifests.
std::string model_hash(const GaussianLinearModel& model);

}  // namespace lowrank

#endif
