#ifndef LOWRANK_MEANAPPROX_HPP
#define LOWRANK_MEANAPPROX_HPP

#include <cstdint>
#include <memory>

#include "lowrank/covapprox.hpp"
#include "lowrank/linalg.hpp"
#include "lowrank/model.hpp"

namespace lowrank {

enum class MeanKind { low_rank, low_rank_update, cgls_baseline };

std::string to_string(MeanKind k);

// A reusable linear map y -> mu_hat(y) approximating the posterior mean.
// The offline factors are precomputed once; apply is cheap and pure.
class MeanApproximator {
public:
  MeanKind kind() const { return kind_; }
  Index order() const { return order_; }
  Index in_dim() const { return in_dim_; }
  Index out_dim() const { return out_dim_; }

  VectorXd apply(const VectorXd& y) const;

  // Dense n x m matrix of the map (reference/debug path; cgls excluded
  // since its iterate is only piecewise linear in y at breakdown).
  MatrixXd dense() const;

private:
  friend MeanApproximator build_low_rank(const GsvdTriplets&, Index);
  friend MeanApproximator build_low_rank_update(const CovarianceApproximation&,
                                                const GaussianLinearModel&);
  friend MeanApproximator build_cgls_baseline(const GaussianLinearModel&, Index);

  MeanKind kind_ = MeanKind::low_rank;
  Index order_ = 0;
  Index in_dim_ = 0;
  Index out_dim_ = 0;
  // low_rank: mu = W diag(weights) V^T y
  MatrixXd w_cols_;
  MatrixXd v_cols_;
  VectorXd weights_;  // delta_i / (1 + delta_i^2)
  // low_rank_update and cgls: operator handles
  std::shared_ptr<const GaussianLinearModel> model_;
  MatrixXd update_factor_;  // K of the optimal covariance update
  std::shared_ptr<const SquareRootFactor> s_pr_, s_obs_;
};

// Optimal rank-r linear estimator A* = sum_i  delta_i/(1+delta_i^2) w_hat_i v_hat_i^T.
MeanApproximator build_low_rank(const GsvdTriplets& triplets, Index r);

// Optimal low-rank-update estimator A*_hat = gamma_pos_hat G^T gamma_obs^{-1},
// built from the optimal covariance update of the same order. Updates of any
// other provenance are rejected: the risk formula holds only for the optimal one.
MeanApproximator build_low_rank_update(const CovarianceApproximation& cov,
                                       const GaussianLinearModel& model);

// Prior/noise-preconditioned CGLS stopped after `iterations` steps.
MeanApproximator build_cgls_baseline(const GaussianLinearModel& model,
                                     Index iterations);

// Closed-form minimum Bayes risk: sum_{i>r} delta_i^2 + ell for the
// low-rank class, sum_{i>r} delta_i^6 + ell for the low-rank-update class.
double theoretical_risk(MeanKind kind, const VectorXd& delta_sq, Index r, Index ell);

// Risk difference R(low_rank) - R(low_rank_update)
// = sum_{i>r} delta_i^2 (1+delta_i^2)(1-delta_i^2).
double risk_difference(const VectorXd& delta_sq, Index r);

struct RiskReport {
  MeanKind kind = MeanKind::low_rank;
  Index order = 0;
  double risk_theory = std::numeric_limits<double>::quiet_NaN();
  double risk_monte_carlo = 0.0;
  double mc_stderr = 0.0;
  Index sample_count = 0;
  std::uint64_t seed = 0;
  // decomposition of the Monte-Carlo risk
  double data_term = 0.0;       // E || A y - mu_pos(y) ||^2
  double posterior_term = 0.0;  // E || mu_pos(y) - x ||^2, tends to ell
  VectorXd err_y;               // per-draw weighted errors ||A y - mu_pos(y)||^2

  std::string csv_row() const;  // (kind, r, risk_theory, risk_mc, mc_stderr, N, seed)
};

// Monte-Carlo Bayes risk of the estimator under the model's joint
// distribution, with losses weighted by the posterior precision. If the full
// pencil spectrum is supplied the closed-form risk is attached for comparison.
RiskReport monte_carlo_risk(const MeanApproximator& approx,
                            const GaussianLinearModel& model, Index samples,
                            std::uint64_t seed,
                            const VectorXd& delta_sq_full = VectorXd());

// r iterations of CGLS on S_obs^{-1} G S_pr q = S_obs^{-1} y; returns
// x^r = S_pr q^r. `broke_down` (optional) reports early termination.
VectorXd cgls_priorconditioned(const GaussianLinearModel& model, const VectorXd& y,
                               Index iterations, bool* broke_down = nullptr);

inline VectorXd apply(const MeanApproximator& approx, const VectorXd& y) {
  return approx.apply(y);
}

// Median online cost of the approximator divided by the median cost of one
// application of the posterior precision matrix; >= 20 repetitions each.
double relative_cpu_time(const MeanApproximator& approx,
                         const GaussianLinearModel& model, int repetitions = 21);

}  // namespace lowrank

#endif
