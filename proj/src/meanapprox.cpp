#include "lowrank/meanapprox.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>

#include "lowrank/rng.hpp"

namespace lowrank {

std::string to_string(MeanKind k) {
  switch (k) {
    case MeanKind::low_rank: return "low_rank";
    case MeanKind::low_rank_update: return "low_rank_update";
    case MeanKind::cgls_baseline: return "cgls";
  }
  return "?";
}

VectorXd MeanApproximator::apply(const VectorXd& y) const {
  if (y.size() != in_dim_) throw ShapeError("mean approximator: wrong data length");
  switch (kind_) {
    case MeanKind::low_rank:
      if (order_ == 0) return VectorXd::Zero(out_dim_);
      return w_cols_ * (weights_.asDiagonal() * (v_cols_.transpose() * y));
    case MeanKind::low_rank_update: {
      // (gamma_pr - K K^T) G^T gamma_obs^{-1} y
      const VectorXd u = model_->g.apply_transpose(model_->gamma_obs.solve(y));
      VectorXd mu = model_->gamma_pr.apply(u);
      if (update_factor_.cols() > 0)
        mu -= update_factor_ * (update_factor_.transpose() * u);
      return mu;
    }
    case MeanKind::cgls_baseline:
      return cgls_priorconditioned(*model_, y, order_);
  }
  throw Error("mean approximator: unknown kind");
}

MatrixXd MeanApproximator::dense() const {
  if (kind_ == MeanKind::cgls_baseline)
    throw Error("mean approximator: no dense form for the cgls baseline");
  MatrixXd out(out_dim_, in_dim_);
  for (Index j = 0; j < in_dim_; ++j)
    out.col(j) = apply(VectorXd::Unit(in_dim_, j));
  return out;
}

MeanApproximator build_low_rank(const GsvdTriplets& triplets, Index r) {
  if (r < 0 || r > triplets.values.size())
    throw RankError("build_low_rank: order exceeds available triplets");
  MeanApproximator out;
  out.kind_ = MeanKind::low_rank;
  out.order_ = r;
  out.out_dim_ = triplets.w_hat.rows();
  out.in_dim_ = triplets.v_hat.rows();
  out.w_cols_ = triplets.w_hat.leftCols(r);
  out.v_cols_ = triplets.v_hat.leftCols(r);
  out.weights_ = VectorXd(r);
  for (Index i = 0; i < r; ++i) {
    const double d = triplets.values[i];
    out.weights_[i] = d / (1.0 + d * d);
  }
  return out;
}

MeanApproximator build_low_rank_update(const CovarianceApproximation& cov,
                                       const GaussianLinearModel& model) {
  if (cov.provenance != Provenance::optimal)
    throw ProvenanceError(
        "build_low_rank_update: requires the optimal covariance update, got " +
        to_string(cov.provenance));
  if (cov.update_factor.rows() > 0 && cov.update_factor.rows() != model.param_dim())
    throw ShapeError("build_low_rank_update: update does not match the model");
  MeanApproximator out;
  out.kind_ = MeanKind::low_rank_update;
  out.order_ = cov.rank;
  out.out_dim_ = model.param_dim();
  out.in_dim_ = model.data_dim();
  out.update_factor_ = cov.update_factor;
  out.model_ = std::make_shared<GaussianLinearModel>(model);
  return out;
}

MeanApproximator build_cgls_baseline(const GaussianLinearModel& model,
                                     Index iterations) {
  if (iterations < 0) throw RankError("build_cgls_baseline: negative iterations");
  MeanApproximator out;
  out.kind_ = MeanKind::cgls_baseline;
  out.order_ = iterations;
  out.out_dim_ = model.param_dim();
  out.in_dim_ = model.data_dim();
  out.model_ = std::make_shared<GaussianLinearModel>(model);
  return out;
}

double theoretical_risk(MeanKind kind, const VectorXd& delta_sq, Index r, Index ell) {
  double tail = 0.0;
  for (Index i = r; i < delta_sq.size(); ++i) {
    const double d2 = delta_sq[i];
    if (kind == MeanKind::low_rank)
      tail += d2;
    else if (kind == MeanKind::low_rank_update)
      tail += d2 * d2 * d2;
    else
      throw Error("theoretical_risk: no closed form for the cgls baseline");
  }
  return tail + static_cast<double>(ell);
}

double risk_difference(const VectorXd& delta_sq, Index r) {
  double diff = 0.0;
  for (Index i = r; i < delta_sq.size(); ++i) {
    const double d2 = delta_sq[i];
    diff += d2 * (1.0 + d2) * (1.0 - d2);
  }
  return diff;
}

std::string RiskReport::csv_row() const {
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%s,%ld,%.17g,%.17g,%.17g,%ld,%llu",
                to_string(kind).c_str(), static_cast<long>(order), risk_theory,
                risk_monte_carlo, mc_stderr, static_cast<long>(sample_count),
                static_cast<unsigned long long>(seed));
  return buf;
}

RiskReport monte_carlo_risk(const MeanApproximator& approx,
                            const GaussianLinearModel& model, Index samples,
                            std::uint64_t seed, const VectorXd& delta_sq_full) {
  const Index n = model.param_dim();
  const Index m = model.data_dim();
  const ExactPosterior exact = exact_posterior(model);
  const SquareRootFactor s_pr = spd_sqrt(model.gamma_pr);
  const SquareRootFactor s_obs = spd_sqrt(model.gamma_obs);
  const MatrixXd g = model.g.materialize();

  CounterRng rng(seed, 0x11c0);
  RiskReport report;
  report.kind = approx.kind();
  report.order = approx.order();
  report.sample_count = samples;
  report.seed = seed;
  report.err_y = VectorXd(samples);
  if (delta_sq_full.size() > 0 && approx.kind() != MeanKind::cgls_baseline)
    report.risk_theory =
        theoretical_risk(approx.kind(), delta_sq_full, approx.order(), n);

  // || v ||^2 weighted by the posterior precision, evaluated as
  // || S_obs^{-1} G v ||^2 + || S_pr^{-1} v ||^2.
  auto weighted_sq = [&](const VectorXd& v) {
    return s_obs.solve((g * v).eval()).squaredNorm() + s_pr.solve(v).squaredNorm();
  };

  double sum = 0.0, sum_sq = 0.0, sum_data = 0.0, sum_post = 0.0;
  for (Index i = 0; i < samples; ++i) {
    const VectorXd x = s_pr.apply(rng.normal_vector(n));
    const VectorXd y = g * x + s_obs.apply(rng.normal_vector(m));
    const VectorXd mu_hat = approx.apply(y);
    const VectorXd mu = exact.mean_map * y;
    const double loss = weighted_sq(mu_hat - x);
    const double data_term = weighted_sq(mu_hat - mu);
    sum += loss;
    sum_sq += loss * loss;
    sum_data += data_term;
    sum_post += weighted_sq(mu - x);
    report.err_y[i] = data_term;
  }
  const double mean = sum / static_cast<double>(samples);
  const double var =
      std::max(0.0, sum_sq / static_cast<double>(samples) - mean * mean);
  report.risk_monte_carlo = mean;
  report.mc_stderr = std::sqrt(var / static_cast<double>(samples));
  report.data_term = sum_data / static_cast<double>(samples);
  report.posterior_term = sum_post / static_cast<double>(samples);
  return report;
}

VectorXd cgls_priorconditioned(const GaussianLinearModel& model, const VectorXd& y,
                               Index iterations, bool* broke_down) {
  if (y.size() != model.data_dim())
    throw ShapeError("cgls_priorconditioned: wrong data length");
  const SquareRootFactor s_pr = spd_sqrt(model.gamma_pr);
  const SquareRootFactor s_obs = spd_sqrt(model.gamma_obs);
  auto apply_a = [&](const VectorXd& q) { return s_obs.solve(model.g.apply(s_pr.apply(q))); };
  auto apply_at = [&](const VectorXd& v) {
    return s_pr.apply_transpose(model.g.apply_transpose(s_obs.solve_transpose(v)));
  };

  if (broke_down) *broke_down = false;
  VectorXd q = VectorXd::Zero(model.param_dim());
  VectorXd residual = s_obs.solve(y);
  VectorXd s = apply_at(residual);
  VectorXd p = s;
  double gamma = s.squaredNorm();
  const double gamma0 = gamma;
  for (Index it = 0; it < iterations; ++it) {
    if (gamma <= 1e-28 * (gamma0 + 1e-300)) {
      if (broke_down) *broke_down = true;
      break;
    }
    const VectorXd t = apply_a(p);
    const double tt = t.squaredNorm();
    if (!(tt > 0.0)) {
      if (broke_down) *broke_down = true;
      break;
    }
    const double alpha = gamma / tt;
    q += alpha * p;
    residual -= alpha * t;
    s = apply_at(residual);
    const double gamma_next = s.squaredNorm();
    p = s + (gamma_next / gamma) * p;
    gamma = gamma_next;
  }
  return s_pr.apply(q);
}

namespace {

// Median wall time of fn over `reps` measurements; each measurement batches
// enough calls to be clock-resolvable.
double median_seconds(const std::function<void()>& fn, int reps) {
  using clock = std::chrono::steady_clock;
  // pick a batch size so one measurement lasts ~200us
  int batch = 1;
  for (;;) {
    const auto t0 = clock::now();
    for (int i = 0; i < batch; ++i) fn();
    const double dt = std::chrono::duration<double>(clock::now() - t0).count();
    if (dt > 2e-4 || batch >= (1 << 20)) break;
    batch *= 4;
  }
  std::vector<double> times(static_cast<size_t>(reps));
  for (auto& t : times) {
    const auto t0 = clock::now();
    for (int i = 0; i < batch; ++i) fn();
    t = std::chrono::duration<double>(clock::now() - t0).count() / batch;
  }
  std::nth_element(times.begin(), times.begin() + times.size() / 2, times.end());
  return times[times.size() / 2];
}

}  // namespace

double relative_cpu_time(const MeanApproximator& approx,
                         const GaussianLinearModel& model, int repetitions) {
  repetitions = std::max(repetitions, 20);
  CounterRng rng(0x71f3, 0);
  const VectorXd y = rng.normal_vector(model.data_dim());
  const VectorXd v = rng.normal_vector(model.param_dim());
  volatile double sink = 0.0;

  const double t_apply = median_seconds(
      [&] {
        const VectorXd mu = approx.apply(y);
        sink += mu[0];
      },
      repetitions);
  // one application of the posterior precision: H v + gamma_pr^{-1} v
  const double t_precision = median_seconds(
      [&] {
        const VectorXd w =
            model.g.apply_transpose(model.gamma_obs.solve(model.g.apply(v))) +
            model.gamma_pr.solve(v);
        sink += w[0];
      },
      repetitions);
  return t_apply / t_precision;
}

}  // namespace lowrank
