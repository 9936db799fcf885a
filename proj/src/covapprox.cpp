#include "lowrank/covapprox.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>

#include <Eigen/Dense>
#include <json.hpp>

#include "lowrank/matrix_market.hpp"
#include "lowrank/rng.hpp"

namespace lowrank {

namespace {

// Eigenvalues of a PSD matrix treated as zero below this relative cutoff.
constexpr double kRankCutoff = 1e-12;

void check_rank(Index r, Index available, const char* who) {
  if (r < 0 || r > available)
    throw RankError(std::string(who) + ": rank " + std::to_string(r) +
                    " exceeds the " + std::to_string(available) +
                    " available directions");
}

// Columns scaled by sqrt of weights, dropping non-positive weights.
MatrixXd scaled_columns(const MatrixXd& dirs, const VectorXd& weights, Index r) {
  Index kept = 0;
  for (Index i = 0; i < r; ++i)
    if (weights[i] > 0.0) ++kept;
  MatrixXd k(dirs.rows(), kept);
  Index c = 0;
  for (Index i = 0; i < r; ++i)
    if (weights[i] > 0.0) k.col(c++) = std::sqrt(weights[i]) * dirs.col(i);
  return k;
}

// Baseline guard: a computed update must leave the approximate posterior
// safely positive definite. Cannot fire for the optimal formula, whose
// whitened deficit weights are bounded below one.
void guard_class_member(const SpdMatrix& prior, const MatrixXd& k,
                        const char* who) {
  if (k.cols() == 0) return;
  MatrixXd candidate = prior.mat() - k * k.transpose();
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(
      0.5 * (candidate + candidate.transpose().eval()), Eigen::EigenvaluesOnly);
  const double floor = 1e-12 * prior.mat().cwiseAbs().maxCoeff();
  if (es.eigenvalues().minCoeff() < floor)
    throw NotPositiveDefinite(std::string(who) +
                              ": update drives the approximate posterior "
                              "covariance out of the positive cone");
}

// Symmetric PSD square root with relative cutoff; eigenvalues below
// cutoff * max are treated as zero.
MatrixXd psd_sqrt_with_cutoff(const MatrixXd& a, double cutoff = kRankCutoff) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(0.5 * (a + a.transpose().eval()));
  const double top = es.eigenvalues().cwiseMax(0.0).maxCoeff();
  VectorXd sqrt_vals = es.eigenvalues();
  for (Index i = 0; i < sqrt_vals.size(); ++i)
    sqrt_vals[i] = sqrt_vals[i] > cutoff * top ? std::sqrt(sqrt_vals[i]) : 0.0;
  return es.eigenvectors() * sqrt_vals.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace

std::string to_string(Provenance p) {
  switch (p) {
    case Provenance::optimal: return "optimal";
    case Provenance::hessian: return "hessian";
    case Provenance::prior: return "prior";
    case Provenance::frobenius: return "frobenius";
    case Provenance::bfgs: return "bfgs";
  }
  return "?";
}

PencilDecomposition pencil_decomposition(const LinearOperator& h,
                                         const SpdMatrix& prior, Index k,
                                         EigMethod method, const EigOptions& opts) {
  EigenPairs pairs = generalized_eig(h, prior, k, method, opts);
  PencilDecomposition out;
  out.delta_sq = pairs.values.cwiseMax(0.0);  // PSD pencil; clip rounding noise
  out.w_hat = std::move(pairs.vectors);
  out.w_tilde = prior.solve(out.w_hat);
  return out;
}

PencilDecomposition pencil_decomposition(const GaussianLinearModel& model, Index k,
                                         EigMethod method, const EigOptions& opts) {
  return pencil_decomposition(hessian(model), model.gamma_pr, k, method, opts);
}

MatrixXd CovarianceApproximation::posterior(const SpdMatrix& prior) const {
  MatrixXd out = prior.mat();
  if (update_factor.cols() > 0)
    out -= update_factor * update_factor.transpose();
  return 0.5 * (out + out.transpose().eval());
}

MatrixXd PrecisionApproximation::precision(const SpdMatrix& prior) const {
  MatrixXd out = prior.inverse();
  if (update_factor.cols() > 0)
    out += update_factor * update_factor.transpose();
  return 0.5 * (out + out.transpose().eval());
}

MatrixXd PosteriorSquareRootApprox::sample(const VectorXd& mean, Index count,
                                           std::uint64_t seed) const {
  CounterRng rng(seed, 0x5a3f);
  MatrixXd z = rng.normal_matrix(factor.cols(), count);
  MatrixXd out = factor * z;
  out.colwise() += mean;
  return out;
}

CovarianceApproximation optimal_covariance_update(const PencilDecomposition& pencil,
                                                  Index r, std::string model_ref) {
  check_rank(r, pencil.max_rank(), "optimal_covariance_update");
  VectorXd weights(r);
  for (Index i = 0; i < r; ++i)
    weights[i] = pencil.delta_sq[i] / (1.0 + pencil.delta_sq[i]);
  CovarianceApproximation out;
  out.rank = r;
  out.update_factor = scaled_columns(pencil.w_hat, weights, r);
  out.provenance = Provenance::optimal;
  out.model_ref = std::move(model_ref);
  return out;
}

PrecisionApproximation optimal_precision_update(const PencilDecomposition& pencil,
                                                Index r) {
  check_rank(r, pencil.max_rank(), "optimal_precision_update");
  PrecisionApproximation out;
  out.rank = r;
  out.update_factor = scaled_columns(pencil.w_tilde, pencil.delta_sq, r);
  return out;
}

ObliqueProjector optimal_projector(const PencilDecomposition& pencil, Index r) {
  check_rank(r, pencil.max_rank(), "optimal_projector");
  ObliqueProjector out;
  out.rank = r;
  out.w_hat = pencil.w_hat.leftCols(r);
  out.w_tilde = pencil.w_tilde.leftCols(r);
  return out;
}

CovarianceApproximation hessian_based_update(const GaussianLinearModel& model,
                                             Index r) {
  const Index n = model.param_dim();
  check_rank(r, n, "hessian_based_update");
  const MatrixXd h = hessian(model).materialize();
  EigenPairs eig = sym_eig(0.5 * (h + h.transpose().eval()));

  // Drop zero Hessian eigenvalues among the top r; the corresponding
  // directions carry no data information.
  const double top = std::max(eig.values.maxCoeff(), 0.0);
  Index effective = 0;
  for (Index i = 0; i < r; ++i)
    if (eig.values[i] > kRankCutoff * top) ++effective;

  CovarianceApproximation out;
  out.rank = r;
  out.provenance = Provenance::hessian;
  out.truncated = effective < r;
  if (effective == 0) {
    out.update_factor = MatrixXd(n, 0);
    return out;
  }
  const MatrixXd v = eig.vectors.leftCols(effective);
  const VectorXd s = eig.values.head(effective);
  // gamma_pr - gamma_pr V (S^{-1} + V^T gamma_pr V)^{-1} V^T gamma_pr
  MatrixXd gpr_v = model.gamma_pr.mat() * v;
  MatrixXd inner = v.transpose() * gpr_v;
  inner.diagonal() += s.cwiseInverse();
  const SpdMatrix inner_spd(0.5 * (inner + inner.transpose().eval()),
                            "hessian-based inner block");
  // K = gamma_pr V L^{-T} with inner = L L^T
  out.update_factor =
      inner_spd.chol_lower().triangularView<Eigen::Lower>()
          .solve(gpr_v.transpose()).transpose();
  guard_class_member(model.gamma_pr, out.update_factor, "hessian_based_update");
  return out;
}

CovarianceApproximation prior_based_update(const GaussianLinearModel& model,
                                           Index r) {
  const Index n = model.param_dim();
  check_rank(r, n, "prior_based_update");
  if (r == 0) {
    CovarianceApproximation out;
    out.provenance = Provenance::prior;
    out.update_factor = MatrixXd(n, 0);
    return out;
  }
  EigenPairs eig = sym_eig(model.gamma_pr.mat());
  const MatrixXd u = eig.vectors.leftCols(r);
  const VectorXd t = eig.values.head(r);

  const LinearOperator h = hessian(model);
  MatrixXd w = u.transpose() * h.apply_matrix(u);  // r x r, PSD
  // The update is U T (W^{-1} + T)^{-1} T U^T. W may be singular (e.g. a
  // zero forward operator); the stable equivalent with E = W^{1/2} is
  // U T E (I + E T E)^{-1} E T U^T, with eigenvalues of W below
  // 1e-12 * max treated as zero.
  MatrixXd e = psd_sqrt_with_cutoff(w);
  MatrixXd inner = MatrixXd::Identity(r, r) + e * t.asDiagonal() * e;
  const SpdMatrix inner_spd(0.5 * (inner + inner.transpose().eval()),
                            "prior-based inner block");
  MatrixXd te = t.asDiagonal() * e;  // T E
  CovarianceApproximation out;
  out.rank = r;
  out.provenance = Provenance::prior;
  // K = U (T E) L^{-T} with inner = L L^T
  out.update_factor =
      u * inner_spd.chol_lower().triangularView<Eigen::Lower>()
              .solve(te.transpose()).transpose();
  guard_class_member(model.gamma_pr, out.update_factor, "prior_based_update");
  return out;
}

CovarianceApproximation frobenius_based_update(const GaussianLinearModel& model,
                                               Index r, Index dense_fallback_dim) {
  const Index n = model.param_dim();
  check_rank(r, n, "frobenius_based_update");
  const ExactPosterior exact = exact_posterior(model, dense_fallback_dim);
  MatrixXd diff = model.gamma_pr.mat() - exact.gamma_pos.mat();
  EigenPairs eig = sym_eig(0.5 * (diff + diff.transpose().eval()));
  CovarianceApproximation out;
  out.rank = r;
  out.provenance = Provenance::frobenius;
  out.update_factor = scaled_columns(eig.vectors, eig.values.cwiseMax(0.0), r);
  guard_class_member(model.gamma_pr, out.update_factor, "frobenius_based_update");
  return out;
}

CovarianceApproximation bfgs_based_update(const GaussianLinearModel& model, Index r,
                                          std::uint64_t seed) {
  const Index n = model.param_dim();
  check_rank(r, n, "bfgs_based_update");
  const ExactPosterior exact = exact_posterior(model);
  const MatrixXd& a = exact.precision.mat();  // J(x) = x^T A x / 2

  CounterRng rng(seed, 0xbf65);
  VectorXd x = rng.normal_vector(n);
  MatrixXd hinv = model.gamma_pr.mat();  // initial inverse-Hessian approximation

  CovarianceApproximation out;
  out.rank = r;
  out.provenance = Provenance::bfgs;

  VectorXd grad = a * x;
  Index steps = 0;
  for (; steps < r; ++steps) {
    const VectorXd p = -(hinv * grad);
    const double curvature = p.dot(a * p);
    const double slope = grad.dot(p);
    // instability near convergence: stop early and keep the achieved update
    if (!(curvature > 0.0) || std::abs(slope) < 1e-14 * (1.0 + grad.norm())) {
      out.truncated = true;
      break;
    }
    const double alpha = -slope / curvature;  // exact line search
    const VectorXd s = alpha * p;
    const VectorXd x_next = x + s;
    const VectorXd grad_next = a * x_next;
    const VectorXd y = grad_next - grad;
    const double sy = s.dot(y);
    if (!(sy > 1e-14 * s.norm() * y.norm())) {
      out.truncated = true;
      break;
    }
    const double rho = 1.0 / sy;
    const VectorXd hy = hinv * y;
    // H <- (I - rho s y^T) H (I - rho y s^T) + rho s s^T
    hinv -= rho * (s * hy.transpose() + hy * s.transpose());
    hinv += (rho * rho * y.dot(hy) + rho) * (s * s.transpose());
    x = x_next;
    grad = grad_next;
  }

  // Write the accumulated approximation as gamma_pr - K K^T. The BFGS
  // correction after k steps has rank at most 2k but is not sign-definite:
  // the inverse-Hessian estimate can overshoot the prior in a few
  // directions. In the prior-whitened coordinates the feasible class is
  // exactly {I - D : 0 <= D < I}, so eigenvalues of the whitened estimate
  // are clipped to (0, 1] and K is assembled from the remaining deficit.
  const SquareRootFactor s_pr = spd_sqrt(model.gamma_pr);
  MatrixXd whitened = s_pr.solve(s_pr.solve(hinv).transpose().eval());
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(
      0.5 * (whitened + whitened.transpose().eval()));
  VectorXd deficit(n);
  Index kept = 0;
  for (Index i = 0; i < n; ++i) {
    double d = 1.0 - es.eigenvalues()[i];
    if (d >= 1.0) {
      d = 1.0 - 1e-12;  // whitened estimate lost definiteness numerically
      out.truncated = true;
    }
    if (es.eigenvalues()[i] > 1.0) out.truncated = true;  // clipped overshoot
    deficit[i] = std::max(0.0, d);
    if (deficit[i] > kRankCutoff) ++kept;
  }
  MatrixXd k(n, kept);
  Index c = 0;
  for (Index i = 0; i < n; ++i)
    if (deficit[i] > kRankCutoff)
      k.col(c++) = std::sqrt(deficit[i]) * s_pr.apply(es.eigenvectors().col(i));
  out.update_factor = std::move(k);
  guard_class_member(model.gamma_pr, out.update_factor, "bfgs_based_update");
  return out;
}

PosteriorSquareRootApprox posterior_sqrt_approx(const PencilDecomposition& pencil,
                                                const SquareRootFactor& s_pr,
                                                Index r) {
  check_rank(r, pencil.max_rank(), "posterior_sqrt_approx");
  const Index n = s_pr.base_dim();
  // whitened directions w_i = S_pr^{-1} w_hat_i = S_pr^T w_tilde_i
  MatrixXd w = s_pr.apply_transpose(pencil.w_tilde.leftCols(r));
  MatrixXd inner = MatrixXd::Identity(n, n);
  for (Index i = 0; i < r; ++i) {
    const double scale = 1.0 / std::sqrt(1.0 + pencil.delta_sq[i]) - 1.0;
    inner += scale * (w.col(i) * w.col(i).transpose());
  }
  PosteriorSquareRootApprox out;
  out.rank = r;
  out.factor = s_pr.apply(inner);
  return out;
}

double optimal_update_loss(const LossSpec& spec, const VectorXd& delta_sq, Index r) {
  double loss = spec.f(1.0) * static_cast<double>(r);
  for (Index i = r; i < delta_sq.size(); ++i)
    loss += spec.f(1.0 / (1.0 + delta_sq[i]));
  return loss;
}

namespace {

Provenance provenance_from_name(const std::string& name) {
  for (Provenance p : {Provenance::optimal, Provenance::hessian, Provenance::prior,
                       Provenance::frobenius, Provenance::bfgs})
    if (to_string(p) == name) return p;
  throw ParseError("unknown approximation provenance '" + name + "'");
}

}  // namespace

void save_approximation(const CovarianceApproximation& approx, const std::string& dir,
                        const std::string& model_hash) {
  std::filesystem::create_directories(dir);
  mm::write_dense(dir + "/update_factor.mtx", approx.update_factor);
  nlohmann::json manifest{{"provenance", to_string(approx.provenance)},
                          {"rank", approx.rank},
                          {"columns", approx.update_factor.cols()},
                          {"truncated", approx.truncated},
                          {"model_hash", model_hash},
                          {"model_ref", approx.model_ref}};
  std::ofstream os(dir + "/manifest.json");
  if (!os) throw Error("cannot write approximation manifest in " + dir);
  os << manifest.dump(2) << "\n";
}

CovarianceApproximation load_approximation(const std::string& dir) {
  std::ifstream is(dir + "/manifest.json");
  if (!is) throw Error("cannot read approximation manifest in " + dir);
  nlohmann::json manifest;
  is >> manifest;
  CovarianceApproximation out;
  out.rank = manifest.at("rank").get<Index>();
  out.provenance = provenance_from_name(manifest.at("provenance"));
  out.truncated = manifest.value("truncated", false);
  out.model_ref = manifest.value("model_ref", std::string());
  out.update_factor = mm::read_dense(dir + "/update_factor.mtx");
  return out;
}

Index suggest_rank(const LossSpec& spec, const VectorXd& delta_sq, double threshold) {
  for (Index r = 0; r <= delta_sq.size(); ++r) {
    double tail = 0.0;
    for (Index i = r; i < delta_sq.size(); ++i)
      tail += spec.f(1.0 / (1.0 + delta_sq[i]));
    if (tail <= threshold) return r;
  }
  return delta_sq.size();
}

}  // namespace lowrank
