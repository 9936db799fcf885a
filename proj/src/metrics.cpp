#include "lowrank/metrics.hpp"

#include <cmath>

#include <Eigen/Dense>

namespace lowrank {

VectorXd pencil_eigenvalues(const SpdMatrix& a, const SpdMatrix& b) {
  if (a.dim() != b.dim())
    throw ShapeError("pencil_eigenvalues: dimension mismatch");
  // a v = sigma b v  <=>  (S_b^{-1} a S_b^{-T}) u = sigma u, u = S_b^T v
  const SquareRootFactor s = spd_sqrt(b);
  MatrixXd whitened = s.solve(s.solve(a.mat()).transpose().eval());
  whitened = 0.5 * (whitened + whitened.transpose().eval());
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(whitened, Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success)
    throw FactorizationError("pencil_eigenvalues: eigendecomposition failed");
  return es.eigenvalues().reverse();
}

double forstner_distance(const SpdMatrix& a, const SpdMatrix& b) {
  const VectorXd sigma = pencil_eigenvalues(a, b);
  double sum = 0.0;
  for (Index i = 0; i < sigma.size(); ++i) {
    const double l = std::log(sigma[i]);
    sum += l * l;
  }
  return std::sqrt(sum);
}

double forstner_distance(const MatrixXd& a, const MatrixXd& b) {
  return forstner_distance(SpdMatrix(a, "forstner lhs"), SpdMatrix(b, "forstner rhs"));
}

namespace {

// Admissibility of f on a sample grid: f'(x)(1-x) < 0 away from 1 and f(1)
// minimal on the grid.
void check_class_u(const std::function<double(double)>& f) {
  const double f1 = f(1.0);
  if (!std::isfinite(f1)) throw InvalidLossSpec("loss: f(1) is not finite");
  for (double x : {0.05, 0.1, 0.25, 0.5, 0.8, 0.95, 1.05, 1.25, 2.0, 4.0, 10.0, 50.0}) {
    const double h = 1e-6 * x;
    const double deriv = (f(x + h) - f(x - h)) / (2 * h);
    if (!(deriv * (1.0 - x) < 0.0))
      throw InvalidLossSpec("loss: f'(x)(1-x) >= 0 at x=" + std::to_string(x));
    if (!(f(x) >= f1))
      throw InvalidLossSpec("loss: f(1) is not the minimum at x=" + std::to_string(x));
  }
}

}  // namespace

LossSpec LossSpec::forstner() {
  return LossSpec{Kind::forstner, [](double x) {
                    const double l = std::log(x);
                    return l * l;
                  }};
}

LossSpec LossSpec::kl() {
  return LossSpec{Kind::kl, [](double x) { return 0.5 * (x - std::log(x) - 1.0); }};
}

LossSpec LossSpec::hellinger() {
  return LossSpec{Kind::hellinger,
                  [](double x) { return 0.25 * std::log(2.0 + x + 1.0 / x); }};
}

LossSpec LossSpec::custom(std::function<double(double)> f) {
  check_class_u(f);
  return LossSpec{Kind::custom_f, std::move(f)};
}

double class_loss(const LossSpec& spec, const SpdMatrix& a, const SpdMatrix& b) {
  const VectorXd sigma = pencil_eigenvalues(a, b);
  double sum = 0.0;
  for (Index i = 0; i < sigma.size(); ++i) sum += spec.f(sigma[i]);
  return sum;
}

double kl_gaussians(const VectorXd& mean, const SpdMatrix& sigma1,
                    const SpdMatrix& sigma2) {
  if (sigma1.dim() != sigma2.dim())
    throw ShapeError("kl_gaussians: dimension mismatch");
  if (mean.size() != 0 && mean.size() != sigma1.dim())
    throw ShapeError("kl_gaussians: mean has wrong length");
  const double trace_term = sigma2.solve(sigma1.mat()).trace();
  const double logdet_term = sigma1.log_det() - sigma2.log_det();
  return 0.5 * (trace_term - static_cast<double>(sigma1.dim()) - logdet_term);
}

double hellinger_gaussians(const VectorXd& mean, const SpdMatrix& sigma1,
                           const SpdMatrix& sigma2) {
  if (sigma1.dim() != sigma2.dim())
    throw ShapeError("hellinger_gaussians: dimension mismatch");
  if (mean.size() != 0 && mean.size() != sigma1.dim())
    throw ShapeError("hellinger_gaussians: mean has wrong length");
  const SpdMatrix mix(0.5 * (sigma1.mat() + sigma2.mat()), "hellinger mixture");
  // log of |S1|^{1/4} |S2|^{1/4} / |(S1+S2)/2|^{1/2}, overflow-safe
  const double log_ratio =
      0.25 * sigma1.log_det() + 0.25 * sigma2.log_det() - 0.5 * mix.log_det();
  const double d2 = 1.0 - std::exp(log_ratio);
  return std::sqrt(std::max(0.0, d2));
}

double hellinger_gaussians_via_pencil(const VectorXd& mean, const SpdMatrix& sigma1,
                                      const SpdMatrix& sigma2) {
  if (sigma1.dim() != sigma2.dim())
    throw ShapeError("hellinger_gaussians: dimension mismatch");
  (void)mean;  // independent of the shared mean
  const VectorXd sigma = pencil_eigenvalues(sigma1, sigma2);
  const double ell = static_cast<double>(sigma1.dim());
  double log_prod = 0.5 * ell * std::log(2.0);
  for (Index i = 0; i < sigma.size(); ++i)
    log_prod += 0.25 * std::log(sigma[i]) - 0.5 * std::log1p(sigma[i]);
  const double d2 = 1.0 - std::exp(log_prod);
  return std::sqrt(std::max(0.0, d2));
}

double frobenius_distance(const MatrixXd& a, const MatrixXd& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw ShapeError("frobenius_distance: shape mismatch");
  return (a - b).norm();
}

}  // namespace lowrank
