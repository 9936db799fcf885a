#ifndef LOWRANK_METRICS_HPP
#define LOWRANK_METRICS_HPP

#include <functional>

#include "lowrank/linalg.hpp"

namespace lowrank {

// Generalized eigenvalues of the pencil (a, b): a v = sigma b v, sorted
// non-increasing. Computed densely by whitening with a square root of b.
VectorXd pencil_eigenvalues(const SpdMatrix& a, const SpdMatrix& b);

// Forstner distance sqrt(sum_i ln^2 sigma_i); symmetric in its arguments
// and invariant under inversion and congruence transforms.
double forstner_distance(const SpdMatrix& a, const SpdMatrix& b);
double forstner_distance(const MatrixXd& a, const MatrixXd& b);

// A scalar loss on the positive axis inducing the matrix loss
// sum_i f(sigma_i). Admissible f decrease left of 1, increase right of 1
// and diverge at infinity; `validated` specs checked these conditions on a
// sample grid at construction.
struct LossSpec {
  enum class Kind { forstner, kl, hellinger, custom_f };

  Kind kind;
  std::function<double(double)> f;

  static LossSpec forstner();   // f(x) = ln^2 x
  static LossSpec kl();         // f(x) = (x - ln x - 1)/2
  static LossSpec hellinger();  // f(x) = ln(2 + x + 1/x)/4
  // Throws InvalidLossSpec if f fails the admissibility check on the grid.
  static LossSpec custom(std::function<double(double)> f);
};

// sum_i f(sigma_i) over the generalized eigenvalues of (a, b).
double class_loss(const LossSpec& spec, const SpdMatrix& a, const SpdMatrix& b);

// KL divergence between N(mean, sigma1) and N(mean, sigma2); the value does
// not depend on the shared mean.
double kl_gaussians(const VectorXd& mean, const SpdMatrix& sigma1,
                    const SpdMatrix& sigma2);

// Hellinger distance between N(mean, sigma1) and N(mean, sigma2), via the
// determinant formula. The pencil-eigenvalue route is exposed separately so
// the two can be cross-checked.
double hellinger_gaussians(const VectorXd& mean, const SpdMatrix& sigma1,
                           const SpdMatrix& sigma2);
double hellinger_gaussians_via_pencil(const VectorXd& mean, const SpdMatrix& sigma1,
                                      const SpdMatrix& sigma2);

double frobenius_distance(const MatrixXd& a, const MatrixXd& b);

}  // namespace lowrank

#endif
