#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include <Eigen/Dense>

#include "lowrank/covapprox.hpp"
#include "lowrank/metrics.hpp"
#include "lowrank/rng.hpp"

using namespace lowrank;
using Catch::Approx;

namespace {

MatrixXd random_spd(Index n, CounterRng& rng, double shift = 0.5) {
  MatrixXd a = rng.normal_matrix(n, n);
  MatrixXd s = a * a.transpose() / static_cast<double>(n);
  s.diagonal().array() += shift;
  return 0.5 * (s + s.transpose().eval());
}

GaussianLinearModel random_model(Index m, Index n, CounterRng& rng) {
  return GaussianLinearModel(LinearOperator::from_dense(rng.normal_matrix(m, n)),
                             SpdMatrix(random_spd(m, rng), "gamma_obs"),
                             SpdMatrix(random_spd(n, rng), "gamma_pr"));
}

// the diagonal workhorse: G = I, gamma_obs = I, gamma_pr = diag(4, 1, 1/4)
GaussianLinearModel diagonal_model() {
  VectorXd d(3);
  d << 4.0, 1.0, 0.25;
  return GaussianLinearModel(LinearOperator::from_dense(MatrixXd::Identity(3, 3)),
                             SpdMatrix(MatrixXd::Identity(3, 3)),
                             SpdMatrix(d.asDiagonal()));
}

// a random member of the approximation class: gamma_pr - K K^T with
// rank(K) <= r, guaranteed positive definite
MatrixXd random_class_member(const SpdMatrix& prior, const SquareRootFactor& s_pr,
                             Index r, CounterRng& rng) {
  const Index n = prior.dim();
  MatrixXd z = rng.normal_matrix(n, r);
  const double spectral = z.jacobiSvd().singularValues()[0];
  z *= std::sqrt(rng.uniform()) / (spectral * (1.0 + 1e-9));
  const MatrixXd k = s_pr.apply(z);
  MatrixXd out = prior.mat() - k * k.transpose();
  return 0.5 * (out + out.transpose().eval());
}

}  // namespace

TEST_CASE("pencil decomposition invariants") {
  CounterRng rng(1);
  GaussianLinearModel model = random_model(6, 5, rng);
  const PencilDecomposition pencil = pencil_decomposition(model, 5);
  const ExactPosterior post = exact_posterior(model);

  const MatrixXd gram_hat =
      pencil.w_hat.transpose() * model.gamma_pr.solve(pencil.w_hat);
  CHECK((gram_hat - MatrixXd::Identity(5, 5)).cwiseAbs().maxCoeff() < 1e-8);
  const MatrixXd gram_tilde =
      pencil.w_tilde.transpose() * model.gamma_pr.mat() * pencil.w_tilde;
  CHECK((gram_tilde - MatrixXd::Identity(5, 5)).cwiseAbs().maxCoeff() < 1e-8);

  // gamma_pos w~ = (1+delta^2)^{-1} gamma_pr w~
  for (Index i = 0; i < 5; ++i) {
    const VectorXd lhs = post.gamma_pos.apply(pencil.w_tilde.col(i));
    const VectorXd rhs =
        model.gamma_pr.apply(pencil.w_tilde.col(i)) / (1.0 + pencil.delta_sq[i]);
    CHECK((lhs - rhs).norm() < 1e-8 * (1.0 + rhs.norm()));
  }
}

TEST_CASE("optimal covariance update on the diagonal model") {
  GaussianLinearModel model = diagonal_model();
  const PencilDecomposition pencil = pencil_decomposition(model, 3);
  CHECK(pencil.delta_sq[0] == Approx(4.0).epsilon(1e-12));
  CHECK(pencil.delta_sq[1] == Approx(1.0).epsilon(1e-12));
  CHECK(pencil.delta_sq[2] == Approx(0.25).epsilon(1e-12));

  const CovarianceApproximation approx = optimal_covariance_update(pencil, 1);
  MatrixXd kkt = approx.update_factor * approx.update_factor.transpose();
  MatrixXd expected = MatrixXd::Zero(3, 3);
  expected(0, 0) = 3.2;  // (4/5) * w w^T with w = 2 e_1
  CHECK((kkt - expected).cwiseAbs().maxCoeff() < 1e-10);

  VectorXd post_diag(3);
  post_diag << 0.8, 1.0, 0.25;
  CHECK((approx.posterior(model.gamma_pr) - MatrixXd(post_diag.asDiagonal()))
            .cwiseAbs()
            .maxCoeff() < 1e-10);
}

TEST_CASE("rank zero and full rank updates") {
  CounterRng rng(2);
  GaussianLinearModel model = random_model(7, 6, rng);
  const PencilDecomposition pencil = pencil_decomposition(model, 6);
  const ExactPosterior post = exact_posterior(model);

  // r = 0: approximation is the prior; loss matches sum of ln^2(1/(1+d^2))
  const CovarianceApproximation zero = optimal_covariance_update(pencil, 0);
  CHECK((zero.posterior(model.gamma_pr) - model.gamma_pr.mat()).norm() == 0.0);
  const double d0 = forstner_distance(post.gamma_pos.mat(), model.gamma_pr.mat());
  double expect_sq = 0.0;
  for (Index i = 0; i < 6; ++i) {
    const double l = std::log(1.0 / (1.0 + pencil.delta_sq[i]));
    expect_sq += l * l;
  }
  CHECK(d0 * d0 == Approx(expect_sq).margin(1e-8));

  // r = n: the update recovers the exact posterior
  const CovarianceApproximation full = optimal_covariance_update(pencil, 6);
  CHECK((full.posterior(model.gamma_pr) - post.gamma_pos.mat()).cwiseAbs().maxCoeff() <
        1e-8);

  CHECK_THROWS_AS(optimal_covariance_update(pencil, 7), RankError);
}

TEST_CASE("closed-form loss matches the measured distance at every rank") {
  CounterRng rng(3);
  const LossSpec f2 = LossSpec::forstner();
  for (int trial = 0; trial < 5; ++trial) {
    GaussianLinearModel model = random_model(6, 6, rng);
    const PencilDecomposition pencil = pencil_decomposition(model, 6);
    const ExactPosterior post = exact_posterior(model);
    for (Index r = 0; r <= 6; ++r) {
      const CovarianceApproximation approx = optimal_covariance_update(pencil, r);
      const double measured =
          forstner_distance(post.gamma_pos.mat(), approx.posterior(model.gamma_pr));
      const double closed = optimal_update_loss(f2, pencil.delta_sq, r);
      CHECK(measured * measured == Approx(closed).margin(1e-8));
    }
  }
}

TEST_CASE("optimality against random class members and all baselines") {
  CounterRng rng(4);
  for (int trial = 0; trial < 6; ++trial) {
    const Index n = 5 + (trial % 3);
    GaussianLinearModel model = random_model(n, n, rng);
    const PencilDecomposition pencil = pencil_decomposition(model, n);
    const ExactPosterior post = exact_posterior(model);
    const SquareRootFactor s_pr = spd_sqrt(model.gamma_pr);
    for (Index r = 1; r < n; ++r) {
      const double d_opt = forstner_distance(
          post.gamma_pos.mat(),
          optimal_covariance_update(pencil, r).posterior(model.gamma_pr));
      for (int c = 0; c < 200; ++c) {
        const MatrixXd candidate = random_class_member(model.gamma_pr, s_pr, r, rng);
        CHECK(d_opt <= forstner_distance(post.gamma_pos.mat(), candidate) + 1e-10);
      }
      for (const CovarianceApproximation& baseline :
           {hessian_based_update(model, r), prior_based_update(model, r),
            frobenius_based_update(model, r),
            bfgs_based_update(model, r, 1234 + trial)}) {
        const double d_base = forstner_distance(
            post.gamma_pos.mat(), baseline.posterior(model.gamma_pr));
        CHECK(d_opt <= d_base + 1e-10);
      }
    }
  }
}

TEST_CASE("optimal precision update inverts the optimal covariance") {
  GaussianLinearModel model = diagonal_model();
  const PencilDecomposition pencil = pencil_decomposition(model, 3);

  // r = 0
  CHECK((optimal_precision_update(pencil, 0).precision(model.gamma_pr) -
         model.gamma_pr.inverse()).norm() < 1e-12);

  // diagonal case r=1: U U^T = e1 e1^T and the inverse is diag(0.8, 1, 0.25)
  const PrecisionApproximation p1 = optimal_precision_update(pencil, 1);
  MatrixXd uut = p1.update_factor * p1.update_factor.transpose();
  MatrixXd expected = MatrixXd::Zero(3, 3);
  expected(0, 0) = 1.0;
  CHECK((uut - expected).cwiseAbs().maxCoeff() < 1e-10);
  VectorXd post_diag(3);
  post_diag << 0.8, 1.0, 0.25;
  CHECK((SpdMatrix(p1.precision(model.gamma_pr)).inverse() -
         MatrixXd(post_diag.asDiagonal())).cwiseAbs().maxCoeff() < 1e-8);

  // random model: inverse consistency at every rank
  CounterRng rng(5);
  GaussianLinearModel rnd = random_model(8, 8, rng);
  const PencilDecomposition rp = pencil_decomposition(rnd, 8);
  for (Index r = 0; r <= 8; ++r) {
    const MatrixXd cov = optimal_covariance_update(rp, r).posterior(rnd.gamma_pr);
    const MatrixXd prec = optimal_precision_update(rp, r).precision(rnd.gamma_pr);
    CHECK((SpdMatrix(prec).inverse() - cov).cwiseAbs().maxCoeff() < 1e-8);
  }
}

TEST_CASE("prior-update bijection: K to U and back") {
  CounterRng rng(6);
  GaussianLinearModel model = random_model(7, 7, rng);
  const PencilDecomposition pencil = pencil_decomposition(model, 7);
  const Index r = 3;
  const MatrixXd k = optimal_covariance_update(pencil, r).update_factor;
  const MatrixXd u = optimal_precision_update(pencil, r).update_factor;
  // (gamma_pr^{-1} + U U^T)^{-1} = gamma_pr - K K^T applied to random vectors
  const MatrixXd lhs = SpdMatrix(MatrixXd(model.gamma_pr.inverse() + u * u.transpose())).inverse();
  const MatrixXd rhs = model.gamma_pr.mat() - k * k.transpose();
  for (int t = 0; t < 5; ++t) {
    const VectorXd x = rng.normal_vector(7);
    CHECK((lhs * x - rhs * x).norm() <= 1e-9 * (1.0 + (rhs * x).norm()));
  }
}

TEST_CASE("oblique projector properties and the projected model") {
  GaussianLinearModel diag = diagonal_model();
  const PencilDecomposition dp = pencil_decomposition(diag, 3);
  const ObliqueProjector p1 = optimal_projector(dp, 1);
  MatrixXd expected = MatrixXd::Zero(3, 3);
  expected(0, 0) = 1.0;  // w_hat w_tilde^T = (2 e1)(e1/2)^T
  CHECK((p1.matrix() - expected).cwiseAbs().maxCoeff() < 1e-10);

  CounterRng rng(7);
  GaussianLinearModel model = random_model(7, 7, rng);
  const PencilDecomposition pencil = pencil_decomposition(model, 7);
  const ExactPosterior post = exact_posterior(model);
  for (Index r : {Index(3), Index(7)}) {
    const ObliqueProjector proj = optimal_projector(pencil, r);
    const MatrixXd p = proj.matrix();
    CHECK((p * p - p).cwiseAbs().maxCoeff() < 1e-8);  // idempotent
    if (r < 7) CHECK((p - p.transpose()).cwiseAbs().maxCoeff() > 1e-6);  // oblique

    // posterior of the projected model equals the optimal rank-r update
    GaussianLinearModel projected(
        LinearOperator::from_dense(model.g.materialize() * p), model.gamma_obs,
        model.gamma_pr);
    const MatrixXd oracle = exact_posterior(projected).gamma_pos.mat();
    const MatrixXd update =
        optimal_covariance_update(pencil, r).posterior(model.gamma_pr);
    CHECK((oracle - update).cwiseAbs().maxCoeff() < 1e-8);
  }
  // full rank with distinct eigenvalues: projector acts as identity on span
  const ObliqueProjector full = optimal_projector(pencil, 7);
  CHECK((full.matrix() * pencil.w_hat - pencil.w_hat).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("hessian-based update reduces to the optimal one for a white prior") {
  CounterRng rng(8);
  const Index n = 6;
  MatrixXd g = rng.normal_matrix(n, n);
  GaussianLinearModel model(LinearOperator::from_dense(g),
                            SpdMatrix(random_spd(n, rng)),
                            SpdMatrix(MatrixXd::Identity(n, n)));
  const PencilDecomposition pencil = pencil_decomposition(model, n);
  for (Index r = 1; r <= n; ++r) {
    const MatrixXd a = hessian_based_update(model, r).posterior(model.gamma_pr);
    const MatrixXd b = optimal_covariance_update(pencil, r).posterior(model.gamma_pr);
    CHECK((a - b).cwiseAbs().maxCoeff() < 1e-8);
  }

  // zero forward operator: the prior is returned untouched
  GaussianLinearModel zero(LinearOperator::from_dense(MatrixXd::Zero(n, n)),
                           SpdMatrix(MatrixXd::Identity(n, n)),
                           SpdMatrix(random_spd(n, rng)));
  CHECK((hessian_based_update(zero, 2).posterior(zero.gamma_pr) -
         zero.gamma_pr.mat()).norm() == 0.0);
}

TEST_CASE("prior-based update reduces to the optimal one for white noise and G=I") {
  CounterRng rng(9);
  const Index n = 6;
  const double sigma2 = 0.3;
  GaussianLinearModel model(LinearOperator::from_dense(MatrixXd::Identity(n, n)),
                            SpdMatrix(sigma2 * MatrixXd::Identity(n, n)),
                            SpdMatrix(random_spd(n, rng)));
  const PencilDecomposition pencil = pencil_decomposition(model, n);
  for (Index r = 1; r <= n; ++r) {
    const MatrixXd a = prior_based_update(model, r).posterior(model.gamma_pr);
    const MatrixXd b = optimal_covariance_update(pencil, r).posterior(model.gamma_pr);
    CHECK((a - b).cwiseAbs().maxCoeff() < 1e-8);
  }

  GaussianLinearModel zero(LinearOperator::from_dense(MatrixXd::Zero(n, n)),
                           SpdMatrix(MatrixXd::Identity(n, n)),
                           SpdMatrix(random_spd(n, rng)));
  CHECK((prior_based_update(zero, 2).posterior(zero.gamma_pr) -
         zero.gamma_pr.mat()).norm() < 1e-14);
}

TEST_CASE("frobenius-based update minimizes the frobenius distance") {
  GaussianLinearModel model = diagonal_model();
  // gamma_pr - gamma_pos = diag(3.2, 0.5, 0.05); r=1 picks e1, like optimal
  const CovarianceApproximation f1 = frobenius_based_update(model, 1);
  MatrixXd kkt = f1.update_factor * f1.update_factor.transpose();
  MatrixXd expected = MatrixXd::Zero(3, 3);
  expected(0, 0) = 3.2;
  CHECK((kkt - expected).cwiseAbs().maxCoeff() < 1e-10);

  // zero forward operator: zero update
  SpdMatrix id(MatrixXd::Identity(3, 3));
  GaussianLinearModel zero(LinearOperator::from_dense(MatrixXd::Zero(3, 3)), id, id);
  CHECK(frobenius_based_update(zero, 2).update_factor.cols() == 0);

  // optimal in frobenius distance among random class members
  CounterRng rng(10);
  GaussianLinearModel rnd = random_model(5, 5, rng);
  const ExactPosterior post = exact_posterior(rnd);
  const SquareRootFactor s_pr = spd_sqrt(rnd.gamma_pr);
  const Index r = 2;
  const double d_f =
      (frobenius_based_update(rnd, r).posterior(rnd.gamma_pr) - post.gamma_pos.mat())
          .norm();
  for (int c = 0; c < 200; ++c) {
    const MatrixXd candidate = random_class_member(rnd.gamma_pr, s_pr, r, rng);
    CHECK(d_f <= (candidate - post.gamma_pos.mat()).norm() + 1e-10);
  }
}

TEST_CASE("frobenius update can miss a direction the data inform strongly") {
  // low prior variance but highly informative data in the second direction
  VectorXd prior_d(2), obs_d(2);
  prior_d << 1.0, 1e-4;
  obs_d << 1.0, 1e-6;
  GaussianLinearModel model(LinearOperator::from_dense(MatrixXd::Identity(2, 2)),
                            SpdMatrix(obs_d.asDiagonal()),
                            SpdMatrix(prior_d.asDiagonal()));
  const PencilDecomposition pencil = pencil_decomposition(model, 2);
  const ExactPosterior post = exact_posterior(model);
  const double d_opt = forstner_distance(
      post.gamma_pos.mat(), optimal_covariance_update(pencil, 1).posterior(model.gamma_pr));
  const double d_frob = forstner_distance(
      post.gamma_pos.mat(), frobenius_based_update(model, 1).posterior(model.gamma_pr));
  CHECK(d_frob > 1.1 * d_opt);  // strictly worse by more than 10%
}

TEST_CASE("bfgs-based update basics") {
  // r = 0 keeps the prior
  GaussianLinearModel diag = diagonal_model();
  CHECK((bfgs_based_update(diag, 0, 7).posterior(diag.gamma_pr) -
         diag.gamma_pr.mat()).norm() == 0.0);

  // scalar problem: one secant step is exact
  MatrixXd g1(1, 1), pr1(1, 1);
  g1 << 2.0;
  pr1 << 3.0;
  GaussianLinearModel scalar(LinearOperator::from_dense(g1),
                             SpdMatrix(MatrixXd::Identity(1, 1)), SpdMatrix(pr1));
  const ExactPosterior post1 = exact_posterior(scalar);
  const MatrixXd b1 = bfgs_based_update(scalar, 1, 3).posterior(scalar.gamma_pr);
  CHECK(b1(0, 0) == Approx(post1.gamma_pos.mat()(0, 0)).epsilon(1e-10));
}

TEST_CASE("bfgs distance decreases with steps and stays above optimal") {
  CounterRng rng(11);
  GaussianLinearModel model = random_model(10, 10, rng);
  const PencilDecomposition pencil = pencil_decomposition(model, 10);
  const ExactPosterior post = exact_posterior(model);
  double prev = std::numeric_limits<double>::infinity();
  for (Index r = 1; r <= 10; ++r) {
    const CovarianceApproximation bfgs = bfgs_based_update(model, r, 2024);
    const double d = forstner_distance(post.gamma_pos.mat(),
                                       bfgs.posterior(model.gamma_pr));
    const double d_opt = forstner_distance(
        post.gamma_pos.mat(),
        optimal_covariance_update(pencil, r).posterior(model.gamma_pr));
    CHECK(d >= d_opt - 1e-10);
    CHECK(d <= prev + 1e-9);
    prev = d;
  }
}

TEST_CASE("posterior square root approximation") {
  GaussianLinearModel model = diagonal_model();
  const PencilDecomposition pencil = pencil_decomposition(model, 3);
  const SquareRootFactor s_pr = spd_sqrt(model.gamma_pr);

  // r = 0 returns the prior square root
  const PosteriorSquareRootApprox s0 = posterior_sqrt_approx(pencil, s_pr, 0);
  CHECK((s0.factor - s_pr.factor()).norm() < 1e-14);

  // diagonal case r = 1
  const PosteriorSquareRootApprox s1 = posterior_sqrt_approx(pencil, s_pr, 1);
  VectorXd expected(3);
  expected << 2.0 / std::sqrt(5.0), 1.0, 0.5;
  CHECK((s1.factor - MatrixXd(expected.asDiagonal())).cwiseAbs().maxCoeff() < 1e-10);
  VectorXd post_diag(3);
  post_diag << 0.8, 1.0, 0.25;
  CHECK((s1.reconstruct() - MatrixXd(post_diag.asDiagonal())).cwiseAbs().maxCoeff() <
        1e-10);

  // random model: factor reproduces the optimal update at every rank
  CounterRng rng(12);
  GaussianLinearModel rnd = random_model(6, 6, rng);
  const PencilDecomposition rp = pencil_decomposition(rnd, 6);
  const SquareRootFactor rs = spd_sqrt(rnd.gamma_pr);
  for (Index r = 0; r <= 6; ++r) {
    const MatrixXd target = optimal_covariance_update(rp, r).posterior(rnd.gamma_pr);
    CHECK((posterior_sqrt_approx(rp, rs, r).reconstruct() - target)
              .cwiseAbs()
              .maxCoeff() < 1e-8);
  }
}

TEST_CASE("posterior sqrt sampling statistics") {
  CounterRng rng(13);
  GaussianLinearModel model = random_model(4, 4, rng);
  const PencilDecomposition pencil = pencil_decomposition(model, 4);
  const SquareRootFactor s_pr = spd_sqrt(model.gamma_pr);
  const PosteriorSquareRootApprox s = posterior_sqrt_approx(pencil, s_pr, 2);
  const Index count = 100000;
  const MatrixXd draws = s.sample(VectorXd::Zero(4), count, 99);
  const MatrixXd emp = draws * draws.transpose() / double(count);
  const MatrixXd target = optimal_covariance_update(pencil, 2).posterior(model.gamma_pr);
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(emp - target);
  CHECK(es.eigenvalues().cwiseAbs().maxCoeff() <
        0.03 * target.operatorNorm());
}

TEST_CASE("variance ratio identities along the pencil directions") {
  CounterRng rng(14);
  GaussianLinearModel model = random_model(7, 6, rng);
  const PencilDecomposition pencil = pencil_decomposition(model, 6);
  const ExactPosterior post = exact_posterior(model);
  for (Index i = 0; i < 6; ++i) {
    const VectorXd w = pencil.w_tilde.col(i);
    const double ratio =
        w.dot(post.gamma_pos.apply(w)) / w.dot(model.gamma_pr.apply(w));
    CHECK(ratio == Approx(1.0 / (1.0 + pencil.delta_sq[i])).margin(1e-8));
    CHECK(1.0 - ratio ==
          Approx(pencil.delta_sq[i] / (1.0 + pencil.delta_sq[i])).margin(1e-8));
  }
}

TEST_CASE("KL, Hellinger and Forstner pick the same candidate") {
  CounterRng rng(15);
  GaussianLinearModel model = random_model(5, 5, rng);
  const PencilDecomposition pencil = pencil_decomposition(model, 5);
  const ExactPosterior post = exact_posterior(model);
  const SquareRootFactor s_pr = spd_sqrt(model.gamma_pr);
  const Index r = 2;

  std::vector<MatrixXd> candidates;
  candidates.push_back(optimal_covariance_update(pencil, r).posterior(model.gamma_pr));
  for (int c = 0; c < 50; ++c)
    candidates.push_back(random_class_member(model.gamma_pr, s_pr, r, rng));

  const VectorXd mu = VectorXd::Zero(5);
  size_t best_f = 0, best_kl = 0, best_h = 0;
  double min_f = 1e300, min_kl = 1e300, min_h = 1e300;
  for (size_t c = 0; c < candidates.size(); ++c) {
    const SpdMatrix cand(candidates[c]);
    const double f = forstner_distance(post.gamma_pos, cand);
    const double kl = kl_gaussians(mu, post.gamma_pos, cand);
    const double h = hellinger_gaussians(mu, post.gamma_pos, cand);
    if (f < min_f) { min_f = f; best_f = c; }
    if (kl < min_kl) { min_kl = kl; best_kl = c; }
    if (h < min_h) { min_h = h; best_h = c; }
  }
  CHECK(best_f == best_kl);
  CHECK(best_f == best_h);
  CHECK(best_f == 0);  // the optimal update wins all three
}

TEST_CASE("whitened-space update solves the diagonal approximation problem exactly") {
  // with everything diagonal, the whitened precision update is the best
  // rank-r approximation of D = diag(delta_i^2)
  VectorXd prior_d(4), obs_d(4);
  prior_d << 2.0, 1.0, 0.5, 0.125;
  obs_d << 0.5, 0.5, 0.25, 2.0;
  GaussianLinearModel model(LinearOperator::from_dense(MatrixXd::Identity(4, 4)),
                            SpdMatrix(obs_d.asDiagonal()),
                            SpdMatrix(prior_d.asDiagonal()));
  const PencilDecomposition pencil = pencil_decomposition(model, 4);
  const SquareRootFactor s_pr = spd_sqrt(model.gamma_pr);
  for (Index r = 1; r <= 4; ++r) {
    const MatrixXd u = optimal_precision_update(pencil, r).update_factor;
    const MatrixXd whitened = s_pr.apply_transpose(u);  // S^T U
    // expected: top-r of diag(delta^2)
    VectorXd diag = VectorXd::Zero(4);
    for (Index i = 0; i < r; ++i) diag[i] = pencil.delta_sq[i];
    // whitened U U^T must be diagonal with the top-r entries (basis order
    // follows the sort of lambda/sigma ratios)
    const MatrixXd wut = whitened * whitened.transpose();
    VectorXd got = wut.diagonal();
    std::sort(got.begin(), got.end(), std::greater<double>());
    VectorXd want = diag;
    std::sort(want.begin(), want.end(), std::greater<double>());
    CHECK((got - want).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((wut - MatrixXd(wut.diagonal().asDiagonal())).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("suggested rank thresholds the closed-form tail") {
  VectorXd delta_sq(4);
  delta_sq << 10.0, 4.0, 1.0, 0.0;
  const LossSpec f = LossSpec::forstner();
  // full tail at r=0, zero tail at r=3
  CHECK(suggest_rank(f, delta_sq, 0.0) == 3);
  const double tail1 = optimal_update_loss(f, delta_sq, 1);
  CHECK(suggest_rank(f, delta_sq, tail1 + 1e-12) == 1);
  CHECK(suggest_rank(f, delta_sq, 1e9) == 0);
}

TEST_CASE("degenerate zero-information directions are dropped from the update") {
  // G has rank 1, so only one nonzero delta
  MatrixXd g = MatrixXd::Zero(3, 3);
  g(0, 0) = 2.0;
  SpdMatrix id(MatrixXd::Identity(3, 3));
  GaussianLinearModel model(LinearOperator::from_dense(g), id, id);
  const PencilDecomposition pencil = pencil_decomposition(model, 3);
  const CovarianceApproximation approx = optimal_covariance_update(pencil, 3);
  CHECK(approx.update_factor.cols() == 1);
  CHECK((approx.posterior(model.gamma_pr) -
         exact_posterior(model).gamma_pos.mat()).cwiseAbs().maxCoeff() < 1e-10);
}
