#include "lowrank/model.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "lowrank/matrix_market.hpp"
#include "lowrank/rng.hpp"

namespace lowrank {

GaussianLinearModel::GaussianLinearModel(LinearOperator g_, SpdMatrix gamma_obs_,
                                         SpdMatrix gamma_pr_, VectorXd prior_mean_)
    : g(std::move(g_)),
      gamma_obs(std::move(gamma_obs_)),
      gamma_pr(std::move(gamma_pr_)),
      prior_mean(std::move(prior_mean_)) {
  if (g.out_dim() != gamma_obs.dim())
    throw ShapeError("model: forward operator rows != noise covariance dim");
  if (g.in_dim() != gamma_pr.dim())
    throw ShapeError("model: forward operator cols != prior covariance dim");
  if (prior_mean.size() == 0) prior_mean = VectorXd::Zero(gamma_pr.dim());
  if (prior_mean.size() != gamma_pr.dim())
    throw ShapeError("model: prior mean has wrong length");
}

VectorXd ExactPosterior::mean(const VectorXd& y) const {
  if (prior_mean.isZero(0.0)) return mean_map * y;
  return prior_mean + mean_map * (y - g_dense * prior_mean);
}

LinearOperator hessian(const GaussianLinearModel& model) {
  const Index n = model.param_dim();
  // capture by value: the operator must outlive the model reference scope
  auto g = model.g;
  auto obs = model.gamma_obs;
  auto act = [g, obs](const VectorXd& v) -> VectorXd {
    return g.apply_transpose(obs.solve(g.apply(v)));
  };
  return LinearOperator(n, n, act, act);
}

ExactPosterior exact_posterior(const GaussianLinearModel& model,
                               Index dense_fallback_dim) {
  const Index n = model.param_dim();
  if (n > dense_fallback_dim)
    throw UseDenseFallbackError(
        "exact_posterior: parameter dimension " + std::to_string(n) +
        " exceeds the dense limit " + std::to_string(dense_fallback_dim) +
        "; use the low-rank approximation path instead");
  const MatrixXd g = model.g.materialize();
  const MatrixXd h = g.transpose() * model.gamma_obs.solve(g);
  MatrixXd prec = h + model.gamma_pr.inverse();
  prec = 0.5 * (prec + prec.transpose().eval());
  SpdMatrix precision(prec, "posterior precision");
  MatrixXd cov = precision.inverse();
  cov = 0.5 * (cov + cov.transpose().eval());
  MatrixXd mean_map = cov * g.transpose() * model.gamma_obs.inverse();
  return ExactPosterior{SpdMatrix(cov, "posterior covariance"),
                        std::move(precision), std::move(mean_map),
                        model.prior_mean, g};
}

MarginalCovariance marginal_covariance(const GaussianLinearModel& model) {
  const MatrixXd g = model.g.materialize();
  MatrixXd gy = model.gamma_obs.mat() + g * model.gamma_pr.mat() * g.transpose();
  SpdMatrix gamma_y(0.5 * (gy + gy.transpose().eval()), "marginal covariance");
  SquareRootFactor sqrt = spd_sqrt(gamma_y);
  return MarginalCovariance{std::move(gamma_y), std::move(sqrt)};
}

MatrixXd sample_prior(const GaussianLinearModel& model, Index count,
                      std::uint64_t seed) {
  const Index n = model.param_dim();
  MatrixXd samples(n, count);
  if (count == 0) return samples;
  const SquareRootFactor s = spd_sqrt(model.gamma_pr);
  CounterRng rng(seed, 0x5e5e);
  samples = s.apply(rng.normal_matrix(n, count));
  samples.colwise() += model.prior_mean;
  return samples;
}

VectorXd simulate_data(const GaussianLinearModel& model, const VectorXd& x_true,
                       std::uint64_t seed) {
  if (x_true.size() != model.param_dim())
    throw ShapeError("simulate_data: x_true has wrong length");
  const SquareRootFactor s = spd_sqrt(model.gamma_obs);
  CounterRng rng(seed, 0x0b5e);
  return model.g.apply(x_true) + s.apply(rng.normal_vector(model.data_dim()));
}

void save_model(const GaussianLinearModel& model, const std::string& dir,
                const std::string& name, std::uint64_t seed) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  if (model.g.has_sparse())
    mm::write_sparse(dir + "/forward.mtx", model.g.sparse());
  else
    mm::write_dense(dir + "/forward.mtx", model.g.materialize());
  mm::write_dense(dir + "/gamma_obs.mtx", model.gamma_obs.mat(), true);
  mm::write_dense(dir + "/gamma_pr.mtx", model.gamma_pr.mat(), true);
  mm::write_vector(dir + "/prior_mean.mtx", model.prior_mean);
  nlohmann::json manifest{
      {"name", name},
      {"data_dim", model.data_dim()},
      {"param_dim", model.param_dim()},
      {"forward_storage", model.g.has_sparse() ? "sparse" : "dense"},
      {"seed", seed},
      {"files",
       {{"forward", "forward.mtx"},
        {"gamma_obs", "gamma_obs.mtx"},
        {"gamma_pr", "gamma_pr.mtx"},
        {"prior_mean", "prior_mean.mtx"}}}};
  std::ofstream os(dir + "/manifest.json");
  if (!os) throw Error("cannot write manifest in " + dir);
  os << manifest.dump(2) << "\n";
}

std::string model_hash(const GaussianLinearModel& model) {
  std::ostringstream ss;
  if (model.g.has_sparse())
    mm::write_sparse(ss, model.g.sparse());
  else
    mm::write_dense(ss, model.g.materialize());
  mm::write_dense(ss, model.gamma_obs.mat(), true);
  mm::write_dense(ss, model.gamma_pr.mat(), true);
  mm::write_dense(ss, model.prior_mean);
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(fnv1a64(ss.str())));
  return buf;
}

GaussianLinearModel load_model(const std::string& dir) {
  std::ifstream is(dir + "/manifest.json");
  if (!is) throw Error("cannot read manifest in " + dir);
  nlohmann::json manifest;
  is >> manifest;
  const std::string storage = manifest.value("forward_storage", "dense");
  LinearOperator g = storage == "sparse"
                         ? LinearOperator::from_sparse(mm::read_sparse(dir + "/forward.mtx"))
                         : LinearOperator::from_dense(mm::read_dense(dir + "/forward.mtx"));
  SpdMatrix gamma_obs(mm::read_dense(dir + "/gamma_obs.mtx"), "gamma_obs");
  SpdMatrix gamma_pr(mm::read_dense(dir + "/gamma_pr.mtx"), "gamma_pr");
  VectorXd prior_mean = mm::read_vector(dir + "/prior_mean.mtx");
  return GaussianLinearModel(std::move(g), std::move(gamma_obs), std::move(gamma_pr),
                             std::move(prior_mean));
}

}  // namespace lowrank
