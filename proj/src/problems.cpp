#include "lowrank/problems.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Dense>
#include <Eigen/SparseCholesky>

namespace lowrank {

// ---------------------------------------------------------------------------
// Controlled-spectra random pencils

MatrixXd haar_orthogonal(Index n, CounterRng& rng) {
  MatrixXd a = rng.normal_matrix(n, n);
  MatrixXd q(n, n);
  // modified Gram-Schmidt, with one reorthogonalization pass
  for (Index j = 0; j < n; ++j) {
    VectorXd v = a.col(j);
    for (int pass = 0; pass < 2; ++pass)
      if (j > 0) v -= q.leftCols(j) * (q.leftCols(j).transpose() * v);
    const double norm = v.norm();
    if (norm <= 1e-300)
      throw FactorizationError("haar_orthogonal: degenerate Gaussian draw");
    q.col(j) = v / norm;
  }
  return q;
}

namespace {

VectorXd power_law_spectrum(Index n, double lambda0, double alpha, double tau) {
  VectorXd s(n);
  for (Index k = 0; k < n; ++k)
    s[k] = lambda0 / std::pow(static_cast<double>(k + 1), alpha) + tau;
  if (!(s.minCoeff() > 0.0))
    throw ConfigError("synthetic spectrum must be strictly positive");
  return s;
}

}  // namespace

SyntheticProblem make_synthetic(const SyntheticSpectrumConfig& cfg) {
  if (cfg.dim < 1) throw ConfigError("make_synthetic: dim must be positive");
  const Index n = cfg.dim;
  const VectorXd lambda = power_law_spectrum(n, cfg.lambda0, cfg.alpha, cfg.tau);
  const VectorXd lambda_tilde =
      power_law_spectrum(n, cfg.lambda0_tilde, cfg.alpha_tilde, cfg.tau_tilde);

  CounterRng rng_u(cfg.seed, 0xa001);
  CounterRng rng_v(cfg.seed, 0xa002);
  const MatrixXd u = haar_orthogonal(n, rng_u);
  const MatrixXd v = haar_orthogonal(n, rng_v);

  MatrixXd h = u * lambda.asDiagonal() * u.transpose();
  h = 0.5 * (h + h.transpose().eval());
  MatrixXd gamma_pr = v * lambda_tilde.asDiagonal() * v.transpose();
  gamma_pr = 0.5 * (gamma_pr + gamma_pr.transpose().eval());

  // G = diag(lambda)^{1/2} U^T realizes H = G^T G with unit noise.
  MatrixXd g = lambda.cwiseSqrt().asDiagonal() * u.transpose();

  GaussianLinearModel model(LinearOperator::from_dense(std::move(g)),
                            SpdMatrix(MatrixXd::Identity(n, n), "gamma_obs"),
                            SpdMatrix(gamma_pr, "gamma_pr"));
  return SyntheticProblem{std::move(model), std::move(h), lambda, lambda_tilde};
}

// ---------------------------------------------------------------------------
// SPDE prior

namespace {

struct Tensor2 {
  double c11, c12, c22;
};

Tensor2 tensor_at(const SpdePriorConfig& cfg, double x, double y) {
  switch (cfg.tensor) {
    case TensorField::identity:
      return {1.0, 0.0, 1.0};
    case TensorField::rotating_anisotropic: {
      // principal axis rotates smoothly across the domain
      const double theta = 0.5 * M_PI * (x + y);
      const double c = std::cos(theta), s = std::sin(theta);
      const double a = 1.0, b = cfg.aniso_ratio;
      return {a * c * c + b * s * s, (a - b) * c * s, a * s * s + b * c * c};
    }
  }
  throw ConfigError("unknown tensor field");
}

}  // namespace

SpdePrior make_spde_prior(const SpdePriorConfig& cfg) {
  if (cfg.grid_n < 2) throw ConfigError("spde prior: grid_n must be >= 2");
  if (!(cfg.kappa > 0.0) || !(cfg.gamma > 0.0))
    throw ConfigError("spde prior: kappa and gamma must be positive");
  const Index n = cfg.grid_n;
  const Index dim = n * n;
  const double h = 1.0 / static_cast<double>(n);
  auto idx = [n](Index i, Index j) { return j * n + i; };  // column-major cells

  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(static_cast<size_t>(12 * dim));
  auto add = [&](Index r, Index c, double v) { trip.emplace_back(r, c, v); };

  // Diagonal part of the tensor through face differences (the exact 5-point
  // stencil when c = I); zero-flux boundaries contribute nothing.
  for (Index j = 0; j < n; ++j) {
    for (Index i = 0; i + 1 < n; ++i) {  // x-faces between (i,j) and (i+1,j)
      const double xm = (static_cast<double>(i) + 1.0) * h;
      const double ym = (static_cast<double>(j) + 0.5) * h;
      const double c = tensor_at(cfg, xm, ym).c11 / (h * h);
      const Index p = idx(i, j), q = idx(i + 1, j);
      add(p, p, c); add(q, q, c); add(p, q, -c); add(q, p, -c);
    }
  }
  for (Index j = 0; j + 1 < n; ++j) {
    for (Index i = 0; i < n; ++i) {  // y-faces between (i,j) and (i,j+1)
      const double xm = (static_cast<double>(i) + 0.5) * h;
      const double ym = (static_cast<double>(j) + 1.0) * h;
      const double c = tensor_at(cfg, xm, ym).c22 / (h * h);
      const Index p = idx(i, j), q = idx(i, j + 1);
      add(p, p, c); add(q, q, c); add(p, q, -c); add(q, p, -c);
    }
  }
  SparseMatrixXd l_diag(dim, dim);
  l_diag.setFromTriplets(trip.begin(), trip.end());

  SparseMatrixXd a_h = l_diag;
  if (cfg.tensor != TensorField::identity) {
    // Mixed term Gx^T c12 Gy + Gy^T c12 Gx with cell-centered averaged
    // gradients; symmetric by construction.
    std::vector<Eigen::Triplet<double>> gx_t, gy_t;
    for (Index j = 0; j < n; ++j)
      for (Index i = 0; i < n; ++i) {
        const Index p = idx(i, j);
        const Index il = std::max<Index>(i - 1, 0), ir = std::min<Index>(i + 1, n - 1);
        const Index jl = std::max<Index>(j - 1, 0), jr = std::min<Index>(j + 1, n - 1);
        const double wx = 1.0 / (static_cast<double>(ir - il) * h);
        const double wy = 1.0 / (static_cast<double>(jr - jl) * h);
        gx_t.emplace_back(p, idx(ir, j), wx);
        gx_t.emplace_back(p, idx(il, j), -wx);
        gy_t.emplace_back(p, idx(i, jr), wy);
        gy_t.emplace_back(p, idx(i, jl), -wy);
      }
    SparseMatrixXd gx(dim, dim), gy(dim, dim);
    gx.setFromTriplets(gx_t.begin(), gx_t.end());
    gy.setFromTriplets(gy_t.begin(), gy_t.end());
    VectorXd c12(dim);
    for (Index j = 0; j < n; ++j)
      for (Index i = 0; i < n; ++i)
        c12[idx(i, j)] = tensor_at(cfg, (i + 0.5) * h, (j + 0.5) * h).c12;
    SparseMatrixXd cross =
        SparseMatrixXd(gx.transpose()) * c12.asDiagonal() * gy;
    a_h += SparseMatrixXd(cross + SparseMatrixXd(cross.transpose()));
  }
  // kappa^2 I shift
  SparseMatrixXd shift(dim, dim);
  shift.setIdentity();
  a_h += cfg.kappa * cfg.kappa * shift;
  a_h.makeCompressed();

  const double gamma_h = cfg.gamma * h;

  // Dense factors at desk scale: L = gamma_h A_h, covariance sqrt = L^{-1}.
  Eigen::SimplicialLLT<SparseMatrixXd> llt(a_h);
  if (llt.info() != Eigen::Success)
    throw ConfigError("spde prior: discrete operator is not positive definite");
  MatrixXd l_dense = gamma_h * MatrixXd(a_h);
  MatrixXd l_inv = llt.solve(MatrixXd::Identity(dim, dim)) / gamma_h;

  MatrixXd cov = l_inv * l_inv.transpose();
  cov = 0.5 * (cov + cov.transpose().eval());
  MatrixXd prec = l_dense * l_dense.transpose();
  prec = 0.5 * (prec + prec.transpose().eval());

  return SpdePrior{std::move(a_h),
                   gamma_h,
                   SpdMatrix(std::move(prec), "spde precision"),
                   SquareRootFactor(std::move(l_dense), SquareRootFactor::Kind::general),
                   SpdMatrix(std::move(cov), "spde covariance"),
                   SquareRootFactor(std::move(l_inv), SquareRootFactor::Kind::general)};
}

// ---------------------------------------------------------------------------
// Tomography

std::vector<std::pair<Index, double>> trace_ray(const Eigen::Vector2d& p0,
                                                const Eigen::Vector2d& p1, Index n) {
  std::vector<std::pair<Index, double>> out;
  const Eigen::Vector2d d = p1 - p0;
  const double len = d.norm();
  if (len <= 0.0) return out;

  // clip the segment to the unit square
  double tmin = 0.0, tmax = 1.0;
  for (int axis = 0; axis < 2; ++axis) {
    if (std::abs(d[axis]) < 1e-300) {
      if (p0[axis] < 0.0 || p0[axis] > 1.0) return out;
    } else {
      double t0 = (0.0 - p0[axis]) / d[axis];
      double t1 = (1.0 - p0[axis]) / d[axis];
      if (t0 > t1) std::swap(t0, t1);
      tmin = std::max(tmin, t0);
      tmax = std::min(tmax, t1);
    }
  }
  if (tmax <= tmin) return out;

  const double hh = 1.0 / static_cast<double>(n);
  auto cell_of = [&](double c) {
    return std::clamp<Index>(static_cast<Index>(std::floor(c / hh)), 0, n - 1);
  };
  const Eigen::Vector2d start = p0 + tmin * d;
  Index ci = cell_of(start.x());
  Index cj = cell_of(start.y());
  const Index step_i = d.x() > 0 ? 1 : -1;
  const Index step_j = d.y() > 0 ? 1 : -1;
  // parameter values at which the ray crosses the next x / y gridline
  auto next_crossing = [&](double pos, double dir, Index cell, Index step) {
    if (std::abs(dir) < 1e-300) return std::numeric_limits<double>::infinity();
    const double boundary = (static_cast<double>(cell) + (step > 0 ? 1.0 : 0.0)) * hh;
    return (boundary - pos) / dir;
  };
  double t = tmin;
  double tx = next_crossing(p0.x(), d.x(), ci, step_i);
  double ty = next_crossing(p0.y(), d.y(), cj, step_j);
  while (t < tmax - 1e-15) {
    const double t_next = std::min({tx, ty, tmax});
    const double seg = (t_next - t) * len;
    if (seg > 0.0) out.emplace_back(cj * n + ci, seg);
    if (t_next >= tmax) break;
    if (tx <= ty) {
      ci += step_i;
      if (ci < 0 || ci >= n) break;
      tx = next_crossing(p0.x(), d.x(), ci, step_i);
    } else {
      cj += step_j;
      if (cj < 0 || cj >= n) break;
      ty = next_crossing(p0.y(), d.y(), cj, step_j);
    }
    t = t_next;
  }
  return out;
}

namespace {

struct Circle {
  Eigen::Vector2d center;
  double radius;
};

// length of the intersection of segment p0->p1 with the disk
double chord_length(const Eigen::Vector2d& p0, const Eigen::Vector2d& p1,
                    const Circle& c) {
  const Eigen::Vector2d d = p1 - p0;
  const Eigen::Vector2d f = p0 - c.center;
  const double a = d.squaredNorm();
  const double b = 2.0 * f.dot(d);
  const double cc = f.squaredNorm() - c.radius * c.radius;
  const double disc = b * b - 4.0 * a * cc;
  if (disc <= 0.0 || a <= 0.0) return 0.0;
  const double sq = std::sqrt(disc);
  const double t0 = std::clamp((-b - sq) / (2.0 * a), 0.0, 1.0);
  const double t1 = std::clamp((-b + sq) / (2.0 * a), 0.0, 1.0);
  return (t1 - t0) * std::sqrt(a);
}

struct TruthGeometry {
  Circle outer, inner;
  std::vector<Circle> inclusions;
  double ring_density, inclusion_density;

  double density_at(double x, double y) const {
    const Eigen::Vector2d p(x, y);
    for (const Circle& c : inclusions)
      if ((p - c.center).norm() <= c.radius) return inclusion_density;
    const double r = (p - outer.center).norm();
    if (r <= outer.radius && r >= inner.radius) return ring_density;
    return 0.0;
  }

  double line_integral(const Eigen::Vector2d& p0, const Eigen::Vector2d& p1) const {
    double v = ring_density * (chord_length(p0, p1, outer) - chord_length(p0, p1, inner));
    for (const Circle& c : inclusions)
      v += inclusion_density * chord_length(p0, p1, c);
    return v;
  }
};

TruthGeometry truth_geometry(const TomographySetup& s) {
  TruthGeometry g;
  const auto circles = truth_geometry_circles(s);
  g.outer = {{circles[0].x, circles[0].y}, circles[0].radius};
  g.inner = {{circles[1].x, circles[1].y}, circles[1].radius};
  for (size_t k = 2; k < circles.size(); ++k)
    g.inclusions.push_back({{circles[k].x, circles[k].y}, circles[k].radius});
  g.ring_density = s.ring_density;
  g.inclusion_density = s.inclusion_density;
  return g;
}

}  // namespace

std::vector<CircleSpec> truth_geometry_circles(const TomographySetup& s) {
  std::vector<CircleSpec> circles;
  circles.push_back({0.5, 0.5, s.ring_outer_radius, s.ring_density});
  circles.push_back({0.5, 0.5, s.ring_inner_radius, 0.0});
  for (int k = 0; k < 3; ++k) {
    const double angle = 0.5 * M_PI + 2.0 * M_PI * k / 3.0;
    circles.push_back({0.5 + s.inclusion_offset * std::cos(angle),
                       0.5 + s.inclusion_offset * std::sin(angle),
                       s.inclusion_radius, s.inclusion_density});
  }
  return circles;
}

TomographyProblem make_tomography(const TomographySetup& setup, std::uint64_t seed) {
  if (setup.grid_n < 2) throw ConfigError("tomography: grid_n must be >= 2");
  if (setup.num_sources < 1 || setup.rays_per_source < 1)
    throw ConfigError("tomography: need at least one source and one ray");
  const Index n = setup.grid_n;
  const Index dim = n * n;
  const Index m = static_cast<Index>(setup.num_sources) * setup.rays_per_source;
  const Eigen::Vector2d center(0.5, 0.5);

  // source positions
  std::vector<double> source_angles;
  if (setup.coverage == ScanCoverage::limited_90deg) {
    // sources spread over a 90-degree arc
    const double start = 0.25 * M_PI;
    const double span = 0.5 * M_PI;
    for (int k = 0; k < setup.num_sources; ++k)
      source_angles.push_back(
          start + span * (setup.num_sources == 1
                              ? 0.5
                              : static_cast<double>(k) / (setup.num_sources - 1)));
  } else {
    for (int k = 0; k < setup.num_sources; ++k)
      source_angles.push_back(2.0 * M_PI * k / setup.num_sources);
  }

  std::vector<Ray> rays;
  rays.reserve(static_cast<size_t>(m));
  for (double theta : source_angles) {
    const Eigen::Vector2d src =
        center + setup.source_radius * Eigen::Vector2d(std::cos(theta), std::sin(theta));
    for (int k = 0; k < setup.rays_per_source; ++k) {
      const double psi =
          -setup.fan_half_angle +
          2.0 * setup.fan_half_angle *
              (setup.rays_per_source == 1
                   ? 0.5
                   : static_cast<double>(k) / (setup.rays_per_source - 1));
      const double phi = theta + M_PI + psi;  // detector angle, opposite side
      const Eigen::Vector2d dst =
          center + setup.source_radius * Eigen::Vector2d(std::cos(phi), std::sin(phi));
      rays.push_back(Ray{src, dst});
    }
  }

  // sparse system matrix of cell-intersection lengths
  std::vector<Eigen::Triplet<double>> trip;
  std::vector<int> missed;
  for (Index r = 0; r < m; ++r) {
    const auto cells = trace_ray(rays[static_cast<size_t>(r)].src,
                                 rays[static_cast<size_t>(r)].dst, n);
    if (cells.empty()) missed.push_back(static_cast<int>(r));
    for (const auto& [cell, len] : cells) trip.emplace_back(r, cell, len);
  }
  SparseMatrixXd g(m, dim);
  g.setFromTriplets(trip.begin(), trip.end());
  g.makeCompressed();

  const TruthGeometry geom = truth_geometry(setup);
  VectorXd x_true(dim);
  const double h = 1.0 / static_cast<double>(n);
  for (Index j = 0; j < n; ++j)
    for (Index i = 0; i < n; ++i)
      x_true[j * n + i] = geom.density_at((i + 0.5) * h, (j + 0.5) * h);

  // data from the exact geometry (never through G and the raster), so the
  // discretized inversion does not share its own forward map
  VectorXd exact(m);
  for (Index r = 0; r < m; ++r)
    exact[r] = geom.line_integral(rays[static_cast<size_t>(r)].src,
                                  rays[static_cast<size_t>(r)].dst);
  CounterRng rng(seed, 0x70e0);
  VectorXd y = exact + setup.noise_sigma * rng.normal_vector(m);

  SpdePriorConfig prior_cfg = setup.prior;
  prior_cfg.grid_n = n;
  SpdePrior prior = make_spde_prior(prior_cfg);

  GaussianLinearModel model(
      LinearOperator::from_sparse(std::move(g)),
      SpdMatrix(setup.noise_sigma * setup.noise_sigma *
                    MatrixXd::Identity(m, m),
                "gamma_obs"),
      std::move(prior.covariance));
  return TomographyProblem{std::move(model), std::move(x_true), std::move(y),
                           std::move(exact), std::move(rays), std::move(missed)};
}

// ---------------------------------------------------------------------------
// Heat equation

HeatProblem make_heat(const HeatProblemConfig& cfg, std::uint64_t seed) {
  if (cfg.grid_n < 2) throw ConfigError("heat: grid_n must be >= 2");
  if (!(cfg.dt > 0.0)) throw ConfigError("heat: dt must be positive");
  if (cfg.num_times < 1) throw ConfigError("heat: need at least one observation time");
  if (cfg.sensor_grid < 1 || cfg.sensor_grid > cfg.grid_n)
    throw ConfigError("heat: invalid sensor grid");
  const Index n = cfg.grid_n;
  const Index dim = n * n;
  const double h = 1.0 / static_cast<double>(n);
  std::function<double(double, double)> kappa = cfg.conductivity;
  if (!kappa) kappa = [](double, double) { return 1.0; };

  // face-based diffusion operator with zero-flux boundaries; row sums vanish
  std::vector<Eigen::Triplet<double>> trip;
  auto idx = [n](Index i, Index j) { return j * n + i; };
  auto add_face = [&](Index p, Index q, double x, double y) {
    const double k = kappa(x, y);
    if (k < 0.0) throw ConfigError("heat: conductivity must be non-negative");
    const double c = k / (h * h);
    trip.emplace_back(p, p, c);
    trip.emplace_back(q, q, c);
    trip.emplace_back(p, q, -c);
    trip.emplace_back(q, p, -c);
  };
  for (Index j = 0; j < n; ++j)
    for (Index i = 0; i + 1 < n; ++i)
      add_face(idx(i, j), idx(i + 1, j), (i + 1.0) * h, (j + 0.5) * h);
  for (Index j = 0; j + 1 < n; ++j)
    for (Index i = 0; i < n; ++i)
      add_face(idx(i, j), idx(i, j + 1), (i + 0.5) * h, (j + 1.0) * h);
  SparseMatrixXd diffusion(dim, dim);
  diffusion.setFromTriplets(trip.begin(), trip.end());

  SparseMatrixXd stepper(dim, dim);
  stepper.setIdentity();
  stepper += cfg.dt * diffusion;  // implicit Euler: solve stepper u_{t+1} = u_t
  auto solver = std::make_shared<Eigen::SimplicialLLT<SparseMatrixXd>>(stepper);
  if (solver->info() != Eigen::Success)
    throw ConfigError("heat: implicit-Euler step matrix is not positive definite");

  // sensors on a uniform sub-grid of the lower-left quadrant
  std::vector<Index> sensors;
  for (Index b = 0; b < cfg.sensor_grid; ++b)
    for (Index a = 0; a < cfg.sensor_grid; ++a) {
      const double sx = 0.5 * (a + 0.5) / static_cast<double>(cfg.sensor_grid);
      const double sy = 0.5 * (b + 0.5) / static_cast<double>(cfg.sensor_grid);
      const Index ci = std::min<Index>(static_cast<Index>(sx / h), n - 1);
      const Index cj = std::min<Index>(static_cast<Index>(sy / h), n - 1);
      sensors.push_back(idx(ci, cj));
    }
  const Index n_s = static_cast<Index>(sensors.size());
  const Index m = n_s * cfg.num_times;
  const Index num_times = cfg.num_times;

  auto forward = [solver, sensors, n_s, num_times](const VectorXd& x) {
    VectorXd data(n_s * num_times);
    VectorXd u = x;
    for (Index t = 0; t < num_times; ++t) {
      u = solver->solve(u);
      for (Index k = 0; k < n_s; ++k) data[t * n_s + k] = u[sensors[static_cast<size_t>(k)]];
    }
    return data;
  };
  auto adjoint = [solver, sensors, n_s, num_times, dim](const VectorXd& v) {
    VectorXd w = VectorXd::Zero(dim);
    for (Index t = num_times - 1; t >= 0; --t) {
      for (Index k = 0; k < n_s; ++k) w[sensors[static_cast<size_t>(k)]] += v[t * n_s + k];
      w = solver->solve(w);  // the step matrix is symmetric
    }
    return w;
  };
  LinearOperator g(m, dim, forward, adjoint);

  SpdePriorConfig prior_cfg = cfg.prior;
  prior_cfg.grid_n = n;
  SpdePrior prior = make_spde_prior(prior_cfg);

  GaussianLinearModel model(
      std::move(g),
      SpdMatrix(cfg.noise_sigma * cfg.noise_sigma * MatrixXd::Identity(m, m),
                "gamma_obs"),
      std::move(prior.covariance));

  const VectorXd x_true = sample_prior(model, 1, CounterRng::derive(seed, 0xd0a1)).col(0);
  const VectorXd y = simulate_data(model, x_true, CounterRng::derive(seed, 0xd0a2));
  return HeatProblem{std::move(model), x_true, y, std::move(sensors)};
}

}  // namespace lowrank
