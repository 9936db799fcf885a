#include "lowrank/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include <Eigen/Dense>

#include "lowrank/rng.hpp"

namespace lowrank {

namespace detail {

long cholesky_lower(const MatrixXd& a, MatrixXd& l) {
  const Index n = a.rows();
  l = MatrixXd::Zero(n, n);
  for (Index j = 0; j < n; ++j) {
    double d = a(j, j) - l.row(j).head(j).squaredNorm();
    if (!(d > 0.0) || !std::isfinite(d)) return static_cast<long>(j);
    d = std::sqrt(d);
    l(j, j) = d;
    if (j + 1 < n) {
      l.col(j).tail(n - j - 1) =
          (a.col(j).tail(n - j - 1) -
           l.bottomLeftCorner(n - j - 1, j) * l.row(j).head(j).transpose()) /
          d;
    }
  }
  return -1;
}

void fix_column_signs(MatrixXd& m) {
  for (Index j = 0; j < m.cols(); ++j) {
    const double noise = 1e-8 * m.col(j).cwiseAbs().maxCoeff();
    for (Index i = 0; i < m.rows(); ++i) {
      if (std::abs(m(i, j)) > noise) {
        if (m(i, j) < 0) m.col(j) = -m.col(j);
        break;
      }
    }
  }
}

void fix_column_signs_paired(MatrixXd& primary, MatrixXd& companion) {
  for (Index j = 0; j < primary.cols(); ++j) {
    const double noise = 1e-8 * primary.col(j).cwiseAbs().maxCoeff();
    for (Index i = 0; i < primary.rows(); ++i) {
      if (std::abs(primary(i, j)) > noise) {
        if (primary(i, j) < 0) {
          primary.col(j) = -primary.col(j);
          companion.col(j) = -companion.col(j);
        }
        break;
      }
    }
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// SpdMatrix

SpdMatrix::SpdMatrix(MatrixXd entries, std::string name)
    : entries_(std::move(entries)), name_(std::move(name)) {
  if (entries_.rows() != entries_.cols() || entries_.rows() == 0)
    throw ShapeError(name_ + ": SPD matrix must be square and non-empty");
  const double scale = entries_.cwiseAbs().maxCoeff();
  const double asym = (entries_ - entries_.transpose()).cwiseAbs().maxCoeff();
  if (scale > 0 && asym > 1e-12 * scale)
    throw ShapeError(name_ + ": matrix is not symmetric (relative asymmetry " +
                     std::to_string(asym / scale) + ")");
  // enforce exact symmetry before factorizing
  entries_ = 0.5 * (entries_ + entries_.transpose().eval());
  const long pivot = detail::cholesky_lower(entries_, chol_);
  if (pivot >= 0)
    throw NotPositiveDefinite(
        name_ + ": not positive definite, factorization failed at pivot " +
            std::to_string(pivot),
        pivot);
}

MatrixXd SpdMatrix::inverse() const {
  return solve(MatrixXd(MatrixXd::Identity(dim(), dim())));
}

double SpdMatrix::log_det() const {
  return 2.0 * chol_.diagonal().array().log().sum();
}

// ---------------------------------------------------------------------------
// SquareRootFactor

SquareRootFactor::SquareRootFactor(MatrixXd factor, Kind kind)
    : factor_(std::move(factor)), kind_(kind) {
  if (factor_.rows() != factor_.cols() || factor_.rows() == 0)
    throw ShapeError("square-root factor must be square and non-empty");
  if (kind_ == Kind::general)
    lu_ = std::make_shared<Eigen::PartialPivLU<MatrixXd>>(factor_);
}

// ---------------------------------------------------------------------------
// LinearOperator

LinearOperator::LinearOperator(Index out_dim, Index in_dim, Apply apply,
                               Apply apply_transpose)
    : out_dim_(out_dim),
      in_dim_(in_dim),
      apply_(std::move(apply)),
      apply_transpose_(std::move(apply_transpose)) {
  if (out_dim_ <= 0 || in_dim_ <= 0)
    throw ShapeError("operator dimensions must be positive");
}

LinearOperator LinearOperator::from_dense(MatrixXd a) {
  auto held = std::make_shared<const MatrixXd>(std::move(a));
  LinearOperator op(
      held->rows(), held->cols(),
      [held](const VectorXd& v) -> VectorXd { return (*held) * v; },
      [held](const VectorXd& v) -> VectorXd { return held->transpose() * v; });
  op.dense_ = held;
  return op;
}

LinearOperator LinearOperator::from_sparse(SparseMatrixXd a) {
  auto held = std::make_shared<const SparseMatrixXd>(std::move(a));
  LinearOperator op(
      held->rows(), held->cols(),
      [held](const VectorXd& v) -> VectorXd { return (*held) * v; },
      [held](const VectorXd& v) -> VectorXd { return held->transpose() * v; });
  op.sparse_ = held;
  return op;
}

VectorXd LinearOperator::apply(const VectorXd& v) const {
  if (v.size() != in_dim_) throw ShapeError("operator apply: wrong input size");
  return apply_(v);
}

VectorXd LinearOperator::apply_transpose(const VectorXd& v) const {
  if (v.size() != out_dim_)
    throw ShapeError("operator apply_transpose: wrong input size");
  return apply_transpose_(v);
}

MatrixXd LinearOperator::apply_matrix(const MatrixXd& m) const {
  if (m.rows() != in_dim_) throw ShapeError("operator apply: wrong input size");
  if (dense_) return (*dense_) * m;
  if (sparse_) return (*sparse_) * m;
  MatrixXd out(out_dim_, m.cols());
  for (Index j = 0; j < m.cols(); ++j) out.col(j) = apply_(m.col(j));
  return out;
}

MatrixXd LinearOperator::apply_transpose_matrix(const MatrixXd& m) const {
  if (m.rows() != out_dim_)
    throw ShapeError("operator apply_transpose: wrong input size");
  if (dense_) return dense_->transpose() * m;
  if (sparse_) return sparse_->transpose() * m;
  MatrixXd out(in_dim_, m.cols());
  for (Index j = 0; j < m.cols(); ++j) out.col(j) = apply_transpose_(m.col(j));
  return out;
}

const SparseMatrixXd& LinearOperator::sparse() const {
  if (!sparse_) throw Error("operator has no sparse representation");
  return *sparse_;
}

MatrixXd LinearOperator::materialize() const {
  if (dense_) return *dense_;
  if (sparse_) return MatrixXd(*sparse_);
  return apply_matrix(MatrixXd::Identity(in_dim_, in_dim_));
}

// ---------------------------------------------------------------------------
// Factorizations and eigensolvers

SquareRootFactor spd_sqrt(const SpdMatrix& a) {
  // The Cholesky factor is already held by the SpdMatrix.
  return SquareRootFactor(a.chol_lower(), SquareRootFactor::Kind::lower_triangular);
}

EigenPairs sym_eig(const MatrixXd& a) {
  if (a.rows() != a.cols()) throw ShapeError("sym_eig: matrix must be square");
  const double scale = a.cwiseAbs().maxCoeff();
  if (scale > 0) {
    const double asym = (a - a.transpose()).cwiseAbs().maxCoeff();
    if (asym > 1e-12 * scale)
      throw ShapeError("sym_eig: matrix is not symmetric");
  }
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(a);
  if (es.info() != Eigen::Success)
    throw FactorizationError("sym_eig: eigendecomposition failed");
  // Eigen sorts ascending; flip to non-increasing.
  EigenPairs out;
  out.values = es.eigenvalues().reverse();
  out.vectors = es.eigenvectors().rowwise().reverse();
  out.orthonormality = EigenPairs::Orthonormality::standard;
  detail::fix_column_signs(out.vectors);
  return out;
}

namespace {

// Whitened action v -> S^T H (S v).
MatrixXd whitened_dense(const LinearOperator& h, const SquareRootFactor& s) {
  MatrixXd hs = h.apply_matrix(s.factor());
  MatrixXd wh = s.factor().transpose() * hs;
  return 0.5 * (wh + wh.transpose().eval());
}

EigenPairs map_whitened(const VectorXd& values, const MatrixXd& w_whitened,
                        const SquareRootFactor& s) {
  EigenPairs out;
  out.values = values;
  MatrixXd w = w_whitened;
  detail::fix_column_signs(w);
  out.vectors = s.apply(w);
  out.orthonormality = EigenPairs::Orthonormality::b_weighted;
  return out;
}

EigenPairs dense_whitened_eig(const LinearOperator& h, const SquareRootFactor& s,
                              Index k) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(whitened_dense(h, s));
  if (es.info() != Eigen::Success)
    throw FactorizationError("generalized_eig: dense eigendecomposition failed");
  const Index n = es.eigenvalues().size();
  VectorXd values(k);
  MatrixXd vectors(n, k);
  for (Index i = 0; i < k; ++i) {
    values[i] = es.eigenvalues()[n - 1 - i];
    vectors.col(i) = es.eigenvectors().col(n - 1 - i);
  }
  return map_whitened(values, vectors, s);
}

struct WhitenedOp {
  const LinearOperator* h;
  const SquareRootFactor* s;
  VectorXd operator()(const VectorXd& v) const {
    return s->apply_transpose(h->apply(s->apply(v)));
  }
};

// Lanczos with full reorthogonalization on the whitened operator.
// Returns Ritz values/vectors of the top-k pairs; throws IterationError if
// the residuals do not reach tol and no dense fallback is possible.
EigenPairs lanczos_whitened(const LinearOperator& h, const SquareRootFactor& s,
                            Index k, const EigOptions& opts) {
  const Index n = s.base_dim();
  const WhitenedOp op{&h, &s};
  Index max_iter = opts.max_iter > 0 ? opts.max_iter : std::min(n, 2 * k + 40);
  max_iter = std::min(max_iter, n);

  CounterRng rng(opts.seed, 0x1a2b);
  MatrixXd v(n, max_iter);
  VectorXd alpha(max_iter), beta(max_iter);
  VectorXd q = rng.normal_vector(n);
  q.normalize();
  v.col(0) = q;

  Index j = 0;
  double op_scale = 1.0;
  for (; j < max_iter; ++j) {
    VectorXd w = op(v.col(j));
    op_scale = std::max(op_scale, w.norm());
    if (j > 0) w -= beta[j - 1] * v.col(j - 1);
    alpha[j] = v.col(j).dot(w);
    w -= alpha[j] * v.col(j);
    // full reorthogonalization, twice
    w -= v.leftCols(j + 1) * (v.leftCols(j + 1).transpose() * w);
    w -= v.leftCols(j + 1) * (v.leftCols(j + 1).transpose() * w);
    beta[j] = w.norm();
    if (j + 1 == max_iter) break;
    if (beta[j] <= 1e-14 * op_scale) {
      // invariant subspace found; restart with a fresh orthogonal direction
      VectorXd fresh = rng.normal_vector(n);
      fresh -= v.leftCols(j + 1) * (v.leftCols(j + 1).transpose() * fresh);
      const double norm = fresh.norm();
      if (norm <= 1e-14) break;  // space exhausted
      beta[j] = 0.0;
      v.col(j + 1) = fresh / norm;
      continue;
    }
    v.col(j + 1) = w / beta[j];
  }
  const Index m = std::min(j + 1, max_iter);
  if (m < k) throw IterationError("lanczos: Krylov space exhausted before rank");

  MatrixXd t = MatrixXd::Zero(m, m);
  t.diagonal() = alpha.head(m);
  for (Index i = 0; i + 1 < m; ++i) t(i, i + 1) = t(i + 1, i) = beta[i];
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(t);

  VectorXd values(k);
  MatrixXd ritz(n, k);
  std::vector<double> residuals(k);
  const double beta_last = (m < max_iter) ? beta[m - 1] : beta[max_iter - 1];
  for (Index i = 0; i < k; ++i) {
    values[i] = es.eigenvalues()[m - 1 - i];
    VectorXd y = es.eigenvectors().col(m - 1 - i);
    ritz.col(i) = v.leftCols(m) * y;
    residuals[i] = std::abs(beta_last * y[m - 1]);
  }
  // Ritz vectors of a full-reorthogonalized run are orthonormal to solver
  // precision; re-check residuals against the requested tolerance.
  bool converged = true;
  for (Index i = 0; i < k; ++i)
    if (residuals[i] > opts.tol * (values[i] + 1.0)) converged = false;
  if (!converged && m < n) {
    if (n <= opts.dense_fallback_dim) return dense_whitened_eig(h, s, k);
    throw IterationError("lanczos: tolerance not reached", residuals);
  }
  return map_whitened(values, ritz, s);
}

// Randomized subspace iteration on the whitened operator.
EigenPairs randomized_whitened(const LinearOperator& h, const SquareRootFactor& s,
                               Index k, const EigOptions& opts) {
  const Index n = s.base_dim();
  const Index p = std::min(n, k + opts.oversampling);
  const WhitenedOp op{&h, &s};
  CounterRng rng(opts.seed, 0x3c4d);

  MatrixXd q = rng.normal_matrix(n, p);
  auto apply_block = [&](const MatrixXd& block) {
    MatrixXd out(n, block.cols());
    for (Index c = 0; c < block.cols(); ++c) out.col(c) = op(block.col(c));
    return out;
  };
  q = apply_block(q);
  q = Eigen::HouseholderQR<MatrixXd>(q).householderQ() * MatrixXd::Identity(n, p);
  for (Index it = 0; it < opts.power_iterations; ++it) {
    q = apply_block(q);
    q = Eigen::HouseholderQR<MatrixXd>(q).householderQ() * MatrixXd::Identity(n, p);
  }
  MatrixXd aq = apply_block(q);
  MatrixXd small = q.transpose() * aq;
  small = 0.5 * (small + small.transpose().eval());
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(small);

  VectorXd values(k);
  MatrixXd vectors(n, k);
  for (Index i = 0; i < k; ++i) {
    values[i] = es.eigenvalues()[p - 1 - i];
    vectors.col(i) = q * es.eigenvectors().col(p - 1 - i);
  }
  return map_whitened(values, vectors, s);
}

}  // namespace

EigenPairs generalized_eig(const LinearOperator& h, const SpdMatrix& prior, Index k,
                           EigMethod method, const EigOptions& opts) {
  const Index n = prior.dim();
  if (h.in_dim() != n || h.out_dim() != n)
    throw ShapeError("generalized_eig: operator and prior dimensions differ");
  if (k < 1 || k > n)
    throw RankError("generalized_eig: requested rank " + std::to_string(k) +
                    " outside [1, " + std::to_string(n) + "]");
  const SquareRootFactor s = spd_sqrt(prior);
  switch (method) {
    case EigMethod::dense_whitened:
      return dense_whitened_eig(h, s, k);
    case EigMethod::lanczos:
      return lanczos_whitened(h, s, k, opts);
    case EigMethod::randomized:
      return randomized_whitened(h, s, k, opts);
  }
  throw Error("generalized_eig: unknown method");
}

GsvdTriplets gsvd_triplets(const LinearOperator& g, const SquareRootFactor& s_pr,
                           const SquareRootFactor& s_obs, Index k) {
  const Index m = g.out_dim();
  const Index n = g.in_dim();
  if (s_pr.base_dim() != n || s_obs.base_dim() != m)
    throw ShapeError("gsvd_triplets: inconsistent factor dimensions");
  if (k < 1 || k > std::min(m, n))
    throw RankError("gsvd_triplets: rank outside [1, min(m,n)]");
  if (s_obs.factor().diagonal().cwiseAbs().minCoeff() <= 0 &&
      s_obs.kind() == SquareRootFactor::Kind::lower_triangular)
    throw FactorizationError("gsvd_triplets: singular noise square root");

  // B = S_obs^{-1} G S_pr
  MatrixXd b = s_obs.solve(g.apply_matrix(s_pr.factor()));
  Eigen::JacobiSVD<MatrixXd> svd(b, Eigen::ComputeThinU | Eigen::ComputeThinV);

  GsvdTriplets out;
  out.values = svd.singularValues().head(k);
  MatrixXd w = svd.matrixV().leftCols(k);
  MatrixXd v = svd.matrixU().leftCols(k);
  // Sign convention matches generalized_eig: align the whitened right
  // vectors, flipping the left vectors with them to preserve the SVD.
  detail::fix_column_signs_paired(w, v);
  out.w_hat = s_pr.apply(w);
  out.v_hat = s_obs.solve_transpose(v);
  return out;
}

}  // namespace lowrank
