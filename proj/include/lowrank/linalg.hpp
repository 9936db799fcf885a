#ifndef LOWRANK_LINALG_HPP
#define LOWRANK_LINALG_HPP

#include <functional>
#include <memory>
#include <optional>
#include <string>

#include <Eigen/Core>
#include <Eigen/LU>
#include <Eigen/SparseCore>

#include "lowrank/errors.hpp"

namespace lowrank {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;
using SparseMatrixXd = Eigen::SparseMatrix<double>;

// Default cutoff below which exact dense reference computations are used.
inline constexpr Index kDenseFallbackDim = 512;

namespace detail {
// Plain lower-triangular Cholesky. Returns the index of the failing pivot,
// or -1 on success; L is valid only on success.
long cholesky_lower(const MatrixXd& a, MatrixXd& l);
}  // namespace detail

// Dense symmetric positive definite matrix. Symmetry and positive
// definiteness are checked once at construction; instances are immutable.
class SpdMatrix {
public:
  explicit SpdMatrix(MatrixXd entries, std::string name = "matrix");

  Index dim() const { return entries_.rows(); }
  const MatrixXd& mat() const { return entries_; }
  const std::string& name() const { return name_; }

  // Lower Cholesky factor computed at construction.
  const MatrixXd& chol_lower() const { return chol_; }

  template <class Derived>
  auto apply(const Eigen::MatrixBase<Derived>& v) const {
    return (entries_ * v.derived()).eval();
  }

  template <class Derived>
  auto solve(const Eigen::MatrixBase<Derived>& rhs) const {
    using Result =
        Eigen::Matrix<double, Derived::RowsAtCompileTime, Derived::ColsAtCompileTime>;
    Result y = chol_.triangularView<Eigen::Lower>().solve(rhs.derived());
    chol_.transpose().triangularView<Eigen::Upper>().solveInPlace(y);
    return y;
  }

  MatrixXd inverse() const;
  double log_det() const;  // via the Cholesky diagonal, overflow-safe

private:
  MatrixXd entries_;
  MatrixXd chol_;
  std::string name_;
};

// Left square-root factor S of an SPD matrix A, with A = S S^T. The factor
// is triangular when produced by a Cholesky factorization but may be a
// general square matrix (e.g. an inverse of a discrete operator).
class SquareRootFactor {
public:
  enum class Kind { lower_triangular, general };

  SquareRootFactor(MatrixXd factor, Kind kind);

  Index base_dim() const { return factor_.rows(); }
  const MatrixXd& factor() const { return factor_; }
  Kind kind() const { return kind_; }

  template <class Derived>
  auto apply(const Eigen::MatrixBase<Derived>& v) const {
    return (factor_ * v.derived()).eval();
  }
  template <class Derived>
  auto apply_transpose(const Eigen::MatrixBase<Derived>& v) const {
    return (factor_.transpose() * v.derived()).eval();
  }

  // S^{-1} x and S^{-T} x.
  template <class Derived>
  auto solve(const Eigen::MatrixBase<Derived>& rhs) const {
    using Result =
        Eigen::Matrix<double, Derived::RowsAtCompileTime, Derived::ColsAtCompileTime>;
    Result out;
    if (kind_ == Kind::lower_triangular)
      out = factor_.triangularView<Eigen::Lower>().solve(rhs.derived());
    else
      out = lu_->solve(rhs.derived());
    return out;
  }
  template <class Derived>
  auto solve_transpose(const Eigen::MatrixBase<Derived>& rhs) const {
    using Result =
        Eigen::Matrix<double, Derived::RowsAtCompileTime, Derived::ColsAtCompileTime>;
    Result out;
    if (kind_ == Kind::lower_triangular)
      out = factor_.transpose().triangularView<Eigen::Upper>().solve(rhs.derived());
    else
      out = lu_->transpose().solve(rhs.derived());
    return out;
  }

  MatrixXd reconstruct() const { return factor_ * factor_.transpose(); }

private:
  MatrixXd factor_;
  Kind kind_;
  // LU of the factor, built once for non-triangular factors.
  std::shared_ptr<const Eigen::PartialPivLU<MatrixXd>> lu_;
};

// Matrix-free symmetric-or-general linear map with an explicit transpose
// action. Dense and sparse matrices get a fast path and can be recovered
// for serialization; purely functional operators materialize on demand.
class LinearOperator {
public:
  using Apply = std::function<VectorXd(const VectorXd&)>;

  LinearOperator(Index out_dim, Index in_dim, Apply apply, Apply apply_transpose);

  static LinearOperator from_dense(MatrixXd a);
  static LinearOperator from_sparse(SparseMatrixXd a);

  Index in_dim() const { return in_dim_; }
  Index out_dim() const { return out_dim_; }

  VectorXd apply(const VectorXd& v) const;
  VectorXd apply_transpose(const VectorXd& v) const;
  MatrixXd apply_matrix(const MatrixXd& m) const;            // columnwise
  MatrixXd apply_transpose_matrix(const MatrixXd& m) const;  // columnwise
  // guard against a matrix silently collapsing into the vector overloads
  VectorXd apply(const MatrixXd&) const = delete;
  VectorXd apply_transpose(const MatrixXd&) const = delete;

  bool has_dense() const { return dense_ != nullptr; }
  bool has_sparse() const { return sparse_ != nullptr; }
  const SparseMatrixXd& sparse() const;

  // Dense matrix of the operator; applies to basis vectors unless a stored
  // matrix is available.
  MatrixXd materialize() const;

private:
  Index out_dim_, in_dim_;
  Apply apply_, apply_transpose_;
  std::shared_ptr<const MatrixXd> dense_;
  std::shared_ptr<const SparseMatrixXd> sparse_;
};

// Eigenpairs sorted by non-increasing eigenvalue. `vectors` column i pairs
// with `values[i]`. The orthonormality flag records the inner product the
// vectors are orthonormal in: standard, or weighted by a matrix B (for
// pencil eigenvectors, B is the prior precision).
struct EigenPairs {
  enum class Orthonormality { standard, b_weighted };

  VectorXd values;
  MatrixXd vectors;
  Orthonormality orthonormality = Orthonormality::standard;
};

enum class EigMethod { dense_whitened, lanczos, randomized };

struct EigOptions {
  double tol = 1e-8;
  Index max_iter = 0;  // 0 = automatic
  Index dense_fallback_dim = kDenseFallbackDim;
  std::uint64_t seed = 20250811;  // start vectors of the iterative methods
  Index oversampling = 10;        // randomized method
  Index power_iterations = 2;     // randomized method
};

// Cholesky square root of an SPD matrix: S S^T = A.
SquareRootFactor spd_sqrt(const SpdMatrix& a);

// Full symmetric eigendecomposition, eigenvalues non-increasing.
EigenPairs sym_eig(const MatrixXd& a);

// Top-k generalized eigenpairs (delta_i^2, w_hat_i) of the pencil
// (H, prior^{-1}), normalized so that w_hat_i^T prior^{-1} w_hat_j = I.
// Solved by whitening with a prior square root: the standard eigenproblem
// for S^T H S is decomposed and its vectors mapped by w -> S w.
EigenPairs generalized_eig(const LinearOperator& h, const SpdMatrix& prior, Index k,
                           EigMethod method = EigMethod::dense_whitened,
                           const EigOptions& opts = {});

// Singular triplets of S_obs^{-1} G S_pr mapped back to the problem
// geometry: values delta_i, left vectors v_hat_i = S_obs^{-T} v_i
// (normalized v_hat^T Gamma_obs v_hat = 1) and right vectors
// w_hat_i = S_pr w_i (normalized w_hat^T Gamma_pr^{-1} w_hat = 1).
struct GsvdTriplets {
  VectorXd values;  // delta_i >= 0, non-increasing
  MatrixXd v_hat;   // out_dim x k
  MatrixXd w_hat;   // in_dim x k
};

GsvdTriplets gsvd_triplets(const LinearOperator& g, const SquareRootFactor& s_pr,
                           const SquareRootFactor& s_obs, Index k);

namespace detail {
// Deterministic sign convention: flips each column so its first
// above-noise entry is positive. Used on whitened eigenvectors so that all
// eigensolver backends agree.
void fix_column_signs(MatrixXd& m);
void fix_column_signs_paired(MatrixXd& primary, MatrixXd& companion);
}  // namespace detail

}  // namespace lowrank

#endif
