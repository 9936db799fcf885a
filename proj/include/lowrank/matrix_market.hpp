#ifndef LOWRANK_MATRIX_MARKET_HPP
#define LOWRANK_MATRIX_MARKET_HPP

#include <iosfwd>
#include <string>

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include "lowrank/errors.hpp"

namespace lowrank::mm {

// Matrix Market text IO for real matrices. Dense matrices use the `array`
// format, sparse matrices the `coordinate` format; `symmetric` storage is
// understood on read and can be requested on write. Values round-trip
// exactly (17 significant digits).

void write_dense(std::ostream& os, const Eigen::MatrixXd& a, bool symmetric = false);
void write_dense(const std::string& path, const Eigen::MatrixXd& a,
                 bool symmetric = false);

void write_sparse(std::ostream& os, const Eigen::SparseMatrix<double>& a,
                  bool symmetric = false);
void write_sparse(const std::string& path, const Eigen::SparseMatrix<double>& a,
                  bool symmetric = false);

// Reads either format into a dense matrix.
Eigen::MatrixXd read_dense(std::istream& is);
Eigen::MatrixXd read_dense(const std::string& path);

// Reads a coordinate-format file into a sparse matrix.
Eigen::SparseMatrix<double> read_sparse(std::istream& is);
Eigen::SparseMatrix<double> read_sparse(const std::string& path);

void write_vector(const std::string& path, const Eigen::VectorXd& v);
Eigen::VectorXd read_vector(const std::string& path);

}  // namespace lowrank::mm

#endif
