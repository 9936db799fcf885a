#include "lowrank/matrix_market.hpp"

#include <cctype>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <vector>

namespace lowrank::mm {

namespace {

std::string format_value(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

struct Header {
  bool coordinate = false;
  bool symmetric = false;
};

std::string lower(std::string s) {
  for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

Header parse_header(std::istream& is, long& line_no) {
  std::string line;
  if (!std::getline(is, line)) throw ParseError("matrix market: empty input", 1);
  ++line_no;
  std::istringstream hs(line);
  std::string banner, object, format, field, symmetry;
  hs >> banner >> object >> format >> field >> symmetry;
  if (banner != "%%MatrixMarket" || lower(object) != "matrix")
    throw ParseError("matrix market: bad banner '" + line + "'", line_no);
  Header h;
  format = lower(format);
  field = lower(field);
  symmetry = lower(symmetry);
  if (format == "coordinate")
    h.coordinate = true;
  else if (format != "array")
    throw ParseError("matrix market: unsupported format '" + format + "'", line_no);
  if (field != "real" && field != "integer" && field != "double")
    throw ParseError("matrix market: unsupported field '" + field + "'", line_no);
  if (symmetry == "symmetric")
    h.symmetric = true;
  else if (symmetry != "general")
    throw ParseError("matrix market: unsupported symmetry '" + symmetry + "'",
                     line_no);
  return h;
}

// next non-comment, non-blank line
bool next_data_line(std::istream& is, std::string& line, long& line_no) {
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty() || line[0] == '%') continue;
    bool blank = true;
    for (char c : line)
      if (!std::isspace(static_cast<unsigned char>(c))) {
        blank = false;
        break;
      }
    if (!blank) return true;
  }
  return false;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream os(path);
  if (!os) throw Error("cannot open '" + path + "' for writing");
  return os;
}

std::ifstream open_in(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw Error("cannot open '" + path + "' for reading");
  return is;
}

}  // namespace

void write_dense(std::ostream& os, const Eigen::MatrixXd& a, bool symmetric) {
  os << "%%MatrixMarket matrix array real "
     << (symmetric ? "symmetric" : "general") << "\n";
  os << a.rows() << " " << a.cols() << "\n";
  // column-major; symmetric stores the lower triangle only
  for (Eigen::Index j = 0; j < a.cols(); ++j)
    for (Eigen::Index i = symmetric ? j : 0; i < a.rows(); ++i)
      os << format_value(a(i, j)) << "\n";
}

void write_dense(const std::string& path, const Eigen::MatrixXd& a, bool symmetric) {
  auto os = open_out(path);
  write_dense(os, a, symmetric);
}

void write_sparse(std::ostream& os, const Eigen::SparseMatrix<double>& a,
                  bool symmetric) {
  os << "%%MatrixMarket matrix coordinate real "
     << (symmetric ? "symmetric" : "general") << "\n";
  std::vector<std::string> entries;
  for (int k = 0; k < a.outerSize(); ++k)
    for (Eigen::SparseMatrix<double>::InnerIterator it(a, k); it; ++it) {
      if (symmetric && it.row() < it.col()) continue;
      entries.push_back(std::to_string(it.row() + 1) + " " +
                        std::to_string(it.col() + 1) + " " +
                        format_value(it.value()));
    }
  os << a.rows() << " " << a.cols() << " " << entries.size() << "\n";
  for (const auto& e : entries) os << e << "\n";
}

void write_sparse(const std::string& path, const Eigen::SparseMatrix<double>& a,
                  bool symmetric) {
  auto os = open_out(path);
  write_sparse(os, a, symmetric);
}

Eigen::MatrixXd read_dense(std::istream& is) {
  long line_no = 0;
  const Header h = parse_header(is, line_no);
  std::string line;
  if (!next_data_line(is, line, line_no))
    throw ParseError("matrix market: missing size line", line_no);
  std::istringstream ss(line);
  long rows = 0, cols = 0, nnz = 0;
  if (h.coordinate) {
    if (!(ss >> rows >> cols >> nnz))
      throw ParseError("matrix market: bad size line", line_no);
  } else {
    if (!(ss >> rows >> cols))
      throw ParseError("matrix market: bad size line", line_no);
  }
  if (rows <= 0 || cols <= 0)
    throw ParseError("matrix market: non-positive dimensions", line_no);
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(rows, cols);
  if (h.coordinate) {
    for (long k = 0; k < nnz; ++k) {
      if (!next_data_line(is, line, line_no))
        throw ParseError("matrix market: truncated entry list", line_no);
      std::istringstream es(line);
      long i, j;
      double v;
      if (!(es >> i >> j >> v))
        throw ParseError("matrix market: bad entry '" + line + "'", line_no);
      if (i < 1 || i > rows || j < 1 || j > cols)
        throw ParseError("matrix market: index out of range", line_no);
      a(i - 1, j - 1) = v;
      if (h.symmetric) a(j - 1, i - 1) = v;
    }
  } else {
    for (long j = 0; j < cols; ++j) {
      for (long i = h.symmetric ? j : 0; i < rows; ++i) {
        if (!next_data_line(is, line, line_no))
          throw ParseError("matrix market: truncated value list", line_no);
        std::istringstream es(line);
        double v;
        if (!(es >> v))
          throw ParseError("matrix market: bad value '" + line + "'", line_no);
        a(i, j) = v;
        if (h.symmetric) a(j, i) = v;
      }
    }
  }
  return a;
}

Eigen::MatrixXd read_dense(const std::string& path) {
  auto is = open_in(path);
  return read_dense(is);
}

Eigen::SparseMatrix<double> read_sparse(std::istream& is) {
  long line_no = 0;
  const Header h = parse_header(is, line_no);
  if (!h.coordinate)
    throw ParseError("matrix market: expected coordinate format", line_no);
  std::string line;
  if (!next_data_line(is, line, line_no))
    throw ParseError("matrix market: missing size line", line_no);
  std::istringstream ss(line);
  long rows, cols, nnz;
  if (!(ss >> rows >> cols >> nnz))
    throw ParseError("matrix market: bad size line", line_no);
  std::vector<Eigen::Triplet<double>> triplets;
  triplets.reserve(static_cast<size_t>(h.symmetric ? 2 * nnz : nnz));
  for (long k = 0; k < nnz; ++k) {
    if (!next_data_line(is, line, line_no))
      throw ParseError("matrix market: truncated entry list", line_no);
    std::istringstream es(line);
    long i, j;
    double v;
    if (!(es >> i >> j >> v))
      throw ParseError("matrix market: bad entry '" + line + "'", line_no);
    if (i < 1 || i > rows || j < 1 || j > cols)
      throw ParseError("matrix market: index out of range", line_no);
    triplets.emplace_back(i - 1, j - 1, v);
    if (h.symmetric && i != j) triplets.emplace_back(j - 1, i - 1, v);
  }
  Eigen::SparseMatrix<double> a(rows, cols);
  a.setFromTriplets(triplets.begin(), triplets.end());
  return a;
}

Eigen::SparseMatrix<double> read_sparse(const std::string& path) {
  auto is = open_in(path);
  return read_sparse(is);
}

void write_vector(const std::string& path, const Eigen::VectorXd& v) {
  write_dense(path, v);
}

Eigen::VectorXd read_vector(const std::string& path) {
  Eigen::MatrixXd a = read_dense(path);
  if (a.cols() != 1) throw ParseError("expected a single-column matrix in " + path);
  return a.col(0);
}

}  // namespace lowrank::mm
