#include "sgn/sparse.hpp"

#include <cmath>
#include <iomanip>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <string>

namespace sgn {

void TripletMatrix::add_block(Index row0, Index col0, const DenseMatrix& block) {
  for (Index j = 0; j < block.cols(); ++j)
    for (Index i = 0; i < block.rows(); ++i)
      if (block(i, j) != 0.0) add(row0 + i, col0 + j, block(i, j));
}

void TripletMatrix::add_sparse(Index row0, Index col0, const CscMatrix& block, bool transpose,
                               double scale) {
  for (Index k = 0; k < block.outerSize(); ++k)
    for (CscMatrix::InnerIterator it(block, k); it; ++it) {
      if (transpose)
        add(row0 + it.col(), col0 + it.row(), scale * it.value());
      else
        add(row0 + it.row(), col0 + it.col(), scale * it.value());
    }
}

void TripletMatrix::add_diagonal(Index start, Index count, double value) {
  for (Index i = 0; i < count; ++i) add(start + i, start + i, value);
}

void TripletMatrix::add_diagonal(Index row0, Index col0, Index count, double value) {
  for (Index i = 0; i < count; ++i) add(row0 + i, col0 + i, value);
}

CscMatrix csc_from_triplets(const TripletMatrix& t) {
  std::vector<Eigen::Triplet<double, int>> eig;
  eig.reserve(t.entries().size());
  for (std::size_t k = 0; k < t.entries().size(); ++k) {
    const Triplet& e = t.entries()[k];
    if (e.row < 0 || e.row >= t.rows() || e.col < 0 || e.col >= t.cols())
      throw IndexOutOfBounds(k, e.row, e.col, t.rows(), t.cols());
    eig.emplace_back(static_cast<int>(e.row), static_cast<int>(e.col), e.value);
  }
  CscMatrix m(t.rows(), t.cols());
  m.setFromTriplets(eig.begin(), eig.end());
  m.makeCompressed();
  return m;
}

TripletMatrix triplets_from_csc(const CscMatrix& m) {
  TripletMatrix t(m.rows(), m.cols());
  t.reserve(static_cast<std::size_t>(m.nonZeros()));
  t.add_sparse(0, 0, m);
  return t;
}

bool is_canonical_csc(const CscMatrix& m) {
  if (!m.isCompressed()) return false;
  const int* outer = m.outerIndexPtr();
  const int* inner = m.innerIndexPtr();
  if (outer[0] != 0) return false;
  for (Index j = 0; j < m.cols(); ++j) {
    if (outer[j + 1] < outer[j]) return false;
    for (int k = outer[j]; k < outer[j + 1]; ++k) {
      if (inner[k] < 0 || inner[k] >= m.rows()) return false;
      if (k > outer[j] && inner[k] <= inner[k - 1]) return false;
    }
  }
  return outer[m.cols()] == m.nonZeros();
}

Vector spmv(const CscMatrix& m, const Vector& v) {
  require_dims(m.cols() == v.size(), "spmv: matrix has " + std::to_string(m.cols()) +
                                         " columns, vector has " + std::to_string(v.size()));
  return m * v;
}

Vector spmv_transpose(const CscMatrix& m, const Vector& v) {
  require_dims(m.rows() == v.size(), "spmv_transpose: matrix has " + std::to_string(m.rows()) +
                                         " rows, vector has " + std::to_string(v.size()));
  return m.transpose() * v;
}

CscMatrix sparse_identity(Index n) {
  CscMatrix m(n, n);
  m.setIdentity();
  m.makeCompressed();
  return m;
}

CscMatrix sparse_zero(Index rows, Index cols) {
  CscMatrix m(rows, cols);
  m.makeCompressed();
  return m;
}

CscMatrix sparse_from_dense(const DenseMatrix& d, double drop_tol) {
  TripletMatrix t(d.rows(), d.cols());
  for (Index j = 0; j < d.cols(); ++j)
    for (Index i = 0; i < d.rows(); ++i)
      if (std::abs(d(i, j)) > drop_tol) t.add(i, j, d(i, j));
  return csc_from_triplets(t);
}

CscMatrix stack_kkt_blocks(const CscMatrix& A, const CscMatrix& B, const CscMatrix& C,
                           const CscMatrix& dcdx, const CscMatrix& dcdp) {
  const Index nx = A.rows();
  const Index np = C.rows();
  require_dims(A.cols() == nx, "stack_kkt_blocks: A must be square");
  require_dims(C.cols() == np, "stack_kkt_blocks: C must be square");
  require_dims(B.rows() == np && B.cols() == nx, "stack_kkt_blocks: B must be n_p x n_x");
  require_dims(dcdx.rows() == nx && dcdx.cols() == nx,
               "stack_kkt_blocks: dc/dx must be n_x x n_x (n_c = n_x)");
  require_dims(dcdp.rows() == nx && dcdp.cols() == np, "stack_kkt_blocks: dc/dp must be n_c x n_p");

  const Index n = 2 * nx + np;
  TripletMatrix t(n, n);
  t.reserve(static_cast<std::size_t>(A.nonZeros() + C.nonZeros() +
                                     2 * (B.nonZeros() + dcdx.nonZeros() + dcdp.nonZeros())));
  t.add_sparse(0, 0, A);
  t.add_sparse(nx, 0, B);
  t.add_sparse(0, nx, B, true);
  t.add_sparse(nx, nx, C);
  t.add_sparse(nx + np, 0, dcdx);
  t.add_sparse(0, nx + np, dcdx, true);
  t.add_sparse(nx + np, nx, dcdp);
  t.add_sparse(nx, nx + np, dcdp, true);
  return csc_from_triplets(t);
}

double symmetry_defect(const CscMatrix& m) {
  if (m.rows() != m.cols()) return std::numeric_limits<double>::infinity();
  CscMatrix mt = m.transpose();
  CscMatrix diff = m - mt;
  double worst = 0.0;
  for (Index k = 0; k < diff.outerSize(); ++k)
    for (CscMatrix::InnerIterator it(diff, k); it; ++it) worst = std::max(worst, std::abs(it.value()));
  return worst;
}

void write_matrix_market(std::ostream& out, const CscMatrix& m) {
  out << "%%MatrixMarket matrix coordinate real general\n";
  out << m.rows() << " " << m.cols() << " " << m.nonZeros() << "\n";
  out << std::setprecision(17);
  for (Index k = 0; k < m.outerSize(); ++k)
    for (CscMatrix::InnerIterator it(m, k); it; ++it)
      out << (it.row() + 1) << " " << (it.col() + 1) << " " << it.value() << "\n";
}

CscMatrix read_matrix_market(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line.rfind("%%MatrixMarket", 0) != 0)
    throw Error(ErrorKind::Io, "missing %%MatrixMarket header");
  if (line.find("coordinate") == std::string::npos || line.find("real") == std::string::npos)
    throw Error(ErrorKind::Io, "only 'coordinate real' MatrixMarket files are supported");
  const bool symmetric = line.find("symmetric") != std::string::npos;
  while (std::getline(in, line))
    if (!line.empty() && line[0] != '%') break;
  std::istringstream header(line);
  long rows = 0, cols = 0, nnz = 0;
  if (!(header >> rows >> cols >> nnz)) throw Error(ErrorKind::Io, "bad MatrixMarket size line");
  TripletMatrix t(rows, cols);
  for (long k = 0; k < nnz; ++k) {
    long i = 0, j = 0;
    double v = 0.0;
    if (!(in >> i >> j >> v))
      throw Error(ErrorKind::Io, "MatrixMarket file truncated at entry " + std::to_string(k));
    t.add(i - 1, j - 1, v);
    if (symmetric && i != j) t.add(j - 1, i - 1, v);
  }
  return csc_from_triplets(t);
}

}  // namespace sgn
