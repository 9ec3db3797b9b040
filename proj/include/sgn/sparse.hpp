#pragma once

#include <iosfwd>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "sgn/errors.hpp"

namespace sgn {

using Index = Eigen::Index;
using Vector = Eigen::VectorXd;
using DenseMatrix = Eigen::MatrixXd;
// Compressed sparse column storage; every matrix handed between modules is
// kept compressed with sorted, unique row indices per column.
using CscMatrix = Eigen::SparseMatrix<double, Eigen::ColMajor, int>;

struct Triplet {
  Index row;
  Index col;
  double value;
};

/// Assembly-form sparse matrix. Duplicate (row, col) entries are summed when
/// converted to CSC.
class TripletMatrix {
 public:
  TripletMatrix() = default;
  TripletMatrix(Index rows, Index cols) : rows_(rows), cols_(cols) {}

  Index rows() const { return rows_; }
  Index cols() const { return cols_; }
  const std::vector<Triplet>& entries() const { return entries_; }

  void reserve(std::size_t n) { entries_.reserve(n); }
  void add(Index row, Index col, double value) { entries_.push_back({row, col, value}); }

  // Scatter a dense block with its top-left corner at (row0, col0).
  void add_block(Index row0, Index col0, const DenseMatrix& block);
  // Scatter a sparse block, optionally transposed and scaled.
  void add_sparse(Index row0, Index col0, const CscMatrix& block, bool transpose = false,
                  double scale = 1.0);
  void add_diagonal(Index start, Index count, double value);
  void add_diagonal(Index row0, Index col0, Index count, double value);

 private:
  Index rows_ = 0;
  Index cols_ = 0;
  std::vector<Triplet> entries_;
};

CscMatrix csc_from_triplets(const TripletMatrix& t);
TripletMatrix triplets_from_csc(const CscMatrix& m);

// True when column pointers are monotone, nnz matches the last pointer and
// row indices are strictly increasing inside every column.
bool is_canonical_csc(const CscMatrix& m);

Vector spmv(const CscMatrix& m, const Vector& v);
Vector spmv_transpose(const CscMatrix& m, const Vector& v);

CscMatrix sparse_identity(Index n);
CscMatrix sparse_zero(Index rows, Index cols);
CscMatrix sparse_from_dense(const DenseMatrix& d, double drop_tol = 0.0);

/// Saddle-point layout
///   [ A      B^T     dcdx^T ]
///   [ B      C       dcdp^T ]
///   [ dcdx   dcdp    0      ]
/// with A n_x x n_x, B n_p x n_x, C n_p x n_p, dcdx n_x x n_x, dcdp n_x x n_p.
CscMatrix stack_kkt_blocks(const CscMatrix& A, const CscMatrix& B, const CscMatrix& C,
                           const CscMatrix& dcdx, const CscMatrix& dcdp);

double symmetry_defect(const CscMatrix& m);

void write_matrix_market(std::ostream& out, const CscMatrix& m);
CscMatrix read_matrix_market(std::istream& in);

}  // namespace sgn
