#include <doctest.h>

#include <sstream>

#include "oracles.hpp"
#include "sgn/sparse.hpp"

using namespace sgn;

TEST_CASE("duplicate triplets are summed") {
  TripletMatrix t(2, 2);
  t.add(0, 0, 1.0);
  t.add(0, 0, 2.0);
  const CscMatrix m = csc_from_triplets(t);
  CHECK(m.nonZeros() == 1);
  CHECK(m.coeff(0, 0) == 3.0);
  CHECK(is_canonical_csc(m));
}

TEST_CASE("empty triplet list gives the zero matrix") {
  const CscMatrix m = csc_from_triplets(TripletMatrix(3, 3));
  CHECK(m.rows() == 3);
  CHECK(m.cols() == 3);
  CHECK(m.nonZeros() == 0);
}

TEST_CASE("out-of-bounds triplet names the entry") {
  TripletMatrix t(2, 2);
  t.add(0, 0, 1.0);
  t.add(2, 1, 1.0);
  try {
    csc_from_triplets(t);
    FAIL("expected IndexOutOfBounds");
  } catch (const IndexOutOfBounds& e) {
    CHECK(e.entry == 1);
    CHECK(e.row == 2);
    CHECK(e.col == 1);
    CHECK(e.kind() == ErrorKind::IndexOutOfBounds);
  }
}

TEST_CASE("CSC matvec matches brute-force triplet accumulation") {
  std::mt19937 rng(3);
  std::uniform_real_distribution<double> val(-1.0, 1.0), unit(0.0, 1.0);
  TripletMatrix t(20, 20);
  for (int i = 0; i < 20; ++i)
    for (int j = 0; j < 20; ++j)
      if (unit(rng) < 0.2) t.add(i, j, val(rng));
  // Some duplicates on top.
  for (int k = 0; k < 10; ++k) t.add(k, (3 * k) % 20, val(rng));
  const CscMatrix m = csc_from_triplets(t);
  CHECK(is_canonical_csc(m));
  for (int trial = 0; trial < 10; ++trial) {
    const Vector v = oracle::random_vector(rng, 20);
    Vector ref = Vector::Zero(20);
    for (const Triplet& e : t.entries()) ref(e.row) += e.value * v(e.col);
    CHECK((spmv(m, v) - ref).norm() <= 1e-14 * ref.norm());
  }
}

TEST_CASE("spmv basics") {
  const Vector v = (Vector(4) << 1, 2, 3, 4).finished();
  CHECK(spmv(sparse_identity(4), v) == v);
  CHECK(spmv(sparse_zero(3, 4), v).isZero(0.0));
  CHECK(spmv(sparse_zero(3, 4), v).size() == 3);
  CHECK_THROWS_AS(spmv(sparse_identity(3), v), Error);
  CHECK_THROWS_AS(spmv_transpose(sparse_identity(3), v), Error);
}

TEST_CASE("spmv against dense expansion, and transpose consistency") {
  std::mt19937 rng(5);
  const CscMatrix m = oracle::random_sparse(rng, 15, 7, 0.3);
  const DenseMatrix d(m);
  const Vector v = oracle::random_vector(rng, 7);
  const Vector w = oracle::random_vector(rng, 15);
  CHECK((spmv(m, v) - d * v).norm() <= 1e-14 * (d * v).norm());
  CHECK((spmv_transpose(m, w) - d.transpose() * w).norm() <= 1e-14 * (d.transpose() * w).norm());
  const CscMatrix mt = m.transpose();
  CHECK((spmv_transpose(m, w) - spmv(mt, w)).norm() <= 1e-15 * spmv(mt, w).norm());
}

TEST_CASE("triplet -> CSC -> dense -> CSC round trip is exact") {
  std::mt19937 rng(7);
  const CscMatrix m = oracle::random_sparse(rng, 12, 9, 0.25);
  const CscMatrix back = sparse_from_dense(DenseMatrix(m));
  CHECK(DenseMatrix(back) == DenseMatrix(m));
  const CscMatrix again = csc_from_triplets(triplets_from_csc(m));
  CHECK(DenseMatrix(again) == DenseMatrix(m));
}

TEST_CASE("stack_kkt_blocks places every block") {
  TripletMatrix cp(2, 1);
  cp.add(0, 0, 1.0);
  cp.add(1, 0, 1.0);
  const CscMatrix K = stack_kkt_blocks(sparse_identity(2), sparse_zero(1, 2), sparse_zero(1, 1),
                                       sparse_identity(2), csc_from_triplets(cp));
  DenseMatrix expect = DenseMatrix::Zero(5, 5);
  expect.block(0, 0, 2, 2).setIdentity();
  expect.block(0, 3, 2, 2).setIdentity();
  expect.block(3, 0, 2, 2).setIdentity();
  expect(2, 3) = expect(2, 4) = 1.0;
  expect(3, 2) = expect(4, 2) = 1.0;
  CHECK(DenseMatrix(K) == expect);
  CHECK(symmetry_defect(K) == 0.0);
}

TEST_CASE("stack_kkt_blocks of zero blocks") {
  const CscMatrix K = stack_kkt_blocks(sparse_zero(3, 3), sparse_zero(2, 3), sparse_zero(2, 2),
                                       sparse_zero(3, 3), sparse_zero(3, 2));
  CHECK(K.rows() == 8);
  CHECK(K.cols() == 8);
  CHECK(K.nonZeros() == 0);
}

TEST_CASE("stack_kkt_blocks matches dense concatenation") {
  std::mt19937 rng(11);
  const Index nx = 8, np = 3;
  CscMatrix A0 = oracle::random_sparse(rng, nx, nx, 0.3);
  const CscMatrix A = CscMatrix(A0 + CscMatrix(A0.transpose()));
  CscMatrix C0 = oracle::random_sparse(rng, np, np, 0.5);
  const CscMatrix C = CscMatrix(C0 + CscMatrix(C0.transpose()));
  const CscMatrix B = oracle::random_sparse(rng, np, nx, 0.3);
  const CscMatrix Jx = oracle::random_sparse(rng, nx, nx, 0.3);
  const CscMatrix Jp = oracle::random_sparse(rng, nx, np, 0.3);
  DenseMatrix ref = DenseMatrix::Zero(2 * nx + np, 2 * nx + np);
  ref.block(0, 0, nx, nx) = DenseMatrix(A);
  ref.block(0, nx, nx, np) = DenseMatrix(B).transpose();
  ref.block(0, nx + np, nx, nx) = DenseMatrix(Jx).transpose();
  ref.block(nx, 0, np, nx) = DenseMatrix(B);
  ref.block(nx, nx, np, np) = DenseMatrix(C);
  ref.block(nx, nx + np, np, nx) = DenseMatrix(Jp).transpose();
  ref.block(nx + np, 0, nx, nx) = DenseMatrix(Jx);
  ref.block(nx + np, nx, nx, np) = DenseMatrix(Jp);
  const CscMatrix K = stack_kkt_blocks(A, B, C, Jx, Jp);
  CHECK((DenseMatrix(K) - ref).norm() == 0.0);
  CHECK(symmetry_defect(K) == 0.0);
}

TEST_CASE("stack_kkt_blocks rejects mismatched blocks") {
  CHECK_THROWS_AS(stack_kkt_blocks(sparse_zero(3, 3), sparse_zero(2, 3), sparse_zero(2, 2), sparse_zero(3, 3),
                                   sparse_zero(3, 3)),
                  Error);
  CHECK_THROWS_AS(stack_kkt_blocks(sparse_zero(3, 3), sparse_zero(2, 2), sparse_zero(2, 2), sparse_zero(3, 3),
                                   sparse_zero(3, 2)),
                  Error);
  // n_c != n_x
  CHECK_THROWS_AS(stack_kkt_blocks(sparse_zero(3, 3), sparse_zero(2, 3), sparse_zero(2, 2), sparse_zero(2, 3),
                                   sparse_zero(2, 2)),
                  Error);
}

TEST_CASE("MatrixMarket round trip") {
  std::mt19937 rng(13);
  const CscMatrix m = oracle::random_sparse(rng, 6, 4, 0.4);
  std::stringstream s;
  write_matrix_market(s, m);
  CHECK(s.str().rfind("%%MatrixMarket matrix coordinate real general\n", 0) == 0);
  const CscMatrix back = read_matrix_market(s);
  CHECK(DenseMatrix(back) == DenseMatrix(m));

  std::stringstream bad("%%MatrixMarket matrix array real general\n2 2\n");
  CHECK_THROWS_AS(read_matrix_market(bad), Error);
  std::stringstream truncated("%%MatrixMarket matrix coordinate real general\n2 2 2\n1 1 1.0\n");
  CHECK_THROWS_AS(read_matrix_market(truncated), Error);
}

TEST_CASE("symmetric MatrixMarket input is mirrored") {
  std::stringstream s("%%MatrixMarket matrix coordinate real symmetric\n% comment\n2 2 2\n1 1 4\n2 1 -1\n");
  const CscMatrix m = read_matrix_market(s);
  CHECK(m.coeff(0, 1) == -1.0);
  CHECK(m.coeff(1, 0) == -1.0);
  CHECK(m.coeff(0, 0) == 4.0);
}
