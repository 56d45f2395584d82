#include "mmfw/linalg.hpp"

#include "test_support.hpp"

#include <doctest.h>

#include <cmath>
#include <sstream>

using namespace mmfw;

TEST_CASE("coo_from_dense keeps exactly the entries above tolerance") {
  CHECK(coo_from_dense(DenseMatrix::Identity(3, 3), 0.0).nnz() == 3);
  CHECK(coo_from_dense(DenseMatrix::Zero(4, 4), 0.0).nnz() == 0);

  DenseMatrix m(2, 2);
  m << 1.0, 0.5, 0.5, 1.0;
  SparseCoo s = coo_from_dense(m, 0.6);
  REQUIRE(s.nnz() == 2);
  for (const CooEntry& e : s.entries()) CHECK(e.row == e.col);
}

TEST_CASE("coo_from_dense round-trips at zero tolerance") {
  std::mt19937_64 rng(7);
  DenseMatrix m = test::random_matrix(5, 7, rng);
  CHECK(coo_from_dense(m, 0.0).densify() == m);
}

TEST_CASE("sparse constructor enforces invariants") {
  CHECK_THROWS(SparseCoo(2, 2, {{0, 0, 1.0}, {0, 0, 2.0}}));  // duplicate
  CHECK_THROWS(SparseCoo(2, 2, {{2, 0, 1.0}}));               // out of range
  SparseCoo s(2, 2, {{0, 1, 0.0}, {1, 0, 3.0}});
  CHECK(s.nnz() == 1);  // explicit zero dropped
}

TEST_CASE("spmm matches the dense product") {
  std::mt19937_64 rng(11);
  DenseMatrix b = test::random_matrix(8, 3, rng);
  CHECK(test::max_abs_diff(spmm(SparseCoo::identity(8), b), b) == 0.0);
  CHECK(spmm(SparseCoo(8, 8), b).isZero(0.0));

  SparseCoo a = test::random_sparse(8, 8, 0.2, rng);
  CHECK(test::max_abs_diff(spmm(a, b), a.densify() * b) <= 1e-12);
  CHECK_THROWS(spmm(a, test::random_matrix(5, 2, rng)));
}

TEST_CASE("transpose_spmm equals densify-transpose-multiply") {
  std::mt19937_64 rng(13);
  DenseMatrix b = test::random_matrix(6, 2, rng);
  CHECK(test::max_abs_diff(transpose_spmm(SparseCoo::identity(6), b), b) == 0.0);

  // permutation: rows of b land at the permuted positions
  std::vector<CooEntry> perm{{0, 2, 1.0}, {1, 0, 1.0}, {2, 1, 1.0}};
  SparseCoo p(3, 3, std::move(perm));
  DenseMatrix c = test::random_matrix(3, 2, rng);
  DenseMatrix got = transpose_spmm(p, c);
  CHECK(got.row(2) == c.row(0));
  CHECK(got.row(0) == c.row(1));
  CHECK(got.row(1) == c.row(2));

  SparseCoo a = test::random_sparse(6, 6, 0.4, rng);
  CHECK(test::max_abs_diff(transpose_spmm(a, b),
                           a.densify().transpose() * b) <= 1e-12);
  CHECK_THROWS(transpose_spmm(a, test::random_matrix(5, 2, rng)));
}

TEST_CASE("frobenius_norm basics") {
  CHECK(frobenius_norm(DenseMatrix::Zero(3, 3)) == 0.0);
  CHECK(frobenius_norm(DenseMatrix::Identity(9, 9)) == doctest::Approx(3.0));
  DenseMatrix m(2, 2);
  m << 3.0, 4.0, 0.0, 0.0;
  CHECK(frobenius_norm(m) == doctest::Approx(5.0));
}

TEST_CASE("symmetric matrix construction") {
  DenseMatrix m(2, 2);
  m << 1.0, 2.0, 3.0, 4.0;
  CHECK_THROWS(SymmetricMatrix::exact(m));
  SymmetricMatrix s = SymmetricMatrix::symmetrized(m);
  CHECK(s(0, 1) == s(1, 0));
  CHECK(s(0, 1) == doctest::Approx(2.5));
}

namespace {

GivensRotation rotation_2d(double angle, std::vector<int> idx) {
  DenseMatrix o(2, 2);
  o << std::cos(angle), std::sin(angle), -std::sin(angle), std::cos(angle);
  return {1, std::move(idx), o};
}

}  // namespace

TEST_CASE("conjugate_by_rotation diagonalizes the 2x2 example") {
  DenseMatrix a(2, 2);
  a << 2.0, 1.0, 1.0, 2.0;
  // 45 degrees, first row (1,1)/sqrt2: sends [[2,1],[1,2]] to diag(3,1)
  SymmetricMatrix out = conjugate_by_rotation(SymmetricMatrix::exact(a),
                                              rotation_2d(M_PI / 4.0, {0, 1}));
  CHECK(out(0, 0) == doctest::Approx(3.0));
  CHECK(out(1, 1) == doctest::Approx(1.0));
  CHECK(std::abs(out(0, 1)) <= 1e-12);
}

TEST_CASE("conjugate_by_rotation identity core leaves input unchanged") {
  std::mt19937_64 rng(17);
  SymmetricMatrix a = test::random_symmetric(5, rng);
  GivensRotation rot{1, {1, 3}, DenseMatrix::Identity(2, 2)};
  CHECK(conjugate_by_rotation(a, rot).mat() == a.mat());
}

TEST_CASE("conjugate_by_rotation matches the dense oracle and is local") {
  std::mt19937_64 rng(19);
  for (int rep = 0; rep < 10; ++rep) {
    SymmetricMatrix a = test::random_symmetric(8, rng);
    std::vector<int> idx{1, 4, 6};
    DenseMatrix g = test::random_matrix(3, 3, rng);
    Eigen::HouseholderQR<DenseMatrix> qr(g);
    DenseMatrix core = qr.householderQ();
    if (core.determinant() < 0) core.col(2) = -core.col(2);
    GivensRotation rot{1, idx, core};

    DenseMatrix u = DenseMatrix::Identity(8, 8);
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) u(idx[(unsigned)r], idx[(unsigned)c]) = core(r, c);
    DenseMatrix oracle = u * a.mat() * u.transpose();

    SymmetricMatrix got = conjugate_by_rotation(a, rot);
    CHECK(test::max_abs_diff(got.mat(), oracle) <= 1e-12);
    CHECK(std::abs(frobenius_norm(got.mat()) - frobenius_norm(a.mat())) <=
          1e-10);

    // untouched entries are bit-identical
    for (int i = 0; i < 8; ++i)
      for (int j = 0; j < 8; ++j) {
        const bool touched_i = i == 1 || i == 4 || i == 6;
        const bool touched_j = j == 1 || j == 4 || j == 6;
        if (!touched_i && !touched_j) CHECK(got(i, j) == a(i, j));
      }
  }
}

TEST_CASE("conjugate_by_rotation rejects bad indices") {
  SymmetricMatrix a = SymmetricMatrix::exact(DenseMatrix::Identity(3, 3));
  GivensRotation rot{1, {1, 3}, DenseMatrix::Identity(2, 2)};
  CHECK_THROWS(conjugate_by_rotation(a, rot));
}

TEST_CASE("matrix text format round-trips") {
  std::mt19937_64 rng(23);
  SparseCoo s = test::random_sparse(5, 4, 0.4, rng);
  std::stringstream ss;
  write_matrix_text(ss, s);
  SparseCoo back = read_sparse_text(ss);
  CHECK(back.rows() == 5);
  CHECK(back.densify() == s.densify());

  DenseMatrix m = test::random_matrix(3, 3, rng);
  std::stringstream ds;
  write_matrix_text(ds, m);
  CHECK(read_dense_text(ds) == m);
}

TEST_CASE("matrix text format skips comments and rejects duplicates") {
  std::stringstream ok("# header comment\n2 2 2\n0 0 1.5\n# mid comment\n1 1 2.5e-1\n");
  SparseCoo s = read_sparse_text(ok);
  CHECK(s.nnz() == 2);

  std::stringstream dup("2 2 2\n0 0 1\n0 0 2\n");
  CHECK_THROWS(read_sparse_text(dup));

  std::stringstream trunc("2 2 3\n0 0 1\n");
  CHECK_THROWS(read_sparse_text(trunc));
}
