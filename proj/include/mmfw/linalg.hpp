#ifndef MMFW_LINALG_HPP
#define MMFW_LINALG_HPP

#include <Eigen/Dense>

#include <iosfwd>
#include <string>
#include <vector>

namespace mmfw {

using DenseMatrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Coordinate-format sparse matrix. Entries are kept sorted in row-major
/// order, hold no explicit zeros and no duplicate (row, col) pairs.
struct CooEntry {
  int row = 0;
  int col = 0;
  double value = 0.0;
};

class SparseCoo {
 public:
  SparseCoo() = default;
  SparseCoo(int rows, int cols) : rows_(rows), cols_(cols) {}

  // Takes ownership of `entries`; sorts them and enforces the invariants
  // (indices in range, no duplicates, no stored zeros).
  SparseCoo(int rows, int cols, std::vector<CooEntry> entries);

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  std::size_t nnz() const { return entries_.size(); }
  const std::vector<CooEntry>& entries() const { return entries_; }

  DenseMatrix densify() const;

  static SparseCoo identity(int n);

 private:
  int rows_ = 0;
  int cols_ = 0;
  std::vector<CooEntry> entries_;
};

/// Dense matrix with exact (bitwise) symmetry enforced at construction.
class SymmetricMatrix {
 public:
  SymmetricMatrix() = default;

  // Rejects (throws std::invalid_argument) any asymmetric input.
  static SymmetricMatrix exact(const DenseMatrix& m);
  // Replaces m by (m + m^T)/2, which is bitwise symmetric.
  static SymmetricMatrix symmetrized(const DenseMatrix& m);

  int size() const { return static_cast<int>(mat_.rows()); }
  const DenseMatrix& mat() const { return mat_; }
  double operator()(int i, int j) const { return mat_(i, j); }

 private:
  explicit SymmetricMatrix(DenseMatrix m) : mat_(std::move(m)) {}
  DenseMatrix mat_;
};

/// Orthogonal rotation acting on k coordinates, identity elsewhere.
struct GivensRotation {
  int level = 0;                // 1-based factorization level
  std::vector<int> index_set;   // the k rotated coordinates, in order
  DenseMatrix core;             // k x k, member of SO(k)

  int order() const { return static_cast<int>(index_set.size()); }
  // max-norm of core^T core - I
  double orthogonality_error() const;
};

SparseCoo coo_from_dense(const DenseMatrix& m, double drop_tol);

// a * b computed from the triplets; throws on dimension mismatch.
DenseMatrix spmm(const SparseCoo& a, const DenseMatrix& b);
// a^T * b; requires a.rows == b.rows.
DenseMatrix transpose_spmm(const SparseCoo& a, const DenseMatrix& b);

double frobenius_norm(const DenseMatrix& m);

// U a U^T for U = I (+) core on the rotation's index set. Only the rows and
// columns named by the index set are touched; the result is bitwise
// symmetric.
SymmetricMatrix conjugate_by_rotation(const SymmetricMatrix& a,
                                      const GivensRotation& rot);

// ---- text format ------------------------------------------------------
//
// First line "n m nnz", then nnz lines "i j v" with 0-based indices.
// Lines starting with '#' are skipped. Dense matrices use nnz = n*m.

void write_matrix_text(std::ostream& os, const SparseCoo& m);
void write_matrix_text(std::ostream& os, const DenseMatrix& m);
SparseCoo read_sparse_text(std::istream& is);
DenseMatrix read_dense_text(std::istream& is);

SparseCoo read_sparse_file(const std::string& path);
DenseMatrix read_dense_file(const std::string& path);

// Formats v with enough digits to round-trip a double exactly.
std::string format_double(double v);

}  // namespace mmfw

#endif  // MMFW_LINALG_HPP
