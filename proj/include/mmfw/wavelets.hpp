#ifndef MMFW_WAVELETS_HPP
#define MMFW_WAVELETS_HPP

#include "mmfw/linalg.hpp"
#include "mmfw/mmf.hpp"

#include <iosfwd>
#include <string>
#include <vector>

namespace mmfw {

/// Orthonormal wavelet basis stored sparse; columns are wavelets.
/// Fathers occupy the leading columns (ascending core index), mothers the
/// trailing ones (ascending level).
struct WaveletBasis {
  int n = 0;
  int order_k = 0;  // rotation order of the source factorization; 0 = unknown
  SparseCoo basis;  // n x n
  std::vector<int> mother_columns;  // ordered by level 1..L
  std::vector<int> father_columns;  // ordered by core index

  int levels() const { return static_cast<int>(mother_columns.size()); }
};

struct WaveletCoefficients {
  DenseMatrix values;  // n x channels, rows follow basis column order
};

struct SparsityReport {
  std::size_t nnz = 0;
  double density_percent = 0.0;
  std::vector<std::size_t> per_level_nnz;  // mother column nnz, level 1..L
  std::size_t father_nnz = 0;
  std::size_t rotation_bound = 0;  // L*k^2 + (n - L)
};

WaveletBasis extract_basis(const MmfFactorization& f, double drop_tol = 0.0);

// W^T f via sparse multiplication; signal rows = n.
WaveletCoefficients wavelet_forward(const WaveletBasis& w,
                                    const DenseMatrix& signal);
// W c via sparse multiplication; coefficient rows = n.
DenseMatrix wavelet_inverse(const WaveletBasis& w,
                            const WaveletCoefficients& coeffs);

SparsityReport sparsity_report(const WaveletBasis& w);

// "WAVELETS n L" header, mother/father column lists, then the basis in the
// sparse text format.
void write_basis(std::ostream& os, const WaveletBasis& w);
WaveletBasis read_basis(std::istream& is);
WaveletBasis read_basis_file(const std::string& path);

}  // namespace mmfw

#endif  // MMFW_WAVELETS_HPP
