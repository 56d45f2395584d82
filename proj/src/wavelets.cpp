#include "mmfw/wavelets.hpp"

#include <fstream>
#include <istream>
#include <ostream>
#include <stdexcept>

namespace mmfw {

WaveletBasis extract_basis(const MmfFactorization& f, double drop_tol) {
  const int n = f.n;
  const int levels = f.levels();

  // Cumulative product Q = U_L ... U_1, built by in-place row mixes. The
  // row retired at level l never changes afterwards, so one pass suffices
  // for both mothers and fathers.
  DenseMatrix q = DenseMatrix::Identity(n, n);
  for (const GivensRotation& rot : f.rotations) {
    const int k = rot.order();
    DenseMatrix block(k, n);
    for (int r = 0; r < k; ++r)
      block.row(r) = q.row(rot.index_set[static_cast<std::size_t>(r)]);
    DenseMatrix mixed = rot.core * block;
    for (int r = 0; r < k; ++r)
      q.row(rot.index_set[static_cast<std::size_t>(r)]) = mixed.row(r);
  }

  const std::vector<int>& core = f.index_sets.sets.back();
  const int fathers = static_cast<int>(core.size());

  DenseMatrix w(n, n);
  WaveletBasis basis;
  basis.n = n;
  basis.order_k = f.order_k;
  for (int c = 0; c < fathers; ++c) {
    w.col(c) = q.row(core[static_cast<std::size_t>(c)]).transpose();
    basis.father_columns.push_back(c);
  }
  for (int l = 0; l < levels; ++l) {
    const int c = fathers + l;
    w.col(c) = q.row(f.retired[static_cast<std::size_t>(l)]).transpose();
    basis.mother_columns.push_back(c);
  }
  basis.basis = coo_from_dense(w, drop_tol);
  return basis;
}

WaveletCoefficients wavelet_forward(const WaveletBasis& w,
                                    const DenseMatrix& signal) {
  return {transpose_spmm(w.basis, signal)};
}

DenseMatrix wavelet_inverse(const WaveletBasis& w,
                            const WaveletCoefficients& coeffs) {
  return spmm(w.basis, coeffs.values);
}

SparsityReport sparsity_report(const WaveletBasis& w) {
  SparsityReport rep;
  rep.nnz = w.basis.nnz();
  const double total = static_cast<double>(w.n) * static_cast<double>(w.n);
  rep.density_percent = total > 0.0 ? 100.0 * static_cast<double>(rep.nnz) / total : 0.0;

  std::vector<std::size_t> col_nnz(static_cast<std::size_t>(w.n), 0);
  for (const CooEntry& e : w.basis.entries())
    ++col_nnz[static_cast<std::size_t>(e.col)];
  for (int c : w.mother_columns)
    rep.per_level_nnz.push_back(col_nnz[static_cast<std::size_t>(c)]);
  for (int c : w.father_columns)
    rep.father_nnz += col_nnz[static_cast<std::size_t>(c)];

  const std::size_t l = w.mother_columns.size();
  // The basis file format does not carry the rotation order; fall back to
  // the level-1 mother support, which is at most k entries wide.
  std::size_t k = static_cast<std::size_t>(w.order_k);
  if (k == 0 && !rep.per_level_nnz.empty()) k = rep.per_level_nnz.front();
  rep.rotation_bound = l * k * k + (static_cast<std::size_t>(w.n) - l);
  return rep;
}

void write_basis(std::ostream& os, const WaveletBasis& w) {
  os << "WAVELETS " << w.n << ' ' << w.mother_columns.size() << '\n';
  os << "MOTHERS";
  for (int c : w.mother_columns) os << ' ' << c;
  os << '\n';
  os << "FATHERS";
  for (int c : w.father_columns) os << ' ' << c;
  os << '\n';
  write_matrix_text(os, w.basis);
}

WaveletBasis read_basis(std::istream& is) {
  auto fail = [](const std::string& msg) -> void {
    throw std::runtime_error("wavelet-basis: " + msg);
  };
  std::string tag;
  WaveletBasis w;
  int levels = 0;
  if (!(is >> tag >> w.n >> levels) || tag != "WAVELETS")
    fail("malformed basis header");
  if (w.n < 1 || levels < 0 || levels > w.n) fail("invalid basis header");

  if (!(is >> tag) || tag != "MOTHERS") fail("missing MOTHERS record");
  w.mother_columns.resize(static_cast<std::size_t>(levels));
  for (int& c : w.mother_columns)
    if (!(is >> c)) fail("truncated MOTHERS record");
  if (!(is >> tag) || tag != "FATHERS") fail("missing FATHERS record");
  w.father_columns.resize(static_cast<std::size_t>(w.n - levels));
  for (int& c : w.father_columns)
    if (!(is >> c)) fail("truncated FATHERS record");

  std::vector<char> seen(static_cast<std::size_t>(w.n), 0);
  for (int c : w.mother_columns) {
    if (c < 0 || c >= w.n || seen[static_cast<std::size_t>(c)])
      fail("mother/father columns do not partition the basis");
    seen[static_cast<std::size_t>(c)] = 1;
  }
  for (int c : w.father_columns) {
    if (c < 0 || c >= w.n || seen[static_cast<std::size_t>(c)])
      fail("mother/father columns do not partition the basis");
    seen[static_cast<std::size_t>(c)] = 1;
  }

  std::string rest;
  std::getline(is, rest);
  w.basis = read_sparse_text(is);
  if (w.basis.rows() != w.n || w.basis.cols() != w.n)
    fail("basis dimension mismatch");
  return w;
}

WaveletBasis read_basis_file(const std::string& path) {
  std::ifstream fs(path);
  if (!fs) throw std::runtime_error("cannot open file: " + path);
  return read_basis(fs);
}

}  // namespace mmfw
