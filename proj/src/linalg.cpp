#include "mmfw/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace mmfw {

namespace {

void require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

}  // namespace

SparseCoo::SparseCoo(int rows, int cols, std::vector<CooEntry> entries)
    : rows_(rows), cols_(cols), entries_(std::move(entries)) {
  require(rows_ >= 0 && cols_ >= 0, "sparse-core: negative dimensions");
  for (const CooEntry& e : entries_) {
    require(e.row >= 0 && e.row < rows_ && e.col >= 0 && e.col < cols_,
            "sparse-core: entry index out of range");
    require(std::isfinite(e.value), "sparse-core: non-finite entry");
  }
  std::sort(entries_.begin(), entries_.end(),
            [](const CooEntry& a, const CooEntry& b) {
              return a.row != b.row ? a.row < b.row : a.col < b.col;
            });
  for (std::size_t i = 1; i < entries_.size(); ++i) {
    require(entries_[i - 1].row != entries_[i].row ||
                entries_[i - 1].col != entries_[i].col,
            "sparse-core: duplicate (row, col) entry");
  }
  std::erase_if(entries_, [](const CooEntry& e) { return e.value == 0.0; });
}

DenseMatrix SparseCoo::densify() const {
  DenseMatrix m = DenseMatrix::Zero(rows_, cols_);
  for (const CooEntry& e : entries_) m(e.row, e.col) = e.value;
  return m;
}

SparseCoo SparseCoo::identity(int n) {
  std::vector<CooEntry> es;
  es.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) es.push_back({i, i, 1.0});
  return SparseCoo(n, n, std::move(es));
}

SymmetricMatrix SymmetricMatrix::exact(const DenseMatrix& m) {
  require(m.rows() == m.cols(), "sparse-core: symmetric matrix must be square");
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = i + 1; j < m.cols(); ++j)
      require(m(i, j) == m(j, i), "sparse-core: matrix is not symmetric");
  return SymmetricMatrix(m);
}

SymmetricMatrix SymmetricMatrix::symmetrized(const DenseMatrix& m) {
  require(m.rows() == m.cols(), "sparse-core: symmetric matrix must be square");
  DenseMatrix s(m.rows(), m.cols());
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    s(i, i) = m(i, i);
    for (Eigen::Index j = i + 1; j < m.cols(); ++j) {
      const double v = 0.5 * (m(i, j) + m(j, i));
      s(i, j) = v;
      s(j, i) = v;
    }
  }
  return SymmetricMatrix(std::move(s));
}

double GivensRotation::orthogonality_error() const {
  const int k = order();
  DenseMatrix g = core.transpose() * core - DenseMatrix::Identity(k, k);
  return g.cwiseAbs().maxCoeff();
}

SparseCoo coo_from_dense(const DenseMatrix& m, double drop_tol) {
  require(drop_tol >= 0.0, "sparse-core: drop_tol must be nonnegative");
  std::vector<CooEntry> es;
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      if (std::abs(m(i, j)) > drop_tol)
        es.push_back({static_cast<int>(i), static_cast<int>(j), m(i, j)});
  return SparseCoo(static_cast<int>(m.rows()), static_cast<int>(m.cols()),
                   std::move(es));
}

DenseMatrix spmm(const SparseCoo& a, const DenseMatrix& b) {
  require(a.cols() == b.rows(), "sparse-core: spmm dimension mismatch");
  DenseMatrix out = DenseMatrix::Zero(a.rows(), b.cols());
  for (const CooEntry& e : a.entries())
    out.row(e.row) += e.value * b.row(e.col);
  return out;
}

DenseMatrix transpose_spmm(const SparseCoo& a, const DenseMatrix& b) {
  require(a.rows() == b.rows(),
          "sparse-core: transpose_spmm dimension mismatch");
  DenseMatrix out = DenseMatrix::Zero(a.cols(), b.cols());
  for (const CooEntry& e : a.entries())
    out.row(e.col) += e.value * b.row(e.row);
  return out;
}

double frobenius_norm(const DenseMatrix& m) {
  double s = 0.0;
  for (Eigen::Index j = 0; j < m.cols(); ++j)
    for (Eigen::Index i = 0; i < m.rows(); ++i) s += m(i, j) * m(i, j);
  return std::sqrt(s);
}

SymmetricMatrix conjugate_by_rotation(const SymmetricMatrix& a,
                                      const GivensRotation& rot) {
  const int n = a.size();
  const int k = rot.order();
  require(k >= 1 && rot.core.rows() == k && rot.core.cols() == k,
          "sparse-core: rotation core shape mismatch");
  std::vector<char> in_set(static_cast<std::size_t>(n), 0);
  for (int idx : rot.index_set) {
    require(idx >= 0 && idx < n, "sparse-core: rotation index out of range");
    require(!in_set[static_cast<std::size_t>(idx)],
            "sparse-core: repeated rotation index");
    in_set[static_cast<std::size_t>(idx)] = 1;
  }

  DenseMatrix out = a.mat();
  const DenseMatrix& o = rot.core;

  // Complement columns: new cross block X = O * A[I, Jc]; assign X and X^T
  // so both triangles stay bitwise equal.
  std::vector<int> comp;
  comp.reserve(static_cast<std::size_t>(n - k));
  for (int j = 0; j < n; ++j)
    if (!in_set[static_cast<std::size_t>(j)]) comp.push_back(j);

  DenseMatrix cross(k, static_cast<Eigen::Index>(comp.size()));
  for (int aq = 0; aq < k; ++aq)
    for (std::size_t c = 0; c < comp.size(); ++c)
      cross(aq, static_cast<Eigen::Index>(c)) =
          a.mat()(rot.index_set[static_cast<std::size_t>(aq)], comp[c]);
  DenseMatrix new_cross = o * cross;
  for (int aq = 0; aq < k; ++aq)
    for (std::size_t c = 0; c < comp.size(); ++c) {
      const double v = new_cross(aq, static_cast<Eigen::Index>(c));
      out(rot.index_set[static_cast<std::size_t>(aq)], comp[c]) = v;
      out(comp[c], rot.index_set[static_cast<std::size_t>(aq)]) = v;
    }

  // Core block: O * A[I, I] * O^T, re-symmetrized to kill roundoff skew.
  DenseMatrix m(k, k);
  for (int aq = 0; aq < k; ++aq)
    for (int bq = 0; bq < k; ++bq)
      m(aq, bq) = a.mat()(rot.index_set[static_cast<std::size_t>(aq)],
                          rot.index_set[static_cast<std::size_t>(bq)]);
  DenseMatrix core_new = o * m * o.transpose();
  for (int aq = 0; aq < k; ++aq) {
    out(rot.index_set[static_cast<std::size_t>(aq)],
        rot.index_set[static_cast<std::size_t>(aq)]) = core_new(aq, aq);
    for (int bq = aq + 1; bq < k; ++bq) {
      const double v = 0.5 * (core_new(aq, bq) + core_new(bq, aq));
      out(rot.index_set[static_cast<std::size_t>(aq)],
          rot.index_set[static_cast<std::size_t>(bq)]) = v;
      out(rot.index_set[static_cast<std::size_t>(bq)],
          rot.index_set[static_cast<std::size_t>(aq)]) = v;
    }
  }
  return SymmetricMatrix::exact(out);
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

namespace {

struct TextHeader {
  int rows = 0;
  int cols = 0;
  long long nnz = 0;
};

bool next_content_line(std::istream& is, std::string& line) {
  while (std::getline(is, line)) {
    std::size_t p = line.find_first_not_of(" \t\r");
    if (p == std::string::npos) continue;
    if (line[p] == '#') continue;
    return true;
  }
  return false;
}

TextHeader read_header(std::istream& is) {
  std::string line;
  require(next_content_line(is, line), "sparse-core: missing matrix header");
  std::istringstream ls(line);
  TextHeader h;
  require(static_cast<bool>(ls >> h.rows >> h.cols >> h.nnz),
          "sparse-core: malformed matrix header");
  require(h.rows >= 0 && h.cols >= 0 && h.nnz >= 0,
          "sparse-core: negative value in matrix header");
  return h;
}

std::vector<CooEntry> read_entries(std::istream& is, long long nnz) {
  std::vector<CooEntry> es;
  es.reserve(static_cast<std::size_t>(nnz));
  std::string line;
  for (long long t = 0; t < nnz; ++t) {
    require(next_content_line(is, line), "sparse-core: truncated matrix file");
    std::istringstream ls(line);
    CooEntry e;
    require(static_cast<bool>(ls >> e.row >> e.col >> e.value),
            "sparse-core: malformed matrix entry");
    require(std::isfinite(e.value), "sparse-core: non-finite matrix entry");
    es.push_back(e);
  }
  return es;
}

}  // namespace

void write_matrix_text(std::ostream& os, const SparseCoo& m) {
  os << m.rows() << ' ' << m.cols() << ' ' << m.nnz() << '\n';
  for (const CooEntry& e : m.entries())
    os << e.row << ' ' << e.col << ' ' << format_double(e.value) << '\n';
}

void write_matrix_text(std::ostream& os, const DenseMatrix& m) {
  os << m.rows() << ' ' << m.cols() << ' ' << m.rows() * m.cols() << '\n';
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      os << i << ' ' << j << ' ' << format_double(m(i, j)) << '\n';
}

SparseCoo read_sparse_text(std::istream& is) {
  TextHeader h = read_header(is);
  // The SparseCoo constructor rejects duplicates and out-of-range indices.
  return SparseCoo(h.rows, h.cols, read_entries(is, h.nnz));
}

DenseMatrix read_dense_text(std::istream& is) {
  return read_sparse_text(is).densify();
}

namespace {

std::ifstream open_input(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open file: " + path);
  return f;
}

}  // namespace

SparseCoo read_sparse_file(const std::string& path) {
  std::ifstream f = open_input(path);
  return read_sparse_text(f);
}

DenseMatrix read_dense_file(const std::string& path) {
  std::ifstream f = open_input(path);
  return read_dense_text(f);
}

}  // namespace mmfw
