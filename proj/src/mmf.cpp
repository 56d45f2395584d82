#include "mmfw/mmf.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace mmfw {

namespace {

void require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

std::vector<char> bitmap(int n, const std::vector<int>& idx) {
  std::vector<char> b(static_cast<std::size_t>(n), 0);
  for (int i : idx) {
    require(i >= 0 && i < n, "mmf-factor: index out of range");
    b[static_cast<std::size_t>(i)] = 1;
  }
  return b;
}

// Rows of B = U a U^T belonging to the rotation's index set, over all n
// columns. Columns inside the index set carry the re-symmetrized core
// block, matching conjugate_by_rotation exactly.
DenseMatrix rotated_rows(const SymmetricMatrix& a,
                         const std::vector<int>& rot_indices,
                         const DenseMatrix& core) {
  const int n = a.size();
  const int k = static_cast<int>(rot_indices.size());
  DenseMatrix ai(k, n);
  for (int r = 0; r < k; ++r)
    ai.row(r) = a.mat().row(rot_indices[static_cast<std::size_t>(r)]);
  DenseMatrix rows = core * ai;

  DenseMatrix m(k, k);
  for (int r = 0; r < k; ++r)
    for (int c = 0; c < k; ++c)
      m(r, c) = a.mat()(rot_indices[static_cast<std::size_t>(r)],
                        rot_indices[static_cast<std::size_t>(c)]);
  DenseMatrix core_new = core * m * core.transpose();
  for (int r = 0; r < k; ++r)
    for (int c = 0; c < k; ++c) {
      const double v =
          r == c ? core_new(r, r) : 0.5 * (core_new(r, c) + core_new(c, r));
      rows(r, rot_indices[static_cast<std::size_t>(c)]) = v;
    }
  return rows;
}

}  // namespace

DenseMatrix CoreDiagonal::densify() const {
  DenseMatrix h = DenseMatrix::Zero(n, n);
  for (int i = 0; i < n; ++i) h(i, i) = diagonal(i);
  const int c = static_cast<int>(core_indices.size());
  for (int r = 0; r < c; ++r)
    for (int s = 0; s < c; ++s)
      h(core_indices[static_cast<std::size_t>(r)],
        core_indices[static_cast<std::size_t>(s)]) = core_block(r, s);
  return h;
}

std::vector<int> select_indices(const SymmetricMatrix& a_current,
                                const std::vector<int>& active, int k,
                                std::uint64_t /*seed*/) {
  const int na = static_cast<int>(active.size());
  require(k >= 1, "mmf-factor: rotation order must be positive");
  require(na >= k, "mmf-factor: fewer active indices than rotation order");

  DenseMatrix sub(na, na);
  for (int r = 0; r < na; ++r)
    for (int c = 0; c < na; ++c)
      sub(r, c) = a_current(active[static_cast<std::size_t>(r)],
                            active[static_cast<std::size_t>(c)]);
  DenseMatrix gram = sub * sub.transpose();
  Vector norm(na);
  for (int r = 0; r < na; ++r) norm(r) = std::sqrt(std::max(gram(r, r), 0.0));

  auto similarity = [&](int r, int c) {
    if (norm(r) == 0.0 || norm(c) == 0.0) return 0.0;
    return std::abs(gram(r, c)) / (norm(r) * norm(c));
  };

  int best = 0;
  double best_score = -1.0;
  for (int r = 0; r < na; ++r) {
    double s = -1.0;
    for (int c = 0; c < na; ++c)
      if (c != r) s = std::max(s, similarity(r, c));
    if (s > best_score) {
      best_score = s;
      best = r;
    }
  }

  std::vector<int> others;
  others.reserve(static_cast<std::size_t>(na - 1));
  for (int c = 0; c < na; ++c)
    if (c != best) others.push_back(c);
  std::stable_sort(others.begin(), others.end(), [&](int lhs, int rhs) {
    const double sl = similarity(best, lhs);
    const double sr = similarity(best, rhs);
    if (sl != sr) return sl > sr;
    return lhs < rhs;
  });

  std::vector<int> out;
  out.reserve(static_cast<std::size_t>(k));
  out.push_back(active[static_cast<std::size_t>(best)]);
  for (int i = 0; i + 1 < k; ++i)
    out.push_back(active[static_cast<std::size_t>(others[static_cast<std::size_t>(i)])]);
  return out;
}

double residual_norm(const SymmetricMatrix& h_like,
                     const std::vector<int>& core_indices) {
  const int n = h_like.size();
  std::vector<char> in_core = bitmap(n, core_indices);
  double s = 0.0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      if (i == j) continue;
      if (in_core[static_cast<std::size_t>(i)] &&
          in_core[static_cast<std::size_t>(j)])
        continue;
      s += h_like(i, j) * h_like(i, j);
    }
  return std::sqrt(s);
}

DenseMatrix stiefel_gradient(const SymmetricMatrix& a_current,
                             const std::vector<int>& rot_indices,
                             const DenseMatrix& core,
                             const std::vector<int>& core_indices_final) {
  const int n = a_current.size();
  const int k = static_cast<int>(rot_indices.size());
  std::vector<char> in_core = bitmap(n, core_indices_final);

  DenseMatrix rows = rotated_rows(a_current, rot_indices, core);

  // Euclidean gradient of F(O) = |U A U^T|^2_resi is 4 (P B)[I, I] O with
  // P = offcore_mask .* B; only rows/columns of B in the index set are
  // needed, B[:, I] following from symmetry.
  DenseMatrix pb = DenseMatrix::Zero(k, k);
  for (int aq = 0; aq < k; ++aq) {
    const int ia = rot_indices[static_cast<std::size_t>(aq)];
    for (int c = 0; c < n; ++c) {
      if (c == ia) continue;
      if (in_core[static_cast<std::size_t>(ia)] &&
          in_core[static_cast<std::size_t>(c)])
        continue;
      for (int dq = 0; dq < k; ++dq)
        pb(aq, dq) += rows(aq, c) * rows(dq, c);
    }
  }
  DenseMatrix euclid = 4.0 * pb * core;

  DenseMatrix otg = core.transpose() * euclid;
  DenseMatrix sym = 0.5 * (otg + otg.transpose());
  return euclid - core * sym;
}

DenseMatrix stiefel_descent_step(const DenseMatrix& core,
                                 const DenseMatrix& grad, double step) {
  require(step >= 0.0, "mmf-factor: descent step must be nonnegative");
  require(core.rows() == core.cols() && grad.rows() == core.rows() &&
              grad.cols() == core.cols(),
          "mmf-factor: descent step shape mismatch");
  const int k = static_cast<int>(core.rows());
  DenseMatrix skew =
      -0.5 * step * (grad * core.transpose() - core * grad.transpose());
  if (skew.cwiseAbs().maxCoeff() == 0.0) return core;
  DenseMatrix eye = DenseMatrix::Identity(k, k);
  return (eye - 0.5 * skew).partialPivLu().solve((eye + 0.5 * skew) * core);
}

namespace {

// Initial core: eigenbasis of the k x k block, det-corrected into SO(k).
// The identity is a stationary point of the objective for matrices like
// [[a,b],[b,a]], so descent must start elsewhere.
DenseMatrix initial_core(const SymmetricMatrix& a,
                         const std::vector<int>& rot_indices) {
  const int k = static_cast<int>(rot_indices.size());
  DenseMatrix m(k, k);
  for (int r = 0; r < k; ++r)
    for (int c = 0; c < k; ++c)
      m(r, c) = a.mat()(rot_indices[static_cast<std::size_t>(r)],
                        rot_indices[static_cast<std::size_t>(c)]);
  Eigen::SelfAdjointEigenSolver<DenseMatrix> es(m);
  DenseMatrix o = es.eigenvectors().transpose();
  if (o.determinant() < 0.0) o.row(k - 1) = -o.row(k - 1);
  return o;
}

double offdiag_row_energy(const DenseMatrix& rows, int r, int self,
                          const std::vector<char>& in_active) {
  double e = 0.0;
  for (int c = 0; c < rows.cols(); ++c) {
    if (c == self || !in_active[static_cast<std::size_t>(c)]) continue;
    e += rows(r, c) * rows(r, c);
  }
  return e;
}

// Per-level objective: twice the off-diagonal energy of the designated
// wavelet row over active columns. Equals the full squared residual norm
// with respect to active \ {wavelet} minus an O-independent constant.
double level_objective(const DenseMatrix& rows, int wavelet_pos, int wavelet,
                       const std::vector<char>& in_active) {
  return 2.0 * offdiag_row_energy(rows, wavelet_pos, wavelet, in_active);
}

DenseMatrix polish_orthogonality(DenseMatrix o) {
  const int k = static_cast<int>(o.rows());
  for (int pass = 0; pass < 3; ++pass) {
    DenseMatrix g = o.transpose() * o - DenseMatrix::Identity(k, k);
    if (g.cwiseAbs().maxCoeff() <= 1e-13) break;
    o = o * (DenseMatrix::Identity(k, k) - 0.5 * g);
  }
  return o;
}

}  // namespace

MmfFactorization factorize(const SymmetricMatrix& a,
                           const FactorizeConfig& cfg,
                           FactorizeTrace* trace) {
  const int n = a.size();
  MmfFactorization f;
  f.n = n;
  f.order_k = cfg.order;

  std::vector<int> active(static_cast<std::size_t>(n));
  std::iota(active.begin(), active.end(), 0);
  f.index_sets.sets.push_back(active);

  const int levels = n == 1 ? 0 : cfg.levels;
  if (levels > 0) {
    require(cfg.order >= 2, "mmf-factor: rotation order must be at least 2");
    require(cfg.order <= n, "mmf-factor: rotation order exceeds dimension");
    require(levels <= n - 1, "mmf-factor: more levels than retirable indices");
    require(levels + cfg.order - 1 <= n,
            "mmf-factor: not enough active indices for the last level");
    require(cfg.descent_iters >= 0, "mmf-factor: negative descent iterations");
    require(cfg.step_size > 0.0, "mmf-factor: step size must be positive");
    require(cfg.step_shrink > 0.0 && cfg.step_shrink < 1.0,
            "mmf-factor: step shrink must lie in (0, 1)");
  }

  SymmetricMatrix current = a;
  constexpr int kMaxBacktracks = 40;

  for (int level = 1; level <= levels; ++level) {
    std::vector<int> rot_idx =
        select_indices(current, active, cfg.order, cfg.seed);
    const int k = cfg.order;
    std::vector<char> in_active = bitmap(n, active);

    DenseMatrix o = initial_core(current, rot_idx);

    // Designate the wavelet row: minimal off-diagonal energy over active
    // columns after the initial rotation, ties to the lowest index.
    DenseMatrix rows = rotated_rows(current, rot_idx, o);
    int wpos = 0;
    double wbest = offdiag_row_energy(rows, 0, rot_idx[0], in_active);
    for (int r = 1; r < k; ++r) {
      const double e = offdiag_row_energy(
          rows, r, rot_idx[static_cast<std::size_t>(r)], in_active);
      if (e < wbest ||
          (e == wbest && rot_idx[static_cast<std::size_t>(r)] <
                             rot_idx[static_cast<std::size_t>(wpos)])) {
        wbest = e;
        wpos = r;
      }
    }
    const int wavelet = rot_idx[static_cast<std::size_t>(wpos)];

    std::vector<int> core_final;
    core_final.reserve(active.size() - 1);
    for (int i : active)
      if (i != wavelet) core_final.push_back(i);

    double objective = level_objective(rows, wpos, wavelet, in_active);
    std::vector<double> level_trace;
    level_trace.push_back(objective);

    for (int it = 0; it < cfg.descent_iters; ++it) {
      DenseMatrix grad = stiefel_gradient(current, rot_idx, o, core_final);
      if (grad.cwiseAbs().maxCoeff() < 1e-15) break;
      double step = cfg.step_size;
      bool accepted = false;
      for (int bt = 0; bt < kMaxBacktracks; ++bt) {
        DenseMatrix cand = stiefel_descent_step(o, grad, step);
        DenseMatrix cand_rows = rotated_rows(current, rot_idx, cand);
        const double cand_obj =
            level_objective(cand_rows, wpos, wavelet, in_active);
        if (cand_obj < objective) {
          o = std::move(cand);
          objective = cand_obj;
          accepted = true;
          break;
        }
        step *= cfg.step_shrink;
      }
      if (!accepted) break;
      level_trace.push_back(objective);
    }
    if (trace) trace->objectives.push_back(std::move(level_trace));

    o = polish_orthogonality(std::move(o));

    GivensRotation rot{level, rot_idx, o};
    current = conjugate_by_rotation(current, rot);

    // Retire the row with minimal post-rotation off-diagonal energy within
    // the active set (usually the designated one).
    int retire = rot_idx[0];
    double retire_energy = -1.0;
    for (int r = 0; r < k; ++r) {
      const int idx = rot_idx[static_cast<std::size_t>(r)];
      double e = 0.0;
      for (int j : active)
        if (j != idx) e += current(idx, j) * current(idx, j);
      if (retire_energy < 0.0 || e < retire_energy ||
          (e == retire_energy && idx < retire)) {
        retire_energy = e;
        retire = idx;
      }
    }

    f.rotations.push_back(std::move(rot));
    f.retired.push_back(retire);
    active.erase(std::find(active.begin(), active.end(), retire));
    f.index_sets.sets.push_back(active);
  }

  f.h.n = n;
  f.h.core_indices = active;
  const int c = static_cast<int>(active.size());
  f.h.core_block.resize(c, c);
  for (int r = 0; r < c; ++r)
    for (int s = 0; s < c; ++s)
      f.h.core_block(r, s) = current(active[static_cast<std::size_t>(r)],
                                     active[static_cast<std::size_t>(s)]);
  f.h.diagonal = Vector::Zero(n);
  std::vector<char> in_core = bitmap(n, active);
  for (int i = 0; i < n; ++i)
    if (!in_core[static_cast<std::size_t>(i)]) f.h.diagonal(i) = current(i, i);
  f.residual = residual_norm(current, active);
  return f;
}

SymmetricMatrix reconstruct(const MmfFactorization& f) {
  SymmetricMatrix cur = SymmetricMatrix::exact(f.h.densify());
  for (int l = f.levels() - 1; l >= 0; --l) {
    const GivensRotation& rot = f.rotations[static_cast<std::size_t>(l)];
    GivensRotation inv{rot.level, rot.index_set,
                       rot.core.transpose().eval()};
    cur = conjugate_by_rotation(cur, inv);
  }
  return cur;
}

void write_factorization(std::ostream& os, const MmfFactorization& f) {
  os << "MMF " << f.n << ' ' << f.order_k << ' ' << f.levels() << '\n';
  for (int l = 0; l < f.levels(); ++l) {
    const GivensRotation& rot = f.rotations[static_cast<std::size_t>(l)];
    os << "LEVEL " << rot.level << ' '
       << f.retired[static_cast<std::size_t>(l)] << '\n';
    for (std::size_t i = 0; i < rot.index_set.size(); ++i)
      os << rot.index_set[i] << (i + 1 < rot.index_set.size() ? ' ' : '\n');
    for (Eigen::Index r = 0; r < rot.core.rows(); ++r)
      for (Eigen::Index c = 0; c < rot.core.cols(); ++c)
        os << format_double(rot.core(r, c))
           << (c + 1 < rot.core.cols() ? ' ' : '\n');
  }
  write_matrix_text(os, coo_from_dense(f.h.densify(), 0.0));
}

MmfFactorization read_factorization(std::istream& is) {
  auto fail = [](const std::string& msg) -> void {
    throw std::runtime_error("mmf-factor: " + msg);
  };

  std::string tag;
  MmfFactorization f;
  int levels = 0;
  if (!(is >> tag >> f.n >> f.order_k >> levels) || tag != "MMF")
    fail("malformed factorization header");
  if (f.n < 1 || levels < 0 || (levels > 0 && f.order_k < 2))
    fail("invalid factorization header values");

  std::vector<int> active(static_cast<std::size_t>(f.n));
  std::iota(active.begin(), active.end(), 0);
  f.index_sets.sets.push_back(active);

  for (int l = 1; l <= levels; ++l) {
    int level = 0;
    int retired = 0;
    if (!(is >> tag >> level >> retired) || tag != "LEVEL" || level != l)
      fail("malformed LEVEL record");
    GivensRotation rot;
    rot.level = level;
    rot.index_set.resize(static_cast<std::size_t>(f.order_k));
    for (int& idx : rot.index_set)
      if (!(is >> idx)) fail("truncated rotation index set");
    rot.core.resize(f.order_k, f.order_k);
    for (Eigen::Index r = 0; r < rot.core.rows(); ++r)
      for (Eigen::Index c = 0; c < rot.core.cols(); ++c)
        if (!(is >> rot.core(r, c))) fail("truncated rotation core");

    std::vector<char> in_active(static_cast<std::size_t>(f.n), 0);
    for (int i : active) in_active[static_cast<std::size_t>(i)] = 1;
    for (int idx : rot.index_set) {
      if (idx < 0 || idx >= f.n || !in_active[static_cast<std::size_t>(idx)])
        fail("rotation index outside the active set");
    }
    if (std::find(rot.index_set.begin(), rot.index_set.end(), retired) ==
        rot.index_set.end())
      fail("retired index not in the rotation index set");
    if (rot.orthogonality_error() > 1e-10)
      fail("rotation core is not orthogonal");
    if (std::abs(rot.core.determinant() - 1.0) > 1e-8)
      fail("rotation core determinant is not +1");

    f.rotations.push_back(std::move(rot));
    f.retired.push_back(retired);
    active.erase(std::find(active.begin(), active.end(), retired));
    f.index_sets.sets.push_back(active);
  }

  // Swallow the rest of the current line before the matrix section.
  std::string rest;
  std::getline(is, rest);
  SparseCoo h = read_sparse_text(is);
  if (h.rows() != f.n || h.cols() != f.n) fail("H dimension mismatch");

  std::vector<char> in_core(static_cast<std::size_t>(f.n), 0);
  for (int i : active) in_core[static_cast<std::size_t>(i)] = 1;
  f.h.n = f.n;
  f.h.core_indices = active;
  const int c = static_cast<int>(active.size());
  f.h.core_block = DenseMatrix::Zero(c, c);
  f.h.diagonal = Vector::Zero(f.n);
  std::vector<int> core_pos(static_cast<std::size_t>(f.n), -1);
  for (int i = 0; i < c; ++i)
    core_pos[static_cast<std::size_t>(active[static_cast<std::size_t>(i)])] = i;
  for (const CooEntry& e : h.entries()) {
    const bool core_pair = in_core[static_cast<std::size_t>(e.row)] &&
                           in_core[static_cast<std::size_t>(e.col)];
    if (core_pair) {
      f.h.core_block(core_pos[static_cast<std::size_t>(e.row)],
                     core_pos[static_cast<std::size_t>(e.col)]) = e.value;
    } else if (e.row == e.col) {
      f.h.diagonal(e.row) = e.value;
    } else {
      fail("H entry outside the core-diagonal pattern");
    }
  }
  f.residual = 0.0;
  return f;
}

MmfFactorization read_factorization_file(const std::string& path) {
  std::ifstream fs(path);
  if (!fs) throw std::runtime_error("cannot open file: " + path);
  return read_factorization(fs);
}

}  // namespace mmfw
