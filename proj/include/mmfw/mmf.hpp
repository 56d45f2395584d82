#ifndef MMFW_MMF_HPP
#define MMFW_MMF_HPP

#include "mmfw/linalg.hpp"

#include <cstdint>
#include <iosfwd>
#include <vector>

namespace mmfw {

/// Nested coordinate sets S_0 (all of [n]) down to S_L, one index retired
/// per level.
struct NestedIndexSets {
  std::vector<std::vector<int>> sets;  // sets[l] = S_l, sorted ascending

  int levels() const { return static_cast<int>(sets.size()) - 1; }
  int dim(int level) const { return static_cast<int>(sets[level].size()); }
};

/// Core-diagonal residual matrix: dense block on the core index set,
/// diagonal entries elsewhere, zero everywhere else.
struct CoreDiagonal {
  int n = 0;
  std::vector<int> core_indices;  // sorted ascending
  DenseMatrix core_block;         // |core| x |core|, symmetric
  Vector diagonal;                // length n; used for indices outside core

  DenseMatrix densify() const;
};

struct MmfFactorization {
  int n = 0;
  int order_k = 0;
  std::vector<GivensRotation> rotations;  // level 1..L in order
  std::vector<int> retired;               // wavelet index retired per level
  NestedIndexSets index_sets;
  CoreDiagonal h;
  double residual = 0.0;

  int levels() const { return static_cast<int>(rotations.size()); }
};

enum class Similarity { cosine };

struct FactorizeConfig {
  int levels = 0;           // L
  int order = 2;            // k, rotation order
  int descent_iters = 50;   // steepest-descent steps per level
  double step_size = 1.0;   // initial backtracking step
  double step_shrink = 0.5; // backtracking shrink factor, in (0,1)
  std::uint64_t seed = 0;
  Similarity similarity = Similarity::cosine;
};

/// Per-level record of accepted descent-step objective values, oldest first.
struct FactorizeTrace {
  std::vector<std::vector<double>> objectives;
};

// Index-selection heuristic: the first returned index attains the largest
// absolute cosine similarity to another active row of a_current (rows
// restricted to active columns); the rest are the k-1 rows most similar to
// it. Ties break toward the lowest index.
std::vector<int> select_indices(const SymmetricMatrix& a_current,
                                const std::vector<int>& active, int k,
                                std::uint64_t seed);

// sqrt of the sum of |H_ij|^2 over i != j with (i, j) outside
// core x core.
double residual_norm(const SymmetricMatrix& h_like,
                     const std::vector<int>& core_indices);

// Riemannian gradient (tangent at `core`) of the squared residual norm of
// the conjugated matrix with respect to `core_indices_final`:
// Euclidean gradient projected as G - O sym(O^T G).
DenseMatrix stiefel_gradient(const SymmetricMatrix& a_current,
                             const std::vector<int>& rot_indices,
                             const DenseMatrix& core,
                             const std::vector<int>& core_indices_final);

// Cayley retraction of the descent direction -step * grad; stays in SO(k).
DenseMatrix stiefel_descent_step(const DenseMatrix& core,
                                 const DenseMatrix& grad, double step);

MmfFactorization factorize(const SymmetricMatrix& a,
                           const FactorizeConfig& cfg,
                           FactorizeTrace* trace = nullptr);

// U_1^T ... U_L^T H U_L ... U_1 densified.
SymmetricMatrix reconstruct(const MmfFactorization& f);

// Plain-text serialization; grammar documented in the README.
void write_factorization(std::ostream& os, const MmfFactorization& f);
MmfFactorization read_factorization(std::istream& is);
MmfFactorization read_factorization_file(const std::string& path);

}  // namespace mmfw

#endif  // MMFW_MMF_HPP
