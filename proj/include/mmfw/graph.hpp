#ifndef MMFW_GRAPH_HPP
#define MMFW_GRAPH_HPP

#include "mmfw/linalg.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace mmfw {

/// Directed pairwise distances; unreachable pairs are +infinity.
struct DistanceTable {
  DenseMatrix dist;  // n x n, nonnegative, zero diagonal

  int size() const { return static_cast<int>(dist.rows()); }
};

enum class AdjacencyKind { gaussian, lle, custom };

struct AdjacencyMatrix {
  DenseMatrix values;
  AdjacencyKind kind = AdjacencyKind::custom;

  int size() const { return static_cast<int>(values.rows()); }
};

struct SplitRange {
  int begin = 0;
  int end = 0;  // exclusive

  int length() const { return end - begin; }
};

/// Node time series with chronological splits and per-node z-score
/// statistics fitted on the training range. `series` holds the normalized
/// values.
struct ForecastDataset {
  DenseMatrix series;  // T x N, normalized
  int history_len = 0;
  int horizon = 0;
  SplitRange train, validation, test;
  Vector mean;  // per node, from the train range
  Vector stdev; // per node, from the train range
  std::vector<std::string> node_ids;

  int timesteps() const { return static_cast<int>(series.rows()); }
  int nodes() const { return static_cast<int>(series.cols()); }
  DenseMatrix denormalize(const DenseMatrix& rows_by_nodes) const;
};

// Shipped defaults for the adjacency builders.
inline constexpr double kDefaultDistanceThreshold = 0.01;
inline constexpr double kDefaultLambdaA = 1e-5;

struct LleConfig {
  double lambda_a = kDefaultLambdaA;
  int max_iters = 500;
  double tol = 1e-10;
  double penalty_rho = 1.0;  // reserved; the proximal solver does not use it
};

/// Per-iteration solver diagnostics for lle_adjacency.
struct LleTrace {
  std::vector<double> objectives;
  std::vector<double> constraint_violations;
};

// Thresholded Gaussian kernel A_ij = exp(-dist/sigma^2) with sigma the
// standard deviation of the finite off-diagonal distances; entries beyond
// threshold_k are zero.
AdjacencyMatrix gaussian_adjacency(const DistanceTable& d, double threshold_k);

SymmetricMatrix symmetrize(const AdjacencyMatrix& a);

// Right-stochastic rescaling; all-zero rows become self loops.
DenseMatrix row_normalize(const AdjacencyMatrix& a);

// Sparse affine-dependency adjacency: minimizes |X - X A^T|_F^2 + l1 where
// row i holds the affine weights reconstructing node i (rows sum to one,
// zero diagonal). Proximal gradient with exact per-row projection.
AdjacencyMatrix lle_adjacency(const DenseMatrix& x, const LleConfig& cfg,
                              LleTrace* trace = nullptr);

struct RawSeries {
  DenseMatrix values;  // T x N
  std::vector<std::string> node_ids;
};

// CSV reader: header row of node ids (optional leading time column),
// one row per timestep. No normalization.
RawSeries read_series_csv(const std::string& path);

// read_series_csv plus chronological splits at floor(T * ratio) boundaries
// and per-node z-scoring fitted on the training range.
ForecastDataset load_series(const std::string& path, int history_len,
                            int horizon, double train_ratio = 0.7,
                            double val_ratio = 0.2);
ForecastDataset dataset_from_series(DenseMatrix raw, int history_len,
                                    int horizon, double train_ratio = 0.7,
                                    double val_ratio = 0.2);

void write_series_csv(const std::string& path, const DenseMatrix& raw,
                      const std::vector<std::string>& node_ids = {});

// Symmetric k-nearest-neighbour graph over seeded random planar points,
// Gaussian edge weights.
AdjacencyMatrix knn_graph(int n, int neighbours, std::uint64_t seed);

// Unnormalized graph Laplacian D - A of a symmetric adjacency.
SymmetricMatrix graph_laplacian(const SymmetricMatrix& adj);

}  // namespace mmfw

#endif  // MMFW_GRAPH_HPP
