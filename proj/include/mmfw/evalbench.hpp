#ifndef MMFW_EVALBENCH_HPP
#define MMFW_EVALBENCH_HPP

#include "mmfw/graph.hpp"
#include "mmfw/linalg.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace mmfw {

struct MetricReport {
  double mae = 0.0;
  double rmse = 0.0;
  double mape = 0.0;  // percent, over targets with |y| >= 1e-8
  int horizon = 0;
  long long n_samples = 0;
};

// MAE, RMSE and MAPE over equally shaped prediction/truth matrices.
// Targets below 1e-8 in magnitude are excluded from MAPE.
MetricReport metrics(const DenseMatrix& pred, const DenseMatrix& truth);

// Seasonal baseline: the prediction at time t is the mean of the training
// observations sharing the phase t mod period. Returns one row per
// timestep of the requested range.
DenseMatrix historical_average(const ForecastDataset& ds, int period,
                               const SplitRange& range);

struct BenchResult {
  std::string label;
  double median_seconds_per_epoch = 0.0;
  int runs = 0;
  double nnz_density_percent = 0.0;
  std::vector<double> epoch_losses;
};

struct BenchConfig {
  int n = 512;
  int levels = 256;
  int order_k = 2;
  int runs = 5;  // timed epochs per path
  int knn = 4;
  int hidden = 16;
  int history = 6;
  int horizon = 2;
  int samples = 8;   // training windows per epoch
  int batch = 8;
  std::uint64_t seed = 0;
};

using GraphGen = std::function<SymmetricMatrix(int n, std::uint64_t seed)>;

// Trains the same seeded workload through the sparse wavelet path and the
// densified-basis control; reports nnz density and median epoch seconds.
// The two paths run identical arithmetic, so their losses coincide.
std::pair<BenchResult, BenchResult> bench_sparsity_and_speed(
    const BenchConfig& cfg, const GraphGen& graph_gen = {});

// Density (percent of nonzeros at magnitude > 1e-12) of the dense
// eigenbasis of a symmetric matrix; the Fourier-basis control.
double eigenbasis_density_percent(const SymmetricMatrix& a);

// Synthetic diffusion workload X(t) = ar * Atilde X(t-1) + seasonal + noise.
struct DiffusionSeriesConfig {
  int timesteps = 800;
  double ar_coeff = 0.9;
  int season_period = 24;
  double season_amp = 0.5;
  double noise_std = 0.05;
  std::uint64_t seed = 0;
};
DenseMatrix make_diffusion_series(const DenseMatrix& a_tilde,
                                  const DiffusionSeriesConfig& cfg);

}  // namespace mmfw

#endif  // MMFW_EVALBENCH_HPP
