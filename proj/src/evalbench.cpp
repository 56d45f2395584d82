#include "mmfw/evalbench.hpp"

#include "mmfw/mmf.hpp"
#include "mmfw/model.hpp"
#include "mmfw/rng.hpp"
#include "mmfw/wavelets.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <stdexcept>

namespace mmfw {

namespace {

void require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

}  // namespace

MetricReport metrics(const DenseMatrix& pred, const DenseMatrix& truth) {
  require(pred.rows() == truth.rows() && pred.cols() == truth.cols(),
          "eval-bench: metrics shape mismatch");
  require(pred.size() > 0, "eval-bench: metrics over empty matrices");

  double abs_sum = 0.0, sq_sum = 0.0, ape_sum = 0.0;
  long long ape_count = 0;
  for (Eigen::Index c = 0; c < pred.cols(); ++c)
    for (Eigen::Index r = 0; r < pred.rows(); ++r) {
      const double d = pred(r, c) - truth(r, c);
      abs_sum += std::abs(d);
      sq_sum += d * d;
      if (std::abs(truth(r, c)) >= 1e-8) {
        ape_sum += std::abs(d) / std::abs(truth(r, c));
        ++ape_count;
      }
    }
  if (ape_count == 0)
    throw std::invalid_argument(
        "eval-bench: all targets below the MAPE threshold");

  const double count = static_cast<double>(pred.size());
  MetricReport rep;
  rep.mae = abs_sum / count;
  rep.rmse = std::sqrt(sq_sum / count);
  rep.mape = 100.0 * ape_sum / static_cast<double>(ape_count);
  rep.n_samples = static_cast<long long>(pred.rows());
  if (rep.rmse + 1e-12 * (1.0 + rep.mae) < rep.mae)
    throw std::logic_error("eval-bench: RMSE fell below MAE");
  return rep;
}

DenseMatrix historical_average(const ForecastDataset& ds, int period,
                               const SplitRange& range) {
  require(period >= 1, "eval-bench: period must be positive");
  require(ds.train.length() >= period,
          "eval-bench: period longer than the training span");
  const int n = ds.nodes();

  DenseMatrix phase_sum = DenseMatrix::Zero(period, n);
  std::vector<long long> phase_count(static_cast<std::size_t>(period), 0);
  for (int t = ds.train.begin; t < ds.train.end; ++t) {
    const int ph = t % period;
    phase_sum.row(ph) += ds.series.row(t);
    ++phase_count[static_cast<std::size_t>(ph)];
  }
  for (int ph = 0; ph < period; ++ph) {
    require(phase_count[static_cast<std::size_t>(ph)] > 0,
            "eval-bench: training span misses a phase");
    phase_sum.row(ph) /=
        static_cast<double>(phase_count[static_cast<std::size_t>(ph)]);
  }

  DenseMatrix out(range.length(), n);
  for (int t = range.begin; t < range.end; ++t)
    out.row(t - range.begin) = phase_sum.row(t % period);
  return out;
}

double eigenbasis_density_percent(const SymmetricMatrix& a) {
  Eigen::SelfAdjointEigenSolver<DenseMatrix> es(a.mat());
  const DenseMatrix& v = es.eigenvectors();
  // Stored-entry count under the same drop_tol = 0 rule the wavelet basis
  // uses: an entry is a nonzero unless it is exactly 0.0.
  long long nnz = 0;
  for (Eigen::Index c = 0; c < v.cols(); ++c)
    for (Eigen::Index r = 0; r < v.rows(); ++r)
      if (v(r, c) != 0.0) ++nnz;
  return 100.0 * static_cast<double>(nnz) /
         (static_cast<double>(v.rows()) * static_cast<double>(v.cols()));
}

DenseMatrix make_diffusion_series(const DenseMatrix& a_tilde,
                                  const DiffusionSeriesConfig& cfg) {
  const int n = static_cast<int>(a_tilde.rows());
  require(a_tilde.cols() == n, "eval-bench: transition matrix must be square");
  require(cfg.timesteps >= 2, "eval-bench: series needs at least two steps");
  std::mt19937_64 rng(mix_seed(cfg.seed, 0xD1FF));

  Vector phase(n);
  for (int i = 0; i < n; ++i)
    phase(i) = uniform_range(rng, 0.0, 2.0 * 3.14159265358979323846);
  Vector state(n);
  for (int i = 0; i < n; ++i) state(i) = normal01(rng);

  DenseMatrix out(cfg.timesteps, n);
  for (int t = 0; t < cfg.timesteps; ++t) {
    if (t > 0) state = cfg.ar_coeff * (a_tilde * state);
    for (int i = 0; i < n; ++i) {
      const double season =
          cfg.season_amp *
          std::sin(2.0 * 3.14159265358979323846 *
                       static_cast<double>(t % cfg.season_period) /
                       cfg.season_period +
                   phase(i));
      state(i) += cfg.noise_std * normal01(rng);
      out(t, i) = state(i) + season;
    }
  }
  return out;
}

namespace {

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  if (v.size() % 2 == 1) return v[m];
  return 0.5 * (v[m - 1] + v[m]);
}

}  // namespace

std::pair<BenchResult, BenchResult> bench_sparsity_and_speed(
    const BenchConfig& cfg, const GraphGen& graph_gen) {
  require(cfg.runs >= 5, "eval-bench: at least five timed runs");

  SymmetricMatrix lap =
      graph_gen ? graph_gen(cfg.n, cfg.seed)
                : graph_laplacian(symmetrize(knn_graph(cfg.n, cfg.knn, cfg.seed)));

  FactorizeConfig fc;
  fc.levels = cfg.levels;
  fc.order = cfg.order_k;
  fc.seed = cfg.seed;
  MmfFactorization fact = factorize(lap, fc);
  auto basis = std::make_shared<const WaveletBasis>(extract_basis(fact));
  const double density = sparsity_report(*basis).density_percent;

  // Shared synthetic workload.
  AdjacencyMatrix adj = knn_graph(cfg.n, cfg.knn, cfg.seed);
  DenseMatrix a_tilde = row_normalize(adj);
  DiffusionSeriesConfig dc;
  dc.seed = cfg.seed;
  // Enough rows for `samples` training windows plus val/test tails.
  dc.timesteps = static_cast<int>(
      std::ceil((cfg.history + cfg.horizon + cfg.samples) / 0.7)) + 8;
  DenseMatrix series = make_diffusion_series(a_tilde, dc);
  ForecastDataset ds =
      dataset_from_series(series, cfg.history, cfg.horizon);

  auto run_path = [&](bool dense_path, const std::string& label) {
    TrainConfig tc;
    tc.hidden = cfg.hidden;
    tc.layers = 2;
    tc.batch = cfg.batch;
    tc.epochs = cfg.runs;
    tc.seed = cfg.seed;
    tc.dense_path = dense_path;
    tc.dropout = 0.1;
    tc.eval_each_epoch = false;
    Seq2SeqModel model = make_model(basis, 1, tc);
    std::vector<EpochLogRow> log = train(model, ds, tc);
    BenchResult res;
    res.label = label;
    res.runs = cfg.runs;
    res.nnz_density_percent = dense_path ? 100.0 : density;
    std::vector<double> secs;
    for (const EpochLogRow& row : log)
      if (row.split == "train") {
        secs.push_back(row.seconds);
        res.epoch_losses.push_back(row.mae);
      }
    res.median_seconds_per_epoch = median(secs);
    return res;
  };

  BenchResult sparse = run_path(false, "sparse-wavelet");
  BenchResult dense = run_path(true, "densified-control");
  return {sparse, dense};
}

}  // namespace mmfw
