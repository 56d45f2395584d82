#include "mmfw/evalbench.hpp"

#include "test_support.hpp"

#include <doctest.h>

#include <cmath>

using namespace mmfw;

namespace {

// A dataset wrapper with identity normalization so HA values are literal.
ForecastDataset literal_dataset(DenseMatrix series, int train_len) {
  ForecastDataset ds;
  ds.history_len = 1;
  ds.horizon = 1;
  const int t = static_cast<int>(series.rows());
  ds.train = {0, train_len};
  ds.validation = {train_len, train_len};
  ds.test = {train_len, t};
  ds.mean = Vector::Zero(series.cols());
  ds.stdev = Vector::Ones(series.cols());
  ds.series = std::move(series);
  return ds;
}

}  // namespace

TEST_CASE("metrics on exact predictions are zero") {
  DenseMatrix y(2, 2);
  y << 1.0, 2.0, 3.0, 4.0;
  MetricReport rep = metrics(y, y);
  CHECK(rep.mae == 0.0);
  CHECK(rep.rmse == 0.0);
  CHECK(rep.mape == 0.0);
}

TEST_CASE("metrics follow the definitions") {
  DenseMatrix pred(1, 1), truth(1, 1);
  pred << 2.0;
  truth << 1.0;
  MetricReport rep = metrics(pred, truth);
  CHECK(rep.mae == doctest::Approx(1.0));
  CHECK(rep.rmse == doctest::Approx(1.0));
  CHECK(rep.mape == doctest::Approx(100.0));
}

TEST_CASE("metrics exclude near-zero targets from MAPE") {
  DenseMatrix pred(2, 1), truth(2, 1);
  pred << 1.0, 5.0;
  truth << 1e-12, 4.0;
  MetricReport rep = metrics(pred, truth);
  CHECK(rep.mape == doctest::Approx(25.0));  // only the second target counts

  DenseMatrix zt = DenseMatrix::Zero(2, 1);
  CHECK_THROWS(metrics(pred, zt));
  CHECK_THROWS(metrics(pred, DenseMatrix::Zero(3, 1)));
}

TEST_CASE("rmse dominates mae and both are permutation invariant") {
  std::mt19937_64 rng(131);
  DenseMatrix pred = test::random_matrix(8, 3, rng);
  DenseMatrix truth = test::random_matrix(8, 3, rng).array() + 2.0;
  MetricReport rep = metrics(pred, truth);
  CHECK(rep.rmse >= rep.mae);

  // shuffle rows consistently
  std::vector<int> perm{3, 1, 7, 0, 5, 2, 6, 4};
  DenseMatrix pred_p(8, 3), truth_p(8, 3);
  for (int i = 0; i < 8; ++i) {
    pred_p.row(i) = pred.row(perm[(unsigned)i]);
    truth_p.row(i) = truth.row(perm[(unsigned)i]);
  }
  MetricReport rep_p = metrics(pred_p, truth_p);
  CHECK(rep_p.mae == doctest::Approx(rep.mae));
  CHECK(rep_p.rmse == doctest::Approx(rep.rmse));
  CHECK(rep_p.mape == doctest::Approx(rep.mape));
}

TEST_CASE("historical average reproduces phase means") {
  // two training periods with phases [1,3] and [3,5] -> prediction [2,4]
  DenseMatrix series(6, 1);
  series << 1.0, 3.0, 3.0, 5.0, 2.0, 4.0;
  ForecastDataset ds = literal_dataset(series, 4);
  DenseMatrix pred = historical_average(ds, 2, ds.test);
  CHECK(pred.rows() == 2);
  CHECK(pred(0, 0) == doctest::Approx(2.0));  // phase 0
  CHECK(pred(1, 0) == doctest::Approx(4.0));  // phase 1
}

TEST_CASE("historical average is exact on periodic series") {
  DenseMatrix series(12, 2);
  for (int t = 0; t < 12; ++t) {
    series(t, 0) = t % 3;
    series(t, 1) = 10.0 + (t % 3 == 1 ? 2.0 : -1.0);
  }
  ForecastDataset ds = literal_dataset(series, 9);
  DenseMatrix pred = historical_average(ds, 3, ds.test);
  for (int t = 0; t < 3; ++t)
    for (int c = 0; c < 2; ++c)
      CHECK(pred(t, c) == doctest::Approx(series(9 + t, c)));
}

TEST_CASE("historical average rejects an over-long period") {
  DenseMatrix series(10, 1);
  for (int t = 0; t < 10; ++t) series(t, 0) = t;
  ForecastDataset ds = literal_dataset(series, 4);
  CHECK_THROWS(historical_average(ds, 5, ds.test));
}

TEST_CASE("eigenbasis of a knn laplacian is dense") {
  SymmetricMatrix lap = test::knn_laplacian(24, 3, 3);
  CHECK(eigenbasis_density_percent(lap) >= 95.0);
}

TEST_CASE("diffusion series generator is deterministic and shaped") {
  AdjacencyMatrix adj = knn_graph(8, 3, 17);
  DenseMatrix at = row_normalize(adj);
  DiffusionSeriesConfig dc;
  dc.timesteps = 50;
  dc.seed = 5;
  DenseMatrix a = make_diffusion_series(at, dc);
  DenseMatrix b = make_diffusion_series(at, dc);
  CHECK(a == b);
  CHECK(a.rows() == 50);
  CHECK(a.cols() == 8);
  CHECK(a.allFinite());
}

TEST_CASE("bench sparse and dense paths agree exactly on a small graph") {
  BenchConfig cfg;
  cfg.n = 32;
  cfg.levels = 16;
  cfg.order_k = 2;
  cfg.runs = 5;
  cfg.knn = 3;
  cfg.hidden = 4;
  cfg.history = 4;
  cfg.horizon = 2;
  cfg.samples = 6;
  cfg.batch = 4;
  cfg.seed = 7;
  auto [sparse, dense] = bench_sparsity_and_speed(cfg);

  CHECK(sparse.runs == 5);
  REQUIRE(sparse.epoch_losses.size() == dense.epoch_losses.size());
  for (std::size_t i = 0; i < sparse.epoch_losses.size(); ++i)
    CHECK(sparse.epoch_losses[i] == dense.epoch_losses[i]);  // bitwise

  CHECK(sparse.nnz_density_percent < 100.0);
  CHECK(sparse.median_seconds_per_epoch > 0.0);
  CHECK(dense.median_seconds_per_epoch > 0.0);
}
