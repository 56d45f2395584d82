#include "cli_app.hpp"

#include "mmfw/evalbench.hpp"
#include "mmfw/graph.hpp"
#include "mmfw/mmf.hpp"
#include "mmfw/model.hpp"
#include "mmfw/wavelets.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <memory>
#include <sstream>

namespace mmfw::cli {

namespace {

enum class LogLevel { quiet = 0, info = 1, debug = 2 };

LogLevel log_level() {
  const char* env = std::getenv("MMFW_LOG");
  if (!env) return LogLevel::info;
  const std::string v(env);
  if (v == "quiet" || v == "0") return LogLevel::quiet;
  if (v == "debug" || v == "2") return LogLevel::debug;
  return LogLevel::info;
}

void log_info(const std::string& msg) {
  if (log_level() >= LogLevel::info) std::cerr << msg << '\n';
}

// Temp file plus rename; no partial outputs on failure.
void atomic_write(const std::string& path,
                  const std::function<void(std::ostream&)>& writer) {
  namespace fs = std::filesystem;
  const fs::path target(path);
  if (target.has_parent_path() && !target.parent_path().empty() &&
      !fs::exists(target.parent_path()))
    throw std::runtime_error("cli: output directory does not exist: " +
                             target.parent_path().string());
  fs::path tmp = target;
  tmp += ".tmp";
  try {
    {
      std::ofstream os(tmp, std::ios::trunc);
      if (!os)
        throw std::runtime_error("cli: cannot open output file: " +
                                 tmp.string());
      writer(os);
      os.flush();
      if (!os)
        throw std::runtime_error("cli: failed writing output file: " +
                                 tmp.string());
    }
    fs::rename(tmp, target);
  } catch (...) {
    std::error_code ec;
    fs::remove(tmp, ec);
    throw;
  }
}

SymmetricMatrix load_symmetric(const std::string& path) {
  DenseMatrix m = read_dense_file(path);
  return SymmetricMatrix::exact(m);
}

struct FactorizeArgs {
  std::string input, out;
  FactorizeConfig cfg;
};

int run_factorize(const FactorizeArgs& a) {
  SymmetricMatrix m = load_symmetric(a.input);
  FactorizeConfig cfg = a.cfg;
  if (cfg.levels <= 0) cfg.levels = std::max(1, m.size() / 2);
  log_info("factorizing " + std::to_string(m.size()) + "x" +
           std::to_string(m.size()) + " matrix, levels=" +
           std::to_string(cfg.levels) + " order=" + std::to_string(cfg.order));
  MmfFactorization f = factorize(m, cfg);
  atomic_write(a.out, [&](std::ostream& os) { write_factorization(os, f); });
  std::cout << "residual " << format_double(f.residual) << '\n';
  return 0;
}

struct WaveletsArgs {
  std::string factorization, out;
  double drop_tol = 0.0;
};

int run_wavelets(const WaveletsArgs& a) {
  MmfFactorization f = read_factorization_file(a.factorization);
  WaveletBasis w = extract_basis(f, a.drop_tol);
  atomic_write(a.out, [&](std::ostream& os) { write_basis(os, w); });
  SparsityReport rep = sparsity_report(w);
  std::cout << "wavelets " << w.n << " mothers " << w.mother_columns.size()
            << " fathers " << w.father_columns.size() << '\n';
  std::cout << "nnz " << rep.nnz << " density_percent "
            << format_double(rep.density_percent) << " rotation_bound "
            << rep.rotation_bound << '\n';
  return 0;
}

struct AdjacencyArgs {
  std::string distances, series, out;
  bool lle = false;
  double threshold = kDefaultDistanceThreshold;
  LleConfig lle_cfg;
};

int run_adjacency(const AdjacencyArgs& a) {
  AdjacencyMatrix adj;
  if (a.lle) {
    if (a.series.empty())
      throw CLI::ValidationError("adjacency", "--lle requires --series");
    // Raw CSV values, no normalization: the affine structure is in the data.
    RawSeries raw = read_series_csv(a.series);
    adj = lle_adjacency(raw.values, a.lle_cfg);
    log_info("lle adjacency over " + std::to_string(raw.values.cols()) +
             " nodes");
  } else {
    if (a.distances.empty())
      throw CLI::ValidationError("adjacency",
                                 "need --distances or --series with --lle");
    DistanceTable d{read_dense_file(a.distances)};
    adj = gaussian_adjacency(d, a.threshold);
    log_info("gaussian adjacency over " + std::to_string(d.size()) + " nodes");
  }
  SymmetricMatrix sym = symmetrize(adj);
  atomic_write(a.out, [&](std::ostream& os) {
    write_matrix_text(os, coo_from_dense(sym.mat(), 0.0));
  });
  std::cout << "adjacency " << sym.size() << " nnz "
            << coo_from_dense(sym.mat(), 0.0).nnz() << '\n';
  return 0;
}

struct TrainArgs {
  std::string series, wavelets, out, metrics_out;
  int history = 12;
  int horizon = 3;
  TrainConfig cfg;
};

int run_train(const TrainArgs& a) {
  auto basis =
      std::make_shared<const WaveletBasis>(read_basis_file(a.wavelets));
  ForecastDataset ds = load_series(a.series, a.history, a.horizon);
  if (ds.nodes() != basis->n)
    throw std::runtime_error(
        "cli: series node count does not match the wavelet basis");

  Seq2SeqModel model = make_model(basis, 1, a.cfg);
  log_info("training " + std::to_string(a.cfg.epochs) + " epochs on " +
           std::to_string(ds.nodes()) + " nodes");
  std::vector<EpochLogRow> log = train(model, ds, a.cfg);

  atomic_write(a.out, [&](std::ostream& os) { save_checkpoint(os, model); });
  if (!a.metrics_out.empty())
    atomic_write(a.metrics_out,
                 [&](std::ostream& os) { write_metrics_csv(os, log); });
  for (const EpochLogRow& row : log)
    if (row.split == "val" && row.epoch == a.cfg.epochs - 1)
      std::cout << "val mae " << format_double(row.mae) << " rmse "
                << format_double(row.rmse) << " mape "
                << format_double(row.mape) << '\n';
  return 0;
}

struct EvalArgs {
  std::string model, wavelets, series, out, split = "test";
  int history = 12;
  int horizon = 3;
  int ha_period = 0;
};

int run_eval(const EvalArgs& a) {
  auto basis =
      std::make_shared<const WaveletBasis>(read_basis_file(a.wavelets));
  Seq2SeqModel model = load_checkpoint_file(a.model, basis);
  ForecastDataset ds = load_series(a.series, a.history, a.horizon);
  if (ds.nodes() != basis->n)
    throw std::runtime_error(
        "cli: series node count does not match the wavelet basis");

  const SplitRange range = a.split == "train" ? ds.train
                           : a.split == "val" ? ds.validation
                                              : ds.test;
  TransformEngine eng(*model.basis, false);
  MetricReport rep = evaluate_split(model, eng, ds, range);
  std::cout << "model " << a.split << " mae " << format_double(rep.mae)
            << " rmse " << format_double(rep.rmse) << " mape "
            << format_double(rep.mape) << " windows " << rep.n_samples << '\n';

  std::vector<std::pair<std::string, MetricReport>> rows{{"model", rep}};
  if (a.ha_period > 0) {
    DenseMatrix ha_norm = historical_average(ds, a.ha_period, range);
    DenseMatrix ha = ds.denormalize(ha_norm);
    DenseMatrix truth =
        ds.denormalize(ds.series.middleRows(range.begin, range.length()));
    MetricReport ha_rep = metrics(ha, truth);
    std::cout << "ha " << a.split << " mae " << format_double(ha_rep.mae)
              << " rmse " << format_double(ha_rep.rmse) << " mape "
              << format_double(ha_rep.mape) << '\n';
    rows.push_back({"historical_average", ha_rep});
  }
  if (!a.out.empty()) {
    atomic_write(a.out, [&](std::ostream& os) {
      os << "label,mae,rmse,mape,horizon,n_samples\n";
      for (const auto& [label, r] : rows)
        os << label << ',' << format_double(r.mae) << ','
           << format_double(r.rmse) << ',' << format_double(r.mape) << ','
           << r.horizon << ',' << r.n_samples << '\n';
    });
  }
  return 0;
}

struct BenchArgs {
  BenchConfig cfg;
  std::string out;
};

int run_bench(const BenchArgs& a) {
  log_info("benchmarking n=" + std::to_string(a.cfg.n) +
           " levels=" + std::to_string(a.cfg.levels));
  auto [sparse, dense] = bench_sparsity_and_speed(a.cfg);
  SymmetricMatrix lap =
      graph_laplacian(symmetrize(knn_graph(a.cfg.n, a.cfg.knn, a.cfg.seed)));
  const double eigen_density = eigenbasis_density_percent(lap);

  auto print = [&](const BenchResult& r, double density) {
    std::cout << r.label << " median_seconds_per_epoch "
              << format_double(r.median_seconds_per_epoch) << " runs "
              << r.runs << " density_percent " << format_double(density)
              << '\n';
  };
  print(sparse, sparse.nnz_density_percent);
  print(dense, eigen_density);
  const double speedup =
      dense.median_seconds_per_epoch / sparse.median_seconds_per_epoch;
  std::cout << "speedup " << format_double(speedup) << "x\n";

  if (!a.out.empty()) {
    atomic_write(a.out, [&](std::ostream& os) {
      os << "label,median_seconds_per_epoch,runs,density_percent\n";
      os << sparse.label << ',' << format_double(sparse.median_seconds_per_epoch)
         << ',' << sparse.runs << ','
         << format_double(sparse.nnz_density_percent) << '\n';
      os << dense.label << ',' << format_double(dense.median_seconds_per_epoch)
         << ',' << dense.runs << ',' << format_double(eigen_density) << '\n';
    });
  }
  return 0;
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"Multiresolution matrix factorization graph-wavelet forecasting"};
  app.require_subcommand(1);
  app.set_config("--config", "", "Configuration file (key=value lines)");

  FactorizeArgs fa;
  auto* fac = app.add_subcommand(
      "factorize", "Factorize a symmetric matrix into rotations and a core");
  fac->add_option("--input", fa.input, "Symmetric matrix (text format)")
      ->required();
  fac->add_option("--out", fa.out, "Factorization output file")->required();
  fac->add_option("--levels", fa.cfg.levels, "Resolution levels L (default n/2)");
  fac->add_option("--order", fa.cfg.order, "Rotation order k")->capture_default_str();
  fac->add_option("--descent-iters", fa.cfg.descent_iters,
                  "Stiefel descent steps per level")->capture_default_str();
  fac->add_option("--step-size", fa.cfg.step_size, "Initial step size")->capture_default_str();
  fac->add_option("--step-shrink", fa.cfg.step_shrink,
                  "Backtracking shrink factor")->capture_default_str();
  fac->add_option("--seed", fa.cfg.seed, "Random seed")->capture_default_str();

  WaveletsArgs wa;
  auto* wav = app.add_subcommand(
      "wavelets", "Extract the sparse wavelet basis from a factorization");
  wav->add_option("--factorization", wa.factorization, "Factorization file")
      ->required();
  wav->add_option("--out", wa.out, "Basis output file")->required();
  wav->add_option("--drop-tol", wa.drop_tol, "Drop entries at or below this")->capture_default_str();

  AdjacencyArgs aa;
  auto* adj = app.add_subcommand(
      "adjacency", "Build a symmetric adjacency matrix from data");
  adj->add_option("--distances", aa.distances, "Distance table (text format)");
  adj->add_option("--series", aa.series, "Time-series CSV (for --lle)");
  adj->add_flag("--lle", aa.lle, "Affine-dependency adjacency from the series");
  adj->add_option("--threshold", aa.threshold, "Gaussian kernel cutoff")->capture_default_str();
  adj->add_option("--lambda-a", aa.lle_cfg.lambda_a, "l1 weight")->capture_default_str();
  adj->add_option("--lle-iters", aa.lle_cfg.max_iters, "Solver iterations")->capture_default_str();
  adj->add_option("--lle-tol", aa.lle_cfg.tol, "Solver tolerance")->capture_default_str();
  adj->add_option("--out", aa.out, "Adjacency output file")->required();

  TrainArgs ta;
  auto* tr = app.add_subcommand("train", "Train the wavelet recurrent model");
  tr->add_option("--series", ta.series, "Time-series CSV")->required();
  tr->add_option("--wavelets", ta.wavelets, "Wavelet basis file")->required();
  tr->add_option("--out", ta.out, "Checkpoint output file")->required();
  tr->add_option("--metrics", ta.metrics_out, "Per-epoch metrics CSV");
  tr->add_option("--history", ta.history, "History window length")->capture_default_str();
  tr->add_option("--horizon", ta.horizon, "Forecast horizon")->capture_default_str();
  tr->add_option("--epochs", ta.cfg.epochs, "Training epochs")->capture_default_str();
  tr->add_option("--hidden", ta.cfg.hidden, "Hidden units per layer")->capture_default_str();
  tr->add_option("--layers", ta.cfg.layers, "Recurrent layers")->capture_default_str();
  tr->add_option("--batch", ta.cfg.batch, "Batch size")->capture_default_str();
  tr->add_option("--lr", ta.cfg.lr, "Initial learning rate")->capture_default_str();
  tr->add_option("--dropout", ta.cfg.dropout, "Dropout ratio")->capture_default_str();
  tr->add_option("--tau", ta.cfg.sampling_tau,
                 "Scheduled-sampling decay constant")->capture_default_str();
  tr->add_option("--seed", ta.cfg.seed, "Random seed")->capture_default_str();
  tr->add_option("--threads", ta.cfg.threads,
                 "Parallel batch-element forward passes")->capture_default_str();
  tr->add_flag("--dense-path", ta.cfg.dense_path,
               "Use the densified-basis control path");

  EvalArgs ea;
  auto* ev = app.add_subcommand("eval", "Evaluate a trained checkpoint");
  ev->add_option("--model", ea.model, "Checkpoint file")->required();
  ev->add_option("--wavelets", ea.wavelets, "Wavelet basis file")->required();
  ev->add_option("--series", ea.series, "Time-series CSV")->required();
  ev->add_option("--history", ea.history, "History window length")->capture_default_str();
  ev->add_option("--horizon", ea.horizon, "Forecast horizon")->capture_default_str();
  ev->add_option("--split", ea.split, "Evaluation split")
      ->capture_default_str()
      ->check(CLI::IsMember({"train", "val", "test"}));
  ev->add_option("--ha-period", ea.ha_period,
                 "Also report the historical-average baseline");
  ev->add_option("--out", ea.out, "Metric report CSV");

  BenchArgs ba;
  auto* be = app.add_subcommand(
      "bench", "Sparsity and speed benchmark against the densified control");
  be->add_option("--n", ba.cfg.n, "Graph size")->capture_default_str();
  be->add_option("--levels", ba.cfg.levels, "Resolution levels")->capture_default_str();
  be->add_option("--order", ba.cfg.order_k, "Rotation order")->capture_default_str();
  be->add_option("--runs", ba.cfg.runs, "Timed epochs per path")->capture_default_str();
  be->add_option("--knn", ba.cfg.knn, "Graph neighbours")->capture_default_str();
  be->add_option("--hidden", ba.cfg.hidden, "Hidden units")->capture_default_str();
  be->add_option("--history", ba.cfg.history, "History window")->capture_default_str();
  be->add_option("--horizon", ba.cfg.horizon, "Forecast horizon")->capture_default_str();
  be->add_option("--samples", ba.cfg.samples, "Training windows")->capture_default_str();
  be->add_option("--batch", ba.cfg.batch, "Batch size")->capture_default_str();
  be->add_option("--seed", ba.cfg.seed, "Random seed")->capture_default_str();
  be->add_option("--out", ba.out, "Benchmark CSV");

  std::vector<std::string> args;
  for (int i = argc - 1; i > 0; --i) args.emplace_back(argv[i]);
  try {
    app.parse(args);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << '\n' << app.help() << '\n';
    return 2;
  }

  try {
    if (fac->parsed()) return run_factorize(fa);
    if (wav->parsed()) return run_wavelets(wa);
    if (adj->parsed()) return run_adjacency(aa);
    if (tr->parsed()) return run_train(ta);
    if (ev->parsed()) return run_eval(ea);
    if (be->parsed()) return run_bench(ba);
  } catch (const CLI::ValidationError& e) {
    std::cerr << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}

int run_cli(const std::vector<std::string>& args) {
  std::vector<const char*> ptrs;
  ptrs.reserve(args.size());
  for (const std::string& s : args) ptrs.push_back(s.c_str());
  return run_cli(static_cast<int>(ptrs.size()), ptrs.data());
}

}  // namespace mmfw::cli
