#include "cli_app.hpp"

#include "mmfw/evalbench.hpp"
#include "mmfw/graph.hpp"
#include "mmfw/linalg.hpp"
#include "mmfw/wavelets.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace mmfw;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("mmfw_cli_test_" + std::to_string(::getpid()));
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
  std::string file(const std::string& name) const {
    return (path / name).string();
  }
};

int run(std::vector<std::string> args) {
  args.insert(args.begin(), "mmfw");
  return cli::run_cli(args);
}

std::string slurp(const std::string& path) {
  std::ifstream f(path);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void write_inputs(const TempDir& dir) {
  // symmetric matrix to factorize
  SymmetricMatrix lap = graph_laplacian(symmetrize(knn_graph(12, 3, 4)));
  std::ofstream m(dir.file("a.mtx"));
  write_matrix_text(m, lap.mat());

  // short series over the same 12 nodes
  AdjacencyMatrix adj = knn_graph(12, 3, 4);
  DenseMatrix at = row_normalize(adj);
  DiffusionSeriesConfig dc;
  dc.timesteps = 120;
  dc.seed = 4;
  write_series_csv(dir.file("series.csv"), make_diffusion_series(at, dc));
}

}  // namespace

TEST_CASE("usage errors exit with code 2") {
  CHECK(run({}) == 2);
  CHECK(run({"frobnicate"}) == 2);
  CHECK(run({"factorize"}) == 2);               // missing required flags
  CHECK(run({"factorize", "--bogus", "1"}) == 2);
}

TEST_CASE("missing input files exit with code 1") {
  TempDir dir;
  CHECK(run({"factorize", "--input", dir.file("absent.mtx"), "--out",
             dir.file("f.mmf")}) == 1);
  CHECK(!fs::exists(dir.file("f.mmf")));  // no partial output
}

TEST_CASE("factorize then wavelets round-trips through files") {
  TempDir dir;
  write_inputs(dir);

  CHECK(run({"factorize", "--input", dir.file("a.mtx"), "--levels", "6",
             "--order", "2", "--out", dir.file("f.mmf")}) == 0);
  CHECK(fs::exists(dir.file("f.mmf")));

  CHECK(run({"wavelets", "--factorization", dir.file("f.mmf"), "--out",
             dir.file("w.mtx")}) == 0);

  // reloaded basis passes the orthonormality check
  WaveletBasis w = read_basis_file(dir.file("w.mtx"));
  DenseMatrix dense = w.basis.densify();
  DenseMatrix err =
      dense.transpose() * dense - DenseMatrix::Identity(w.n, w.n);
  CHECK(err.cwiseAbs().maxCoeff() <= 1e-8);
}

TEST_CASE("subcommands are idempotent: outputs byte-identical across runs") {
  TempDir dir;
  write_inputs(dir);

  auto fact = [&](const std::string& out) {
    return run({"factorize", "--input", dir.file("a.mtx"), "--levels", "6",
                "--seed", "3", "--out", dir.file(out)});
  };
  CHECK(fact("f1.mmf") == 0);
  CHECK(fact("f2.mmf") == 0);
  CHECK(slurp(dir.file("f1.mmf")) == slurp(dir.file("f2.mmf")));

  auto wav = [&](const std::string& out) {
    return run({"wavelets", "--factorization", dir.file("f1.mmf"), "--out",
                dir.file(out)});
  };
  CHECK(wav("w1.mtx") == 0);
  CHECK(wav("w2.mtx") == 0);
  CHECK(slurp(dir.file("w1.mtx")) == slurp(dir.file("w2.mtx")));
}

TEST_CASE("adjacency subcommand covers both builders") {
  TempDir dir;
  write_inputs(dir);

  // distance table: reuse the random geometry's pairwise distances
  {
    DenseMatrix d(3, 3);
    d << 0.0, 1.0, 2.0, 1.5, 0.0, 0.5, 2.0, 0.5, 0.0;
    std::ofstream f(dir.file("dist.mtx"));
    write_matrix_text(f, d);
  }
  CHECK(run({"adjacency", "--distances", dir.file("dist.mtx"), "--threshold",
             "3.0", "--out", dir.file("adj.mtx")}) == 0);
  DenseMatrix adj = read_dense_file(dir.file("adj.mtx"));
  CHECK(adj.rows() == 3);
  CHECK((adj - adj.transpose()).cwiseAbs().maxCoeff() == 0.0);

  CHECK(run({"adjacency", "--series", dir.file("series.csv"), "--lle",
             "--lle-iters", "200", "--out", dir.file("lle.mtx")}) == 0);
  DenseMatrix lle = read_dense_file(dir.file("lle.mtx"));
  CHECK(lle.rows() == 12);
  CHECK((lle - lle.transpose()).cwiseAbs().maxCoeff() == 0.0);

  // neither input given
  CHECK(run({"adjacency", "--out", dir.file("x.mtx")}) == 2);
}

TEST_CASE("train and eval work end to end through files") {
  TempDir dir;
  write_inputs(dir);
  REQUIRE(run({"factorize", "--input", dir.file("a.mtx"), "--levels", "6",
               "--out", dir.file("f.mmf")}) == 0);
  REQUIRE(run({"wavelets", "--factorization", dir.file("f.mmf"), "--out",
               dir.file("w.mtx")}) == 0);

  CHECK(run({"train", "--series", dir.file("series.csv"), "--wavelets",
             dir.file("w.mtx"), "--history", "6", "--horizon", "2",
             "--epochs", "2", "--hidden", "4", "--batch", "16", "--seed",
             "1", "--out", dir.file("model.ckpt"), "--metrics",
             dir.file("metrics.csv")}) == 0);
  CHECK(fs::exists(dir.file("model.ckpt")));
  std::string metrics = slurp(dir.file("metrics.csv"));
  CHECK(metrics.rfind("epoch,split,mae,rmse,mape,seconds", 0) == 0);

  CHECK(run({"eval", "--model", dir.file("model.ckpt"), "--wavelets",
             dir.file("w.mtx"), "--series", dir.file("series.csv"),
             "--history", "6", "--horizon", "2", "--split", "test",
             "--ha-period", "24", "--out", dir.file("report.csv")}) == 0);
  std::string report = slurp(dir.file("report.csv"));
  CHECK(report.find("model,") != std::string::npos);
  CHECK(report.find("historical_average,") != std::string::npos);

  // identical train runs produce byte-identical checkpoints
  CHECK(run({"train", "--series", dir.file("series.csv"), "--wavelets",
             dir.file("w.mtx"), "--history", "6", "--horizon", "2",
             "--epochs", "2", "--hidden", "4", "--batch", "16", "--seed",
             "1", "--out", dir.file("model2.ckpt")}) == 0);
  CHECK(slurp(dir.file("model.ckpt")) == slurp(dir.file("model2.ckpt")));
}

TEST_CASE("config file values are overridden by flags") {
  TempDir dir;
  write_inputs(dir);
  {
    std::ofstream f(dir.file("run.conf"));
    f << "[factorize]\n";
    f << "levels=6\n";
    f << "seed=9\n";
  }
  CHECK(run({"--config", dir.file("run.conf"), "factorize", "--input",
             dir.file("a.mtx"), "--out", dir.file("fc.mmf")}) == 0);
  CHECK(run({"factorize", "--input", dir.file("a.mtx"), "--levels", "6",
             "--seed", "9", "--out", dir.file("fd.mmf")}) == 0);
  CHECK(slurp(dir.file("fc.mmf")) == slurp(dir.file("fd.mmf")));

  // flag wins over the config file
  CHECK(run({"--config", dir.file("run.conf"), "factorize", "--input",
             dir.file("a.mtx"), "--levels", "4", "--out",
             dir.file("fe.mmf")}) == 0);
  MmfFactorization fe = read_factorization_file(dir.file("fe.mmf"));
  CHECK(fe.levels() == 4);
}

TEST_CASE("output into a missing directory fails without partial files") {
  TempDir dir;
  write_inputs(dir);
  const std::string out = (dir.path / "nosuchdir" / "f.mmf").string();
  CHECK(run({"factorize", "--input", dir.file("a.mtx"), "--levels", "4",
             "--out", out}) == 1);
  CHECK(!fs::exists(out));
  CHECK(!fs::exists(out + ".tmp"));
}
