#include "mmfw/graph.hpp"

#include "mmfw/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace mmfw {

namespace {

void require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

}  // namespace

DenseMatrix ForecastDataset::denormalize(const DenseMatrix& rows_by_nodes) const {
  require(rows_by_nodes.cols() == series.cols(),
          "graph-adjacency: denormalize node-count mismatch");
  DenseMatrix out = rows_by_nodes;
  for (Eigen::Index c = 0; c < out.cols(); ++c)
    out.col(c) = out.col(c) * stdev(c) + Vector::Constant(out.rows(), mean(c));
  return out;
}

AdjacencyMatrix gaussian_adjacency(const DistanceTable& d, double threshold_k) {
  require(threshold_k > 0.0, "graph-adjacency: threshold must be positive");
  const int n = d.size();
  require(d.dist.cols() == n, "graph-adjacency: distance table must be square");

  // sigma over all finite off-diagonal distances, before thresholding.
  double sum = 0.0, sumsq = 0.0;
  long long count = 0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      if (i == j) continue;
      const double v = d.dist(i, j);
      if (!std::isfinite(v)) continue;
      require(v >= 0.0, "graph-adjacency: negative distance");
      sum += v;
      sumsq += v * v;
      ++count;
    }
  require(count > 0, "graph-adjacency: no finite pairwise distances");
  const double meanv = sum / static_cast<double>(count);
  const double var = std::max(sumsq / static_cast<double>(count) - meanv * meanv, 0.0);
  const double sigma = std::sqrt(var);
  require(sigma > 0.0, "graph-adjacency: all distances identical (sigma = 0)");
  const double sigma2 = sigma * sigma;

  AdjacencyMatrix a;
  a.kind = AdjacencyKind::gaussian;
  a.values = DenseMatrix::Zero(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      const double v = d.dist(i, j);
      if (std::isfinite(v) && v <= threshold_k) a.values(i, j) = std::exp(-v / sigma2);
    }
  return a;
}

SymmetricMatrix symmetrize(const AdjacencyMatrix& a) {
  return SymmetricMatrix::symmetrized(a.values);
}

DenseMatrix row_normalize(const AdjacencyMatrix& a) {
  const int n = a.size();
  require(a.values.cols() == n, "graph-adjacency: adjacency must be square");
  DenseMatrix out = DenseMatrix::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    double s = 0.0;
    for (int j = 0; j < n; ++j) {
      require(a.values(i, j) >= 0.0, "graph-adjacency: negative edge weight");
      s += a.values(i, j);
    }
    if (s == 0.0) {
      out(i, i) = 1.0;  // keep the matrix right-stochastic
    } else {
      for (int j = 0; j < n; ++j) out(i, j) = a.values(i, j) / s;
    }
  }
  return out;
}

namespace {

double spectral_norm_estimate(const DenseMatrix& g) {
  const int n = static_cast<int>(g.rows());
  Vector v(n);
  for (int i = 0; i < n; ++i) v(i) = 1.0 + static_cast<double>(i) / n;
  v.normalize();
  double lambda = 0.0;
  for (int it = 0; it < 20; ++it) {
    Vector w = g * v;
    lambda = w.norm();
    if (lambda == 0.0) return 0.0;
    v = w / lambda;
  }
  return lambda;
}

// Euclidean projection of one row onto {sum = 1, diagonal entry = 0}: the
// affine-combination weights for node `row`.
void project_row(DenseMatrix& a, int row) {
  const int n = static_cast<int>(a.cols());
  a(row, row) = 0.0;
  if (n == 2) {
    a(row, 1 - row) = 1.0;  // unique feasible point
    return;
  }
  double s = 0.0;
  for (int j = 0; j < n; ++j)
    if (j != row) s += a(row, j);
  const double shift = (1.0 - s) / static_cast<double>(n - 1);
  for (int j = 0; j < n; ++j)
    if (j != row) a(row, j) += shift;
}

double lle_objective(const DenseMatrix& x, const DenseMatrix& a, double lambda) {
  const DenseMatrix r = x - x * a.transpose();
  return r.squaredNorm() + lambda * a.cwiseAbs().sum();
}

double lle_violation(const DenseMatrix& a) {
  double v = 0.0;
  for (Eigen::Index r = 0; r < a.rows(); ++r) {
    v = std::max(v, std::abs(a.row(r).sum() - 1.0));
    v = std::max(v, std::abs(a(r, r)));
  }
  return v;
}

}  // namespace

AdjacencyMatrix lle_adjacency(const DenseMatrix& x, const LleConfig& cfg,
                              LleTrace* trace) {
  const int t = static_cast<int>(x.rows());
  const int n = static_cast<int>(x.cols());
  require(t >= 2, "graph-adjacency: lle needs at least two timesteps");
  require(n >= 2, "graph-adjacency: lle needs at least two nodes");
  require(x.allFinite(), "graph-adjacency: non-finite series data");
  require(cfg.lambda_a >= 0.0, "graph-adjacency: negative l1 weight");
  require(cfg.max_iters >= 1, "graph-adjacency: max_iters must be >= 1");
  require(cfg.tol > 0.0, "graph-adjacency: tolerance must be positive");
  require(cfg.penalty_rho > 0.0, "graph-adjacency: penalty must be positive");

  const DenseMatrix gram = x.transpose() * x;
  const double gnorm = spectral_norm_estimate(gram);
  double step = gnorm > 0.0 ? 1.0 / gnorm : 1.0;

  DenseMatrix a = DenseMatrix::Zero(n, n);
  for (int r = 0; r < n; ++r) project_row(a, r);

  double objective = lle_objective(x, a, cfg.lambda_a);
  if (trace) {
    trace->objectives.push_back(objective);
    trace->constraint_violations.push_back(lle_violation(a));
  }

  int halvings = 0;
  for (int it = 0; it < cfg.max_iters; ++it) {
    const DenseMatrix grad = 2.0 * (a * gram - gram);
    DenseMatrix cand = a - step * grad;
    const double thr = step * cfg.lambda_a;
    for (Eigen::Index j = 0; j < cand.size(); ++j) {
      double* v = cand.data() + j;
      *v = *v > thr ? *v - thr : (*v < -thr ? *v + thr : 0.0);
    }
    for (int r = 0; r < n; ++r) project_row(cand, r);

    const double cand_obj = lle_objective(x, cand, cfg.lambda_a);
    if (cand_obj > objective) {
      // The pinned 1/|X^T X| step sits at the monotonicity boundary for
      // this splitting; halve and retry from the same iterate.
      step *= 0.5;
      if (++halvings > 60) break;
      --it;
      continue;
    }
    const double delta = objective - cand_obj;
    a = std::move(cand);
    objective = cand_obj;
    if (trace) {
      trace->objectives.push_back(objective);
      trace->constraint_violations.push_back(lle_violation(a));
    }
    if (delta <= cfg.tol * std::max(1.0, std::abs(objective))) break;
  }

  AdjacencyMatrix out;
  out.kind = AdjacencyKind::lle;
  out.values = std::move(a);
  return out;
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::stringstream ss(line);
  while (std::getline(ss, field, ',')) {
    while (!field.empty() && (field.back() == '\r' || field.back() == ' '))
      field.pop_back();
    std::size_t p = field.find_first_not_of(" \t");
    out.push_back(p == std::string::npos ? std::string() : field.substr(p));
  }
  if (!line.empty() && line.back() == ',') out.push_back(std::string());
  return out;
}

bool is_time_column(const std::string& name) {
  std::string low;
  for (char c : name) low.push_back(static_cast<char>(std::tolower(c)));
  return low.empty() || low == "time" || low == "timestamp" || low == "date" ||
         low == "datetime";
}

double parse_number(const std::string& s) {
  const char* begin = s.c_str();
  char* end = nullptr;
  const double v = std::strtod(begin, &end);
  if (end == begin || *end != '\0')
    throw std::runtime_error("graph-adjacency: malformed CSV number '" + s + "'");
  return v;
}

}  // namespace

ForecastDataset dataset_from_series(DenseMatrix raw, int history_len,
                                    int horizon, double train_ratio,
                                    double val_ratio) {
  const int t = static_cast<int>(raw.rows());
  const int n = static_cast<int>(raw.cols());
  require(history_len >= 1 && horizon >= 0,
          "graph-adjacency: invalid history/horizon");
  require(n >= 1, "graph-adjacency: empty series");
  require(t > history_len + horizon, "graph-adjacency: series too short");
  require(raw.allFinite(), "graph-adjacency: non-finite series data");
  require(train_ratio > 0.0 && val_ratio >= 0.0 &&
              train_ratio + val_ratio < 1.0 + 1e-12,
          "graph-adjacency: invalid split ratios");

  ForecastDataset ds;
  ds.history_len = history_len;
  ds.horizon = horizon;
  const int n_train = static_cast<int>(std::floor(train_ratio * t));
  const int n_val = static_cast<int>(std::floor(val_ratio * t));
  require(n_train >= 2, "graph-adjacency: training split too short");
  ds.train = {0, n_train};
  ds.validation = {n_train, n_train + n_val};
  ds.test = {n_train + n_val, t};

  ds.mean = Vector::Zero(n);
  ds.stdev = Vector::Zero(n);
  for (int c = 0; c < n; ++c) {
    double s = 0.0;
    for (int r = 0; r < n_train; ++r) s += raw(r, c);
    const double m = s / n_train;
    double sq = 0.0;
    for (int r = 0; r < n_train; ++r) sq += (raw(r, c) - m) * (raw(r, c) - m);
    const double sd = std::sqrt(sq / n_train);
    if (sd <= 1e-12 * std::max(1.0, std::abs(m)))
      throw std::invalid_argument(
          "graph-adjacency: constant node column (zero train std)");
    ds.mean(c) = m;
    ds.stdev(c) = sd;
  }
  for (int c = 0; c < n; ++c)
    raw.col(c) = (raw.col(c) - Vector::Constant(t, ds.mean(c))) / ds.stdev(c);
  ds.series = std::move(raw);
  return ds;
}

RawSeries read_series_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open file: " + path);

  std::string line;
  require(static_cast<bool>(std::getline(f, line)),
          "graph-adjacency: empty CSV file");
  std::vector<std::string> header = split_csv_line(line);
  require(!header.empty(), "graph-adjacency: empty CSV header");
  const bool has_time = is_time_column(header.front());
  const std::size_t first_col = has_time ? 1 : 0;
  require(header.size() > first_col, "graph-adjacency: CSV has no node columns");

  RawSeries out;
  out.node_ids.assign(header.begin() + static_cast<long>(first_col),
                      header.end());
  const int n = static_cast<int>(out.node_ids.size());

  std::vector<double> values;
  int t = 0;
  while (std::getline(f, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::vector<std::string> fields = split_csv_line(line);
    require(fields.size() == header.size(),
            "graph-adjacency: CSV row width mismatch");
    for (std::size_t c = first_col; c < fields.size(); ++c)
      values.push_back(parse_number(fields[c]));
    ++t;
  }
  out.values.resize(t, n);
  for (int r = 0; r < t; ++r)
    for (int c = 0; c < n; ++c)
      out.values(r, c) = values[static_cast<std::size_t>(r) * n + c];
  return out;
}

ForecastDataset load_series(const std::string& path, int history_len,
                            int horizon, double train_ratio, double val_ratio) {
  RawSeries raw = read_series_csv(path);
  ForecastDataset ds = dataset_from_series(std::move(raw.values), history_len,
                                           horizon, train_ratio, val_ratio);
  ds.node_ids = std::move(raw.node_ids);
  return ds;
}

void write_series_csv(const std::string& path, const DenseMatrix& raw,
                      const std::vector<std::string>& node_ids) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open file for writing: " + path);
  const int n = static_cast<int>(raw.cols());
  for (int c = 0; c < n; ++c) {
    if (c) f << ',';
    if (static_cast<int>(node_ids.size()) == n)
      f << node_ids[static_cast<std::size_t>(c)];
    else
      f << "node" << c;
  }
  f << '\n';
  for (Eigen::Index r = 0; r < raw.rows(); ++r) {
    for (Eigen::Index c = 0; c < raw.cols(); ++c) {
      if (c) f << ',';
      f << format_double(raw(r, c));
    }
    f << '\n';
  }
}

AdjacencyMatrix knn_graph(int n, int neighbours, std::uint64_t seed) {
  require(n >= 2, "graph-adjacency: knn graph needs at least two nodes");
  require(neighbours >= 1 && neighbours < n,
          "graph-adjacency: invalid neighbour count");
  std::mt19937_64 rng(mix_seed(seed, 0xC0FFEE));
  DenseMatrix pts(n, 2);
  for (int i = 0; i < n; ++i) {
    pts(i, 0) = uniform01(rng);
    pts(i, 1) = uniform01(rng);
  }

  DenseMatrix dist(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      dist(i, j) = std::hypot(pts(i, 0) - pts(j, 0), pts(i, 1) - pts(j, 1));

  // Mean nearest-neighbour distance sets the kernel width.
  double mean_knn = 0.0;
  std::vector<int> order(static_cast<std::size_t>(n));
  AdjacencyMatrix a;
  a.kind = AdjacencyKind::custom;
  a.values = DenseMatrix::Zero(n, n);

  std::vector<std::vector<int>> nbrs(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) order[static_cast<std::size_t>(j)] = j;
    std::sort(order.begin(), order.end(), [&](int l, int r) {
      if (dist(i, l) != dist(i, r)) return dist(i, l) < dist(i, r);
      return l < r;
    });
    int taken = 0;
    for (int j : order) {
      if (j == i) continue;
      nbrs[static_cast<std::size_t>(i)].push_back(j);
      mean_knn += dist(i, j);
      if (++taken == neighbours) break;
    }
  }
  mean_knn /= static_cast<double>(n) * neighbours;
  const double s2 = std::max(mean_knn * mean_knn, 1e-300);

  for (int i = 0; i < n; ++i)
    for (int j : nbrs[static_cast<std::size_t>(i)]) {
      const double w = std::exp(-(dist(i, j) * dist(i, j)) / s2);
      a.values(i, j) = w;
      a.values(j, i) = w;
    }

  // Bridge disconnected components with their nearest cross pair so the
  // Laplacian has a single zero eigenvalue and dense eigenvectors.
  std::vector<int> comp(static_cast<std::size_t>(n), -1);
  int ncomp = 0;
  for (int s = 0; s < n; ++s) {
    if (comp[static_cast<std::size_t>(s)] != -1) continue;
    std::vector<int> stack{s};
    comp[static_cast<std::size_t>(s)] = ncomp;
    while (!stack.empty()) {
      const int v = stack.back();
      stack.pop_back();
      for (int j = 0; j < n; ++j)
        if (a.values(v, j) > 0.0 && comp[static_cast<std::size_t>(j)] == -1) {
          comp[static_cast<std::size_t>(j)] = ncomp;
          stack.push_back(j);
        }
    }
    ++ncomp;
  }
  for (int c = 1; c < ncomp; ++c) {
    int bi = -1, bj = -1;
    double best = 0.0;
    for (int i = 0; i < n; ++i) {
      if (comp[static_cast<std::size_t>(i)] != 0) continue;
      for (int j = 0; j < n; ++j) {
        if (comp[static_cast<std::size_t>(j)] != c) continue;
        if (bi < 0 || dist(i, j) < best) {
          best = dist(i, j);
          bi = i;
          bj = j;
        }
      }
    }
    const double w = std::exp(-(best * best) / s2);
    a.values(bi, bj) = w;
    a.values(bj, bi) = w;
    for (int j = 0; j < n; ++j)
      if (comp[static_cast<std::size_t>(j)] == c)
        comp[static_cast<std::size_t>(j)] = 0;
  }
  return a;
}

SymmetricMatrix graph_laplacian(const SymmetricMatrix& adj) {
  const int n = adj.size();
  DenseMatrix l = -adj.mat();
  for (int i = 0; i < n; ++i) {
    double s = 0.0;
    for (int j = 0; j < n; ++j)
      if (j != i) s += adj(i, j);
    l(i, i) = s;
  }
  return SymmetricMatrix::exact(l);
}

}  // namespace mmfw
