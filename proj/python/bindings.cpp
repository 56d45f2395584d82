#include "mmfw/evalbench.hpp"
#include "mmfw/graph.hpp"
#include "mmfw/linalg.hpp"
#include "mmfw/mmf.hpp"
#include "mmfw/nn.hpp"
#include "mmfw/wavelets.hpp"

#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <fstream>
#include <sstream>

namespace py = pybind11;
using namespace mmfw;

namespace {

void save_to(const std::string& path,
             const std::function<void(std::ostream&)>& writer) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open file for writing: " + path);
  writer(os);
}

SpectralFilter filter_from_array(const py::array_t<double>& g, int n) {
  if (g.ndim() != 3)
    throw std::invalid_argument("filter must have shape (in, out, n)");
  const int in_ch = static_cast<int>(g.shape(0));
  const int out_ch = static_cast<int>(g.shape(1));
  if (static_cast<int>(g.shape(2)) != n)
    throw std::invalid_argument("filter third axis must equal the basis size");
  SpectralFilter f = SpectralFilter::zeros(n, in_ch, out_ch);
  auto r = g.unchecked<3>();
  for (int i = 0; i < in_ch; ++i)
    for (int j = 0; j < out_ch; ++j)
      for (int v = 0; v < n; ++v) f.diag(v, f.column(i, j)) = r(i, j, v);
  return f;
}

Nonlinearity nonlinearity_from_name(const std::string& name) {
  if (name == "identity") return Nonlinearity::identity;
  if (name == "relu") return Nonlinearity::relu;
  if (name == "sigmoid") return Nonlinearity::sigmoid;
  if (name == "tanh") return Nonlinearity::tanh_fn;
  throw std::invalid_argument("unknown nonlinearity: " + name);
}

}  // namespace

PYBIND11_MODULE(_mmfw, m) {
  m.doc() =
      "Multiresolution matrix factorization, sparse graph wavelets and the "
      "supporting graph utilities";

  py::class_<MmfFactorization>(m, "Factorization")
      .def_property_readonly("n", [](const MmfFactorization& f) { return f.n; })
      .def_property_readonly("order",
                             [](const MmfFactorization& f) { return f.order_k; })
      .def_property_readonly("levels",
                             [](const MmfFactorization& f) { return f.levels(); })
      .def_property_readonly(
          "residual", [](const MmfFactorization& f) { return f.residual; })
      .def_property_readonly(
          "retired", [](const MmfFactorization& f) { return f.retired; })
      .def_property_readonly(
          "core_indices",
          [](const MmfFactorization& f) { return f.h.core_indices; })
      .def("reconstruct",
           [](const MmfFactorization& f) { return reconstruct(f).mat(); })
      .def("save",
           [](const MmfFactorization& f, const std::string& path) {
             save_to(path, [&](std::ostream& os) { write_factorization(os, f); });
           })
      .def("__repr__", [](const MmfFactorization& f) {
        std::ostringstream ss;
        ss << "Factorization(n=" << f.n << ", levels=" << f.levels()
           << ", order=" << f.order_k << ", residual=" << f.residual << ")";
        return ss.str();
      });

  py::class_<WaveletBasis>(m, "WaveletBasis")
      .def_property_readonly("n", [](const WaveletBasis& w) { return w.n; })
      .def_property_readonly("levels",
                             [](const WaveletBasis& w) { return w.levels(); })
      .def_property_readonly(
          "mother_columns",
          [](const WaveletBasis& w) { return w.mother_columns; })
      .def_property_readonly(
          "father_columns",
          [](const WaveletBasis& w) { return w.father_columns; })
      .def_property_readonly(
          "nnz", [](const WaveletBasis& w) { return w.basis.nnz(); })
      .def_property_readonly("density_percent",
                             [](const WaveletBasis& w) {
                               return sparsity_report(w).density_percent;
                             })
      .def("to_dense",
           [](const WaveletBasis& w) { return w.basis.densify(); })
      .def(
          "forward",
          [](const WaveletBasis& w, const DenseMatrix& signal) {
            return wavelet_forward(w, signal).values;
          },
          py::arg("signal"), "W^T f via sparse multiplication")
      .def(
          "inverse",
          [](const WaveletBasis& w, const DenseMatrix& coeffs) {
            return wavelet_inverse(w, WaveletCoefficients{coeffs});
          },
          py::arg("coeffs"), "W c via sparse multiplication")
      .def("save",
           [](const WaveletBasis& w, const std::string& path) {
             save_to(path, [&](std::ostream& os) { write_basis(os, w); });
           })
      .def("__repr__", [](const WaveletBasis& w) {
        std::ostringstream ss;
        ss << "WaveletBasis(n=" << w.n << ", levels=" << w.levels()
           << ", nnz=" << w.basis.nnz() << ")";
        return ss.str();
      });

  m.def(
      "factorize",
      [](const DenseMatrix& a, int levels, int order, int descent_iters,
         double step_size, double step_shrink, std::uint64_t seed) {
        FactorizeConfig cfg;
        cfg.levels = levels;
        cfg.order = order;
        cfg.descent_iters = descent_iters;
        cfg.step_size = step_size;
        cfg.step_shrink = step_shrink;
        cfg.seed = seed;
        return factorize(SymmetricMatrix::exact(a), cfg);
      },
      py::arg("a"), py::arg("levels"), py::arg("order") = 2,
      py::arg("descent_iters") = 50, py::arg("step_size") = 1.0,
      py::arg("step_shrink") = 0.5, py::arg("seed") = 0,
      "Multiresolution factorization of a symmetric matrix");

  m.def("load_factorization", &read_factorization_file, py::arg("path"));

  m.def("extract_basis", &extract_basis, py::arg("factorization"),
        py::arg("drop_tol") = 0.0,
        "Sparse orthonormal wavelet basis of a factorization");
  m.def("load_basis", &read_basis_file, py::arg("path"));

  m.def(
      "wavelet_conv",
      [](const WaveletBasis& w, const DenseMatrix& input,
         const py::array_t<double>& filter, const std::string& nonlinearity) {
        return wavelet_conv(w, input, filter_from_array(filter, w.n),
                            nonlinearity_from_name(nonlinearity));
      },
      py::arg("basis"), py::arg("input"), py::arg("filter"),
      py::arg("nonlinearity") = "identity",
      "Spectral convolution with per-channel-pair diagonal filters of shape "
      "(in, out, n)");

  m.def(
      "diffusion_conv",
      [](const DenseMatrix& a_tilde, const DenseMatrix& input,
         const Vector& theta) {
        DiffusionFilter f{static_cast<int>(theta.size()), theta};
        return diffusion_conv(a_tilde, input, f);
      },
      py::arg("a_tilde"), py::arg("input"), py::arg("theta"),
      "sum_k theta_k A^k input by iterated multiplication");

  m.def(
      "gaussian_adjacency",
      [](const DenseMatrix& dist, double threshold) {
        return gaussian_adjacency(DistanceTable{dist}, threshold).values;
      },
      py::arg("dist"), py::arg("threshold") = kDefaultDistanceThreshold,
      "Thresholded Gaussian kernel adjacency from a distance table");

  m.def(
      "symmetrize",
      [](const DenseMatrix& a) {
        AdjacencyMatrix adj;
        adj.values = a;
        return symmetrize(adj).mat();
      },
      py::arg("a"));

  m.def(
      "row_normalize",
      [](const DenseMatrix& a) {
        AdjacencyMatrix adj;
        adj.values = a;
        return row_normalize(adj);
      },
      py::arg("a"));

  m.def(
      "lle_adjacency",
      [](const DenseMatrix& x, double lambda_a, int max_iters, double tol) {
        LleConfig cfg;
        cfg.lambda_a = lambda_a;
        cfg.max_iters = max_iters;
        cfg.tol = tol;
        return lle_adjacency(x, cfg).values;
      },
      py::arg("x"), py::arg("lambda_a") = kDefaultLambdaA,
      py::arg("max_iters") = 500, py::arg("tol") = 1e-10,
      "Sparse affine-dependency adjacency (rows sum to one, zero diagonal)");

  m.def(
      "metrics",
      [](const DenseMatrix& pred, const DenseMatrix& truth) {
        MetricReport r = metrics(pred, truth);
        py::dict d;
        d["mae"] = r.mae;
        d["rmse"] = r.rmse;
        d["mape"] = r.mape;
        return d;
      },
      py::arg("pred"), py::arg("truth"));

  m.def(
      "knn_graph",
      [](int n, int neighbours, std::uint64_t seed) {
        return knn_graph(n, neighbours, seed).values;
      },
      py::arg("n"), py::arg("neighbours"), py::arg("seed") = 0,
      "Symmetric k-nearest-neighbour graph over seeded random points");

  m.def(
      "graph_laplacian",
      [](const DenseMatrix& a) {
        return graph_laplacian(SymmetricMatrix::exact(a)).mat();
      },
      py::arg("a"));
}
