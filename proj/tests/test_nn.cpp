#include "mmfw/nn.hpp"

#include "mmfw/mmf.hpp"
#include "test_support.hpp"

#include <doctest.h>

#include <cmath>

using namespace mmfw;

namespace {

WaveletBasis small_basis(int n, int levels, std::uint64_t seed) {
  SymmetricMatrix a = test::knn_laplacian(n, 3, seed);
  FactorizeConfig cfg;
  cfg.levels = levels;
  cfg.order = 2;
  return extract_basis(factorize(a, cfg));
}

SpectralFilter random_filter(int n, int in_ch, int out_ch,
                             std::mt19937_64& rng) {
  SpectralFilter f = SpectralFilter::zeros(n, in_ch, out_ch);
  f.diag = test::random_matrix(n, in_ch * out_ch, rng);
  return f;
}

// Straight-line dense recomputation of the wavelet convolution.
DenseMatrix conv_oracle(const WaveletBasis& w, const DenseMatrix& input,
                        const SpectralFilter& g) {
  DenseMatrix dense = w.basis.densify();
  DenseMatrix out = DenseMatrix::Zero(w.n, g.out_channels);
  for (int j = 0; j < g.out_channels; ++j) {
    Vector acc = Vector::Zero(w.n);
    for (int i = 0; i < g.in_channels; ++i) {
      Vector chat = dense.transpose() * input.col(i);
      acc += (g.diag.col(g.column(i, j)).array() * chat.array()).matrix();
    }
    out.col(j) = dense * acc;
  }
  return out;
}

}  // namespace

TEST_CASE("wavelet_conv with an identity filter is the identity map") {
  WaveletBasis w = small_basis(12, 5, 2);
  std::mt19937_64 rng(81);
  DenseMatrix f = test::random_matrix(12, 1, rng);
  SpectralFilter ones = SpectralFilter::zeros(12, 1, 1);
  ones.diag.setOnes();
  CHECK(test::max_abs_diff(wavelet_conv(w, f, ones), f) <= 1e-10);

  SpectralFilter zero = SpectralFilter::zeros(12, 1, 1);
  CHECK(wavelet_conv(w, f, zero).isZero(0.0));
  CHECK(wavelet_conv(w, f, zero, Nonlinearity::sigmoid)(0, 0) ==
        doctest::Approx(0.5));
}

TEST_CASE("wavelet_conv matches the dense composition oracle") {
  WaveletBasis w = small_basis(10, 4, 3);
  std::mt19937_64 rng(83);
  SpectralFilter g = random_filter(10, 3, 2, rng);
  DenseMatrix input = test::random_matrix(10, 3, rng);
  CHECK(test::max_abs_diff(wavelet_conv(w, input, g),
                           conv_oracle(w, input, g)) <= 1e-10);
  CHECK_THROWS(wavelet_conv(w, test::random_matrix(10, 2, rng), g));
}

TEST_CASE("diffusion_conv follows the power series") {
  std::mt19937_64 rng(87);
  AdjacencyMatrix adj = knn_graph(6, 2, 12);
  DenseMatrix at = row_normalize(adj);
  DenseMatrix x = test::random_matrix(6, 2, rng);

  DiffusionFilter k1{1, Vector::Constant(1, 0.7)};
  CHECK(test::max_abs_diff(diffusion_conv(at, x, k1), 0.7 * x) == 0.0);

  DiffusionFilter k3{3, Vector::Zero(3)};
  k3.theta << 0.5, -0.25, 0.125;
  DenseMatrix eye = DenseMatrix::Identity(6, 6);
  CHECK(test::max_abs_diff(diffusion_conv(eye, x, k3),
                           (0.5 - 0.25 + 0.125) * x) <= 1e-15);

  DenseMatrix oracle = 0.5 * x - 0.25 * at * x + 0.125 * at * at * x;
  CHECK(test::max_abs_diff(diffusion_conv(at, x, k3), oracle) <= 1e-10);

  // linearity
  DenseMatrix y = test::random_matrix(6, 2, rng);
  DenseMatrix lhs = diffusion_conv(at, 2.0 * x + 3.0 * y, k3);
  DenseMatrix rhs =
      2.0 * diffusion_conv(at, x, k3) + 3.0 * diffusion_conv(at, y, k3);
  CHECK(test::max_abs_diff(lhs, rhs) <= 1e-10);
}

TEST_CASE("transform engine dense path is bitwise equal to sparse") {
  WaveletBasis w = small_basis(16, 8, 5);
  TransformEngine sparse(w, false);
  TransformEngine dense(w, true);
  std::mt19937_64 rng(89);
  DenseMatrix x = test::random_matrix(16, 5, rng);
  CHECK(sparse.forward(x) == dense.forward(x));
  CHECK(sparse.inverse(x) == dense.inverse(x));
}

namespace {

WcGruParams random_cell(int n, int input, int hidden, std::mt19937_64& rng) {
  WcGruParams p;
  p.input_channels = input;
  p.hidden = hidden;
  auto gate = [&]() {
    GateParams g;
    g.stage1 = random_filter(n, input + hidden, hidden, rng);
    g.stage2 = random_filter(n, hidden, hidden, rng);
    g.bias = test::random_matrix(hidden, 1, rng);
    return g;
  };
  p.reset = gate();
  p.update = gate();
  p.cand = gate();
  return p;
}

// Dense, tape-free recomputation of one GRU step.
DenseMatrix cell_oracle(const WaveletBasis& w, const WcGruParams& p,
                        const DenseMatrix& x, const DenseMatrix& h) {
  auto gate_pre = [&](const GateParams& g, const DenseMatrix& in) {
    DenseMatrix mid = conv_oracle(w, in, g.stage1);
    DenseMatrix pre = conv_oracle(w, mid, g.stage2);
    for (Eigen::Index j = 0; j < pre.cols(); ++j)
      pre.col(j).array() += g.bias(j, 0);
    return pre;
  };
  DenseMatrix in_rh(x.rows(), x.cols() + h.cols());
  in_rh << x, h;
  DenseMatrix r = gate_pre(p.reset, in_rh).unaryExpr(
      [](double v) { return 1.0 / (1.0 + std::exp(-v)); });
  DenseMatrix u = gate_pre(p.update, in_rh).unaryExpr(
      [](double v) { return 1.0 / (1.0 + std::exp(-v)); });
  DenseMatrix in_c(x.rows(), x.cols() + h.cols());
  in_c << x, (r.array() * h.array()).matrix();
  DenseMatrix c = gate_pre(p.cand, in_c).unaryExpr(
      [](double v) { return std::tanh(v); });
  return (u.array() * h.array() + (1.0 - u.array()) * c.array()).matrix();
}

}  // namespace

TEST_CASE("wcgru_step with zero parameters halves the state") {
  WaveletBasis w = small_basis(8, 3, 6);
  WcGruParams p;
  p.input_channels = 1;
  p.hidden = 3;
  auto zero_gate = [&]() {
    GateParams g;
    g.stage1 = SpectralFilter::zeros(8, 4, 3);
    g.stage2 = SpectralFilter::zeros(8, 3, 3);
    g.bias = DenseMatrix::Zero(3, 1);
    return g;
  };
  p.reset = zero_gate();
  p.update = zero_gate();
  p.cand = zero_gate();

  std::mt19937_64 rng(91);
  DenseMatrix x = test::random_matrix(8, 1, rng);
  DenseMatrix h = test::random_matrix(8, 3, rng);
  DenseMatrix ht = wcgru_step(p, x, h, w);
  CHECK(test::max_abs_diff(ht, 0.5 * h) <= 1e-14);
}

TEST_CASE("a saturated update gate freezes the state") {
  WaveletBasis w = small_basis(8, 3, 7);
  std::mt19937_64 rng(93);
  WcGruParams p = random_cell(8, 1, 3, rng);
  p.update.stage1.diag.setZero();
  p.update.stage2.diag.setZero();
  p.update.bias.setConstant(40.0);  // sigmoid(40) == 1 - 4e-18

  DenseMatrix x = test::random_matrix(8, 1, rng);
  DenseMatrix h = test::random_matrix(8, 3, rng);
  CHECK(test::max_abs_diff(wcgru_step(p, x, h, w), h) <= 1e-6);
}

TEST_CASE("wcgru_step matches the dense recomputation oracle") {
  WaveletBasis w = small_basis(6, 2, 8);
  std::mt19937_64 rng(97);
  WcGruParams p = random_cell(6, 1, 4, rng);
  DenseMatrix x = test::random_matrix(6, 1, rng);
  DenseMatrix h = test::random_matrix(6, 4, rng);
  DenseMatrix got = wcgru_step(p, x, h, w);
  CHECK(test::max_abs_diff(got, cell_oracle(w, p, x, h)) <= 1e-10);

  // hull bound: |h_t| <= max(|h_prev|, 1) elementwise
  for (Eigen::Index i = 0; i < got.rows(); ++i)
    for (Eigen::Index j = 0; j < got.cols(); ++j)
      CHECK(std::abs(got(i, j)) <=
            std::max(std::abs(h(i, j)), 1.0) + 1e-15);
}

TEST_CASE("gate_backward leaves dead output channels at exact zero") {
  WaveletBasis w = small_basis(6, 2, 9);
  TransformEngine eng(w, false);
  std::mt19937_64 rng(101);
  GateParams g;
  g.stage1 = random_filter(6, 2, 3, rng);
  g.stage2 = random_filter(6, 3, 3, rng);
  g.bias = test::random_matrix(3, 1, rng);

  GateTape tape;
  DenseMatrix input = test::random_matrix(6, 2, rng);
  gate_forward(eng, g, input, &tape);

  GateGrads grads{DenseMatrix::Zero(6, 6), DenseMatrix::Zero(6, 9),
                  DenseMatrix::Zero(3, 1)};
  DenseMatrix d_pre = test::random_matrix(6, 3, rng);
  d_pre.col(1).setZero();  // output channel 1 unused downstream
  gate_backward(eng, g, tape, d_pre, grads);

  for (int i = 0; i < 3; ++i)
    CHECK(grads.stage2.col(g.stage2.column(i, 1)).isZero(0.0));
  CHECK(grads.bias(1, 0) == 0.0);
}

TEST_CASE("gate_backward matches finite differences") {
  WaveletBasis w = small_basis(5, 2, 10);
  TransformEngine eng(w, false);
  std::mt19937_64 rng(103);
  GateParams g;
  g.stage1 = random_filter(5, 2, 2, rng);
  g.stage2 = random_filter(5, 2, 2, rng);
  g.bias = test::random_matrix(2, 1, rng);
  DenseMatrix input = test::random_matrix(5, 2, rng);
  DenseMatrix weight = test::random_matrix(5, 2, rng);  // loss = <weight, pre>

  GateTape tape;
  gate_forward(eng, g, input, &tape);
  GateGrads grads{DenseMatrix::Zero(5, 4), DenseMatrix::Zero(5, 4),
                  DenseMatrix::Zero(2, 1)};
  DenseMatrix d_input = gate_backward(eng, g, tape, weight, grads);

  const double step = 1e-6;
  auto loss_at = [&]() {
    return (weight.array() * gate_forward(eng, g, input, nullptr).array())
        .sum();
  };
  auto check_tensor = [&](DenseMatrix& tensor, const DenseMatrix& analytic) {
    for (Eigen::Index idx = 0; idx < std::min<Eigen::Index>(tensor.size(), 10);
         ++idx) {
      const double saved = tensor.data()[idx];
      tensor.data()[idx] = saved + step;
      const double up = loss_at();
      tensor.data()[idx] = saved - step;
      const double down = loss_at();
      tensor.data()[idx] = saved;
      const double fd = (up - down) / (2.0 * step);
      CHECK(std::abs(fd - analytic.data()[idx]) <=
            1e-5 * std::max(1.0, std::abs(fd)));
    }
  };
  check_tensor(g.stage1.diag, grads.stage1);
  check_tensor(g.stage2.diag, grads.stage2);
  check_tensor(g.bias, grads.bias);

  // input gradient by finite differences
  for (Eigen::Index idx = 0; idx < 6; ++idx) {
    const double saved = input.data()[idx];
    input.data()[idx] = saved + step;
    const double up = loss_at();
    input.data()[idx] = saved - step;
    const double down = loss_at();
    input.data()[idx] = saved;
    const double fd = (up - down) / (2.0 * step);
    CHECK(std::abs(fd - d_input.data()[idx]) <=
          1e-5 * std::max(1.0, std::abs(fd)));
  }
}
