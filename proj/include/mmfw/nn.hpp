#ifndef MMFW_NN_HPP
#define MMFW_NN_HPP

#include "mmfw/linalg.hpp"
#include "mmfw/wavelets.hpp"

#include <vector>

namespace mmfw {

/// Wavelet transform pair behind the convolution. The dense path stores the
/// densified basis but runs the same scalar kernel in the same order, so the
/// two paths produce bitwise-identical results; only the work differs.
class TransformEngine {
 public:
  TransformEngine() = default;
  explicit TransformEngine(const WaveletBasis& basis, bool dense_path = false);

  DenseMatrix forward(const DenseMatrix& x) const;   // W^T x
  DenseMatrix inverse(const DenseMatrix& y) const;   // W y
  bool dense_path() const { return dense_; }
  int n() const { return n_; }

 private:
  int n_ = 0;
  bool dense_ = false;
  std::vector<CooEntry> entries_;  // row-major sorted
  DenseMatrix dense_w_;
};

/// Per channel pair, the diagonal of a spectral-domain filter.
struct SpectralFilter {
  int in_channels = 0;
  int out_channels = 0;
  int n = 0;
  DenseMatrix diag;  // n x (in_channels * out_channels)

  static SpectralFilter zeros(int n, int in_channels, int out_channels);
  Eigen::Index column(int in_ch, int out_ch) const {
    return static_cast<Eigen::Index>(in_ch) * out_channels + out_ch;
  }
};

enum class Nonlinearity { identity, relu, sigmoid, tanh_fn };

// out[:, j] = sigma(W sum_i g_ij  W^T in[:, i]); transforms run sparse.
DenseMatrix wavelet_conv(const WaveletBasis& w, const DenseMatrix& input,
                         const SpectralFilter& filter,
                         Nonlinearity nonlinearity = Nonlinearity::identity);

struct DiffusionFilter {
  int steps = 1;       // K
  Vector theta;        // K coefficients
};

// sum_k theta_k Atilde^k input, built by iterated multiplication.
DenseMatrix diffusion_conv(const DenseMatrix& a_tilde,
                           const DenseMatrix& input,
                           const DiffusionFilter& filter);

// ---- differentiable gate convolution (two chained spectral stages) -----

struct GateParams {
  SpectralFilter stage1;  // (in + hidden) -> hidden
  SpectralFilter stage2;  // hidden -> hidden
  DenseMatrix bias;       // hidden x 1
};

struct GateGrads {
  DenseMatrix stage1, stage2, bias;
};

struct GateTape {
  DenseMatrix chat1;  // W^T of the gate input
  DenseMatrix chat2;  // W^T of the mid activation
};

DenseMatrix gate_forward(const TransformEngine& eng, const GateParams& gate,
                         const DenseMatrix& input, GateTape* tape);
// d_pre is the gradient at the gate pre-activation; returns the gradient
// with respect to the gate input and accumulates parameter gradients.
DenseMatrix gate_backward(const TransformEngine& eng, const GateParams& gate,
                          const GateTape& tape, const DenseMatrix& d_pre,
                          GateGrads& grads);

// ---- GRU cell -----------------------------------------------------------

struct WcGruParams {
  GateParams reset, update, cand;
  int input_channels = 0;
  int hidden = 0;
};

struct WcGruGrads {
  GateGrads reset, update, cand;
};

struct CellTape {
  GateTape reset, update, cand;
  DenseMatrix r, u, c, h_prev;
};

// r = sig(WC([x,h]) + b); u = sig(WC_u([x,h]) + b_u);
// C = tanh(WC_c([x, r.h]) + b_c); h = u.h + (1-u).C
DenseMatrix wcgru_cell_forward(const TransformEngine& eng,
                               const WcGruParams& params,
                               const DenseMatrix& x_t,
                               const DenseMatrix& h_prev, CellTape* tape);

struct CellBackwardResult {
  DenseMatrix d_x;
  DenseMatrix d_h_prev;
};

CellBackwardResult wcgru_cell_backward(const TransformEngine& eng,
                                       const WcGruParams& params,
                                       const CellTape& tape,
                                       const DenseMatrix& d_h,
                                       WcGruGrads& grads);

// Convenience single-step surface over a basis (sparse path, no tape).
DenseMatrix wcgru_step(const WcGruParams& params, const DenseMatrix& x_t,
                       const DenseMatrix& h_prev, const WaveletBasis& basis);

}  // namespace mmfw

#endif  // MMFW_NN_HPP
