#include "mmfw/nn.hpp"

#include <cmath>
#include <stdexcept>

namespace mmfw {

namespace {

void require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

DenseMatrix apply_nonlinearity(DenseMatrix m, Nonlinearity f) {
  switch (f) {
    case Nonlinearity::identity:
      return m;
    case Nonlinearity::relu:
      return m.cwiseMax(0.0);
    case Nonlinearity::sigmoid:
      return m.unaryExpr([](double v) { return 1.0 / (1.0 + std::exp(-v)); });
    case Nonlinearity::tanh_fn:
      return m.unaryExpr([](double v) { return std::tanh(v); });
  }
  return m;
}

// yhat[:, j] = sum_i g_ij .* chat[:, i]
DenseMatrix apply_filter(const SpectralFilter& g, const DenseMatrix& chat) {
  DenseMatrix out = DenseMatrix::Zero(chat.rows(), g.out_channels);
  for (int i = 0; i < g.in_channels; ++i)
    for (int j = 0; j < g.out_channels; ++j)
      out.col(j).array() += g.diag.col(g.column(i, j)).array() * chat.col(i).array();
  return out;
}

// d_chat = sum_j g_ij .* d_yhat[:, j]; dg_ij += d_yhat[:, j] .* chat[:, i]
DenseMatrix filter_backward(const SpectralFilter& g, const DenseMatrix& chat,
                            const DenseMatrix& d_yhat, DenseMatrix& d_diag) {
  DenseMatrix d_chat = DenseMatrix::Zero(chat.rows(), g.in_channels);
  for (int i = 0; i < g.in_channels; ++i)
    for (int j = 0; j < g.out_channels; ++j) {
      const Eigen::Index c = g.column(i, j);
      d_diag.col(c).array() += d_yhat.col(j).array() * chat.col(i).array();
      d_chat.col(i).array() += g.diag.col(c).array() * d_yhat.col(j).array();
    }
  return d_chat;
}

DenseMatrix sigmoid(const DenseMatrix& m) {
  return m.unaryExpr([](double v) { return 1.0 / (1.0 + std::exp(-v)); });
}

}  // namespace

TransformEngine::TransformEngine(const WaveletBasis& basis, bool dense_path)
    : n_(basis.n), dense_(dense_path) {
  if (dense_) {
    dense_w_ = basis.basis.densify();
  } else {
    entries_ = basis.basis.entries();
  }
}

// Both kernels run on transposed (channel-major) scratch so the per-entry
// update touches a contiguous span. The dense control walks every (i, j)
// cell in the same row-major order the sorted COO entries follow, so the
// two paths accumulate in the same order and agree bitwise.

DenseMatrix TransformEngine::forward(const DenseMatrix& x) const {
  require(static_cast<int>(x.rows()) == n_,
          "neural-forecast: transform input row mismatch");
  DenseMatrix xt = x.transpose();
  DenseMatrix yt = DenseMatrix::Zero(x.cols(), n_);
  if (dense_) {
    for (int i = 0; i < n_; ++i) {
      const auto xi = xt.col(i);
      for (int j = 0; j < n_; ++j) yt.col(j) += dense_w_(i, j) * xi;
    }
  } else {
    for (const CooEntry& e : entries_) yt.col(e.col) += e.value * xt.col(e.row);
  }
  return yt.transpose();
}

DenseMatrix TransformEngine::inverse(const DenseMatrix& y) const {
  require(static_cast<int>(y.rows()) == n_,
          "neural-forecast: transform input row mismatch");
  DenseMatrix yt = y.transpose();
  DenseMatrix xt = DenseMatrix::Zero(y.cols(), n_);
  if (dense_) {
    for (int i = 0; i < n_; ++i) {
      auto xi = xt.col(i);
      for (int j = 0; j < n_; ++j) xi += dense_w_(i, j) * yt.col(j);
    }
  } else {
    for (const CooEntry& e : entries_) xt.col(e.row) += e.value * yt.col(e.col);
  }
  return xt.transpose();
}

SpectralFilter SpectralFilter::zeros(int n, int in_channels, int out_channels) {
  SpectralFilter f;
  f.n = n;
  f.in_channels = in_channels;
  f.out_channels = out_channels;
  f.diag = DenseMatrix::Zero(n, static_cast<Eigen::Index>(in_channels) * out_channels);
  return f;
}

DenseMatrix wavelet_conv(const WaveletBasis& w, const DenseMatrix& input,
                         const SpectralFilter& filter,
                         Nonlinearity nonlinearity) {
  require(filter.in_channels == static_cast<int>(input.cols()),
          "neural-forecast: wavelet_conv channel mismatch");
  require(filter.n == w.n && static_cast<int>(input.rows()) == w.n,
          "neural-forecast: wavelet_conv dimension mismatch");
  TransformEngine eng(w, false);
  DenseMatrix chat = eng.forward(input);
  DenseMatrix yhat = apply_filter(filter, chat);
  return apply_nonlinearity(eng.inverse(yhat), nonlinearity);
}

DenseMatrix diffusion_conv(const DenseMatrix& a_tilde, const DenseMatrix& input,
                           const DiffusionFilter& filter) {
  require(a_tilde.rows() == a_tilde.cols() && a_tilde.rows() == input.rows(),
          "neural-forecast: diffusion_conv dimension mismatch");
  require(filter.steps >= 1 && filter.theta.size() == filter.steps,
          "neural-forecast: diffusion filter must define K coefficients");
  DenseMatrix power = input;
  DenseMatrix out = filter.theta(0) * input;
  for (int k = 1; k < filter.steps; ++k) {
    power = a_tilde * power;
    out += filter.theta(k) * power;
  }
  return out;
}

DenseMatrix gate_forward(const TransformEngine& eng, const GateParams& gate,
                         const DenseMatrix& input, GateTape* tape) {
  DenseMatrix chat1 = eng.forward(input);
  DenseMatrix z1 = eng.inverse(apply_filter(gate.stage1, chat1));
  DenseMatrix chat2 = eng.forward(z1);
  DenseMatrix pre = eng.inverse(apply_filter(gate.stage2, chat2));
  for (Eigen::Index j = 0; j < pre.cols(); ++j)
    pre.col(j).array() += gate.bias(j, 0);
  if (tape) {
    tape->chat1 = std::move(chat1);
    tape->chat2 = std::move(chat2);
  }
  return pre;
}

DenseMatrix gate_backward(const TransformEngine& eng, const GateParams& gate,
                          const GateTape& tape, const DenseMatrix& d_pre,
                          GateGrads& grads) {
  for (Eigen::Index j = 0; j < d_pre.cols(); ++j)
    grads.bias(j, 0) += d_pre.col(j).sum();
  DenseMatrix d_yhat2 = eng.forward(d_pre);
  DenseMatrix d_chat2 =
      filter_backward(gate.stage2, tape.chat2, d_yhat2, grads.stage2);
  DenseMatrix d_z1 = eng.inverse(d_chat2);
  DenseMatrix d_yhat1 = eng.forward(d_z1);
  DenseMatrix d_chat1 =
      filter_backward(gate.stage1, tape.chat1, d_yhat1, grads.stage1);
  return eng.inverse(d_chat1);
}

DenseMatrix wcgru_cell_forward(const TransformEngine& eng,
                               const WcGruParams& params,
                               const DenseMatrix& x_t,
                               const DenseMatrix& h_prev, CellTape* tape) {
  const Eigen::Index n = x_t.rows();
  const Eigen::Index d = x_t.cols();
  const Eigen::Index h = h_prev.cols();
  require(h_prev.rows() == n, "neural-forecast: cell state row mismatch");
  require(static_cast<int>(d + h) == params.input_channels + params.hidden &&
              static_cast<int>(h) == params.hidden,
          "neural-forecast: cell shape mismatch");

  DenseMatrix in_rh(n, d + h);
  in_rh.leftCols(d) = x_t;
  in_rh.rightCols(h) = h_prev;

  GateTape tr, tu, tc;
  DenseMatrix r = sigmoid(gate_forward(eng, params.reset, in_rh, tape ? &tr : nullptr));
  DenseMatrix u = sigmoid(gate_forward(eng, params.update, in_rh, tape ? &tu : nullptr));

  DenseMatrix in_c(n, d + h);
  in_c.leftCols(d) = x_t;
  in_c.rightCols(h) = r.array() * h_prev.array();
  DenseMatrix c =
      gate_forward(eng, params.cand, in_c, tape ? &tc : nullptr)
          .unaryExpr([](double v) { return std::tanh(v); });

  DenseMatrix h_t =
      (u.array() * h_prev.array() + (1.0 - u.array()) * c.array()).matrix();
  if (tape) {
    tape->reset = std::move(tr);
    tape->update = std::move(tu);
    tape->cand = std::move(tc);
    tape->r = std::move(r);
    tape->u = std::move(u);
    tape->c = std::move(c);
    tape->h_prev = h_prev;
  }
  return h_t;
}

CellBackwardResult wcgru_cell_backward(const TransformEngine& eng,
                                       const WcGruParams& params,
                                       const CellTape& tape,
                                       const DenseMatrix& d_h,
                                       WcGruGrads& grads) {
  const Eigen::Index n = d_h.rows();
  const Eigen::Index h = d_h.cols();
  const Eigen::Index d = params.input_channels;

  DenseMatrix d_h_prev = (d_h.array() * tape.u.array()).matrix();
  DenseMatrix d_u =
      (d_h.array() * (tape.h_prev.array() - tape.c.array())).matrix();
  DenseMatrix d_c = (d_h.array() * (1.0 - tape.u.array())).matrix();

  DenseMatrix d_pre_c =
      (d_c.array() * (1.0 - tape.c.array().square())).matrix();
  DenseMatrix d_in_c = gate_backward(eng, params.cand, tape.cand, d_pre_c,
                                     grads.cand);
  DenseMatrix d_x = d_in_c.leftCols(d);
  DenseMatrix d_rh = d_in_c.rightCols(h);
  DenseMatrix d_r = (d_rh.array() * tape.h_prev.array()).matrix();
  d_h_prev.array() += d_rh.array() * tape.r.array();

  DenseMatrix d_pre_r =
      (d_r.array() * tape.r.array() * (1.0 - tape.r.array())).matrix();
  DenseMatrix d_in_r =
      gate_backward(eng, params.reset, tape.reset, d_pre_r, grads.reset);
  d_x += d_in_r.leftCols(d);
  d_h_prev += d_in_r.rightCols(h);

  DenseMatrix d_pre_u =
      (d_u.array() * tape.u.array() * (1.0 - tape.u.array())).matrix();
  DenseMatrix d_in_u =
      gate_backward(eng, params.update, tape.update, d_pre_u, grads.update);
  d_x += d_in_u.leftCols(d);
  d_h_prev += d_in_u.rightCols(h);

  (void)n;
  return {std::move(d_x), std::move(d_h_prev)};
}

DenseMatrix wcgru_step(const WcGruParams& params, const DenseMatrix& x_t,
                       const DenseMatrix& h_prev, const WaveletBasis& basis) {
  TransformEngine eng(basis, false);
  return wcgru_cell_forward(eng, params, x_t, h_prev, nullptr);
}

}  // namespace mmfw
