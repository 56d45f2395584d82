#include "mmfw/model.hpp"

#include "mmfw/rng.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <thread>

namespace mmfw {

namespace {

void require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

void validate_config(const TrainConfig& cfg) {
  require(cfg.lr > 0.0, "neural-forecast: learning rate must be positive");
  require(cfg.lr_decay > 0.0 && cfg.lr_decay <= 1.0,
          "neural-forecast: lr decay must lie in (0, 1]");
  require(cfg.lr_decay_every >= 1, "neural-forecast: lr decay period");
  require(cfg.dropout >= 0.0 && cfg.dropout < 1.0,
          "neural-forecast: dropout must lie in [0, 1)");
  require(cfg.batch >= 1, "neural-forecast: batch size must be positive");
  require(cfg.layers >= 1, "neural-forecast: at least one recurrent layer");
  require(cfg.hidden >= 1, "neural-forecast: hidden size must be positive");
  require(cfg.diffusion_steps_K >= 1,
          "neural-forecast: diffusion steps must be positive");
  require(cfg.sampling_tau > 0.0,
          "neural-forecast: sampling tau must be positive");
  require(cfg.epochs >= 0, "neural-forecast: negative epoch count");
  require(cfg.threads >= 1, "neural-forecast: thread count must be positive");
}

GateParams make_gate(int n, int in_channels, int hidden) {
  GateParams g;
  g.stage1 = SpectralFilter::zeros(n, in_channels + hidden, hidden);
  g.stage2 = SpectralFilter::zeros(n, hidden, hidden);
  g.bias = DenseMatrix::Zero(hidden, 1);
  return g;
}

void init_uniform(DenseMatrix& m, int fan_in, std::mt19937_64& rng) {
  const double r = 1.0 / std::sqrt(static_cast<double>(std::max(fan_in, 1)));
  for (Eigen::Index i = 0; i < m.size(); ++i)
    m.data()[i] = uniform_range(rng, -r, r);
}

void init_gate(GateParams& g, std::mt19937_64& rng) {
  init_uniform(g.stage1.diag, g.stage1.in_channels, rng);
  init_uniform(g.stage2.diag, g.stage2.in_channels, rng);
  init_uniform(g.bias, g.stage1.in_channels, rng);
}

GateGrads zero_gate_grads(const GateParams& g) {
  return {DenseMatrix::Zero(g.stage1.diag.rows(), g.stage1.diag.cols()),
          DenseMatrix::Zero(g.stage2.diag.rows(), g.stage2.diag.cols()),
          DenseMatrix::Zero(g.bias.rows(), g.bias.cols())};
}

}  // namespace

Seq2SeqModel make_model(std::shared_ptr<const WaveletBasis> basis,
                        int input_dim, const TrainConfig& cfg) {
  require(basis != nullptr, "neural-forecast: model needs a wavelet basis");
  require(input_dim >= 1, "neural-forecast: input dimension must be positive");
  validate_config(cfg);

  Seq2SeqModel m;
  m.n = basis->n;
  m.input_dim = input_dim;
  m.config = cfg;
  m.basis = std::move(basis);

  std::mt19937_64 rng(mix_seed(cfg.seed, 0xA1117));
  for (int l = 0; l < cfg.layers; ++l) {
    const int in_ch = l == 0 ? input_dim : cfg.hidden;
    WcGruParams p;
    p.input_channels = in_ch;
    p.hidden = cfg.hidden;
    p.reset = make_gate(m.n, in_ch, cfg.hidden);
    p.update = make_gate(m.n, in_ch, cfg.hidden);
    p.cand = make_gate(m.n, in_ch, cfg.hidden);
    init_gate(p.reset, rng);
    init_gate(p.update, rng);
    init_gate(p.cand, rng);
    m.encoder.push_back(p);
  }
  for (int l = 0; l < cfg.layers; ++l) {
    const int in_ch = l == 0 ? input_dim : cfg.hidden;
    WcGruParams p;
    p.input_channels = in_ch;
    p.hidden = cfg.hidden;
    p.reset = make_gate(m.n, in_ch, cfg.hidden);
    p.update = make_gate(m.n, in_ch, cfg.hidden);
    p.cand = make_gate(m.n, in_ch, cfg.hidden);
    init_gate(p.reset, rng);
    init_gate(p.update, rng);
    init_gate(p.cand, rng);
    m.decoder.push_back(p);
  }
  m.proj_weight = DenseMatrix::Zero(cfg.hidden, 1);
  m.proj_bias = DenseMatrix::Zero(1, 1);
  init_uniform(m.proj_weight, cfg.hidden, rng);
  init_uniform(m.proj_bias, cfg.hidden, rng);
  return m;
}

ModelGrads zero_grads(const Seq2SeqModel& model) {
  ModelGrads g;
  for (const WcGruParams& p : model.encoder)
    g.encoder.push_back({zero_gate_grads(p.reset), zero_gate_grads(p.update),
                         zero_gate_grads(p.cand)});
  for (const WcGruParams& p : model.decoder)
    g.decoder.push_back({zero_gate_grads(p.reset), zero_gate_grads(p.update),
                         zero_gate_grads(p.cand)});
  g.proj_weight = DenseMatrix::Zero(model.proj_weight.rows(), 1);
  g.proj_bias = DenseMatrix::Zero(1, 1);
  return g;
}

namespace {

template <typename Grads, typename Fn>
void walk_gate_grads(Grads& g, const std::string& prefix, Fn&& fn) {
  fn(prefix + ".stage1", g.stage1);
  fn(prefix + ".stage2", g.stage2);
  fn(prefix + ".bias", g.bias);
}

}  // namespace

void visit_params(Seq2SeqModel& model,
                  const std::function<void(const std::string&, DenseMatrix&)>& fn) {
  auto walk = [&](std::vector<WcGruParams>& layers, const std::string& side) {
    for (std::size_t l = 0; l < layers.size(); ++l) {
      const std::string base = side + "." + std::to_string(l);
      fn(base + ".reset.stage1", layers[l].reset.stage1.diag);
      fn(base + ".reset.stage2", layers[l].reset.stage2.diag);
      fn(base + ".reset.bias", layers[l].reset.bias);
      fn(base + ".update.stage1", layers[l].update.stage1.diag);
      fn(base + ".update.stage2", layers[l].update.stage2.diag);
      fn(base + ".update.bias", layers[l].update.bias);
      fn(base + ".cand.stage1", layers[l].cand.stage1.diag);
      fn(base + ".cand.stage2", layers[l].cand.stage2.diag);
      fn(base + ".cand.bias", layers[l].cand.bias);
    }
  };
  walk(model.encoder, "encoder");
  walk(model.decoder, "decoder");
  fn("proj.weight", model.proj_weight);
  fn("proj.bias", model.proj_bias);
}

void visit_params(const Seq2SeqModel& model,
                  const std::function<void(const std::string&, const DenseMatrix&)>& fn) {
  visit_params(const_cast<Seq2SeqModel&>(model),
               [&](const std::string& name, DenseMatrix& m) { fn(name, m); });
}

void visit_grads(ModelGrads& grads, const Seq2SeqModel& model,
                 const std::function<void(const std::string&, DenseMatrix&)>& fn) {
  auto walk = [&](std::vector<WcGruGrads>& layers, const std::string& side) {
    for (std::size_t l = 0; l < layers.size(); ++l) {
      const std::string base = side + "." + std::to_string(l);
      walk_gate_grads(layers[l].reset, base + ".reset", fn);
      walk_gate_grads(layers[l].update, base + ".update", fn);
      walk_gate_grads(layers[l].cand, base + ".cand", fn);
    }
  };
  (void)model;
  walk(grads.encoder, "encoder");
  walk(grads.decoder, "decoder");
  fn("proj.weight", grads.proj_weight);
  fn("proj.bias", grads.proj_bias);
}

void scale_grads(ModelGrads& grads, double factor) {
  auto scale = [&](GateGrads& g) {
    g.stage1 *= factor;
    g.stage2 *= factor;
    g.bias *= factor;
  };
  for (WcGruGrads& l : grads.encoder) {
    scale(l.reset);
    scale(l.update);
    scale(l.cand);
  }
  for (WcGruGrads& l : grads.decoder) {
    scale(l.reset);
    scale(l.update);
    scale(l.cand);
  }
  grads.proj_weight *= factor;
  grads.proj_bias *= factor;
}

void add_grads(ModelGrads& into, const ModelGrads& from) {
  auto add = [&](GateGrads& a, const GateGrads& b) {
    a.stage1 += b.stage1;
    a.stage2 += b.stage2;
    a.bias += b.bias;
  };
  for (std::size_t l = 0; l < into.encoder.size(); ++l) {
    add(into.encoder[l].reset, from.encoder[l].reset);
    add(into.encoder[l].update, from.encoder[l].update);
    add(into.encoder[l].cand, from.encoder[l].cand);
  }
  for (std::size_t l = 0; l < into.decoder.size(); ++l) {
    add(into.decoder[l].reset, from.decoder[l].reset);
    add(into.decoder[l].update, from.decoder[l].update);
    add(into.decoder[l].cand, from.decoder[l].cand);
  }
  into.proj_weight += from.proj_weight;
  into.proj_bias += from.proj_bias;
}

// ---- scheduled sampling ---------------------------------------------------

double scheduled_sampling_probability(long long batch_counter, double tau) {
  require(tau > 0.0, "neural-forecast: sampling tau must be positive");
  const double e = std::exp(static_cast<double>(batch_counter) / tau);
  if (!std::isfinite(e)) return 0.0;
  return tau / (tau + e);
}

bool scheduled_sample(long long batch_counter, double tau,
                      std::mt19937_64& rng) {
  return uniform01(rng) < scheduled_sampling_probability(batch_counter, tau);
}

// ---- forward ---------------------------------------------------------------

ForwardPlan eval_plan() { return {}; }

ForwardPlan training_plan(const Seq2SeqModel& model, int history_len,
                          int horizon, long long batch_counter,
                          std::mt19937_64& rng) {
  ForwardPlan plan;
  plan.training = true;
  const double p = model.config.dropout;
  const int layers = static_cast<int>(model.encoder.size());
  auto masks = [&](int steps) {
    std::vector<std::vector<DenseMatrix>> out;
    if (p == 0.0) return out;
    out.resize(static_cast<std::size_t>(steps));
    for (auto& per_layer : out) {
      per_layer.reserve(static_cast<std::size_t>(layers));
      for (int l = 0; l < layers; ++l) {
        DenseMatrix m(model.n, model.config.hidden);
        for (Eigen::Index i = 0; i < m.size(); ++i)
          m.data()[i] = uniform01(rng) < p ? 0.0 : 1.0 / (1.0 - p);
        per_layer.push_back(std::move(m));
      }
    }
    return out;
  };
  plan.enc_masks = masks(history_len);
  plan.dec_masks = masks(horizon);
  plan.feed_truth.assign(static_cast<std::size_t>(horizon), 0);
  for (int s = 1; s < horizon; ++s)
    plan.feed_truth[static_cast<std::size_t>(s)] =
        scheduled_sample(batch_counter, model.config.sampling_tau, rng) ? 1 : 0;
  return plan;
}

DenseMatrix forward_sample(const Seq2SeqModel& model, const TransformEngine& eng,
                           const DenseMatrix& history, const DenseMatrix* targets,
                           int horizon, const ForwardPlan& plan,
                           SampleTape* tape) {
  const int n = model.n;
  const int layers = static_cast<int>(model.encoder.size());
  const int hist = static_cast<int>(history.rows());
  require(static_cast<int>(history.cols()) == n,
          "neural-forecast: history node-count mismatch");
  require(horizon >= 0, "neural-forecast: negative horizon");
  const bool dropped = plan.training && !plan.enc_masks.empty();

  std::vector<DenseMatrix> h(static_cast<std::size_t>(layers),
                             DenseMatrix::Zero(n, model.config.hidden));
  if (tape) {
    tape->enc.assign(static_cast<std::size_t>(hist),
                     std::vector<CellTape>(static_cast<std::size_t>(layers)));
    tape->dec.assign(static_cast<std::size_t>(horizon),
                     std::vector<CellTape>(static_cast<std::size_t>(layers)));
    tape->dec_top.assign(static_cast<std::size_t>(horizon), DenseMatrix());
  }

  for (int t = 0; t < hist; ++t) {
    DenseMatrix input = history.row(t).transpose();
    for (int l = 0; l < layers; ++l) {
      CellTape* ct = tape ? &tape->enc[static_cast<std::size_t>(t)]
                                      [static_cast<std::size_t>(l)]
                          : nullptr;
      DenseMatrix h_new = wcgru_cell_forward(
          eng, model.encoder[static_cast<std::size_t>(l)], input,
          h[static_cast<std::size_t>(l)], ct);
      input = dropped ? (h_new.array() *
                         plan.enc_masks[static_cast<std::size_t>(t)]
                                       [static_cast<std::size_t>(l)]
                             .array())
                            .matrix()
                      : h_new;
      h[static_cast<std::size_t>(l)] = std::move(h_new);
    }
  }

  DenseMatrix predictions(horizon, n);
  DenseMatrix prev_pred = DenseMatrix::Zero(n, 1);
  const bool dec_dropped = plan.training && !plan.dec_masks.empty();
  for (int s = 0; s < horizon; ++s) {
    DenseMatrix input;
    if (s == 0) {
      input = DenseMatrix::Zero(n, model.input_dim);
    } else if (s < static_cast<int>(plan.feed_truth.size()) &&
               plan.feed_truth[static_cast<std::size_t>(s)] && targets) {
      input = targets->row(s - 1).transpose();
    } else {
      input = prev_pred;
    }
    for (int l = 0; l < layers; ++l) {
      CellTape* ct = tape ? &tape->dec[static_cast<std::size_t>(s)]
                                      [static_cast<std::size_t>(l)]
                          : nullptr;
      DenseMatrix h_new = wcgru_cell_forward(
          eng, model.decoder[static_cast<std::size_t>(l)], input,
          h[static_cast<std::size_t>(l)], ct);
      input = dec_dropped ? (h_new.array() *
                             plan.dec_masks[static_cast<std::size_t>(s)]
                                           [static_cast<std::size_t>(l)]
                                 .array())
                                .matrix()
                          : h_new;
      h[static_cast<std::size_t>(l)] = std::move(h_new);
    }
    DenseMatrix pred = input * model.proj_weight;
    pred.array() += model.proj_bias(0, 0);
    predictions.row(s) = pred.transpose();
    if (tape) tape->dec_top[static_cast<std::size_t>(s)] = std::move(input);
    prev_pred = std::move(pred);
  }
  if (tape) tape->predictions = predictions;
  return predictions;
}

DenseMatrix forward(const Seq2SeqModel& model, const DenseMatrix& history,
                    int horizon_len) {
  TransformEngine eng(*model.basis, model.config.dense_path);
  ForwardPlan plan = eval_plan();
  return forward_sample(model, eng, history, nullptr, horizon_len, plan,
                        nullptr);
}

double mae_loss(const DenseMatrix& pred, const DenseMatrix& truth) {
  require(pred.rows() == truth.rows() && pred.cols() == truth.cols(),
          "neural-forecast: loss shape mismatch");
  if (pred.size() == 0) return 0.0;
  return (pred - truth).cwiseAbs().sum() / static_cast<double>(pred.size());
}

namespace {

inline double sign_of(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

}  // namespace

void backward_sample(const Seq2SeqModel& model, const TransformEngine& eng,
                     const ForwardPlan& plan, const SampleTape& tape,
                     const DenseMatrix& targets, ModelGrads& grads) {
  const int n = model.n;
  const int layers = static_cast<int>(model.decoder.size());
  const int horizon = static_cast<int>(tape.predictions.rows());
  require(targets.rows() == horizon && static_cast<int>(targets.cols()) == n,
          "neural-forecast: target shape mismatch");
  if (horizon == 0) return;
  const double denom = static_cast<double>(horizon) * n;
  const bool dec_dropped = plan.training && !plan.dec_masks.empty();
  const bool enc_dropped = plan.training && !plan.enc_masks.empty();

  std::vector<DenseMatrix> dh(static_cast<std::size_t>(layers),
                              DenseMatrix::Zero(n, model.config.hidden));
  DenseMatrix d_next_input;  // set when step s+1 consumed prediction s

  for (int s = horizon - 1; s >= 0; --s) {
    DenseMatrix d_pred(n, 1);
    for (int i = 0; i < n; ++i)
      d_pred(i, 0) =
          sign_of(tape.predictions(s, i) - targets(s, i)) / denom;
    if (d_next_input.size() != 0) d_pred += d_next_input;
    d_next_input.resize(0, 0);

    const DenseMatrix& top = tape.dec_top[static_cast<std::size_t>(s)];
    grads.proj_weight += top.transpose() * d_pred;
    grads.proj_bias(0, 0) += d_pred.sum();
    DenseMatrix d_vert = d_pred * model.proj_weight.transpose();  // n x hidden

    for (int l = layers - 1; l >= 0; --l) {
      DenseMatrix d_h_total = dh[static_cast<std::size_t>(l)];
      if (dec_dropped)
        d_h_total.array() += d_vert.array() *
                             plan.dec_masks[static_cast<std::size_t>(s)]
                                           [static_cast<std::size_t>(l)]
                                 .array();
      else
        d_h_total += d_vert;
      CellBackwardResult res = wcgru_cell_backward(
          eng, model.decoder[static_cast<std::size_t>(l)],
          tape.dec[static_cast<std::size_t>(s)][static_cast<std::size_t>(l)],
          d_h_total, grads.decoder[static_cast<std::size_t>(l)]);
      dh[static_cast<std::size_t>(l)] = std::move(res.d_h_prev);
      d_vert = std::move(res.d_x);
    }
    // d_vert now holds the gradient with respect to this step's input.
    if (s >= 1 && !(s < static_cast<int>(plan.feed_truth.size()) &&
                    plan.feed_truth[static_cast<std::size_t>(s)]))
      d_next_input = std::move(d_vert);
  }

  const int hist = static_cast<int>(tape.enc.size());
  for (int t = hist - 1; t >= 0; --t) {
    DenseMatrix d_vert;  // empty for the top layer
    for (int l = layers - 1; l >= 0; --l) {
      DenseMatrix d_h_total = dh[static_cast<std::size_t>(l)];
      if (d_vert.size() != 0) {
        if (enc_dropped)
          d_h_total.array() += d_vert.array() *
                               plan.enc_masks[static_cast<std::size_t>(t)]
                                             [static_cast<std::size_t>(l)]
                                   .array();
        else
          d_h_total += d_vert;
      }
      CellBackwardResult res = wcgru_cell_backward(
          eng, model.encoder[static_cast<std::size_t>(l)],
          tape.enc[static_cast<std::size_t>(t)][static_cast<std::size_t>(l)],
          d_h_total, grads.encoder[static_cast<std::size_t>(l)]);
      dh[static_cast<std::size_t>(l)] = std::move(res.d_h_prev);
      d_vert = std::move(res.d_x);  // feeds layer below, discarded at l = 0
    }
  }
}

// ---- training ---------------------------------------------------------------

std::vector<ForecastWindow> split_windows(const ForecastDataset& ds,
                                          const SplitRange& range) {
  std::vector<ForecastWindow> out;
  const int first = range.begin + ds.history_len - 1;
  const int last = range.end - ds.horizon - 1;
  for (int t = first; t <= last; ++t) out.push_back({t});
  return out;
}

namespace {

DenseMatrix window_history(const ForecastDataset& ds, const ForecastWindow& w) {
  return ds.series.middleRows(w.origin - ds.history_len + 1, ds.history_len);
}

DenseMatrix window_targets(const ForecastDataset& ds, const ForecastWindow& w) {
  return ds.series.middleRows(w.origin + 1, ds.horizon);
}

struct Adam {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  long long t = 0;
  std::vector<DenseMatrix> m, v;

  void init(Seq2SeqModel& model) {
    visit_params(model, [&](const std::string&, DenseMatrix& p) {
      m.push_back(DenseMatrix::Zero(p.rows(), p.cols()));
      v.push_back(DenseMatrix::Zero(p.rows(), p.cols()));
    });
  }

  void step(Seq2SeqModel& model, ModelGrads& grads, double lr) {
    std::vector<DenseMatrix*> gs;
    visit_grads(grads, model,
                [&](const std::string&, DenseMatrix& g) { gs.push_back(&g); });
    ++t;
    const double c1 = 1.0 - std::pow(beta1, static_cast<double>(t));
    const double c2 = 1.0 - std::pow(beta2, static_cast<double>(t));
    std::size_t i = 0;
    visit_params(model, [&](const std::string&, DenseMatrix& p) {
      const DenseMatrix& g = *gs[i];
      m[i] = beta1 * m[i] + (1.0 - beta1) * g;
      v[i] = (beta2 * v[i]).eval();
      v[i].array() += (1.0 - beta2) * g.array().square();
      p.array() -= lr * (m[i].array() / c1) /
                   ((v[i].array() / c2).sqrt() + eps);
      ++i;
    });
  }
};

}  // namespace

MetricReport evaluate_split(const Seq2SeqModel& model,
                            const TransformEngine& eng,
                            const ForecastDataset& ds,
                            const SplitRange& range) {
  std::vector<ForecastWindow> windows = split_windows(ds, range);
  require(!windows.empty(), "neural-forecast: split has no complete window");
  const int horizon = ds.horizon;
  DenseMatrix pred(static_cast<Eigen::Index>(windows.size()) * horizon,
                   ds.nodes());
  DenseMatrix truth(pred.rows(), pred.cols());
  ForwardPlan plan = eval_plan();
  Eigen::Index row = 0;
  for (const ForecastWindow& w : windows) {
    DenseMatrix p = forward_sample(model, eng, window_history(ds, w), nullptr,
                                   horizon, plan, nullptr);
    pred.middleRows(row, horizon) = ds.denormalize(p);
    truth.middleRows(row, horizon) = ds.denormalize(window_targets(ds, w));
    row += horizon;
  }
  MetricReport rep = metrics(pred, truth);
  rep.horizon = horizon;
  rep.n_samples = static_cast<long long>(windows.size());
  return rep;
}

std::vector<EpochLogRow> train(Seq2SeqModel& model, const ForecastDataset& ds,
                               const TrainConfig& cfg) {
  validate_config(cfg);
  require(ds.nodes() == model.n, "neural-forecast: dataset/model node mismatch");
  require(cfg.hidden == model.config.hidden && cfg.layers == model.config.layers,
          "neural-forecast: train config does not match the model architecture");
  model.config = cfg;
  TransformEngine eng(*model.basis, cfg.dense_path);

  std::vector<ForecastWindow> windows = split_windows(ds, ds.train);
  require(!windows.empty(), "neural-forecast: no training windows");

  Adam adam;
  adam.init(model);
  std::mt19937_64 shuffle_rng(mix_seed(cfg.seed, 0x5F0FULL));
  std::vector<EpochLogRow> log;
  long long batch_counter = 0;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const double lr =
        cfg.lr * std::pow(cfg.lr_decay, epoch / cfg.lr_decay_every);

    // Fisher-Yates with the project RNG so shuffles are reproducible.
    for (std::size_t i = windows.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(shuffle_rng() % i);
      std::swap(windows[i - 1], windows[j]);
    }

    double epoch_loss = 0.0;
    long long seen = 0;
    for (std::size_t start = 0; start < windows.size();
         start += static_cast<std::size_t>(cfg.batch)) {
      const std::size_t stop =
          std::min(windows.size(), start + static_cast<std::size_t>(cfg.batch));
      const int batch_size = static_cast<int>(stop - start);
      ModelGrads grads = zero_grads(model);
      std::vector<double> losses(static_cast<std::size_t>(batch_size), 0.0);

      auto run_sample = [&](int bi, ModelGrads& sink) {
        const ForecastWindow& w = windows[start + static_cast<std::size_t>(bi)];
        std::mt19937_64 sample_rng(mix_seed(
            cfg.seed ^ 0x7A53u,
            (static_cast<std::uint64_t>(epoch) << 32) +
                static_cast<std::uint64_t>(start + static_cast<std::size_t>(bi))));
        ForwardPlan plan = training_plan(model, ds.history_len, ds.horizon,
                                         batch_counter, sample_rng);
        SampleTape tape;
        DenseMatrix targets = window_targets(ds, w);
        DenseMatrix pred = forward_sample(model, eng, window_history(ds, w),
                                          &targets, ds.horizon, plan, &tape);
        losses[static_cast<std::size_t>(bi)] = mae_loss(pred, targets);
        backward_sample(model, eng, plan, tape, targets, sink);
      };

      if (cfg.threads <= 1 || batch_size == 1) {
        for (int bi = 0; bi < batch_size; ++bi) run_sample(bi, grads);
      } else {
        const int nthreads = std::min(cfg.threads, batch_size);
        std::vector<ModelGrads> partial;
        partial.reserve(static_cast<std::size_t>(nthreads));
        for (int i = 0; i < nthreads; ++i) partial.push_back(zero_grads(model));
        std::vector<std::thread> pool;
        for (int ti = 0; ti < nthreads; ++ti) {
          pool.emplace_back([&, ti]() {
            for (int bi = ti; bi < batch_size; bi += nthreads)
              run_sample(bi, partial[static_cast<std::size_t>(ti)]);
          });
        }
        for (std::thread& th : pool) th.join();
        for (ModelGrads& p : partial) add_grads(grads, p);
      }

      double batch_loss = 0.0;
      for (double l : losses) batch_loss += l;
      if (!std::isfinite(batch_loss))
        throw std::runtime_error(
            "neural-forecast: training diverged (non-finite loss)");
      epoch_loss += batch_loss;
      seen += batch_size;
      scale_grads(grads, 1.0 / batch_size);
      adam.step(model, grads, lr);
      ++batch_counter;
    }

    const auto t1 = std::chrono::steady_clock::now();
    const double seconds =
        std::chrono::duration<double>(t1 - t0).count();

    if (cfg.eval_each_epoch) {
      MetricReport train_rep = evaluate_split(model, eng, ds, ds.train);
      log.push_back({epoch, "train", train_rep.mae, train_rep.rmse,
                     train_rep.mape, seconds});
      if (ds.validation.length() > ds.history_len + ds.horizon) {
        MetricReport val_rep = evaluate_split(model, eng, ds, ds.validation);
        log.push_back({epoch, "val", val_rep.mae, val_rep.rmse, val_rep.mape,
                       seconds});
      }
    } else {
      const double nan = std::numeric_limits<double>::quiet_NaN();
      log.push_back({epoch, "train",
                     epoch_loss / static_cast<double>(std::max(seen, 1LL)),
                     nan, nan, seconds});
    }
  }
  return log;
}

void write_metrics_csv(std::ostream& os, const std::vector<EpochLogRow>& rows) {
  os << "epoch,split,mae,rmse,mape,seconds\n";
  for (const EpochLogRow& r : rows)
    os << r.epoch << ',' << r.split << ',' << format_double(r.mae) << ','
       << format_double(r.rmse) << ',' << format_double(r.mape) << ','
       << format_double(r.seconds) << '\n';
}

// ---- checkpoint ---------------------------------------------------------------

void save_checkpoint(std::ostream& os, const Seq2SeqModel& model) {
  os << "WCGRU 1\n";
  os << "n " << model.n << " input " << model.input_dim << " hidden "
     << model.config.hidden << " layers " << model.config.layers << '\n';
  visit_params(model, [&](const std::string& name, const DenseMatrix& p) {
    os << "PARAM " << name << ' ' << p.rows() << ' ' << p.cols() << '\n';
    for (Eigen::Index r = 0; r < p.rows(); ++r)
      for (Eigen::Index c = 0; c < p.cols(); ++c)
        os << format_double(p(r, c)) << (c + 1 < p.cols() ? ' ' : '\n');
  });
  os << "END\n";
}

Seq2SeqModel load_checkpoint(std::istream& is,
                             std::shared_ptr<const WaveletBasis> basis) {
  auto fail = [](const std::string& msg) -> void {
    throw std::runtime_error("neural-forecast: " + msg);
  };
  std::string tag;
  int version = 0;
  if (!(is >> tag >> version) || tag != "WCGRU" || version != 1)
    fail("unrecognized checkpoint header");
  std::string kn, ki, kh, kl;
  int n = 0, input = 0, hidden = 0, layers = 0;
  if (!(is >> kn >> n >> ki >> input >> kh >> hidden >> kl >> layers) ||
      kn != "n" || ki != "input" || kh != "hidden" || kl != "layers")
    fail("malformed checkpoint shape line");
  if (basis && basis->n != n) fail("checkpoint/basis dimension mismatch");

  TrainConfig cfg;
  cfg.hidden = hidden;
  cfg.layers = layers;
  Seq2SeqModel model = make_model(std::move(basis), input, cfg);

  visit_params(model, [&](const std::string& name, DenseMatrix& p) {
    std::string ptag, pname;
    Eigen::Index rows = 0, cols = 0;
    if (!(is >> ptag >> pname >> rows >> cols) || ptag != "PARAM")
      fail("truncated checkpoint");
    if (pname != name) fail("unexpected checkpoint parameter " + pname);
    if (rows != p.rows() || cols != p.cols())
      fail("checkpoint parameter shape mismatch for " + pname);
    for (Eigen::Index r = 0; r < rows; ++r)
      for (Eigen::Index c = 0; c < cols; ++c)
        if (!(is >> p(r, c))) fail("truncated checkpoint values");
  });
  if (!(is >> tag) || tag != "END") fail("missing checkpoint terminator");
  return model;
}

Seq2SeqModel load_checkpoint_file(const std::string& path,
                                  std::shared_ptr<const WaveletBasis> basis) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open file: " + path);
  return load_checkpoint(f, std::move(basis));
}

}  // namespace mmfw
