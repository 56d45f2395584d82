#ifndef MMFW_MODEL_HPP
#define MMFW_MODEL_HPP

#include "mmfw/evalbench.hpp"
#include "mmfw/graph.hpp"
#include "mmfw/nn.hpp"

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <random>
#include <string>
#include <vector>

namespace mmfw {

struct TrainConfig {
  double lr = 1e-2;
  double lr_decay = 0.1;
  int lr_decay_every = 20;
  double dropout = 0.1;
  int batch = 64;
  int layers = 2;
  int hidden = 64;
  int diffusion_steps_K = 2;
  double sampling_tau = 2000.0;
  int epochs = 0;
  std::uint64_t seed = 0;
  int threads = 1;
  bool dense_path = false;  // densified-basis control, same math
  // When false, epochs log the running normalized training loss instead of
  // a full evaluation pass (benchmark mode).
  bool eval_each_epoch = true;
};

struct Seq2SeqModel {
  int n = 0;
  int input_dim = 1;
  TrainConfig config;
  std::shared_ptr<const WaveletBasis> basis;
  std::vector<WcGruParams> encoder;  // one per stacked layer
  std::vector<WcGruParams> decoder;
  DenseMatrix proj_weight;           // hidden x 1, shared across nodes
  DenseMatrix proj_bias;             // 1 x 1
};

struct ModelGrads {
  std::vector<WcGruGrads> encoder, decoder;
  DenseMatrix proj_weight, proj_bias;
};

Seq2SeqModel make_model(std::shared_ptr<const WaveletBasis> basis,
                        int input_dim, const TrainConfig& cfg);
ModelGrads zero_grads(const Seq2SeqModel& model);
void scale_grads(ModelGrads& grads, double factor);
void add_grads(ModelGrads& into, const ModelGrads& from);

// Enumerates every parameter tensor in a stable order; `fn` receives
// (name, tensor). The gradient overload walks the same order.
void visit_params(Seq2SeqModel& model,
                  const std::function<void(const std::string&, DenseMatrix&)>& fn);
void visit_params(const Seq2SeqModel& model,
                  const std::function<void(const std::string&, const DenseMatrix&)>& fn);
void visit_grads(ModelGrads& grads, const Seq2SeqModel& model,
                 const std::function<void(const std::string&, DenseMatrix&)>& fn);

// ---- forward / backward -------------------------------------------------

/// Stochastic decisions for one training forward pass, fixed up front so a
/// pass can be replayed exactly (finite-difference checks rely on this).
struct ForwardPlan {
  bool training = false;
  std::vector<std::vector<DenseMatrix>> enc_masks;  // [step][layer], n x hidden
  std::vector<std::vector<DenseMatrix>> dec_masks;
  std::vector<char> feed_truth;  // per decoder step; index 0 unused
};

ForwardPlan eval_plan();
ForwardPlan training_plan(const Seq2SeqModel& model, int history_len,
                          int horizon, long long batch_counter,
                          std::mt19937_64& rng);

struct SampleTape {
  std::vector<std::vector<CellTape>> enc;  // [step][layer]
  std::vector<std::vector<CellTape>> dec;
  std::vector<DenseMatrix> dec_top;        // projection inputs per step
  DenseMatrix predictions;                 // horizon x n
};

// history: history_len x n (rows are timesteps); targets may be null when
// no scheduled sampling can occur. Returns horizon x n predictions.
DenseMatrix forward_sample(const Seq2SeqModel& model, const TransformEngine& eng,
                           const DenseMatrix& history, const DenseMatrix* targets,
                           int horizon, const ForwardPlan& plan,
                           SampleTape* tape);

// Deterministic evaluation-mode forward.
DenseMatrix forward(const Seq2SeqModel& model, const DenseMatrix& history,
                    int horizon_len);

double mae_loss(const DenseMatrix& pred, const DenseMatrix& truth);

// Reverse-mode gradients of the mean-absolute-error loss; accumulates into
// `grads`.
void backward_sample(const Seq2SeqModel& model, const TransformEngine& eng,
                     const ForwardPlan& plan, const SampleTape& tape,
                     const DenseMatrix& targets, ModelGrads& grads);

// Inverse-sigmoid decay schedule: eps_i = tau / (tau + exp(i / tau)).
double scheduled_sampling_probability(long long batch_counter, double tau);
bool scheduled_sample(long long batch_counter, double tau,
                      std::mt19937_64& rng);

// ---- training -----------------------------------------------------------

struct EpochLogRow {
  int epoch = 0;
  std::string split;
  double mae = 0.0;
  double rmse = 0.0;
  double mape = 0.0;
  double seconds = 0.0;
};

struct ForecastWindow {
  int origin = 0;  // last history row index
};

std::vector<ForecastWindow> split_windows(const ForecastDataset& ds,
                                          const SplitRange& range);

std::vector<EpochLogRow> train(Seq2SeqModel& model, const ForecastDataset& ds,
                               const TrainConfig& cfg);

// Denormalized metrics over every window of a split.
MetricReport evaluate_split(const Seq2SeqModel& model,
                            const TransformEngine& eng,
                            const ForecastDataset& ds,
                            const SplitRange& range);

void write_metrics_csv(std::ostream& os, const std::vector<EpochLogRow>& rows);

// ---- checkpoint ----------------------------------------------------------

void save_checkpoint(std::ostream& os, const Seq2SeqModel& model);
Seq2SeqModel load_checkpoint(std::istream& is,
                             std::shared_ptr<const WaveletBasis> basis);
Seq2SeqModel load_checkpoint_file(const std::string& path,
                                  std::shared_ptr<const WaveletBasis> basis);

}  // namespace mmfw

#endif  // MMFW_MODEL_HPP
