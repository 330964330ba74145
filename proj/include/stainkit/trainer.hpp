#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "stainkit/augmentation.hpp"
#include "stainkit/image.hpp"
#include "stainkit/stain_estimation.hpp"
#include "stainkit/stain_matrix.hpp"

// Desk-scale consistency-regularized trainer: a two-layer MLP feature
// extractor (input -> hidden -> feature, ReLU between) and an affine+softmax
// classifier, trained by plain SGD on L = L_c + L_s where L_s penalizes the
// feature distance between an image and its stain-augmented versions.
// Everything is hand-backpropagated and verified against central finite
// differences.

namespace stainkit {

struct Affine {
  int out_dim = 0;
  int in_dim = 0;
  std::vector<double> w;  // row-major, out_dim x in_dim
  std::vector<double> b;  // out_dim

  Affine() = default;
  Affine(int out, int in)
      : out_dim(out), in_dim(in),
        w(static_cast<std::size_t>(out) * in, 0.0), b(out, 0.0) {}

  bool operator==(const Affine&) const = default;
};

struct ModelParams {
  Affine l1;    // input -> hidden
  Affine l2;    // hidden -> feature
  Affine head;  // feature -> classes

  static ModelParams init(int input_dim, int hidden_dim, int feature_dim,
                          int classes, std::uint64_t seed);

  int input_dim() const { return l1.in_dim; }
  int hidden_dim() const { return l1.out_dim; }
  int feature_dim() const { return l2.out_dim; }
  int classes() const { return head.out_dim; }

  std::size_t param_count() const;
  // Flat view in the order l1.w, l1.b, l2.w, l2.b, head.w, head.b; used by
  // the finite-difference probes and the SGD update.
  double get_flat(std::size_t i) const;
  void add_flat(std::size_t i, double delta);

  bool operator==(const ModelParams&) const = default;
};

// Gradient accumulators share the parameter layout.
using ModelGrads = ModelParams;

struct LossBreakdown {
  double l_c = 0.0;
  double l_s = 0.0;
  double l_total = 0.0;  // always computed as l_c + l_s
};

// How L_s combines the n_augment feature distances.
enum class ConsistencyReduce { mean, sum, single };

struct TrainConfig {
  double lr = 0.01;
  int epochs = 5;
  int batch_size = 16;
  PerturbParams perturb;
  bool use_consistency = true;
  ConsistencyReduce reduce = ConsistencyReduce::mean;
  std::uint64_t seed = 42;
  int input_side = 32;
  int hidden_dim = 64;
  int feature_dim = 32;
  StainMethod stain_method = StainMethod::vahadane;
  SnmfConfig snmf;
};

// One batch element: preprocessed source input, its label, and the
// stain-augmented input vectors r' is computed from. The augmented inputs
// stand in for the spec's "augmenter handle": they are fixed data by the
// time the step runs, while every feature pass uses the current params.
struct TrainSample {
  std::vector<double> x;
  std::vector<std::vector<double>> x_aug;
  int y = 0;
};

// r = l2(relu(l1(x)))
std::vector<double> forward_features(const ModelParams& params,
                                     const std::vector<double>& x);

// softmax(head(r)); sums to 1, entries strictly inside (0, 1).
std::vector<double> classify(const ModelParams& params,
                             const std::vector<double>& r);

// -ln p_y
double cross_entropy(const std::vector<double>& probs, int y);

// mean (or sum / first-only, per reduce) of |r - r'_i|^2 over the N
// augmented features.
double stain_reg_loss(const std::vector<double>& r,
                      const std::vector<std::vector<double>>& r_primes,
                      ConsistencyReduce reduce = ConsistencyReduce::mean);

double total_loss(double l_c, double l_s);

// Mean loss of a batch without touching params (finite-difference side).
LossBreakdown compute_batch_loss(const ModelParams& params,
                                 const std::vector<TrainSample>& batch,
                                 const TrainConfig& cfg);

// Mean loss and its gradient; samples accumulate in index order so results
// stay bit-identical regardless of how callers schedule the work.
LossBreakdown compute_batch_gradients(const ModelParams& params,
                                      const std::vector<TrainSample>& batch,
                                      const TrainConfig& cfg,
                                      ModelGrads& grads);

// One SGD step on the batch-mean loss; returns the pre-step mean losses.
LossBreakdown train_step(ModelParams& params,
                         const std::vector<TrainSample>& batch,
                         const TrainConfig& cfg);

// Backprop vs central finite differences (step h) on n_probes randomly
// chosen parameters; returns the worst relative error
// |analytic - numeric| / max(1, |analytic|, |numeric|).
double gradient_check(const ModelParams& params,
                      const std::vector<TrainSample>& batch,
                      const TrainConfig& cfg, int n_probes = 50,
                      std::uint64_t probe_seed = 1, double h = 1e-4);

// --- ingestion ---------------------------------------------------------

// Exact-area box downsample to side x side (identity when already there).
RgbImage downsample_area(const RgbImage& img, int side);

// Downsample + scale channels to [0, 1] + flatten row-major interleaved.
std::vector<double> preprocess_input(const RgbImage& img, int side);

// A dataset ready to train on: images ingested at input_side, one stain
// matrix and concentration map cached per image. Images whose stain cannot
// be estimated (e.g. background tiles with no tissue) fall back to the
// reference H&E matrix, which leaves their near-zero concentrations intact.
struct TrainingSet {
  std::vector<RgbImage> images;
  std::vector<int> labels;
  std::vector<std::string> class_names;
  std::vector<StainMatrix> stains;
  std::vector<ConcentrationMap> concentrations;
  std::vector<std::vector<double>> inputs;  // preprocessed source vectors
};

TrainingSet prepare_training_set(std::vector<RgbImage> images,
                                 std::vector<int> labels,
                                 std::vector<std::string> class_names,
                                 const TrainConfig& cfg);

// The augmented input for (epoch, sample, draw), derived deterministically
// from cfg.seed; the training loop calls this lazily.
std::vector<double> augmented_input(const TrainingSet& set, std::size_t index,
                                    int epoch, int draw,
                                    const TrainConfig& cfg);

struct LogRow {
  int epoch = 0;
  int step = 0;
  LossBreakdown loss;
};

struct TrainResult {
  ModelParams params;
  std::vector<LogRow> log;
  int epochs_run = 0;
};

TrainResult train_model(const TrainingSet& set, const TrainConfig& cfg);

std::vector<int> predict(const ModelParams& params,
                         const std::vector<std::vector<double>>& inputs);

// --- persistence -------------------------------------------------------

struct CheckpointMeta {
  std::uint64_t seed = 0;
  int epoch = 0;
  std::vector<std::string> class_names;
};

void save_checkpoint(const std::string& path, const ModelParams& params,
                     const CheckpointMeta& meta);
ModelParams load_checkpoint(const std::string& path,
                            CheckpointMeta* meta = nullptr);

// CSV with header epoch,step,l_c,l_s,l_total; full precision so the
// l_total = l_c + l_s identity survives a round trip.
void write_train_log_csv(const std::string& path,
                         const std::vector<LogRow>& log);

}  // namespace stainkit
