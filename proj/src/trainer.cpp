#include "stainkit/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "stainkit/color_optics.hpp"
#include "stainkit/errors.hpp"
#include "stainkit/kernels.hpp"
#include "stainkit/parallel.hpp"

namespace stainkit {
namespace {

constexpr std::uint64_t kTagInit = 0x494e4954ULL;     // "INIT"
constexpr std::uint64_t kTagShuffle = 0x53485546ULL;  // "SHUF"
constexpr std::uint64_t kTagAugment = 0x41554758ULL;  // "AUGX"

// out = W x + b, one blocked dot per row.
void affine_forward(const Affine& a, const double* x, double* out) {
  for (int r = 0; r < a.out_dim; ++r) {
    out[r] = kernels::dot(a.w.data() + static_cast<std::size_t>(r) * a.in_dim,
                          x, a.in_dim) +
             a.b[r];
  }
}

// dx += W^T g, row-order axpy accumulation.
void affine_backprop_input(const Affine& a, const double* g, double* dx) {
  for (int r = 0; r < a.out_dim; ++r) {
    kernels::axpy(dx, g[r],
                  a.w.data() + static_cast<std::size_t>(r) * a.in_dim,
                  a.in_dim);
  }
}

// gw += outer(g, x); gb += g.
void affine_accumulate(Affine& grad, const double* g, const double* x) {
  for (int r = 0; r < grad.out_dim; ++r) {
    kernels::axpy(grad.w.data() + static_cast<std::size_t>(r) * grad.in_dim,
                  g[r], x, grad.in_dim);
  }
  kernels::axpy(grad.b.data(), 1.0, g, grad.out_dim);
}

void scale_vec(std::vector<double>& v, double s) {
  for (auto& x : v) x *= s;
}

struct FeatureCache {
  std::vector<double> pre1;  // l1 pre-activation
  std::vector<double> h;     // relu(pre1)
  std::vector<double> r;     // feature
};

void forward_cached(const ModelParams& p, const std::vector<double>& x,
                    FeatureCache& c) {
  c.pre1.resize(p.hidden_dim());
  c.h.resize(p.hidden_dim());
  c.r.resize(p.feature_dim());
  affine_forward(p.l1, x.data(), c.pre1.data());
  kernels::relu(c.h.data(), c.pre1.data(), c.pre1.size());
  affine_forward(p.l2, c.h.data(), c.r.data());
}

// dr -> grads of l2, l1 for one forward pass.
void backprop_feature_path(const ModelParams& p, const std::vector<double>& x,
                           const FeatureCache& c, std::vector<double> dr,
                           ModelGrads& g) {
  std::vector<double> dh(p.hidden_dim(), 0.0);
  affine_backprop_input(p.l2, dr.data(), dh.data());
  kernels::relu_mask_grad(dh.data(), c.pre1.data(), dh.size());
  affine_accumulate(g.l2, dr.data(), c.h.data());
  affine_accumulate(g.l1, dh.data(), x.data());
}

std::vector<double> softmax(const std::vector<double>& logits) {
  double m = logits[0];
  for (double z : logits) m = z > m ? z : m;
  std::vector<double> p(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    p[i] = std::exp(logits[i] - m);
    sum += p[i];
  }
  for (auto& v : p) v /= sum;
  return p;
}

int effective_augments(const TrainConfig& cfg) {
  if (!cfg.use_consistency) return 0;
  if (cfg.reduce == ConsistencyReduce::single) return 1;
  return cfg.perturb.n_augment;
}

// Shared forward(+optional backward) of one sample. Gradient accumulation
// happens in a fixed order: head, main feature path, then each augmented
// path in draw order.
LossBreakdown sample_pass(const ModelParams& p, const TrainSample& s,
                          const TrainConfig& cfg, ModelGrads* g) {
  if (static_cast<int>(s.x.size()) != p.input_dim()) {
    throw ShapeMismatchError("sample input size does not match model");
  }
  if (s.y < 0 || s.y >= p.classes()) {
    throw ShapeMismatchError("label outside model classes");
  }

  FeatureCache main;
  forward_cached(p, s.x, main);

  std::vector<double> logits(p.classes());
  affine_forward(p.head, main.r.data(), logits.data());
  const std::vector<double> probs = softmax(logits);
  const double l_c = cross_entropy(probs, s.y);

  const bool with_consistency = cfg.use_consistency && !s.x_aug.empty();
  const std::size_t n_aug =
      with_consistency
          ? (cfg.reduce == ConsistencyReduce::single ? 1 : s.x_aug.size())
          : 0;

  std::vector<FeatureCache> aug(n_aug);
  double l_s = 0.0;
  if (with_consistency) {
    for (std::size_t j = 0; j < n_aug; ++j) {
      forward_cached(p, s.x_aug[j], aug[j]);
    }
    const double denom =
        cfg.reduce == ConsistencyReduce::mean
            ? static_cast<double>(n_aug)
            : 1.0;
    for (std::size_t j = 0; j < n_aug; ++j) {
      l_s += kernels::sum_sq_diff(main.r.data(), aug[j].r.data(),
                                  main.r.size());
    }
    l_s /= denom;
  }

  LossBreakdown out;
  out.l_c = l_c;
  out.l_s = l_s;
  out.l_total = total_loss(l_c, l_s);

  if (!g) return out;

  // Classifier head: dlogits = p - onehot(y).
  std::vector<double> dlogits = probs;
  dlogits[s.y] -= 1.0;
  affine_accumulate(g->head, dlogits.data(), main.r.data());

  std::vector<double> dr(p.feature_dim(), 0.0);
  affine_backprop_input(p.head, dlogits.data(), dr.data());

  if (with_consistency) {
    const double coeff =
        cfg.reduce == ConsistencyReduce::mean
            ? 2.0 / static_cast<double>(n_aug)
            : 2.0;
    for (std::size_t j = 0; j < n_aug; ++j) {
      std::vector<double> dr_aug(p.feature_dim());
      for (int i = 0; i < p.feature_dim(); ++i) {
        const double diff = main.r[i] - aug[j].r[i];
        dr[i] += coeff * diff;
        dr_aug[i] = -coeff * diff;
      }
      backprop_feature_path(p, s.x_aug[j], aug[j], std::move(dr_aug), *g);
    }
  }
  backprop_feature_path(p, s.x, main, std::move(dr), *g);
  return out;
}

void zero_grads(const ModelParams& shape, ModelGrads& g) {
  g = shape;
  std::fill(g.l1.w.begin(), g.l1.w.end(), 0.0);
  std::fill(g.l1.b.begin(), g.l1.b.end(), 0.0);
  std::fill(g.l2.w.begin(), g.l2.w.end(), 0.0);
  std::fill(g.l2.b.begin(), g.l2.b.end(), 0.0);
  std::fill(g.head.w.begin(), g.head.w.end(), 0.0);
  std::fill(g.head.b.begin(), g.head.b.end(), 0.0);
}

}  // namespace

ModelParams ModelParams::init(int input_dim, int hidden_dim, int feature_dim,
                              int classes, std::uint64_t seed) {
  if (input_dim < 1 || hidden_dim < 1 || feature_dim < 1 || classes < 1) {
    throw std::invalid_argument("model dimensions must be positive");
  }
  ModelParams p;
  p.l1 = Affine(hidden_dim, input_dim);
  p.l2 = Affine(feature_dim, hidden_dim);
  p.head = Affine(classes, feature_dim);

  Rng rng(derive_seed(seed, {kTagInit}));
  const auto fill = [&](Affine& a) {
    const double s =
        std::sqrt(6.0 / static_cast<double>(a.in_dim + a.out_dim));
    for (auto& w : a.w) w = rng.uniform(-s, s);
    // biases start at zero
  };
  fill(p.l1);
  fill(p.l2);
  fill(p.head);
  return p;
}

std::size_t ModelParams::param_count() const {
  return l1.w.size() + l1.b.size() + l2.w.size() + l2.b.size() +
         head.w.size() + head.b.size();
}

namespace {
// Resolves a flat index into one of the six parameter blocks.
double* flat_ptr(ModelParams& p, std::size_t i) {
  std::vector<double>* blocks[] = {&p.l1.w, &p.l1.b,   &p.l2.w,
                                   &p.l2.b, &p.head.w, &p.head.b};
  for (auto* blk : blocks) {
    if (i < blk->size()) return blk->data() + i;
    i -= blk->size();
  }
  throw std::out_of_range("flat parameter index");
}
}  // namespace

double ModelParams::get_flat(std::size_t i) const {
  return *flat_ptr(const_cast<ModelParams&>(*this), i);
}

void ModelParams::add_flat(std::size_t i, double delta) {
  *flat_ptr(*this, i) += delta;
}

std::vector<double> forward_features(const ModelParams& params,
                                     const std::vector<double>& x) {
  if (static_cast<int>(x.size()) != params.input_dim()) {
    throw ShapeMismatchError("forward_features: input dimension mismatch");
  }
  FeatureCache c;
  forward_cached(params, x, c);
  return c.r;
}

std::vector<double> classify(const ModelParams& params,
                             const std::vector<double>& r) {
  if (static_cast<int>(r.size()) != params.feature_dim()) {
    throw ShapeMismatchError("classify: feature dimension mismatch");
  }
  std::vector<double> logits(params.classes());
  affine_forward(params.head, r.data(), logits.data());
  return softmax(logits);
}

double cross_entropy(const std::vector<double>& probs, int y) {
  if (y < 0 || y >= static_cast<int>(probs.size())) {
    throw ShapeMismatchError("cross_entropy: label out of range");
  }
  return -std::log(probs[y]);
}

double stain_reg_loss(const std::vector<double>& r,
                      const std::vector<std::vector<double>>& r_primes,
                      ConsistencyReduce reduce) {
  if (r_primes.empty()) {
    throw DimensionMismatchError("stain_reg_loss: need at least one r'");
  }
  const std::size_t n =
      reduce == ConsistencyReduce::single ? 1 : r_primes.size();
  double acc = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    if (r_primes[j].size() != r.size()) {
      throw DimensionMismatchError("stain_reg_loss: feature size mismatch");
    }
    acc += kernels::sum_sq_diff(r.data(), r_primes[j].data(), r.size());
  }
  if (reduce == ConsistencyReduce::mean) acc /= static_cast<double>(n);
  return acc;
}

double total_loss(double l_c, double l_s) { return l_c + l_s; }

LossBreakdown compute_batch_loss(const ModelParams& params,
                                 const std::vector<TrainSample>& batch,
                                 const TrainConfig& cfg) {
  if (batch.empty()) throw std::invalid_argument("empty batch");
  LossBreakdown mean;
  for (const auto& s : batch) {
    const LossBreakdown l = sample_pass(params, s, cfg, nullptr);
    mean.l_c += l.l_c;
    mean.l_s += l.l_s;
  }
  mean.l_c /= static_cast<double>(batch.size());
  mean.l_s /= static_cast<double>(batch.size());
  mean.l_total = total_loss(mean.l_c, mean.l_s);
  return mean;
}

LossBreakdown compute_batch_gradients(const ModelParams& params,
                                      const std::vector<TrainSample>& batch,
                                      const TrainConfig& cfg,
                                      ModelGrads& grads) {
  if (batch.empty()) throw std::invalid_argument("empty batch");
  zero_grads(params, grads);
  LossBreakdown mean;
  for (const auto& s : batch) {
    const LossBreakdown l = sample_pass(params, s, cfg, &grads);
    mean.l_c += l.l_c;
    mean.l_s += l.l_s;
  }
  const double inv = 1.0 / static_cast<double>(batch.size());
  scale_vec(grads.l1.w, inv);
  scale_vec(grads.l1.b, inv);
  scale_vec(grads.l2.w, inv);
  scale_vec(grads.l2.b, inv);
  scale_vec(grads.head.w, inv);
  scale_vec(grads.head.b, inv);
  mean.l_c *= inv;
  mean.l_s *= inv;
  mean.l_total = total_loss(mean.l_c, mean.l_s);
  return mean;
}

LossBreakdown train_step(ModelParams& params,
                         const std::vector<TrainSample>& batch,
                         const TrainConfig& cfg) {
  if (!(cfg.lr >= 0.0)) throw std::invalid_argument("lr must be >= 0");
  ModelGrads grads;
  const LossBreakdown loss = compute_batch_gradients(params, batch, cfg, grads);
  const auto apply = [&](std::vector<double>& p, const std::vector<double>& g) {
    kernels::axpy(p.data(), -cfg.lr, g.data(), p.size());
  };
  apply(params.l1.w, grads.l1.w);
  apply(params.l1.b, grads.l1.b);
  apply(params.l2.w, grads.l2.w);
  apply(params.l2.b, grads.l2.b);
  apply(params.head.w, grads.head.w);
  apply(params.head.b, grads.head.b);
  return loss;
}

double gradient_check(const ModelParams& params,
                      const std::vector<TrainSample>& batch,
                      const TrainConfig& cfg, int n_probes,
                      std::uint64_t probe_seed, double h) {
  ModelGrads grads;
  compute_batch_gradients(params, batch, cfg, grads);

  const std::size_t total = params.param_count();
  std::vector<std::size_t> probes;
  if (n_probes <= 0 || static_cast<std::size_t>(n_probes) >= total) {
    probes.resize(total);
    std::iota(probes.begin(), probes.end(), 0);
  } else {
    std::set<std::size_t> chosen;
    Rng rng(probe_seed);
    while (chosen.size() < static_cast<std::size_t>(n_probes)) {
      chosen.insert(static_cast<std::size_t>(rng.below(total)));
    }
    probes.assign(chosen.begin(), chosen.end());
  }

  ModelParams work = params;
  double worst = 0.0;
  for (const std::size_t idx : probes) {
    const double base = work.get_flat(idx);
    work.add_flat(idx, h);
    const double up = compute_batch_loss(work, batch, cfg).l_total;
    work.add_flat(idx, -2.0 * h);
    const double down = compute_batch_loss(work, batch, cfg).l_total;
    work.add_flat(idx, base - work.get_flat(idx));  // restore exactly

    const double numeric = (up - down) / (2.0 * h);
    const double analytic = grads.get_flat(idx);
    const double denom = std::max(
        {1.0, std::abs(analytic), std::abs(numeric)});
    const double rel = std::abs(analytic - numeric) / denom;
    worst = rel > worst ? rel : worst;
  }
  return worst;
}

RgbImage downsample_area(const RgbImage& img, int side) {
  if (side < 1) throw std::invalid_argument("downsample side must be >= 1");
  if (img.width == side && img.height == side) return img;
  if (img.width < 1 || img.height < 1) {
    throw std::invalid_argument("downsample of empty image");
  }

  RgbImage out(side, side);
  const double sx = static_cast<double>(img.width) / side;
  const double sy = static_cast<double>(img.height) / side;
  for (int ty = 0; ty < side; ++ty) {
    const double y0 = ty * sy;
    const double y1 = (ty + 1) * sy;
    for (int tx = 0; tx < side; ++tx) {
      const double x0 = tx * sx;
      const double x1 = (tx + 1) * sx;
      double acc[3] = {0.0, 0.0, 0.0};
      for (int sy_i = static_cast<int>(y0); sy_i < img.height &&
                                            static_cast<double>(sy_i) < y1;
           ++sy_i) {
        const double wy = std::min<double>(sy_i + 1, y1) -
                          std::max<double>(sy_i, y0);
        if (wy <= 0.0) continue;
        for (int sx_i = static_cast<int>(x0); sx_i < img.width &&
                                              static_cast<double>(sx_i) < x1;
             ++sx_i) {
          const double wx = std::min<double>(sx_i + 1, x1) -
                            std::max<double>(sx_i, x0);
          if (wx <= 0.0) continue;
          const double w = wx * wy;
          for (int c = 0; c < 3; ++c) acc[c] += w * img.at(sx_i, sy_i, c);
        }
      }
      const double area = (x1 - x0) * (y1 - y0);
      for (int c = 0; c < 3; ++c) {
        const double v = std::floor(acc[c] / area + 0.5);
        out.at(tx, ty, c) = static_cast<std::uint8_t>(
            v < 0.0 ? 0.0 : (v > 255.0 ? 255.0 : v));
      }
    }
  }
  return out;
}

std::vector<double> preprocess_input(const RgbImage& img, int side) {
  const RgbImage small = downsample_area(img, side);
  std::vector<double> x(small.data.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    x[i] = static_cast<double>(small.data[i]) / 255.0;
  }
  return x;
}

TrainingSet prepare_training_set(std::vector<RgbImage> images,
                                 std::vector<int> labels,
                                 std::vector<std::string> class_names,
                                 const TrainConfig& cfg) {
  if (images.size() != labels.size()) {
    throw LengthMismatchError("images and labels differ in length");
  }
  TrainingSet set;
  set.labels = std::move(labels);
  set.class_names = std::move(class_names);
  set.images.resize(images.size());
  set.stains.resize(images.size());
  set.concentrations.resize(images.size());
  set.inputs.resize(images.size());

  parallel_for(images.size(), [&](std::size_t i) {
    set.images[i] = downsample_area(images[i], cfg.input_side);
    StainMatrix w;
    try {
      w = cfg.stain_method == StainMethod::macenko
              ? estimate_macenko(set.images[i])
              : (cfg.stain_method == StainMethod::vahadane
                     ? estimate_vahadane(set.images[i], cfg.snmf)
                     : reference_he());
    } catch (const DomainError&) {
      // Background-only tiles have no estimable stain; the reference matrix
      // keeps their near-zero concentrations meaningful.
      w = reference_he();
    }
    set.stains[i] = w;
    set.concentrations[i] =
        solve_concentrations(rgb_to_od(set.images[i]), w);
    std::vector<double> x(set.images[i].data.size());
    for (std::size_t j = 0; j < x.size(); ++j) {
      x[j] = static_cast<double>(set.images[i].data[j]) / 255.0;
    }
    set.inputs[i] = std::move(x);
  });
  return set;
}

std::vector<double> augmented_input(const TrainingSet& set, std::size_t index,
                                    int epoch, int draw,
                                    const TrainConfig& cfg) {
  Rng stream(derive_seed(cfg.seed, {kTagAugment,
                                    static_cast<std::uint64_t>(epoch),
                                    static_cast<std::uint64_t>(index),
                                    static_cast<std::uint64_t>(draw)}));
  const StainDraw d = sample_perturbation(stream, cfg.perturb);
  const ConcentrationMap perturbed =
      perturb_concentrations(set.concentrations[index], d);
  const RgbImage img = render_concentrations(perturbed, set.stains[index]);
  return preprocess_input(img, cfg.input_side);
}

TrainResult train_model(const TrainingSet& set, const TrainConfig& cfg) {
  if (set.images.empty()) throw std::invalid_argument("empty training set");
  if (cfg.batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  const int input_dim = cfg.input_side * cfg.input_side * 3;
  const int classes = static_cast<int>(set.class_names.size());

  TrainResult result;
  result.params = ModelParams::init(input_dim, cfg.hidden_dim,
                                    cfg.feature_dim, classes, cfg.seed);

  const int n_aug = effective_augments(cfg);
  std::vector<std::size_t> order(set.images.size());
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng shuffle_rng(derive_seed(cfg.seed, {kTagShuffle,
                                           static_cast<std::uint64_t>(epoch)}));
    shuffle_rng.shuffle(order.data(), order.size());

    int step = 0;
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end = std::min(
          order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      std::vector<TrainSample> batch(end - start);
      // Augmented inputs are independent work items; build them in parallel,
      // deterministically keyed by (epoch, sample index, draw index).
      parallel_for(end - start, [&](std::size_t bi) {
        const std::size_t idx = order[start + bi];
        TrainSample& s = batch[bi];
        s.x = set.inputs[idx];
        s.y = set.labels[idx];
        s.x_aug.resize(n_aug);
        for (int k = 0; k < n_aug; ++k) {
          s.x_aug[k] = augmented_input(set, idx, epoch, k, cfg);
        }
      });
      const LossBreakdown loss = train_step(result.params, batch, cfg);
      result.log.push_back({epoch, step, loss});
      ++step;
    }
  }
  result.epochs_run = cfg.epochs;
  return result;
}

std::vector<int> predict(const ModelParams& params,
                         const std::vector<std::vector<double>>& inputs) {
  std::vector<int> preds(inputs.size());
  parallel_for(inputs.size(), [&](std::size_t i) {
    const std::vector<double> r = forward_features(params, inputs[i]);
    const std::vector<double> p = classify(params, r);
    int best = 0;
    for (int k = 1; k < static_cast<int>(p.size()); ++k) {
      if (p[k] > p[best]) best = k;
    }
    preds[i] = best;
  });
  return preds;
}

void save_checkpoint(const std::string& path, const ModelParams& params,
                     const CheckpointMeta& meta) {
  nlohmann::ordered_json j;
  j["format"] = "stainkit-checkpoint-v1";
  j["input_dim"] = params.input_dim();
  j["hidden_dim"] = params.hidden_dim();
  j["feature_dim"] = params.feature_dim();
  j["classes"] = params.classes();
  j["seed"] = meta.seed;
  j["epoch"] = meta.epoch;
  j["class_names"] = meta.class_names;
  j["l1_w"] = params.l1.w;
  j["l1_b"] = params.l1.b;
  j["l2_w"] = params.l2.w;
  j["l2_b"] = params.l2.b;
  j["head_w"] = params.head.w;
  j["head_b"] = params.head.b;

  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path);
  out << j.dump() << "\n";
  if (!out) throw IoError("failed writing: " + path);
}

ModelParams load_checkpoint(const std::string& path, CheckpointMeta* meta) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open for reading: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("checkpoint JSON: ") + e.what());
  }
  try {
    const int input_dim = j.at("input_dim").get<int>();
    const int hidden = j.at("hidden_dim").get<int>();
    const int feature = j.at("feature_dim").get<int>();
    const int classes = j.at("classes").get<int>();
    ModelParams p;
    p.l1 = Affine(hidden, input_dim);
    p.l2 = Affine(feature, hidden);
    p.head = Affine(classes, feature);
    p.l1.w = j.at("l1_w").get<std::vector<double>>();
    p.l1.b = j.at("l1_b").get<std::vector<double>>();
    p.l2.w = j.at("l2_w").get<std::vector<double>>();
    p.l2.b = j.at("l2_b").get<std::vector<double>>();
    p.head.w = j.at("head_w").get<std::vector<double>>();
    p.head.b = j.at("head_b").get<std::vector<double>>();
    if (p.l1.w.size() != static_cast<std::size_t>(hidden) * input_dim ||
        p.l1.b.size() != static_cast<std::size_t>(hidden) ||
        p.l2.w.size() != static_cast<std::size_t>(feature) * hidden ||
        p.l2.b.size() != static_cast<std::size_t>(feature) ||
        p.head.w.size() != static_cast<std::size_t>(classes) * feature ||
        p.head.b.size() != static_cast<std::size_t>(classes)) {
      throw ParseError("checkpoint: weight arrays inconsistent with header");
    }
    if (meta) {
      meta->seed = j.at("seed").get<std::uint64_t>();
      meta->epoch = j.at("epoch").get<int>();
      if (j.contains("class_names")) {
        meta->class_names = j.at("class_names").get<std::vector<std::string>>();
      }
    }
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("checkpoint JSON: ") + e.what());
  }
}

void write_train_log_csv(const std::string& path,
                         const std::vector<LogRow>& log) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path);
  out << "epoch,step,l_c,l_s,l_total\n";
  char buf[128];
  for (const LogRow& row : log) {
    std::snprintf(buf, sizeof(buf), "%d,%d,%.17g,%.17g,%.17g\n", row.epoch,
                  row.step, row.loss.l_c, row.loss.l_s, row.loss.l_total);
    out << buf;
  }
  if (!out) throw IoError("failed writing: " + path);
}

}  // namespace stainkit
