#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include "stainkit/errors.hpp"
#include "stainkit/evaluation.hpp"
#include "stainkit/kernels.hpp"
#include "stainkit/rng.hpp"
#include "stainkit/trainer.hpp"

using namespace stainkit;
namespace fs = std::filesystem;

namespace {

// Random batch with optional augmented inputs; labels cycle through classes.
std::vector<TrainSample> random_batch(Rng& rng, int n, int input_dim,
                                      int classes, int n_aug) {
  std::vector<TrainSample> batch(n);
  for (int i = 0; i < n; ++i) {
    batch[i].x.resize(input_dim);
    for (auto& v : batch[i].x) v = rng.uniform(0.0, 1.0);
    batch[i].y = i % classes;
    batch[i].x_aug.resize(n_aug);
    for (auto& xa : batch[i].x_aug) {
      // augmented inputs stay near the source, like real stain perturbations
      xa = batch[i].x;
      for (auto& v : xa) v += rng.uniform(-0.05, 0.05);
    }
  }
  return batch;
}

TrainConfig tiny_cfg(bool consistency, int n_aug = 2) {
  TrainConfig cfg;
  cfg.input_side = 4;  // input dim 48
  cfg.hidden_dim = 10;
  cfg.feature_dim = 6;
  cfg.use_consistency = consistency;
  cfg.perturb.n_augment = n_aug;
  cfg.lr = 0.1;
  return cfg;
}

// Synthetic 3-class set for end-to-end training tests.
TrainingSet tiny_training_set(const TrainConfig& cfg, int per_class = 8,
                              std::uint64_t seed = 5) {
  SyntheticDomainSpec spec;
  spec.stains = reference_he();
  spec.prototypes = {{"a", 0.25, 0.2, 0.2},
                     {"b", 1.0, 0.3, 0.3},
                     {"c", 0.3, 1.0, 0.3}};
  spec.n_per_class = per_class;
  spec.tile_size = cfg.input_side;
  spec.smooth_radius = 1;
  spec.seed = seed;
  const LabeledImageSet data = render_synthetic(spec);
  TrainConfig prep = cfg;
  prep.stain_method = StainMethod::reference;  // tiles are far below the
                                               // tissue minimum; skip
                                               // estimation entirely
  return prepare_training_set(data.images, data.labels, data.class_names,
                              prep);
}

}  // namespace

TEST_SUITE_BEGIN("trainer");

TEST_CASE("forward_features formula cases") {
  ModelParams p;
  p.l1 = Affine(4, 3);
  p.l2 = Affine(2, 4);
  p.head = Affine(2, 2);

  // all-zero params -> r = 0
  const std::vector<double> x = {0.3, 0.6, 0.9};
  CHECK(forward_features(p, x) == std::vector<double>{0.0, 0.0});

  // zero A1, b2 set -> r = b2 regardless of input
  p.l2.b = {1.5, -2.5};
  CHECK(forward_features(p, x) == std::vector<double>{1.5, -2.5});
  CHECK(forward_features(p, {9.0, -3.0, 0.1}) ==
        std::vector<double>{1.5, -2.5});

  // zero input -> r depends only on biases: A2 relu(b1) + b2
  ModelParams q = ModelParams::init(3, 4, 2, 2, 77);
  const std::vector<double> r0 = forward_features(q, {0.0, 0.0, 0.0});
  std::vector<double> expect(2);
  std::vector<double> hidden(4);
  kernels::relu(hidden.data(), q.l1.b.data(), 4);
  for (int r = 0; r < 2; ++r) {
    expect[r] = kernels::dot(q.l2.w.data() + 4 * r, hidden.data(), 4) +
                q.l2.b[r];
  }
  CHECK(r0 == expect);

  CHECK_THROWS_AS(forward_features(q, {1.0, 2.0}), ShapeMismatchError);
}

TEST_CASE("classify: softmax identities") {
  ModelParams p;
  p.l1 = Affine(2, 2);
  p.l2 = Affine(2, 2);
  p.head = Affine(4, 2);  // zero weights -> zero logits

  const std::vector<double> r = {0.5, -0.5};
  const std::vector<double> uniform = classify(p, r);
  double sum = 0.0;
  for (double v : uniform) {
    CHECK(v == doctest::Approx(0.25).epsilon(1e-12));
    sum += v;
  }
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));

  // logits (t, 0, 0, 0): class-0 probability increases monotonically in t
  double prev = 0.25;
  for (double t : {1.0, 10.0, 100.0}) {
    ModelParams q = p;
    q.head.b = {t, 0.0, 0.0, 0.0};
    const double p0 = classify(q, r)[0];
    CHECK(p0 > prev);
    prev = p0;
  }
  CHECK(prev > 1.0 - 1e-12);

  // adding a constant to all logits changes nothing (within 1e-12)
  ModelParams q = p;
  q.head.b = {0.3, -1.2, 2.2, 0.7};
  ModelParams shifted = q;
  for (auto& b : shifted.head.b) b += 37.5;
  const std::vector<double> a = classify(q, r);
  const std::vector<double> b = classify(shifted, r);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i] == doctest::Approx(b[i]).epsilon(1e-12));
  }
}

TEST_CASE("cross_entropy reference values") {
  const std::vector<double> uniform7(7, 1.0 / 7.0);
  CHECK(cross_entropy(uniform7, 3) ==
        doctest::Approx(1.9459101490553133).epsilon(1e-12));
  CHECK(cross_entropy({1.0, 0.0}, 0) == 0.0);
  CHECK(cross_entropy({0.5, 0.5}, 1) ==
        doctest::Approx(0.6931471805599453).epsilon(1e-12));
}

TEST_CASE("stain_reg_loss reference values") {
  const std::vector<double> r = {1.0, 0.0};
  CHECK(stain_reg_loss(r, {r, r, r}) == 0.0);
  CHECK(stain_reg_loss(r, {{0.0, 1.0}}) == doctest::Approx(2.0));
  const std::vector<double> zero = {0.0, 0.0};
  CHECK(stain_reg_loss(zero, {{1.0, 0.0}, {0.0, 2.0}}) ==
        doctest::Approx(2.5));
  // sum and single-draw reductions
  CHECK(stain_reg_loss(zero, {{1.0, 0.0}, {0.0, 2.0}},
                       ConsistencyReduce::sum) == doctest::Approx(5.0));
  CHECK(stain_reg_loss(zero, {{1.0, 0.0}, {0.0, 2.0}},
                       ConsistencyReduce::single) == doctest::Approx(1.0));
  CHECK_THROWS_AS(stain_reg_loss(r, {{1.0, 2.0, 3.0}}),
                  DimensionMismatchError);
  CHECK_THROWS_AS(stain_reg_loss(r, {}), DimensionMismatchError);
}

TEST_CASE("total_loss is the exact sum") {
  CHECK(total_loss(1.0, 0.5) == 1.5);
  CHECK(total_loss(0.7319, 0.0) == 0.7319);
  CHECK(total_loss(0.0, 0.25) == 0.25);
}

TEST_CASE("train_step with lr = 0 reports losses and changes nothing") {
  Rng rng(9);
  TrainConfig cfg = tiny_cfg(true);
  cfg.lr = 0.0;
  ModelParams params = ModelParams::init(48, 10, 6, 3, 1);
  const ModelParams before = params;
  const auto batch = random_batch(rng, 4, 48, 3, 2);
  const LossBreakdown loss = train_step(params, batch, cfg);
  CHECK(params == before);
  CHECK(loss.l_c > 0.0);
  CHECK(loss.l_s > 0.0);
  CHECK(loss.l_total == loss.l_c + loss.l_s);
}

TEST_CASE("consistency-off training equals an independent plain trainer") {
  // Reference: a cross-entropy-only trainer written out longhand here,
  // sharing only the kernel primitives with the library.
  Rng rng(13);
  TrainConfig cfg = tiny_cfg(false);
  const int input_dim = 48, hidden = 10, feat = 6, classes = 3;
  const auto batch = random_batch(rng, 6, input_dim, classes, 0);

  ModelParams lib = ModelParams::init(input_dim, hidden, feat, classes, 21);
  ModelParams ref = lib;

  for (int step = 0; step < 5; ++step) {
    train_step(lib, batch, cfg);

    ModelGrads g = ref;
    for (auto* blk : {&g.l1.w, &g.l1.b, &g.l2.w, &g.l2.b, &g.head.w,
                      &g.head.b}) {
      std::fill(blk->begin(), blk->end(), 0.0);
    }
    for (const auto& s : batch) {
      std::vector<double> a1(hidden), h(hidden), r(feat), logits(classes);
      for (int i = 0; i < hidden; ++i) {
        a1[i] = kernels::dot(ref.l1.w.data() + i * input_dim, s.x.data(),
                             input_dim) +
                ref.l1.b[i];
      }
      kernels::relu(h.data(), a1.data(), hidden);
      for (int i = 0; i < feat; ++i) {
        r[i] = kernels::dot(ref.l2.w.data() + i * hidden, h.data(), hidden) +
               ref.l2.b[i];
      }
      for (int i = 0; i < classes; ++i) {
        logits[i] = kernels::dot(ref.head.w.data() + i * feat, r.data(),
                                 feat) +
                    ref.head.b[i];
      }
      double m = logits[0];
      for (double z : logits) m = z > m ? z : m;
      std::vector<double> p(classes);
      double sum = 0.0;
      for (int i = 0; i < classes; ++i) {
        p[i] = std::exp(logits[i] - m);
        sum += p[i];
      }
      for (auto& v : p) v /= sum;

      std::vector<double> dlogits = p;
      dlogits[s.y] -= 1.0;
      for (int i = 0; i < classes; ++i) {
        kernels::axpy(g.head.w.data() + i * feat, dlogits[i], r.data(), feat);
      }
      kernels::axpy(g.head.b.data(), 1.0, dlogits.data(), classes);
      std::vector<double> dr(feat, 0.0);
      for (int i = 0; i < classes; ++i) {
        kernels::axpy(dr.data(), dlogits[i], ref.head.w.data() + i * feat,
                      feat);
      }
      std::vector<double> dh(hidden, 0.0);
      for (int i = 0; i < feat; ++i) {
        kernels::axpy(dh.data(), dr[i], ref.l2.w.data() + i * hidden, hidden);
      }
      kernels::relu_mask_grad(dh.data(), a1.data(), hidden);
      for (int i = 0; i < feat; ++i) {
        kernels::axpy(g.l2.w.data() + i * hidden, dr[i], h.data(), hidden);
      }
      kernels::axpy(g.l2.b.data(), 1.0, dr.data(), feat);
      for (int i = 0; i < hidden; ++i) {
        kernels::axpy(g.l1.w.data() + i * input_dim, dh[i], s.x.data(),
                      input_dim);
      }
      kernels::axpy(g.l1.b.data(), 1.0, dh.data(), hidden);
    }
    const double inv = 1.0 / static_cast<double>(batch.size());
    for (auto* blk : {&g.l1.w, &g.l1.b, &g.l2.w, &g.l2.b, &g.head.w,
                      &g.head.b}) {
      for (auto& v : *blk) v *= inv;
    }
    kernels::axpy(ref.l1.w.data(), -cfg.lr, g.l1.w.data(), ref.l1.w.size());
    kernels::axpy(ref.l1.b.data(), -cfg.lr, g.l1.b.data(), ref.l1.b.size());
    kernels::axpy(ref.l2.w.data(), -cfg.lr, g.l2.w.data(), ref.l2.w.size());
    kernels::axpy(ref.l2.b.data(), -cfg.lr, g.l2.b.data(), ref.l2.b.size());
    kernels::axpy(ref.head.w.data(), -cfg.lr, g.head.w.data(),
                  ref.head.w.size());
    kernels::axpy(ref.head.b.data(), -cfg.lr, g.head.b.data(),
                  ref.head.b.size());

    REQUIRE(lib == ref);  // bit-identical after every step
  }
}

TEST_CASE("central differences are exact on a quadratic") {
  // The finite-difference machinery itself, on a loss with no curvature
  // surprises: f(p) = sum a_i (p_i - c_i)^2.
  Rng rng(17);
  const int n = 20;
  std::vector<double> a(n), c(n), p(n);
  for (int i = 0; i < n; ++i) {
    a[i] = rng.uniform(0.5, 2.0);
    c[i] = rng.uniform(-1.0, 1.0);
    p[i] = rng.uniform(-1.0, 1.0);
  }
  const auto f = [&](const std::vector<double>& q) {
    double acc = 0.0;
    for (int i = 0; i < n; ++i) acc += a[i] * (q[i] - c[i]) * (q[i] - c[i]);
    return acc;
  };
  const double h = 1e-4;
  double worst = 0.0;
  for (int i = 0; i < n; ++i) {
    std::vector<double> q = p;
    q[i] = p[i] + h;
    const double up = f(q);
    q[i] = p[i] - h;
    const double down = f(q);
    const double numeric = (up - down) / (2.0 * h);
    const double analytic = 2.0 * a[i] * (p[i] - c[i]);
    const double rel = std::abs(numeric - analytic) /
                       std::max({1.0, std::abs(numeric), std::abs(analytic)});
    worst = rel > worst ? rel : worst;
  }
  CHECK(worst < 1e-8);
}

TEST_CASE("gradient check: cross-entropy only") {
  Rng rng(19);
  const TrainConfig cfg = tiny_cfg(false);
  const ModelParams params = ModelParams::init(48, 10, 6, 3, 31);
  const auto batch = random_batch(rng, 4, 48, 3, 0);
  const double err = gradient_check(params, batch, cfg, 0);  // all params
  CHECK(err < 1e-4);
}

TEST_CASE("gradient check: consistency loss with two augmentations") {
  Rng rng(23);
  const TrainConfig cfg = tiny_cfg(true, 2);
  const ModelParams params = ModelParams::init(48, 10, 6, 3, 37);
  const auto batch = random_batch(rng, 4, 48, 3, 2);
  const double err = gradient_check(params, batch, cfg, 0);
  CHECK(err < 1e-4);

  // sum and single reductions backprop correctly too
  for (ConsistencyReduce reduce :
       {ConsistencyReduce::sum, ConsistencyReduce::single}) {
    TrainConfig alt = cfg;
    alt.reduce = reduce;
    CHECK(gradient_check(params, batch, alt, 0) < 1e-4);
  }
}

TEST_CASE("training is deterministic and logs exact loss sums") {
  const TrainConfig base = tiny_cfg(true);
  TrainConfig cfg = base;
  cfg.epochs = 2;
  cfg.batch_size = 5;
  cfg.perturb.sigma1 = 0.2;
  cfg.perturb.sigma2 = 0.2;
  const TrainingSet set = tiny_training_set(cfg);

  const TrainResult a = train_model(set, cfg);
  const TrainResult b = train_model(set, cfg);
  CHECK(a.params == b.params);
  REQUIRE(a.log.size() == b.log.size());
  for (std::size_t i = 0; i < a.log.size(); ++i) {
    CHECK(a.log[i].loss.l_total == b.log[i].loss.l_total);
    // the identity holds bitwise, every step
    CHECK(a.log[i].loss.l_total == a.log[i].loss.l_c + a.log[i].loss.l_s);
  }

  // a different seed moves the parameters
  TrainConfig other = cfg;
  other.seed = cfg.seed + 1;
  const TrainResult c = train_model(set, other);
  CHECK_FALSE(a.params == c.params);
}

TEST_CASE("consistency-off runs produce zero l_s in the log") {
  TrainConfig cfg = tiny_cfg(false);
  cfg.epochs = 1;
  cfg.batch_size = 6;
  const TrainingSet set = tiny_training_set(cfg);
  const TrainResult r = train_model(set, cfg);
  for (const auto& row : r.log) {
    CHECK(row.loss.l_s == 0.0);
    CHECK(row.loss.l_total == row.loss.l_c);
  }
}

TEST_CASE("checkpoint save/load round trip, byte-stable") {
  const ModelParams params = ModelParams::init(48, 10, 6, 3, 41);
  CheckpointMeta meta;
  meta.seed = 41;
  meta.epoch = 7;
  meta.class_names = {"a", "b", "c"};

  const fs::path path = fs::temp_directory_path() / "stainkit_ckpt.json";
  save_checkpoint(path.string(), params, meta);
  CheckpointMeta back_meta;
  const ModelParams back = load_checkpoint(path.string(), &back_meta);
  CHECK(back == params);
  CHECK(back_meta.seed == 41);
  CHECK(back_meta.epoch == 7);
  CHECK(back_meta.class_names == meta.class_names);

  // identical content on rewrite
  std::ostringstream first;
  first << std::ifstream(path).rdbuf();
  save_checkpoint(path.string(), params, meta);
  std::ostringstream second;
  second << std::ifstream(path).rdbuf();
  CHECK(first.str() == second.str());
  fs::remove(path);
}

TEST_CASE("training log CSV round-trips the loss identity") {
  std::vector<LogRow> log;
  LogRow row;
  row.epoch = 0;
  row.step = 3;
  row.loss.l_c = 1.2345678901234567;
  row.loss.l_s = 0.7654321098765432;
  row.loss.l_total = row.loss.l_c + row.loss.l_s;
  log.push_back(row);

  const fs::path path = fs::temp_directory_path() / "stainkit_log.csv";
  write_train_log_csv(path.string(), log);
  std::ifstream in(path);
  std::string header, line;
  std::getline(in, header);
  CHECK(header == "epoch,step,l_c,l_s,l_total");
  std::getline(in, line);
  double lc, ls, lt;
  int epoch, step;
  REQUIRE(std::sscanf(line.c_str(), "%d,%d,%lf,%lf,%lf", &epoch, &step, &lc,
                      &ls, &lt) == 5);
  CHECK(lc == row.loss.l_c);  // %.17g survives the round trip bit-exactly
  CHECK(ls == row.loss.l_s);
  CHECK(lt == lc + ls);
  fs::remove(path);
}

TEST_CASE("area downsampling: exact averages") {
  RgbImage img(2, 2);
  img.data = {10, 20, 30, 20, 40, 50, 30, 60, 70, 40, 80, 90};
  const RgbImage one = downsample_area(img, 1);
  CHECK(one.data[0] == 25);  // (10+20+30+40)/4
  CHECK(one.data[1] == 50);
  CHECK(one.data[2] == 60);

  // identity when already at the target size
  CHECK(downsample_area(img, 2) == img);

  // fractional windows: 3x3 constant stays constant at 2x2
  RgbImage flat(3, 3, 77);
  const RgbImage down = downsample_area(flat, 2);
  for (auto v : down.data) CHECK(v == 77);
}

TEST_SUITE_END();
