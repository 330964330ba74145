#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "stainkit/augmentation.hpp"
#include "stainkit/color_optics.hpp"
#include "stainkit/config_json.hpp"
#include "stainkit/dataset.hpp"
#include "stainkit/errors.hpp"
#include "stainkit/evaluation.hpp"
#include "stainkit/parallel.hpp"
#include "stainkit/png_io.hpp"
#include "stainkit/rng.hpp"
#include "stainkit/stain_estimation.hpp"
#include "stainkit/trainer.hpp"

namespace fs = std::filesystem;
using namespace stainkit;

namespace {

constexpr double kGradCheckTolerance = 1e-4;

// Exit codes: 0 success, 1 I/O or parse, 2 domain (tissue/degeneracy),
// 3 verification failure. Nothing else.
int run_guarded(const std::function<int()>& fn) {
  try {
    return fn();
  } catch (const DomainError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

StainMethod parse_estimation_method(const std::string& name) {
  const StainMethod m = stain_method_from_string(name);
  if (m == StainMethod::reference) {
    throw ParseError("method must be macenko or vahadane");
  }
  return m;
}

std::string stem_of(const std::string& path) {
  return fs::path(path).stem().string();
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec && !fs::is_directory(dir)) {
    throw IoError("cannot create output directory: " + dir);
  }
}

std::string fmt(double v, const char* spec = "%.17g") {
  char buf[64];
  std::snprintf(buf, sizeof(buf), spec, v);
  return buf;
}

// --- estimate -------------------------------------------------------------

struct EstimateArgs {
  std::string input;
  std::string method = "vahadane";
  std::string out;
  double lambda = 0.1;
  int max_iters = 200;
  std::uint64_t seed = 42;
  double od_threshold = kDefaultOdThreshold;
};

int cmd_estimate(const EstimateArgs& a) {
  const StainMethod method = parse_estimation_method(a.method);
  SnmfConfig cfg;
  cfg.sparsity_lambda = a.lambda;
  cfg.max_iters = a.max_iters;
  cfg.seed = a.seed;

  const RgbImage img = load_png(a.input);
  VahadaneInfo info;
  const StainProfile profile =
      estimate_profile(img, method, cfg, a.od_threshold, &info);
  save_stain_profile(a.out, profile);

  const StainMatrix ref = reference_he();
  const auto& h = profile.matrix.hematoxylin;
  const auto& e = profile.matrix.eosin;
  std::printf("method: %s", to_string(profile.matrix.method).c_str());
  if (method == StainMethod::vahadane) {
    std::printf(" (%d iterations, objective %.6g)", info.iterations,
                info.objective);
  }
  std::printf("\n");
  std::printf("hematoxylin: %8.5f %8.5f %8.5f   (%5.2f deg from reference H)\n",
              h[0], h[1], h[2],
              angle_between_deg(h, ref.hematoxylin));
  std::printf("eosin:       %8.5f %8.5f %8.5f   (%5.2f deg from reference E)\n",
              e[0], e[1], e[2], angle_between_deg(e, ref.eosin));
  std::printf("inter-stain angle: %.2f deg\n", angle_between_deg(h, e));
  std::printf("max concentrations (p99): H %.5f  E %.5f\n",
              profile.max_concentrations[0], profile.max_concentrations[1]);
  std::printf("wrote %s\n", a.out.c_str());
  return 0;
}

// --- augment ----------------------------------------------------------------

struct AugmentArgs {
  std::string input;
  std::string out;
  std::string stains;  // optional profile JSON; otherwise per-image estimate
  std::string method = "vahadane";
  int n = 6;
  double sigma1 = 0.2;
  double sigma2 = 0.2;
  std::uint64_t seed = 42;
};

int cmd_augment(const AugmentArgs& a) {
  const std::vector<std::string> files = list_png_inputs(a.input);
  ensure_dir(a.out);

  StainProfile fixed_profile;
  const bool have_fixed = !a.stains.empty();
  if (have_fixed) fixed_profile = load_stain_profile(a.stains);
  const StainMethod method = parse_estimation_method(a.method);

  std::vector<std::vector<std::string>> manifest(files.size());
  parallel_for(files.size(), [&](std::size_t i) {
    const RgbImage img = load_png(files[i]);
    const StainMatrix w = have_fixed
                              ? fixed_profile.matrix
                              : estimate_profile(img, method).matrix;

    PerturbParams p;
    p.sigma1 = a.sigma1;
    p.sigma2 = a.sigma2;
    p.n_augment = a.n;
    p.seed = derive_seed(a.seed, {static_cast<std::uint64_t>(i)});

    const std::vector<StainDraw> draws = augment_draws(p);
    const std::vector<RgbImage> images = augment(img, w, p);
    const std::string stem = stem_of(files[i]);
    for (std::size_t k = 0; k < images.size(); ++k) {
      const std::string out_path =
          (fs::path(a.out) / (stem + "_aug" + std::to_string(k + 1) + ".png"))
              .string();
      save_png(out_path, images[k]);
      manifest[i].push_back(files[i] + "," + out_path + "," +
                            fmt(draws[k].alpha[0]) + "," +
                            fmt(draws[k].alpha[1]) + "," +
                            fmt(draws[k].beta[0]) + "," +
                            fmt(draws[k].beta[1]));
    }
  });

  const std::string manifest_path = (fs::path(a.out) / "manifest.csv").string();
  std::ofstream mf(manifest_path, std::ios::binary);
  if (!mf) throw IoError("cannot open for writing: " + manifest_path);
  mf << "source,output,alphaH,alphaE,betaH,betaE\n";
  for (const auto& rows : manifest) {
    for (const auto& row : rows) mf << row << "\n";
  }
  std::printf("augmented %zu input(s) x %d draws -> %s\n", files.size(), a.n,
              a.out.c_str());
  return 0;
}

// --- normalize ---------------------------------------------------------------

struct NormalizeArgs {
  std::string input;
  std::string target;
  std::string out;
  std::string method = "vahadane";
};

int cmd_normalize(const NormalizeArgs& a) {
  const std::vector<std::string> files = list_png_inputs(a.input);
  const StainProfile target = load_stain_profile(a.target);
  const StainMethod method = parse_estimation_method(a.method);

  const bool single_file_out =
      files.size() == 1 && fs::path(a.out).extension() == ".png";
  if (!single_file_out) ensure_dir(a.out);

  parallel_for(files.size(), [&](std::size_t i) {
    const RgbImage img = load_png(files[i]);
    const StainProfile src = estimate_profile(img, method);
    const RgbImage normalized =
        normalize_to_target(img, src.matrix, target.matrix,
                            src.max_concentrations, target.max_concentrations);
    const std::string out_path =
        single_file_out
            ? a.out
            : (fs::path(a.out) / fs::path(files[i]).filename()).string();
    save_png(out_path, normalized);
  });
  std::printf("normalized %zu image(s) -> %s\n", files.size(), a.out.c_str());
  return 0;
}

// --- train-toy -----------------------------------------------------------

struct TrainArgs {
  std::string data;
  std::string config;
  std::string out;
  std::string log;
  std::string label_map;
  bool no_consistency = false;
  bool check_grads = false;
  // flag overrides; negative/zero means "not set"
  double lr = -1.0;
  int epochs = -1;
  int batch_size = -1;
  std::int64_t seed = -1;
};

int cmd_train_toy(const TrainArgs& a) {
  TrainConfig cfg;
  std::string data_path = a.data;
  std::string out_path = a.out;
  std::string log_path = a.log;

  if (!a.config.empty()) {
    std::ifstream in(a.config, std::ios::binary);
    if (!in) throw IoError("cannot open for reading: " + a.config);
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(std::string("run config JSON: ") + e.what());
    }
    require_keys(j, {"seed", "perturb", "snmf", "train", "paths"},
                 "run config");
    if (j.contains("seed")) cfg.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("perturb")) {
      cfg.perturb = perturb_params_from_json(j.at("perturb"), cfg.perturb);
    }
    if (j.contains("snmf")) {
      cfg.snmf = snmf_config_from_json(j.at("snmf"), cfg.snmf);
    }
    if (j.contains("train")) {
      cfg = train_config_from_json(j.at("train"), cfg);
    }
    if (j.contains("paths")) {
      const auto& paths = j.at("paths");
      require_keys(paths, {"data", "out", "log"}, "run config paths");
      if (data_path.empty() && paths.contains("data")) {
        data_path = paths.at("data").get<std::string>();
      }
      if (out_path.empty() && paths.contains("out")) {
        out_path = paths.at("out").get<std::string>();
      }
      if (log_path.empty() && paths.contains("log")) {
        log_path = paths.at("log").get<std::string>();
      }
    }
  }

  // Flags win over config keys.
  if (a.lr > 0.0) cfg.lr = a.lr;
  if (a.epochs > 0) cfg.epochs = a.epochs;
  if (a.batch_size > 0) cfg.batch_size = a.batch_size;
  if (a.seed >= 0) cfg.seed = static_cast<std::uint64_t>(a.seed);
  if (a.no_consistency) cfg.use_consistency = false;

  // Validate all paths before doing any work.
  if (data_path.empty()) throw ParseError("no dataset path (--data or config)");
  if (out_path.empty()) throw ParseError("no checkpoint path (--out or config)");
  if (!fs::is_directory(data_path)) {
    throw IoError("dataset root is not a directory: " + data_path);
  }
  if (log_path.empty()) log_path = out_path + ".log.csv";
  for (const std::string& p : {out_path, log_path}) {
    const fs::path parent = fs::path(p).parent_path();
    if (!parent.empty()) ensure_dir(parent.string());
  }

  LabeledImageSet data = load_class_folders(data_path);
  if (!a.label_map.empty()) {
    LabelMap map;
    if (a.label_map == "k19") {
      map = k19_label_map();
    } else if (a.label_map == "k16") {
      map = k16_label_map();
    } else {
      map = load_label_map(a.label_map);
    }
    RelabelReport rep;
    data = apply_label_map(data, map, &rep);
    std::printf("label map: kept %zu sample(s)", rep.kept);
    for (const auto& [name, count] : rep.dropped) {
      std::printf(", dropped %zu x %s", count, name.c_str());
    }
    std::printf("\n");
  }

  const TrainingSet set = prepare_training_set(data.images, data.labels,
                                               data.class_names, cfg);

  if (a.check_grads) {
    const std::size_t n_check = std::min<std::size_t>(8, set.images.size());
    std::vector<TrainSample> batch(n_check);
    const int n_aug = cfg.use_consistency
                          ? (cfg.reduce == ConsistencyReduce::single
                                 ? 1
                                 : cfg.perturb.n_augment)
                          : 0;
    for (std::size_t i = 0; i < n_check; ++i) {
      batch[i].x = set.inputs[i];
      batch[i].y = set.labels[i];
      for (int k = 0; k < n_aug; ++k) {
        batch[i].x_aug.push_back(augmented_input(set, i, 0, k, cfg));
      }
    }
    const ModelParams probe = ModelParams::init(
        cfg.input_side * cfg.input_side * 3, cfg.hidden_dim, cfg.feature_dim,
        static_cast<int>(set.class_names.size()), cfg.seed);
    const double err = gradient_check(probe, batch, cfg, 60, cfg.seed ^ 1);
    std::printf("gradient check: max relative error %.3g (tolerance %g)\n",
                err, kGradCheckTolerance);
    if (!(err < kGradCheckTolerance)) {
      std::cerr << "error: gradient check failed\n";
      return 3;
    }
  }

  const TrainResult result = train_model(set, cfg);
  CheckpointMeta meta;
  meta.seed = cfg.seed;
  meta.epoch = result.epochs_run;
  meta.class_names = set.class_names;
  save_checkpoint(out_path, result.params, meta);
  write_train_log_csv(log_path, result.log);

  const LossBreakdown& last = result.log.back().loss;
  std::printf("final losses: l_c %.6f  l_s %.6f  l_total %.6f\n", last.l_c,
              last.l_s, last.l_total);
  std::printf("wrote %s and %s\n", out_path.c_str(), log_path.c_str());
  return 0;
}

// --- synth ------------------------------------------------------------------

struct SynthArgs {
  std::string spec = "default";
  std::string out;
  std::string report;
  std::string dump_spec;
  bool render_only = false;
  bool emit_images = false;
  int repeats = -1;
};

int cmd_synth(const SynthArgs& a) {
  ExperimentSpec spec = a.spec == "default" ? default_experiment_spec()
                                            : load_experiment_spec(a.spec);
  if (a.repeats > 0) spec.repeats = a.repeats;

  if (!a.dump_spec.empty()) {
    std::ofstream out(a.dump_spec, std::ios::binary);
    if (!out) throw IoError("cannot open for writing: " + a.dump_spec);
    out << experiment_spec_to_json(spec);
    std::printf("wrote %s\n", a.dump_spec.c_str());
    return 0;
  }

  if (a.out.empty()) throw ParseError("synth requires --out");
  ensure_dir(a.out);

  if (a.render_only || a.emit_images) {
    const LabeledImageSet source = render_synthetic(spec.source);
    const LabeledImageSet target = render_synthetic(spec.target);
    save_class_folders((fs::path(a.out) / "source").string(), source);
    save_class_folders((fs::path(a.out) / "target").string(), target);
    std::printf("rendered %zu source and %zu target tiles under %s\n",
                source.images.size(), target.images.size(), a.out.c_str());
    if (a.render_only) return 0;
  }

  const ExperimentReport report = run_crossdomain_experiment(spec);
  const std::string report_path =
      a.report.empty() ? (fs::path(a.out) / "report.csv").string() : a.report;
  {
    std::ofstream out(report_path, std::ios::binary);
    if (!out) throw IoError("cannot open for writing: " + report_path);
    out << metrics_csv(report.rows);
  }

  std::printf("target-domain accuracy, mean over %d seed(s):\n", spec.repeats);
  std::printf("  upper bound (in-domain)    %.3f\n",
              report.upper_bound.mean.accuracy);
  std::printf("  lower bound (consistency-) %.3f\n",
              report.lower_bound.mean.accuracy);
  std::printf("  proposed    (consistency+) %.3f\n",
              report.proposed.mean.accuracy);
  std::printf("consistency wins %d / %d seeds\n", report.consistency_wins,
              spec.repeats);
  std::printf("wrote %s\n", report_path.c_str());
  return 0;
}

// --- eval -------------------------------------------------------------------

struct EvalArgs {
  std::string pred;
  std::string truth;
  std::string out;
  std::string method_name = "eval";
  std::string dataset_name = "-";
  std::string averaging = "weighted";
  int classes = 0;
};

int cmd_eval(const EvalArgs& a) {
  const std::vector<int> preds = read_class_csv(a.pred);
  const std::vector<int> truths = read_class_csv(a.truth);
  int k = a.classes;
  if (k <= 0) {
    for (int v : preds) k = std::max(k, v + 1);
    for (int v : truths) k = std::max(k, v + 1);
  }
  const Averaging avg = a.averaging == "macro" ? Averaging::macro
                        : a.averaging == "weighted"
                            ? Averaging::weighted
                            : throw ParseError(
                                  "averaging must be weighted or macro");
  const MetricScores scores = metrics(confusion(preds, truths, k), avg);
  const std::vector<MetricsRow> rows = {
      {a.method_name, a.dataset_name, scores}};
  const std::string csv = metrics_csv(rows);
  std::fputs(csv.c_str(), stdout);
  if (!a.out.empty()) {
    std::ofstream out(a.out, std::ios::binary);
    if (!out) throw IoError("cannot open for writing: " + a.out);
    out << csv;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "stainkit: H&E stain deconvolution, augmentation, normalization and "
      "consistency-regularized training at desk scale"};
  app.require_subcommand(1);

  EstimateArgs est;
  CLI::App* estimate = app.add_subcommand(
      "estimate", "Estimate a stain matrix from an H&E tile");
  estimate->add_option("--input", est.input, "input PNG")->required();
  estimate->add_option("--method", est.method, "macenko|vahadane");
  estimate->add_option("--out", est.out, "output stains JSON")->required();
  estimate->add_option("--lambda", est.lambda, "sparse NMF L1 weight");
  estimate->add_option("--max-iters", est.max_iters, "sparse NMF iterations");
  estimate->add_option("--seed", est.seed, "RNG seed");
  estimate->add_option("--od-threshold", est.od_threshold,
                       "tissue OD threshold");

  AugmentArgs aug;
  CLI::App* augment_cmd = app.add_subcommand(
      "augment", "Write stain-altered versions of each input image");
  augment_cmd->add_option("--input", aug.input, "input PNG or directory")
      ->required();
  augment_cmd->add_option("--out", aug.out, "output directory")->required();
  augment_cmd->add_option("--n", aug.n, "augmentations per image");
  augment_cmd->add_option("--sigma1", aug.sigma1, "scale half-range");
  augment_cmd->add_option("--sigma2", aug.sigma2, "shift half-range");
  augment_cmd->add_option("--seed", aug.seed, "RNG seed");
  augment_cmd->add_option("--stains", aug.stains,
                          "fixed stain profile JSON (default: per-image)");
  augment_cmd->add_option("--method", aug.method,
                          "estimator when --stains is absent");

  NormalizeArgs norm;
  CLI::App* normalize_cmd = app.add_subcommand(
      "normalize", "Re-render images under a target stain profile");
  normalize_cmd->add_option("--input", norm.input, "input PNG or directory")
      ->required();
  normalize_cmd->add_option("--target", norm.target, "target stains JSON")
      ->required();
  normalize_cmd->add_option("--out", norm.out, "output file or directory")
      ->required();
  normalize_cmd->add_option("--method", norm.method,
                            "source estimator: macenko|vahadane");

  TrainArgs tr;
  CLI::App* train_cmd = app.add_subcommand(
      "train-toy", "Train the desk-scale consistency classifier");
  train_cmd->add_option("--data", tr.data, "class-per-folder dataset root");
  train_cmd->add_option("--config", tr.config, "run config JSON");
  train_cmd->add_option("--out", tr.out, "checkpoint path");
  train_cmd->add_option("--log", tr.log, "training log CSV path");
  train_cmd->add_option("--label-map", tr.label_map,
                        "k19 | k16 | path to a label map JSON");
  train_cmd->add_flag("--no-consistency", tr.no_consistency,
                      "train with cross-entropy only");
  train_cmd->add_flag("--check-grads", tr.check_grads,
                      "verify backprop against finite differences first");
  train_cmd->add_option("--lr", tr.lr, "learning rate");
  train_cmd->add_option("--epochs", tr.epochs, "epochs");
  train_cmd->add_option("--batch-size", tr.batch_size, "batch size");
  train_cmd->add_option("--seed", tr.seed, "RNG seed");

  SynthArgs sy;
  CLI::App* synth_cmd = app.add_subcommand(
      "synth", "Render the synthetic two-domain benchmark and/or run the "
               "cross-domain experiment");
  synth_cmd->add_option("--spec", sy.spec, "experiment spec JSON or 'default'");
  synth_cmd->add_option("--out", sy.out, "output directory");
  synth_cmd->add_option("--report", sy.report, "report CSV path");
  synth_cmd->add_option("--dump-spec", sy.dump_spec,
                        "write the spec JSON and exit");
  synth_cmd->add_flag("--render-only", sy.render_only,
                      "emit datasets, skip the experiment");
  synth_cmd->add_flag("--emit-images", sy.emit_images,
                      "also emit datasets before the experiment");
  synth_cmd->add_option("--repeats", sy.repeats, "seeds per arm");

  EvalArgs ev;
  CLI::App* eval_cmd = app.add_subcommand(
      "eval", "Metrics from prediction/truth class CSVs");
  eval_cmd->add_option("--pred", ev.pred, "predictions CSV")->required();
  eval_cmd->add_option("--truth", ev.truth, "ground truth CSV")->required();
  eval_cmd->add_option("--out", ev.out, "report CSV path");
  eval_cmd->add_option("--classes", ev.classes, "class count (default: auto)");
  eval_cmd->add_option("--method-name", ev.method_name, "method column value");
  eval_cmd->add_option("--dataset-name", ev.dataset_name,
                       "training_dataset column value");
  eval_cmd->add_option("--averaging", ev.averaging, "weighted|macro");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }

  if (estimate->parsed()) return run_guarded([&] { return cmd_estimate(est); });
  if (augment_cmd->parsed()) return run_guarded([&] { return cmd_augment(aug); });
  if (normalize_cmd->parsed()) {
    return run_guarded([&] { return cmd_normalize(norm); });
  }
  if (train_cmd->parsed()) return run_guarded([&] { return cmd_train_toy(tr); });
  if (synth_cmd->parsed()) return run_guarded([&] { return cmd_synth(sy); });
  if (eval_cmd->parsed()) return run_guarded([&] { return cmd_eval(ev); });
  return 1;
}
