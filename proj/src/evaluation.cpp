#include "stainkit/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "stainkit/color_optics.hpp"
#include "stainkit/config_json.hpp"
#include "stainkit/errors.hpp"
#include "stainkit/kernels.hpp"
#include "stainkit/parallel.hpp"
#include "stainkit/rng.hpp"

namespace stainkit {
namespace {

constexpr std::uint64_t kTagRepeat = 0x52455054ULL;   // "REPT"
constexpr std::uint64_t kTagTestSet = 0x54455354ULL;  // "TEST"
constexpr std::uint64_t kTagTrainSet = 0x5452414eULL; // "TRAN"

}  // namespace

ConfusionMatrix confusion(const std::vector<int>& preds,
                          const std::vector<int>& truths, int k) {
  if (preds.size() != truths.size()) {
    throw LengthMismatchError("confusion: preds and truths differ in length");
  }
  if (k < 1) throw DomainError("confusion: need at least one class");
  ConfusionMatrix cm(k);
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (preds[i] < 0 || preds[i] >= k || truths[i] < 0 || truths[i] >= k) {
      throw DomainError("confusion: class index outside [0, K) at row " +
                        std::to_string(i));
    }
    ++cm.at(truths[i], preds[i]);
  }
  return cm;
}

MetricScores metrics(const ConfusionMatrix& cm, Averaging averaging) {
  const std::int64_t total = cm.total();
  if (total <= 0) throw EmptyMatrixError("metrics of an empty matrix");

  std::int64_t trace = 0;
  for (int i = 0; i < cm.k; ++i) trace += cm.at(i, i);

  MetricScores s;
  s.accuracy = static_cast<double>(trace) / static_cast<double>(total);

  double sum_p = 0.0, sum_r = 0.0, sum_f = 0.0, weight = 0.0;
  for (int i = 0; i < cm.k; ++i) {
    std::int64_t support = 0, predicted = 0;
    for (int j = 0; j < cm.k; ++j) {
      support += cm.at(i, j);
      predicted += cm.at(j, i);
    }
    if (support == 0) continue;  // absent classes stay out of both averages
    const double tp = static_cast<double>(cm.at(i, i));
    const double precision =
        predicted > 0 ? tp / static_cast<double>(predicted) : 0.0;
    const double recall = tp / static_cast<double>(support);
    const double f1 = (precision + recall) > 0.0
                          ? 2.0 * precision * recall / (precision + recall)
                          : 0.0;
    const double w =
        averaging == Averaging::weighted ? static_cast<double>(support) : 1.0;
    sum_p += w * precision;
    sum_r += w * recall;
    sum_f += w * f1;
    weight += w;
  }
  s.precision = sum_p / weight;
  s.recall = sum_r / weight;
  s.f1 = sum_f / weight;
  return s;
}

std::string metrics_csv(const std::vector<MetricsRow>& rows) {
  std::ostringstream out;
  out << "method,training_dataset,accuracy,recall,precision,f1\n";
  char buf[64];
  for (const MetricsRow& row : rows) {
    out << row.method << "," << row.training_dataset;
    std::snprintf(buf, sizeof(buf), ",%.3f,%.3f,%.3f,%.3f\n",
                  row.scores.accuracy, row.scores.recall, row.scores.precision,
                  row.scores.f1);
    out << buf;
  }
  return out.str();
}

const std::vector<std::string>& canonical_classes() {
  static const std::vector<std::string> classes = {
      "adipose",
      "background",
      "debris",
      "lymphocytes",
      "normal colon mucosa",
      "stroma",
      "colorectal adenocarcinoma epithelium",
  };
  return classes;
}

LabelMap k19_label_map() {
  LabelMap m;
  m.rename = {
      {"ADI", "adipose"},
      {"BACK", "background"},
      {"DEB", "debris"},
      {"MUC", "debris"},
      {"LYM", "lymphocytes"},
      {"NORM", "normal colon mucosa"},
      {"MUS", "stroma"},
      {"STR", "stroma"},
      {"TUM", "colorectal adenocarcinoma epithelium"},
  };
  return m;
}

LabelMap k16_label_map() {
  LabelMap m;
  m.rename = {
      {"01_TUMOR", "colorectal adenocarcinoma epithelium"},
      {"02_STROMA", "stroma"},
      {"04_LYMPHO", "lymphocytes"},
      {"05_DEBRIS", "debris"},
      {"06_MUCOSA", "normal colon mucosa"},
      {"07_ADIPOSE", "adipose"},
      {"08_EMPTY", "background"},
  };
  m.drop = {"03_COMPLEX"};
  return m;
}

std::string label_map_to_json(const LabelMap& map) {
  nlohmann::ordered_json j;
  j["map"] = nlohmann::ordered_json::object();
  for (const auto& [from, to] : map.rename) j["map"][from] = to;
  j["drop"] = std::vector<std::string>(map.drop.begin(), map.drop.end());
  return j.dump(2) + "\n";
}

LabelMap parse_label_map(const std::string& json_text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("label map JSON: ") + e.what());
  }
  require_keys(j, {"map", "drop"}, "label map");
  LabelMap m;
  try {
    if (j.contains("map")) {
      for (const auto& item : j.at("map").items()) {
        m.rename[item.key()] = item.value().get<std::string>();
      }
    }
    if (j.contains("drop")) {
      for (const auto& v : j.at("drop")) m.drop.insert(v.get<std::string>());
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("label map JSON: ") + e.what());
  }
  const auto& canon = canonical_classes();
  for (const auto& [from, to] : m.rename) {
    if (std::find(canon.begin(), canon.end(), to) == canon.end()) {
      throw ParseError("label map: \"" + from + "\" maps to \"" + to +
                       "\", which is not a canonical class");
    }
  }
  return m;
}

LabelMap load_label_map(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open for reading: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_label_map(buf.str());
}

LabeledImageSet apply_label_map(const LabeledImageSet& set,
                                const LabelMap& map, RelabelReport* report) {
  const auto& canon = canonical_classes();
  // Validate every class name up front; work starts only when the whole
  // dataset is mappable.
  std::vector<int> class_to_canonical(set.class_names.size(), -1);
  for (std::size_t c = 0; c < set.class_names.size(); ++c) {
    const std::string& name = set.class_names[c];
    const auto it = map.rename.find(name);
    if (it != map.rename.end()) {
      class_to_canonical[c] = static_cast<int>(
          std::find(canon.begin(), canon.end(), it->second) - canon.begin());
    } else if (!map.drop.count(name)) {
      throw UnmappedLabelError(name);
    }
  }

  LabeledImageSet out;
  out.class_names = canon;
  RelabelReport rep;
  for (std::size_t i = 0; i < set.images.size(); ++i) {
    const int target = class_to_canonical[set.labels[i]];
    if (target < 0) {
      ++rep.dropped[set.class_names[set.labels[i]]];
      continue;
    }
    out.images.push_back(set.images[i]);
    out.labels.push_back(target);
    if (i < set.paths.size()) out.paths.push_back(set.paths[i]);
    ++rep.kept;
  }
  if (report) *report = rep;
  return out;
}

namespace {

// Box blur with clamped window, rescaled by (2r+1) so the interior noise
// amplitude stays comparable across radii.
void smooth_field(std::vector<double>& field, int side, int radius) {
  if (radius < 1) return;
  std::vector<double> tmp(field.size());
  const auto pass = [&](const std::vector<double>& src,
                        std::vector<double>& dst, bool rows) {
    for (int a = 0; a < side; ++a) {
      for (int b = 0; b < side; ++b) {
        const int lo = std::max(0, b - radius);
        const int hi = std::min(side - 1, b + radius);
        double acc = 0.0;
        for (int t = lo; t <= hi; ++t) {
          acc += rows ? src[static_cast<std::size_t>(a) * side + t]
                      : src[static_cast<std::size_t>(t) * side + a];
        }
        const double mean = acc / static_cast<double>(hi - lo + 1);
        if (rows) {
          dst[static_cast<std::size_t>(a) * side + b] = mean;
        } else {
          dst[static_cast<std::size_t>(b) * side + a] = mean;
        }
      }
    }
  };
  pass(field, tmp, true);
  pass(tmp, field, false);
  const double restore = static_cast<double>(2 * radius + 1);
  for (auto& v : field) v *= restore;
}

}  // namespace

LabeledImageSet render_synthetic(const SyntheticDomainSpec& spec) {
  if (spec.prototypes.empty()) {
    throw std::invalid_argument("synthetic spec needs at least one class");
  }
  if (spec.n_per_class < 1 || spec.tile_size < 1) {
    throw std::invalid_argument("synthetic spec counts must be >= 1");
  }
  for (const auto& proto : spec.prototypes) {
    if (proto.mean_h < 0.0 || proto.mean_e < 0.0 || proto.noise < 0.0) {
      throw std::invalid_argument(
          "synthetic prototype concentrations must be >= 0");
    }
  }

  LabeledImageSet set;
  for (const auto& proto : spec.prototypes) set.class_names.push_back(proto.name);
  const std::size_t total =
      spec.prototypes.size() * static_cast<std::size_t>(spec.n_per_class);
  set.images.resize(total);
  set.labels.resize(total);

  const int side = spec.tile_size;
  const std::size_t n_px = static_cast<std::size_t>(side) * side;

  parallel_for(total, [&](std::size_t idx) {
    const std::size_t ci = idx / static_cast<std::size_t>(spec.n_per_class);
    const std::size_t ni = idx % static_cast<std::size_t>(spec.n_per_class);
    const ClassPrototype& proto = spec.prototypes[ci];
    Rng rng(derive_seed(spec.seed, {ci, ni}));

    const int radius =
        proto.smooth_radius >= 0 ? proto.smooth_radius : spec.smooth_radius;
    std::vector<double> field_h(n_px), field_e(n_px);
    for (auto& v : field_h) v = rng.normal();
    for (auto& v : field_e) v = rng.normal();
    smooth_field(field_h, side, radius);
    smooth_field(field_e, side, radius);

    ConcentrationMap conc(side, side);
    for (std::size_t p = 0; p < n_px; ++p) {
      const double h = proto.mean_h + proto.noise * field_h[p];
      const double e = proto.mean_e + proto.noise * field_e[p];
      conc.data[2 * p] = h > 0.0 ? h : 0.0;
      conc.data[2 * p + 1] = e > 0.0 ? e : 0.0;
    }

    OdImage od(side, side);
    kernels::mix2_batch(od.data.data(), conc.data.data(), n_px,
                        spec.stains.hematoxylin.data(),
                        spec.stains.eosin.data());
    set.images[idx] = od_to_rgb(od);
    set.labels[idx] = static_cast<int>(ci);
  });
  return set;
}

// --- experiment spec JSON -------------------------------------------------

namespace {

nlohmann::ordered_json domain_to_json(const SyntheticDomainSpec& d) {
  nlohmann::ordered_json j;
  j["stains"] = {{d.stains.hematoxylin[0], d.stains.hematoxylin[1],
                  d.stains.hematoxylin[2]},
                 {d.stains.eosin[0], d.stains.eosin[1], d.stains.eosin[2]}};
  j["classes"] = nlohmann::ordered_json::array();
  for (const auto& p : d.prototypes) {
    nlohmann::ordered_json c;
    c["name"] = p.name;
    c["mean_h"] = p.mean_h;
    c["mean_e"] = p.mean_e;
    c["noise"] = p.noise;
    if (p.smooth_radius >= 0) c["smooth_radius"] = p.smooth_radius;
    j["classes"].push_back(c);
  }
  j["n_per_class"] = d.n_per_class;
  j["tile_size"] = d.tile_size;
  j["smooth_radius"] = d.smooth_radius;
  j["seed"] = d.seed;
  return j;
}

SyntheticDomainSpec domain_from_json(const nlohmann::json& j,
                                     const std::string& context) {
  require_keys(j,
               {"stains", "classes", "n_per_class", "tile_size",
                "smooth_radius", "seed"},
               context);
  SyntheticDomainSpec d;
  try {
    const auto& stains = j.at("stains");
    if (!stains.is_array() || stains.size() != 2 || stains[0].size() != 3 ||
        stains[1].size() != 3) {
      throw ParseError(context + ": \"stains\" must be a 2x3 array");
    }
    std::array<double, 3> h{}, e{};
    for (int c = 0; c < 3; ++c) {
      h[c] = stains[0][c].get<double>();
      e[c] = stains[1][c].get<double>();
    }
    d.stains = canonical_stain_order(h, e, StainMethod::reference);
    for (const auto& c : j.at("classes")) {
      require_keys(c, {"name", "mean_h", "mean_e", "noise", "smooth_radius"},
                   context + " class");
      ClassPrototype p;
      p.name = c.at("name").get<std::string>();
      p.mean_h = c.at("mean_h").get<double>();
      p.mean_e = c.at("mean_e").get<double>();
      p.noise = c.at("noise").get<double>();
      if (c.contains("smooth_radius")) {
        p.smooth_radius = c.at("smooth_radius").get<int>();
      }
      d.prototypes.push_back(p);
    }
    if (j.contains("n_per_class")) d.n_per_class = j.at("n_per_class").get<int>();
    if (j.contains("tile_size")) d.tile_size = j.at("tile_size").get<int>();
    if (j.contains("smooth_radius"))
      d.smooth_radius = j.at("smooth_radius").get<int>();
    if (j.contains("seed")) d.seed = j.at("seed").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(context + " JSON: " + e.what());
  }
  return d;
}

}  // namespace

ExperimentSpec default_experiment_spec() {
  ExperimentSpec spec;

  spec.source.stains = reference_he();
  // Two bits: hue (hematoxylin- vs eosin-leaning) and overall stain
  // density. The density gap between light and dark classes exceeds the
  // perturbation range, so consistency training keeps that cue while
  // making exact-color margins wide; hue read off raw colors is what the
  // stain shift corrupts.
  spec.source.prototypes = {
      {"h_light", 0.55, 0.18, 0.18},
      {"e_light", 0.18, 0.55, 0.18},
      {"h_dark", 1.50, 0.50, 0.35},
      {"e_dark", 0.50, 1.50, 0.35},
  };
  spec.source.n_per_class = 200;
  spec.source.tile_size = 32;
  spec.source.smooth_radius = 2;
  spec.source.seed = 7;

  spec.target = spec.source;
  // A second scanner/lab: hematoxylin rotated ~14 degrees and eosin ~18,
  // the kind of shift stain-normalization papers report between cohorts.
  spec.target.stains = canonical_stain_order(
      {0.48173212475420535, 0.74498386004525974, 0.46144686395278878},
      {0.09930999961100874, 0.90400756467521726, 0.41582189334767389},
      StainMethod::reference);
  spec.target.seed = 1007;

  spec.train.lr = 0.01;
  spec.train.epochs = 12;
  spec.train.batch_size = 16;
  spec.train.perturb.sigma1 = 0.25;
  spec.train.perturb.sigma2 = 0.15;
  spec.train.perturb.n_augment = 6;
  spec.train.seed = 42;
  spec.repeats = 5;
  spec.n_test_per_class = 50;
  return spec;
}

std::string experiment_spec_to_json(const ExperimentSpec& spec) {
  nlohmann::ordered_json j;
  j["source"] = domain_to_json(spec.source);
  j["target"] = domain_to_json(spec.target);
  j["train"] = to_json(spec.train);
  j["repeats"] = spec.repeats;
  j["n_test_per_class"] = spec.n_test_per_class;
  return j.dump(2) + "\n";
}

ExperimentSpec parse_experiment_spec(const std::string& json_text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::parse_error& e) {
    // e.what() carries the byte offset of the failure
    throw ParseError(std::string("experiment spec JSON: ") + e.what());
  }
  require_keys(j, {"source", "target", "train", "repeats", "n_test_per_class"},
               "experiment spec");
  ExperimentSpec spec = default_experiment_spec();
  spec.source = domain_from_json(j.at("source"), "source");
  spec.target = domain_from_json(j.at("target"), "target");
  try {
    if (j.contains("train")) spec.train = train_config_from_json(j.at("train"));
    if (j.contains("repeats")) spec.repeats = j.at("repeats").get<int>();
    if (j.contains("n_test_per_class"))
      spec.n_test_per_class = j.at("n_test_per_class").get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("experiment spec JSON: ") + e.what());
  }
  if (spec.repeats < 1 || spec.n_test_per_class < 1) {
    throw ParseError("experiment spec: counts must be >= 1");
  }
  return spec;
}

ExperimentSpec load_experiment_spec(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open for reading: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_experiment_spec(buf.str());
}

namespace {

MetricScores mean_scores(const std::vector<MetricScores>& scores) {
  MetricScores m;
  for (const auto& s : scores) {
    m.accuracy += s.accuracy;
    m.recall += s.recall;
    m.precision += s.precision;
    m.f1 += s.f1;
  }
  const double n = static_cast<double>(scores.size());
  m.accuracy /= n;
  m.recall /= n;
  m.precision /= n;
  m.f1 /= n;
  return m;
}

void append_arm_rows(std::vector<MetricsRow>& rows, const ArmResult& arm,
                     const std::string& dataset) {
  for (std::size_t s = 0; s < arm.per_seed.size(); ++s) {
    rows.push_back({arm.name + " [seed " + std::to_string(s) + "]", dataset,
                    arm.per_seed[s]});
  }
  rows.push_back({arm.name + " (mean)", dataset, arm.mean});
}

}  // namespace

ExperimentReport run_crossdomain_experiment(const ExperimentSpec& spec) {
  // Pure stain shift: identical prototypes and geometry on both sides.
  if (spec.source.prototypes.size() != spec.target.prototypes.size() ||
      spec.source.tile_size != spec.target.tile_size) {
    throw ParseError("experiment: source and target must share prototypes");
  }
  for (std::size_t i = 0; i < spec.source.prototypes.size(); ++i) {
    const auto& a = spec.source.prototypes[i];
    const auto& b = spec.target.prototypes[i];
    if (a.name != b.name || a.mean_h != b.mean_h || a.mean_e != b.mean_e ||
        a.noise != b.noise || a.smooth_radius != b.smooth_radius) {
      throw ParseError("experiment: source and target must share prototypes");
    }
  }

  const LabeledImageSet source_train = render_synthetic(spec.source);

  SyntheticDomainSpec target_train_spec = spec.target;
  target_train_spec.seed = derive_seed(spec.target.seed, {kTagTrainSet});
  const LabeledImageSet target_train = render_synthetic(target_train_spec);

  SyntheticDomainSpec target_test_spec = spec.target;
  target_test_spec.n_per_class = spec.n_test_per_class;
  target_test_spec.seed = derive_seed(spec.target.seed, {kTagTestSet});
  const LabeledImageSet target_test = render_synthetic(target_test_spec);

  const TrainingSet src_set = prepare_training_set(
      source_train.images, source_train.labels, source_train.class_names,
      spec.train);
  const TrainingSet tgt_set = prepare_training_set(
      target_train.images, target_train.labels, target_train.class_names,
      spec.train);

  std::vector<std::vector<double>> test_inputs(target_test.images.size());
  parallel_for(target_test.images.size(), [&](std::size_t i) {
    test_inputs[i] =
        preprocess_input(target_test.images[i], spec.train.input_side);
  });
  const int k = static_cast<int>(target_test.class_names.size());

  // Three arms x repeats, all independent: run them in parallel, results in
  // per-run slots.
  struct Run {
    const TrainingSet* set;
    bool consistency;
    int arm;  // 0 upper, 1 lower, 2 proposed
    int seed_index;
  };
  std::vector<Run> runs;
  for (int s = 0; s < spec.repeats; ++s) {
    runs.push_back({&tgt_set, false, 0, s});
    runs.push_back({&src_set, false, 1, s});
    runs.push_back({&src_set, true, 2, s});
  }
  std::vector<MetricScores> results(runs.size());

  parallel_for(runs.size(), [&](std::size_t ri) {
    const Run& run = runs[ri];
    TrainConfig cfg = spec.train;
    cfg.use_consistency = run.consistency;
    cfg.seed = derive_seed(spec.train.seed,
                           {kTagRepeat, static_cast<std::uint64_t>(run.seed_index)});
    const TrainResult trained = train_model(*run.set, cfg);
    const std::vector<int> preds = predict(trained.params, test_inputs);
    results[ri] = metrics(confusion(preds, target_test.labels, k));
  });

  ExperimentReport report;
  report.upper_bound.name = "Upper Bound";
  report.lower_bound.name = "Lower Bound";
  report.proposed.name = "Proposed Method";
  for (std::size_t ri = 0; ri < runs.size(); ++ri) {
    ArmResult& arm = runs[ri].arm == 0   ? report.upper_bound
                     : runs[ri].arm == 1 ? report.lower_bound
                                         : report.proposed;
    arm.per_seed.push_back(results[ri]);
  }
  report.upper_bound.mean = mean_scores(report.upper_bound.per_seed);
  report.lower_bound.mean = mean_scores(report.lower_bound.per_seed);
  report.proposed.mean = mean_scores(report.proposed.per_seed);

  for (int s = 0; s < spec.repeats; ++s) {
    if (report.proposed.per_seed[s].accuracy >
        report.lower_bound.per_seed[s].accuracy) {
      ++report.consistency_wins;
    }
  }

  append_arm_rows(report.rows, report.upper_bound, "target");
  append_arm_rows(report.rows, report.lower_bound, "source");
  append_arm_rows(report.rows, report.proposed, "source");
  return report;
}

std::vector<int> read_class_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open for reading: " + path);
  std::vector<int> values;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    // strip trailing CR and surrounding spaces
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) {
      line.pop_back();
    }
    std::size_t start = 0;
    while (start < line.size() && line[start] == ' ') ++start;
    line = line.substr(start);
    if (line.empty()) continue;
    if (line_no == 1 && line == "class") continue;  // optional header
    try {
      std::size_t pos = 0;
      const int v = std::stoi(line, &pos);
      if (pos != line.size()) throw std::invalid_argument("trailing chars");
      values.push_back(v);
    } catch (const std::exception&) {
      throw ParseError(path + ":" + std::to_string(line_no) +
                       ": expected a class index, got \"" + line + "\"");
    }
  }
  return values;
}

}  // namespace stainkit
