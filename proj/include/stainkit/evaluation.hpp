#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "stainkit/dataset.hpp"
#include "stainkit/stain_matrix.hpp"
#include "stainkit/trainer.hpp"

// Metrics over confusion matrices, label remapping to the canonical
// seven-class scheme, synthetic two-domain rendering, and the cross-domain
// experiment runner.

namespace stainkit {

struct ConfusionMatrix {
  int k = 0;
  std::vector<std::int64_t> counts;  // row = truth, column = prediction

  ConfusionMatrix() = default;
  explicit ConfusionMatrix(int classes)
      : k(classes),
        counts(static_cast<std::size_t>(classes) * classes, 0) {}

  std::int64_t at(int truth, int pred) const {
    return counts[static_cast<std::size_t>(truth) * k + pred];
  }
  std::int64_t& at(int truth, int pred) {
    return counts[static_cast<std::size_t>(truth) * k + pred];
  }
  std::int64_t total() const {
    std::int64_t t = 0;
    for (auto c : counts) t += c;
    return t;
  }
};

ConfusionMatrix confusion(const std::vector<int>& preds,
                          const std::vector<int>& truths, int k);

enum class Averaging { macro, weighted };

struct MetricScores {
  double accuracy = 0.0;
  double recall = 0.0;
  double precision = 0.0;
  double f1 = 0.0;
};

// accuracy = trace/total; per-class precision/recall/F1 averaged macro
// (over classes with nonzero support) or support-weighted. Weighted recall
// telescopes to accuracy. F1 of a class with P+R = 0 is 0.
MetricScores metrics(const ConfusionMatrix& cm,
                     Averaging averaging = Averaging::weighted);

struct MetricsRow {
  std::string method;
  std::string training_dataset;
  MetricScores scores;
};

// CSV with header method,training_dataset,accuracy,recall,precision,f1 and
// three-decimal values.
std::string metrics_csv(const std::vector<MetricsRow>& rows);

// --- label remapping ----------------------------------------------------

// The canonical seven tissue classes, in fixed index order.
const std::vector<std::string>& canonical_classes();

struct LabelMap {
  std::map<std::string, std::string> rename;  // source label -> canonical
  std::set<std::string> drop;
};

LabelMap k19_label_map();
LabelMap k16_label_map();

std::string label_map_to_json(const LabelMap& map);
LabelMap parse_label_map(const std::string& json_text);
LabelMap load_label_map(const std::string& path);

// Applies the map to a loaded dataset: labels become canonical indices,
// dropped samples are removed. Throws UnmappedLabelError naming any label
// found in neither the map nor the drop list.
struct RelabelReport {
  std::size_t kept = 0;
  std::map<std::string, std::size_t> dropped;  // source label -> count
};
LabeledImageSet apply_label_map(const LabeledImageSet& set,
                                const LabelMap& map,
                                RelabelReport* report = nullptr);

// --- synthetic two-domain harness ---------------------------------------

struct ClassPrototype {
  std::string name;
  double mean_h = 0.0;   // mean hematoxylin concentration
  double mean_e = 0.0;   // mean eosin concentration
  double noise = 0.0;    // amplitude of the smoothed concentration noise
  // Texture grain: box-blur radius of the noise field. -1 inherits the
  // domain default; 0 is per-pixel speckle, larger radii give blobs.
  int smooth_radius = -1;
};

struct SyntheticDomainSpec {
  StainMatrix stains;
  std::vector<ClassPrototype> prototypes;
  int n_per_class = 200;
  int tile_size = 32;
  int smooth_radius = 2;  // default noise grain, per-class overridable
  std::uint64_t seed = 7;
};

// Per-pixel concentrations sampled around each class prototype (clamped
// Gaussian, spatially box-smoothed), rendered through the domain's stain
// matrix. Deterministic in spec.seed.
LabeledImageSet render_synthetic(const SyntheticDomainSpec& spec);

// --- cross-domain experiment ---------------------------------------------

struct ExperimentSpec {
  SyntheticDomainSpec source;
  SyntheticDomainSpec target;  // same prototypes, different stains
  TrainConfig train;
  int repeats = 5;
  int n_test_per_class = 50;
};

ExperimentSpec default_experiment_spec();
std::string experiment_spec_to_json(const ExperimentSpec& spec);
ExperimentSpec parse_experiment_spec(const std::string& json_text);
ExperimentSpec load_experiment_spec(const std::string& path);

struct ArmResult {
  std::string name;
  std::vector<MetricScores> per_seed;
  MetricScores mean;
};

struct ExperimentReport {
  ArmResult upper_bound;  // trained on target, evaluated on target
  ArmResult lower_bound;  // consistency off, source -> target
  ArmResult proposed;     // consistency on, source -> target
  int consistency_wins = 0;  // seeds where proposed beats lower on accuracy
  std::vector<MetricsRow> rows;
};

// Trains consistency-off and consistency-on models on the source domain
// across `repeats` seeds, evaluates on a held-out target-domain test set,
// and trains the in-domain upper bound on the target domain.
ExperimentReport run_crossdomain_experiment(const ExperimentSpec& spec);

// Single-column CSV of class indices (one per line, optional "class"
// header), the format of the eval subcommand.
std::vector<int> read_class_csv(const std::string& path);

}  // namespace stainkit
