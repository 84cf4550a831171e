#pragma once

#include <string>
#include <vector>

#include "pathtree/taxonomy.hpp"

namespace pathtree {

struct EvalRecord {
  std::string slide_id;
  int true_class = -1;
  std::vector<double> probs;      // N leaf probabilities, sum 1
  int pred_class = -1;            // argmax, ties to the lowest index
  std::vector<int> true_set;      // hierarchical label sets (node ids, root
  std::vector<int> pred_set;      // excluded, sorted ascending)
};

EvalRecord make_record(const Taxonomy& taxonomy, std::string slide_id, int true_class,
                       std::vector<double> probs);

struct PlanarMetrics {
  double accuracy = 0.0;
  double weighted_f1 = 0.0;
};

// ACC and support-weighted F1 over leaf classes.
PlanarMetrics planar_metrics(const std::vector<EvalRecord>& records);

// One-vs-rest AUC per class via the rank statistic (ties counted 1/2),
// macro-averaged over classes with at least one positive and one negative.
double macro_auc(const std::vector<EvalRecord>& records);

struct HierMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

// Micro-aggregated set overlap between true and predicted label sets.
HierMetrics hier_metrics(const std::vector<EvalRecord>& records);

// Coarse projection: probabilities sum within groups, argmax with ties to the
// lowest coarse index. Label sets are carried through untouched (they refer
// to the fine taxonomy and are not used by coarse planar metrics).
std::vector<EvalRecord> coarse_project(const std::vector<EvalRecord>& records,
                                       const std::vector<int>& leaf_to_coarse);

struct MetricsReport {
  PlanarMetrics planar;
  double auc = 0.0;
  bool auc_defined = false;
  HierMetrics hier;
  std::size_t samples = 0;

  std::string to_text(const std::string& prefix = "") const;   // key=value lines
  std::string to_json_fragment() const;
};

MetricsReport full_metrics(const std::vector<EvalRecord>& records);

}  // namespace pathtree
