#include "pathtree/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include <json.hpp>

namespace pathtree {

EvalRecord make_record(const Taxonomy& taxonomy, std::string slide_id, int true_class,
                       std::vector<double> probs) {
  const int n = taxonomy.leaf_count();
  if (static_cast<int>(probs.size()) != n) {
    fail(ErrorCode::DimensionMismatch, "probability vector size vs leaf count");
  }
  if (true_class < 0 || true_class >= n) {
    fail(ErrorCode::BadLabel, "class " + std::to_string(true_class) + " out of range");
  }
  EvalRecord r;
  r.slide_id = std::move(slide_id);
  r.true_class = true_class;
  r.probs = std::move(probs);
  r.pred_class = 0;
  for (int j = 1; j < n; ++j) {
    if (r.probs[static_cast<std::size_t>(j)] > r.probs[static_cast<std::size_t>(r.pred_class)]) {
      r.pred_class = j;
    }
  }
  r.true_set = taxonomy.label_set(taxonomy.leaf_ids()[static_cast<std::size_t>(true_class)]);
  r.pred_set = taxonomy.label_set(taxonomy.leaf_ids()[static_cast<std::size_t>(r.pred_class)]);
  return r;
}

PlanarMetrics planar_metrics(const std::vector<EvalRecord>& records) {
  if (records.empty()) fail(ErrorCode::EmptyEval, "no records");
  const int n_classes = static_cast<int>(records.front().probs.size());
  std::vector<double> tp(n_classes, 0.0), fp(n_classes, 0.0), fn(n_classes, 0.0);
  std::vector<double> support(n_classes, 0.0);
  double correct = 0.0;
  for (const EvalRecord& r : records) {
    support[static_cast<std::size_t>(r.true_class)] += 1.0;
    if (r.pred_class == r.true_class) {
      correct += 1.0;
      tp[static_cast<std::size_t>(r.true_class)] += 1.0;
    } else {
      fp[static_cast<std::size_t>(r.pred_class)] += 1.0;
      fn[static_cast<std::size_t>(r.true_class)] += 1.0;
    }
  }
  PlanarMetrics out;
  out.accuracy = correct / static_cast<double>(records.size());
  double wf1 = 0.0;
  for (int c = 0; c < n_classes; ++c) {
    const std::size_t ci = static_cast<std::size_t>(c);
    const double denom_p = tp[ci] + fp[ci];
    const double denom_r = tp[ci] + fn[ci];
    double f1 = 0.0;
    if (denom_p > 0.0 || denom_r > 0.0) {
      const double prec = denom_p > 0.0 ? tp[ci] / denom_p : 0.0;
      const double rec = denom_r > 0.0 ? tp[ci] / denom_r : 0.0;
      f1 = (prec + rec) > 0.0 ? 2.0 * prec * rec / (prec + rec) : 0.0;
    }
    wf1 += support[ci] / static_cast<double>(records.size()) * f1;
  }
  out.weighted_f1 = wf1;
  return out;
}

double macro_auc(const std::vector<EvalRecord>& records) {
  if (records.empty()) fail(ErrorCode::EmptyEval, "no records");
  const std::size_t n_classes = records.front().probs.size();
  double sum = 0.0;
  int contributing = 0;
  for (std::size_t c = 0; c < n_classes; ++c) {
    std::vector<std::pair<double, int>> scored;  // (score, is_positive)
    std::size_t pos = 0;
    for (const EvalRecord& r : records) {
      const bool is_pos = static_cast<std::size_t>(r.true_class) == c;
      scored.emplace_back(r.probs[c], is_pos ? 1 : 0);
      pos += is_pos ? 1 : 0;
    }
    const std::size_t neg = scored.size() - pos;
    if (pos == 0 || neg == 0) continue;
    std::sort(scored.begin(), scored.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    // Mann-Whitney rank sum with midranks for ties.
    double rank_sum_pos = 0.0;
    std::size_t i = 0;
    while (i < scored.size()) {
      std::size_t j = i;
      while (j < scored.size() && scored[j].first == scored[i].first) ++j;
      const double midrank = 0.5 * static_cast<double>(i + 1 + j);  // ranks are 1-based
      for (std::size_t k = i; k < j; ++k) {
        if (scored[k].second == 1) rank_sum_pos += midrank;
      }
      i = j;
    }
    const double auc =
        (rank_sum_pos - static_cast<double>(pos) * (static_cast<double>(pos) + 1.0) / 2.0) /
        (static_cast<double>(pos) * static_cast<double>(neg));
    sum += auc;
    ++contributing;
  }
  if (contributing == 0) fail(ErrorCode::NoContributingClass, "no class has both positives and negatives");
  return sum / static_cast<double>(contributing);
}

HierMetrics hier_metrics(const std::vector<EvalRecord>& records) {
  if (records.empty()) fail(ErrorCode::EmptyEval, "no records");
  double inter = 0.0, total_true = 0.0, total_pred = 0.0;
  for (const EvalRecord& r : records) {
    std::vector<int> common;
    std::set_intersection(r.true_set.begin(), r.true_set.end(), r.pred_set.begin(),
                          r.pred_set.end(), std::back_inserter(common));
    inter += static_cast<double>(common.size());
    total_true += static_cast<double>(r.true_set.size());
    total_pred += static_cast<double>(r.pred_set.size());
  }
  HierMetrics out;
  out.precision = total_pred > 0.0 ? inter / total_pred : 0.0;
  out.recall = total_true > 0.0 ? inter / total_true : 0.0;
  out.f1 = (out.precision + out.recall) > 0.0
               ? 2.0 * out.precision * out.recall / (out.precision + out.recall)
               : 0.0;
  return out;
}

std::vector<EvalRecord> coarse_project(const std::vector<EvalRecord>& records,
                                       const std::vector<int>& leaf_to_coarse) {
  if (records.empty()) return {};
  const std::size_t n_fine = records.front().probs.size();
  if (leaf_to_coarse.size() != n_fine) {
    fail(ErrorCode::IncompleteGrouping, "grouping must cover every leaf class");
  }
  int n_coarse = 0;
  for (int g : leaf_to_coarse) {
    if (g < 0) fail(ErrorCode::IncompleteGrouping, "negative coarse class");
    n_coarse = std::max(n_coarse, g + 1);
  }
  std::vector<EvalRecord> out;
  out.reserve(records.size());
  for (const EvalRecord& r : records) {
    EvalRecord c = r;
    c.probs.assign(static_cast<std::size_t>(n_coarse), 0.0);
    for (std::size_t j = 0; j < n_fine; ++j) {
      c.probs[static_cast<std::size_t>(leaf_to_coarse[j])] += r.probs[j];
    }
    c.true_class = leaf_to_coarse[static_cast<std::size_t>(r.true_class)];
    c.pred_class = 0;
    for (int j = 1; j < n_coarse; ++j) {
      if (c.probs[static_cast<std::size_t>(j)] > c.probs[static_cast<std::size_t>(c.pred_class)]) {
        c.pred_class = j;
      }
    }
    out.push_back(std::move(c));
  }
  return out;
}

MetricsReport full_metrics(const std::vector<EvalRecord>& records) {
  MetricsReport report;
  report.planar = planar_metrics(records);
  try {
    report.auc = macro_auc(records);
    report.auc_defined = true;
  } catch (const Error& e) {
    if (e.code() != ErrorCode::NoContributingClass) throw;
  }
  report.hier = hier_metrics(records);
  report.samples = records.size();
  return report;
}

std::string MetricsReport::to_text(const std::string& prefix) const {
  std::ostringstream os;
  os.precision(6);
  os << std::fixed;
  os << prefix << "samples=" << samples << "\n";
  os << prefix << "acc=" << planar.accuracy << "\n";
  os << prefix << "weighted_f1=" << planar.weighted_f1 << "\n";
  if (auc_defined) os << prefix << "macro_auc=" << auc << "\n";
  os << prefix << "h_precision=" << hier.precision << "\n";
  os << prefix << "h_recall=" << hier.recall << "\n";
  os << prefix << "h_f1=" << hier.f1 << "\n";
  return os.str();
}

std::string MetricsReport::to_json_fragment() const {
  nlohmann::json j;
  j["samples"] = samples;
  j["acc"] = planar.accuracy;
  j["weighted_f1"] = planar.weighted_f1;
  if (auc_defined) j["macro_auc"] = auc;
  j["h_precision"] = hier.precision;
  j["h_recall"] = hier.recall;
  j["h_f1"] = hier.f1;
  return j.dump();
}

}  // namespace pathtree
