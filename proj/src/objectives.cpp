#include "pathtree/objectives.hpp"

#include <cmath>

namespace pathtree {

namespace {

Var cosine(Tape& tape, Var u, Var v) {
  const double nu = norm2(tape.value(u));
  const double nv = norm2(tape.value(v));
  if (nu == 0.0 || nv == 0.0) fail(ErrorCode::ZeroVector, "cosine of zero vector");
  const Var inv_u = tape.reciprocal(tape.sqrt(tape.dot(u, u)));
  const Var inv_v = tape.reciprocal(tape.sqrt(tape.dot(v, v)));
  return tape.mul(tape.dot(u, v), tape.mul(inv_u, inv_v));
}

Var distance(Tape& tape, Var u, Var v, bool squared) {
  const Var diff = tape.sub(u, v);
  const Var sq = tape.dot(diff, diff);
  return squared ? sq : tape.sqrt(sq);
}

}  // namespace

Var predict_probs(Tape& tape, Var g, Var prompts, const std::vector<int>& leaf_ids, Var tau) {
  if (leaf_ids.empty()) fail(ErrorCode::EmptyInput, "no leaves to predict over");
  std::vector<Var> sims;
  sims.reserve(leaf_ids.size());
  for (int leaf : leaf_ids) {
    sims.push_back(cosine(tape, tape.slice_row(prompts, static_cast<std::size_t>(leaf)), g));
  }
  const Var col = tape.stack_rows(sims);  // N x 1
  const Var row = tape.transpose(col);
  return tape.softmax_rows(tape.scale_by(row, tape.reciprocal(tau)));
}

std::vector<double> predict_probs(const Tensor& g, const Tensor& prompts,
                                  const std::vector<int>& leaf_ids, double tau) {
  Tape tape;
  const Var p = predict_probs(tape, tape.constant(g), tape.constant(prompts), leaf_ids,
                              tape.constant(Tensor::scalar(tau)));
  const Tensor& v = tape.value(p);
  std::vector<double> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i];
  return out;
}

Var ce_loss(Tape& tape, Var probs, int label) {
  const Tensor& p = tape.value(probs);
  if (label < 0 || static_cast<std::size_t>(label) >= p.size()) {
    fail(ErrorCode::BadLabel, "label " + std::to_string(label) + " outside probability vector");
  }
  const Var py = tape.clamp_min(tape.pick(probs, 0, static_cast<std::size_t>(label)), 1e-12);
  return tape.scale(tape.log(py), -1.0);
}

double ce_loss(const std::vector<double>& probs, int label) {
  if (label < 0 || static_cast<std::size_t>(label) >= probs.size()) {
    fail(ErrorCode::BadLabel, "label " + std::to_string(label) + " outside probability vector");
  }
  return -std::log(std::max(probs[static_cast<std::size_t>(label)], 1e-12));
}

Var path_loss(Tape& tape, Var g, Var prompts, const std::vector<int>& path) {
  if (path.empty()) fail(ErrorCode::EmptyPath, "path loss over empty path");
  Var acc;
  for (int node : path) {
    const Var d = distance(tape, g, tape.slice_row(prompts, static_cast<std::size_t>(node)),
                           /*squared=*/true);
    acc = acc.valid() ? tape.add(acc, d) : d;
  }
  return tape.scale(acc, 1.0 / static_cast<double>(path.size()));
}

double path_loss(const Tensor& g, const Tensor& prompts, const std::vector<int>& path) {
  Tape tape;
  const Var l = path_loss(tape, tape.constant(g), tape.constant(prompts), path);
  return tape.value(l).scalar_value();
}

Var triplet_loss(Tape& tape, Var g, Var t_pos, Var t_neg, double margin, bool squared) {
  const Var d_pos = distance(tape, g, t_pos, squared);
  const Var d_neg = distance(tape, g, t_neg, squared);
  return tape.relu(tape.add_scalar(tape.sub(d_pos, d_neg), margin));
}

double triplet_loss(const Tensor& g, const Tensor& t_pos, const Tensor& t_neg, double margin,
                    bool squared) {
  Tape tape;
  const Var l = triplet_loss(tape, tape.constant(g), tape.constant(t_pos),
                             tape.constant(t_neg), margin, squared);
  return tape.value(l).scalar_value();
}

Var match_loss(Tape& tape, Var g, Var prompts, const Taxonomy& taxonomy, int true_leaf_id,
               const LossConfig& cfg) {
  const TaxonomyNode& leaf = taxonomy.node(true_leaf_id);
  if (!leaf.is_leaf()) fail(ErrorCode::StructureError, "match loss anchor must be a leaf");

  const auto prompt_row = [&](int id) {
    return tape.slice_row(prompts, static_cast<std::size_t>(id));
  };
  const Var t_pos = prompt_row(true_leaf_id);
  const int parent = leaf.parent;
  const int sibling = taxonomy.sibling_of(true_leaf_id);

  Var loss = triplet_loss(tape, g, t_pos, prompt_row(parent), cfg.lambda_parent,
                          cfg.squared_triplet);
  loss = tape.add(loss, triplet_loss(tape, g, t_pos, prompt_row(sibling), cfg.lambda_sibling,
                                     cfg.squared_triplet));

  Var leaf_sum;
  for (int other : taxonomy.leaf_ids()) {
    if (other == true_leaf_id || other == sibling) continue;
    const Var l = triplet_loss(tape, g, t_pos, prompt_row(other), cfg.lambda_leaf,
                               cfg.squared_triplet);
    leaf_sum = leaf_sum.valid() ? tape.add(leaf_sum, l) : l;
  }
  if (leaf_sum.valid()) {
    loss = tape.add(loss,
                    tape.scale(leaf_sum, 1.0 / static_cast<double>(taxonomy.leaf_count() - 1)));
  }
  return loss;
}

double match_loss(const Tensor& g, const Tensor& prompts, const Taxonomy& taxonomy,
                  int true_leaf_id, const LossConfig& cfg) {
  Tape tape;
  const Var l =
      match_loss(tape, tape.constant(g), tape.constant(prompts), taxonomy, true_leaf_id, cfg);
  return tape.value(l).scalar_value();
}

Var total_loss(Tape& tape, Var ce, Var match, Var path, const LossConfig& cfg) {
  return tape.add(ce, tape.add(tape.scale(match, cfg.mu_match), tape.scale(path, cfg.mu_path)));
}

}  // namespace pathtree
