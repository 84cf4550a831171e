#pragma once

#include <vector>

#include "pathtree/tape.hpp"
#include "pathtree/taxonomy.hpp"
#include "pathtree/tensor.hpp"

namespace pathtree {

struct LossConfig {
  double lambda_leaf = 0.2;
  double lambda_sibling = 0.1;
  double lambda_parent = 0.002;
  double mu_match = 1.0;
  double mu_path = 1.0;
  double tau_init = 0.07;
  bool squared_triplet = false;  // default: plain L2 distances in the hinge
};

// p_j = softmax_j(cos(t_j, g) / tau) over the leaf prompts in class order.
Var predict_probs(Tape& tape, Var g, Var prompts, const std::vector<int>& leaf_ids, Var tau);
std::vector<double> predict_probs(const Tensor& g, const Tensor& prompts,
                                  const std::vector<int>& leaf_ids, double tau);

// -log p_y with p_y clamped at 1e-12.
Var ce_loss(Tape& tape, Var probs, int label);
double ce_loss(const std::vector<double>& probs, int label);

// Mean squared distance between g and every prompt on the root-to-leaf path
// (root included).
Var path_loss(Tape& tape, Var g, Var prompts, const std::vector<int>& path);
double path_loss(const Tensor& g, const Tensor& prompts, const std::vector<int>& path);

// max(0, D(g, t_pos) - D(g, t_neg) + margin).
Var triplet_loss(Tape& tape, Var g, Var t_pos, Var t_neg, double margin, bool squared = false);
double triplet_loss(const Tensor& g, const Tensor& t_pos, const Tensor& t_neg, double margin,
                    bool squared = false);

// Parent + sibling + averaged other-leaf triplets. When the sibling is itself
// a leaf it is penalized only at lambda_sibling and dropped from the
// other-leaf set; the leaf sum keeps the 1/(N-1) coefficient.
Var match_loss(Tape& tape, Var g, Var prompts, const Taxonomy& taxonomy, int true_leaf_id,
               const LossConfig& cfg);
double match_loss(const Tensor& g, const Tensor& prompts, const Taxonomy& taxonomy,
                  int true_leaf_id, const LossConfig& cfg);

// ce + mu_match * match + mu_path * path.
Var total_loss(Tape& tape, Var ce, Var match, Var path, const LossConfig& cfg);

}  // namespace pathtree
