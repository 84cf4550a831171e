#pragma once

#include <map>

#include "pathtree/tape.hpp"
#include "pathtree/taxonomy.hpp"
#include "pathtree/tensor.hpp"

namespace pathtree {

// Where sibling fusion weights come from:
//  - diagonal: the precomputed diagonal of I T^T (pseudocode semantics),
//  - fused:    dot products of the already-fused child embeddings with their
//              prompt rows (literal equation reading; order-dependent).
enum class FusionWeightMode { diagonal, fused };

struct AggregationTrace {
  Tensor contrast;               // S = I T^T
  std::vector<double> diagonal;  // D
  std::map<int, Tensor> fused;   // node id -> fused embedding (1 x d)
  Tensor global;                 // g = fused[root]
  int fusion_count = 0;          // must equal N-1
};

// softmax(d_alpha, d_beta)-weighted sum of the child embeddings plus the
// node's own slide embedding.
Var fuse_children(Tape& tape, Var b_alpha, Var b_beta, Var d_alpha, Var d_beta, Var i_gamma);
Tensor fuse_children(const Tensor& b_alpha, const Tensor& b_beta, double d_alpha,
                     double d_beta, const Tensor& i_gamma);

// Post-order (left child first) bottom-up fusion over the whole tree.
// Returns g (1 x d); fills `trace` when given.
Var aggregate(Tape& tape, const Taxonomy& taxonomy, Var prompts, Var embeddings,
              FusionWeightMode mode = FusionWeightMode::diagonal,
              AggregationTrace* trace = nullptr);

AggregationTrace aggregate(const Taxonomy& taxonomy, const Tensor& prompts,
                           const Tensor& embeddings,
                           FusionWeightMode mode = FusionWeightMode::diagonal);

}  // namespace pathtree
