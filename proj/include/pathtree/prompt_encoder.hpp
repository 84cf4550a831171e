#pragma once

#include <vector>

#include "pathtree/tape.hpp"
#include "pathtree/tensor.hpp"

namespace pathtree {

// Single-head graph attention layer, no biases. Attention logits use
// LeakyReLU(0.2); self-loops are added internally so every node attends to
// at least itself.
struct GatLayerParams {
  Parameter weight;  // d_out x d_in
  Parameter a_src;   // 1 x d_out
  Parameter a_dst;   // 1 x d_out

  static GatLayerParams init(const std::string& name, std::size_t d_out, std::size_t d_in,
                             Rng& rng);
  std::vector<Parameter*> parameters();
};

// Two stacked GAT layers per edge direction plus the dual-interaction fusion.
struct PromptEncoderParams {
  GatLayerParams down1, down2;  // parent->child direction (A1)
  GatLayerParams up1, up2;      // child->parent direction (A2)
  Parameter w_sum;              // d x d, combines H1 + H2
  Parameter w_prod;             // d x d, combines H1 (*) H2

  static PromptEncoderParams init(std::size_t dim, Rng& rng);
  std::vector<Parameter*> parameters();
};

// Pre-activation GAT output: row v aggregates W h_u over in-neighbors u of v
// (self-loop included) with masked-softmax attention.
Var gat_layer(Tape& tape, Var features, const Tensor& adjacency, GatLayerParams& params);

// Hierarchy-aware prompt representations T, row order preserved.
Var encode_prompts(Tape& tape, Var raw_prompts, const Tensor& a1, const Tensor& a2,
                   PromptEncoderParams& params);

// Inference convenience: runs the tape path on constants.
Tensor encode_prompts(const Tensor& raw_prompts, const Tensor& a1, const Tensor& a2,
                      PromptEncoderParams& params);

}  // namespace pathtree
