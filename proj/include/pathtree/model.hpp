#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "pathtree/objectives.hpp"
#include "pathtree/prompt_encoder.hpp"
#include "pathtree/slide_attention.hpp"
#include "pathtree/tree_aggregator.hpp"

namespace pathtree {

enum class AttentionVariant { gated, nystrom };
enum class ModelKind { pathtree, linear_probe };

struct ModelConfig {
  ModelKind kind = ModelKind::pathtree;
  AttentionVariant variant = AttentionVariant::gated;
  std::size_t dim = 0;  // embedding dimension, a property of the input files
  std::size_t d_k = 64;
  int landmarks = 64;
  int pinv_iters = 6;
  FusionWeightMode fusion = FusionWeightMode::diagonal;
  LossConfig loss;
};

// Precomputed per-taxonomy inputs shared by every forward pass.
struct ForwardContext {
  const Taxonomy* taxonomy = nullptr;
  Tensor a1, a2;        // adjacencies
  Tensor raw_prompts;   // X_t, (2N-1) x d

  ForwardContext() = default;
  ForwardContext(const Taxonomy& tax, Tensor prompts);
};

struct StepLosses {
  double total = 0.0;
  double ce = 0.0;
  double match = 0.0;
  double path = 0.0;
};

// Full trainable state for either the PathTree model or the Linear-Probe
// baseline (single pooling head + linear classifier, CE only).
struct PathTreeModel {
  ModelConfig cfg;
  int n_nodes = 0;
  int n_leaves = 0;

  PromptEncoderParams encoder;
  GatedAttentionParams gated;
  MultiheadParams multihead;
  Parameter tau;

  GatedAttentionParams probe_pool;  // single head
  Parameter probe_w;                // N x d
  Parameter probe_b;                // 1 x N

  static PathTreeModel init(const Taxonomy& taxonomy, const ModelConfig& cfg,
                            std::uint64_t seed);

  std::vector<Parameter*> parameters();
  std::size_t parameter_count();

  // Probability row (1 x N) for one slide; optionally exposes the aggregation
  // trace and the gated score matrix.
  Var forward_probs(Tape& tape, const ForwardContext& ctx, Var patches,
                    AggregationTrace* trace = nullptr, Var* gated_scores = nullptr);

  // Training loss per the joint objective (CE alone for the probe).
  Var forward_loss(Tape& tape, const ForwardContext& ctx, Var patches, int label,
                   StepLosses* components = nullptr);

  // Inference helpers (no gradients).
  std::vector<double> predict(const ForwardContext& ctx, const Tensor& patches);

  // Attention scores over patches for one tree node (heatmap export).
  std::vector<double> patch_scores(const ForwardContext& ctx, const Tensor& patches,
                                   int node_id);

  void clamp_tau();
};

}  // namespace pathtree
