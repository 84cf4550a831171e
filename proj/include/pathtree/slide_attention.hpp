#pragma once

#include <string>
#include <vector>

#include "pathtree/tape.hpp"
#include "pathtree/tensor.hpp"

namespace pathtree {

// ------------------------------------------------------------ gated variant
// Scores = W (tanh(U1 Xp^T) (*) sigm(U2 Xp^T)); one row per tree node,
// softmax-normalized across the M patches; I = A Xp.
struct GatedAttentionParams {
  Parameter u1;  // (d/2) x d
  Parameter u2;  // (d/2) x d
  Parameter w;   // n_nodes x (d/2)

  static GatedAttentionParams init(const std::string& prefix, std::size_t n_nodes,
                                   std::size_t dim, Rng& rng);  // rejects odd dim
  std::vector<Parameter*> parameters();
};

struct GatedAttentionOut {
  Var scores;      // n_nodes x M, rows sum to 1
  Var embeddings;  // n_nodes x d
};

GatedAttentionOut gated_attention(Tape& tape, Var patches, GatedAttentionParams& params);

// Inference helper returning plain tensors {A, I}.
std::pair<Tensor, Tensor> gated_attention(const Tensor& patches, GatedAttentionParams& params);

// ---------------------------------------------------------- Nystrom variant
struct NystromOptions {
  int landmarks = 64;   // clamped to M
  int pinv_iters = 6;   // Newton-Schulz steps for the landmark kernel inverse
  bool exact_pinv = false;        // test mode: SVD pseudo-inverse (not differentiable)
  bool force_landmark_path = false;  // test mode: keep the factorization at m >= M
};

struct NystromHeadParams {
  Parameter wq, wk, wv;  // d x d_k
  Parameter wo;          // d_k x d

  static NystromHeadParams init(const std::string& prefix, std::size_t dim, std::size_t d_k,
                                Rng& rng);
  std::vector<Parameter*> parameters();
};

// Landmark-approximated self-attention, M x d_k. Falls back to exact
// softmax(Q K^T / sqrt(d_k)) V when landmarks >= M (unless forced).
Var nystrom_attention(Tape& tape, Var x, NystromHeadParams& head, const NystromOptions& opts);
Tensor nystrom_attention(const Tensor& x, NystromHeadParams& head, const NystromOptions& opts);

struct MultiheadParams {
  std::vector<NystromHeadParams> heads;  // one per tree node
  std::size_t d_k = 64;
  NystromOptions opts;

  static MultiheadParams init(std::size_t n_nodes, std::size_t dim, std::size_t d_k, Rng& rng);
  std::vector<Parameter*> parameters();
};

// Row h = mean over patches of head h's attention output, projected by Wo.
Var multihead_embed(Tape& tape, Var patches, MultiheadParams& params);
Tensor multihead_embed(const Tensor& patches, MultiheadParams& params);

// Heatmap surrogate: mean attention received per patch under head `h`
// (column means of the effective M x M attention), normalized to sum 1.
std::vector<double> nystrom_patch_scores(const Tensor& patches, NystromHeadParams& head,
                                         const NystromOptions& opts);

// Moore-Penrose pseudo-inverse via SVD with tolerance-based rank truncation.
Tensor pinv_exact(const Tensor& a);

}  // namespace pathtree
