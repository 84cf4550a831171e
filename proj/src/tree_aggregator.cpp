#include "pathtree/tree_aggregator.hpp"

namespace pathtree {

Var fuse_children(Tape& tape, Var b_alpha, Var b_beta, Var d_alpha, Var d_beta, Var i_gamma) {
  // softmax over two scalars == sigmoid of their difference (stable).
  const Var s_alpha = tape.sigmoid(tape.sub(d_alpha, d_beta));
  const Var s_beta = tape.sub(tape.constant(Tensor::scalar(1.0)), s_alpha);
  return tape.add(tape.add(tape.scale_by(b_alpha, s_alpha), tape.scale_by(b_beta, s_beta)),
                  i_gamma);
}

Tensor fuse_children(const Tensor& b_alpha, const Tensor& b_beta, double d_alpha,
                     double d_beta, const Tensor& i_gamma) {
  Tape tape;
  const Var out = fuse_children(tape, tape.constant(b_alpha), tape.constant(b_beta),
                                tape.constant(Tensor::scalar(d_alpha)),
                                tape.constant(Tensor::scalar(d_beta)), tape.constant(i_gamma));
  return tape.value(out);
}

namespace {

struct AggregateCtx {
  Tape& tape;
  const Taxonomy& taxonomy;
  Var prompts;
  Var embeddings;
  FusionWeightMode mode;
  std::vector<Var> diag;  // per-node d_v, built once in diagonal mode
  AggregationTrace* trace;
  int fusions = 0;
};

Var fuse_subtree(AggregateCtx& ctx, int node_id) {
  const TaxonomyNode& node = ctx.taxonomy.node(node_id);
  Var fused;
  if (node.is_leaf()) {
    fused = ctx.tape.slice_row(ctx.embeddings, static_cast<std::size_t>(node_id));
  } else {
    const int alpha = node.children[0];
    const int beta = node.children[1];
    const Var b_alpha = fuse_subtree(ctx, alpha);
    const Var b_beta = fuse_subtree(ctx, beta);
    Var d_alpha, d_beta;
    if (ctx.mode == FusionWeightMode::diagonal) {
      d_alpha = ctx.diag[static_cast<std::size_t>(alpha)];
      d_beta = ctx.diag[static_cast<std::size_t>(beta)];
    } else {
      d_alpha = ctx.tape.dot(b_alpha,
                             ctx.tape.slice_row(ctx.prompts, static_cast<std::size_t>(alpha)));
      d_beta = ctx.tape.dot(b_beta,
                            ctx.tape.slice_row(ctx.prompts, static_cast<std::size_t>(beta)));
    }
    const Var own = ctx.tape.slice_row(ctx.embeddings, static_cast<std::size_t>(node_id));
    fused = fuse_children(ctx.tape, b_alpha, b_beta, d_alpha, d_beta, own);
    ++ctx.fusions;
  }
  if (ctx.trace != nullptr) ctx.trace->fused[node_id] = ctx.tape.value(fused);
  return fused;
}

}  // namespace

Var aggregate(Tape& tape, const Taxonomy& taxonomy, Var prompts, Var embeddings,
              FusionWeightMode mode, AggregationTrace* trace) {
  const std::size_t n = static_cast<std::size_t>(taxonomy.node_count());
  // tape.value() references are invalidated by op creation; finish every use
  // of them before building the graph.
  {
    const Tensor& t_val = tape.value(prompts);
    const Tensor& i_val = tape.value(embeddings);
    if (t_val.rows() != n || i_val.rows() != n || t_val.cols() != i_val.cols()) {
      fail(ErrorCode::ShapeMismatch, "prompt/slide matrices must both be (2N-1) x d");
    }
    if (trace != nullptr) {
      trace->contrast = matmul(i_val, transpose(t_val));
      trace->diagonal.resize(n);
      for (std::size_t v = 0; v < n; ++v) trace->diagonal[v] = trace->contrast.at(v, v);
    }
  }

  AggregateCtx ctx{tape, taxonomy, prompts, embeddings, mode, {}, trace, 0};
  if (mode == FusionWeightMode::diagonal) {
    ctx.diag.reserve(n);
    for (std::size_t v = 0; v < n; ++v) {
      ctx.diag.push_back(
          tape.dot(tape.slice_row(embeddings, v), tape.slice_row(prompts, v)));
    }
  }

  const Var g = fuse_subtree(ctx, taxonomy.root_id());
  if (ctx.fusions != taxonomy.leaf_count() - 1) {
    fail(ErrorCode::StructureError, "unexpected fusion count");
  }
  if (trace != nullptr) {
    trace->global = tape.value(g);
    trace->fusion_count = ctx.fusions;
  }
  return g;
}

AggregationTrace aggregate(const Taxonomy& taxonomy, const Tensor& prompts,
                           const Tensor& embeddings, FusionWeightMode mode) {
  Tape tape;
  AggregationTrace trace;
  aggregate(tape, taxonomy, tape.constant(prompts), tape.constant(embeddings), mode, &trace);
  return trace;
}

}  // namespace pathtree
