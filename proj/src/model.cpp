#include "pathtree/model.hpp"

#include <algorithm>

namespace pathtree {

ForwardContext::ForwardContext(const Taxonomy& tax, Tensor prompts) : taxonomy(&tax) {
  auto [down, up] = tax.adjacency();
  a1 = std::move(down);
  a2 = std::move(up);
  raw_prompts = std::move(prompts);
  if (raw_prompts.rows() != static_cast<std::size_t>(tax.node_count())) {
    fail(ErrorCode::DimensionMismatch,
         "prompt embedding file must have one row per taxonomy node (" +
             std::to_string(tax.node_count()) + "), got " + std::to_string(raw_prompts.rows()));
  }
  ensure_finite(raw_prompts, "prompt embeddings");
}

PathTreeModel PathTreeModel::init(const Taxonomy& taxonomy, const ModelConfig& cfg,
                                  std::uint64_t seed) {
  if (cfg.dim == 0) fail(ErrorCode::DimensionMismatch, "model dim must be set from the data");
  PathTreeModel m;
  m.cfg = cfg;
  m.n_nodes = taxonomy.node_count();
  m.n_leaves = taxonomy.leaf_count();
  Rng rng = Rng(seed).stream("init");

  if (cfg.kind == ModelKind::pathtree) {
    m.encoder = PromptEncoderParams::init(cfg.dim, rng);
    if (cfg.variant == AttentionVariant::gated) {
      m.gated = GatedAttentionParams::init("gated", static_cast<std::size_t>(m.n_nodes),
                                           cfg.dim, rng);
    } else {
      m.multihead = MultiheadParams::init(static_cast<std::size_t>(m.n_nodes), cfg.dim,
                                          cfg.d_k, rng);
      m.multihead.opts.landmarks = cfg.landmarks;
      m.multihead.opts.pinv_iters = cfg.pinv_iters;
    }
    m.tau = Parameter("tau", Tensor::scalar(cfg.loss.tau_init));
  } else {
    m.probe_pool = GatedAttentionParams::init("probe.pool", 1, cfg.dim, rng);
    m.probe_w = init_param("probe.w", static_cast<std::size_t>(m.n_leaves), cfg.dim, rng);
    m.probe_b = Parameter("probe.b", Tensor(1, static_cast<std::size_t>(m.n_leaves)));
  }
  return m;
}

std::vector<Parameter*> PathTreeModel::parameters() {
  std::vector<Parameter*> out;
  if (cfg.kind == ModelKind::pathtree) {
    for (Parameter* p : encoder.parameters()) out.push_back(p);
    if (cfg.variant == AttentionVariant::gated) {
      for (Parameter* p : gated.parameters()) out.push_back(p);
    } else {
      for (Parameter* p : multihead.parameters()) out.push_back(p);
    }
    out.push_back(&tau);
  } else {
    for (Parameter* p : probe_pool.parameters()) out.push_back(p);
    out.push_back(&probe_w);
    out.push_back(&probe_b);
  }
  return out;
}

std::size_t PathTreeModel::parameter_count() {
  std::size_t n = 0;
  for (Parameter* p : parameters()) n += p->value.size();
  return n;
}

namespace {

struct ForwardPieces {
  Var prompts;  // encoded T (invalid for the probe)
  Var g;        // global slide feature (invalid for the probe)
  Var probs;
  Var gated_scores;
};

// Shared encode -> attend -> aggregate -> classify pipeline.
ForwardPieces run_pipeline(PathTreeModel& m, Tape& tape, const ForwardContext& ctx,
                           Var patches, AggregationTrace* trace) {
  const Taxonomy& tax = *ctx.taxonomy;
  if (tape.value(patches).cols() != m.cfg.dim) {
    fail(ErrorCode::DimensionMismatch, "patch embedding dim does not match the model");
  }

  ForwardPieces out;
  if (m.cfg.kind == ModelKind::linear_probe) {
    const GatedAttentionOut pooled = gated_attention(tape, patches, m.probe_pool);
    out.gated_scores = pooled.scores;
    const Var logits = tape.add(
        tape.matmul(pooled.embeddings, tape.transpose(tape.parameter(m.probe_w))),
        tape.parameter(m.probe_b));
    out.probs = tape.softmax_rows(logits);
    return out;
  }

  out.prompts = encode_prompts(tape, tape.constant(ctx.raw_prompts), ctx.a1, ctx.a2, m.encoder);
  Var embeddings;
  if (m.cfg.variant == AttentionVariant::gated) {
    const GatedAttentionOut attended = gated_attention(tape, patches, m.gated);
    out.gated_scores = attended.scores;
    embeddings = attended.embeddings;
  } else {
    embeddings = multihead_embed(tape, patches, m.multihead);
  }
  out.g = aggregate(tape, tax, out.prompts, embeddings, m.cfg.fusion, trace);
  out.probs = predict_probs(tape, out.g, out.prompts, tax.leaf_ids(), tape.parameter(m.tau));
  return out;
}

}  // namespace

Var PathTreeModel::forward_probs(Tape& tape, const ForwardContext& ctx, Var patches,
                                 AggregationTrace* trace, Var* gated_scores) {
  const ForwardPieces pieces = run_pipeline(*this, tape, ctx, patches, trace);
  if (gated_scores != nullptr) *gated_scores = pieces.gated_scores;
  return pieces.probs;
}

Var PathTreeModel::forward_loss(Tape& tape, const ForwardContext& ctx, Var patches, int label,
                                StepLosses* components) {
  const Taxonomy& tax = *ctx.taxonomy;
  if (label < 0 || label >= n_leaves) {
    fail(ErrorCode::BadLabel, "leaf class " + std::to_string(label));
  }
  const ForwardPieces pieces = run_pipeline(*this, tape, ctx, patches, nullptr);
  const Var ce = ce_loss(tape, pieces.probs, label);

  if (cfg.kind == ModelKind::linear_probe) {
    if (components != nullptr) {
      components->ce = tape.value(ce).scalar_value();
      components->total = components->ce;
      components->match = components->path = 0.0;
    }
    return ce;
  }

  const int leaf_node = tax.leaf_ids()[static_cast<std::size_t>(label)];
  const Var match = match_loss(tape, pieces.g, pieces.prompts, tax, leaf_node, cfg.loss);
  const Var path = path_loss(tape, pieces.g, pieces.prompts, tax.find_path(leaf_node));
  const Var total = total_loss(tape, ce, match, path, cfg.loss);
  if (components != nullptr) {
    components->ce = tape.value(ce).scalar_value();
    components->match = tape.value(match).scalar_value();
    components->path = tape.value(path).scalar_value();
    components->total = tape.value(total).scalar_value();
  }
  return total;
}

std::vector<double> PathTreeModel::predict(const ForwardContext& ctx, const Tensor& patches) {
  Tape tape;
  const Var probs = forward_probs(tape, ctx, tape.constant(patches));
  const Tensor& v = tape.value(probs);
  return std::vector<double>(v.data(), v.data() + v.size());
}

std::vector<double> PathTreeModel::patch_scores(const ForwardContext& ctx,
                                                const Tensor& patches, int node_id) {
  if (node_id < 0 || node_id >= n_nodes) {
    fail(ErrorCode::UnknownNode, "node id " + std::to_string(node_id));
  }
  if (cfg.kind == ModelKind::linear_probe || cfg.variant == AttentionVariant::gated) {
    Tape tape;
    Var scores;
    forward_probs(tape, ctx, tape.constant(patches), nullptr, &scores);
    const Tensor& a = tape.value(scores);
    const std::size_t row = cfg.kind == ModelKind::linear_probe
                                ? 0
                                : static_cast<std::size_t>(node_id);
    std::vector<double> out(a.cols());
    for (std::size_t j = 0; j < a.cols(); ++j) out[j] = a.at(row, j);
    return out;
  }
  return nystrom_patch_scores(patches, multihead.heads[static_cast<std::size_t>(node_id)],
                              multihead.opts);
}

void PathTreeModel::clamp_tau() {
  if (cfg.kind == ModelKind::pathtree && tau.value[0] < 1e-4) tau.value[0] = 1e-4;
}

}  // namespace pathtree
