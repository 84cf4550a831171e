#include "pathtree/prompt_encoder.hpp"

#include <cmath>
#include <limits>

namespace pathtree {

namespace {
constexpr double kLeakySlope = 0.2;
}  // namespace

GatLayerParams GatLayerParams::init(const std::string& name, std::size_t d_out,
                                    std::size_t d_in, Rng& rng) {
  GatLayerParams p;
  p.weight = init_param(name + ".weight", d_out, d_in, rng);
  p.a_src = init_param(name + ".a_src", 1, d_out, rng);
  p.a_dst = init_param(name + ".a_dst", 1, d_out, rng);
  return p;
}

std::vector<Parameter*> GatLayerParams::parameters() {
  return {&weight, &a_src, &a_dst};
}

PromptEncoderParams PromptEncoderParams::init(std::size_t dim, Rng& rng) {
  PromptEncoderParams p;
  p.down1 = GatLayerParams::init("encoder.down1", dim, dim, rng);
  p.down2 = GatLayerParams::init("encoder.down2", dim, dim, rng);
  p.up1 = GatLayerParams::init("encoder.up1", dim, dim, rng);
  p.up2 = GatLayerParams::init("encoder.up2", dim, dim, rng);
  p.w_sum = init_param("encoder.w_sum", dim, dim, rng);
  p.w_prod = init_param("encoder.w_prod", dim, dim, rng);
  return p;
}

std::vector<Parameter*> PromptEncoderParams::parameters() {
  std::vector<Parameter*> out;
  for (GatLayerParams* g : {&down1, &down2, &up1, &up2}) {
    for (Parameter* p : g->parameters()) out.push_back(p);
  }
  out.push_back(&w_sum);
  out.push_back(&w_prod);
  return out;
}

Var gat_layer(Tape& tape, Var features, const Tensor& adjacency, GatLayerParams& params) {
  const std::size_t n = tape.value(features).rows();
  if (adjacency.rows() != n || adjacency.cols() != n) {
    fail(ErrorCode::ShapeMismatch, "adjacency does not match feature rows");
  }
  if (tape.value(features).cols() != params.weight.value.cols()) {
    fail(ErrorCode::ShapeMismatch, "gat weight vs feature dim");
  }

  const Var w = tape.parameter(params.weight);
  const Var z = tape.matmul(features, tape.transpose(w));  // n x d_out

  const Var s_src = tape.matmul(z, tape.transpose(tape.parameter(params.a_src)));  // n x 1
  const Var s_dst = tape.matmul(z, tape.transpose(tape.parameter(params.a_dst)));  // n x 1

  Tensor ones_row(1, n);
  ones_row.fill(1.0);
  Tensor ones_col(n, 1);
  ones_col.fill(1.0);
  // logits[u][v] = s_src[u] + s_dst[v]
  const Var logits = tape.add(tape.matmul(s_src, tape.constant(ones_row)),
                              tape.matmul(tape.constant(ones_col), tape.transpose(s_dst)));
  const Var act = tape.leaky_relu(logits, kLeakySlope);

  // Mask out non-edges; self-loops are admitted here rather than stored in A.
  Tensor mask(n, n);
  const double neg_inf = -std::numeric_limits<double>::infinity();
  for (std::size_t u = 0; u < n; ++u) {
    for (std::size_t v = 0; v < n; ++v) {
      mask.at(u, v) = (u == v || adjacency.at(u, v) != 0.0) ? 0.0 : neg_inf;
    }
  }
  const Var masked = tape.add(act, tape.constant(std::move(mask)));

  // Row v of attn holds the softmax over in-neighbors u of v.
  const Var attn = tape.softmax_rows(tape.transpose(masked));
  return tape.matmul(attn, z);
}

Var encode_prompts(Tape& tape, Var raw_prompts, const Tensor& a1, const Tensor& a2,
                   PromptEncoderParams& params) {
  const Var h1 = tape.relu(gat_layer(tape, tape.relu(gat_layer(tape, raw_prompts, a1, params.down1)),
                                     a1, params.down2));
  const Var h2 = tape.relu(gat_layer(tape, tape.relu(gat_layer(tape, raw_prompts, a2, params.up1)),
                                     a2, params.up2));
  const Var combined =
      tape.add(tape.matmul(tape.add(h1, h2), tape.transpose(tape.parameter(params.w_sum))),
               tape.matmul(tape.mul(h1, h2), tape.transpose(tape.parameter(params.w_prod))));
  return tape.relu(combined);
}

Tensor encode_prompts(const Tensor& raw_prompts, const Tensor& a1, const Tensor& a2,
                      PromptEncoderParams& params) {
  Tape tape;
  const Var out = encode_prompts(tape, tape.constant(raw_prompts), a1, a2, params);
  return tape.value(out);
}

}  // namespace pathtree
