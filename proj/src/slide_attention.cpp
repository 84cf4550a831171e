#include "pathtree/slide_attention.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Dense>

namespace pathtree {

GatedAttentionParams GatedAttentionParams::init(const std::string& prefix, std::size_t n_nodes,
                                                std::size_t dim, Rng& rng) {
  if (dim % 2 != 0) fail(ErrorCode::DimensionMismatch, "gated attention needs an even embedding dim");
  GatedAttentionParams p;
  p.u1 = init_param(prefix + ".u1", dim / 2, dim, rng);
  p.u2 = init_param(prefix + ".u2", dim / 2, dim, rng);
  p.w = init_param(prefix + ".w", n_nodes, dim / 2, rng);
  return p;
}

std::vector<Parameter*> GatedAttentionParams::parameters() { return {&u1, &u2, &w}; }

GatedAttentionOut gated_attention(Tape& tape, Var patches, GatedAttentionParams& params) {
  const Tensor& xp = tape.value(patches);
  if (xp.rows() == 0) fail(ErrorCode::EmptyBag, "gated attention on empty bag");
  if (xp.cols() != params.u1.value.cols()) {
    fail(ErrorCode::ShapeMismatch, "patch dim vs attention params");
  }
  const Var xp_t = tape.transpose(patches);                          // d x M
  const Var gate_t = tape.tanh(tape.matmul(tape.parameter(params.u1), xp_t));   // (d/2) x M
  const Var gate_s = tape.sigmoid(tape.matmul(tape.parameter(params.u2), xp_t));
  const Var raw = tape.matmul(tape.parameter(params.w), tape.mul(gate_t, gate_s));  // n x M
  const Var scores = tape.softmax_rows(raw);
  const Var embeddings = tape.matmul(scores, patches);
  return {scores, embeddings};
}

std::pair<Tensor, Tensor> gated_attention(const Tensor& patches, GatedAttentionParams& params) {
  Tape tape;
  const GatedAttentionOut out = gated_attention(tape, tape.constant(patches), params);
  return {tape.value(out.scores), tape.value(out.embeddings)};
}

// ----------------------------------------------------------------- Nystrom

NystromHeadParams NystromHeadParams::init(const std::string& prefix, std::size_t dim,
                                          std::size_t d_k, Rng& rng) {
  NystromHeadParams p;
  p.wq = init_param(prefix + ".wq", dim, d_k, rng);
  p.wk = init_param(prefix + ".wk", dim, d_k, rng);
  p.wv = init_param(prefix + ".wv", dim, d_k, rng);
  p.wo = init_param(prefix + ".wo", d_k, dim, rng);
  return p;
}

std::vector<Parameter*> NystromHeadParams::parameters() { return {&wq, &wk, &wv, &wo}; }

MultiheadParams MultiheadParams::init(std::size_t n_nodes, std::size_t dim, std::size_t d_k,
                                      Rng& rng) {
  MultiheadParams p;
  p.d_k = d_k;
  p.heads.reserve(n_nodes);
  for (std::size_t h = 0; h < n_nodes; ++h) {
    p.heads.push_back(
        NystromHeadParams::init("multihead.h" + std::to_string(h), dim, d_k, rng));
  }
  return p;
}

std::vector<Parameter*> MultiheadParams::parameters() {
  std::vector<Parameter*> out;
  for (NystromHeadParams& h : heads) {
    for (Parameter* p : h.parameters()) out.push_back(p);
  }
  return out;
}

Tensor pinv_exact(const Tensor& a) {
  Eigen::MatrixXd m(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) m(i, j) = a.at(i, j);
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const double tol = std::numeric_limits<double>::epsilon() *
                     static_cast<double>(std::max(a.rows(), a.cols())) *
                     svd.singularValues()(0);
  Eigen::VectorXd inv_sv = svd.singularValues();
  for (Eigen::Index i = 0; i < inv_sv.size(); ++i) {
    inv_sv(i) = inv_sv(i) > tol ? 1.0 / inv_sv(i) : 0.0;
  }
  const Eigen::MatrixXd pinv =
      svd.matrixV() * inv_sv.asDiagonal() * svd.matrixU().transpose();
  Tensor out(a.cols(), a.rows());
  for (std::size_t i = 0; i < out.rows(); ++i)
    for (std::size_t j = 0; j < out.cols(); ++j) out.at(i, j) = pinv(i, j);
  return out;
}

namespace {

// Contiguous segment-mean pooling matrix (m x M).
Tensor landmark_pool(std::size_t m, std::size_t total) {
  Tensor p(m, total);
  for (std::size_t s = 0; s < m; ++s) {
    const std::size_t lo = s * total / m;
    const std::size_t hi = (s + 1) * total / m;
    const double w = 1.0 / static_cast<double>(hi - lo);
    for (std::size_t i = lo; i < hi; ++i) p.at(s, i) = w;
  }
  return p;
}

// Iterative Moore-Penrose approximation for the landmark kernel. Stays on
// tape so gradients flow through the iteration and its init scaling.
Var pinv_newton(Tape& tape, Var a, int iters) {
  const std::size_t m = tape.value(a).rows();
  const Var a_t = tape.transpose(a);
  const Var inf_norm = tape.max_all(tape.row_sums(a));    // entries are positive
  const Var one_norm = tape.max_all(tape.row_sums(a_t));
  Var z = tape.scale_by(a_t, tape.reciprocal(tape.mul(one_norm, inf_norm)));
  Tensor eye7 = scale(Tensor::identity(m), 7.0);
  Tensor eye13 = scale(Tensor::identity(m), 13.0);
  Tensor eye15 = scale(Tensor::identity(m), 15.0);
  const Var c7 = tape.constant(std::move(eye7));
  const Var c13 = tape.constant(std::move(eye13));
  const Var c15 = tape.constant(std::move(eye15));
  for (int it = 0; it < iters; ++it) {
    const Var az = tape.matmul(a, z);
    const Var t1 = tape.sub(c7, az);
    const Var t2 = tape.sub(c15, tape.matmul(az, t1));
    const Var t3 = tape.sub(c13, tape.matmul(az, t2));
    z = tape.scale(tape.matmul(z, t3), 0.25);
  }
  return z;
}

struct NystromFactors {
  Var out;          // M x d_k
  Var kernel_rows;  // landmark path: F1 (M x m); exact path: full attention (M x M)
  bool factorized = false;
  Var pinv_mid, f3;
};

NystromFactors nystrom_core(Tape& tape, Var x, NystromHeadParams& head,
                            const NystromOptions& opts) {
  const Tensor& xv = tape.value(x);
  const std::size_t total = xv.rows();
  if (total == 0) fail(ErrorCode::EmptyBag, "nystrom attention on empty bag");
  if (xv.cols() != head.wq.value.rows()) fail(ErrorCode::ShapeMismatch, "patch dim vs head params");
  const std::size_t d_k = head.wq.value.cols();
  const double qk_scale = std::pow(static_cast<double>(d_k), -0.25);

  const Var q = tape.scale(tape.matmul(x, tape.parameter(head.wq)), qk_scale);
  const Var k = tape.scale(tape.matmul(x, tape.parameter(head.wk)), qk_scale);
  const Var v = tape.matmul(x, tape.parameter(head.wv));

  const std::size_t m = std::min<std::size_t>(
      total, static_cast<std::size_t>(std::max(1, opts.landmarks)));

  NystromFactors f;
  if (m >= total && !opts.force_landmark_path) {
    const Var attn = tape.softmax_rows(tape.matmul(q, tape.transpose(k)));
    f.out = tape.matmul(attn, v);
    f.kernel_rows = attn;
    return f;
  }

  const Var pool = tape.constant(landmark_pool(m, total));
  const Var q_l = tape.matmul(pool, q);  // m x d_k
  const Var k_l = tape.matmul(pool, k);
  const Var f1 = tape.softmax_rows(tape.matmul(q, tape.transpose(k_l)));    // M x m
  const Var f2 = tape.softmax_rows(tape.matmul(q_l, tape.transpose(k_l))); // m x m
  const Var f3 = tape.softmax_rows(tape.matmul(q_l, tape.transpose(k)));   // m x M
  const Var mid = opts.exact_pinv ? tape.constant(pinv_exact(tape.value(f2)))
                                  : pinv_newton(tape, f2, opts.pinv_iters);
  f.out = tape.matmul(f1, tape.matmul(mid, tape.matmul(f3, v)));
  f.kernel_rows = f1;
  f.pinv_mid = mid;
  f.f3 = f3;
  f.factorized = true;
  return f;
}

}  // namespace

Var nystrom_attention(Tape& tape, Var x, NystromHeadParams& head, const NystromOptions& opts) {
  return nystrom_core(tape, x, head, opts).out;
}

Tensor nystrom_attention(const Tensor& x, NystromHeadParams& head, const NystromOptions& opts) {
  Tape tape;
  const Var out = nystrom_attention(tape, tape.constant(x), head, opts);
  return tape.value(out);
}

Var multihead_embed(Tape& tape, Var patches, MultiheadParams& params) {
  if (tape.value(patches).rows() == 0) fail(ErrorCode::EmptyBag, "multihead embed on empty bag");
  std::vector<Var> rows;
  rows.reserve(params.heads.size());
  for (NystromHeadParams& head : params.heads) {
    const Var attended = nystrom_attention(tape, patches, head, params.opts);
    const Var pooled = tape.mean_rows(attended);                     // 1 x d_k
    rows.push_back(tape.matmul(pooled, tape.parameter(head.wo)));    // 1 x d
  }
  return tape.stack_rows(rows);
}

Tensor multihead_embed(const Tensor& patches, MultiheadParams& params) {
  Tape tape;
  const Var out = multihead_embed(tape, tape.constant(patches), params);
  return tape.value(out);
}

std::vector<double> nystrom_patch_scores(const Tensor& patches, NystromHeadParams& head,
                                         const NystromOptions& opts) {
  Tape tape;
  const NystromFactors f = nystrom_core(tape, tape.constant(patches), head, opts);
  // Column sums of the effective attention (exact path: softmax(QK^T);
  // landmark path: F1 pinv F3). The landmark chain is summed left to right so
  // the M x M product is never materialized.
  Tensor received(1, patches.rows());
  if (!f.factorized) {
    const Tensor& attn = tape.value(f.kernel_rows);
    for (std::size_t i = 0; i < attn.rows(); ++i)
      for (std::size_t j = 0; j < attn.cols(); ++j) received[j] += attn.at(i, j);
  } else {
    const Tensor& f1 = tape.value(f.kernel_rows);
    Tensor col_mass(1, f1.cols());
    for (std::size_t i = 0; i < f1.rows(); ++i)
      for (std::size_t j = 0; j < f1.cols(); ++j) col_mass[j] += f1.at(i, j);
    received = matmul(matmul(col_mass, tape.value(f.pinv_mid)), tape.value(f.f3));
  }
  double total = 0.0;
  for (std::size_t j = 0; j < received.size(); ++j) total += received[j];
  if (total == 0.0) fail(ErrorCode::ZeroVector, "degenerate attention mass");
  std::vector<double> out(received.size());
  for (std::size_t j = 0; j < out.size(); ++j) out[j] = received[j] / total;
  return out;
}

}  // namespace pathtree
