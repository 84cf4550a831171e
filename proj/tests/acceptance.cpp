// Acceptance suite: one pass/fail line per criterion, exit 0 iff all pass.
// Usage: acceptance [path-to-cli] [work-dir]
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "pathtree/gradcheck.hpp"
#include "pathtree/trainer.hpp"

using namespace pathtree;
namespace fs = std::filesystem;

namespace {

struct Harness {
  int failed = 0;
  std::vector<std::string> notes;

  void criterion(int number, const std::string& name, double time_limit_s,
                 const std::function<bool(std::string&)>& body) {
    std::string detail;
    bool ok = false;
    const auto start = std::chrono::steady_clock::now();
    try {
      ok = body(detail);
    } catch (const std::exception& e) {
      detail = std::string("exception: ") + e.what();
      ok = false;
    }
    const double elapsed =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (ok && time_limit_s > 0.0 && elapsed > time_limit_s) {
      ok = false;
      detail += " [exceeded time limit]";
    }
    std::printf("[%s] criterion %d: %s (%.2fs)%s%s\n", ok ? "PASS" : "FAIL", number,
                name.c_str(), elapsed, detail.empty() ? "" : " -- ", detail.c_str());
    std::fflush(stdout);
    if (!ok) ++failed;
  }
};

std::string g_cli;
fs::path g_work;

int run_cli(const std::string& args) {
  const std::string cmd = g_cli + " " + args + " >> " + (g_work / "cli.log").string() + " 2>&1";
  const int rc = std::system(cmd.c_str());
  return rc < 0 ? rc : WEXITSTATUS(rc);
}

// ------------------------------------------------------------- oracles

std::string random_tree_json(int n_leaves, Rng& rng) {
  struct Node {
    int left = -1, right = -1;
  };
  std::vector<Node> nodes(1);
  std::vector<int> leaves{0};
  while (static_cast<int>(leaves.size()) < n_leaves) {
    const std::size_t pick = static_cast<std::size_t>(rng.next_u64() % leaves.size());
    const int id = leaves[pick];
    leaves.erase(leaves.begin() + static_cast<std::ptrdiff_t>(pick));
    nodes[static_cast<std::size_t>(id)].left = static_cast<int>(nodes.size());
    nodes.push_back({});
    nodes[static_cast<std::size_t>(id)].right = static_cast<int>(nodes.size());
    nodes.push_back({});
    leaves.push_back(nodes[static_cast<std::size_t>(id)].left);
    leaves.push_back(nodes[static_cast<std::size_t>(id)].right);
  }
  std::function<std::string(int)> emit = [&](int id) -> std::string {
    const Node& n = nodes[static_cast<std::size_t>(id)];
    std::string s = "{\"name\":\"n" + std::to_string(id) + "\"";
    if (n.left >= 0) s += ",\"children\":[" + emit(n.left) + "," + emit(n.right) + "]";
    return s + "}";
  };
  return emit(0);
}

// Plain-recursion transcription of the fusion rule, weights from diag(I T^T).
Tensor aggregate_oracle(const Taxonomy& t, const Tensor& prompts, const Tensor& emb, int node,
                        const std::vector<double>& diag) {
  const TaxonomyNode& n = t.node(node);
  if (n.is_leaf()) return emb.slice_row(static_cast<std::size_t>(node));
  const Tensor ba = aggregate_oracle(t, prompts, emb, n.children[0], diag);
  const Tensor bb = aggregate_oracle(t, prompts, emb, n.children[1], diag);
  const double da = diag[static_cast<std::size_t>(n.children[0])];
  const double db = diag[static_cast<std::size_t>(n.children[1])];
  const double mx = std::max(da, db);
  const double ea = std::exp(da - mx), eb = std::exp(db - mx);
  Tensor out(1, emb.cols());
  for (std::size_t j = 0; j < out.size(); ++j) {
    out[j] = ea / (ea + eb) * ba[j] + eb / (ea + eb) * bb[j] +
             emb.at(static_cast<std::size_t>(node), j);
  }
  return out;
}

// Direct softmax-attention oracle for one head.
Tensor exact_attention_oracle(const Tensor& x, const NystromHeadParams& head) {
  const std::size_t m = x.rows();
  const std::size_t d_k = head.wq.value.cols();
  const auto project = [&](const Parameter& w) {
    Tensor out(m, d_k);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t o = 0; o < d_k; ++o)
        for (std::size_t j = 0; j < x.cols(); ++j)
          out.at(i, o) += x.at(i, j) * w.value.at(j, o);
    return out;
  };
  const Tensor q = project(head.wq);
  const Tensor k = project(head.wk);
  const Tensor v = project(head.wv);
  Tensor out(m, d_k);
  const double inv_scale = 1.0 / std::sqrt(static_cast<double>(d_k));
  for (std::size_t i = 0; i < m; ++i) {
    std::vector<double> logits(m);
    double mx = -1e300;
    for (std::size_t j = 0; j < m; ++j) {
      double s = 0.0;
      for (std::size_t o = 0; o < d_k; ++o) s += q.at(i, o) * k.at(j, o);
      logits[j] = s * inv_scale;
      mx = std::max(mx, logits[j]);
    }
    double denom = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
      logits[j] = std::exp(logits[j] - mx);
      denom += logits[j];
    }
    for (std::size_t j = 0; j < m; ++j)
      for (std::size_t o = 0; o < d_k; ++o) out.at(i, o) += logits[j] / denom * v.at(j, o);
  }
  return out;
}

double rel_frobenius(const Tensor& got, const Tensor& want) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < got.size(); ++i) {
    const double d = got[i] - want[i];
    num += d * d;
    den += want[i] * want[i];
  }
  return std::sqrt(num / den);
}

Taxonomy chain_tree() {
  return Taxonomy::parse(R"({
    "name":"root","children":[
      {"name":"A"},
      {"name":"i","children":[{"name":"B"},{"name":"C"}]}
    ]})");
}

Taxonomy complete_seven() {
  return Taxonomy::parse(R"({
    "name":"root","children":[
      {"name":"c1","children":[{"name":"a"},{"name":"b"}]},
      {"name":"c2","children":[{"name":"e"},{"name":"f"}]}
    ]})");
}

EvalRecord one_hot_record(const Taxonomy& t, const std::string& id, int true_class,
                          int pred_class) {
  std::vector<double> probs(static_cast<std::size_t>(t.leaf_count()), 0.0);
  probs[static_cast<std::size_t>(pred_class)] = 1.0;
  return make_record(t, id, true_class, probs);
}

bool check(std::string& detail, bool cond, const std::string& msg) {
  if (!cond) {
    if (!detail.empty()) detail += "; ";
    detail += msg;
  }
  return cond;
}

// ----------------------------------------------------------- criteria

bool criterion_gradients(std::string& detail) {
  bool ok = true;
  for (const AttentionVariant variant : {AttentionVariant::gated, AttentionVariant::nystrom}) {
    const Taxonomy taxonomy = chain_tree();  // N = 3
    ModelConfig mc;
    mc.variant = variant;
    mc.dim = 8;
    PathTreeModel model = PathTreeModel::init(taxonomy, mc, 2024);
    Rng data = Rng(2024).stream("acceptance-gc");
    const Tensor raw_prompts = Tensor::normal(5, 8, data);
    const Tensor patches = Tensor::normal(5, 8, data);  // M = 5
    const ForwardContext ctx(taxonomy, raw_prompts);
    const int label = 1;
    const auto loss = [&](bool with_grad) {
      Tape tape;
      const Var l = model.forward_loss(tape, ctx, tape.constant(patches), label);
      if (with_grad) tape.backward(l);
      return tape.value(l).scalar_value();
    };
    GradCheckOptions opts;  // h = 1e-5, every coordinate
    std::vector<Parameter*> params = model.parameters();
    const GradCheckReport report = grad_check(loss, params, opts);
    const char* tag = variant == AttentionVariant::gated ? "gated" : "nystrom";
    ok &= check(detail, report.max_rel_err < 1e-4,
                std::string(tag) + " max_rel_err=" + std::to_string(report.max_rel_err));
    for (const auto& pr : report.per_param) {
      ok &= check(detail, pr.max_abs_analytic > 0.0,
                  std::string(tag) + " no gradient reached " + pr.name);
    }
  }
  // The same check is reachable through the CLI alone.
  ok &= check(detail, run_cli("gradcheck --seed 2024") == 0, "cli gradcheck failed");
  return ok;
}

bool criterion_aggregator(std::string& detail) {
  Rng rng(7001);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const int n_leaves = 2 + static_cast<int>(rng.next_u64() % 7);  // up to 15 nodes
    const Taxonomy t = Taxonomy::parse(random_tree_json(n_leaves, rng));
    const std::size_t n = static_cast<std::size_t>(t.node_count());
    const Tensor prompts = Tensor::normal(n, 6, rng);
    const Tensor emb = Tensor::normal(n, 6, rng);
    const AggregationTrace trace = aggregate(t, prompts, emb);
    const Tensor want = aggregate_oracle(t, prompts, emb, t.root_id(), trace.diagonal);
    for (std::size_t j = 0; j < want.size(); ++j) {
      worst = std::max(worst, std::abs(trace.global[j] - want[j]));
    }
  }
  return check(detail, worst <= 1e-10, "max abs err " + std::to_string(worst));
}

bool criterion_nystrom(std::string& detail) {
  bool ok = true;
  Rng rng(7002);
  double worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t m_patches = 4 + rng.next_u64() % 61;  // M <= 64
    NystromHeadParams head =
        NystromHeadParams::init("acc" + std::to_string(trial), 12, 16, rng);
    const Tensor x = Tensor::normal(m_patches, 12, rng);
    NystromOptions opts;
    opts.landmarks = static_cast<int>(m_patches);
    opts.exact_pinv = true;
    opts.force_landmark_path = true;
    const double err = rel_frobenius(nystrom_attention(x, head, opts),
                                     exact_attention_oracle(x, head));
    worst = std::max(worst, err);
  }
  ok &= check(detail, worst < 1e-6, "exact-pinv fidelity " + std::to_string(worst));

  std::vector<double> err_mid, err_two;
  for (int seed = 0; seed < 20; ++seed) {
    Rng srng(8000 + static_cast<std::uint64_t>(seed));
    NystromHeadParams head = NystromHeadParams::init("m" + std::to_string(seed), 16, 16, srng);
    const Tensor x = Tensor::normal(32, 16, srng);
    const Tensor want = exact_attention_oracle(x, head);
    NystromOptions mid;
    mid.landmarks = 16;  // M/2
    NystromOptions two;
    two.landmarks = 2;
    err_mid.push_back(rel_frobenius(nystrom_attention(x, head, mid), want));
    err_two.push_back(rel_frobenius(nystrom_attention(x, head, two), want));
  }
  std::sort(err_mid.begin(), err_mid.end());
  std::sort(err_two.begin(), err_two.end());
  const double median_mid = 0.5 * (err_mid[9] + err_mid[10]);
  const double median_two = 0.5 * (err_two[9] + err_two[10]);
  ok &= check(detail, median_mid < median_two,
              "median err m=16 " + std::to_string(median_mid) + " vs m=2 " +
                  std::to_string(median_two));
  return ok;
}

bool criterion_hier_metrics(std::string& detail) {
  bool ok = true;
  const Taxonomy seven = complete_seven();
  const HierMetrics perfect = hier_metrics({one_hot_record(seven, "s", 0, 0)});
  ok &= check(detail, perfect.f1 == 1.0, "perfect H-F1 != 1");
  const HierMetrics sibling = hier_metrics({one_hot_record(seven, "s", 0, 1)});
  ok &= check(detail, sibling.f1 == 0.5, "sibling H-F1 != 1/2");

  const Taxonomy lopsided = Taxonomy::parse(R"({
    "name":"root","children":[
      {"name":"x"},
      {"name":"c","children":[
        {"name":"q","children":[{"name":"a"},{"name":"b"}]},
        {"name":"r"}
      ]}
    ]})");
  const HierMetrics disjoint = hier_metrics({one_hot_record(lopsided, "s", 1, 0)});
  ok &= check(detail, disjoint.precision == 0.0 && disjoint.recall == 0.0 && disjoint.f1 == 0.0,
              "disjoint prediction not all-zero");

  Rng rng(7003);
  std::vector<EvalRecord> random_records;
  for (int s = 0; s < 40; ++s) {
    random_records.push_back(one_hot_record(seven, "r" + std::to_string(s),
                                            static_cast<int>(rng.next_u64() % 4),
                                            static_cast<int>(rng.next_u64() % 4)));
  }
  const HierMetrics eq = hier_metrics(random_records);
  ok &= check(detail, eq.precision == eq.recall, "H-P != H-R on a complete tree");

  const HierMetrics cousin = hier_metrics({one_hot_record(seven, "s", 0, 2)});
  ok &= check(detail, sibling.f1 > cousin.f1, "same-parent not above different-subtree");
  return ok;
}

bool criterion_loss_degeneracies(std::string& detail) {
  bool ok = true;
  const Taxonomy taxonomy = chain_tree();

  // mu = 0 collapses the joint objective to cross entropy.
  ModelConfig mc;
  mc.dim = 8;
  mc.loss.mu_match = 0.0;
  mc.loss.mu_path = 0.0;
  PathTreeModel model = PathTreeModel::init(taxonomy, mc, 4711);
  Rng data = Rng(4711).stream("deg");
  const ForwardContext ctx(taxonomy, Tensor::normal(5, 8, data));
  Tape tape;
  StepLosses losses;
  model.forward_loss(tape, ctx, tape.constant(Tensor::normal(6, 8, data)), 2, &losses);
  ok &= check(detail, std::abs(losses.total - losses.ce) <= 1e-12,
              "mu=0 total != ce by " + std::to_string(losses.total - losses.ce));

  // All-zero embeddings: every hinge sits exactly at its margin.
  LossConfig lc;
  const double zero_match = match_loss(Tensor(1, 4), Tensor(5, 4), taxonomy, 1, lc);
  const double want = (lc.lambda_parent + lc.lambda_sibling) + lc.lambda_leaf;
  ok &= check(detail, zero_match == want,
              "zero-embedding match loss " + std::to_string(zero_match));

  // Path loss vanishes when g equals every prompt on the path.
  Rng rng(7004);
  const Tensor g = Tensor::normal(1, 4, rng);
  Tensor prompts(5, 4);
  for (std::size_t v = 0; v < 5; ++v)
    for (std::size_t j = 0; j < 4; ++j) prompts.at(v, j) = g[j];
  const double pl = path_loss(g, prompts, taxonomy.find_path(1));
  ok &= check(detail, pl == 0.0, "path loss " + std::to_string(pl));
  return ok;
}

nlohmann::json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("missing " + path.string());
  nlohmann::json j;
  in >> j;
  return j;
}

bool criterion_end_to_end(std::string& detail) {
  bool ok = true;
  const fs::path data = g_work / "synth";
  const fs::path taxonomy = g_work / "tree.json";
  io::write_file(taxonomy,
                 R"({"name":"root","children":[{"name":"A"},{"name":"bc","children":[{"name":"B"},{"name":"C"}]}]})");

  const std::string synth_cfg =
      " --set dim=16 --set slides_per_class=20 --set patches_min=30 --set patches_max=60"
      " --set separation=10 --seed 20240501";
  ok &= check(detail,
              run_cli("synth --taxonomy " + taxonomy.string() + " --out " + data.string() +
                      synth_cfg) == 0,
              "synth failed");
  ok &= check(detail,
              run_cli("split --manifest " + (data / "manifest.tsv").string() + " --out " +
                      (g_work / "folds").string() + " --folds 5 --seed 20240501") == 0,
              "split failed");

  const std::string common = " --data " + data.string() + " --taxonomy " + taxonomy.string() +
                             " --prompts " + (data / "prompts.pte").string();
  ok &= check(detail,
              run_cli("train" + common + " --out " + (g_work / "run_gated").string() +
                      " --epochs 10 --folds 5 --fold 0 --variant gated --seed 20240501") == 0,
              "train failed");
  ok &= check(detail,
              run_cli("eval --checkpoint " + (g_work / "run_gated/checkpoint_best.ptck").string() +
                      common + " --manifest " + (g_work / "folds/fold_0_val.tsv").string() +
                      " --out " + (g_work / "eval_gated").string()) == 0,
              "eval failed");
  if (!ok) return false;

  const nlohmann::json metrics = read_json(g_work / "eval_gated/metrics.json");
  const double acc = metrics["fine"]["acc"].get<double>();
  const double hf1 = metrics["fine"]["h_f1"].get<double>();
  ok &= check(detail, acc >= 0.95, "gated val acc " + std::to_string(acc));
  ok &= check(detail, hf1 >= 0.95, "gated val H-F1 " + std::to_string(hf1));

  // Linear-Probe parity floor on the same split.
  ok &= check(detail,
              run_cli("train --data " + data.string() + " --taxonomy " + taxonomy.string() +
                      " --out " + (g_work / "run_probe").string() +
                      " --epochs 10 --folds 5 --fold 0 --model linear-probe --seed 20240501") == 0,
              "probe train failed");
  ok &= check(detail,
              run_cli("eval --checkpoint " + (g_work / "run_probe/checkpoint_best.ptck").string() +
                      " --data " + data.string() + " --taxonomy " + taxonomy.string() +
                      " --manifest " + (g_work / "folds/fold_0_val.tsv").string() + " --out " +
                      (g_work / "eval_probe").string()) == 0,
              "probe eval failed");
  if (!ok) return false;
  const double probe_acc = read_json(g_work / "eval_probe/metrics.json")["fine"]["acc"].get<double>();
  ok &= check(detail, probe_acc >= 0.95, "probe val acc " + std::to_string(probe_acc));
  return ok;
}

bool criterion_determinism(std::string& detail) {
  bool ok = true;
  const fs::path data = g_work / "synth";
  const fs::path taxonomy = g_work / "tree.json";
  const std::string common = " --data " + data.string() + " --taxonomy " + taxonomy.string() +
                             " --prompts " + (data / "prompts.pte").string() +
                             " --epochs 10 --folds 5 --fold 0 --variant gated --seed 777";
  ok &= check(detail, run_cli("train" + common + " --out " + (g_work / "det_a").string()) == 0,
              "run A failed");
  ok &= check(detail, run_cli("train" + common + " --out " + (g_work / "det_b").string()) == 0,
              "run B failed");
  if (!ok) return false;
  for (const char* name : {"checkpoint_best.ptck", "checkpoint_last.ptck", "train_log.tsv"}) {
    ok &= check(detail, io::read_file(g_work / "det_a" / name) == io::read_file(g_work / "det_b" / name),
                std::string(name) + " differs between runs");
  }
  return ok;
}

bool criterion_scale_invariance(std::string& detail) {
  Rng rng(7005);
  const Tensor g = Tensor::normal(1, 12, rng);
  const Tensor prompts = Tensor::normal(9, 12, rng);
  const std::vector<int> leaves{1, 3, 4, 6, 8};
  const auto base = predict_probs(g, prompts, leaves, 0.07);
  const auto scaled = predict_probs(scale(g, 7.3), scale(prompts, 7.3), leaves, 0.07);
  double worst = 0.0;
  std::size_t argmax_base = 0, argmax_scaled = 0;
  for (std::size_t i = 0; i < base.size(); ++i) {
    worst = std::max(worst, std::abs(base[i] - scaled[i]));
    if (base[i] > base[argmax_base]) argmax_base = i;
    if (scaled[i] > scaled[argmax_scaled]) argmax_scaled = i;
  }
  bool ok = check(detail, worst < 1e-10, "prob delta " + std::to_string(worst));
  ok &= check(detail, argmax_base == argmax_scaled, "argmax changed under scaling");
  return ok;
}

bool criterion_round_trips(std::string& detail) {
  bool ok = true;
  const fs::path dir = g_work / "roundtrip";
  fs::create_directories(dir);
  Rng rng(7006);

  // Embedding file: identical bytes after the first quantizing write.
  const Tensor m = Tensor::normal(6, 5, rng);
  write_embeddings(dir / "a.pte", m);
  write_embeddings(dir / "b.pte", read_embeddings(dir / "a.pte"));
  ok &= check(detail, io::read_file(dir / "a.pte") == io::read_file(dir / "b.pte"),
              "embedding bytes differ");

  // Manifest.
  std::vector<ManifestEntry> entries{{"s1", "embeddings/s1.pte", 0}, {"s2", "x/s2.pte", 1}};
  write_manifest(dir / "a.tsv", entries);
  write_manifest(dir / "b.tsv", read_manifest(dir / "a.tsv"));
  ok &= check(detail, io::read_file(dir / "a.tsv") == io::read_file(dir / "b.tsv"),
              "manifest bytes differ");

  // Checkpoint written by the end-to-end run.
  const fs::path ckpt = g_work / "run_gated/checkpoint_best.ptck";
  const Taxonomy taxonomy = Taxonomy::load(g_work / "tree.json");
  Checkpoint loaded = load_checkpoint(ckpt, taxonomy);
  save_checkpoint(dir / "rewritten.ptck", loaded);
  ok &= check(detail, io::read_file(ckpt) == io::read_file(dir / "rewritten.ptck"),
              "checkpoint bytes differ");

  // Heatmap CSV: parse and re-export.
  std::vector<double> scores(9);
  double sum = 0.0;
  for (double& v : scores) {
    v = rng.next_double() + 0.05;
    sum += v;
  }
  for (double& v : scores) v /= sum;
  export_heatmap(dir / "a.csv", scores, std::nullopt);
  std::ifstream in(dir / "a.csv");
  std::string line;
  std::getline(in, line);  // header
  std::vector<double> parsed;
  while (std::getline(in, line)) {
    long idx = 0, x = 0, y = 0;
    double score = 0.0;
    if (std::sscanf(line.c_str(), "%ld,%ld,%ld,%lf", &idx, &x, &y, &score) == 4) {
      parsed.push_back(score);
    }
  }
  export_heatmap(dir / "b.csv", parsed, std::nullopt);
  ok &= check(detail, io::read_file(dir / "a.csv") == io::read_file(dir / "b.csv"),
              "heatmap bytes differ");
  return ok;
}

}  // namespace

int main(int argc, char** argv) {
  g_cli = argc > 1 ? argv[1] : "./pathtree";
  g_work = argc > 2 ? fs::path(argv[2]) : fs::path("acceptance_work");
  fs::remove_all(g_work);
  fs::create_directories(g_work);

  Harness h;
  h.criterion(1, "gradient correctness of the joint objective, both variants", 60.0,
              criterion_gradients);
  h.criterion(2, "aggregator matches the plain-recursion oracle on 100 trees", 10.0,
              criterion_aggregator);
  h.criterion(3, "landmark attention fidelity and landmark-count monotonicity", 30.0,
              criterion_nystrom);
  h.criterion(4, "hierarchical metric hand cases", 1.0, criterion_hier_metrics);
  h.criterion(5, "loss degeneracies", 1.0, criterion_loss_degeneracies);
  h.criterion(6, "synthetic end-to-end training through the CLI", 300.0, criterion_end_to_end);
  h.criterion(7, "bit-identical artifacts across same-seed runs", 600.0, criterion_determinism);
  h.criterion(8, "prediction invariance under positive rescaling", 1.0,
              criterion_scale_invariance);
  h.criterion(9, "file-format round trips", 5.0, criterion_round_trips);

  std::printf("%d/9 criteria passed\n", 9 - h.failed);
  return h.failed == 0 ? 0 : 1;
}
