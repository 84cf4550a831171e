#include "pathtree.h"

#include <algorithm>
#include <cstdlib>
#include <cstring>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "pathtree/gradcheck.hpp"
#include "pathtree/trainer.hpp"

using namespace pathtree;
namespace fs = std::filesystem;

namespace {

thread_local std::string g_last_error;

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

template <typename Fn>
pt_status guarded(Fn&& fn) {
  try {
    fn();
    return PT_OK;
  } catch (const Error& e) {
    g_last_error = e.what();
    return static_cast<pt_status>(e.exit_class());
  } catch (const std::exception& e) {
    g_last_error = std::string("IoError: ") + e.what();
    return PT_DATA_ERROR;
  }
}

[[noreturn]] void usage_fail(const std::string& detail) {
  throw Error(ErrorCode::UsageError, detail);
}

// ------------------------------------------------------------- config

struct ConfigBundle {
  TrainConfig train;
  SyntheticConfig synth;
  int gc_leaves = 3;
  int gc_dim = 8;
  int gc_patches = 5;
  double gc_tol = 1e-4;
  int gc_coords = 0;  // 0 = every coordinate
  std::string gc_variant = "both";
  std::string coarse_grouping;
};

std::uint64_t parse_u64(const std::string& v) {
  std::size_t pos = 0;
  std::uint64_t out = 0;
  try {
    out = std::stoull(v, &pos);
  } catch (const std::exception&) {
    usage_fail("expected unsigned integer, got \"" + v + "\"");
  }
  if (pos != v.size()) usage_fail("expected unsigned integer, got \"" + v + "\"");
  return out;
}

int parse_int(const std::string& v) {
  std::size_t pos = 0;
  int out = 0;
  try {
    out = std::stoi(v, &pos);
  } catch (const std::exception&) {
    usage_fail("expected integer, got \"" + v + "\"");
  }
  if (pos != v.size()) usage_fail("expected integer, got \"" + v + "\"");
  return out;
}

double parse_double(const std::string& v) {
  std::size_t pos = 0;
  double out = 0.0;
  try {
    out = std::stod(v, &pos);
  } catch (const std::exception&) {
    usage_fail("expected number, got \"" + v + "\"");
  }
  if (pos != v.size()) usage_fail("expected number, got \"" + v + "\"");
  return out;
}

bool parse_bool(const std::string& v) {
  if (v == "1" || v == "true") return true;
  if (v == "0" || v == "false") return false;
  usage_fail("expected 0/1/true/false, got \"" + v + "\"");
}

struct KeySpec {
  std::function<void(ConfigBundle&, const std::string&)> set;
  std::function<std::string(const ConfigBundle&)> get;
};

std::string fmt_double(double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%g", v);
  return buf;
}

const std::map<std::string, KeySpec>& key_table() {
  static const std::map<std::string, KeySpec> table = {
      {"seed",
       {[](ConfigBundle& b, const std::string& v) {
          b.train.seed = parse_u64(v);
          b.synth.seed = b.train.seed;
        },
        [](const ConfigBundle& b) { return std::to_string(b.train.seed); }}},
      {"epochs",
       {[](ConfigBundle& b, const std::string& v) { b.train.epochs = parse_int(v); },
        [](const ConfigBundle& b) { return std::to_string(b.train.epochs); }}},
      {"folds",
       {[](ConfigBundle& b, const std::string& v) { b.train.folds = parse_int(v); },
        [](const ConfigBundle& b) { return std::to_string(b.train.folds); }}},
      {"fold",
       {[](ConfigBundle& b, const std::string& v) { b.train.fold_index = parse_int(v); },
        [](const ConfigBundle& b) { return std::to_string(b.train.fold_index); }}},
      {"variant",
       {[](ConfigBundle& b, const std::string& v) {
          if (v == "gated") b.train.model.variant = AttentionVariant::gated;
          else if (v == "nystrom") b.train.model.variant = AttentionVariant::nystrom;
          else usage_fail("variant must be gated|nystrom");
        },
        [](const ConfigBundle& b) {
          return b.train.model.variant == AttentionVariant::gated ? "gated" : "nystrom";
        }}},
      {"model",
       {[](ConfigBundle& b, const std::string& v) {
          if (v == "pathtree") b.train.model.kind = ModelKind::pathtree;
          else if (v == "linear-probe") b.train.model.kind = ModelKind::linear_probe;
          else usage_fail("model must be pathtree|linear-probe");
        },
        [](const ConfigBundle& b) {
          return b.train.model.kind == ModelKind::pathtree ? "pathtree" : "linear-probe";
        }}},
      {"fusion",
       {[](ConfigBundle& b, const std::string& v) {
          if (v == "diagonal") b.train.model.fusion = FusionWeightMode::diagonal;
          else if (v == "fused") b.train.model.fusion = FusionWeightMode::fused;
          else usage_fail("fusion must be diagonal|fused");
        },
        [](const ConfigBundle& b) {
          return b.train.model.fusion == FusionWeightMode::diagonal ? "diagonal" : "fused";
        }}},
      {"d_k",
       {[](ConfigBundle& b, const std::string& v) {
          b.train.model.d_k = static_cast<std::size_t>(parse_int(v));
        },
        [](const ConfigBundle& b) { return std::to_string(b.train.model.d_k); }}},
      {"landmarks",
       {[](ConfigBundle& b, const std::string& v) { b.train.model.landmarks = parse_int(v); },
        [](const ConfigBundle& b) { return std::to_string(b.train.model.landmarks); }}},
      {"pinv_iters",
       {[](ConfigBundle& b, const std::string& v) { b.train.model.pinv_iters = parse_int(v); },
        [](const ConfigBundle& b) { return std::to_string(b.train.model.pinv_iters); }}},
      {"lr",
       {[](ConfigBundle& b, const std::string& v) { b.train.adam.lr = parse_double(v); },
        [](const ConfigBundle& b) { return fmt_double(b.train.adam.lr); }}},
      {"beta1",
       {[](ConfigBundle& b, const std::string& v) { b.train.adam.beta1 = parse_double(v); },
        [](const ConfigBundle& b) { return fmt_double(b.train.adam.beta1); }}},
      {"beta2",
       {[](ConfigBundle& b, const std::string& v) { b.train.adam.beta2 = parse_double(v); },
        [](const ConfigBundle& b) { return fmt_double(b.train.adam.beta2); }}},
      {"weight_decay",
       {[](ConfigBundle& b, const std::string& v) { b.train.adam.weight_decay = parse_double(v); },
        [](const ConfigBundle& b) { return fmt_double(b.train.adam.weight_decay); }}},
      {"eps",
       {[](ConfigBundle& b, const std::string& v) { b.train.adam.eps = parse_double(v); },
        [](const ConfigBundle& b) { return fmt_double(b.train.adam.eps); }}},
      {"clip_norm",
       {[](ConfigBundle& b, const std::string& v) { b.train.clip_norm = parse_double(v); },
        [](const ConfigBundle& b) { return fmt_double(b.train.clip_norm); }}},
      {"threads",
       {[](ConfigBundle& b, const std::string& v) { b.train.threads = parse_int(v); },
        [](const ConfigBundle& b) { return std::to_string(b.train.threads); }}},
      {"debug_checks",
       {[](ConfigBundle& b, const std::string& v) { b.train.debug_checks = parse_bool(v); },
        [](const ConfigBundle& b) { return b.train.debug_checks ? "1" : "0"; }}},
      {"lambda_leaf",
       {[](ConfigBundle& b, const std::string& v) { b.train.model.loss.lambda_leaf = parse_double(v); },
        [](const ConfigBundle& b) { return fmt_double(b.train.model.loss.lambda_leaf); }}},
      {"lambda_sibling",
       {[](ConfigBundle& b, const std::string& v) { b.train.model.loss.lambda_sibling = parse_double(v); },
        [](const ConfigBundle& b) { return fmt_double(b.train.model.loss.lambda_sibling); }}},
      {"lambda_parent",
       {[](ConfigBundle& b, const std::string& v) { b.train.model.loss.lambda_parent = parse_double(v); },
        [](const ConfigBundle& b) { return fmt_double(b.train.model.loss.lambda_parent); }}},
      {"mu_match",
       {[](ConfigBundle& b, const std::string& v) { b.train.model.loss.mu_match = parse_double(v); },
        [](const ConfigBundle& b) { return fmt_double(b.train.model.loss.mu_match); }}},
      {"mu_path",
       {[](ConfigBundle& b, const std::string& v) { b.train.model.loss.mu_path = parse_double(v); },
        [](const ConfigBundle& b) { return fmt_double(b.train.model.loss.mu_path); }}},
      {"tau_init",
       {[](ConfigBundle& b, const std::string& v) { b.train.model.loss.tau_init = parse_double(v); },
        [](const ConfigBundle& b) { return fmt_double(b.train.model.loss.tau_init); }}},
      {"squared_triplet",
       {[](ConfigBundle& b, const std::string& v) { b.train.model.loss.squared_triplet = parse_bool(v); },
        [](const ConfigBundle& b) { return b.train.model.loss.squared_triplet ? "1" : "0"; }}},
      {"resume",
       {[](ConfigBundle& b, const std::string& v) { b.train.resume = v; },
        [](const ConfigBundle& b) { return b.train.resume; }}},
      {"coarse_grouping",
       {[](ConfigBundle& b, const std::string& v) { b.coarse_grouping = v; },
        [](const ConfigBundle& b) { return b.coarse_grouping; }}},
      {"dim",
       {[](ConfigBundle& b, const std::string& v) { b.synth.dim = parse_int(v); },
        [](const ConfigBundle& b) { return std::to_string(b.synth.dim); }}},
      {"slides_per_class",
       {[](ConfigBundle& b, const std::string& v) { b.synth.slides_per_class = parse_int(v); },
        [](const ConfigBundle& b) { return std::to_string(b.synth.slides_per_class); }}},
      {"patches_min",
       {[](ConfigBundle& b, const std::string& v) { b.synth.patches_min = parse_int(v); },
        [](const ConfigBundle& b) { return std::to_string(b.synth.patches_min); }}},
      {"patches_max",
       {[](ConfigBundle& b, const std::string& v) { b.synth.patches_max = parse_int(v); },
        [](const ConfigBundle& b) { return std::to_string(b.synth.patches_max); }}},
      {"signal_fraction",
       {[](ConfigBundle& b, const std::string& v) { b.synth.signal_fraction = parse_double(v); },
        [](const ConfigBundle& b) { return fmt_double(b.synth.signal_fraction); }}},
      {"separation",
       {[](ConfigBundle& b, const std::string& v) { b.synth.separation = parse_double(v); },
        [](const ConfigBundle& b) { return fmt_double(b.synth.separation); }}},
      {"gc_leaves",
       {[](ConfigBundle& b, const std::string& v) { b.gc_leaves = parse_int(v); },
        [](const ConfigBundle& b) { return std::to_string(b.gc_leaves); }}},
      {"gc_dim",
       {[](ConfigBundle& b, const std::string& v) { b.gc_dim = parse_int(v); },
        [](const ConfigBundle& b) { return std::to_string(b.gc_dim); }}},
      {"gc_patches",
       {[](ConfigBundle& b, const std::string& v) { b.gc_patches = parse_int(v); },
        [](const ConfigBundle& b) { return std::to_string(b.gc_patches); }}},
      {"gc_tol",
       {[](ConfigBundle& b, const std::string& v) { b.gc_tol = parse_double(v); },
        [](const ConfigBundle& b) { return fmt_double(b.gc_tol); }}},
      {"gc_coords",
       {[](ConfigBundle& b, const std::string& v) { b.gc_coords = parse_int(v); },
        [](const ConfigBundle& b) { return std::to_string(b.gc_coords); }}},
      {"gc_variant",
       {[](ConfigBundle& b, const std::string& v) {
          if (v != "gated" && v != "nystrom" && v != "both") {
            usage_fail("gc_variant must be gated|nystrom|both");
          }
          b.gc_variant = v;
        },
        [](const ConfigBundle& b) { return b.gc_variant; }}},
  };
  return table;
}

}  // namespace

struct pt_config {
  std::vector<std::pair<std::string, std::string>> overrides;
};

namespace {

ConfigBundle resolve(const pt_config* cfg) {
  ConfigBundle bundle;
  // PATHTREE_SEED has the lowest precedence: applied before overrides.
  if (const char* env = std::getenv("PATHTREE_SEED")) {
    bundle.train.seed = parse_u64(env);
    bundle.synth.seed = bundle.train.seed;
  }
  if (cfg != nullptr) {
    for (const auto& [key, value] : cfg->overrides) {
      const auto it = key_table().find(key);
      if (it == key_table().end()) usage_fail("unknown configuration key \"" + key + "\"");
      it->second.set(bundle, value);
    }
  }
  return bundle;
}

std::string require(const char* arg, const char* what) {
  if (arg == nullptr || *arg == '\0') usage_fail(std::string(what) + " is required");
  return arg;
}

Tensor prompts_or_placeholder(const std::string& path, const Taxonomy& taxonomy,
                              ModelKind kind, std::size_t dim) {
  if (!path.empty()) return read_embeddings(path);
  if (kind != ModelKind::linear_probe) usage_fail("prompt embeddings are required");
  return Tensor(static_cast<std::size_t>(taxonomy.node_count()), dim);
}

nlohmann::json record_to_json(const Taxonomy& taxonomy, const EvalRecord& r) {
  nlohmann::json j;
  j["slide_id"] = r.slide_id;
  j["true_class"] = r.true_class;
  j["pred_class"] = r.pred_class;
  j["pred_leaf_node"] = taxonomy.leaf_ids()[static_cast<std::size_t>(r.pred_class)];
  j["probs"] = r.probs;
  j["pred_label_set"] = r.pred_set;
  j["true_label_set"] = r.true_set;
  return j;
}

void write_predictions(const fs::path& path, const Taxonomy& taxonomy,
                       const std::vector<EvalRecord>& records) {
  nlohmann::json arr = nlohmann::json::array();
  for (const EvalRecord& r : records) arr.push_back(record_to_json(taxonomy, r));
  io::write_file(path, arr.dump(2) + "\n");
}

// Balanced full binary tree for the gradcheck instance.
std::string balanced_tree_json(int leaves, int* counter) {
  const int id = (*counter)++;
  if (leaves == 1) return "{\"name\":\"leaf" + std::to_string(id) + "\"}";
  const int left = leaves / 2;
  return "{\"name\":\"node" + std::to_string(id) + "\",\"children\":[" +
         balanced_tree_json(left, counter) + "," + balanced_tree_json(leaves - left, counter) +
         "]}";
}

struct GradCheckRun {
  std::string variant;
  GradCheckReport report;
};

GradCheckRun run_gradcheck(const ConfigBundle& bundle, AttentionVariant variant) {
  int counter = 0;
  const Taxonomy taxonomy = Taxonomy::parse(balanced_tree_json(bundle.gc_leaves, &counter));
  Rng rng = Rng(bundle.train.seed).stream("gradcheck");

  ModelConfig mc = bundle.train.model;
  mc.kind = ModelKind::pathtree;
  mc.variant = variant;
  mc.dim = static_cast<std::size_t>(bundle.gc_dim);
  PathTreeModel model = PathTreeModel::init(taxonomy, mc, bundle.train.seed);

  Rng data = rng.stream("data");
  const Tensor raw_prompts =
      Tensor::normal(static_cast<std::size_t>(taxonomy.node_count()), mc.dim, data);
  const Tensor patches = Tensor::normal(static_cast<std::size_t>(bundle.gc_patches), mc.dim, data);
  const int label = static_cast<int>(data.next_u64() % static_cast<std::uint64_t>(taxonomy.leaf_count()));
  ForwardContext ctx(taxonomy, raw_prompts);

  const auto loss = [&](bool with_grad) {
    Tape tape;
    const Var l = model.forward_loss(tape, ctx, tape.constant(patches), label);
    if (with_grad) tape.backward(l);
    return tape.value(l).scalar_value();
  };
  GradCheckOptions opts;
  opts.tol = bundle.gc_tol;
  opts.max_coords_per_param = static_cast<std::size_t>(std::max(0, bundle.gc_coords));
  opts.sample_seed = bundle.train.seed;
  std::vector<Parameter*> params = model.parameters();
  GradCheckRun run;
  run.variant = variant == AttentionVariant::gated ? "gated" : "nystrom";
  run.report = grad_check(loss, params, opts);
  return run;
}

}  // namespace

extern "C" {

const char* pt_last_error(void) { return g_last_error.c_str(); }

void pt_string_free(char* s) { std::free(s); }

// ------------------------------------------------------------- taxonomy

struct pt_taxonomy {
  Taxonomy tree;
};

pt_status pt_taxonomy_open(const char* path, pt_taxonomy** out) {
  return guarded([&] {
    require(path, "taxonomy path");
    if (out == nullptr) usage_fail("output handle is null");
    *out = new pt_taxonomy{Taxonomy::load(path)};
  });
}

pt_status pt_taxonomy_parse(const char* json_text, pt_taxonomy** out) {
  return guarded([&] {
    require(json_text, "taxonomy text");
    if (out == nullptr) usage_fail("output handle is null");
    *out = new pt_taxonomy{Taxonomy::parse(json_text)};
  });
}

void pt_taxonomy_close(pt_taxonomy* t) { delete t; }

int pt_taxonomy_node_count(const pt_taxonomy* t) { return t == nullptr ? -1 : t->tree.node_count(); }
int pt_taxonomy_leaf_count(const pt_taxonomy* t) { return t == nullptr ? -1 : t->tree.leaf_count(); }
int pt_taxonomy_root_id(const pt_taxonomy* t) { return t == nullptr ? -1 : t->tree.root_id(); }

const char* pt_taxonomy_node_name(const pt_taxonomy* t, int node_id) {
  if (t == nullptr || !t->tree.has_node(node_id)) return nullptr;
  return t->tree.node(node_id).name.c_str();
}

pt_status pt_taxonomy_find_path(const pt_taxonomy* t, int node_id, int* buffer, int capacity,
                                int* length) {
  return guarded([&] {
    if (t == nullptr || length == nullptr) usage_fail("null argument");
    const std::vector<int> path = t->tree.find_path(node_id);
    *length = static_cast<int>(path.size());
    if (buffer == nullptr || capacity < *length) {
      usage_fail("path buffer too small: need " + std::to_string(*length));
    }
    std::copy(path.begin(), path.end(), buffer);
  });
}

pt_status pt_taxonomy_sibling(const pt_taxonomy* t, int node_id, int* sibling_out) {
  return guarded([&] {
    if (t == nullptr || sibling_out == nullptr) usage_fail("null argument");
    *sibling_out = t->tree.sibling_of(node_id);
  });
}

int pt_taxonomy_leaf_class(const pt_taxonomy* t, int node_id) {
  if (t == nullptr || !t->tree.has_node(node_id)) return -1;
  return t->tree.leaf_class_of(node_id);
}

int pt_taxonomy_class_leaf(const pt_taxonomy* t, int class_index) {
  if (t == nullptr || class_index < 0 || class_index >= t->tree.leaf_count()) return -1;
  return t->tree.leaf_ids()[static_cast<std::size_t>(class_index)];
}

// --------------------------------------------------------------- config

pt_config* pt_config_new(void) { return new pt_config; }

void pt_config_free(pt_config* c) { delete c; }

pt_status pt_config_set(pt_config* c, const char* key, const char* value) {
  return guarded([&] {
    if (c == nullptr || key == nullptr || value == nullptr) usage_fail("null argument");
    if (key_table().find(key) == key_table().end()) {
      usage_fail("unknown configuration key \"" + std::string(key) + "\"");
    }
    c->overrides.emplace_back(key, value);
  });
}

pt_status pt_config_set_kv(pt_config* c, const char* key_equals_value) {
  return guarded([&] {
    if (c == nullptr || key_equals_value == nullptr) usage_fail("null argument");
    const std::string kv = key_equals_value;
    const std::size_t eq = kv.find('=');
    if (eq == std::string::npos || eq == 0) usage_fail("override must be key=value: " + kv);
    const std::string key = kv.substr(0, eq);
    if (key_table().find(key) == key_table().end()) {
      usage_fail("unknown configuration key \"" + key + "\"");
    }
    c->overrides.emplace_back(key, kv.substr(eq + 1));
  });
}

pt_status pt_config_dump(const pt_config* c, char** text_out) {
  return guarded([&] {
    if (text_out == nullptr) usage_fail("null argument");
    const ConfigBundle bundle = resolve(c);
    std::ostringstream os;
    for (const auto& [key, spec] : key_table()) {
      os << key << '=' << spec.get(bundle) << '\n';
    }
    *text_out = dup_string(os.str());
  });
}

// ------------------------------------------------------------ workflows

pt_status pt_validate_tree(const char* taxonomy_path, char** report_out) {
  return guarded([&] {
    const Taxonomy t = Taxonomy::load(require(taxonomy_path, "taxonomy path"));
    std::ostringstream os;
    os << "nodes=" << t.node_count() << " leaves=" << t.leaf_count()
       << " internal=" << t.internal_count() << "\n";
    for (int id = 0; id < t.node_count(); ++id) {
      const TaxonomyNode& node = t.node(id);
      os << "id=" << id << " name=" << node.name;
      const int cls = t.leaf_class_of(id);
      os << " class=" << (cls < 0 ? std::string("-") : std::to_string(cls));
      os << " depth=" << t.depth(id) << " path=";
      const std::vector<int> path = t.find_path(id);
      for (std::size_t i = 0; i < path.size(); ++i) {
        if (i > 0) os << '>';
        os << path[i];
      }
      os << "\n";
    }
    if (report_out != nullptr) *report_out = dup_string(os.str());
  });
}

pt_status pt_synth(const char* taxonomy_path, const char* out_dir, const pt_config* cfg) {
  return guarded([&] {
    const Taxonomy t = Taxonomy::load(require(taxonomy_path, "taxonomy path"));
    ConfigBundle bundle = resolve(cfg);
    bundle.synth.leaves = t.leaf_count();
    synth_generate(bundle.synth, t, require(out_dir, "output directory"));
  });
}

pt_status pt_split(const char* manifest_path, const char* out_dir, const pt_config* cfg) {
  return guarded([&] {
    const ConfigBundle bundle = resolve(cfg);
    const auto manifest = read_manifest(require(manifest_path, "manifest path"));
    const auto folds = kfold_split(manifest, bundle.train.folds, bundle.train.seed);
    const fs::path dir = require(out_dir, "output directory");
    fs::create_directories(dir);
    for (std::size_t f = 0; f < folds.size(); ++f) {
      std::vector<ManifestEntry> train_entries, val_entries;
      for (std::size_t i : folds[f].train_idx) train_entries.push_back(manifest[i]);
      for (std::size_t i : folds[f].val_idx) val_entries.push_back(manifest[i]);
      write_manifest(dir / ("fold_" + std::to_string(f) + "_train.tsv"), train_entries);
      write_manifest(dir / ("fold_" + std::to_string(f) + "_val.tsv"), val_entries);
    }
  });
}

pt_status pt_train(const char* data_root, const char* manifest_path, const char* taxonomy_path,
                   const char* prompts_path, const char* out_dir, const pt_config* cfg,
                   char** summary_out) {
  return guarded([&] {
    const ConfigBundle bundle = resolve(cfg);
    const fs::path root = require(data_root, "data root");
    const Taxonomy taxonomy = Taxonomy::load(require(taxonomy_path, "taxonomy path"));
    const fs::path manifest_file =
        (manifest_path != nullptr && *manifest_path != '\0') ? fs::path(manifest_path)
                                                             : root / "manifest.tsv";
    const auto manifest = read_manifest(manifest_file);

    TrainOutputs outputs;
    if (bundle.train.model.kind == ModelKind::linear_probe) {
      outputs = linear_probe(root, manifest, taxonomy, bundle.train,
                             require(out_dir, "output directory"));
    } else {
      const Tensor prompts = read_embeddings(
          require(prompts_path, "prompt embeddings path"));
      outputs = train(root, manifest, taxonomy, prompts, bundle.train,
                      require(out_dir, "output directory"));
    }
    if (summary_out != nullptr) {
      std::ostringstream os;
      os << "best_epoch=" << outputs.best_epoch << "\n";
      char buf[64];
      std::snprintf(buf, sizeof(buf), "%.6f", outputs.best_val_wf1);
      os << "best_val_wf1=" << buf << "\n";
      os << "checkpoint_best=" << outputs.best_checkpoint.string() << "\n";
      os << "checkpoint_last=" << outputs.last_checkpoint.string() << "\n";
      os << "log=" << outputs.log_path.string() << "\n";
      *summary_out = dup_string(os.str());
    }
  });
}

pt_status pt_evaluate(const char* checkpoint_path, const char* data_root,
                      const char* manifest_path, const char* taxonomy_path,
                      const char* prompts_path, const char* out_dir, const pt_config* cfg,
                      char** report_out) {
  return guarded([&] {
    const ConfigBundle bundle = resolve(cfg);
    const Taxonomy taxonomy = Taxonomy::load(require(taxonomy_path, "taxonomy path"));
    Checkpoint ckpt = load_checkpoint(require(checkpoint_path, "checkpoint path"), taxonomy);
    const fs::path root = require(data_root, "data root");
    const auto manifest = read_manifest(require(manifest_path, "manifest path"));
    const Tensor prompts =
        prompts_or_placeholder(prompts_path == nullptr ? "" : prompts_path, taxonomy,
                               ckpt.meta.kind, ckpt.meta.dim);

    std::vector<int> grouping;
    const std::vector<int>* grouping_ptr = nullptr;
    if (!bundle.coarse_grouping.empty()) {
      grouping = read_grouping(bundle.coarse_grouping, taxonomy.leaf_count());
      grouping_ptr = &grouping;
    }
    const EvalOutputs out = evaluate_checkpoint(ckpt, root, manifest, taxonomy, prompts,
                                                grouping_ptr, bundle.train.threads);

    std::string text = out.fine.to_text();
    nlohmann::json j;
    j["fine"] = nlohmann::json::parse(out.fine.to_json_fragment());
    if (out.coarse.has_value()) {
      text += out.coarse->to_text("coarse_");
      j["coarse"] = nlohmann::json::parse(out.coarse->to_json_fragment());
    }
    const fs::path dir = require(out_dir, "output directory");
    fs::create_directories(dir);
    io::write_file(dir / "metrics.txt", text);
    io::write_file(dir / "metrics.json", j.dump(2) + "\n");
    write_predictions(dir / "predictions.json", taxonomy, out.records);
    if (report_out != nullptr) *report_out = dup_string(text);
  });
}

pt_status pt_predict(const char* checkpoint_path, const char* data_root,
                     const char* manifest_path, const char* taxonomy_path,
                     const char* prompts_path, const char* out_json, const pt_config* cfg) {
  return guarded([&] {
    const ConfigBundle bundle = resolve(cfg);
    const Taxonomy taxonomy = Taxonomy::load(require(taxonomy_path, "taxonomy path"));
    Checkpoint ckpt = load_checkpoint(require(checkpoint_path, "checkpoint path"), taxonomy);
    const fs::path root = require(data_root, "data root");
    const auto manifest = read_manifest(require(manifest_path, "manifest path"));
    const Tensor prompts =
        prompts_or_placeholder(prompts_path == nullptr ? "" : prompts_path, taxonomy,
                               ckpt.meta.kind, ckpt.meta.dim);
    const EvalOutputs out = evaluate_checkpoint(ckpt, root, manifest, taxonomy, prompts,
                                                nullptr, bundle.train.threads);
    write_predictions(require(out_json, "output path"), taxonomy, out.records);
  });
}

pt_status pt_heatmap(const char* checkpoint_path, const char* data_root,
                     const char* manifest_path, const char* taxonomy_path,
                     const char* prompts_path, const char* slide_id, int node_id,
                     const char* out_csv, const pt_config* cfg) {
  return guarded([&] {
    resolve(cfg);
    const Taxonomy taxonomy = Taxonomy::load(require(taxonomy_path, "taxonomy path"));
    Checkpoint ckpt = load_checkpoint(require(checkpoint_path, "checkpoint path"), taxonomy);
    const fs::path root = require(data_root, "data root");
    const auto manifest = read_manifest(require(manifest_path, "manifest path"));
    const std::string wanted = require(slide_id, "slide id");

    const ManifestEntry* entry = nullptr;
    for (const auto& e : manifest) {
      if (e.slide_id == wanted) entry = &e;
    }
    if (entry == nullptr) fail(ErrorCode::ParseError, "slide " + wanted + " not in manifest");
    const SlideBag bag = load_slide(root, *entry);

    const Tensor prompts =
        prompts_or_placeholder(prompts_path == nullptr ? "" : prompts_path, taxonomy,
                               ckpt.meta.kind, ckpt.meta.dim);
    ForwardContext ctx(taxonomy, prompts);
    int target = node_id;
    if (target < 0) {
      const std::vector<double> probs = ckpt.model.predict(ctx, bag.patches);
      int best = 0;
      for (std::size_t j = 1; j < probs.size(); ++j) {
        if (probs[j] > probs[static_cast<std::size_t>(best)]) best = static_cast<int>(j);
      }
      target = taxonomy.leaf_ids()[static_cast<std::size_t>(best)];
    }
    const std::vector<double> scores = ckpt.model.patch_scores(ctx, bag.patches, target);
    export_heatmap(require(out_csv, "output path"), scores, bag.coords);
  });
}

pt_status pt_gradcheck(const pt_config* cfg, double* max_rel_err_out, char** report_out) {
  return guarded([&] {
    const ConfigBundle bundle = resolve(cfg);
    std::vector<GradCheckRun> runs;
    if (bundle.gc_variant == "both" || bundle.gc_variant == "gated") {
      runs.push_back(run_gradcheck(bundle, AttentionVariant::gated));
    }
    if (bundle.gc_variant == "both" || bundle.gc_variant == "nystrom") {
      runs.push_back(run_gradcheck(bundle, AttentionVariant::nystrom));
    }
    double worst = 0.0;
    std::ostringstream os;
    for (const GradCheckRun& run : runs) {
      os << "variant=" << run.variant << "\n" << run.report.to_text();
      worst = std::max(worst, run.report.max_rel_err);
    }
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6e", worst);
    os << "overall_max_rel_err=" << buf << "\n";
    if (max_rel_err_out != nullptr) *max_rel_err_out = worst;
    if (report_out != nullptr) *report_out = dup_string(os.str());
    if (!(worst < bundle.gc_tol)) {
      fail(ErrorCode::GradCheckFailure,
           "max relative error " + std::string(buf) + " >= tol " + fmt_double(bundle.gc_tol));
    }
  });
}

}  // extern "C"
