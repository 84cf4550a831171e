#include "pathtree/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <thread>

namespace pathtree {

std::vector<FoldSplit> kfold_split(const std::vector<ManifestEntry>& manifest, int k,
                                   std::uint64_t seed) {
  if (k < 2) fail(ErrorCode::ConfigError, "k-fold needs k >= 2");
  if (manifest.empty()) fail(ErrorCode::TooFewSamples, "manifest is empty");
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < manifest.size(); ++i) {
    by_class[manifest[i].leaf_class].push_back(i);
  }
  for (const auto& [cls, idx] : by_class) {
    if (static_cast<int>(idx.size()) < k) {
      fail(ErrorCode::TooFewSamples, "class " + std::to_string(cls) + " has " +
                                         std::to_string(idx.size()) + " samples for k=" +
                                         std::to_string(k));
    }
  }

  std::vector<std::vector<std::size_t>> folds(static_cast<std::size_t>(k));
  for (auto& [cls, idx] : by_class) {
    Rng rng = Rng(seed).stream("kfold").stream(static_cast<std::uint64_t>(cls));
    for (std::size_t i = idx.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(rng.next_u64() % i);
      std::swap(idx[i - 1], idx[j]);
    }
    for (std::size_t i = 0; i < idx.size(); ++i) {
      folds[i % static_cast<std::size_t>(k)].push_back(idx[i]);
    }
  }

  std::vector<FoldSplit> out(static_cast<std::size_t>(k));
  for (int f = 0; f < k; ++f) {
    auto& split = out[static_cast<std::size_t>(f)];
    split.val_idx = folds[static_cast<std::size_t>(f)];
    for (int g = 0; g < k; ++g) {
      if (g == f) continue;
      const auto& src = folds[static_cast<std::size_t>(g)];
      split.train_idx.insert(split.train_idx.end(), src.begin(), src.end());
    }
    std::sort(split.train_idx.begin(), split.train_idx.end());
    std::sort(split.val_idx.begin(), split.val_idx.end());
  }
  return out;
}

// ---------------------------------------------------------------- checkpoint

namespace {
constexpr char kCheckpointMagic[4] = {'P', 'T', 'C', 'K'};

void put_tensor(std::string& out, const Tensor& t) {
  io::put_u32(out, static_cast<std::uint32_t>(t.rows()));
  io::put_u32(out, static_cast<std::uint32_t>(t.cols()));
  for (std::size_t i = 0; i < t.size(); ++i) io::put_f64(out, t[i]);
}

Tensor get_tensor(const std::string& in, std::size_t& pos) {
  const std::uint32_t rows = io::get_u32(in, pos);
  const std::uint32_t cols = io::get_u32(in, pos);
  Tensor t(rows, cols);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = io::get_f64(in, pos);
  return t;
}
}  // namespace

void save_checkpoint(const std::filesystem::path& path, Checkpoint& ckpt) {
  std::string out;
  out.append(kCheckpointMagic, 4);
  io::put_u16(out, 1);
  io::put_u64(out, ckpt.meta.taxonomy_hash);
  out.push_back(static_cast<char>(ckpt.meta.kind == ModelKind::pathtree ? 0 : 1));
  out.push_back(static_cast<char>(ckpt.meta.variant == AttentionVariant::gated ? 0 : 1));
  out.push_back(static_cast<char>(ckpt.meta.fusion == FusionWeightMode::diagonal ? 0 : 1));
  io::put_u32(out, ckpt.meta.dim);
  io::put_u32(out, ckpt.meta.d_k);
  io::put_u32(out, ckpt.meta.landmarks);
  io::put_u32(out, ckpt.meta.pinv_iters);
  io::put_u64(out, ckpt.meta.run_seed);
  io::put_u32(out, ckpt.meta.epochs_completed);

  const std::vector<Parameter*> params = ckpt.model.parameters();
  if (ckpt.adam.size() != params.size()) {
    fail(ErrorCode::ShapeMismatch, "adam state count vs parameter count");
  }
  io::put_u32(out, static_cast<std::uint32_t>(params.size()));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Parameter& p = *params[i];
    io::put_u16(out, static_cast<std::uint16_t>(p.name.size()));
    out.append(p.name);
    put_tensor(out, p.value);
    put_tensor(out, ckpt.adam[i].m);
    put_tensor(out, ckpt.adam[i].v);
    io::put_u64(out, static_cast<std::uint64_t>(ckpt.adam[i].step));
  }
  io::write_file(path, out);
}

Checkpoint load_checkpoint(const std::filesystem::path& path, const Taxonomy& taxonomy) {
  const std::string in = io::read_file(path);
  if (in.size() < 4 || std::memcmp(in.data(), kCheckpointMagic, 4) != 0) {
    fail(ErrorCode::BadMagic, "not a checkpoint file: " + path.string());
  }
  std::size_t pos = 4;
  if (io::get_u16(in, pos) != 1) fail(ErrorCode::ParseError, "unsupported checkpoint version");

  Checkpoint ckpt;
  ckpt.meta.taxonomy_hash = io::get_u64(in, pos);
  if (ckpt.meta.taxonomy_hash != taxonomy.content_hash()) {
    fail(ErrorCode::HashMismatch, "checkpoint was trained on a different taxonomy");
  }
  const auto get_u8 = [&in, &pos]() {
    if (pos >= in.size()) fail(ErrorCode::TruncatedFile, "unexpected end of checkpoint");
    return static_cast<unsigned char>(in[pos++]);
  };
  ckpt.meta.kind = get_u8() == 0 ? ModelKind::pathtree : ModelKind::linear_probe;
  ckpt.meta.variant = get_u8() == 0 ? AttentionVariant::gated : AttentionVariant::nystrom;
  ckpt.meta.fusion = get_u8() == 0 ? FusionWeightMode::diagonal : FusionWeightMode::fused;
  ckpt.meta.dim = io::get_u32(in, pos);
  ckpt.meta.d_k = io::get_u32(in, pos);
  ckpt.meta.landmarks = io::get_u32(in, pos);
  ckpt.meta.pinv_iters = io::get_u32(in, pos);
  ckpt.meta.run_seed = io::get_u64(in, pos);
  ckpt.meta.epochs_completed = io::get_u32(in, pos);

  ModelConfig mc;
  mc.kind = ckpt.meta.kind;
  mc.variant = ckpt.meta.variant;
  mc.fusion = ckpt.meta.fusion;
  mc.dim = ckpt.meta.dim;
  mc.d_k = ckpt.meta.d_k;
  mc.landmarks = static_cast<int>(ckpt.meta.landmarks);
  mc.pinv_iters = static_cast<int>(ckpt.meta.pinv_iters);
  ckpt.model = PathTreeModel::init(taxonomy, mc, ckpt.meta.run_seed);

  const std::vector<Parameter*> params = ckpt.model.parameters();
  const std::uint32_t count = io::get_u32(in, pos);
  if (count != params.size()) {
    fail(ErrorCode::ParseError, "checkpoint parameter count does not match the model");
  }
  ckpt.adam.clear();
  for (Parameter* p : params) {
    const std::uint16_t len = io::get_u16(in, pos);
    if (pos + len > in.size()) fail(ErrorCode::TruncatedFile, "unexpected end of checkpoint");
    const std::string name = in.substr(pos, len);
    pos += len;
    if (name != p->name) {
      fail(ErrorCode::ParseError, "parameter order mismatch: " + name + " vs " + p->name);
    }
    Tensor value = get_tensor(in, pos);
    if (!value.same_shape(p->value)) fail(ErrorCode::ParseError, "shape mismatch for " + name);
    p->value = std::move(value);
    AdamState st(*p);
    st.m = get_tensor(in, pos);
    st.v = get_tensor(in, pos);
    st.step = static_cast<std::int64_t>(io::get_u64(in, pos));
    ckpt.adam.push_back(std::move(st));
  }
  if (pos != in.size()) fail(ErrorCode::ParseError, "trailing bytes in checkpoint");
  return ckpt;
}

// ------------------------------------------------------------------ training

namespace {

struct LoadedSlide {
  const ManifestEntry* entry = nullptr;
  Tensor patches;
};

std::vector<LoadedSlide> load_all(const std::filesystem::path& root,
                                  const std::vector<ManifestEntry>& manifest,
                                  const Taxonomy& taxonomy, std::size_t expect_dim) {
  std::vector<LoadedSlide> out;
  out.reserve(manifest.size());
  for (const ManifestEntry& e : manifest) {
    if (e.leaf_class >= taxonomy.leaf_count()) {
      fail(ErrorCode::BadLabel, "slide " + e.slide_id + " has class " +
                                    std::to_string(e.leaf_class) + " but taxonomy has " +
                                    std::to_string(taxonomy.leaf_count()) + " leaves");
    }
    LoadedSlide s;
    s.entry = &e;
    s.patches = read_embeddings(root / e.rel_path);
    if (s.patches.cols() != expect_dim) {
      fail(ErrorCode::DimensionMismatch, "slide " + e.slide_id + " dim " +
                                             std::to_string(s.patches.cols()) + " vs prompts " +
                                             std::to_string(expect_dim));
    }
    if (s.patches.rows() == 0) fail(ErrorCode::EmptyBag, "slide " + e.slide_id + " has no patches");
    out.push_back(std::move(s));
  }
  return out;
}

// Deterministic ordered parallel map over slide indices.
template <typename Fn>
void parallel_over(std::size_t count, int threads, Fn&& fn) {
  if (threads <= 1 || count <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  const std::size_t n_threads = std::min<std::size_t>(static_cast<std::size_t>(threads), count);
  std::vector<std::thread> pool;
  pool.reserve(n_threads);
  for (std::size_t t = 0; t < n_threads; ++t) {
    pool.emplace_back([t, n_threads, count, &fn]() {
      for (std::size_t i = t; i < count; i += n_threads) fn(i);
    });
  }
  for (std::thread& th : pool) th.join();
}

std::vector<EvalRecord> run_inference(PathTreeModel& model, const ForwardContext& ctx,
                                      const std::vector<LoadedSlide>& slides,
                                      const std::vector<std::size_t>& indices, int threads) {
  // Evaluate in slide_id order so reports are stable.
  std::vector<std::size_t> order = indices;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return slides[a].entry->slide_id < slides[b].entry->slide_id;
  });
  std::vector<EvalRecord> records(order.size());
  parallel_over(order.size(), threads, [&](std::size_t i) {
    const LoadedSlide& s = slides[order[i]];
    records[i] = make_record(*ctx.taxonomy, s.entry->slide_id, s.entry->leaf_class,
                             model.predict(ctx, s.patches));
  });
  return records;
}

void append_log_line(const std::filesystem::path& path, const EpochLog& l) {
  std::ofstream out(path, std::ios::app);
  if (!out) fail(ErrorCode::IoError, "cannot append to " + path.string());
  char buf[160];
  std::snprintf(buf, sizeof(buf), "%d\t%.10g\t%.10g\t%.10g\t%.10g\n", l.epoch, l.train_loss,
                l.val_acc, l.val_wf1, l.val_hf1);
  out << buf;
}

Checkpoint snapshot(const PathTreeModel& model, const std::vector<AdamState>& adam,
                    const CheckpointMeta& meta) {
  Checkpoint c;
  c.meta = meta;
  c.model = model;   // deep copy (tensors are value types)
  c.adam = adam;
  return c;
}

}  // namespace

TrainOutputs train(const std::filesystem::path& dataset_root,
                   const std::vector<ManifestEntry>& manifest, const Taxonomy& taxonomy,
                   const Tensor& raw_prompts, const TrainConfig& cfg,
                   const std::filesystem::path& out_dir, const StepObserver& observer) {
  if (cfg.epochs < 1) fail(ErrorCode::ConfigError, "epochs must be >= 1");
  if (cfg.fold_index < 0 || cfg.fold_index >= cfg.folds) {
    fail(ErrorCode::ConfigError, "fold index outside 0..folds-1");
  }
  std::filesystem::create_directories(out_dir);

  ModelConfig mc = cfg.model;
  mc.dim = raw_prompts.cols();
  ForwardContext ctx(taxonomy, raw_prompts);
  const std::vector<LoadedSlide> slides = load_all(dataset_root, manifest, taxonomy, mc.dim);

  const std::vector<FoldSplit> folds = kfold_split(manifest, cfg.folds, cfg.seed);
  const FoldSplit& split = folds[static_cast<std::size_t>(cfg.fold_index)];

  CheckpointMeta meta;
  meta.taxonomy_hash = taxonomy.content_hash();
  meta.kind = mc.kind;
  meta.variant = mc.variant;
  meta.fusion = mc.fusion;
  meta.dim = static_cast<std::uint32_t>(mc.dim);
  meta.d_k = static_cast<std::uint32_t>(mc.d_k);
  meta.landmarks = static_cast<std::uint32_t>(mc.landmarks);
  meta.pinv_iters = static_cast<std::uint32_t>(mc.pinv_iters);
  meta.run_seed = cfg.seed;

  PathTreeModel model = PathTreeModel::init(taxonomy, mc, cfg.seed);
  std::vector<Parameter*> params = model.parameters();
  std::vector<AdamState> adam;
  adam.reserve(params.size());
  for (Parameter* p : params) adam.emplace_back(*p);

  int start_epoch = 0;
  TrainOutputs outputs;
  outputs.log_path = out_dir / "train_log.tsv";
  outputs.best_checkpoint = out_dir / "checkpoint_best.ptck";
  outputs.last_checkpoint = out_dir / "checkpoint_last.ptck";

  if (!cfg.resume.empty()) {
    Checkpoint resumed = load_checkpoint(cfg.resume, taxonomy);
    if (resumed.meta.kind != mc.kind || resumed.meta.variant != mc.variant) {
      fail(ErrorCode::ConfigError, "resume checkpoint model kind/variant mismatch");
    }
    model = std::move(resumed.model);
    adam = std::move(resumed.adam);
    params = model.parameters();
    start_epoch = static_cast<int>(resumed.meta.epochs_completed);
  } else {
    // Fresh run: start the log with a header.
    io::write_file(outputs.log_path, "# epoch\ttrain_loss\tval_acc\tval_wf1\tval_hf1\n");
  }

  std::optional<Checkpoint> best;

  const Rng run_rng(cfg.seed);
  for (int epoch = start_epoch; epoch < cfg.epochs; ++epoch) {
    std::vector<std::size_t> order = split.train_idx;
    Rng shuffle = run_rng.stream("epoch").stream(static_cast<std::uint64_t>(epoch));
    for (std::size_t i = order.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(shuffle.next_u64() % i);
      std::swap(order[i - 1], order[j]);
    }

    double loss_sum = 0.0;
    for (const std::size_t idx : order) {
      const LoadedSlide& slide = slides[idx];
      Tape tape;
      StepLosses losses;
      const Var loss = model.forward_loss(tape, ctx, tape.constant(slide.patches),
                                          slide.entry->leaf_class, &losses);
      if (!std::isfinite(losses.total)) {
        fail(ErrorCode::NonFiniteLoss, "slide " + slide.entry->slide_id + " at epoch " +
                                           std::to_string(epoch + 1));
      }
      for (Parameter* p : params) p->zero_grad();
      tape.backward(loss);
      if (cfg.debug_checks) {
        for (Parameter* p : params) {
          if (!p->grad.all_finite()) {
            fail(ErrorCode::NonFiniteLoss, "non-finite gradient in " + p->name + " on slide " +
                                               slide.entry->slide_id);
          }
        }
      }
      clip_global_norm(params, cfg.clip_norm);
      for (std::size_t pi = 0; pi < params.size(); ++pi) {
        adam_step(cfg.adam, adam[pi], *params[pi]);
      }
      model.clamp_tau();
      loss_sum += losses.total;
      if (observer) {
        observer(StepInfo{epoch + 1, &slide.entry->slide_id, losses});
      }
    }

    const std::vector<EvalRecord> val_records =
        run_inference(model, ctx, slides, split.val_idx, cfg.threads);
    const PlanarMetrics planar = planar_metrics(val_records);
    const HierMetrics hier = hier_metrics(val_records);

    EpochLog log;
    log.epoch = epoch + 1;
    log.train_loss = loss_sum / static_cast<double>(order.size());
    log.val_acc = planar.accuracy;
    log.val_wf1 = planar.weighted_f1;
    log.val_hf1 = hier.f1;
    append_log_line(outputs.log_path, log);
    outputs.epochs.push_back(log);

    if (log.val_wf1 > outputs.best_val_wf1) {
      outputs.best_val_wf1 = log.val_wf1;
      outputs.best_epoch = log.epoch;
      meta.epochs_completed = static_cast<std::uint32_t>(log.epoch);
      best = snapshot(model, adam, meta);
    }
  }

  meta.epochs_completed = static_cast<std::uint32_t>(cfg.epochs);
  Checkpoint last = snapshot(model, adam, meta);
  save_checkpoint(outputs.last_checkpoint, last);
  if (best.has_value()) {
    save_checkpoint(outputs.best_checkpoint, *best);
  }
  return outputs;
}

TrainOutputs linear_probe(const std::filesystem::path& dataset_root,
                          const std::vector<ManifestEntry>& manifest, const Taxonomy& taxonomy,
                          const TrainConfig& cfg, const std::filesystem::path& out_dir,
                          const StepObserver& observer) {
  TrainConfig probe_cfg = cfg;
  probe_cfg.model.kind = ModelKind::linear_probe;
  if (manifest.empty()) fail(ErrorCode::TooFewSamples, "empty manifest");
  // The probe ignores prompt embeddings: feed a placeholder with the right shape.
  const std::size_t dim = read_embeddings(dataset_root / manifest.front().rel_path).cols();
  Tensor placeholder(static_cast<std::size_t>(taxonomy.node_count()), dim);
  return train(dataset_root, manifest, taxonomy, placeholder, probe_cfg, out_dir, observer);
}

EvalOutputs evaluate_checkpoint(Checkpoint& ckpt, const std::filesystem::path& dataset_root,
                                const std::vector<ManifestEntry>& entries,
                                const Taxonomy& taxonomy, const Tensor& raw_prompts,
                                const std::vector<int>* coarse_grouping, int threads) {
  ForwardContext ctx(taxonomy, raw_prompts);
  const std::vector<LoadedSlide> slides =
      load_all(dataset_root, entries, taxonomy, ckpt.meta.dim);
  std::vector<std::size_t> all(slides.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;

  EvalOutputs out;
  out.records = run_inference(ckpt.model, ctx, slides, all, threads);
  out.fine = full_metrics(out.records);
  if (coarse_grouping != nullptr) {
    const std::vector<EvalRecord> coarse = coarse_project(out.records, *coarse_grouping);
    MetricsReport report;
    report.planar = planar_metrics(coarse);
    try {
      report.auc = macro_auc(coarse);
      report.auc_defined = true;
    } catch (const Error& e) {
      if (e.code() != ErrorCode::NoContributingClass) throw;
    }
    report.hier = hier_metrics(coarse);
    report.samples = coarse.size();
    out.coarse = report;
  }
  return out;
}

std::vector<int> read_grouping(const std::filesystem::path& path, int n_leaves) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::IoError, "cannot open grouping file " + path.string());
  std::vector<int> grouping(static_cast<std::size_t>(n_leaves), -1);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    int leaf = -1, coarse = -1;
    if (!(ls >> leaf >> coarse)) fail(ErrorCode::ParseError, "bad grouping line: " + line);
    if (leaf < 0 || leaf >= n_leaves) {
      fail(ErrorCode::IncompleteGrouping, "leaf class " + std::to_string(leaf) + " out of range");
    }
    grouping[static_cast<std::size_t>(leaf)] = coarse;
  }
  for (int g : grouping) {
    if (g < 0) fail(ErrorCode::IncompleteGrouping, "grouping misses a leaf class");
  }
  return grouping;
}

}  // namespace pathtree
