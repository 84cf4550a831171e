#pragma once

#include <filesystem>
#include <functional>
#include <optional>

#include "pathtree/dataio.hpp"
#include "pathtree/evaluation.hpp"
#include "pathtree/model.hpp"

namespace pathtree {

struct TrainConfig {
  int epochs = 100;
  int folds = 5;
  int fold_index = 0;
  std::uint64_t seed = 42;
  ModelConfig model;
  AdamConfig adam;
  double clip_norm = 5.0;
  int threads = 1;
  bool debug_checks = false;  // scan gradients for non-finite values each step
  std::string resume;         // checkpoint path to continue from
};

struct FoldSplit {
  std::vector<std::size_t> train_idx;
  std::vector<std::size_t> val_idx;
};

// Stratified by leaf class, deterministic for a fixed seed. Per-class fold
// sizes differ by at most one. Requires >= k samples in every class.
std::vector<FoldSplit> kfold_split(const std::vector<ManifestEntry>& manifest, int k,
                                   std::uint64_t seed);

struct CheckpointMeta {
  std::uint64_t taxonomy_hash = 0;
  ModelKind kind = ModelKind::pathtree;
  AttentionVariant variant = AttentionVariant::gated;
  FusionWeightMode fusion = FusionWeightMode::diagonal;
  std::uint32_t dim = 0;
  std::uint32_t d_k = 64;
  std::uint32_t landmarks = 64;
  std::uint32_t pinv_iters = 6;
  std::uint64_t run_seed = 0;
  std::uint32_t epochs_completed = 0;
};

struct Checkpoint {
  CheckpointMeta meta;
  PathTreeModel model;
  std::vector<AdamState> adam;  // aligned with model.parameters() order
};

void save_checkpoint(const std::filesystem::path& path, Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path, const Taxonomy& taxonomy);

struct EpochLog {
  int epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_acc = 0.0;
  double val_wf1 = 0.0;
  double val_hf1 = 0.0;
};

struct StepInfo {
  int epoch = 0;
  const std::string* slide_id = nullptr;
  StepLosses losses;
};
using StepObserver = std::function<void(const StepInfo&)>;

struct TrainOutputs {
  std::filesystem::path best_checkpoint;
  std::filesystem::path last_checkpoint;
  std::filesystem::path log_path;
  int best_epoch = 0;
  double best_val_wf1 = -1.0;
  std::vector<EpochLog> epochs;
};

// One fold of training with per-epoch validation; the best checkpoint by
// validation weighted F1 is retained alongside the final state.
TrainOutputs train(const std::filesystem::path& dataset_root,
                   const std::vector<ManifestEntry>& manifest, const Taxonomy& taxonomy,
                   const Tensor& raw_prompts, const TrainConfig& cfg,
                   const std::filesystem::path& out_dir,
                   const StepObserver& observer = nullptr);

// Linear-Probe baseline: identical loop with the probe model and CE only.
TrainOutputs linear_probe(const std::filesystem::path& dataset_root,
                          const std::vector<ManifestEntry>& manifest, const Taxonomy& taxonomy,
                          const TrainConfig& cfg, const std::filesystem::path& out_dir,
                          const StepObserver& observer = nullptr);

struct EvalOutputs {
  MetricsReport fine;
  std::optional<MetricsReport> coarse;
  std::vector<EvalRecord> records;  // ordered by slide_id
};

EvalOutputs evaluate_checkpoint(Checkpoint& ckpt, const std::filesystem::path& dataset_root,
                                const std::vector<ManifestEntry>& entries,
                                const Taxonomy& taxonomy, const Tensor& raw_prompts,
                                const std::vector<int>* coarse_grouping = nullptr,
                                int threads = 1);

// leaf_class -> coarse_class lines ("<leaf>\t<coarse>"), '#' comments allowed.
std::vector<int> read_grouping(const std::filesystem::path& path, int n_leaves);

}  // namespace pathtree
