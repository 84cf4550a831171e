// Command-line front end for the PathTree engine. Links the C API only.
#include <cstdio>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "pathtree.h"

namespace {

struct ConfigHandle {
  pt_config* cfg = pt_config_new();
  ~ConfigHandle() { pt_config_free(cfg); }
};

int report_error(pt_status status) {
  std::fprintf(stderr, "error: %s\n", pt_last_error());
  return static_cast<int>(status);
}

void print_owned(char* text) {
  if (text != nullptr) {
    std::fputs(text, stdout);
    pt_string_free(text);
  }
}

// Applies --set overrides and common sugar flags onto the config.
struct CommonOpts {
  std::vector<std::string> sets;
  std::string seed, epochs, folds, fold, variant, model, threads;
  bool dump_config = false;

  void attach(CLI::App* cmd, bool train_flags) {
    cmd->add_option("--set", sets, "Override configuration as key=value (repeatable)");
    cmd->add_option("--seed", seed, "Run seed (override of key seed)");
    cmd->add_option("--threads", threads, "Worker threads for inference (default 1)");
    cmd->add_flag("--dump-config", dump_config, "Print the effective configuration first");
    if (train_flags) {
      cmd->add_option("--epochs", epochs, "Training epochs (default 100)");
      cmd->add_option("--folds", folds, "Cross-validation folds (default 5)");
      cmd->add_option("--fold", fold, "Fold index to train/evaluate (default 0)");
      cmd->add_option("--variant", variant, "Attention variant: gated|nystrom");
      cmd->add_option("--model", model, "Model: pathtree|linear-probe");
    }
  }

  pt_status apply(pt_config* cfg) const {
    const std::pair<const char*, const std::string*> sugars[] = {
        {"seed", &seed},     {"epochs", &epochs}, {"folds", &folds},  {"fold", &fold},
        {"variant", &variant}, {"model", &model}, {"threads", &threads},
    };
    for (const auto& [key, value] : sugars) {
      if (!value->empty()) {
        const pt_status s = pt_config_set(cfg, key, value->c_str());
        if (s != PT_OK) return s;
      }
    }
    for (const std::string& kv : sets) {
      const pt_status s = pt_config_set_kv(cfg, kv.c_str());
      if (s != PT_OK) return s;
    }
    return PT_OK;
  }

  int maybe_dump(pt_config* cfg) const {
    if (!dump_config) return 0;
    char* text = nullptr;
    const pt_status s = pt_config_dump(cfg, &text);
    if (s != PT_OK) return report_error(s);
    print_owned(text);
    return 0;
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"PathTree: text-guided hierarchical whole-slide-image classification"};
  app.require_subcommand(1);

  // ------------------------------------------------------- validate-tree
  auto* validate = app.add_subcommand("validate-tree", "Validate a taxonomy file and print its path table");
  std::string v_taxonomy;
  validate->add_option("taxonomy", v_taxonomy, "Taxonomy JSON file")->required();

  // ---------------------------------------------------------------- synth
  auto* synth = app.add_subcommand("synth", "Generate a synthetic dataset");
  std::string s_taxonomy, s_out;
  CommonOpts s_opts;
  synth->add_option("--taxonomy", s_taxonomy, "Taxonomy JSON file")->required();
  synth->add_option("--out", s_out, "Output dataset directory")->required();
  s_opts.attach(synth, false);

  // ---------------------------------------------------------------- split
  auto* split = app.add_subcommand("split", "Write stratified k-fold manifests");
  std::string sp_manifest, sp_out;
  CommonOpts sp_opts;
  split->add_option("--manifest", sp_manifest, "Manifest TSV")->required();
  split->add_option("--out", sp_out, "Output directory for fold files")->required();
  sp_opts.attach(split, true);

  // ---------------------------------------------------------------- train
  auto* train = app.add_subcommand("train", "Train one cross-validation fold");
  std::string t_data, t_manifest, t_taxonomy, t_prompts, t_out, t_resume;
  CommonOpts t_opts;
  train->add_option("--data", t_data, "Dataset root directory")->required();
  train->add_option("--manifest", t_manifest, "Manifest TSV (default <data>/manifest.tsv)");
  train->add_option("--taxonomy", t_taxonomy, "Taxonomy JSON file")->required();
  train->add_option("--prompts", t_prompts, "Prompt embedding file (2N-1 rows)");
  train->add_option("--out", t_out, "Output directory")->required();
  train->add_option("--resume", t_resume, "Checkpoint to resume from");
  t_opts.attach(train, true);

  // ----------------------------------------------------------------- eval
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a manifest");
  std::string e_ckpt, e_data, e_manifest, e_taxonomy, e_prompts, e_out, e_grouping;
  CommonOpts e_opts;
  eval->add_option("--checkpoint", e_ckpt, "Checkpoint file")->required();
  eval->add_option("--data", e_data, "Dataset root directory")->required();
  eval->add_option("--manifest", e_manifest, "Manifest TSV")->required();
  eval->add_option("--taxonomy", e_taxonomy, "Taxonomy JSON file")->required();
  eval->add_option("--prompts", e_prompts, "Prompt embedding file");
  eval->add_option("--out", e_out, "Output directory")->required();
  eval->add_option("--coarse-grouping", e_grouping, "Leaf-to-coarse grouping TSV");
  e_opts.attach(eval, false);

  // -------------------------------------------------------------- predict
  auto* predict = app.add_subcommand("predict", "Write per-slide predictions as JSON");
  std::string p_ckpt, p_data, p_manifest, p_taxonomy, p_prompts, p_out;
  CommonOpts p_opts;
  predict->add_option("--checkpoint", p_ckpt, "Checkpoint file")->required();
  predict->add_option("--data", p_data, "Dataset root directory")->required();
  predict->add_option("--manifest", p_manifest, "Manifest TSV")->required();
  predict->add_option("--taxonomy", p_taxonomy, "Taxonomy JSON file")->required();
  predict->add_option("--prompts", p_prompts, "Prompt embedding file");
  predict->add_option("--out", p_out, "Output JSON path")->required();
  p_opts.attach(predict, false);

  // -------------------------------------------------------------- heatmap
  auto* heatmap = app.add_subcommand("heatmap", "Export attention scores of one slide as CSV");
  std::string h_ckpt, h_data, h_manifest, h_taxonomy, h_prompts, h_slide, h_out;
  int h_node = -1;
  CommonOpts h_opts;
  heatmap->add_option("--checkpoint", h_ckpt, "Checkpoint file")->required();
  heatmap->add_option("--data", h_data, "Dataset root directory")->required();
  heatmap->add_option("--manifest", h_manifest, "Manifest TSV")->required();
  heatmap->add_option("--taxonomy", h_taxonomy, "Taxonomy JSON file")->required();
  heatmap->add_option("--prompts", h_prompts, "Prompt embedding file");
  heatmap->add_option("--slide", h_slide, "Slide id from the manifest")->required();
  heatmap->add_option("--node", h_node, "Tree node id (default: predicted leaf)");
  heatmap->add_option("--out", h_out, "Output CSV path")->required();
  h_opts.attach(heatmap, false);

  // ------------------------------------------------------------ gradcheck
  auto* gradcheck = app.add_subcommand(
      "gradcheck", "Check analytic gradients of the full objective against finite differences");
  CommonOpts g_opts;
  g_opts.attach(gradcheck, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::string msg = e.what();
    for (char& c : msg) {
      if (c == '\n') c = ' ';
    }
    std::fprintf(stderr, "error: UsageError: %s\n", msg.c_str());
    return 1;
  }

  ConfigHandle handle;

  if (validate->parsed()) {
    char* report = nullptr;
    const pt_status s = pt_validate_tree(v_taxonomy.c_str(), &report);
    if (s != PT_OK) return report_error(s);
    print_owned(report);
    return 0;
  }

  const CommonOpts* opts = nullptr;
  if (synth->parsed()) opts = &s_opts;
  if (split->parsed()) opts = &sp_opts;
  if (train->parsed()) opts = &t_opts;
  if (eval->parsed()) opts = &e_opts;
  if (predict->parsed()) opts = &p_opts;
  if (heatmap->parsed()) opts = &h_opts;
  if (gradcheck->parsed()) opts = &g_opts;
  if (opts != nullptr) {
    const pt_status s = opts->apply(handle.cfg);
    if (s != PT_OK) return report_error(s);
    const int rc = opts->maybe_dump(handle.cfg);
    if (rc != 0) return rc;
  }

  if (synth->parsed()) {
    const pt_status s = pt_synth(s_taxonomy.c_str(), s_out.c_str(), handle.cfg);
    if (s != PT_OK) return report_error(s);
    std::printf("dataset written to %s\n", s_out.c_str());
    return 0;
  }

  if (split->parsed()) {
    const pt_status s = pt_split(sp_manifest.c_str(), sp_out.c_str(), handle.cfg);
    if (s != PT_OK) return report_error(s);
    std::printf("fold manifests written to %s\n", sp_out.c_str());
    return 0;
  }

  if (train->parsed()) {
    if (!t_resume.empty()) {
      const pt_status s = pt_config_set(handle.cfg, "resume", t_resume.c_str());
      if (s != PT_OK) return report_error(s);
    }
    char* summary = nullptr;
    const pt_status s = pt_train(t_data.c_str(), t_manifest.c_str(), t_taxonomy.c_str(),
                                 t_prompts.c_str(), t_out.c_str(), handle.cfg, &summary);
    if (s != PT_OK) return report_error(s);
    print_owned(summary);
    return 0;
  }

  if (eval->parsed()) {
    if (!e_grouping.empty()) {
      const pt_status s = pt_config_set(handle.cfg, "coarse_grouping", e_grouping.c_str());
      if (s != PT_OK) return report_error(s);
    }
    char* report = nullptr;
    const pt_status s = pt_evaluate(e_ckpt.c_str(), e_data.c_str(), e_manifest.c_str(),
                                    e_taxonomy.c_str(), e_prompts.c_str(), e_out.c_str(),
                                    handle.cfg, &report);
    if (s != PT_OK) return report_error(s);
    print_owned(report);
    return 0;
  }

  if (predict->parsed()) {
    const pt_status s = pt_predict(p_ckpt.c_str(), p_data.c_str(), p_manifest.c_str(),
                                   p_taxonomy.c_str(), p_prompts.c_str(), p_out.c_str(),
                                   handle.cfg);
    if (s != PT_OK) return report_error(s);
    std::printf("predictions written to %s\n", p_out.c_str());
    return 0;
  }

  if (heatmap->parsed()) {
    const pt_status s = pt_heatmap(h_ckpt.c_str(), h_data.c_str(), h_manifest.c_str(),
                                   h_taxonomy.c_str(), h_prompts.c_str(), h_slide.c_str(),
                                   h_node, h_out.c_str(), handle.cfg);
    if (s != PT_OK) return report_error(s);
    std::printf("heatmap written to %s\n", h_out.c_str());
    return 0;
  }

  if (gradcheck->parsed()) {
    double max_err = 0.0;
    char* report = nullptr;
    const pt_status s = pt_gradcheck(handle.cfg, &max_err, &report);
    print_owned(report);
    if (s != PT_OK) return report_error(s);
    return 0;
  }

  return 1;
}
