#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pathtree/taxonomy.hpp"
#include "pathtree/tensor.hpp"

namespace pathtree {

// ---------------------------------------------------------------- embeddings
// Binary layout (little-endian, packed): magic "PTE1", u16 version = 1,
// u32 rows, u32 dim, then rows*dim IEEE-754 f32 values. Storage is 32-bit;
// compute widens to 64-bit on load.
void write_embeddings(const std::filesystem::path& path, const Tensor& matrix);
Tensor read_embeddings(const std::filesystem::path& path);

// ------------------------------------------------------------------ manifest
// TSV lines: slide_id<TAB>relative_path<TAB>leaf_class_index.
// Lines starting with '#' are comments.
struct ManifestEntry {
  std::string slide_id;
  std::string rel_path;
  int leaf_class = -1;
};

std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path,
                    std::span<const ManifestEntry> entries);

// ----------------------------------------------------------------- slide bag
struct SlideBag {
  std::string slide_id;
  Tensor patches;                 // M x d
  std::optional<Tensor> coords;   // M x 2 when a ".coords.tsv" sidecar exists
  int leaf_class = -1;
};

SlideBag load_slide(const std::filesystem::path& dataset_root, const ManifestEntry& entry);

// ----------------------------------------------------------------- synthetic
struct SyntheticConfig {
  int leaves = 3;
  int dim = 16;
  int slides_per_class = 20;
  int patches_min = 30;
  int patches_max = 60;
  double signal_fraction = 1.0;   // in (0, 1]
  double separation = 10.0;       // inter-centroid distance in noise sigmas
  std::uint64_t seed = 42;
};

// Materializes manifest.tsv, prompts.pte and embeddings/<slide>.pte under
// out_dir. Centroids are orthogonal with pairwise distance separation; leaf
// prompts are the centroids, internal prompts descendant-leaf means.
// Output is a pure function of (cfg, taxonomy): per-slide streams are split
// from the seed, so bytes are identical across runs and generation order.
void synth_generate(const SyntheticConfig& cfg, const Taxonomy& taxonomy,
                    const std::filesystem::path& out_dir);

// Class centroids used by synth_generate (exposed for oracles/tests).
Tensor synth_centroids(const SyntheticConfig& cfg);

// ------------------------------------------------------------------- heatmap
// CSV "patch_index,x,y,score"; x,y are -1 when coords are absent; scores are
// written with 9 significant digits and must sum to 1.
void export_heatmap(const std::filesystem::path& path, std::span<const double> scores,
                    const std::optional<Tensor>& coords);

// --------------------------------------------------------- low-level helpers
namespace io {
void put_u16(std::string& out, std::uint16_t v);
void put_u32(std::string& out, std::uint32_t v);
void put_u64(std::string& out, std::uint64_t v);
void put_f32(std::string& out, float v);
void put_f64(std::string& out, double v);
std::uint16_t get_u16(const std::string& in, std::size_t& pos);
std::uint32_t get_u32(const std::string& in, std::size_t& pos);
std::uint64_t get_u64(const std::string& in, std::size_t& pos);
float get_f32(const std::string& in, std::size_t& pos);
double get_f64(const std::string& in, std::size_t& pos);
std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::string& bytes);
}  // namespace io

}  // namespace pathtree
