#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <string>

#include "pathtree/dataio.hpp"
#include "pathtree/rng.hpp"

using namespace pathtree;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& tag) {
  const fs::path dir = fs::temp_directory_path() / ("pathtree_test_" + tag);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

Taxonomy three_leaf_tree() {
  return Taxonomy::parse(R"({
    "name":"root","children":[
      {"name":"A"},
      {"name":"bc","children":[{"name":"B"},{"name":"C"}]}
    ]})");
}

}  // namespace

TEST_CASE("embedding round trip up to f32 quantization") {
  const fs::path dir = temp_dir("emb");
  Rng rng(41);
  const Tensor m = Tensor::normal(5, 8, rng);
  write_embeddings(dir / "m.pte", m);
  const Tensor back = read_embeddings(dir / "m.pte");
  REQUIRE(back.rows() == 5);
  REQUIRE(back.cols() == 8);
  for (std::size_t i = 0; i < m.size(); ++i) {
    CHECK(back[i] == static_cast<double>(static_cast<float>(m[i])));
  }
  // Second write of the read-back value is byte identical.
  write_embeddings(dir / "m2.pte", back);
  CHECK(io::read_file(dir / "m.pte") == io::read_file(dir / "m2.pte"));
}

TEST_CASE("embedding error paths") {
  const fs::path dir = temp_dir("embbad");
  io::write_file(dir / "bad.pte", "XXXXrest");
  try {
    read_embeddings(dir / "bad.pte");
    CHECK(false);
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::BadMagic);
  }

  // Header claims more payload than present.
  std::string t;
  t.append("PTE1", 4);
  io::put_u16(t, 1);
  io::put_u32(t, 4);
  io::put_u32(t, 4);
  io::put_f32(t, 1.0f);
  io::write_file(dir / "short.pte", t);
  try {
    read_embeddings(dir / "short.pte");
    CHECK(false);
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::TruncatedFile);
  }

  // Non-finite payload.
  std::string nf;
  nf.append("PTE1", 4);
  io::put_u16(nf, 1);
  io::put_u32(nf, 1);
  io::put_u32(nf, 1);
  io::put_f32(nf, std::numeric_limits<float>::infinity());
  io::write_file(dir / "inf.pte", nf);
  try {
    read_embeddings(dir / "inf.pte");
    CHECK(false);
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::NonFinitePayload);
  }
}

TEST_CASE("manifest round trip and validation") {
  const fs::path dir = temp_dir("manifest");
  std::vector<ManifestEntry> entries{
      {"s1", "embeddings/s1.pte", 0},
      {"s2", "embeddings/s2.pte", 2},
  };
  write_manifest(dir / "m.tsv", entries);
  const auto back = read_manifest(dir / "m.tsv");
  REQUIRE(back.size() == 2);
  CHECK(back[0].slide_id == "s1");
  CHECK(back[1].leaf_class == 2);
  // Byte-stable rewrite.
  write_manifest(dir / "m2.tsv", back);
  CHECK(io::read_file(dir / "m.tsv") == io::read_file(dir / "m2.tsv"));

  io::write_file(dir / "dup.tsv", "a\tx.pte\t0\na\ty.pte\t1\n");
  CHECK_THROWS_AS(read_manifest(dir / "dup.tsv"), Error);
}

TEST_CASE("synthetic generation is deterministic and classifiable") {
  const fs::path dir1 = temp_dir("synth1");
  const fs::path dir2 = temp_dir("synth2");
  const Taxonomy tax = three_leaf_tree();
  SyntheticConfig cfg;
  cfg.leaves = 3;
  cfg.dim = 16;
  cfg.slides_per_class = 4;
  cfg.patches_min = 10;
  cfg.patches_max = 20;
  cfg.signal_fraction = 1.0;
  cfg.separation = 10.0;
  cfg.seed = 7;
  synth_generate(cfg, tax, dir1);
  synth_generate(cfg, tax, dir2);

  const auto manifest = read_manifest(dir1 / "manifest.tsv");
  REQUIRE(manifest.size() == 12);
  CHECK(io::read_file(dir1 / "manifest.tsv") == io::read_file(dir2 / "manifest.tsv"));
  CHECK(io::read_file(dir1 / "prompts.pte") == io::read_file(dir2 / "prompts.pte"));
  for (const auto& e : manifest) {
    CHECK(io::read_file(dir1 / e.rel_path) == io::read_file(dir2 / e.rel_path));
  }

  // Nearest-centroid on the patch mean classifies every slide correctly.
  const Tensor centroids = synth_centroids(cfg);
  for (const auto& e : manifest) {
    const SlideBag bag = load_slide(dir1, e);
    Tensor mean(1, bag.patches.cols());
    for (std::size_t i = 0; i < bag.patches.rows(); ++i)
      for (std::size_t j = 0; j < bag.patches.cols(); ++j)
        mean[j] += bag.patches.at(i, j) / static_cast<double>(bag.patches.rows());
    int best = -1;
    double best_d = 0.0;
    for (int c = 0; c < cfg.leaves; ++c) {
      const double d = squared_distance(mean, centroids.slice_row(static_cast<std::size_t>(c)));
      if (best < 0 || d < best_d) {
        best = c;
        best_d = d;
      }
    }
    CHECK(best == e.leaf_class);
  }

  // Prompt file: one row per node; the root row is the grand mean.
  const Tensor prompts = read_embeddings(dir1 / "prompts.pte");
  CHECK(prompts.rows() == 5);
  for (std::size_t j = 0; j < prompts.cols(); ++j) {
    const double grand =
        (centroids.at(0, j) + centroids.at(1, j) + centroids.at(2, j)) / 3.0;
    CHECK(prompts.at(0, j) == doctest::Approx(grand).epsilon(1e-6));
  }

  // Per-class patch mean lands within 4 sigma / sqrt(count) of its centroid.
  for (int c = 0; c < cfg.leaves; ++c) {
    double count = 0.0;
    Tensor acc(1, static_cast<std::size_t>(cfg.dim));
    for (const auto& e : manifest) {
      if (e.leaf_class != c) continue;
      const SlideBag bag = load_slide(dir1, e);
      for (std::size_t i = 0; i < bag.patches.rows(); ++i) {
        for (std::size_t j = 0; j < bag.patches.cols(); ++j) acc[j] += bag.patches.at(i, j);
        count += 1.0;
      }
    }
    for (std::size_t j = 0; j < acc.size(); ++j) {
      const double mean = acc[j] / count;
      CHECK(std::abs(mean - centroids.at(static_cast<std::size_t>(c), j)) <
            4.0 / std::sqrt(count) + 1e-6);
    }
  }
}

TEST_CASE("zero separation collapses centroids") {
  const Taxonomy tax = three_leaf_tree();
  SyntheticConfig cfg;
  cfg.leaves = 3;
  cfg.dim = 8;
  cfg.slides_per_class = 2;
  cfg.patches_min = 8;
  cfg.patches_max = 8;
  cfg.separation = 0.0;
  cfg.seed = 9;
  const Tensor centroids = synth_centroids(cfg);
  for (std::size_t i = 0; i < centroids.size(); ++i) CHECK(centroids[i] == 0.0);
  const fs::path dir = temp_dir("synth0");
  synth_generate(cfg, tax, dir);
  CHECK(read_manifest(dir / "manifest.tsv").size() == 6);
}

TEST_CASE("synthetic config validation") {
  const Taxonomy tax = three_leaf_tree();
  SyntheticConfig cfg;
  cfg.leaves = 4;  // mismatch
  CHECK_THROWS_AS(synth_generate(cfg, tax, temp_dir("synthbad")), Error);
  cfg.leaves = 3;
  cfg.signal_fraction = 0.0;
  CHECK_THROWS_AS(synth_generate(cfg, tax, temp_dir("synthbad")), Error);
  cfg.signal_fraction = 0.5;
  cfg.dim = 2;  // need dim >= leaves
  CHECK_THROWS_AS(synth_generate(cfg, tax, temp_dir("synthbad")), Error);
}

TEST_CASE("coords sidecar is picked up") {
  const fs::path dir = temp_dir("coords");
  fs::create_directories(dir / "embeddings");
  Rng rng(77);
  write_embeddings(dir / "embeddings/s.pte", Tensor::normal(3, 4, rng));
  io::write_file(dir / "embeddings/s.pte.coords.tsv", "0 0\n256 0\n512 256\n");
  const SlideBag bag = load_slide(dir, ManifestEntry{"s", "embeddings/s.pte", 0});
  REQUIRE(bag.coords.has_value());
  CHECK(bag.coords->at(2, 0) == 512.0);
  CHECK(bag.coords->at(2, 1) == 256.0);
}

TEST_CASE("heatmap export") {
  const fs::path dir = temp_dir("heatmap");
  SUBCASE("single patch") {
    const double one[] = {1.0};
    export_heatmap(dir / "h.csv", one, std::nullopt);
    std::ifstream in(dir / "h.csv");
    std::string header, row;
    std::getline(in, header);
    std::getline(in, row);
    CHECK(header == "patch_index,x,y,score");
    CHECK(row == "0,-1,-1,1");
  }
  SUBCASE("scores round trip at 9 significant digits") {
    Rng rng(55);
    std::vector<double> raw(7);
    double sum = 0.0;
    for (double& v : raw) {
      v = rng.next_double() + 0.01;
      sum += v;
    }
    for (double& v : raw) v /= sum;
    Tensor coords(7, 2);
    for (std::size_t i = 0; i < 7; ++i) {
      coords.at(i, 0) = static_cast<double>(13 * i);
      coords.at(i, 1) = static_cast<double>(7 * i);
    }
    export_heatmap(dir / "h2.csv", raw, coords);

    std::ifstream in(dir / "h2.csv");
    std::string line;
    std::getline(in, line);  // header
    double total = 0.0;
    std::size_t idx = 0;
    while (std::getline(in, line)) {
      long pi = 0, x = 0, y = 0;
      double score = 0.0;
      REQUIRE(std::sscanf(line.c_str(), "%ld,%ld,%ld,%lf", &pi, &x, &y, &score) == 4);
      CHECK(pi == static_cast<long>(idx));
      CHECK(x == static_cast<long>(13 * idx));
      CHECK(std::abs(score - raw[idx]) < 1e-9);
      total += score;
      ++idx;
    }
    CHECK(idx == 7);
    CHECK(std::abs(total - 1.0) < 1e-9);
  }
  SUBCASE("length mismatch") {
    const double two[] = {0.5, 0.5};
    Tensor coords(3, 2);
    CHECK_THROWS_AS(export_heatmap(dir / "bad.csv", two, coords), Error);
  }
}
