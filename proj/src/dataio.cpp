#include "pathtree/dataio.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

#include "pathtree/rng.hpp"

namespace pathtree {

namespace io {

void put_u16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xFF));
  out.push_back(static_cast<char>((v >> 8) & 0xFF));
}

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_f32(std::string& out, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  put_u32(out, bits);
}

void put_f64(std::string& out, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, 8);
  put_u64(out, bits);
}

namespace {
void need(const std::string& in, std::size_t pos, std::size_t n) {
  if (pos + n > in.size()) fail(ErrorCode::TruncatedFile, "unexpected end of file");
}
}  // namespace

std::uint16_t get_u16(const std::string& in, std::size_t& pos) {
  need(in, pos, 2);
  const auto b = reinterpret_cast<const unsigned char*>(in.data() + pos);
  pos += 2;
  return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
}

std::uint32_t get_u32(const std::string& in, std::size_t& pos) {
  need(in, pos, 4);
  const auto b = reinterpret_cast<const unsigned char*>(in.data() + pos);
  pos += 4;
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

std::uint64_t get_u64(const std::string& in, std::size_t& pos) {
  const std::uint64_t lo = get_u32(in, pos);
  const std::uint64_t hi = get_u32(in, pos);
  return lo | (hi << 32);
}

float get_f32(const std::string& in, std::size_t& pos) {
  const std::uint32_t bits = get_u32(in, pos);
  float v;
  std::memcpy(&v, &bits, 4);
  return v;
}

double get_f64(const std::string& in, std::size_t& pos) {
  const std::uint64_t bits = get_u64(in, pos);
  double v;
  std::memcpy(&v, &bits, 8);
  return v;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::IoError, "cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::IoError, "cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(ErrorCode::IoError, "write failed for " + path.string());
}

}  // namespace io

// ---------------------------------------------------------------- embeddings

static constexpr char kEmbeddingMagic[4] = {'P', 'T', 'E', '1'};

void write_embeddings(const std::filesystem::path& path, const Tensor& matrix) {
  ensure_finite(matrix, "embedding payload");
  std::string out;
  out.reserve(14 + 4 * matrix.size());
  out.append(kEmbeddingMagic, 4);
  io::put_u16(out, 1);
  io::put_u32(out, static_cast<std::uint32_t>(matrix.rows()));
  io::put_u32(out, static_cast<std::uint32_t>(matrix.cols()));
  for (std::size_t i = 0; i < matrix.size(); ++i) {
    io::put_f32(out, static_cast<float>(matrix[i]));
  }
  io::write_file(path, out);
}

Tensor read_embeddings(const std::filesystem::path& path) {
  const std::string bytes = io::read_file(path);
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kEmbeddingMagic, 4) != 0) {
    fail(ErrorCode::BadMagic, "not an embedding file: " + path.string());
  }
  std::size_t pos = 4;
  const std::uint16_t version = io::get_u16(bytes, pos);
  if (version != 1) fail(ErrorCode::ParseError, "unsupported embedding version");
  const std::uint32_t rows = io::get_u32(bytes, pos);
  const std::uint32_t dim = io::get_u32(bytes, pos);
  const std::size_t payload = static_cast<std::size_t>(rows) * dim * 4;
  if (bytes.size() - pos < payload) {
    fail(ErrorCode::TruncatedFile, "payload shorter than rows*dim in " + path.string());
  }
  if (bytes.size() - pos > payload) {
    fail(ErrorCode::ParseError, "trailing bytes after payload in " + path.string());
  }
  Tensor out(rows, dim);
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = static_cast<double>(io::get_f32(bytes, pos));
  }
  if (!out.all_finite()) fail(ErrorCode::NonFinitePayload, "non-finite embedding in " + path.string());
  return out;
}

// ------------------------------------------------------------------ manifest

std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::IoError, "cannot open manifest " + path.string());
  std::vector<ManifestEntry> out;
  std::set<std::string> ids;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    ManifestEntry e;
    std::string cls;
    if (!std::getline(ls, e.slide_id, '\t') || !std::getline(ls, e.rel_path, '\t') ||
        !std::getline(ls, cls, '\t')) {
      fail(ErrorCode::ParseError, "manifest line " + std::to_string(lineno) + " needs 3 tab-separated fields");
    }
    try {
      e.leaf_class = std::stoi(cls);
    } catch (const std::exception&) {
      fail(ErrorCode::ParseError, "bad class index on manifest line " + std::to_string(lineno));
    }
    if (e.leaf_class < 0) fail(ErrorCode::BadLabel, "negative class index for slide " + e.slide_id);
    if (!ids.insert(e.slide_id).second) {
      fail(ErrorCode::ParseError, "duplicate slide_id " + e.slide_id);
    }
    out.push_back(std::move(e));
  }
  return out;
}

void write_manifest(const std::filesystem::path& path, std::span<const ManifestEntry> entries) {
  std::ostringstream os;
  os << "# slide_id\trelative_path\tleaf_class_index\n";
  for (const ManifestEntry& e : entries) {
    os << e.slide_id << '\t' << e.rel_path << '\t' << e.leaf_class << '\n';
  }
  io::write_file(path, os.str());
}

// ----------------------------------------------------------------- slide bag

SlideBag load_slide(const std::filesystem::path& dataset_root, const ManifestEntry& entry) {
  SlideBag bag;
  bag.slide_id = entry.slide_id;
  bag.leaf_class = entry.leaf_class;
  bag.patches = read_embeddings(dataset_root / entry.rel_path);

  const std::filesystem::path coords_path = dataset_root / (entry.rel_path + ".coords.tsv");
  if (std::filesystem::exists(coords_path)) {
    std::ifstream in(coords_path);
    Tensor coords(bag.patches.rows(), 2);
    std::string line;
    std::size_t row = 0;
    while (std::getline(in, line)) {
      if (line.empty() || line[0] == '#') continue;
      if (row >= coords.rows()) fail(ErrorCode::LengthMismatch, "more coord rows than patches");
      std::istringstream ls(line);
      double x = 0.0, y = 0.0;
      if (!(ls >> x >> y)) fail(ErrorCode::ParseError, "bad coords line in " + coords_path.string());
      coords.at(row, 0) = x;
      coords.at(row, 1) = y;
      ++row;
    }
    if (row != coords.rows()) fail(ErrorCode::LengthMismatch, "fewer coord rows than patches");
    bag.coords = std::move(coords);
  }
  return bag;
}

// ----------------------------------------------------------------- synthetic

namespace {

void check_synth_config(const SyntheticConfig& cfg, const Taxonomy& taxonomy) {
  if (cfg.leaves != taxonomy.leaf_count()) {
    fail(ErrorCode::ConfigError, "config leaves=" + std::to_string(cfg.leaves) +
                                     " but taxonomy has " + std::to_string(taxonomy.leaf_count()));
  }
  if (cfg.dim <= 0 || cfg.slides_per_class <= 0) fail(ErrorCode::ConfigError, "dim and slides_per_class must be positive");
  if (cfg.patches_min < 1 || cfg.patches_max < cfg.patches_min) {
    fail(ErrorCode::ConfigError, "patch count range invalid");
  }
  if (!(cfg.signal_fraction > 0.0) || cfg.signal_fraction > 1.0) {
    fail(ErrorCode::ConfigError, "signal_fraction must be in (0,1]");
  }
  if (cfg.separation < 0.0) fail(ErrorCode::ConfigError, "separation must be non-negative");
  if (cfg.leaves > cfg.dim) fail(ErrorCode::ConfigError, "need dim >= leaves for orthogonal centroids");
}

}  // namespace

Tensor synth_centroids(const SyntheticConfig& cfg) {
  Rng rng = Rng(cfg.seed).stream("centroids");
  const std::size_t n = static_cast<std::size_t>(cfg.leaves);
  const std::size_t d = static_cast<std::size_t>(cfg.dim);
  Tensor dirs = Tensor::normal(n, d, rng);
  // Gram-Schmidt: orthonormal directions, so pairwise centroid distance is
  // exactly separation after scaling by separation/sqrt(2).
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < i; ++k) {
      double proj = 0.0;
      for (std::size_t j = 0; j < d; ++j) proj += dirs.at(i, j) * dirs.at(k, j);
      for (std::size_t j = 0; j < d; ++j) dirs.at(i, j) -= proj * dirs.at(k, j);
    }
    double nrm = 0.0;
    for (std::size_t j = 0; j < d; ++j) nrm += dirs.at(i, j) * dirs.at(i, j);
    nrm = std::sqrt(nrm);
    if (nrm < 1e-12) fail(ErrorCode::ConfigError, "degenerate centroid directions");
    for (std::size_t j = 0; j < d; ++j) dirs.at(i, j) /= nrm;
  }
  return scale(dirs, cfg.separation / std::sqrt(2.0));
}

void synth_generate(const SyntheticConfig& cfg, const Taxonomy& taxonomy,
                    const std::filesystem::path& out_dir) {
  check_synth_config(cfg, taxonomy);
  std::filesystem::create_directories(out_dir / "embeddings");

  const Tensor centroids = synth_centroids(cfg);
  const std::size_t d = static_cast<std::size_t>(cfg.dim);

  // Prompt rows in taxonomy id order: leaves get their centroid, internal
  // nodes the mean of descendant-leaf centroids (the root row is the grand mean).
  const std::size_t total = static_cast<std::size_t>(taxonomy.node_count());
  Tensor prompts(total, d);
  for (std::size_t id = 0; id < total; ++id) {
    std::vector<int> leaf_classes;
    std::vector<int> stack{static_cast<int>(id)};
    while (!stack.empty()) {
      const int u = stack.back();
      stack.pop_back();
      const TaxonomyNode& node = taxonomy.node(u);
      if (node.is_leaf()) {
        leaf_classes.push_back(taxonomy.leaf_class_of(u));
      } else {
        stack.push_back(node.children[1]);
        stack.push_back(node.children[0]);
      }
    }
    for (int cls : leaf_classes) {
      for (std::size_t j = 0; j < d; ++j) prompts.at(id, j) += centroids.at(cls, j);
    }
    const double inv = 1.0 / static_cast<double>(leaf_classes.size());
    for (std::size_t j = 0; j < d; ++j) prompts.at(id, j) *= inv;
  }
  write_embeddings(out_dir / "prompts.pte", prompts);

  const Rng root(cfg.seed);
  std::vector<ManifestEntry> manifest;
  for (int cls = 0; cls < cfg.leaves; ++cls) {
    const Rng class_stream = root.stream("slides").stream(static_cast<std::uint64_t>(cls));
    for (int s = 0; s < cfg.slides_per_class; ++s) {
      Rng slide_stream = class_stream.stream(static_cast<std::uint64_t>(s));
      const int patches = cfg.patches_min == cfg.patches_max
                              ? cfg.patches_min
                              : slide_stream.next_int(cfg.patches_min, cfg.patches_max);
      const int n_signal =
          static_cast<int>(std::ceil(cfg.signal_fraction * static_cast<double>(patches)));
      Tensor x(static_cast<std::size_t>(patches), d);
      for (int i = 0; i < patches; ++i) {
        for (std::size_t j = 0; j < d; ++j) {
          double v = slide_stream.next_normal();
          if (i < n_signal) v += centroids.at(static_cast<std::size_t>(cls), j);
          x.at(static_cast<std::size_t>(i), j) = v;
        }
      }
      char sid[64];
      std::snprintf(sid, sizeof(sid), "class%d_slide%03d", cls, s);
      ManifestEntry e;
      e.slide_id = sid;
      e.rel_path = std::string("embeddings/") + sid + ".pte";
      e.leaf_class = cls;
      write_embeddings(out_dir / e.rel_path, x);
      manifest.push_back(std::move(e));
    }
  }
  write_manifest(out_dir / "manifest.tsv", manifest);
}

// ------------------------------------------------------------------- heatmap

void export_heatmap(const std::filesystem::path& path, std::span<const double> scores,
                    const std::optional<Tensor>& coords) {
  if (coords && coords->rows() != scores.size()) {
    fail(ErrorCode::LengthMismatch, "coords rows != score count");
  }
  std::ostringstream os;
  os << "patch_index,x,y,score\n";
  char buf[40];
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const long x = coords ? static_cast<long>(coords->at(i, 0)) : -1;
    const long y = coords ? static_cast<long>(coords->at(i, 1)) : -1;
    std::snprintf(buf, sizeof(buf), "%.9g", scores[i]);
    os << i << ',' << x << ',' << y << ',' << buf << '\n';
  }
  io::write_file(path, os.str());
}

}  // namespace pathtree
