#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "pathtree/tensor.hpp"

namespace pathtree {

struct TaxonomyNode {
  int id = -1;
  std::string name;
  std::string description;
  std::array<int, 2> children{-1, -1};  // both -1 for a leaf
  int parent = -1;                      // -1 only for the root

  bool is_leaf() const { return children[0] < 0; }
};

// Full binary diagnostic tree: N leaves, N-1 internal nodes, ids 0..2N-2.
// Immutable after construction; safe for concurrent reads.
class Taxonomy {
 public:
  static Taxonomy parse(const std::string& json_text);
  static Taxonomy load(const std::filesystem::path& path);

  int node_count() const { return static_cast<int>(nodes_.size()); }
  int leaf_count() const { return static_cast<int>(leaves_.size()); }
  int internal_count() const { return node_count() - leaf_count(); }
  int root_id() const { return root_; }

  const TaxonomyNode& node(int id) const;  // UnknownNode on bad id
  bool has_node(int id) const { return id >= 0 && id < node_count(); }

  // Root-first path of node ids, recursive search from the root.
  std::vector<int> find_path(int target_id) const;

  int sibling_of(int node_id) const;  // RootHasNoSibling for the root

  // A1: parent->child edges; A2 = transpose(A1). No self-loops stored.
  std::pair<Tensor, Tensor> adjacency() const;

  // Ancestors plus the leaf itself, root excluded; sorted ascending.
  std::vector<int> label_set(int leaf_id) const;  // NotALeaf on internal nodes

  // Leaf ids in left-to-right document order; index = dense class index.
  const std::vector<int>& leaf_ids() const { return leaves_; }
  int leaf_class_of(int node_id) const;  // -1 when not a leaf
  int depth(int id) const;               // root depth = 0

  // Hash over the structure and names (descriptions excluded): checkpoints
  // remain valid when prompt text is edited but embeddings are external.
  std::uint64_t content_hash() const;

 private:
  void validate() const;

  std::vector<TaxonomyNode> nodes_;
  std::vector<int> leaves_;
  int root_ = -1;
};

}  // namespace pathtree
