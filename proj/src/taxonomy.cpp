#include "pathtree/taxonomy.hpp"

#include <algorithm>
#include <fstream>
#include <optional>
#include <sstream>

#include <json.hpp>

#include "pathtree/rng.hpp"

namespace pathtree {

namespace {

using nlohmann::json;

struct RawNode {
  std::optional<int> id;
  std::string name;
  std::string description;
  int first_child = -1;   // index into the raw array
  int second_child = -1;
  int parent = -1;
};

// Pre-order flattening of the nested document.
int flatten(const json& j, std::vector<RawNode>& out, int parent) {
  if (!j.is_object()) fail(ErrorCode::ParseError, "taxonomy node must be an object");
  RawNode node;
  node.parent = parent;
  if (!j.contains("name") || !j.at("name").is_string()) {
    fail(ErrorCode::ParseError, "taxonomy node missing string \"name\"");
  }
  node.name = j.at("name").get<std::string>();
  if (j.contains("description")) {
    if (!j.at("description").is_string()) fail(ErrorCode::ParseError, "\"description\" must be a string");
    node.description = j.at("description").get<std::string>();
  }
  if (j.contains("id")) {
    if (!j.at("id").is_number_integer()) fail(ErrorCode::ParseError, "\"id\" must be an integer");
    node.id = j.at("id").get<int>();
  }
  const int self = static_cast<int>(out.size());
  out.push_back(std::move(node));

  if (j.contains("children") && !j.at("children").is_null()) {
    const json& kids = j.at("children");
    if (!kids.is_array()) fail(ErrorCode::ParseError, "\"children\" must be an array");
    if (kids.size() == 1) {
      fail(ErrorCode::StructureError, "node \"" + out[self].name + "\" has exactly one child");
    }
    if (kids.size() > 2) {
      fail(ErrorCode::StructureError, "node \"" + out[self].name + "\" has more than two children");
    }
    if (kids.size() == 2) {
      out[self].first_child = flatten(kids[0], out, self);
      out[self].second_child = flatten(kids[1], out, self);
    }
  }
  return self;
}

}  // namespace

Taxonomy Taxonomy::parse(const std::string& json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::exception& e) {
    fail(ErrorCode::ParseError, std::string("invalid JSON: ") + e.what());
  }

  std::vector<RawNode> raw;
  flatten(doc, raw, -1);

  const int n = static_cast<int>(raw.size());
  if (n < 3) fail(ErrorCode::StructureError, "tree must have at least 3 nodes (N >= 2)");

  // Explicit ids for every node, or none (assigned in document order).
  int with_id = 0;
  for (const RawNode& r : raw) with_id += r.id.has_value() ? 1 : 0;
  if (with_id != 0 && with_id != n) {
    fail(ErrorCode::ParseError, "either every node carries an \"id\" or none does");
  }

  std::vector<int> assigned(n);
  if (with_id == 0) {
    for (int i = 0; i < n; ++i) assigned[i] = i;
  } else {
    std::vector<bool> seen(n, false);
    for (int i = 0; i < n; ++i) {
      const int id = *raw[i].id;
      if (id < 0 || id >= n) {
        fail(ErrorCode::StructureError, "id " + std::to_string(id) + " outside 0.." + std::to_string(n - 1));
      }
      if (seen[id]) fail(ErrorCode::StructureError, "duplicate id " + std::to_string(id));
      seen[id] = true;
      assigned[i] = id;
    }
  }

  Taxonomy t;
  t.nodes_.resize(n);
  for (int i = 0; i < n; ++i) {
    TaxonomyNode& node = t.nodes_[assigned[i]];
    node.id = assigned[i];
    node.name = raw[i].name;
    node.description = raw[i].description;
    node.parent = raw[i].parent >= 0 ? assigned[raw[i].parent] : -1;
    if (raw[i].first_child >= 0) {
      node.children = {assigned[raw[i].first_child], assigned[raw[i].second_child]};
    }
  }
  t.root_ = assigned[0];

  // Leaf class indices follow left-to-right document order.
  for (int i = 0; i < n; ++i) {
    if (raw[i].first_child < 0) t.leaves_.push_back(assigned[i]);
  }

  t.validate();
  return t;
}

Taxonomy Taxonomy::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::IoError, "cannot open taxonomy file " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse(buf.str());
}

void Taxonomy::validate() const {
  const int n = node_count();
  if (leaf_count() < 2) fail(ErrorCode::StructureError, "tree needs at least two leaves");
  if (n != 2 * leaf_count() - 1) {
    fail(ErrorCode::StructureError, "node count must be 2N-1 for N leaves");
  }
  int roots = 0;
  for (const TaxonomyNode& node : nodes_) {
    if (node.id < 0) fail(ErrorCode::StructureError, "missing node id after assignment");
    if (node.parent < 0) {
      ++roots;
    } else {
      const TaxonomyNode& p = nodes_[node.parent];
      if (p.children[0] != node.id && p.children[1] != node.id) {
        fail(ErrorCode::StructureError, "parent/child links inconsistent at node " + std::to_string(node.id));
      }
    }
    if (!node.is_leaf()) {
      for (int c : node.children) {
        if (c < 0 || c >= n) fail(ErrorCode::StructureError, "child id out of range");
        if (nodes_[c].parent != node.id) {
          fail(ErrorCode::StructureError, "child does not point back to parent " + std::to_string(node.id));
        }
      }
    }
  }
  if (roots != 1) fail(ErrorCode::StructureError, "tree must have exactly one root");
  // Reachability from the root rules out disconnected cycles.
  std::vector<bool> seen(n, false);
  std::vector<int> stack{root_};
  int visited = 0;
  while (!stack.empty()) {
    const int u = stack.back();
    stack.pop_back();
    if (seen[u]) fail(ErrorCode::StructureError, "cycle detected at node " + std::to_string(u));
    seen[u] = true;
    ++visited;
    if (!nodes_[u].is_leaf()) {
      stack.push_back(nodes_[u].children[0]);
      stack.push_back(nodes_[u].children[1]);
    }
  }
  if (visited != n) fail(ErrorCode::StructureError, "tree is not connected");
}

const TaxonomyNode& Taxonomy::node(int id) const {
  if (!has_node(id)) fail(ErrorCode::UnknownNode, "node id " + std::to_string(id));
  return nodes_[id];
}

namespace {

// Recursive root-down search; returns true when target was found below `id`.
bool search_path(const std::vector<TaxonomyNode>& nodes, int id, int target,
                 std::vector<int>& path) {
  path.push_back(id);
  if (id == target) return true;
  const TaxonomyNode& n = nodes[id];
  if (!n.is_leaf()) {
    for (int c : n.children) {
      if (search_path(nodes, c, target, path)) return true;
    }
  }
  path.pop_back();
  return false;
}

}  // namespace

std::vector<int> Taxonomy::find_path(int target_id) const {
  if (!has_node(target_id)) fail(ErrorCode::UnknownNode, "node id " + std::to_string(target_id));
  std::vector<int> path;
  search_path(nodes_, root_, target_id, path);
  return path;
}

int Taxonomy::sibling_of(int node_id) const {
  const TaxonomyNode& n = node(node_id);
  if (n.parent < 0) fail(ErrorCode::RootHasNoSibling, "node " + std::to_string(node_id) + " is the root");
  const TaxonomyNode& p = nodes_[n.parent];
  return p.children[0] == node_id ? p.children[1] : p.children[0];
}

std::pair<Tensor, Tensor> Taxonomy::adjacency() const {
  const std::size_t n = static_cast<std::size_t>(node_count());
  Tensor a1(n, n);
  for (const TaxonomyNode& node : nodes_) {
    if (!node.is_leaf()) {
      a1.at(static_cast<std::size_t>(node.id), static_cast<std::size_t>(node.children[0])) = 1.0;
      a1.at(static_cast<std::size_t>(node.id), static_cast<std::size_t>(node.children[1])) = 1.0;
    }
  }
  return {a1, transpose(a1)};
}

std::vector<int> Taxonomy::label_set(int leaf_id) const {
  const TaxonomyNode& n = node(leaf_id);
  if (!n.is_leaf()) fail(ErrorCode::NotALeaf, "node " + std::to_string(leaf_id) + " is internal");
  std::vector<int> out;
  for (int cur = leaf_id; cur != root_; cur = nodes_[cur].parent) out.push_back(cur);
  std::sort(out.begin(), out.end());
  return out;
}

int Taxonomy::leaf_class_of(int node_id) const {
  const auto it = std::find(leaves_.begin(), leaves_.end(), node_id);
  return it == leaves_.end() ? -1 : static_cast<int>(it - leaves_.begin());
}

int Taxonomy::depth(int id) const {
  int d = 0;
  for (int cur = node(id).id; cur != root_; cur = nodes_[cur].parent) ++d;
  return d;
}

std::uint64_t Taxonomy::content_hash() const {
  std::ostringstream os;
  os << node_count() << ';';
  for (const TaxonomyNode& n : nodes_) {
    os << n.id << ':' << n.name << ':' << n.parent << ':' << n.children[0] << ','
       << n.children[1] << ';';
  }
  return Rng::fnv1a(os.str());
}

}  // namespace pathtree
