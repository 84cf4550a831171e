#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <functional>
#include <string>
#include <vector>

#include "pathtree/rng.hpp"
#include "pathtree/taxonomy.hpp"

using namespace pathtree;

namespace {

const char* kThreeNode = R"({
  "name": "root",
  "children": [ {"name": "leafA"}, {"name": "leafB"} ]
})";

// Random full binary tree with n_leaves leaves, emitted as a JSON document.
std::string random_tree_json(int n_leaves, Rng& rng) {
  // Grow by repeatedly splitting a random leaf.
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
    if (n.left >= 0) {
      s += ",\"children\":[" + emit(n.left) + "," + emit(n.right) + "]";
    }
    s += "}";
    return s;
  };
  return emit(0);
}

// Oracle for find_path: walk parent pointers from the target, then reverse.
std::vector<int> parent_chain(const Taxonomy& t, int target) {
  std::vector<int> rev;
  for (int cur = target;; cur = t.node(cur).parent) {
    rev.push_back(cur);
    if (cur == t.root_id()) break;
  }
  return {rev.rbegin(), rev.rend()};
}

}  // namespace

TEST_CASE("smallest legal tree") {
  const Taxonomy t = Taxonomy::parse(kThreeNode);
  CHECK(t.node_count() == 3);
  CHECK(t.leaf_count() == 2);
  CHECK(t.internal_count() == 1);
  CHECK(t.root_id() == 0);
  CHECK(t.node(0).name == "root");
  CHECK(t.leaf_ids() == std::vector<int>{1, 2});
}

TEST_CASE("sysfl-style 13-node tree") {
  const Taxonomy t = Taxonomy::load(std::string(PATHTREE_DATA_DIR) + "/sysfl_tree.json");
  CHECK(t.node_count() == 13);
  CHECK(t.leaf_count() == 7);
  CHECK(t.internal_count() == 6);
  // Class order is left-to-right leaf order.
  CHECK(t.leaf_class_of(2) == 0);   // NOR
  CHECK(t.leaf_class_of(12) == 6);  // SCC
}

TEST_CASE("one child is rejected") {
  const char* doc = R"({"name":"r","children":[{"name":"only"}]})";
  CHECK_THROWS_AS(Taxonomy::parse(doc), Error);
  try {
    Taxonomy::parse(doc);
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::StructureError);
  }
}

TEST_CASE("single node is rejected") {
  CHECK_THROWS_AS(Taxonomy::parse(R"({"name":"alone"})"), Error);
}

TEST_CASE("malformed json is a parse error") {
  try {
    Taxonomy::parse("{nope");
    CHECK(false);
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::ParseError);
  }
}

TEST_CASE("duplicate and partial ids") {
  const char* dup = R"({"name":"r","id":0,"children":[{"name":"a","id":1},{"name":"b","id":1}]})";
  try {
    Taxonomy::parse(dup);
    CHECK(false);
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::StructureError);
  }
  const char* partial = R"({"name":"r","id":0,"children":[{"name":"a"},{"name":"b","id":2}]})";
  try {
    Taxonomy::parse(partial);
    CHECK(false);
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::ParseError);
  }
}

TEST_CASE("find_path basics") {
  const Taxonomy t = Taxonomy::parse(kThreeNode);
  CHECK(t.find_path(t.root_id()) == std::vector<int>{0});
  CHECK(t.find_path(1) == std::vector<int>{0, 1});
  CHECK_THROWS_AS(t.find_path(17), Error);
}

TEST_CASE("find_path matches parent-chain oracle on random trees") {
  Rng rng(31);
  for (int trial = 0; trial < 10; ++trial) {
    const Taxonomy t = Taxonomy::parse(random_tree_json(8, rng));  // 15 nodes
    for (int id = 0; id < t.node_count(); ++id) {
      const std::vector<int> path = t.find_path(id);
      CHECK(path == parent_chain(t, id));
      CHECK(path.front() == t.root_id());
      CHECK(path.back() == id);
      for (std::size_t i = 1; i < path.size(); ++i) {
        CHECK(t.node(path[i]).parent == path[i - 1]);
      }
    }
  }
}

TEST_CASE("sibling basics and involution") {
  const Taxonomy t = Taxonomy::parse(kThreeNode);
  CHECK(t.sibling_of(1) == 2);
  CHECK_THROWS_AS(t.sibling_of(t.root_id()), Error);

  Rng rng(32);
  const Taxonomy big = Taxonomy::parse(random_tree_json(6, rng));
  for (int id = 0; id < big.node_count(); ++id) {
    if (id == big.root_id()) continue;
    CHECK(big.sibling_of(big.sibling_of(id)) == id);
  }
}

TEST_CASE("adjacency structure") {
  const Taxonomy small = Taxonomy::parse(kThreeNode);
  auto [a1, a2] = small.adjacency();
  int ones = 0;
  for (std::size_t i = 0; i < a1.size(); ++i) ones += a1[i] == 1.0 ? 1 : 0;
  CHECK(ones == 2);
  CHECK(a1.at(0, 1) == 1.0);
  CHECK(a1.at(0, 2) == 1.0);

  const Taxonomy t = Taxonomy::load(std::string(PATHTREE_DATA_DIR) + "/sysfl_tree.json");
  auto [b1, b2] = t.adjacency();
  int edges = 0;
  for (std::size_t i = 0; i < b1.size(); ++i) edges += b1[i] != 0.0 ? 1 : 0;
  CHECK(edges == 12);  // 2N-2 for N=7
  // A2 is the transpose of A1; row/column sum structure of a full binary tree.
  for (std::size_t u = 0; u < b1.rows(); ++u) {
    for (std::size_t v = 0; v < b1.cols(); ++v) CHECK(b1.at(u, v) == b2.at(v, u));
    double row = 0.0, col = 0.0;
    for (std::size_t v = 0; v < b1.cols(); ++v) {
      row += b1.at(u, v);
      col += b1.at(v, u);
    }
    CHECK((row == 0.0 || row == 2.0));
    CHECK(col == (static_cast<int>(u) == t.root_id() ? 0.0 : 1.0));
  }
}

TEST_CASE("label sets exclude the root") {
  const Taxonomy small = Taxonomy::parse(kThreeNode);
  CHECK(small.label_set(1) == std::vector<int>{1});

  const char* seven = R"({
    "name":"root","children":[
      {"name":"c1","children":[{"name":"a"},{"name":"b"}]},
      {"name":"c2","children":[{"name":"e"},{"name":"f"}]}
    ]})";
  const Taxonomy t = Taxonomy::parse(seven);
  // Preorder ids: root=0 c1=1 a=2 b=3 c2=4 e=5 f=6.
  CHECK(t.label_set(2) == std::vector<int>{1, 2});
  CHECK_THROWS_AS(t.label_set(1), Error);

  Rng rng(33);
  const Taxonomy big = Taxonomy::parse(random_tree_json(7, rng));
  for (int leaf : big.leaf_ids()) {
    std::vector<int> path = big.find_path(leaf);
    path.erase(path.begin());
    std::sort(path.begin(), path.end());
    CHECK(big.label_set(leaf) == path);
    CHECK(static_cast<int>(big.label_set(leaf).size()) == big.depth(leaf));
  }
}

TEST_CASE("ids assigned by document order when omitted") {
  Rng rng(34);
  const Taxonomy t = Taxonomy::parse(random_tree_json(5, rng));
  CHECK(t.root_id() == 0);
  CHECK(t.node_count() == 9);
  // Names were emitted as n<raw-index> in document order.
  for (int id = 0; id < t.node_count(); ++id) {
    CHECK(t.node(id).name.substr(0, 1) == "n");
  }
}

TEST_CASE("content hash tracks structure but not descriptions") {
  const Taxonomy a = Taxonomy::parse(kThreeNode);
  const char* renamed = R"({
    "name": "root",
    "description": "free text",
    "children": [ {"name": "leafA"}, {"name": "leafB"} ]
  })";
  CHECK(a.content_hash() == Taxonomy::parse(renamed).content_hash());
  const char* other = R"({
    "name": "root",
    "children": [ {"name": "leafA"}, {"name": "leafC"} ]
  })";
  CHECK(a.content_hash() != Taxonomy::parse(other).content_hash());
}
