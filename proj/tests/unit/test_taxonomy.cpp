#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "support/oracles.hpp"
#include "taxoria/error.hpp"
#include "taxoria/taxonomy.hpp"

using namespace taxoria;
namespace tt = taxoria::testing;

namespace {

std::string fixture(const std::string& name) { return std::string(TAXORIA_TEST_DATA) + "/" + name; }

ErrorCode parse_error(std::string_view doc, ParseMode mode = ParseMode::Strict) {
  try {
    parse_taxonomy(doc, mode);
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("document parsed unexpectedly: " << doc);
  return ErrorCode::Io;
}

std::vector<std::pair<std::string, std::size_t>> names(const std::vector<VisitedNode>& v) {
  std::vector<std::pair<std::string, std::size_t>> out;
  for (const auto& n : v) out.emplace_back(n.node.get().name, n.depth);
  return out;
}

std::vector<std::pair<std::string, std::size_t>> names(const std::vector<tt::Visit>& v) {
  std::vector<std::pair<std::string, std::size_t>> out;
  for (const auto& [n, d] : v) out.emplace_back(n->name, d);
  return out;
}

}  // namespace

TEST_CASE("parse: single root and two leaves") {
  auto t = parse_taxonomy(R"({"name":"Thing","children":[]})");
  CHECK(t.class_count() == 1);
  CHECK(t.max_depth() == 0);
  CHECK(t.root().source == SourceKey::OriginalTaxonomy);

  auto two = parse_taxonomy(
      R"({"name":"Thing","children":[{"name":"Place","children":[]},{"name":"Person","children":[]}]})");
  CHECK(two.class_count() == 3);
  CHECK(two.max_depth() == 1);
}

TEST_CASE("parse: error kinds") {
  CHECK(parse_error("") == ErrorCode::EmptyDocument);
  CHECK(parse_error("   \n") == ErrorCode::EmptyDocument);
  CHECK(parse_error("{\"name\":") == ErrorCode::MalformedDocument);
  CHECK(parse_error(R"({"children":[]})") == ErrorCode::SchemaViolation);
  CHECK(parse_error(R"({"name":""})") == ErrorCode::SchemaViolation);
  CHECK(parse_error(R"({"name":"  "})") == ErrorCode::SchemaViolation);
  CHECK(parse_error(R"({"name":3})") == ErrorCode::SchemaViolation);
  CHECK(parse_error(R"({"name":"A","children":{}})") == ErrorCode::SchemaViolation);
  CHECK(parse_error(R"({"name":"A","source":"human"})") == ErrorCode::SchemaViolation);
  CHECK(parse_error(R"({"name":"A","metadata":{"k":1}})") == ErrorCode::SchemaViolation);
  CHECK(parse_error(R"([{"name":"A"}])") == ErrorCode::SchemaViolation);
  CHECK(parse_error(R"({"name":"A","children":[{"name":"B","children":[]},{"name":"b","children":[]}]})") ==
        ErrorCode::SchemaViolation);
}

TEST_CASE("parse: defaults, metadata and unknown keys") {
  auto t = parse_taxonomy(R"({"name":"A","children":[{"name":"B","source":"llm-generated","metadata":{"model":"m"}}]})");
  REQUIRE(t.root().children.size() == 1);
  CHECK(t.root().children[0].source == SourceKey::LlmGenerated);
  CHECK(t.root().children[0].metadata.at("model") == "m");

  const std::string with_extra = R"({"name":"A","uri":"http://x/A","children":[]})";
  CHECK(parse_error(with_extra) == ErrorCode::SchemaViolation);
  auto lenient = parse_taxonomy(with_extra, ParseMode::Lenient);
  CHECK(lenient.root().extra.at("uri") == "http://x/A");
  CHECK(serialize_taxonomy(lenient).find(R"("uri":"http://x/A")") != std::string::npos);
}

TEST_CASE("parse: schema.org subset fixture matches brute-force count") {
  auto t = load_taxonomy(fixture("schema_org_subset.json"));
  auto [count, depth] = tt::brute_stats(t.root());
  CHECK(t.class_count() == count);
  CHECK(t.max_depth() == depth);
  // Frozen from a one-off recursive count over the fixture file.
  CHECK(count == 85);
  CHECK(depth == 5);
}

TEST_CASE("load: missing file") {
  try {
    load_taxonomy(fixture("does-not-exist.json"));
    FAIL("expected FileNotFound");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::FileNotFound);
  }
}

TEST_CASE("load: optional full schema.org file") {
  const char* path = std::getenv("TAXORIA_SCHEMA_ORG_FILE");
  if (!path || !std::filesystem::exists(path)) return;
  auto t = load_taxonomy(path, ParseMode::Lenient);
  CHECK(t.class_count() == 1143);
  CHECK(t.max_depth() == 6);
}

TEST_CASE("serialize: canonical form") {
  CHECK(serialize_taxonomy(Taxonomy(TaxonomyNode("Thing"))) ==
        R"({"name":"Thing","source":"original-taxonomy","children":[]})");

  TaxonomyNode root("Thing");
  root.children.emplace_back("Store", SourceKey::LlmGenerated);
  auto text = serialize_taxonomy(Taxonomy(root));
  CHECK(text.find(R"("source":"llm-generated")") != std::string::npos);
  CHECK(text.find(R"("source":"original-taxonomy")") != std::string::npos);
}

TEST_CASE("serialize: round trip") {
  auto t = load_taxonomy(fixture("schema_org_subset.json"));
  auto back = parse_taxonomy(serialize_taxonomy(t));
  CHECK(structurally_equal(t, back));
  CHECK(serialize_taxonomy(back) == serialize_taxonomy(t));

  std::mt19937 rng(7);
  for (int i = 0; i < 100; ++i) {
    Taxonomy r(tt::random_tree(rng, 1 + rng() % 60));
    CHECK(structurally_equal(r, parse_taxonomy(serialize_taxonomy(r))));
  }
}

TEST_CASE("traversal: worked examples") {
  TaxonomyNode a("A");
  a.children.emplace_back("B");
  a.children[0].children.emplace_back("D");
  a.children.emplace_back("C");
  Taxonomy t(a);
  using V = std::vector<std::pair<std::string, std::size_t>>;
  CHECK(names(bfs_order(t)) == V{{"A", 0}, {"B", 1}, {"C", 1}, {"D", 2}});
  CHECK(names(dfs_order(t)) == V{{"A", 0}, {"B", 1}, {"D", 2}, {"C", 1}});

  Taxonomy single(TaxonomyNode("Thing"));
  CHECK(names(bfs_order(single)) == V{{"Thing", 0}});
  CHECK(names(dfs_order(single)) == V{{"Thing", 0}});
}

TEST_CASE("traversal: random trees against queue and stack oracles") {
  std::mt19937 rng(42);
  for (int i = 0; i < 200; ++i) {
    Taxonomy t(tt::random_tree(rng, 50));
    auto bfs = bfs_order(t);
    auto dfs = dfs_order(t);
    CHECK(names(bfs) == names(tt::queue_bfs(t.root())));
    CHECK(names(dfs) == names(tt::stack_dfs(t.root())));
    CHECK(bfs.size() == t.class_count());
    for (std::size_t k = 1; k < bfs.size(); ++k) CHECK(bfs[k - 1].depth <= bfs[k].depth);
    // Same node identities, not just names.
    auto q = tt::queue_bfs(t.root());
    for (std::size_t k = 0; k < bfs.size(); ++k) CHECK(&bfs[k].node.get() == q[k].first);
  }
}

TEST_CASE("node_at_path") {
  auto t = parse_taxonomy(R"({"name":"Thing","children":[{"name":"Place"},{"name":"Person"}]})");
  std::vector<std::string> root{"Thing"}, place{"Thing", "Place"}, folded{"thing", "PLACE "}, nope{"Thing", "Nope"};
  CHECK(&node_at_path(t, root) == &t.root());
  CHECK(node_at_path(t, place).name == "Place");
  CHECK(node_at_path(t, folded).name == "Place");
  try {
    node_at_path(t, nope);
    FAIL("expected PathNotFound");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::PathNotFound);
    CHECK(std::string(e.what()).find("Nope") != std::string::npos);
  }
  std::vector<std::string> wrong_root{"Entity"};
  CHECK_THROWS_AS(node_at_path(t, wrong_root), Error);
}

TEST_CASE("compute_stats") {
  CHECK(compute_stats(TaxonomyNode("Thing")) == TaxonomyStats{1, 0});
  CHECK(compute_stats(tt::chain(4)) == TaxonomyStats{4, 3});
  std::mt19937 rng(3);
  for (int i = 0; i < 100; ++i) {
    auto root = tt::random_tree(rng, 1 + rng() % 80);
    auto [c, d] = tt::brute_stats(root);
    CHECK(compute_stats(root) == TaxonomyStats{c, d});
  }
}

TEST_CASE("name_paths enumerates every node once") {
  std::mt19937 rng(11);
  for (int i = 0; i < 50; ++i) {
    auto root = tt::random_tree(rng, 40);
    auto paths = name_paths(root);
    CHECK(paths.size() == compute_stats(root).class_count);
    std::set<std::vector<std::string>> folded;
    for (auto p : paths) {
      for (auto& s : p) s = tt::lower(s);
      folded.insert(p);
    }
    CHECK(folded == tt::path_set(root));
  }
}

TEST_CASE("fold_name and same_name") {
  CHECK(fold_name("  Online Store ") == "online store");
  CHECK(same_name("Place", "place"));
  CHECK_FALSE(same_name("Place", "Places"));
  CHECK(parse_source_key("llm-generated") == SourceKey::LlmGenerated);
  CHECK_FALSE(parse_source_key("LLM-generated").has_value());
}
