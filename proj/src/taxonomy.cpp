#include "taxoria/taxonomy.hpp"

#include <algorithm>
#include <cctype>
#include <deque>
#include <fstream>
#include <set>
#include <sstream>

#include "taxoria/error.hpp"

namespace taxoria {

using ojson = nlohmann::ordered_json;

namespace {

constexpr std::string_view kOriginal = "original-taxonomy";
constexpr std::string_view kGenerated = "llm-generated";

[[noreturn]] void schema_error(const std::string& where, const std::string& what) {
  throw Error(ErrorCode::SchemaViolation, where + ": " + what);
}

std::string describe(const NamePath& path) {
  std::string out;
  for (const auto& p : path) {
    if (!out.empty()) out += " / ";
    out += p;
  }
  return out.empty() ? "<root>" : out;
}

TaxonomyNode node_from_json(const ojson& j, NamePath& path, ParseMode mode) {
  if (!j.is_object()) schema_error(describe(path), "node must be an object");
  TaxonomyNode node;

  auto name_it = j.find("name");
  if (name_it == j.end()) schema_error(describe(path), "missing `name`");
  if (!name_it->is_string()) schema_error(describe(path), "`name` must be a string");
  node.name = trim(name_it->get<std::string>());
  if (node.name.empty()) schema_error(describe(path), "`name` is empty");
  path.push_back(node.name);

  for (const auto& [key, value] : j.items()) {
    if (key == "name") continue;
    if (key == "source") {
      if (!value.is_string()) schema_error(describe(path), "`source` must be a string");
      auto sk = parse_source_key(value.get<std::string>());
      if (!sk) schema_error(describe(path), "unknown source key '" + value.get<std::string>() + "'");
      node.source = *sk;
    } else if (key == "children") {
      if (!value.is_array()) schema_error(describe(path), "`children` must be an array");
      std::set<std::string> seen;
      node.children.reserve(value.size());
      for (const auto& child : value) {
        auto parsed = node_from_json(child, path, mode);
        if (!seen.insert(fold_name(parsed.name)).second)
          schema_error(describe(path), "duplicate sibling name '" + parsed.name + "'");
        node.children.push_back(std::move(parsed));
      }
    } else if (key == "metadata") {
      if (!value.is_object()) schema_error(describe(path), "`metadata` must be an object");
      for (const auto& [mk, mv] : value.items()) {
        if (!mv.is_string()) schema_error(describe(path), "metadata value for '" + mk + "' must be a string");
        node.metadata.emplace(mk, mv.get<std::string>());
      }
    } else if (mode == ParseMode::Lenient) {
      node.extra[key] = value;
    } else {
      schema_error(describe(path), "unknown key '" + key + "'");
    }
  }
  path.pop_back();
  return node;
}

}  // namespace

std::string_view to_string(SourceKey key) {
  return key == SourceKey::OriginalTaxonomy ? kOriginal : kGenerated;
}

std::optional<SourceKey> parse_source_key(std::string_view text) {
  if (text == kOriginal) return SourceKey::OriginalTaxonomy;
  if (text == kGenerated) return SourceKey::LlmGenerated;
  return std::nullopt;
}

std::string trim(std::string_view s) {
  auto is_space = [](unsigned char c) { return std::isspace(c) != 0; };
  std::size_t b = 0, e = s.size();
  while (b < e && is_space(s[b])) ++b;
  while (e > b && is_space(s[e - 1])) --e;
  return std::string(s.substr(b, e - b));
}

std::string fold_name(std::string_view s) {
  std::string out = trim(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

bool same_name(std::string_view a, std::string_view b) { return fold_name(a) == fold_name(b); }

TaxonomyNode* TaxonomyNode::find_child(std::string_view child_name) {
  const auto key = fold_name(child_name);
  for (auto& c : children)
    if (fold_name(c.name) == key) return &c;
  return nullptr;
}

const TaxonomyNode* TaxonomyNode::find_child(std::string_view child_name) const {
  return const_cast<TaxonomyNode*>(this)->find_child(child_name);
}

bool structurally_equal(const TaxonomyNode& a, const TaxonomyNode& b) {
  if (a.name != b.name || a.source != b.source || a.extra != b.extra) return false;
  if (a.children.size() != b.children.size()) return false;
  for (std::size_t i = 0; i < a.children.size(); ++i)
    if (!structurally_equal(a.children[i], b.children[i])) return false;
  return true;
}

bool structurally_equal(const Taxonomy& a, const Taxonomy& b) {
  return structurally_equal(a.root(), b.root());
}

TaxonomyStats compute_stats(const TaxonomyNode& root) {
  TaxonomyStats stats{0, 0};
  std::vector<std::pair<const TaxonomyNode*, std::size_t>> stack{{&root, 0}};
  while (!stack.empty()) {
    auto [node, depth] = stack.back();
    stack.pop_back();
    ++stats.class_count;
    stats.max_depth = std::max(stats.max_depth, depth);
    for (const auto& c : node->children) stack.emplace_back(&c, depth + 1);
  }
  return stats;
}

Taxonomy::Taxonomy(TaxonomyNode root) : root_(std::move(root)), stats_(compute_stats(root_)) {
  if (trim(root_.name).empty()) throw Error(ErrorCode::SchemaViolation, "root name is empty");
}

Taxonomy parse_taxonomy(std::string_view document, ParseMode mode) {
  if (trim(document).empty()) throw Error(ErrorCode::EmptyDocument, "taxonomy document is empty");
  ojson j;
  try {
    j = ojson::parse(document);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::MalformedDocument, e.what());
  }
  if (j.is_null()) throw Error(ErrorCode::EmptyDocument, "taxonomy document is null");
  NamePath path;
  return Taxonomy(node_from_json(j, path, mode));
}

Taxonomy load_taxonomy(const std::string& path, ParseMode mode) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::FileNotFound, "cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_taxonomy(ss.str(), mode);
}

ojson node_to_json(const TaxonomyNode& node) {
  ojson j = ojson::object();
  j["name"] = node.name;
  j["source"] = std::string(to_string(node.source));
  if (!node.metadata.empty()) {
    ojson meta = ojson::object();
    for (const auto& [k, v] : node.metadata) meta[k] = v;
    j["metadata"] = std::move(meta);
  }
  for (const auto& [k, v] : node.extra.items()) j[k] = v;
  ojson children = ojson::array();
  for (const auto& c : node.children) children.push_back(node_to_json(c));
  j["children"] = std::move(children);
  return j;
}

std::string serialize_taxonomy(const Taxonomy& t) { return node_to_json(t.root()).dump(); }

std::vector<VisitedNode> bfs_order(const Taxonomy& t) {
  std::vector<VisitedNode> out;
  out.reserve(t.class_count());
  out.push_back({std::cref(t.root()), 0});
  // `out` doubles as the queue.
  for (std::size_t head = 0; head < out.size(); ++head) {
    const auto& [node, depth] = out[head];
    const std::size_t d = depth;
    for (const auto& c : node.get().children) out.push_back({std::cref(c), d + 1});
  }
  return out;
}

std::vector<VisitedNode> dfs_order(const Taxonomy& t) {
  std::vector<VisitedNode> out;
  out.reserve(t.class_count());
  auto visit = [&out](auto& self, const TaxonomyNode& n, std::size_t depth) -> void {
    out.push_back({std::cref(n), depth});
    for (const auto& c : n.children) self(self, c, depth + 1);
  };
  visit(visit, t.root(), 0);
  return out;
}

TaxonomyNode& node_at_path(TaxonomyNode& root, std::span<const std::string> path) {
  if (path.empty()) throw Error(ErrorCode::PathNotFound, "");
  if (!same_name(path[0], root.name)) throw Error(ErrorCode::PathNotFound, path[0]);
  TaxonomyNode* cur = &root;
  for (const auto& segment : path.subspan(1)) {
    cur = cur->find_child(segment);
    if (cur == nullptr) throw Error(ErrorCode::PathNotFound, segment);
  }
  return *cur;
}

const TaxonomyNode& node_at_path(const Taxonomy& t, std::span<const std::string> path) {
  return node_at_path(const_cast<TaxonomyNode&>(t.root()), path);
}

std::vector<NamePath> name_paths(const TaxonomyNode& root) {
  std::vector<NamePath> out;
  NamePath cur;
  auto visit = [&](auto& self, const TaxonomyNode& n) -> void {
    cur.push_back(n.name);
    out.push_back(cur);
    for (const auto& c : n.children) self(self, c);
    cur.pop_back();
  };
  visit(visit, root);
  return out;
}

}  // namespace taxoria
