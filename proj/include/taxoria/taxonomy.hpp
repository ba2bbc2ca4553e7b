#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace taxoria {

/// Provenance origin of a node.
enum class SourceKey { OriginalTaxonomy, LlmGenerated };

std::string_view to_string(SourceKey key);
std::optional<SourceKey> parse_source_key(std::string_view text);

/// Name path from the root, e.g. {"Thing", "Place", "City"}.
using NamePath = std::vector<std::string>;

std::string trim(std::string_view s);
/// Trimmed, ASCII-lowercased name used for sibling identity.
std::string fold_name(std::string_view s);
bool same_name(std::string_view a, std::string_view b);

struct TaxonomyNode {
  std::string name;
  SourceKey source = SourceKey::OriginalTaxonomy;
  std::vector<TaxonomyNode> children;
  std::map<std::string, std::string> metadata;
  // Unknown keys retained when parsed in lenient mode; emitted verbatim.
  nlohmann::ordered_json extra = nlohmann::ordered_json::object();

  TaxonomyNode() = default;
  explicit TaxonomyNode(std::string n, SourceKey s = SourceKey::OriginalTaxonomy,
                        std::vector<TaxonomyNode> c = {})
      : name(std::move(n)), source(s), children(std::move(c)) {}

  TaxonomyNode* find_child(std::string_view child_name);
  const TaxonomyNode* find_child(std::string_view child_name) const;
};

/// Structural equality: names, source keys, child order, extras.
/// Metadata is deliberately excluded.
bool structurally_equal(const TaxonomyNode& a, const TaxonomyNode& b);

struct TaxonomyStats {
  std::size_t class_count = 1;
  std::size_t max_depth = 0;

  bool operator==(const TaxonomyStats&) const = default;
};

TaxonomyStats compute_stats(const TaxonomyNode& root);

/// A rooted tree with cached statistics. Mutation goes through mutate(),
/// which revalidates and refreshes the statistics afterwards.
class Taxonomy {
 public:
  explicit Taxonomy(TaxonomyNode root);

  const TaxonomyNode& root() const { return root_; }
  std::size_t class_count() const { return stats_.class_count; }
  std::size_t max_depth() const { return stats_.max_depth; }
  TaxonomyStats stats() const { return stats_; }

  template <typename F>
  decltype(auto) mutate(F&& fn) {
    struct Refresh {
      Taxonomy& t;
      ~Refresh() { t.stats_ = compute_stats(t.root_); }
    } refresh{*this};
    return std::forward<F>(fn)(root_);
  }

 private:
  TaxonomyNode root_;
  TaxonomyStats stats_;
};

bool structurally_equal(const Taxonomy& a, const Taxonomy& b);

enum class ParseMode { Strict, Lenient };

Taxonomy parse_taxonomy(std::string_view document, ParseMode mode = ParseMode::Strict);
Taxonomy load_taxonomy(const std::string& path, ParseMode mode = ParseMode::Strict);

nlohmann::ordered_json node_to_json(const TaxonomyNode& node);
std::string serialize_taxonomy(const Taxonomy& t);

struct VisitedNode {
  std::reference_wrapper<const TaxonomyNode> node;
  std::size_t depth;
};

std::vector<VisitedNode> bfs_order(const Taxonomy& t);
std::vector<VisitedNode> dfs_order(const Taxonomy& t);

const TaxonomyNode& node_at_path(const Taxonomy& t, std::span<const std::string> path);
TaxonomyNode& node_at_path(TaxonomyNode& root, std::span<const std::string> path);

/// Every name path in the tree, root first, in pre-order.
std::vector<NamePath> name_paths(const TaxonomyNode& root);

}  // namespace taxoria
