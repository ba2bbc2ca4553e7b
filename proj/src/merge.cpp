#include "taxoria/merge.hpp"

#include <set>

#include "taxoria/error.hpp"

namespace taxoria {

namespace {

void merge_into(TaxonomyNode& existing, const TaxonomyNode& incoming, MergeOutcome& out);

void check_subtree(const TaxonomyNode& node) {
  std::set<std::string> seen;
  for (const auto& c : node.children) {
    if (trim(c.name).empty())
      throw Error(ErrorCode::InvariantViolation, "empty child name under '" + node.name + "'");
    if (!seen.insert(fold_name(c.name)).second)
      throw Error(ErrorCode::InvariantViolation,
                  "'" + node.name + "' would have duplicate children '" + c.name + "'");
    check_subtree(c);
  }
}

void append_or_merge(TaxonomyNode& parent, const TaxonomyNode& incoming, MergeOutcome& out) {
  if (TaxonomyNode* match = parent.find_child(incoming.name)) {
    ++out.merged_count;
    const std::size_t before = out.added_count;
    merge_into(*match, incoming, out);
    if (out.added_count == before) ++out.skipped_duplicates;
    return;
  }
  TaxonomyNode copy = incoming;
  copy.name = trim(copy.name);
  out.added_count += compute_stats(copy).class_count;
  parent.children.push_back(std::move(copy));
}

void merge_into(TaxonomyNode& existing, const TaxonomyNode& incoming, MergeOutcome& out) {
  for (const auto& [k, v] : incoming.metadata) existing.metadata.try_emplace(k, v);
  for (const auto& child : incoming.children) append_or_merge(existing, child, out);
}

void color_nodes(const TaxonomyNode& merged, const TaxonomyNode* left, const TaxonomyNode* right,
                 NamePath& path, MergeReport& report) {
  path.push_back(merged.name);
  MergeColor color = (left && right) ? MergeColor::Common
                     : left          ? MergeColor::OnlyLeft
                                     : MergeColor::OnlyRight;
  report.push_back({path, color});
  for (const auto& child : merged.children) {
    const TaxonomyNode* l = left ? left->find_child(child.name) : nullptr;
    const TaxonomyNode* r = right ? right->find_child(child.name) : nullptr;
    color_nodes(child, l, r, path, report);
  }
  path.pop_back();
}

}  // namespace

MergeOutcome merge_candidate(Taxonomy& t, std::span<const std::string> parent_path,
                             const TaxonomyNode& candidate) {
  if (trim(candidate.name).empty()) throw Error(ErrorCode::InvariantViolation, "candidate name is empty");
  check_subtree(candidate);
  return t.mutate([&](TaxonomyNode& root) {
    TaxonomyNode& parent = node_at_path(root, parent_path);
    MergeOutcome out;
    append_or_merge(parent, candidate, out);
    return out;
  });
}

std::string_view to_string(MergeColor c) {
  switch (c) {
    case MergeColor::Common: return "common";
    case MergeColor::OnlyLeft: return "only-left";
    case MergeColor::OnlyRight: return "only-right";
  }
  return "common";
}

MergeResult merge_taxonomies(const Taxonomy& left, const Taxonomy& right) {
  if (!same_name(left.root().name, right.root().name))
    throw Error(ErrorCode::RootMismatch,
                "root names differ: '" + left.root().name + "' vs '" + right.root().name + "'");
  Taxonomy merged = left;
  MergeOutcome outcome;
  const NamePath root_path{merged.root().name};
  for (const auto& child : right.root().children) outcome += merge_candidate(merged, root_path, child);
  // Root metadata follows the same fill-missing rule.
  merged.mutate([&](TaxonomyNode& root) {
    for (const auto& [k, v] : right.root().metadata) root.metadata.try_emplace(k, v);
  });

  MergeReport report;
  NamePath path;
  color_nodes(merged.root(), &left.root(), &right.root(), path, report);
  return {std::move(merged), std::move(report), outcome};
}

nlohmann::json merge_report_to_json(const MergeReport& report) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& e : report) {
    nlohmann::json entry = nlohmann::json::object();
    entry["path"] = e.path;
    entry["color"] = std::string(to_string(e.color));
    arr.push_back(std::move(entry));
  }
  return arr;
}

}  // namespace taxoria
