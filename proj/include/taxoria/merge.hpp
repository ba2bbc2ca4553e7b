#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "taxoria/taxonomy.hpp"

namespace taxoria {

struct MergeOutcome {
  std::size_t added_count = 0;
  std::size_t merged_count = 0;
  // Matched nodes that contributed no new descendants.
  std::size_t skipped_duplicates = 0;

  MergeOutcome& operator+=(const MergeOutcome& o) {
    added_count += o.added_count;
    merged_count += o.merged_count;
    skipped_duplicates += o.skipped_duplicates;
    return *this;
  }
};

/// Adds `candidate` under the node at `parent_path`. A child with the same
/// folded name absorbs the candidate's children recursively instead.
/// Existing nodes keep their source key; existing metadata keys win.
MergeOutcome merge_candidate(Taxonomy& t, std::span<const std::string> parent_path,
                             const TaxonomyNode& candidate);

enum class MergeColor { Common, OnlyLeft, OnlyRight };

std::string_view to_string(MergeColor c);

struct MergeReportEntry {
  NamePath path;
  MergeColor color;
};

using MergeReport = std::vector<MergeReportEntry>;

struct MergeResult {
  Taxonomy taxonomy;
  MergeReport report;
  MergeOutcome outcome;
};

/// Union of two taxonomies sharing a root name. Left child order wins,
/// right-only children are appended. The report lists every node of the
/// result in pre-order.
MergeResult merge_taxonomies(const Taxonomy& left, const Taxonomy& right);

nlohmann::json merge_report_to_json(const MergeReport& report);

}  // namespace taxoria
