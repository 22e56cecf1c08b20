#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace sla {

/// The scoped-symbol categories a word group can carry.
enum class ScopeMarkerKind {
  paralinguistic,
  explanation,
  replacement,
  retrace,
  retrace_correction,
  overlap_follows,
  overlap_precedes,
  error,
};

inline constexpr ScopeMarkerKind kAllMarkerKinds[] = {
    ScopeMarkerKind::paralinguistic,  ScopeMarkerKind::explanation,
    ScopeMarkerKind::replacement,     ScopeMarkerKind::retrace,
    ScopeMarkerKind::retrace_correction, ScopeMarkerKind::overlap_follows,
    ScopeMarkerKind::overlap_precedes, ScopeMarkerKind::error,
};

std::string_view to_string(ScopeMarkerKind kind);
std::optional<ScopeMarkerKind> marker_kind_from_string(std::string_view name);

/// A word group held apart from the tokens it spans: [start, end) over the
/// content tokens of one utterance.
struct GroupRange {
  std::string id;
  std::string utterance_id;
  std::size_t start = 0;
  std::size_t end = 0;
  ScopeMarkerKind kind = ScopeMarkerKind::explanation;
  std::optional<std::string> payload;
  bool tombstone = false;

  std::size_t length() const noexcept { return end - start; }
  bool operator==(const GroupRange&) const = default;
};

enum class GroupRelation { isolated, embedded, overlapping, equal };

std::string_view to_string(GroupRelation relation);

/// Throws Error(DifferentUtterance) when the ranges sit in different utterances.
GroupRelation relate(const GroupRange& a, const GroupRange& b);

/// True when `outer` strictly contains `inner` (same utterance, not equal).
bool strictly_contains(const GroupRange& outer, const GroupRange& inner) noexcept;

/// Containment and overlap structure over a set of ranges. Nodes are indices
/// into the input span. Ranges in different utterances are never related.
struct GroupForest {
  std::vector<std::optional<std::size_t>> parent;
  std::vector<std::pair<std::size_t, std::size_t>> containment;  // (parent, child)
  std::vector<std::pair<std::size_t, std::size_t>> overlaps;     // (i, j), i < j
  std::vector<std::pair<std::size_t, std::size_t>> equals;       // (i, j), i < j
  std::vector<std::size_t> roots;

  bool empty() const noexcept { return parent.empty(); }
};

GroupForest build_forest(std::span<const GroupRange> ranges);

/// Every overlapping or equal pair (i < j), sorted. Empty means the set can be
/// written as inline brackets.
std::vector<std::pair<std::size_t, std::size_t>> check_inline_representable(
    std::span<const GroupRange> ranges);

}  // namespace sla
