#include "sla/groups.hpp"

#include <algorithm>
#include <numeric>
#include <tuple>

#include "sla/error.hpp"

namespace sla {

std::string_view to_string(ScopeMarkerKind kind) {
  switch (kind) {
    case ScopeMarkerKind::paralinguistic: return "paralinguistic";
    case ScopeMarkerKind::explanation: return "explanation";
    case ScopeMarkerKind::replacement: return "replacement";
    case ScopeMarkerKind::retrace: return "retrace";
    case ScopeMarkerKind::retrace_correction: return "retrace_correction";
    case ScopeMarkerKind::overlap_follows: return "overlap_follows";
    case ScopeMarkerKind::overlap_precedes: return "overlap_precedes";
    case ScopeMarkerKind::error: return "error";
  }
  return "explanation";
}

std::optional<ScopeMarkerKind> marker_kind_from_string(std::string_view name) {
  for (auto kind : kAllMarkerKinds) {
    if (to_string(kind) == name) {
      return kind;
    }
  }
  return std::nullopt;
}

std::string_view to_string(GroupRelation relation) {
  switch (relation) {
    case GroupRelation::isolated: return "isolated";
    case GroupRelation::embedded: return "embedded";
    case GroupRelation::overlapping: return "overlapping";
    case GroupRelation::equal: return "equal";
  }
  return "isolated";
}

GroupRelation relate(const GroupRange& a, const GroupRange& b) {
  if (a.utterance_id != b.utterance_id) {
    throw Error(Errc::DifferentUtterance,
                "ranges '" + a.id + "' and '" + b.id + "' are in different utterances");
  }
  if (a.end <= b.start || b.end <= a.start) {
    return GroupRelation::isolated;
  }
  if (a.start == b.start && a.end == b.end) {
    return GroupRelation::equal;
  }
  if ((a.start <= b.start && b.end <= a.end) || (b.start <= a.start && a.end <= b.end)) {
    return GroupRelation::embedded;
  }
  return GroupRelation::overlapping;
}

bool strictly_contains(const GroupRange& outer, const GroupRange& inner) noexcept {
  return outer.utterance_id == inner.utterance_id && outer.start <= inner.start &&
         inner.end <= outer.end && (outer.start != inner.start || outer.end != inner.end);
}

namespace {

// Indices ordered by (utterance, start ascending, end descending, index). In
// this order every range that contains range j comes before j, and a scan
// from i can stop at the first range starting at or after i's end.
std::vector<std::size_t> sweep_order(std::span<const GroupRange> ranges) {
  std::vector<std::size_t> order(ranges.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
    const auto& a = ranges[x];
    const auto& b = ranges[y];
    return std::tie(a.utterance_id, a.start, b.end, x) < std::tie(b.utterance_id, b.start, a.end, y);
  });
  return order;
}

auto ordered_pair(std::size_t a, std::size_t b) { return std::make_pair(std::min(a, b), std::max(a, b)); }

}  // namespace

GroupForest build_forest(std::span<const GroupRange> ranges) {
  GroupForest forest;
  forest.parent.assign(ranges.size(), std::nullopt);
  const auto order = sweep_order(ranges);

  // Parent choice: smallest containing range; ties go to the later start,
  // then the lower index.
  auto better_parent = [&](std::size_t cand, std::size_t cur) {
    const auto& c = ranges[cand];
    const auto& p = ranges[cur];
    if (c.length() != p.length()) return c.length() < p.length();
    if (c.start != p.start) return c.start > p.start;
    return cand < cur;
  };

  for (std::size_t pos = 0; pos < order.size(); ++pos) {
    const std::size_t i = order[pos];
    const auto& a = ranges[i];
    for (std::size_t next = pos + 1; next < order.size(); ++next) {
      const std::size_t j = order[next];
      const auto& b = ranges[j];
      if (b.utterance_id != a.utterance_id || b.start >= a.end) {
        break;
      }
      if (b.end <= a.end) {
        if (b.start == a.start && b.end == a.end) {
          forest.equals.push_back(ordered_pair(i, j));
        } else if (!forest.parent[j] || better_parent(i, *forest.parent[j])) {
          forest.parent[j] = i;
        }
      } else {
        forest.overlaps.push_back(ordered_pair(i, j));
      }
    }
  }

  for (std::size_t k = 0; k < ranges.size(); ++k) {
    if (forest.parent[k]) {
      forest.containment.emplace_back(*forest.parent[k], k);
    } else {
      forest.roots.push_back(k);
    }
  }
  std::sort(forest.containment.begin(), forest.containment.end());
  std::sort(forest.overlaps.begin(), forest.overlaps.end());
  std::sort(forest.equals.begin(), forest.equals.end());
  return forest;
}

std::vector<std::pair<std::size_t, std::size_t>> check_inline_representable(
    std::span<const GroupRange> ranges) {
  const auto forest = build_forest(ranges);
  std::vector<std::pair<std::size_t, std::size_t>> offending = forest.overlaps;
  offending.insert(offending.end(), forest.equals.begin(), forest.equals.end());
  std::sort(offending.begin(), offending.end());
  return offending;
}

}  // namespace sla
