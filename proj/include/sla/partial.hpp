#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "sla/store.hpp"
#include "sla/version_log.hpp"

namespace sla {

/// Milliseconds from the start of the recording. Text form HH:MM:SS.mmm.
struct MediaTime {
  std::int64_t ms = 0;

  static MediaTime parse(std::string_view text);  // throws BadMediaTime
  std::string str() const;
  auto operator<=>(const MediaTime&) const = default;
};

enum class SegmentStatus { indexed, transcribed, excluded };

std::string_view to_string(SegmentStatus status);
std::optional<SegmentStatus> segment_status_from_string(std::string_view text);

/// Segment ids are drawn from [A-Za-z0-9_-]; '.' separates them from the
/// local part of piece utterance ids.
bool is_valid_segment_id(std::string_view id) noexcept;

struct Segment {
  std::string id;
  MediaTime start;
  MediaTime end;
  std::string label;
  SegmentStatus status = SegmentStatus::indexed;
  std::vector<std::string> tags;

  std::int64_t duration_ms() const noexcept { return end.ms - start.ms; }
  bool operator==(const Segment&) const = default;
};

struct SegmentIndex {
  std::string transcript_id;
  std::string schema_version{kSchemaVersion};
  std::vector<Segment> segments;  // sorted by start, pairwise disjoint

  const Segment* find(std::string_view id) const;
  /// Position of a segment in media order.
  std::optional<std::size_t> position(std::string_view id) const;
  bool operator==(const SegmentIndex&) const = default;
};

/// Errors: EmptySegment, OverlapInMediaTime, DuplicateSegment, SchemaViolation
/// (bad id or tag).
SegmentIndex create_index(std::string transcript_id, std::vector<Segment> entries);
SegmentIndex add_segment(const SegmentIndex& index, Segment segment);
/// indexed -> excluded. Nothing leaves transcribed or excluded.
SegmentIndex exclude_segment(const SegmentIndex& index, std::string_view id);

std::string serialize_index(const SegmentIndex& index);
SegmentIndex parse_index(std::string_view bytes);

/// Segment an utterance belongs to, from its "<segment>.<n>" id.
std::optional<std::string> segment_of(std::string_view utterance_id);

struct TranscriptPiece {
  std::string segment_id;
  std::vector<RootUtterance> utterances;
};

/// Reads a body-only CHAT fragment (main lines and dependent tiers, no
/// headers, no group markup) spoken by `participants`. Utterances are named
/// <segment>.1, <segment>.2, ...
TranscriptPiece parse_piece(std::string_view fragment, std::string segment_id,
                            const std::vector<ParticipantRecord>& participants);

struct MergeResult {
  SlaRoot root;
  ChangeLog log;
  SegmentIndex index;
};

/// Inserts the piece's utterances before the first utterance of a later
/// segment, one logged insert each, and marks the segment transcribed.
/// Errors: UnknownSegment, SegmentNotIndexed, SegmentAlreadyTranscribed,
/// DuplicateUtteranceId, UnknownParticipant, SchemaViolation (id prefix).
MergeResult merge_piece(const SlaRoot& root, const ChangeLog& log, const SegmentIndex& index,
                        const TranscriptPiece& piece, const std::string& timestamp, const std::string& author);

/// A maximal stretch of non-transcribed media time inside the indexed range.
struct Gap {
  std::size_t ordinal = 0;   // 1-based, in media order
  std::size_t position = 0;  // index in root.utterances where the gap falls
  MediaTime start;
  MediaTime end;
  std::optional<std::string> prev_segment;  // transcribed neighbours
  std::optional<std::string> next_segment;
  std::vector<std::string> skipped;  // non-transcribed segments inside

  std::int64_t duration_ms() const noexcept { return end.ms - start.ms; }
  bool operator==(const Gap&) const = default;
};

std::vector<Gap> gap_report(const SlaRoot& root, const SegmentIndex& index);

struct Breakpoint {
  std::string chain;
  std::string from_utterance;
  std::string to_utterance;
  std::string from_segment;
  std::string to_segment;
  std::vector<std::size_t> gaps;  // ordinals of the gaps crossed
  bool operator==(const Breakpoint&) const = default;
};

/// Chains are code entries with key "chain"; the value names the chain.
/// A chain counts as broken when two consecutive members sit in different
/// segments with untranscribed time between them.
struct CohesionReport {
  std::string scheme;
  std::size_t total_chains = 0;
  std::size_t broken_chains = 0;
  std::vector<Breakpoint> breakpoints;
  bool operator==(const CohesionReport&) const = default;
};

inline constexpr std::string_view kChainKey = "chain";

/// Errors: UnknownScheme.
CohesionReport cohesion_diagnostic(const SlaRoot& root, const std::map<std::string, SlaDescriptor>& descriptors,
                                   const SegmentIndex& index, const std::string& scheme);

/// Fractions of [first start, last end]. All zero for an empty index.
struct CoverageStats {
  std::int64_t span_ms = 0;
  double transcribed = 0;
  double indexed = 0;
  double excluded = 0;
  double unindexed = 0;
};

CoverageStats coverage_stats(const SegmentIndex& index);

/// to_chat plus an "@New Episode" / "@Comment" header pair at each gap.
ToChatResult render_partial(const SlaRoot& root, std::span<const SlaDescriptor> descriptors,
                            const SegmentIndex& index, Mode mode = Mode::strict);

enum class ReportFormat { text, xml };

std::string format_gaps(const std::string& transcript_id, const std::vector<Gap>& gaps, ReportFormat format);
std::string format_cohesion(const std::string& transcript_id, const CohesionReport& report, ReportFormat format);
std::string format_coverage(const std::string& transcript_id, const CoverageStats& stats, ReportFormat format);

}  // namespace sla
