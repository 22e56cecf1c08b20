#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace sla {

/// Rule identifiers shared by thrown errors and collected diagnostics.
enum class Errc {
  // chat
  MissingBegin,
  MissingEnd,
  UnknownParticipant,
  MalformedLine,
  DuplicateTier,
  BadParticipantCode,
  BadTierCode,
  DuplicateParticipant,
  OrphanTier,
  MisplacedHeader,
  ContentAfterEnd,
  EmptyUtterance,
  BadToken,
  BadHeader,
  UnterminatedMarker,
  UnknownMarker,
  UnbalancedScopes,
  InvalidDoc,
  AmbiguousUtterance,
  // groups / store
  DifferentUtterance,
  AmbiguityUnresolved,
  DefaultInterpretation,
  NotInlineRepresentable,
  DroppedGroup,
  DanglingReference,
  OutOfBounds,
  MalformedXml,
  SchemaViolation,
  VersionUnsupported,
  // version log
  SeqGap,
  StaleBefore,
  PathInvalid,
  TimeRegression,
  VersionOutOfRange,
  LockHeld,
  // partial transcription
  UnknownScheme,
  OverlapInMediaTime,
  EmptySegment,
  BadMediaTime,
  UnknownSegment,
  DuplicateSegment,
  SegmentNotIndexed,
  SegmentAlreadyTranscribed,
  DuplicateUtteranceId,
  // plumbing
  Io,
  Usage,
};

std::string_view to_string(Errc code);

enum class Mode { strict, lenient };

enum class Severity { error, warning };

struct Diagnostic {
  Errc rule;
  std::size_t line = 0;  // 1-based; 0 when the finding has no source line
  std::string message;
  Severity severity = Severity::error;

  bool operator==(const Diagnostic&) const = default;
};

/// "line N: Rule: message" (the line part is omitted when line is 0).
std::string format(const Diagnostic& d);

bool has_errors(const std::vector<Diagnostic>& diags);

class Error : public std::runtime_error {
 public:
  Error(Errc code, std::string message, std::size_t line = 0);
  explicit Error(const Diagnostic& d);

  Errc code() const noexcept { return code_; }
  std::size_t line() const noexcept { return line_; }

 private:
  Errc code_;
  std::size_t line_;
};

}  // namespace sla
