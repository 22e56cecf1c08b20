#include "sla/error.hpp"

#include <algorithm>

namespace sla {

std::string_view to_string(Errc code) {
  switch (code) {
    case Errc::MissingBegin: return "MissingBegin";
    case Errc::MissingEnd: return "MissingEnd";
    case Errc::UnknownParticipant: return "UnknownParticipant";
    case Errc::MalformedLine: return "MalformedLine";
    case Errc::DuplicateTier: return "DuplicateTier";
    case Errc::BadParticipantCode: return "BadParticipantCode";
    case Errc::BadTierCode: return "BadTierCode";
    case Errc::DuplicateParticipant: return "DuplicateParticipant";
    case Errc::OrphanTier: return "OrphanTier";
    case Errc::MisplacedHeader: return "MisplacedHeader";
    case Errc::ContentAfterEnd: return "ContentAfterEnd";
    case Errc::EmptyUtterance: return "EmptyUtterance";
    case Errc::BadToken: return "BadToken";
    case Errc::BadHeader: return "BadHeader";
    case Errc::UnterminatedMarker: return "UnterminatedMarker";
    case Errc::UnknownMarker: return "UnknownMarker";
    case Errc::UnbalancedScopes: return "UnbalancedScopes";
    case Errc::InvalidDoc: return "InvalidDoc";
    case Errc::AmbiguousUtterance: return "AmbiguousUtterance";
    case Errc::DifferentUtterance: return "DifferentUtterance";
    case Errc::AmbiguityUnresolved: return "AmbiguityUnresolved";
    case Errc::DefaultInterpretation: return "DefaultInterpretation";
    case Errc::NotInlineRepresentable: return "NotInlineRepresentable";
    case Errc::DroppedGroup: return "DroppedGroup";
    case Errc::DanglingReference: return "DanglingReference";
    case Errc::OutOfBounds: return "OutOfBounds";
    case Errc::MalformedXml: return "MalformedXml";
    case Errc::SchemaViolation: return "SchemaViolation";
    case Errc::VersionUnsupported: return "VersionUnsupported";
    case Errc::SeqGap: return "SeqGap";
    case Errc::StaleBefore: return "StaleBefore";
    case Errc::PathInvalid: return "PathInvalid";
    case Errc::TimeRegression: return "TimeRegression";
    case Errc::VersionOutOfRange: return "VersionOutOfRange";
    case Errc::LockHeld: return "LockHeld";
    case Errc::UnknownScheme: return "UnknownScheme";
    case Errc::OverlapInMediaTime: return "OverlapInMediaTime";
    case Errc::EmptySegment: return "EmptySegment";
    case Errc::BadMediaTime: return "BadMediaTime";
    case Errc::UnknownSegment: return "UnknownSegment";
    case Errc::DuplicateSegment: return "DuplicateSegment";
    case Errc::SegmentNotIndexed: return "SegmentNotIndexed";
    case Errc::SegmentAlreadyTranscribed: return "SegmentAlreadyTranscribed";
    case Errc::DuplicateUtteranceId: return "DuplicateUtteranceId";
    case Errc::Io: return "Io";
    case Errc::Usage: return "Usage";
  }
  return "Unknown";
}

std::string format(const Diagnostic& d) {
  std::string out;
  if (d.line != 0) {
    out += "line " + std::to_string(d.line) + ": ";
  }
  if (d.severity == Severity::warning) {
    out += "warning: ";
  }
  out += to_string(d.rule);
  if (!d.message.empty()) {
    out += ": " + d.message;
  }
  return out;
}

bool has_errors(const std::vector<Diagnostic>& diags) {
  return std::any_of(diags.begin(), diags.end(),
                     [](const Diagnostic& d) { return d.severity == Severity::error; });
}

Error::Error(Errc code, std::string message, std::size_t line)
    : std::runtime_error(format(Diagnostic{code, line, std::move(message)})),
      code_(code),
      line_(line) {}

Error::Error(const Diagnostic& d) : std::runtime_error(format(d)), code_(d.rule), line_(d.line) {}

}  // namespace sla
