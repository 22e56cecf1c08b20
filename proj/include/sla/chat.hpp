#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "sla/error.hpp"
#include "sla/groups.hpp"

namespace sla {

/// Three uppercase letters in a valid transcript. Lenient parsing keeps
/// whatever the speaker label held and reports BadParticipantCode.
struct ParticipantCode {
  std::string value;

  static bool is_valid(std::string_view code) noexcept;
  bool valid() const noexcept { return is_valid(value); }
  auto operator<=>(const ParticipantCode&) const = default;
};

enum class TokenKind { word, pause, terminator, scope_open, scope_close, scope_marker };

std::string_view to_string(TokenKind kind);

struct Token {
  TokenKind kind = TokenKind::word;
  std::string text;
  std::optional<ScopeMarkerKind> marker;  // set iff kind == scope_marker
  std::optional<std::string> payload;

  static Token word(std::string text);
  static Token pause();
  static Token terminator(char c);
  static Token open();
  static Token close();
  static Token scope_marker(ScopeMarkerKind kind, std::optional<std::string> payload = std::nullopt);

  bool is_content() const noexcept {
    return kind == TokenKind::word || kind == TokenKind::pause || kind == TokenKind::terminator;
  }
  bool operator==(const Token&) const = default;
};

/// Canonical surface text of a marker, e.g. "[/]" or "[= laughs]".
std::string marker_text(ScopeMarkerKind kind, const std::optional<std::string>& payload);

/// Whether a marker of this kind requires, permits or forbids a payload.
bool marker_requires_payload(ScopeMarkerKind kind) noexcept;
bool marker_allows_payload(ScopeMarkerKind kind) noexcept;

enum class HeaderKind { constant, changeable };

struct Header {
  std::string name;
  std::string value;
  HeaderKind kind = HeaderKind::constant;

  static Header make(std::string name, std::string value = {});
  bool operator==(const Header&) const = default;
};

/// Header names that may recur in the body of a transcript.
bool is_changeable_header(std::string_view name);

struct Utterance {
  ParticipantCode speaker;
  std::vector<Token> tokens;
  std::string raw_text;  // source text; not part of equality

  bool operator==(const Utterance& other) const {
    return speaker == other.speaker && tokens == other.tokens;
  }
};

struct DependentTier {
  std::string code;
  std::string content;
  bool operator==(const DependentTier&) const = default;
};

struct UtteranceBlock {
  Utterance mainline;
  std::vector<DependentTier> tiers;
  bool operator==(const UtteranceBlock&) const = default;
};

using BodyItem = std::variant<Header, UtteranceBlock>;

struct TranscriptDoc {
  std::vector<Header> constant_headers;
  std::vector<BodyItem> body;
  bool has_end = false;

  bool operator==(const TranscriptDoc&) const = default;
};

struct ParseResult {
  TranscriptDoc doc;
  std::vector<Diagnostic> diagnostics;
};

/// One consistent reading of an utterance's inline group markup. Ranges are
/// over content tokens and carry no ids; they are kept sorted by
/// (start, end descending, kind, payload).
struct Interpretation {
  std::vector<GroupRange> ranges;
  bool operator<(const Interpretation& other) const;
  bool operator==(const Interpretation&) const = default;
};

/// Splits mainline content into tokens. In strict mode an unterminated or
/// unknown marker throws; in lenient mode it is reported and kept as words.
std::vector<Token> tokenize_mainline(std::string_view line_text, Mode mode = Mode::strict,
                                     std::vector<Diagnostic>* diagnostics = nullptr,
                                     std::size_t line = 0);

/// Joins tokens with single spaces, attaching "<" to what follows and ">" to
/// what precedes.
std::string render_tokens(std::span<const Token> tokens);

ParseResult parse_transcript(std::string_view text, Mode mode = Mode::strict);

std::vector<Interpretation> extract_inline_groups(std::span<const Token> tokens);
inline std::vector<Interpretation> extract_inline_groups(const Utterance& u) {
  return extract_inline_groups(std::span<const Token>(u.tokens));
}

/// Word, pause and terminator tokens, in order.
std::vector<Token> content_tokens(std::span<const Token> tokens);

/// Writes ranges back into a content token sequence as inline markup.
/// Single-word ranges get a bare trailing marker; every other range gets
/// brackets with its marker right after the close. Requires a set that
/// check_inline_representable accepts.
std::vector<Token> embed_groups(std::span<const Token> content, std::span<const GroupRange> ranges);

std::string render_chat(const TranscriptDoc& doc);

/// Strict invariants of a document model. Line numbers refer to the
/// canonical rendering of `doc`.
std::vector<Diagnostic> validate(const TranscriptDoc& doc);

/// One comma-separated entry of an @Participants value: "CODE [Name] Role".
struct ParticipantEntry {
  std::string code;
  std::string name;
  std::string role;
  bool operator==(const ParticipantEntry&) const = default;
};

std::vector<ParticipantEntry> parse_participants_value(std::string_view value);

/// Speaker codes listed by the @Participants header(s) of the constant block.
std::vector<std::string> declared_participants(const TranscriptDoc& doc);

}  // namespace sla
