#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sla/chat.hpp"
#include "sla/error.hpp"
#include "sla/groups.hpp"
#include "sla/xml.hpp"

namespace sla {

inline constexpr std::string_view kSchemaVersion = "1.0";
inline constexpr std::string_view kChatGroupsScheme = "chat-groups";

/// Identifiers used for transcripts, utterances, groups and segments:
/// nonempty, drawn from [A-Za-z0-9._-].
bool is_valid_id(std::string_view id) noexcept;

/// Accepts any version whose major number matches kSchemaVersion.
void check_schema_version(std::string_view version, std::size_t line = 0);

struct ParticipantRecord {
  std::string code;
  std::string name;
  std::string role;
  std::optional<std::string> language;
  std::optional<std::string> corpus;
  bool operator==(const ParticipantRecord&) const = default;
};

/// A header abstracted out of the CHAT text. Headers from the constant block
/// have no anchor; body headers follow the utterance named by `after`.
struct HeaderField {
  std::string name;
  std::string value;
  std::optional<std::string> after;
  bool tombstone = false;
  bool operator==(const HeaderField&) const = default;
};

struct Tier {
  std::string code;
  std::string content;
  bool tombstone = false;
  bool operator==(const Tier&) const = default;
};

/// An utterance with its content tokens (word, pause, terminator only) and
/// the dependent tiers that code it directly.
struct RootUtterance {
  std::string id;
  std::string speaker;
  std::vector<Token> tokens;
  std::vector<Tier> tiers;
  bool tombstone = false;
  bool operator==(const RootUtterance&) const = default;
};

struct SlaRoot {
  std::string transcript_id;
  std::string schema_version{kSchemaVersion};
  std::vector<ParticipantRecord> participants;
  std::vector<HeaderField> header_fields;
  std::vector<RootUtterance> utterances;

  const RootUtterance* find_utterance(std::string_view id) const;
  bool operator==(const SlaRoot&) const = default;
};

/// What a code entry annotates: "group:<id>", "u:<id>" or "u:<id>/t:<index>".
struct CodeTarget {
  enum class Kind { group, utterance, token };
  Kind kind = Kind::utterance;
  std::string id;
  std::size_t token = 0;

  std::string str() const;
  static CodeTarget parse(std::string_view text);  // throws SchemaViolation
  bool operator==(const CodeTarget&) const = default;
};

struct CodeEntry {
  CodeTarget target;
  std::string key;
  std::string value;
  bool tombstone = false;
  bool operator==(const CodeEntry&) const = default;
};

struct SlaDescriptor {
  std::string transcript_id;
  std::string schema_version{kSchemaVersion};
  std::string scheme;
  std::vector<GroupRange> groups;
  std::vector<CodeEntry> codes;
  bool operator==(const SlaDescriptor&) const = default;
};

struct FromChatResult {
  SlaRoot root;
  SlaDescriptor groups;  // scheme chat-groups
  std::vector<Diagnostic> diagnostics;
};

/// Splits a transcript into Root content and a chat-groups Descriptor.
/// `picks` maps utterance ids ("u1", "u2", ... in document order) to the
/// interpretation index used for ambiguous group markup.
FromChatResult from_chat(const TranscriptDoc& doc, std::string transcript_id,
                         const std::map<std::string, std::size_t>& picks = {}, Mode mode = Mode::strict);

struct ToChatResult {
  TranscriptDoc doc;
  std::vector<Diagnostic> diagnostics;
};

/// Rebuilds a transcript from a Root and the chat-groups Descriptor among
/// `descriptors` (other schemes are ignored). Strict mode rejects groups that
/// cannot be bracketed inline; lenient mode drops them, leaves an explanation
/// marker in their place where one fits, and reports each drop.
ToChatResult to_chat(const SlaRoot& root, std::span<const SlaDescriptor> descriptors,
                     Mode mode = Mode::strict);

std::string serialize_root(const SlaRoot& root);
SlaRoot parse_root(std::string_view bytes);
std::string serialize_descriptor(const SlaDescriptor& descriptor);
SlaDescriptor parse_descriptor(std::string_view bytes);

/// Empty iff every group and code reference in `descriptor` resolves against
/// `root` and all ranges are in bounds.
std::vector<Diagnostic> resolve_refs(const SlaRoot& root, const SlaDescriptor& descriptor);

/// Element codecs shared with the change log, which stores payloads in the
/// same vocabulary.
namespace codec {
xml::Element encode(const ParticipantRecord& p);
xml::Element encode(const HeaderField& h);
xml::Element encode(const Tier& t);
xml::Element encode(const Token& t, std::size_t index);
xml::Element encode(const RootUtterance& u);
xml::Element encode(const GroupRange& g);
xml::Element encode(const CodeEntry& c);

ParticipantRecord decode_participant(const xml::Element& e);
HeaderField decode_header_field(const xml::Element& e);
Tier decode_tier(const xml::Element& e);
/// Returns the token and checks its element's index attribute.
Token decode_token(const xml::Element& e, std::optional<std::size_t> expected_index);
RootUtterance decode_utterance(const xml::Element& e);
GroupRange decode_group(const xml::Element& e);
CodeEntry decode_code(const xml::Element& e);

bool is_token_element(const xml::Element& e);
}  // namespace codec

}  // namespace sla
