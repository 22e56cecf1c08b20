#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "sla/store.hpp"

namespace sla {

/// Everything a change log can address: the Root plus Descriptors by scheme.
struct VersionedState {
  SlaRoot root;
  std::map<std::string, SlaDescriptor> descriptors;
  bool operator==(const VersionedState&) const = default;
};

/// Canonical bytes of the whole state (root, then descriptors by scheme).
std::string serialize_state(const VersionedState& state);

enum class ChangeOp { insert, update };

std::string_view to_string(ChangeOp op);

/// nullopt scheme means the Root.
struct ChangeTarget {
  std::optional<std::string> scheme;

  static ChangeTarget root() { return {}; }
  static ChangeTarget descriptor(std::string scheme) { return {std::move(scheme)}; }
  std::string str() const;  // "root" or "descriptor:<scheme>"
  static ChangeTarget parse(std::string_view text);
  bool operator==(const ChangeTarget&) const = default;
};

/// One node of Root or Descriptor content. Deletion is an update whose
/// payload has its tombstone flag set.
using Payload = std::variant<HeaderField, RootUtterance, Tier, Token, GroupRange, CodeEntry>;

/// Path grammar:
///   header:<Name>[#k]      k-th header field with that name (default 0)
///   u:<uid>                utterance
///   u:<uid>/tier:<code>    dependent tier
///   u:<uid>/t:<i>          content token
///   group:<gid>            descriptor group
///   code:<k>               k-th descriptor code entry
struct ChangePath {
  enum class Kind { header, utterance, tier, token, group, code };
  Kind kind = Kind::utterance;
  std::string name;  // header name, utterance id or group id
  std::string tier;
  std::size_t index = 0;  // header occurrence, token index or code index

  static ChangePath parse(std::string_view text);  // throws PathInvalid
  std::string str() const;
};

struct ChangeRecord {
  std::uint64_t seq = 0;
  ChangeTarget target;
  ChangeOp op = ChangeOp::insert;
  std::string path;
  std::optional<Payload> before;
  Payload after;
  std::optional<std::size_t> position;  // utterance inserts only: index in the Root
  std::string timestamp;                // UTC, YYYY-MM-DDTHH:MM:SS[.fff]Z
  std::string author;

  bool operator==(const ChangeRecord&) const = default;
};

bool is_valid_timestamp(std::string_view ts) noexcept;

/// Append-only sequence of change records. Records are never modified once
/// appended; append_change returns a new log.
class ChangeLog {
 public:
  ChangeLog() = default;
  explicit ChangeLog(std::string transcript_id) : transcript_id_(std::move(transcript_id)) {}
  /// Checks contiguous seq and non-decreasing timestamps.
  ChangeLog(std::string transcript_id, std::vector<ChangeRecord> records);

  const std::string& transcript_id() const noexcept { return transcript_id_; }
  std::span<const ChangeRecord> records() const noexcept { return records_; }
  std::size_t size() const noexcept { return records_.size(); }
  bool empty() const noexcept { return records_.empty(); }
  std::uint64_t next_seq() const noexcept { return records_.size() + 1; }
  const std::string& schema_version() const noexcept { return schema_version_; }
  void set_schema_version(std::string v) { schema_version_ = std::move(v); }

  bool operator==(const ChangeLog&) const = default;

 private:
  friend ChangeLog append_change(const ChangeLog&, const VersionedState&, ChangeRecord);
  std::string transcript_id_;
  std::string schema_version_{kSchemaVersion};
  std::vector<ChangeRecord> records_;
};

struct VersionId {
  std::size_t n = 0;
};

/// Validates `change` against the log and the current state and returns the
/// extended log. Errors: SeqGap, TimeRegression, StaleBefore, PathInvalid.
ChangeLog append_change(const ChangeLog& log, const VersionedState& state, ChangeRecord change);

VersionedState apply_change(const VersionedState& state, const ChangeRecord& change);

/// Undoes `change`, which must be the last change applied to `state`.
VersionedState revert_change(const VersionedState& state, const ChangeRecord& change);

/// State after the first v.n records. Errors: VersionOutOfRange.
VersionedState materialize(const VersionedState& base, const ChangeLog& log, VersionId v);

/// Reverts every record, newest first, recovering the state the log started from.
VersionedState base_state(const VersionedState& current, const ChangeLog& log);

/// Records whose path equals `path` or lies beneath it, in seq order.
std::vector<ChangeRecord> history(const ChangeLog& log, std::string_view path);

std::string serialize_changes(const ChangeLog& log);
ChangeLog parse_changes(std::string_view bytes);

}  // namespace sla
