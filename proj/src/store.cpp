#include "sla/store.hpp"

#include <algorithm>
#include <charconv>
#include <set>
#include <tuple>

namespace sla {

bool is_valid_id(std::string_view id) noexcept {
  return !id.empty() && std::all_of(id.begin(), id.end(), [](char c) {
    return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '.' ||
           c == '_' || c == '-';
  });
}

void check_schema_version(std::string_view version, std::size_t line) {
  const auto dot = version.find('.');
  const auto major = version.substr(0, dot);
  const bool numeric = !major.empty() && std::all_of(major.begin(), major.end(), [](char c) {
    return c >= '0' && c <= '9';
  });
  if (!numeric) {
    throw Error(Errc::SchemaViolation, "schemaVersion '" + std::string(version) + "' is not a version", line);
  }
  const auto ours = kSchemaVersion.substr(0, kSchemaVersion.find('.'));
  if (major != ours) {
    throw Error(Errc::VersionUnsupported,
                "schemaVersion " + std::string(version) + " (supported: " + std::string(ours) + ".x)", line);
  }
}

const RootUtterance* SlaRoot::find_utterance(std::string_view id) const {
  for (const auto& u : utterances) {
    if (u.id == id) return &u;
  }
  return nullptr;
}

std::string CodeTarget::str() const {
  switch (kind) {
    case Kind::group: return "group:" + id;
    case Kind::utterance: return "u:" + id;
    case Kind::token: return "u:" + id + "/t:" + std::to_string(token);
  }
  return {};
}

namespace {

std::optional<std::size_t> parse_index(std::string_view s) {
  std::size_t out = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  if (s.empty() || ec != std::errc{} || ptr != s.data() + s.size()) return std::nullopt;
  return out;
}

}  // namespace

CodeTarget CodeTarget::parse(std::string_view text) {
  auto bad = [&] { return Error(Errc::SchemaViolation, "bad code target '" + std::string(text) + "'"); };
  CodeTarget t;
  if (text.starts_with("group:")) {
    t.kind = Kind::group;
    t.id = text.substr(6);
  } else if (text.starts_with("u:")) {
    auto rest = text.substr(2);
    const auto slash = rest.find("/t:");
    if (slash == std::string_view::npos) {
      t.kind = Kind::utterance;
      t.id = rest;
    } else {
      t.kind = Kind::token;
      t.id = rest.substr(0, slash);
      const auto idx = parse_index(rest.substr(slash + 3));
      if (!idx) throw bad();
      t.token = *idx;
    }
  } else {
    throw bad();
  }
  if (!is_valid_id(t.id)) throw bad();
  return t;
}

// ---------------------------------------------------------------------------
// Element codecs

namespace codec {

namespace {

void require_id(const xml::Element& e, const std::string& id, std::string_view what) {
  if (!is_valid_id(id)) {
    throw Error(Errc::SchemaViolation, std::string(what) + " '" + id + "' is not a valid identifier", e.line);
  }
}

bool tombstone_attr(const xml::Element& e) {
  const auto v = xml::optional_attr(e, "tombstone");
  if (!v) return false;
  if (*v != "1") throw Error(Errc::SchemaViolation, "tombstone must be \"1\"", e.line);
  return true;
}

void put_tombstone(xml::Element& e, bool tombstone) {
  if (tombstone) e.attr("tombstone", "1");
}

}  // namespace

xml::Element encode(const ParticipantRecord& p) {
  xml::Element e("participant");
  e.attr("code", p.code).attr("name", p.name).attr("role", p.role);
  if (p.language) e.attr("language", *p.language);
  if (p.corpus) e.attr("corpus", *p.corpus);
  return e;
}

xml::Element encode(const HeaderField& h) {
  xml::Element e("headerField");
  e.attr("name", h.name).attr("value", h.value);
  if (h.after) e.attr("after", *h.after);
  put_tombstone(e, h.tombstone);
  return e;
}

xml::Element encode(const Tier& t) {
  xml::Element e("tier");
  e.attr("code", t.code);
  put_tombstone(e, t.tombstone);
  e.text = t.content;
  return e;
}

xml::Element encode(const Token& t, std::size_t index) {
  const char* name = t.kind == TokenKind::pause ? "p" : t.kind == TokenKind::terminator ? "t" : "w";
  xml::Element e(name);
  e.attr("i", std::to_string(index));
  e.text = t.text;
  return e;
}

xml::Element encode(const RootUtterance& u) {
  xml::Element e("u");
  e.attr("id", u.id).attr("who", u.speaker);
  put_tombstone(e, u.tombstone);
  for (std::size_t i = 0; i < u.tokens.size(); ++i) e.add(encode(u.tokens[i], i));
  for (const auto& t : u.tiers) e.add(encode(t));
  return e;
}

xml::Element encode(const GroupRange& g) {
  xml::Element e("group");
  e.attr("id", g.id)
      .attr("u", g.utterance_id)
      .attr("start", std::to_string(g.start))
      .attr("end", std::to_string(g.end))
      .attr("kind", std::string(to_string(g.kind)));
  if (g.payload) e.attr("payload", *g.payload);
  put_tombstone(e, g.tombstone);
  return e;
}

xml::Element encode(const CodeEntry& c) {
  xml::Element e("code");
  e.attr("target", c.target.str()).attr("key", c.key).attr("value", c.value);
  put_tombstone(e, c.tombstone);
  return e;
}

ParticipantRecord decode_participant(const xml::Element& e) {
  xml::expect_name(e, "participant");
  xml::allow_attrs(e, {"code", "name", "role", "language", "corpus"});
  xml::expect_no_children(e);
  ParticipantRecord p;
  p.code = xml::required_attr(e, "code");
  p.name = xml::required_attr(e, "name");
  p.role = xml::required_attr(e, "role");
  p.language = xml::optional_attr(e, "language");
  p.corpus = xml::optional_attr(e, "corpus");
  if (p.code.empty()) throw Error(Errc::SchemaViolation, "participant without a code", e.line);
  return p;
}

HeaderField decode_header_field(const xml::Element& e) {
  xml::expect_name(e, "headerField");
  xml::allow_attrs(e, {"name", "value", "after", "tombstone"});
  xml::expect_no_children(e);
  HeaderField h;
  h.name = xml::required_attr(e, "name");
  h.value = xml::required_attr(e, "value");
  h.after = xml::optional_attr(e, "after");
  h.tombstone = tombstone_attr(e);
  if (h.name.empty()) throw Error(Errc::SchemaViolation, "headerField without a name", e.line);
  if (h.after) require_id(e, *h.after, "header anchor");
  return h;
}

Tier decode_tier(const xml::Element& e) {
  xml::expect_name(e, "tier");
  xml::allow_attrs(e, {"code", "tombstone"});
  xml::expect_no_children(e);
  return Tier{xml::required_attr(e, "code"), e.text, tombstone_attr(e)};
}

bool is_token_element(const xml::Element& e) { return e.name == "w" || e.name == "p" || e.name == "t"; }

Token decode_token(const xml::Element& e, std::optional<std::size_t> expected_index) {
  if (!is_token_element(e)) {
    throw Error(Errc::SchemaViolation, "expected a w, p or t element, found <" + e.name + ">", e.line);
  }
  xml::allow_attrs(e, {"i"});
  xml::expect_no_children(e);
  const auto index = xml::index_attr(e, "i");
  if (expected_index && index != *expected_index) {
    throw Error(Errc::SchemaViolation,
                "token index " + std::to_string(index) + " where " + std::to_string(*expected_index) + " was expected",
                e.line);
  }
  if (e.text.empty()) throw Error(Errc::SchemaViolation, "empty token", e.line);
  if (e.name == "p") {
    if (e.text != "#") throw Error(Errc::SchemaViolation, "pause token must be '#'", e.line);
    return Token::pause();
  }
  if (e.name == "t") {
    if (e.text != "." && e.text != "?" && e.text != "!") {
      throw Error(Errc::SchemaViolation, "terminator must be one of . ? !", e.line);
    }
    return Token::terminator(e.text.front());
  }
  return Token::word(e.text);
}

RootUtterance decode_utterance(const xml::Element& e) {
  xml::expect_name(e, "u");
  xml::allow_attrs(e, {"id", "who", "tombstone"});
  RootUtterance u;
  u.id = xml::required_attr(e, "id");
  u.speaker = xml::required_attr(e, "who");
  u.tombstone = tombstone_attr(e);
  require_id(e, u.id, "utterance id");
  if (!e.text.empty()) throw Error(Errc::SchemaViolation, "text directly inside <u>", e.line);
  for (const auto& child : e.children) {
    if (is_token_element(child)) {
      if (!u.tiers.empty()) throw Error(Errc::SchemaViolation, "token after tier", child.line);
      u.tokens.push_back(decode_token(child, u.tokens.size()));
    } else {
      u.tiers.push_back(decode_tier(child));
    }
  }
  return u;
}

GroupRange decode_group(const xml::Element& e) {
  xml::expect_name(e, "group");
  xml::allow_attrs(e, {"id", "u", "start", "end", "kind", "payload", "tombstone"});
  xml::expect_no_children(e);
  GroupRange g;
  g.id = xml::required_attr(e, "id");
  g.utterance_id = xml::required_attr(e, "u");
  g.start = xml::index_attr(e, "start");
  g.end = xml::index_attr(e, "end");
  const auto& kind = xml::required_attr(e, "kind");
  const auto parsed = marker_kind_from_string(kind);
  if (!parsed) throw Error(Errc::SchemaViolation, "unknown group kind '" + kind + "'", e.line);
  g.kind = *parsed;
  g.payload = xml::optional_attr(e, "payload");
  g.tombstone = tombstone_attr(e);
  require_id(e, g.id, "group id");
  require_id(e, g.utterance_id, "utterance id");
  if (g.start >= g.end) throw Error(Errc::SchemaViolation, "group '" + g.id + "' has start >= end", e.line);
  return g;
}

CodeEntry decode_code(const xml::Element& e) {
  xml::expect_name(e, "code");
  xml::allow_attrs(e, {"target", "key", "value", "tombstone"});
  xml::expect_no_children(e);
  CodeEntry c;
  try {
    c.target = CodeTarget::parse(xml::required_attr(e, "target"));
  } catch (const Error& err) {
    throw Error(Errc::SchemaViolation, err.what(), e.line);
  }
  c.key = xml::required_attr(e, "key");
  c.value = xml::required_attr(e, "value");
  c.tombstone = tombstone_attr(e);
  if (c.key.empty()) throw Error(Errc::SchemaViolation, "code entry with an empty key", e.line);
  return c;
}

}  // namespace codec

// ---------------------------------------------------------------------------
// Files

namespace {

void read_document_attrs(const xml::Element& doc, std::string& transcript_id, std::string& version) {
  transcript_id = xml::required_attr(doc, "transcriptId");
  version = xml::required_attr(doc, "schemaVersion");
  if (!is_valid_id(transcript_id)) {
    throw Error(Errc::SchemaViolation, "transcriptId '" + transcript_id + "' is not a valid identifier", doc.line);
  }
  check_schema_version(version, doc.line);
}

void require_no_text(const xml::Element& e) {
  if (!e.text.empty()) throw Error(Errc::SchemaViolation, "unexpected text inside <" + e.name + ">", e.line);
}

}  // namespace

std::string serialize_root(const SlaRoot& root) {
  xml::Element doc("slaRoot");
  doc.attr("transcriptId", root.transcript_id).attr("schemaVersion", root.schema_version);
  for (const auto& p : root.participants) doc.add(codec::encode(p));
  for (const auto& h : root.header_fields) doc.add(codec::encode(h));
  for (const auto& u : root.utterances) doc.add(codec::encode(u));
  return xml::write(doc);
}

SlaRoot parse_root(std::string_view bytes) {
  const auto doc = xml::parse(bytes);
  xml::expect_name(doc, "slaRoot");
  xml::allow_attrs(doc, {"transcriptId", "schemaVersion"});
  require_no_text(doc);
  SlaRoot root;
  read_document_attrs(doc, root.transcript_id, root.schema_version);
  for (const auto& child : doc.children) {
    if (child.name == "participant") {
      root.participants.push_back(codec::decode_participant(child));
    } else if (child.name == "headerField") {
      root.header_fields.push_back(codec::decode_header_field(child));
    } else if (child.name == "u") {
      root.utterances.push_back(codec::decode_utterance(child));
    } else {
      throw Error(Errc::SchemaViolation, "unexpected <" + child.name + "> in <slaRoot>", child.line);
    }
  }

  std::set<std::string> codes;
  for (const auto& p : root.participants) {
    if (!codes.insert(p.code).second) {
      throw Error(Errc::SchemaViolation, "participant '" + p.code + "' listed twice");
    }
  }
  std::set<std::string> ids;
  for (const auto& u : root.utterances) {
    if (!ids.insert(u.id).second) throw Error(Errc::SchemaViolation, "utterance id '" + u.id + "' repeated");
    if (!codes.count(u.speaker)) {
      throw Error(Errc::SchemaViolation, "utterance '" + u.id + "' speaker '" + u.speaker + "' is not a participant");
    }
  }
  return root;
}

std::string serialize_descriptor(const SlaDescriptor& d) {
  xml::Element doc("slaDescriptor");
  doc.attr("transcriptId", d.transcript_id).attr("schemaVersion", d.schema_version).attr("scheme", d.scheme);
  for (const auto& g : d.groups) doc.add(codec::encode(g));
  for (const auto& c : d.codes) doc.add(codec::encode(c));
  return xml::write(doc);
}

SlaDescriptor parse_descriptor(std::string_view bytes) {
  const auto doc = xml::parse(bytes);
  xml::expect_name(doc, "slaDescriptor");
  xml::allow_attrs(doc, {"transcriptId", "schemaVersion", "scheme"});
  require_no_text(doc);
  SlaDescriptor d;
  read_document_attrs(doc, d.transcript_id, d.schema_version);
  d.scheme = xml::required_attr(doc, "scheme");
  if (!is_valid_id(d.scheme)) throw Error(Errc::SchemaViolation, "scheme '" + d.scheme + "' is not a valid name", doc.line);
  std::set<std::string> ids;
  for (const auto& child : doc.children) {
    if (child.name == "group") {
      d.groups.push_back(codec::decode_group(child));
      if (!ids.insert(d.groups.back().id).second) {
        throw Error(Errc::SchemaViolation, "group id '" + d.groups.back().id + "' repeated", child.line);
      }
    } else if (child.name == "code") {
      d.codes.push_back(codec::decode_code(child));
    } else {
      throw Error(Errc::SchemaViolation, "unexpected <" + child.name + "> in <slaDescriptor>", child.line);
    }
  }
  return d;
}

std::vector<Diagnostic> resolve_refs(const SlaRoot& root, const SlaDescriptor& descriptor) {
  std::vector<Diagnostic> out;
  if (descriptor.transcript_id != root.transcript_id) {
    out.push_back({Errc::DanglingReference, 0,
                   "descriptor belongs to '" + descriptor.transcript_id + "', root is '" + root.transcript_id + "'"});
  }
  auto live_utterance = [&](const std::string& id) -> const RootUtterance* {
    const auto* u = root.find_utterance(id);
    return (u && !u->tombstone) ? u : nullptr;
  };

  std::map<std::string, const GroupRange*> groups;
  for (const auto& g : descriptor.groups) {
    if (!groups.emplace(g.id, &g).second) {
      out.push_back({Errc::SchemaViolation, 0, "group id '" + g.id + "' repeated"});
    }
    if (g.tombstone) continue;
    const auto* u = live_utterance(g.utterance_id);
    if (!u) {
      out.push_back({Errc::DanglingReference, 0, "group '" + g.id + "' refers to unknown utterance '" + g.utterance_id + "'"});
    } else if (g.start >= g.end || g.end > u->tokens.size()) {
      out.push_back({Errc::OutOfBounds, 0,
                     "group '" + g.id + "' [" + std::to_string(g.start) + "," + std::to_string(g.end) +
                         ") exceeds utterance '" + u->id + "' of " + std::to_string(u->tokens.size()) + " tokens"});
    }
  }

  for (std::size_t k = 0; k < descriptor.codes.size(); ++k) {
    const auto& c = descriptor.codes[k];
    if (c.tombstone) continue;
    const auto where = "code " + std::to_string(k) + " (" + c.target.str() + ")";
    if (c.key.empty()) out.push_back({Errc::SchemaViolation, 0, where + " has an empty key"});
    switch (c.target.kind) {
      case CodeTarget::Kind::group: {
        const auto it = groups.find(c.target.id);
        if (it == groups.end() || it->second->tombstone) {
          out.push_back({Errc::DanglingReference, 0, where + " names an unknown group"});
        }
        break;
      }
      case CodeTarget::Kind::utterance:
        if (!live_utterance(c.target.id)) out.push_back({Errc::DanglingReference, 0, where + " names an unknown utterance"});
        break;
      case CodeTarget::Kind::token: {
        const auto* u = live_utterance(c.target.id);
        if (!u) {
          out.push_back({Errc::DanglingReference, 0, where + " names an unknown utterance"});
        } else if (c.target.token >= u->tokens.size()) {
          out.push_back({Errc::OutOfBounds, 0, where + " is past the end of the utterance"});
        }
        break;
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// CHAT <-> SLA

namespace {

std::vector<std::string> split_bars(std::string_view s) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (true) {
    const auto bar = s.find('|', pos);
    out.emplace_back(s.substr(pos, bar == std::string_view::npos ? std::string_view::npos : bar - pos));
    if (bar == std::string_view::npos) break;
    pos = bar + 1;
  }
  return out;
}

std::vector<ParticipantRecord> participants_from_headers(const std::vector<Header>& headers) {
  std::vector<ParticipantRecord> records;
  for (const auto& h : headers) {
    if (h.name != "Participants") continue;
    for (auto& e : parse_participants_value(h.value)) {
      records.push_back({std::move(e.code), std::move(e.name), std::move(e.role), std::nullopt, std::nullopt});
    }
  }
  // @ID: language|corpus|code|age|sex|group|SES|role|education|custom|
  for (const auto& h : headers) {
    if (h.name != "ID") continue;
    const auto fields = split_bars(h.value);
    if (fields.size() < 3) continue;
    for (auto& r : records) {
      if (r.code != fields[2]) continue;
      if (!fields[0].empty()) r.language = fields[0];
      if (!fields[1].empty()) r.corpus = fields[1];
    }
  }
  return records;
}

std::string participants_value(const std::vector<ParticipantRecord>& records) {
  std::string out;
  for (const auto& r : records) {
    if (!out.empty()) out += ", ";
    out += r.code;
    if (!r.name.empty()) out += " " + r.name;
    if (!r.role.empty()) out += " " + r.role;
  }
  return out;
}

std::string id_value(const ParticipantRecord& r) {
  return r.language.value_or("") + "|" + r.corpus.value_or("") + "|" + r.code + "|||||" + r.role + "||";
}

}  // namespace

FromChatResult from_chat(const TranscriptDoc& doc, std::string transcript_id,
                         const std::map<std::string, std::size_t>& picks, Mode mode) {
  if (!is_valid_id(transcript_id)) {
    throw Error(Errc::SchemaViolation, "transcript id '" + transcript_id + "' is not a valid identifier");
  }
  FromChatResult result;
  auto& diags = result.diagnostics;
  if (mode == Mode::strict) {
    const auto problems = validate(doc);
    if (has_errors(problems)) throw Error(Errc::InvalidDoc, format(problems.front()));
  }

  auto& root = result.root;
  root.transcript_id = transcript_id;
  root.participants = participants_from_headers(doc.constant_headers);
  for (const auto& h : doc.constant_headers) root.header_fields.push_back({h.name, h.value, std::nullopt, false});

  auto& groups = result.groups;
  groups.transcript_id = transcript_id;
  groups.scheme = std::string(kChatGroupsScheme);

  std::optional<std::string> previous;
  std::size_t utterance_count = 0;
  for (const auto& item : doc.body) {
    if (const auto* h = std::get_if<Header>(&item)) {
      root.header_fields.push_back({h->name, h->value, previous, false});
      continue;
    }
    const auto& block = std::get<UtteranceBlock>(item);
    RootUtterance u;
    u.id = "u" + std::to_string(++utterance_count);
    u.speaker = block.mainline.speaker.value;
    u.tokens = content_tokens(block.mainline.tokens);
    for (const auto& tier : block.tiers) u.tiers.push_back({tier.code, tier.content, false});

    std::vector<Interpretation> interps;
    try {
      interps = extract_inline_groups(block.mainline);
    } catch (const Error& e) {
      if (mode == Mode::strict) throw;
      diags.push_back({e.code(), 0, "utterance " + u.id + ": " + e.what() + "; groups dropped"});
      interps = {Interpretation{}};
    }
    std::size_t pick = 0;
    const auto chosen = picks.find(u.id);
    if (chosen != picks.end()) {
      pick = chosen->second;
      if (pick >= interps.size()) {
        throw Error(Errc::AmbiguityUnresolved, "utterance " + u.id + " has " + std::to_string(interps.size()) +
                                                   " interpretations; pick " + std::to_string(pick) + " is out of range");
      }
    } else if (interps.size() > 1) {
      if (mode == Mode::strict) {
        throw Error(Errc::AmbiguityUnresolved,
                    "utterance " + u.id + " has " + std::to_string(interps.size()) + " interpretations and no pick");
      }
      diags.push_back({Errc::DefaultInterpretation, 0,
                       "utterance " + u.id + " is ambiguous; using interpretation 0 of " + std::to_string(interps.size()),
                       Severity::warning});
    }
    for (auto range : interps[pick].ranges) {
      range.id = "g" + std::to_string(groups.groups.size() + 1);
      range.utterance_id = u.id;
      groups.groups.push_back(std::move(range));
    }
    previous = u.id;
    root.utterances.push_back(std::move(u));
  }
  return result;
}

namespace {

// Greedy choice of groups to keep: wider groups first, then by start and id;
// a group is dropped if it overlaps or equals one already kept.
std::vector<GroupRange> keep_representable(std::vector<GroupRange> ranges, std::vector<GroupRange>& dropped) {
  std::sort(ranges.begin(), ranges.end(), [](const GroupRange& a, const GroupRange& b) {
    return std::make_tuple(a.start, ~a.end, a.id) < std::make_tuple(b.start, ~b.end, b.id);
  });
  std::vector<GroupRange> kept;
  for (auto& r : ranges) {
    const bool clash = std::any_of(kept.begin(), kept.end(), [&](const GroupRange& k) {
      const auto rel = relate(k, r);
      return rel == GroupRelation::overlapping || rel == GroupRelation::equal;
    });
    (clash ? dropped : kept).push_back(std::move(r));
  }
  return kept;
}

}  // namespace

ToChatResult to_chat(const SlaRoot& root, std::span<const SlaDescriptor> descriptors, Mode mode) {
  ToChatResult result;
  auto& diags = result.diagnostics;
  auto& doc = result.doc;

  auto problem = [&](Errc code, std::string message) {
    if (mode == Mode::strict) throw Error(code, message);
    diags.push_back({code, 0, std::move(message)});
  };

  const SlaDescriptor* chat_groups = nullptr;
  for (const auto& d : descriptors) {
    if (d.scheme == kChatGroupsScheme) chat_groups = &d;
  }

  std::map<std::string, std::vector<GroupRange>> by_utterance;
  if (chat_groups) {
    for (const auto& g : chat_groups->groups) {
      if (g.tombstone) continue;
      const auto* u = root.find_utterance(g.utterance_id);
      if (!u || u->tombstone) {
        problem(Errc::DanglingReference, "group '" + g.id + "' refers to unknown utterance '" + g.utterance_id + "'");
        continue;
      }
      if (g.start >= g.end || g.end > u->tokens.size()) {
        problem(Errc::OutOfBounds, "group '" + g.id + "' exceeds utterance '" + u->id + "'");
        continue;
      }
      by_utterance[g.utterance_id].push_back(g);
    }
  }

  // Constant block.
  const bool has_begin = !root.header_fields.empty() && root.header_fields.front().name == "Begin";
  if (!has_begin) doc.constant_headers.push_back(Header::make("Begin"));
  const bool has_participants =
      std::any_of(root.header_fields.begin(), root.header_fields.end(),
                  [](const HeaderField& h) { return h.name == "Participants" && !h.tombstone; });
  for (const auto& h : root.header_fields) {
    if (h.after || h.tombstone) continue;
    doc.constant_headers.push_back(Header::make(h.name, h.value));
  }
  if (!has_participants && !root.participants.empty()) {
    std::vector<Header> synthesized{Header::make("Participants", participants_value(root.participants))};
    for (const auto& p : root.participants) {
      if (p.language || p.corpus) synthesized.push_back(Header::make("ID", id_value(p)));
    }
    doc.constant_headers.insert(doc.constant_headers.begin() + 1, synthesized.begin(), synthesized.end());
  }

  for (const auto& h : root.header_fields) {
    if (h.after && !root.find_utterance(*h.after)) {
      problem(Errc::DanglingReference, "header @" + h.name + " follows unknown utterance '" + *h.after + "'");
    }
  }

  for (const auto& u : root.utterances) {
    if (!u.tombstone) {
      auto ranges = std::move(by_utterance[u.id]);
      const auto offending = check_inline_representable(ranges);
      if (!offending.empty()) {
        if (mode == Mode::strict) {
          std::string pairs;
          for (const auto& [i, j] : offending) {
            if (!pairs.empty()) pairs += ", ";
            pairs += ranges[i].id + "/" + ranges[j].id + " " + std::string(to_string(relate(ranges[i], ranges[j])));
          }
          throw Error(Errc::NotInlineRepresentable, "utterance " + u.id + ": " + pairs);
        }
        std::vector<GroupRange> dropped;
        ranges = keep_representable(std::move(ranges), dropped);
        for (const auto& d : dropped) {
          diags.push_back({Errc::DroppedGroup, 0,
                           "utterance " + u.id + ": group '" + d.id + "' cannot be bracketed inline",
                           Severity::warning});
          // An explanation on a single token never overlaps; it only needs a
          // token that no kept group already covers exactly.
          for (std::size_t i = d.end; i-- > d.start;) {
            const bool taken = std::any_of(ranges.begin(), ranges.end(), [&](const GroupRange& k) {
              return k.start == i && k.end == i + 1;
            });
            if (taken) continue;
            GroupRange note;
            note.id = d.id;
            note.utterance_id = u.id;
            note.start = i;
            note.end = i + 1;
            note.kind = ScopeMarkerKind::explanation;
            note.payload = "dropped " + std::string(to_string(d.kind)) + " " + d.id + " " +
                           std::to_string(d.start) + "-" + std::to_string(d.end);
            ranges.push_back(std::move(note));
            break;
          }
        }
      }
      UtteranceBlock block;
      block.mainline.speaker = ParticipantCode{u.speaker};
      block.mainline.tokens = embed_groups(u.tokens, ranges);
      block.mainline.raw_text = render_tokens(block.mainline.tokens);
      for (const auto& t : u.tiers) {
        if (!t.tombstone) block.tiers.push_back({t.code, t.content});
      }
      doc.body.emplace_back(std::move(block));
    }
    for (const auto& h : root.header_fields) {
      if (h.after == u.id && !h.tombstone) doc.body.emplace_back(Header::make(h.name, h.value));
    }
  }
  doc.has_end = true;
  return result;
}

}  // namespace sla
