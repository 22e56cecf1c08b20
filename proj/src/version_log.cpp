#include "sla/version_log.hpp"

#include <algorithm>
#include <charconv>
#include <tuple>

namespace sla {

std::string serialize_state(const VersionedState& state) {
  std::string out = serialize_root(state.root);
  for (const auto& [scheme, d] : state.descriptors) out += serialize_descriptor(d);
  return out;
}

std::string_view to_string(ChangeOp op) { return op == ChangeOp::insert ? "insert" : "update"; }

std::string ChangeTarget::str() const { return scheme ? "descriptor:" + *scheme : "root"; }

ChangeTarget ChangeTarget::parse(std::string_view text) {
  if (text == "root") return root();
  if (text.starts_with("descriptor:") && is_valid_id(text.substr(11))) {
    return descriptor(std::string(text.substr(11)));
  }
  throw Error(Errc::SchemaViolation, "bad change target '" + std::string(text) + "'");
}

namespace {

std::optional<std::size_t> to_index(std::string_view s) {
  std::size_t out = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  if (s.empty() || ec != std::errc{} || ptr != s.data() + s.size()) return std::nullopt;
  return out;
}

Error path_error(std::string_view path, std::string_view why) {
  return Error(Errc::PathInvalid, "path '" + std::string(path) + "': " + std::string(why));
}

}  // namespace

ChangePath ChangePath::parse(std::string_view text) {
  ChangePath p;
  if (text.starts_with("header:")) {
    p.kind = Kind::header;
    auto rest = text.substr(7);
    const auto hash = rest.rfind('#');
    if (hash != std::string_view::npos) {
      const auto idx = to_index(rest.substr(hash + 1));
      if (!idx) throw path_error(text, "bad occurrence number");
      p.index = *idx;
      rest = rest.substr(0, hash);
    }
    if (rest.empty() || rest.find_first_of(":/\n") != std::string_view::npos) {
      throw path_error(text, "bad header name");
    }
    p.name = rest;
    return p;
  }
  if (text.starts_with("u:")) {
    auto rest = text.substr(2);
    const auto slash = rest.find('/');
    p.name = rest.substr(0, slash);
    if (!is_valid_id(p.name)) throw path_error(text, "bad utterance id");
    if (slash == std::string_view::npos) {
      p.kind = Kind::utterance;
      return p;
    }
    const auto sub = rest.substr(slash + 1);
    if (sub.starts_with("tier:") && sub.size() > 5 && sub.find('/', 5) == std::string_view::npos) {
      p.kind = Kind::tier;
      p.tier = sub.substr(5);
      return p;
    }
    if (sub.starts_with("t:")) {
      const auto idx = to_index(sub.substr(2));
      if (!idx) throw path_error(text, "bad token index");
      p.kind = Kind::token;
      p.index = *idx;
      return p;
    }
    throw path_error(text, "unknown utterance component");
  }
  if (text.starts_with("group:")) {
    p.kind = Kind::group;
    p.name = text.substr(6);
    if (!is_valid_id(p.name)) throw path_error(text, "bad group id");
    return p;
  }
  if (text.starts_with("code:")) {
    const auto idx = to_index(text.substr(5));
    if (!idx) throw path_error(text, "bad code index");
    p.kind = Kind::code;
    p.index = *idx;
    return p;
  }
  throw path_error(text, "unknown path kind");
}

std::string ChangePath::str() const {
  switch (kind) {
    case Kind::header: return "header:" + name + (index ? "#" + std::to_string(index) : "");
    case Kind::utterance: return "u:" + name;
    case Kind::tier: return "u:" + name + "/tier:" + tier;
    case Kind::token: return "u:" + name + "/t:" + std::to_string(index);
    case Kind::group: return "group:" + name;
    case Kind::code: return "code:" + std::to_string(index);
  }
  return {};
}

// ---------------------------------------------------------------------------
// Timestamps

namespace {

// (date-time part, fraction padded to nine digits)
std::optional<std::pair<std::string, std::string>> split_timestamp(std::string_view ts) {
  if (ts.size() < 20 || ts.back() != 'Z') return std::nullopt;
  const auto base = ts.substr(0, 19);
  static constexpr std::string_view shape = "dddd-dd-ddTdd:dd:dd";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    const bool digit = base[i] >= '0' && base[i] <= '9';
    if (shape[i] == 'd' ? !digit : base[i] != shape[i]) return std::nullopt;
  }
  auto field = [&](std::size_t at) { return (base[at] - '0') * 10 + (base[at + 1] - '0'); };
  const int month = field(5), day = field(8);
  if (month < 1 || month > 12 || day < 1 || day > 31 || field(11) > 23 || field(14) > 59 || field(17) > 60) {
    return std::nullopt;
  }
  auto frac = ts.substr(19, ts.size() - 20);
  std::string padded;
  if (!frac.empty()) {
    if (frac.front() != '.' || frac.size() < 2 || frac.size() > 10) return std::nullopt;
    frac.remove_prefix(1);
    if (!std::all_of(frac.begin(), frac.end(), [](char c) { return c >= '0' && c <= '9'; })) return std::nullopt;
    padded = frac;
  }
  padded.resize(9, '0');
  return std::make_pair(std::string(base), padded);
}

}  // namespace

bool is_valid_timestamp(std::string_view ts) noexcept { return split_timestamp(ts).has_value(); }

ChangeLog::ChangeLog(std::string transcript_id, std::vector<ChangeRecord> records)
    : transcript_id_(std::move(transcript_id)) {
  for (auto& r : records) {
    if (r.seq != records_.size() + 1) {
      throw Error(Errc::SeqGap, "record seq " + std::to_string(r.seq) + " where " +
                                    std::to_string(records_.size() + 1) + " was expected");
    }
    const auto ts = split_timestamp(r.timestamp);
    if (!ts) throw Error(Errc::SchemaViolation, "bad timestamp '" + r.timestamp + "'");
    if (!records_.empty() && *ts < *split_timestamp(records_.back().timestamp)) {
      throw Error(Errc::TimeRegression, "record " + std::to_string(r.seq) + " is older than its predecessor");
    }
    records_.push_back(std::move(r));
  }
}

// ---------------------------------------------------------------------------
// Apply / revert

namespace {

template <class T>
const T& payload_as(const Payload& p, std::string_view path) {
  if (const auto* v = std::get_if<T>(&p)) return *v;
  throw path_error(path, "payload does not match the path kind");
}

bool target_fits(const ChangeRecord& c, const ChangePath& p) {
  const bool descriptor_path = p.kind == ChangePath::Kind::group || p.kind == ChangePath::Kind::code;
  return descriptor_path == c.target.scheme.has_value();
}

void check_shape(const ChangeRecord& c, const ChangePath& p) {
  if (!target_fits(c, p)) throw path_error(c.path, "path does not belong to target " + c.target.str());
  if (c.op == ChangeOp::update && !c.before) throw path_error(c.path, "update without a before snapshot");
  if (c.op == ChangeOp::insert && c.before) throw path_error(c.path, "insert with a before snapshot");
  if (c.position && !(c.op == ChangeOp::insert && p.kind == ChangePath::Kind::utterance)) {
    throw path_error(c.path, "position is only meaningful for utterance inserts");
  }
}

// Locates the node a path addresses inside a mutable state.
class Cursor {
 public:
  Cursor(VersionedState& state, const ChangeRecord& c, const ChangePath& p) : state_(state), c_(c), p_(p) {}

  std::vector<HeaderField>& headers() { return state_.root.header_fields; }

  std::vector<std::size_t> header_occurrences() {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < headers().size(); ++i) {
      if (headers()[i].name == p_.name) out.push_back(i);
    }
    return out;
  }

  HeaderField& header() {
    const auto occ = header_occurrences();
    if (p_.index >= occ.size()) throw path_error(c_.path, "no such header occurrence");
    return headers()[occ[p_.index]];
  }

  std::vector<RootUtterance>::iterator find_utterance() {
    auto& us = state_.root.utterances;
    return std::find_if(us.begin(), us.end(), [&](const RootUtterance& u) { return u.id == p_.name; });
  }

  RootUtterance& utterance() {
    const auto it = find_utterance();
    if (it == state_.root.utterances.end()) throw path_error(c_.path, "no such utterance");
    return *it;
  }

  std::vector<Tier>::iterator find_tier() {
    auto& tiers = utterance().tiers;
    return std::find_if(tiers.begin(), tiers.end(), [&](const Tier& t) { return t.code == p_.tier; });
  }

  Tier& tier() {
    const auto it = find_tier();
    if (it == utterance().tiers.end()) throw path_error(c_.path, "no such tier");
    return *it;
  }

  Token& token() {
    auto& tokens = utterance().tokens;
    if (p_.index >= tokens.size()) throw path_error(c_.path, "token index out of range");
    return tokens[p_.index];
  }

  SlaDescriptor& descriptor() {
    const auto it = state_.descriptors.find(*c_.target.scheme);
    if (it == state_.descriptors.end()) throw path_error(c_.path, "no descriptor for scheme " + *c_.target.scheme);
    return it->second;
  }

  std::vector<GroupRange>::iterator find_group() {
    auto& gs = descriptor().groups;
    return std::find_if(gs.begin(), gs.end(), [&](const GroupRange& g) { return g.id == p_.name; });
  }

  GroupRange& group() {
    const auto it = find_group();
    if (it == descriptor().groups.end()) throw path_error(c_.path, "no such group");
    return *it;
  }

  CodeEntry& code() {
    auto& codes = descriptor().codes;
    if (p_.index >= codes.size()) throw path_error(c_.path, "code index out of range");
    return codes[p_.index];
  }

  bool is_participant(const std::string& code) const {
    const auto& ps = state_.root.participants;
    return std::any_of(ps.begin(), ps.end(), [&](const ParticipantRecord& r) { return r.code == code; });
  }

 private:
  VersionedState& state_;
  const ChangeRecord& c_;
  const ChangePath& p_;
};

void check_content_token(const Token& t, std::string_view path) {
  if (!t.is_content() || t.text.empty()) throw path_error(path, "only word, pause and terminator tokens live in a Root");
}

void check_utterance_payload(Cursor& cur, const RootUtterance& u, const ChangePath& p, std::string_view path) {
  if (u.id != p.name) throw path_error(path, "payload utterance id differs from the path");
  if (!cur.is_participant(u.speaker)) throw path_error(path, "speaker '" + u.speaker + "' is not a participant");
  for (const auto& t : u.tokens) check_content_token(t, path);
}

// Where a header with this anchor is inserted: after the last field sharing
// the anchor, or after the constant block / at the end when none does.
std::size_t header_insertion_point(const std::vector<HeaderField>& fields, const std::optional<std::string>& after) {
  std::optional<std::size_t> last;
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (fields[i].after == after) last = i;
  }
  if (last) return *last + 1;
  return after ? fields.size() : 0;
}

template <class T>
void replace_checked(T& node, const ChangeRecord& c) {
  const auto& before = payload_as<T>(*c.before, c.path);
  if (!(node == before)) {
    throw Error(Errc::StaleBefore, "path '" + c.path + "': before snapshot does not match the current value");
  }
  node = payload_as<T>(c.after, c.path);
}

template <class T>
void expect_after(const T& node, const ChangeRecord& c) {
  if (!(node == payload_as<T>(c.after, c.path))) {
    throw path_error(c.path, "state does not hold this change's result; it was not the last change applied");
  }
}

}  // namespace

VersionedState apply_change(const VersionedState& state, const ChangeRecord& c) {
  const auto p = ChangePath::parse(c.path);
  check_shape(c, p);
  VersionedState next = state;
  Cursor cur(next, c, p);
  const bool insert = c.op == ChangeOp::insert;

  switch (p.kind) {
    case ChangePath::Kind::header: {
      const auto& h = payload_as<HeaderField>(c.after, c.path);
      if (h.name != p.name) throw path_error(c.path, "payload header name differs from the path");
      if (insert) {
        if (h.after && !next.root.find_utterance(*h.after)) throw path_error(c.path, "header anchor does not exist");
        auto& fields = cur.headers();
        const auto pos = header_insertion_point(fields, h.after);
        const auto earlier = std::count_if(fields.begin(), fields.begin() + static_cast<std::ptrdiff_t>(pos),
                                           [&](const HeaderField& f) { return f.name == p.name; });
        if (static_cast<std::size_t>(earlier) != p.index) {
          throw path_error(c.path, "insert would become occurrence " + std::to_string(earlier));
        }
        fields.insert(fields.begin() + static_cast<std::ptrdiff_t>(pos), h);
      } else {
        auto& node = cur.header();
        if (h.after != node.after) throw path_error(c.path, "an update cannot move a header");
        replace_checked(node, c);
      }
      break;
    }
    case ChangePath::Kind::utterance: {
      const auto& u = payload_as<RootUtterance>(c.after, c.path);
      check_utterance_payload(cur, u, p, c.path);
      if (insert) {
        if (cur.find_utterance() != next.root.utterances.end()) throw path_error(c.path, "utterance already exists");
        auto& us = next.root.utterances;
        const auto pos = c.position.value_or(us.size());
        if (pos > us.size()) throw path_error(c.path, "insert position past the end");
        us.insert(us.begin() + static_cast<std::ptrdiff_t>(pos), u);
      } else {
        replace_checked(cur.utterance(), c);
      }
      break;
    }
    case ChangePath::Kind::tier: {
      const auto& t = payload_as<Tier>(c.after, c.path);
      if (t.code != p.tier) throw path_error(c.path, "payload tier code differs from the path");
      if (insert) {
        auto& u = cur.utterance();
        if (cur.find_tier() != u.tiers.end()) throw path_error(c.path, "tier already exists");
        u.tiers.push_back(t);
      } else {
        replace_checked(cur.tier(), c);
      }
      break;
    }
    case ChangePath::Kind::token: {
      check_content_token(payload_as<Token>(c.after, c.path), c.path);
      if (insert) {
        auto& tokens = cur.utterance().tokens;
        if (p.index > tokens.size()) throw path_error(c.path, "token index out of range");
        tokens.insert(tokens.begin() + static_cast<std::ptrdiff_t>(p.index), payload_as<Token>(c.after, c.path));
      } else {
        replace_checked(cur.token(), c);
      }
      break;
    }
    case ChangePath::Kind::group: {
      const auto& g = payload_as<GroupRange>(c.after, c.path);
      if (g.id != p.name) throw path_error(c.path, "payload group id differs from the path");
      if (insert) {
        if (cur.find_group() != cur.descriptor().groups.end()) throw path_error(c.path, "group already exists");
        cur.descriptor().groups.push_back(g);
      } else {
        replace_checked(cur.group(), c);
      }
      break;
    }
    case ChangePath::Kind::code: {
      (void)payload_as<CodeEntry>(c.after, c.path);
      if (insert) {
        auto& codes = cur.descriptor().codes;
        if (p.index != codes.size()) throw path_error(c.path, "code inserts append at index " + std::to_string(codes.size()));
        codes.push_back(payload_as<CodeEntry>(c.after, c.path));
      } else {
        replace_checked(cur.code(), c);
      }
      break;
    }
  }
  return next;
}

VersionedState revert_change(const VersionedState& state, const ChangeRecord& c) {
  const auto p = ChangePath::parse(c.path);
  check_shape(c, p);
  VersionedState prev = state;
  Cursor cur(prev, c, p);
  const bool insert = c.op == ChangeOp::insert;

  auto restore = [&](auto& node) {
    expect_after(node, c);
    node = payload_as<std::decay_t<decltype(node)>>(*c.before, c.path);
  };

  switch (p.kind) {
    case ChangePath::Kind::header: {
      auto& node = cur.header();
      if (!insert) {
        restore(node);
        break;
      }
      expect_after(node, c);
      auto& fields = cur.headers();
      fields.erase(fields.begin() + (&node - fields.data()));
      break;
    }
    case ChangePath::Kind::utterance: {
      auto& node = cur.utterance();
      if (!insert) {
        restore(node);
        break;
      }
      expect_after(node, c);
      prev.root.utterances.erase(cur.find_utterance());
      break;
    }
    case ChangePath::Kind::tier: {
      auto& node = cur.tier();
      if (!insert) {
        restore(node);
        break;
      }
      expect_after(node, c);
      cur.utterance().tiers.erase(cur.find_tier());
      break;
    }
    case ChangePath::Kind::token: {
      auto& node = cur.token();
      if (!insert) {
        restore(node);
        break;
      }
      expect_after(node, c);
      auto& tokens = cur.utterance().tokens;
      tokens.erase(tokens.begin() + static_cast<std::ptrdiff_t>(p.index));
      break;
    }
    case ChangePath::Kind::group: {
      auto& node = cur.group();
      if (!insert) {
        restore(node);
        break;
      }
      expect_after(node, c);
      cur.descriptor().groups.erase(cur.find_group());
      break;
    }
    case ChangePath::Kind::code: {
      auto& node = cur.code();
      if (!insert) {
        restore(node);
        break;
      }
      expect_after(node, c);
      auto& codes = cur.descriptor().codes;
      if (p.index + 1 != codes.size()) throw path_error(c.path, "only the last code entry can be un-inserted");
      codes.pop_back();
      break;
    }
  }
  return prev;
}

ChangeLog append_change(const ChangeLog& log, const VersionedState& state, ChangeRecord change) {
  if (change.seq != log.next_seq()) {
    throw Error(Errc::SeqGap, "change seq " + std::to_string(change.seq) + " where " +
                                  std::to_string(log.next_seq()) + " was expected");
  }
  const auto ts = split_timestamp(change.timestamp);
  if (!ts) throw Error(Errc::SchemaViolation, "bad timestamp '" + change.timestamp + "'");
  if (!log.empty() && *ts < *split_timestamp(log.records().back().timestamp)) {
    throw Error(Errc::TimeRegression, "change is older than the last record");
  }
  (void)apply_change(state, change);
  ChangeLog next = log;
  next.records_.push_back(std::move(change));
  return next;
}

VersionedState materialize(const VersionedState& base, const ChangeLog& log, VersionId v) {
  if (v.n > log.size()) {
    throw Error(Errc::VersionOutOfRange,
                "version " + std::to_string(v.n) + " requested; log has " + std::to_string(log.size()) + " records");
  }
  VersionedState state = base;
  for (std::size_t i = 0; i < v.n; ++i) state = apply_change(state, log.records()[i]);
  return state;
}

VersionedState base_state(const VersionedState& current, const ChangeLog& log) {
  VersionedState state = current;
  for (std::size_t i = log.size(); i-- > 0;) state = revert_change(state, log.records()[i]);
  return state;
}

std::vector<ChangeRecord> history(const ChangeLog& log, std::string_view path) {
  auto canonical = [](std::string_view s) -> std::string {
    try {
      return ChangePath::parse(s).str();
    } catch (const Error&) {
      return std::string(s);
    }
  };
  const auto query = canonical(path);
  std::vector<ChangeRecord> out;
  for (const auto& r : log.records()) {
    const auto rp = canonical(r.path);
    if (rp == query || (rp.size() > query.size() && rp.starts_with(query) && rp[query.size()] == '/')) {
      out.push_back(r);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Changes file

namespace {

xml::Element encode_payload(const Payload& p, const std::string& path) {
  return std::visit(
      [&](const auto& node) -> xml::Element {
        using T = std::decay_t<decltype(node)>;
        if constexpr (std::is_same_v<T, Token>) {
          std::size_t index = 0;
          try {
            index = ChangePath::parse(path).index;
          } catch (const Error&) {
          }
          return codec::encode(node, index);
        } else {
          return codec::encode(node);
        }
      },
      p);
}

Payload decode_payload(const xml::Element& holder) {
  if (holder.children.size() != 1 || !holder.text.empty()) {
    throw Error(Errc::SchemaViolation, "<" + holder.name + "> must hold exactly one element", holder.line);
  }
  const auto& e = holder.children.front();
  if (e.name == "headerField") return codec::decode_header_field(e);
  if (e.name == "u") return codec::decode_utterance(e);
  if (e.name == "tier") return codec::decode_tier(e);
  if (codec::is_token_element(e)) return codec::decode_token(e, std::nullopt);
  if (e.name == "group") return codec::decode_group(e);
  if (e.name == "code") return codec::decode_code(e);
  throw Error(Errc::SchemaViolation, "unknown payload <" + e.name + ">", e.line);
}

}  // namespace

std::string serialize_changes(const ChangeLog& log) {
  xml::Element doc("slaChanges");
  doc.attr("transcriptId", log.transcript_id()).attr("schemaVersion", log.schema_version());
  for (const auto& r : log.records()) {
    auto& e = doc.add(xml::Element("change"));
    e.attr("seq", std::to_string(r.seq))
        .attr("target", r.target.str())
        .attr("op", std::string(to_string(r.op)))
        .attr("path", r.path)
        .attr("timestamp", r.timestamp)
        .attr("author", r.author);
    if (r.before) e.add(xml::Element("before")).add(encode_payload(*r.before, r.path));
    auto& after = e.add(xml::Element("after"));
    if (r.position) after.attr("index", std::to_string(*r.position));
    after.add(encode_payload(r.after, r.path));
  }
  return xml::write(doc);
}

ChangeLog parse_changes(std::string_view bytes) {
  const auto doc = xml::parse(bytes);
  xml::expect_name(doc, "slaChanges");
  xml::allow_attrs(doc, {"transcriptId", "schemaVersion"});
  if (!doc.text.empty()) throw Error(Errc::SchemaViolation, "unexpected text inside <slaChanges>", doc.line);
  const auto& id = xml::required_attr(doc, "transcriptId");
  const auto& version = xml::required_attr(doc, "schemaVersion");
  if (!is_valid_id(id)) throw Error(Errc::SchemaViolation, "transcriptId '" + id + "' is not a valid identifier", doc.line);
  check_schema_version(version, doc.line);

  std::vector<ChangeRecord> records;
  for (const auto& e : doc.children) {
    xml::expect_name(e, "change");
    xml::allow_attrs(e, {"seq", "target", "op", "path", "timestamp", "author"});
    if (!e.text.empty()) throw Error(Errc::SchemaViolation, "unexpected text inside <change>", e.line);
    ChangeRecord r;
    r.seq = xml::index_attr(e, "seq");
    r.target = ChangeTarget::parse(xml::required_attr(e, "target"));
    const auto& op = xml::required_attr(e, "op");
    if (op == "insert") r.op = ChangeOp::insert;
    else if (op == "update") r.op = ChangeOp::update;
    else throw Error(Errc::SchemaViolation, "unknown op '" + op + "'", e.line);
    r.path = xml::required_attr(e, "path");
    r.timestamp = xml::required_attr(e, "timestamp");
    r.author = xml::required_attr(e, "author");

    const xml::Element* before = nullptr;
    const xml::Element* after = nullptr;
    for (const auto& child : e.children) {
      if (child.name == "before" && !before && !after) before = &child;
      else if (child.name == "after" && !after) after = &child;
      else throw Error(Errc::SchemaViolation, "unexpected <" + child.name + "> in <change>", child.line);
    }
    if (!after) throw Error(Errc::SchemaViolation, "change without an <after> payload", e.line);
    if (before) {
      xml::allow_attrs(*before, {});
      r.before = decode_payload(*before);
    }
    xml::allow_attrs(*after, {"index"});
    if (after->find_attr("index")) r.position = xml::index_attr(*after, "index");
    r.after = decode_payload(*after);
    if ((r.op == ChangeOp::update) != r.before.has_value()) {
      throw Error(Errc::SchemaViolation, "update needs a before snapshot and insert must not have one", e.line);
    }
    if (std::holds_alternative<Token>(r.after)) {
      // The token element's index must agree with the path.
      const auto expected = ChangePath::parse(r.path).index;
      (void)codec::decode_token(after->children.front(), expected);
      if (before) (void)codec::decode_token(before->children.front(), expected);
    }
    records.push_back(std::move(r));
  }
  ChangeLog log(id, std::move(records));
  log.set_schema_version(version);
  return log;
}

}  // namespace sla
