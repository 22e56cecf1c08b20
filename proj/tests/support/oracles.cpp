#include "oracles.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

#include "sla/store.hpp"

namespace sla::oracle {

namespace {

std::set<std::size_t> cover(const GroupRange& r) {
  std::set<std::size_t> s;
  for (std::size_t i = r.start; i < r.end; ++i) s.insert(i);
  return s;
}

bool subset(const std::set<std::size_t>& a, const std::set<std::size_t>& b) {
  return std::includes(b.begin(), b.end(), a.begin(), a.end());
}

}  // namespace

GroupRelation relate(const GroupRange& a, const GroupRange& b) {
  const auto sa = cover(a), sb = cover(b);
  if (sa == sb) return GroupRelation::equal;
  std::vector<std::size_t> common;
  std::set_intersection(sa.begin(), sa.end(), sb.begin(), sb.end(), std::back_inserter(common));
  if (common.empty()) return GroupRelation::isolated;
  if (subset(sa, sb) || subset(sb, sa)) return GroupRelation::embedded;
  return GroupRelation::overlapping;
}

Forest forest(std::span<const GroupRange> ranges) {
  Forest f;
  const auto n = ranges.size();
  f.parent.assign(n, std::nullopt);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j || ranges[i].utterance_id != ranges[j].utterance_id) continue;
      if (oracle::relate(ranges[i], ranges[j]) != GroupRelation::embedded) continue;
      if (!subset(cover(ranges[i]), cover(ranges[j]))) continue;  // j must be the container
      if (!f.parent[i]) {
        f.parent[i] = j;
        continue;
      }
      const auto& best = ranges[*f.parent[i]];
      const auto& cand = ranges[j];
      const bool better = cand.length() < best.length() ||
                          (cand.length() == best.length() &&
                           (cand.start > best.start || (cand.start == best.start && j < *f.parent[i])));
      if (better) f.parent[i] = j;
    }
    if (f.parent[i]) f.containment.insert({*f.parent[i], i});
    else f.roots.insert(i);
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      if (ranges[i].utterance_id != ranges[j].utterance_id) continue;
      const auto rel = oracle::relate(ranges[i], ranges[j]);
      if (rel == GroupRelation::overlapping) f.overlaps.insert({i, j});
      if (rel == GroupRelation::equal) f.equals.insert({i, j});
    }
  }
  return f;
}

std::vector<std::pair<std::size_t, std::size_t>> offending_pairs(std::span<const GroupRange> ranges) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (std::size_t i = 0; i < ranges.size(); ++i) {
    for (std::size_t j = i + 1; j < ranges.size(); ++j) {
      if (ranges[i].utterance_id != ranges[j].utterance_id) continue;
      const auto rel = oracle::relate(ranges[i], ranges[j]);
      if (rel == GroupRelation::overlapping || rel == GroupRelation::equal) out.push_back({i, j});
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

std::set<std::vector<std::tuple<std::size_t, std::size_t, ScopeMarkerKind, std::optional<std::string>>>>
interpretations(std::span<const Token> tokens) {
  using Range = std::tuple<std::size_t, std::size_t, ScopeMarkerKind, std::optional<std::string>>;
  std::set<std::vector<Range>> found;

  std::vector<std::size_t> opens, closes, markers;
  for (std::size_t p = 0; p < tokens.size(); ++p) {
    if (tokens[p].kind == TokenKind::scope_open) opens.push_back(p);
    if (tokens[p].kind == TokenKind::scope_close) closes.push_back(p);
    if (tokens[p].kind == TokenKind::scope_marker) markers.push_back(p);
  }
  if (opens.size() != closes.size()) return found;
  auto content_before = [&](std::size_t p) {
    std::size_t n = 0;
    for (std::size_t q = 0; q < p; ++q) n += tokens[q].is_content() ? 1 : 0;
    return n;
  };

  std::vector<std::size_t> perm(closes.size());
  std::iota(perm.begin(), perm.end(), 0);
  do {
    // Scope k pairs opens[k] with closes[perm[k]].
    bool ok = true;
    for (std::size_t a = 0; a < opens.size() && ok; ++a) {
      const auto o1 = opens[a], c1 = closes[perm[a]];
      if (o1 > c1 || content_before(o1) == content_before(c1)) ok = false;
      for (std::size_t b = 0; b < opens.size() && ok; ++b) {
        const auto o2 = opens[b], c2 = closes[perm[b]];
        if (o1 < o2 && o2 < c1 && c1 < c2) ok = false;
      }
    }
    if (!ok) continue;

    // Every marker takes one target: a scope index or the word (-1).
    std::vector<std::vector<long>> options(markers.size());
    for (std::size_t m = 0; m < markers.size(); ++m) {
      const auto p = markers[m];
      for (std::size_t k = 0; k < opens.size(); ++k) {
        const auto c = closes[perm[k]];
        if (c >= p) continue;
        bool adjacent = true;
        for (auto q = c + 1; q < p; ++q) {
          if (tokens[q].kind != TokenKind::scope_close && tokens[q].kind != TokenKind::scope_marker) adjacent = false;
        }
        if (adjacent) options[m].push_back(static_cast<long>(k));
      }
      if (p > 0 && tokens[p - 1].kind == TokenKind::word) options[m].push_back(-1);
    }
    std::vector<std::size_t> choice(markers.size(), 0);
    const bool any = std::all_of(options.begin(), options.end(), [](const auto& o) { return !o.empty(); });
    if (!any) continue;
    while (true) {
      std::vector<int> used(opens.size(), 0);
      std::vector<Range> ranges;
      for (std::size_t m = 0; m < markers.size(); ++m) {
        const auto target = options[m][choice[m]];
        const auto& tok = tokens[markers[m]];
        if (target < 0) {
          const auto w = content_before(markers[m] - 1);
          ranges.emplace_back(w, w + 1, *tok.marker, tok.payload);
        } else {
          ++used[static_cast<std::size_t>(target)];
          ranges.emplace_back(content_before(opens[static_cast<std::size_t>(target)]),
                              content_before(closes[perm[static_cast<std::size_t>(target)]]), *tok.marker, tok.payload);
        }
      }
      if (std::all_of(used.begin(), used.end(), [](int u) { return u == 1; })) {
        std::sort(ranges.begin(), ranges.end());
        found.insert(ranges);
      }
      std::size_t m = 0;
      while (m < markers.size() && ++choice[m] == options[m].size()) choice[m++] = 0;
      if (m == markers.size()) break;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  return found;
}

// ---------------------------------------------------------------------------
// Version log replay over XML trees

namespace {

[[noreturn]] void fail(const std::string& why) { throw std::runtime_error(why); }

std::vector<std::size_t> children_named(const xml::Element& e, std::initializer_list<std::string_view> names) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < e.children.size(); ++i) {
    for (auto n : names) {
      if (e.children[i].name == n) out.push_back(i);
    }
  }
  return out;
}

std::string attr_or(const xml::Element& e, std::string_view key, std::string fallback = {}) {
  const auto* v = e.find_attr(key);
  return v ? *v : fallback;
}

bool has_attr(const xml::Element& e, std::string_view key) { return e.find_attr(key) != nullptr; }

std::size_t number(std::string_view s) {
  if (s.empty() || !std::all_of(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; })) fail("bad number");
  return std::stoul(std::string(s));
}

xml::Element payload_element(const Payload& p, std::size_t token_index) {
  return std::visit(
      [&](const auto& v) -> xml::Element {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, Token>) return codec::encode(v, token_index);
        else return codec::encode(v);
      },
      p);
}

void replace_checked(xml::Element& node, const ChangeRecord& c, std::size_t token_index) {
  if (!c.before) fail("update without before");
  if (xml::write(node) != xml::write(payload_element(*c.before, token_index))) fail("stale before");
  auto after = payload_element(c.after, token_index);
  if (after.name != node.name && !(codec::is_token_element(after) && codec::is_token_element(node))) {
    fail("payload kind changed");
  }
  node = std::move(after);
}

void insert_at(xml::Element& parent, std::size_t pos, xml::Element child) {
  parent.children.insert(parent.children.begin() + static_cast<std::ptrdiff_t>(pos), std::move(child));
}

}  // namespace

Dom dom_of(const VersionedState& state) {
  Dom d{xml::parse(serialize_root(state.root)), {}};
  for (const auto& [scheme, desc] : state.descriptors) d.descriptors.emplace(scheme, xml::parse(serialize_descriptor(desc)));
  return d;
}

std::string dom_bytes(const Dom& dom) {
  auto out = xml::write(dom.root);
  for (const auto& [scheme, e] : dom.descriptors) out += xml::write(e);
  return out;
}

void dom_apply(Dom& dom, const ChangeRecord& c) {
  const std::string& path = c.path;
  const bool insert = c.op == ChangeOp::insert;
  if (insert == c.before.has_value()) fail("before presence does not match op");

  if (path.rfind("group:", 0) == 0 || path.rfind("code:", 0) == 0) {
    if (!c.target.scheme) fail("descriptor path on root");
    auto it = dom.descriptors.find(*c.target.scheme);
    if (it == dom.descriptors.end()) fail("no descriptor");
    auto& d = it->second;
    const auto groups = children_named(d, {"group"});
    const auto codes = children_named(d, {"code"});
    if (path.rfind("group:", 0) == 0) {
      const auto id = path.substr(6);
      if (!std::holds_alternative<GroupRange>(c.after) || std::get<GroupRange>(c.after).id != id) fail("group payload");
      std::optional<std::size_t> at;
      for (auto g : groups) {
        if (attr_or(d.children[g], "id") == id) at = g;
      }
      if (insert) {
        if (at) fail("group exists");
        insert_at(d, groups.size(), payload_element(c.after, 0));
      } else {
        if (!at) fail("no group");
        replace_checked(d.children[*at], c, 0);
      }
    } else {
      const auto k = number(path.substr(5));
      if (!std::holds_alternative<CodeEntry>(c.after)) fail("code payload");
      if (insert) {
        if (k != codes.size()) fail("code insert not at end");
        d.children.push_back(payload_element(c.after, 0));
      } else {
        if (k >= codes.size()) fail("no code");
        replace_checked(d.children[codes[k]], c, 0);
      }
    }
    return;
  }

  if (c.target.scheme) fail("root path on descriptor");
  auto& root = dom.root;
  const auto participants = children_named(root, {"participant"});
  const auto headers = children_named(root, {"headerField"});
  const auto utts = children_named(root, {"u"});
  auto find_u = [&](const std::string& id) -> std::optional<std::size_t> {
    for (auto u : utts) {
      if (attr_or(root.children[u], "id") == id) return u;
    }
    return std::nullopt;
  };
  auto speaker_ok = [&](const xml::Element& u) {
    const auto who = attr_or(u, "who");
    return std::any_of(participants.begin(), participants.end(),
                       [&](std::size_t p) { return attr_or(root.children[p], "code") == who; });
  };

  if (path.rfind("header:", 0) == 0) {
    auto rest = path.substr(7);
    std::size_t k = 0;
    const auto hash = rest.rfind('#');
    if (hash != std::string::npos) {
      k = number(rest.substr(hash + 1));
      rest = rest.substr(0, hash);
    }
    if (!std::holds_alternative<HeaderField>(c.after)) fail("header payload");
    auto after = payload_element(c.after, 0);
    if (attr_or(after, "name") != rest) fail("header name");
    std::vector<std::size_t> same;
    for (auto h : headers) {
      if (attr_or(root.children[h], "name") == rest) same.push_back(h);
    }
    if (!insert) {
      if (k >= same.size()) fail("no header occurrence");
      auto& node = root.children[same[k]];
      if (has_attr(node, "after") != has_attr(after, "after") || attr_or(node, "after") != attr_or(after, "after")) {
        fail("header moved");
      }
      replace_checked(node, c, 0);
      return;
    }
    const bool anchored = has_attr(after, "after");
    const auto anchor = attr_or(after, "after");
    if (anchored && !find_u(anchor)) fail("anchor missing");
    std::optional<std::size_t> last_same_anchor;
    for (auto h : headers) {
      const auto& e = root.children[h];
      if (has_attr(e, "after") == anchored && attr_or(e, "after") == anchor) last_same_anchor = h;
    }
    const std::size_t block_start = headers.empty() ? participants.size() : headers.front();
    const std::size_t block_end = headers.empty() ? participants.size() : headers.back() + 1;
    const std::size_t pos = last_same_anchor ? *last_same_anchor + 1 : (anchored ? block_end : block_start);
    const auto earlier = std::count_if(same.begin(), same.end(), [&](std::size_t h) { return h < pos; });
    if (static_cast<std::size_t>(earlier) != k) fail("occurrence mismatch");
    insert_at(root, pos, std::move(after));
    return;
  }

  if (path.rfind("u:", 0) != 0) fail("unknown path");
  const auto slash = path.find('/');
  const auto uid = path.substr(2, slash == std::string::npos ? std::string::npos : slash - 2);
  if (slash == std::string::npos) {
    if (!std::holds_alternative<RootUtterance>(c.after)) fail("utterance payload");
    auto after = payload_element(c.after, 0);
    if (attr_or(after, "id") != uid) fail("utterance id");
    if (!speaker_ok(after)) fail("unknown speaker");
    const auto at = find_u(uid);
    if (insert) {
      if (at) fail("utterance exists");
      const auto p = c.position.value_or(utts.size());
      if (p > utts.size()) fail("position past end");
      insert_at(root, p == utts.size() ? root.children.size() : utts[p], std::move(after));
    } else {
      if (!at) fail("no utterance");
      replace_checked(root.children[*at], c, 0);
    }
    return;
  }
  const auto at = find_u(uid);
  if (!at) fail("no utterance");
  auto& u = root.children[*at];
  const auto sub = path.substr(slash + 1);
  if (sub.rfind("tier:", 0) == 0) {
    const auto code = sub.substr(5);
    if (!std::holds_alternative<Tier>(c.after) || std::get<Tier>(c.after).code != code) fail("tier payload");
    std::optional<std::size_t> t;
    for (auto i : children_named(u, {"tier"})) {
      if (attr_or(u.children[i], "code") == code) t = i;
    }
    if (insert) {
      if (t) fail("tier exists");
      u.children.push_back(payload_element(c.after, 0));
    } else {
      if (!t) fail("no tier");
      replace_checked(u.children[*t], c, 0);
    }
    return;
  }
  if (sub.rfind("t:", 0) != 0) fail("unknown utterance path");
  const auto i = number(sub.substr(2));
  if (!std::holds_alternative<Token>(c.after)) fail("token payload");
  const auto toks = children_named(u, {"w", "p", "t"});
  if (insert) {
    if (i > toks.size()) fail("token index");
    insert_at(u, i, payload_element(c.after, i));
    std::size_t n = 0;
    for (auto& child : u.children) {
      if (!codec::is_token_element(child)) continue;
      for (auto& [k, v] : child.attrs) {
        if (k == "i") v = std::to_string(n);
      }
      ++n;
    }
  } else {
    if (i >= toks.size()) fail("token index");
    replace_checked(u.children[toks[i]], c, i);
  }
}

// ---------------------------------------------------------------------------
// Timeline oracles

namespace {

struct Timeline {
  std::int64_t first = 0;  // in units
  std::vector<char> state;  // 'T', 'I', 'E' or 'U' per unit
  std::vector<int> owner;   // segment index per unit, -1 if unindexed
};

Timeline timeline(const SegmentIndex& index, std::int64_t unit) {
  Timeline t;
  if (index.segments.empty()) return t;
  for (const auto& s : index.segments) {
    if (s.start.ms % unit || s.end.ms % unit) fail("segment boundary off the unit grid");
  }
  t.first = index.segments.front().start.ms / unit;
  const auto last = index.segments.back().end.ms / unit;
  t.state.assign(static_cast<std::size_t>(last - t.first), 'U');
  t.owner.assign(t.state.size(), -1);
  for (std::size_t k = 0; k < index.segments.size(); ++k) {
    const auto& s = index.segments[k];
    const char mark = s.status == SegmentStatus::transcribed ? 'T' : s.status == SegmentStatus::indexed ? 'I' : 'E';
    for (auto u = s.start.ms / unit; u < s.end.ms / unit; ++u) {
      t.state[static_cast<std::size_t>(u - t.first)] = mark;
      t.owner[static_cast<std::size_t>(u - t.first)] = static_cast<int>(k);
    }
  }
  return t;
}

std::optional<std::size_t> segment_pos(const SegmentIndex& index, const std::string& uid) {
  const auto dot = uid.find('.');
  if (dot == std::string::npos) return std::nullopt;
  for (std::size_t k = 0; k < index.segments.size(); ++k) {
    if (index.segments[k].id == uid.substr(0, dot)) return k;
  }
  return std::nullopt;
}

}  // namespace

std::vector<Gap> gaps(const SlaRoot& root, const SegmentIndex& index, std::int64_t unit) {
  const auto t = timeline(index, unit);
  std::vector<Gap> out;
  const auto n = t.state.size();
  std::size_t i = 0;
  while (i < n) {
    if (t.state[i] == 'T') {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < n && t.state[j] != 'T') ++j;
    Gap g;
    g.ordinal = out.size() + 1;
    g.start.ms = (t.first + static_cast<std::int64_t>(i)) * unit;
    g.end.ms = (t.first + static_cast<std::int64_t>(j)) * unit;
    if (i > 0) g.prev_segment = index.segments[static_cast<std::size_t>(t.owner[i - 1])].id;
    if (j < n) g.next_segment = index.segments[static_cast<std::size_t>(t.owner[j])].id;
    for (const auto& s : index.segments) {
      if (s.status != SegmentStatus::transcribed && s.start >= g.start && s.end <= g.end) g.skipped.push_back(s.id);
    }
    g.position = root.utterances.size();
    for (std::size_t k = 0; k < root.utterances.size(); ++k) {
      const auto seg = segment_pos(index, root.utterances[k].id);
      if (seg && index.segments[*seg].start >= g.end) {
        g.position = k;
        break;
      }
    }
    out.push_back(std::move(g));
    i = j;
  }
  return out;
}

CoverageStats coverage(const SegmentIndex& index, std::int64_t unit) {
  CoverageStats c;
  const auto t = timeline(index, unit);
  if (t.state.empty()) return c;
  c.span_ms = static_cast<std::int64_t>(t.state.size()) * unit;
  const auto total = static_cast<double>(t.state.size());
  auto frac = [&](char mark) { return static_cast<double>(std::count(t.state.begin(), t.state.end(), mark)) / total; };
  c.transcribed = frac('T');
  c.indexed = frac('I');
  c.excluded = frac('E');
  c.unindexed = frac('U');
  return c;
}

std::set<std::string> broken_chains(const SlaRoot& root, const SlaDescriptor& d, const SegmentIndex& index,
                                    std::int64_t unit) {
  const auto t = timeline(index, unit);
  struct Member {
    std::size_t u, token, code, seg;
  };
  std::map<std::string, std::vector<Member>> chains;
  for (std::size_t k = 0; k < d.codes.size(); ++k) {
    const auto& c = d.codes[k];
    if (c.tombstone || c.key != "chain") continue;
    auto& members = chains[c.value];
    std::string uid = c.target.id;
    std::size_t token = c.target.kind == CodeTarget::Kind::token ? c.target.token : 0;
    if (c.target.kind == CodeTarget::Kind::group) {
      bool found = false;
      for (const auto& g : d.groups) {
        if (g.id == c.target.id && !g.tombstone) {
          uid = g.utterance_id;
          token = g.start;
          found = true;
        }
      }
      if (!found) continue;
    }
    for (std::size_t u = 0; u < root.utterances.size(); ++u) {
      if (root.utterances[u].id != uid || root.utterances[u].tombstone) continue;
      const auto seg = segment_pos(index, uid);
      if (seg && index.segments[*seg].status == SegmentStatus::transcribed) members.push_back({u, token, k, *seg});
    }
  }
  std::set<std::string> broken;
  for (auto& [name, members] : chains) {
    std::sort(members.begin(), members.end(), [](const Member& a, const Member& b) {
      return std::tie(a.u, a.token, a.code) < std::tie(b.u, b.token, b.code);
    });
    for (std::size_t i = 1; i < members.size(); ++i) {
      const auto& a = index.segments[members[i - 1].seg];
      const auto& b = index.segments[members[i].seg];
      if (a.id == b.id) continue;
      const auto lo = std::min(a.end.ms, b.end.ms) / unit, hi = std::max(a.start.ms, b.start.ms) / unit;
      for (auto x = lo; x < hi; ++x) {
        if (t.state[static_cast<std::size_t>(x - t.first)] != 'T') broken.insert(name);
      }
    }
  }
  return broken;
}

}  // namespace sla::oracle
