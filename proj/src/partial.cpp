#include "sla/partial.hpp"

#include <algorithm>
#include <cstdio>
#include <set>

namespace sla {

MediaTime MediaTime::parse(std::string_view text) {
  static constexpr std::string_view shape = "dd:dd:dd.ddd";
  auto bad = [&] { return Error(Errc::BadMediaTime, "'" + std::string(text) + "' is not HH:MM:SS.mmm"); };
  if (text.size() != shape.size()) throw bad();
  for (std::size_t i = 0; i < shape.size(); ++i) {
    const bool digit = text[i] >= '0' && text[i] <= '9';
    if (shape[i] == 'd' ? !digit : text[i] != shape[i]) throw bad();
  }
  auto num = [&](std::size_t pos, std::size_t len) {
    std::int64_t v = 0;
    for (std::size_t i = pos; i < pos + len; ++i) v = v * 10 + (text[i] - '0');
    return v;
  };
  const auto h = num(0, 2), m = num(3, 2), s = num(6, 2), ms = num(9, 3);
  if (m >= 60 || s >= 60) throw bad();
  return MediaTime{((h * 60 + m) * 60 + s) * 1000 + ms};
}

std::string MediaTime::str() const {
  char buf[32];
  const auto total_s = ms / 1000;
  std::snprintf(buf, sizeof buf, "%02lld:%02lld:%02lld.%03lld", static_cast<long long>(total_s / 3600),
                static_cast<long long>(total_s / 60 % 60), static_cast<long long>(total_s % 60),
                static_cast<long long>(ms % 1000));
  return buf;
}

std::string_view to_string(SegmentStatus status) {
  switch (status) {
    case SegmentStatus::indexed: return "indexed";
    case SegmentStatus::transcribed: return "transcribed";
    case SegmentStatus::excluded: return "excluded";
  }
  return "?";
}

std::optional<SegmentStatus> segment_status_from_string(std::string_view text) {
  for (auto s : {SegmentStatus::indexed, SegmentStatus::transcribed, SegmentStatus::excluded}) {
    if (to_string(s) == text) return s;
  }
  return std::nullopt;
}

bool is_valid_segment_id(std::string_view id) noexcept {
  return is_valid_id(id) && id.find('.') == std::string_view::npos;
}

const Segment* SegmentIndex::find(std::string_view id) const {
  const auto pos = position(id);
  return pos ? &segments[*pos] : nullptr;
}

std::optional<std::size_t> SegmentIndex::position(std::string_view id) const {
  for (std::size_t i = 0; i < segments.size(); ++i) {
    if (segments[i].id == id) return i;
  }
  return std::nullopt;
}

namespace {

void check_segment(const Segment& s) {
  if (!is_valid_segment_id(s.id)) throw Error(Errc::SchemaViolation, "bad segment id '" + s.id + "'");
  if (s.start.ms < 0 || s.start >= s.end) {
    throw Error(Errc::EmptySegment, "segment " + s.id + " spans " + s.start.str() + "-" + s.end.str());
  }
  for (const auto& tag : s.tags) {
    if (tag.empty() || tag.find_first_of(", \t\n") != std::string::npos) {
      throw Error(Errc::SchemaViolation, "segment " + s.id + ": bad tag '" + tag + "'");
    }
  }
}

}  // namespace

SegmentIndex create_index(std::string transcript_id, std::vector<Segment> entries) {
  if (!is_valid_id(transcript_id)) throw Error(Errc::SchemaViolation, "bad transcript id '" + transcript_id + "'");
  std::set<std::string> seen;
  for (const auto& s : entries) {
    check_segment(s);
    if (!seen.insert(s.id).second) throw Error(Errc::DuplicateSegment, "segment " + s.id + " listed twice");
  }
  std::stable_sort(entries.begin(), entries.end(),
                   [](const Segment& a, const Segment& b) { return a.start < b.start; });
  for (std::size_t i = 1; i < entries.size(); ++i) {
    if (entries[i - 1].end > entries[i].start) {
      throw Error(Errc::OverlapInMediaTime, "segments " + entries[i - 1].id + " and " + entries[i].id + " overlap");
    }
  }
  return SegmentIndex{std::move(transcript_id), std::string(kSchemaVersion), std::move(entries)};
}

SegmentIndex add_segment(const SegmentIndex& index, Segment segment) {
  auto entries = index.segments;
  entries.push_back(std::move(segment));
  auto next = create_index(index.transcript_id, std::move(entries));
  next.schema_version = index.schema_version;
  return next;
}

SegmentIndex exclude_segment(const SegmentIndex& index, std::string_view id) {
  const auto pos = index.position(id);
  if (!pos) throw Error(Errc::UnknownSegment, "no segment " + std::string(id));
  if (index.segments[*pos].status != SegmentStatus::indexed) {
    throw Error(Errc::SegmentNotIndexed, "segment " + std::string(id) + " is " +
                                             std::string(to_string(index.segments[*pos].status)));
  }
  auto next = index;
  next.segments[*pos].status = SegmentStatus::excluded;
  return next;
}

std::string serialize_index(const SegmentIndex& index) {
  xml::Element doc("slaIndex");
  doc.attr("transcriptId", index.transcript_id).attr("schemaVersion", index.schema_version);
  for (const auto& s : index.segments) {
    std::string tags;
    for (const auto& t : s.tags) tags += (tags.empty() ? "" : ",") + t;
    doc.add(xml::Element("segment"))
        .attr("id", s.id)
        .attr("start", s.start.str())
        .attr("end", s.end.str())
        .attr("label", s.label)
        .attr("status", std::string(to_string(s.status)))
        .attr("tags", tags);
  }
  return xml::write(doc);
}

SegmentIndex parse_index(std::string_view bytes) {
  const auto doc = xml::parse(bytes);
  xml::expect_name(doc, "slaIndex");
  xml::allow_attrs(doc, {"transcriptId", "schemaVersion"});
  if (!doc.text.empty()) throw Error(Errc::SchemaViolation, "unexpected text inside <slaIndex>", doc.line);
  const auto& version = xml::required_attr(doc, "schemaVersion");
  check_schema_version(version, doc.line);

  std::vector<Segment> entries;
  for (const auto& e : doc.children) {
    xml::expect_name(e, "segment");
    xml::allow_attrs(e, {"id", "start", "end", "label", "status", "tags"});
    xml::expect_no_children(e);
    if (!e.text.empty()) throw Error(Errc::SchemaViolation, "unexpected text inside <segment>", e.line);
    Segment s;
    try {
      s.id = xml::required_attr(e, "id");
      s.start = MediaTime::parse(xml::required_attr(e, "start"));
      s.end = MediaTime::parse(xml::required_attr(e, "end"));
      s.label = xml::required_attr(e, "label");
      const auto status = segment_status_from_string(xml::required_attr(e, "status"));
      if (!status) throw Error(Errc::SchemaViolation, "unknown status");
      s.status = *status;
    } catch (const Error& err) {
      throw Error(Errc::SchemaViolation, err.what(), e.line);
    }
    std::string_view tags = xml::required_attr(e, "tags");
    while (!tags.empty()) {
      const auto comma = tags.find(',');
      s.tags.emplace_back(tags.substr(0, comma));
      if (comma == std::string_view::npos) break;
      tags.remove_prefix(comma + 1);
      if (tags.empty()) s.tags.emplace_back();  // trailing comma; rejected below
    }
    entries.push_back(std::move(s));
  }
  auto index = create_index(xml::required_attr(doc, "transcriptId"), std::move(entries));
  index.schema_version = version;
  return index;
}

std::optional<std::string> segment_of(std::string_view utterance_id) {
  const auto dot = utterance_id.find('.');
  if (dot == std::string_view::npos || dot + 1 == utterance_id.size()) return std::nullopt;
  const auto seg = utterance_id.substr(0, dot);
  if (!is_valid_segment_id(seg)) return std::nullopt;
  return std::string(seg);
}

// ---------------------------------------------------------------------------
// Pieces

TranscriptPiece parse_piece(std::string_view fragment, std::string segment_id,
                            const std::vector<ParticipantRecord>& participants) {
  if (!is_valid_segment_id(segment_id)) throw Error(Errc::SchemaViolation, "bad segment id '" + segment_id + "'");
  // Wrap the fragment in a minimal transcript so the ordinary parser checks it.
  std::string text = "@Begin\n";
  constexpr std::size_t kPreamble = 2;
  std::string declared;
  for (const auto& p : participants) {
    if (!declared.empty()) declared += ", ";
    declared += p.code + (p.name.empty() ? "" : " " + p.name) + " " + (p.role.empty() ? "Unidentified" : p.role);
  }
  text += "@Participants:\t" + declared + "\n";
  text += fragment;
  if (!text.ends_with('\n')) text += '\n';
  text += "@End\n";

  auto parsed = parse_transcript(text, Mode::lenient);
  for (auto& d : parsed.diagnostics) {
    if (d.severity != Severity::error) continue;
    d.line = d.line > kPreamble ? d.line - kPreamble : 0;
    throw Error(d);
  }

  TranscriptPiece piece;
  piece.segment_id = std::move(segment_id);
  for (const auto& item : parsed.doc.body) {
    const auto* block = std::get_if<UtteranceBlock>(&item);
    if (!block) throw Error(Errc::MisplacedHeader, "pieces carry utterances only; found @" + std::get<Header>(item).name);
    if (!std::all_of(block->mainline.tokens.begin(), block->mainline.tokens.end(),
                     [](const Token& t) { return t.is_content(); })) {
      throw Error(Errc::BadToken, "pieces carry no group markup: " + block->mainline.raw_text);
    }
    RootUtterance u;
    u.id = piece.segment_id + "." + std::to_string(piece.utterances.size() + 1);
    u.speaker = block->mainline.speaker.value;
    u.tokens = block->mainline.tokens;
    for (const auto& t : block->tiers) u.tiers.push_back({t.code, t.content});
    piece.utterances.push_back(std::move(u));
  }
  return piece;
}

namespace {

// First utterance belonging to a segment that starts at or after `t`.
std::size_t first_utterance_from(const SlaRoot& root, const SegmentIndex& index, MediaTime t) {
  for (std::size_t i = 0; i < root.utterances.size(); ++i) {
    const auto seg = segment_of(root.utterances[i].id);
    const auto* s = seg ? index.find(*seg) : nullptr;
    if (s && s->start >= t) return i;
  }
  return root.utterances.size();
}

}  // namespace

MergeResult merge_piece(const SlaRoot& root, const ChangeLog& log, const SegmentIndex& index,
                        const TranscriptPiece& piece, const std::string& timestamp, const std::string& author) {
  if (root.transcript_id != index.transcript_id) {
    throw Error(Errc::SchemaViolation, "index belongs to '" + index.transcript_id + "', root to '" +
                                           root.transcript_id + "'");
  }
  const auto pos = index.position(piece.segment_id);
  if (!pos) throw Error(Errc::UnknownSegment, "no segment " + piece.segment_id);
  const auto& segment = index.segments[*pos];
  if (segment.status == SegmentStatus::transcribed) {
    throw Error(Errc::SegmentAlreadyTranscribed, "segment " + segment.id + " is already transcribed");
  }
  if (segment.status != SegmentStatus::indexed) {
    throw Error(Errc::SegmentNotIndexed, "segment " + segment.id + " is " + std::string(to_string(segment.status)));
  }

  std::set<std::string> ids;
  for (const auto& u : root.utterances) ids.insert(u.id);
  for (const auto& u : piece.utterances) {
    if (segment_of(u.id) != segment.id) {
      throw Error(Errc::SchemaViolation, "utterance " + u.id + " is not named after segment " + segment.id);
    }
    if (!ids.insert(u.id).second) throw Error(Errc::DuplicateUtteranceId, "utterance " + u.id + " already exists");
    const bool known = std::any_of(root.participants.begin(), root.participants.end(),
                                   [&](const ParticipantRecord& p) { return p.code == u.speaker; });
    if (!known) throw Error(Errc::UnknownParticipant, "utterance " + u.id + ": speaker " + u.speaker);
  }

  MergeResult out{root, log, index};
  VersionedState state{root, {}};
  const auto at = first_utterance_from(root, index, segment.end);
  for (std::size_t i = 0; i < piece.utterances.size(); ++i) {
    ChangeRecord c;
    c.seq = out.log.next_seq();
    c.target = ChangeTarget::root();
    c.op = ChangeOp::insert;
    c.path = "u:" + piece.utterances[i].id;
    c.after = piece.utterances[i];
    c.position = at + i;
    c.timestamp = timestamp;
    c.author = author;
    out.log = append_change(out.log, state, c);
    state = apply_change(state, c);
  }
  out.root = std::move(state.root);
  out.index.segments[*pos].status = SegmentStatus::transcribed;
  return out;
}

// ---------------------------------------------------------------------------
// Reports

std::vector<Gap> gap_report(const SlaRoot& root, const SegmentIndex& index) {
  std::vector<Gap> gaps;
  if (index.segments.empty()) return gaps;
  std::optional<Gap> open;
  std::optional<std::string> prev;
  MediaTime cursor = index.segments.front().start;

  auto start_gap = [&](MediaTime at) {
    if (open) return;
    open.emplace();
    open->start = at;
    open->prev_segment = prev;
  };
  auto close_gap = [&](MediaTime at, std::optional<std::string> next) {
    open->end = at;
    open->next_segment = std::move(next);
    open->ordinal = gaps.size() + 1;
    open->position = first_utterance_from(root, index, at);
    gaps.push_back(std::move(*open));
    open.reset();
  };

  for (const auto& s : index.segments) {
    if (s.start > cursor) start_gap(cursor);
    if (s.status == SegmentStatus::transcribed) {
      if (open) close_gap(s.start, s.id);
      prev = s.id;
    } else {
      start_gap(s.start);
      open->skipped.push_back(s.id);
    }
    cursor = s.end;
  }
  if (open) close_gap(cursor, std::nullopt);
  return gaps;
}

CohesionReport cohesion_diagnostic(const SlaRoot& root, const std::map<std::string, SlaDescriptor>& descriptors,
                                   const SegmentIndex& index, const std::string& scheme) {
  const auto it = descriptors.find(scheme);
  if (it == descriptors.end()) throw Error(Errc::UnknownScheme, "no descriptor for scheme " + scheme);
  const auto& d = it->second;
  const auto gaps = gap_report(root, index);

  struct Member {
    std::size_t utterance;
    std::size_t token;
    std::size_t code;
    std::size_t segment;
  };
  std::map<std::string, std::vector<Member>> chains;
  for (std::size_t ci = 0; ci < d.codes.size(); ++ci) {
    const auto& c = d.codes[ci];
    if (c.tombstone || c.key != kChainKey) continue;
    auto& members = chains[c.value];

    std::string uid = c.target.id;
    std::size_t token = 0;
    if (c.target.kind == CodeTarget::Kind::group) {
      const auto g = std::find_if(d.groups.begin(), d.groups.end(),
                                  [&](const GroupRange& r) { return r.id == c.target.id && !r.tombstone; });
      if (g == d.groups.end()) continue;
      uid = g->utterance_id;
      token = g->start;
    } else if (c.target.kind == CodeTarget::Kind::token) {
      token = c.target.token;
    }
    const auto u = std::find_if(root.utterances.begin(), root.utterances.end(),
                                [&](const RootUtterance& r) { return r.id == uid && !r.tombstone; });
    if (u == root.utterances.end()) continue;
    const auto seg = segment_of(uid);
    const auto spos = seg ? index.position(*seg) : std::nullopt;
    if (!spos || index.segments[*spos].status != SegmentStatus::transcribed) continue;
    members.push_back({static_cast<std::size_t>(u - root.utterances.begin()), token, ci, *spos});
  }

  CohesionReport report;
  report.scheme = scheme;
  report.total_chains = chains.size();
  for (auto& [name, members] : chains) {
    std::sort(members.begin(), members.end(), [](const Member& a, const Member& b) {
      return std::tie(a.utterance, a.token, a.code) < std::tie(b.utterance, b.token, b.code);
    });
    bool broken = false;
    for (std::size_t i = 1; i < members.size(); ++i) {
      const auto& a = index.segments[members[i - 1].segment];
      const auto& b = index.segments[members[i].segment];
      if (a.id == b.id) continue;
      const auto lo = std::min(a.end, b.end);
      const auto hi = std::max(a.start, b.start);
      Breakpoint bp{name, root.utterances[members[i - 1].utterance].id, root.utterances[members[i].utterance].id,
                    a.id, b.id, {}};
      for (const auto& g : gaps) {
        if (g.start >= lo && g.end <= hi) bp.gaps.push_back(g.ordinal);
      }
      if (bp.gaps.empty()) continue;
      broken = true;
      report.breakpoints.push_back(std::move(bp));
    }
    if (broken) ++report.broken_chains;
  }
  return report;
}

CoverageStats coverage_stats(const SegmentIndex& index) {
  CoverageStats stats;
  if (index.segments.empty()) return stats;
  stats.span_ms = index.segments.back().end.ms - index.segments.front().start.ms;
  std::int64_t per[3] = {0, 0, 0};
  for (const auto& s : index.segments) per[static_cast<int>(s.status)] += s.duration_ms();
  const auto span = static_cast<double>(stats.span_ms);
  stats.indexed = static_cast<double>(per[0]) / span;
  stats.transcribed = static_cast<double>(per[1]) / span;
  stats.excluded = static_cast<double>(per[2]) / span;
  stats.unindexed = static_cast<double>(stats.span_ms - per[0] - per[1] - per[2]) / span;
  return stats;
}

namespace {

std::string seconds(std::int64_t ms) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%lld.%03lld", static_cast<long long>(ms / 1000), static_cast<long long>(ms % 1000));
  return buf;
}

std::string join(const std::vector<std::string>& items, std::string_view sep) {
  std::string out;
  for (const auto& s : items) out += (out.empty() ? "" : std::string(sep)) + s;
  return out;
}

std::string gap_comment(const Gap& g) {
  std::string text = "untranscribed " + g.start.str() + "-" + g.end.str();
  return text + (g.skipped.empty() ? ", unindexed" : ", skipped " + join(g.skipped, " "));
}

xml::Element report_element(std::string_view kind, const std::string& transcript_id) {
  xml::Element doc("slaReport");
  doc.attr("kind", std::string(kind)).attr("transcriptId", transcript_id).attr("schemaVersion", std::string(kSchemaVersion));
  return doc;
}

}  // namespace

ToChatResult render_partial(const SlaRoot& root, std::span<const SlaDescriptor> descriptors,
                            const SegmentIndex& index, Mode mode) {
  auto result = to_chat(root, descriptors, mode);
  auto& doc = result.doc;
  for (const auto& g : gap_report(root, index)) {
    const std::vector<Header> pair{Header::make("New Episode"), Header::make("Comment", gap_comment(g))};
    const auto live = std::count_if(root.utterances.begin(), root.utterances.begin() + static_cast<std::ptrdiff_t>(g.position),
                                    [](const RootUtterance& u) { return !u.tombstone; });
    if (live == 0) {
      doc.constant_headers.insert(doc.constant_headers.end(), pair.begin(), pair.end());
      continue;
    }
    auto at = doc.body.end();
    std::ptrdiff_t blocks = 0;
    for (auto b = doc.body.begin(); b != doc.body.end(); ++b) {
      if (std::holds_alternative<UtteranceBlock>(*b) && blocks++ == live) {
        at = b;
        break;
      }
    }
    doc.body.insert(at, pair.begin(), pair.end());
  }
  return result;
}

std::string format_gaps(const std::string& transcript_id, const std::vector<Gap>& gaps, ReportFormat format) {
  if (format == ReportFormat::xml) {
    auto doc = report_element("gaps", transcript_id);
    for (const auto& g : gaps) {
      auto& e = doc.add(xml::Element("gap"));
      e.attr("ordinal", std::to_string(g.ordinal))
          .attr("position", std::to_string(g.position))
          .attr("start", g.start.str())
          .attr("end", g.end.str())
          .attr("duration", seconds(g.duration_ms()));
      if (g.prev_segment) e.attr("prev", *g.prev_segment);
      if (g.next_segment) e.attr("next", *g.next_segment);
      e.attr("skipped", join(g.skipped, " "));
    }
    return xml::write(doc);
  }
  if (gaps.empty()) return "no gaps\n";
  std::string out;
  for (const auto& g : gaps) {
    out += "gap " + std::to_string(g.ordinal) + " at position " + std::to_string(g.position) + ": " +
           g.start.str() + "-" + g.end.str() + " (" + seconds(g.duration_ms()) + " s)";
    out += ", after " + g.prev_segment.value_or("-") + ", before " + g.next_segment.value_or("-");
    out += ", skipped " + (g.skipped.empty() ? std::string("-") : join(g.skipped, " ")) + "\n";
  }
  return out;
}

std::string format_cohesion(const std::string& transcript_id, const CohesionReport& report, ReportFormat format) {
  auto gap_list = [](const Breakpoint& b) {
    std::vector<std::string> s;
    for (auto g : b.gaps) s.push_back(std::to_string(g));
    return join(s, " ");
  };
  if (format == ReportFormat::xml) {
    auto doc = report_element("cohesion", transcript_id);
    doc.attr("scheme", report.scheme)
        .attr("measure", "broken-chain-count")
        .attr("chains", std::to_string(report.total_chains))
        .attr("broken", std::to_string(report.broken_chains));
    for (const auto& b : report.breakpoints) {
      doc.add(xml::Element("breakpoint"))
          .attr("chain", b.chain)
          .attr("from", b.from_utterance)
          .attr("to", b.to_utterance)
          .attr("fromSegment", b.from_segment)
          .attr("toSegment", b.to_segment)
          .attr("gaps", gap_list(b));
    }
    return xml::write(doc);
  }
  std::string out = "scheme " + report.scheme + ": " + std::to_string(report.broken_chains) + " of " +
                    std::to_string(report.total_chains) + " chains broken (measure: broken-chain count)\n";
  for (const auto& b : report.breakpoints) {
    out += "chain " + b.chain + ": " + b.from_utterance + " (" + b.from_segment + ") -> " + b.to_utterance + " (" +
           b.to_segment + ") crosses gap " + gap_list(b) + "\n";
  }
  return out;
}

std::string format_coverage(const std::string& transcript_id, const CoverageStats& stats, ReportFormat format) {
  auto fraction = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return std::string(buf);
  };
  const std::pair<const char*, double> rows[] = {{"transcribed", stats.transcribed},
                                                 {"indexed", stats.indexed},
                                                 {"excluded", stats.excluded},
                                                 {"unindexed", stats.unindexed}};
  if (format == ReportFormat::xml) {
    auto doc = report_element("coverage", transcript_id);
    doc.attr("span", seconds(stats.span_ms));
    for (const auto& [name, v] : rows) doc.attr(name, fraction(v));
    return xml::write(doc);
  }
  std::string out = "span " + seconds(stats.span_ms) + " s\n";
  for (const auto& [name, v] : rows) out += std::string(name) + " " + fraction(v) + "\n";
  return out;
}

}  // namespace sla
