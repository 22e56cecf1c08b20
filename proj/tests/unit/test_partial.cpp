#include "doctest.h"

#include <cmath>

#include "episode.hpp"
#include "gen.hpp"
#include "oracles.hpp"
#include "sla/partial.hpp"

using namespace sla;
using testing::timestamp_at;

namespace {

Errc code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("no error");
  return Errc::Io;
}

SegmentIndex episode_index() {
  return exclude_segment(create_index("rec1", testing::episode_segments()), "s4");
}

MergeResult merge(const MergeResult& m, const std::string& seg, std::uint64_t clock) {
  const auto piece = parse_piece(testing::episode_pieces().at(seg), seg, m.root.participants);
  return merge_piece(m.root, m.log, m.index, piece, timestamp_at(clock), "ann");
}

MergeResult episode(std::initializer_list<const char*> order) {
  MergeResult m{testing::episode_root(), ChangeLog("rec1"), episode_index()};
  std::uint64_t clock = 0;
  for (const char* seg : order) m = merge(m, seg, ++clock);
  return m;
}

}  // namespace

TEST_CASE("media time") {
  CHECK(MediaTime::parse("01:02:03.004").ms == 3723004);
  CHECK(MediaTime{3723004}.str() == "01:02:03.004");
  for (auto bad : {"1:02:03.004", "01:60:00.000", "01:02:03", "01:02:03.0045", "aa:bb:cc.ddd", "01:02:60.000"}) {
    CHECK_MESSAGE(code_of([&] { MediaTime::parse(bad); }) == Errc::BadMediaTime, bad);
  }
}

TEST_CASE("index creation sorts and checks") {
  auto segs = testing::episode_segments();
  std::swap(segs[0], segs[4]);
  const auto index = create_index("rec1", segs);
  CHECK(index.segments.front().id == "s1");
  CHECK(index.position("s3") == 2u);

  auto overlap = segs;
  overlap[1].end = MediaTime::parse("00:02:31.000");  // s2 into s3
  CHECK(code_of([&] { create_index("rec1", overlap); }) == Errc::OverlapInMediaTime);
  auto empty = segs;
  empty[0].end = empty[0].start;
  CHECK(code_of([&] { create_index("rec1", empty); }) == Errc::EmptySegment);
  auto dup = segs;
  dup[1].id = dup[0].id;
  CHECK(code_of([&] { create_index("rec1", dup); }) == Errc::DuplicateSegment);
  auto dotted = segs;
  dotted[0].id = "s.1";
  CHECK(code_of([&] { create_index("rec1", dotted); }) == Errc::SchemaViolation);
  auto gap = segs;
  gap.pop_back();
  CHECK_NOTHROW(add_segment(create_index("rec1", gap), segs.back()));
  CHECK(code_of([&] { add_segment(index, segs[0]); }) == Errc::DuplicateSegment);
}

TEST_CASE("exclude only from indexed") {
  auto m = episode({"s1"});
  CHECK(code_of([&] { exclude_segment(m.index, "s1"); }) == Errc::SegmentNotIndexed);
  CHECK(code_of([&] { exclude_segment(m.index, "s4"); }) == Errc::SegmentNotIndexed);
  CHECK(code_of([&] { exclude_segment(m.index, "zz"); }) == Errc::UnknownSegment);
  CHECK(exclude_segment(m.index, "s2").find("s2")->status == SegmentStatus::excluded);
}

TEST_CASE("index xml round trip") {
  auto index = episode_index();
  index.segments[0].tags = {"greeting", "home"};
  const auto bytes = serialize_index(index);
  CHECK(bytes.find("<segment id=\"s1\" start=\"00:00:00.000\" end=\"00:01:00.000\" label=\"arrival\" "
                   "status=\"indexed\" tags=\"greeting,home\"/>") != std::string::npos);
  CHECK(parse_index(bytes) == index);
  CHECK(code_of([&] {
          parse_index("<slaIndex transcriptId=\"r\" schemaVersion=\"1.0\"><segment id=\"a\" start=\"00:00:00.000\" "
                      "end=\"00:00:01.000\" label=\"\" status=\"done\" tags=\"\"/></slaIndex>");
        }) == Errc::SchemaViolation);
}

TEST_CASE("pieces parse with segment-scoped ids") {
  const auto root = testing::episode_root();
  const auto p = parse_piece(testing::episode_pieces().at("s3"), "s3", root.participants);
  REQUIRE(p.utterances.size() == 3);
  CHECK(p.utterances[0].id == "s3.1");
  CHECK(p.utterances[1].tiers.size() == 1);
  CHECK(p.utterances[2].id == "s3.3");
  CHECK(code_of([&] { parse_piece("*CHI:\tok .\n@Comment:\tno\n", "s1", root.participants); }) == Errc::MisplacedHeader);
  CHECK(code_of([&] { parse_piece("*CHI:\t<a b> [/] .\n", "s1", root.participants); }) == Errc::BadToken);
  CHECK(code_of([&] { parse_piece("*FAT:\thi .\n", "s1", root.participants); }) == Errc::UnknownParticipant);
  try {
    parse_piece("*CHI:\tok .\n\n*CHI:\tagain .\n", "s1", root.participants);
    FAIL("expected throw");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::MalformedLine);
    CHECK(e.line() == 2);
  }
}

TEST_CASE("merge places utterances in media order and logs each insert") {
  const auto m = episode({"s5", "s1", "s3"});
  std::vector<std::string> ids;
  for (const auto& u : m.root.utterances) ids.push_back(u.id);
  CHECK(ids == std::vector<std::string>{"s1.1", "s1.2", "s3.1", "s3.2", "s3.3", "s5.1", "s5.2"});
  CHECK(m.log.size() == 7);
  CHECK(m.log.records()[0].path == "u:s5.1");
  CHECK(m.log.records()[2].position == 0u);
  CHECK(m.index.find("s3")->status == SegmentStatus::transcribed);
  CHECK(materialize(VersionedState{testing::episode_root(), {}}, m.log, {m.log.size()}).root == m.root);
}

TEST_CASE("merge errors") {
  const auto m = episode({"s1"});
  const auto piece = parse_piece("*CHI:\tagain .\n", "s1", m.root.participants);
  CHECK(code_of([&] { merge_piece(m.root, m.log, m.index, piece, timestamp_at(9), "a"); }) ==
        Errc::SegmentAlreadyTranscribed);
  auto p4 = piece;
  p4.segment_id = "s4";
  p4.utterances[0].id = "s4.1";
  CHECK(code_of([&] { merge_piece(m.root, m.log, m.index, p4, timestamp_at(9), "a"); }) == Errc::SegmentNotIndexed);
  auto px = p4;
  px.segment_id = "zz";
  CHECK(code_of([&] { merge_piece(m.root, m.log, m.index, px, timestamp_at(9), "a"); }) == Errc::UnknownSegment);
  auto p2 = piece;
  p2.segment_id = "s2";
  CHECK(code_of([&] { merge_piece(m.root, m.log, m.index, p2, timestamp_at(9), "a"); }) == Errc::SchemaViolation);
  p2.utterances[0].id = "s2.1";
  p2.utterances.push_back(p2.utterances[0]);
  CHECK(code_of([&] { merge_piece(m.root, m.log, m.index, p2, timestamp_at(9), "a"); }) == Errc::DuplicateUtteranceId);
  p2.utterances.pop_back();
  p2.utterances[0].speaker = "FAT";
  CHECK(code_of([&] { merge_piece(m.root, m.log, m.index, p2, timestamp_at(9), "a"); }) == Errc::UnknownParticipant);
  p2.utterances[0].speaker = "MOT";
  CHECK(code_of([&] { merge_piece(m.root, m.log, m.index, p2, timestamp_at(0), "a"); }) == Errc::TimeRegression);
}

TEST_CASE("gap report on the episode") {
  const auto m = episode({"s1", "s3", "s5"});
  const auto gaps = gap_report(m.root, m.index);
  REQUIRE(gaps.size() == 2);
  CHECK(gaps[0].start.str() == "00:01:00.000");
  CHECK(gaps[0].end.str() == "00:02:30.000");
  CHECK(gaps[0].position == 2);
  CHECK(gaps[0].prev_segment == "s1");
  CHECK(gaps[0].next_segment == "s3");
  CHECK(gaps[0].skipped == std::vector<std::string>{"s2"});
  CHECK(gaps[1].start.str() == "00:03:30.000");
  CHECK(gaps[1].position == 5);
  CHECK(gaps[1].skipped == std::vector<std::string>{"s4"});
  CHECK(gaps == oracle::gaps(m.root, m.index, 1000));
  CHECK(format_gaps("rec1", gaps, ReportFormat::text) ==
        "gap 1 at position 2: 00:01:00.000-00:02:30.000 (90.000 s), after s1, before s3, skipped s2\n"
        "gap 2 at position 5: 00:03:30.000-00:04:00.000 (30.000 s), after s3, before s5, skipped s4\n");
}

TEST_CASE("leading and trailing gaps have one neighbour") {
  const auto m = episode({"s3"});
  const auto gaps = gap_report(m.root, m.index);
  REQUIRE(gaps.size() == 2);
  CHECK_FALSE(gaps[0].prev_segment);
  CHECK(gaps[0].position == 0);
  CHECK(gaps[1].next_segment == std::nullopt);
  CHECK(gaps[1].position == 3);
  CHECK(gaps[1].skipped == std::vector<std::string>{"s4", "s5"});
  CHECK(gap_report(testing::episode_root(), SegmentIndex{}).empty());
}

TEST_CASE("coverage on the episode") {
  const auto m = episode({"s1", "s3", "s5"});
  const auto c = coverage_stats(m.index);
  CHECK(c.span_ms == 300000);
  CHECK(c.transcribed == doctest::Approx(0.6));
  CHECK(c.indexed == doctest::Approx(0.2));
  CHECK(c.excluded == doctest::Approx(0.1));
  CHECK(c.unindexed == doctest::Approx(0.1));
  CHECK(format_coverage("rec1", c, ReportFormat::text) ==
        "span 300.000 s\ntranscribed 0.600000\nindexed 0.200000\nexcluded 0.100000\nunindexed 0.100000\n");
  const auto z = coverage_stats(SegmentIndex{});
  CHECK(z.span_ms == 0);
  CHECK(z.transcribed == 0);
}

TEST_CASE("cohesion on the episode") {
  const auto m = episode({"s1", "s3", "s5"});
  std::map<std::string, SlaDescriptor> ds{{"coref", testing::episode_coref()}};
  const auto r = cohesion_diagnostic(m.root, ds, m.index, "coref");
  CHECK(r.total_chains == 5);
  CHECK(r.broken_chains == 3);
  REQUIRE(r.breakpoints.size() == 4);
  CHECK(r.breakpoints[0] == Breakpoint{"c2", "s1.2", "s3.1", "s1", "s3", {1}});
  CHECK(r.breakpoints[1] == Breakpoint{"c3", "s3.3", "s5.1", "s3", "s5", {2}});
  CHECK(r.breakpoints[2] == Breakpoint{"c4", "s1.1", "s3.1", "s1", "s3", {1}});
  CHECK(r.breakpoints[3] == Breakpoint{"c4", "s3.1", "s5.2", "s3", "s5", {2}});
  CHECK(oracle::broken_chains(m.root, ds.at("coref"), m.index, 1000) == std::set<std::string>{"c2", "c3", "c4"});
  CHECK(code_of([&] { cohesion_diagnostic(m.root, ds, m.index, "nope"); }) == Errc::UnknownScheme);
  CHECK(format_cohesion("rec1", r, ReportFormat::text).starts_with(
      "scheme coref: 3 of 5 chains broken (measure: broken-chain count)\n"
      "chain c2: s1.2 (s1) -> s3.1 (s3) crosses gap 1\n"));

  // Transcribing s2 leaves the unindexed stretch, so nothing heals yet.
  const auto more = merge(m, "s2", 10);
  CHECK(cohesion_diagnostic(more.root, ds, more.index, "coref").broken_chains == 3);
}

TEST_CASE("render_partial marks each gap in the transcript") {
  const auto m = episode({"s1", "s3", "s5"});
  const auto text = render_chat(render_partial(m.root, {}, m.index).doc);
  CHECK(text ==
        "@Begin\n"
        "@Participants:\tCHI Target_Child, MOT Mother\n"
        "*CHI:\tball .\n"
        "*MOT:\tthe red ball ?\n"
        "@New Episode\n"
        "@Comment:\tuntranscribed 00:01:00.000-00:02:30.000, skipped s2\n"
        "*CHI:\tmore ball .\n"
        "*MOT:\tyou want it ?\n"
        "%com:\tholds out the ball\n"
        "*CHI:\tyes !\n"
        "@New Episode\n"
        "@Comment:\tuntranscribed 00:03:30.000-00:04:00.000, skipped s4\n"
        "*MOT:\tall done .\n"
        "*CHI:\tball gone .\n"
        "@End\n");
  const auto lead = render_chat(render_partial(episode({"s3"}).root, {}, episode({"s3"}).index).doc);
  CHECK(lead.starts_with("@Begin\n@Participants:\tCHI Target_Child, MOT Mother\n@New Episode\n"
                         "@Comment:\tuntranscribed 00:00:00.000-00:02:30.000, skipped s1 s2\n*CHI:\tmore ball .\n"));
  CHECK(lead.ends_with("*CHI:\tyes !\n@New Episode\n@Comment:\tuntranscribed 00:03:30.000-00:05:00.000, skipped s4 s5\n"
                       "@End\n"));
}

TEST_CASE("property: gaps and coverage agree with the timeline oracle") {
  testing::Rng rng(51);
  const auto root = testing::episode_root();
  for (int i = 0; i < 1000; ++i) {
    const auto index = testing::gen_index(rng, "rec1", 10, 1000);
    CHECK(gap_report(root, index) == oracle::gaps(root, index, 1000));
    const auto c = coverage_stats(index), o = oracle::coverage(index, 1000);
    CHECK(c.span_ms == o.span_ms);
    CHECK(std::abs(c.transcribed - o.transcribed) < 1e-9);
    CHECK(std::abs(c.indexed - o.indexed) < 1e-9);
    CHECK(std::abs(c.excluded - o.excluded) < 1e-9);
    CHECK(std::abs(c.unindexed - o.unindexed) < 1e-9);
    if (c.span_ms > 0) CHECK(std::abs(c.transcribed + c.indexed + c.excluded + c.unindexed - 1.0) < 1e-9);
  }
}
