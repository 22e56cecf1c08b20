#include "sla/cli.hpp"

#include <charconv>
#include <chrono>
#include <cstdlib>
#include <ctime>
#include <functional>
#include <optional>
#include <ostream>

#include <CLI11.hpp>

#include "sla/chat.hpp"
#include "sla/files.hpp"
#include "sla/partial.hpp"
#include "sla/store.hpp"
#include "sla/version_log.hpp"

namespace sla::cli {
namespace {

int exit_code(Errc code) {
  switch (code) {
    case Errc::Io:
    case Errc::MalformedXml:
    case Errc::SchemaViolation:
    case Errc::VersionUnsupported:
    case Errc::LockHeld:
      return kIoOrMalformed;
    case Errc::Usage:
    case Errc::VersionOutOfRange:
    case Errc::UnknownScheme:
      return kUsage;
    default:
      return kFindings;
  }
}

Mode parse_mode(const std::string& text) {
  if (text == "strict") return Mode::strict;
  if (text == "lenient") return Mode::lenient;
  throw Error(Errc::Usage, "mode must be strict or lenient, not '" + text + "'");
}

std::string now_utc() {
  const auto now = std::chrono::system_clock::now();
  const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() % 1000;
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[40];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%S", &tm);
  char full[48];
  std::snprintf(full, sizeof full, "%s.%03dZ", buf, static_cast<int>(ms));
  return full;
}

struct Workspace {
  SlaRoot root;
  std::map<std::string, SlaDescriptor> descriptors;
  ChangeLog log;
  std::optional<SegmentIndex> index;
};

void same_transcript(const std::string& expected, const std::string& found, const fs::path& file) {
  if (expected != found) {
    throw Error(Errc::SchemaViolation, file.string() + " belongs to transcript '" + found + "'");
  }
}

Workspace load(const SlaPaths& paths) {
  if (!fs::exists(paths.root())) throw Error(Errc::Io, "no root file " + paths.root().string());
  Workspace w;
  w.root = parse_root(read_file(paths.root()));
  same_transcript(paths.id, w.root.transcript_id, paths.root());
  for (const auto& scheme : paths.descriptor_schemes()) {
    auto d = parse_descriptor(read_file(paths.descriptor(scheme)));
    same_transcript(paths.id, d.transcript_id, paths.descriptor(scheme));
    if (d.scheme != scheme) throw Error(Errc::SchemaViolation, paths.descriptor(scheme).string() + " holds scheme " + d.scheme);
    w.descriptors.emplace(scheme, std::move(d));
  }
  if (fs::exists(paths.changes())) {
    w.log = parse_changes(read_file(paths.changes()));
    same_transcript(paths.id, w.log.transcript_id(), paths.changes());
  } else {
    w.log = ChangeLog(paths.id);
  }
  if (fs::exists(paths.index())) {
    w.index = parse_index(read_file(paths.index()));
    same_transcript(paths.id, w.index->transcript_id, paths.index());
  }
  return w;
}

std::vector<SlaDescriptor> descriptor_list(const std::map<std::string, SlaDescriptor>& m) {
  std::vector<SlaDescriptor> out;
  for (const auto& [scheme, d] : m) out.push_back(d);
  return out;
}

void print(std::ostream& err, const std::vector<Diagnostic>& diags) {
  for (const auto& d : diags) err << format(d) << '\n';
}

std::string summary(const Payload& p) {
  return std::visit(
      [](const auto& v) -> std::string {
        using T = std::decay_t<decltype(v)>;
        std::string text;
        if constexpr (std::is_same_v<T, HeaderField>) text = "@" + v.name + ": " + v.value;
        else if constexpr (std::is_same_v<T, RootUtterance>) text = "*" + v.speaker + ": " + render_tokens(v.tokens);
        else if constexpr (std::is_same_v<T, Tier>) text = "%" + v.code + ": " + v.content;
        else if constexpr (std::is_same_v<T, Token>) return v.text;
        else if constexpr (std::is_same_v<T, GroupRange>)
          text = v.utterance_id + " [" + std::to_string(v.start) + "," + std::to_string(v.end) + ") " +
                 std::string(to_string(v.kind));
        else text = v.target.str() + " " + v.key + "=" + v.value;
        if constexpr (!std::is_same_v<T, Token>) {
          if (v.tombstone) text += " (deleted)";
        }
        return text;
      },
      p);
}

struct Options {
  std::string mode_flag;
  std::string dir = ".";
  std::string output = "text";
};

class Commands {
 public:
  Commands(const Options& opt, Mode mode, std::ostream& out, std::ostream& err)
      : opt_(opt), mode_(mode), out_(out), err_(err) {}

  ReportFormat format() const { return opt_.output == "xml" ? ReportFormat::xml : ReportFormat::text; }
  SlaPaths paths(const std::string& id) const {
    if (!is_valid_id(id)) throw Error(Errc::Usage, "'" + id + "' is not a valid transcript id");
    return SlaPaths{opt_.dir, id};
  }

  int validate(const std::string& file) {
    const auto parsed = parse_transcript(read_file(file), Mode::lenient);
    print(err_, parsed.diagnostics);
    return has_errors(parsed.diagnostics) ? kFindings : kOk;
  }

  int convert(const std::string& file, const std::string& out_dir, std::string id,
              const std::vector<std::string>& pick_args) {
    if (id.empty()) id = fs::path(file).stem().string();
    std::map<std::string, std::size_t> picks;
    for (const auto& p : pick_args) {
      const auto eq = p.find('=');
      std::size_t k = 0;
      if (eq == std::string::npos || !is_valid_id(p.substr(0, eq)) ||
          std::from_chars(p.data() + eq + 1, p.data() + p.size(), k).ptr != p.data() + p.size() || eq + 1 == p.size()) {
        throw Error(Errc::Usage, "--pick wants <utterance>=<index>, got '" + p + "'");
      }
      picks[p.substr(0, eq)] = k;
    }
    if (!is_valid_id(id)) throw Error(Errc::Usage, "'" + id + "' is not a valid transcript id");
    const auto parsed = parse_transcript(read_file(file), mode_);
    print(err_, parsed.diagnostics);
    fs::create_directories(out_dir);
    const SlaPaths target{out_dir, id};
    WriterLock lock(target.lock());
    if (fs::exists(target.root())) throw Error(Errc::Io, target.root().string() + " already exists");
    const auto result = from_chat(parsed.doc, id, picks, mode_);
    print(err_, result.diagnostics);
    write_file_atomic(target.descriptor(kChatGroupsScheme), serialize_descriptor(result.groups));
    write_file_atomic(target.changes(), serialize_changes(ChangeLog(id)));
    write_file_atomic(target.root(), serialize_root(result.root));
    return kOk;
  }

  int render(const std::string& id, const std::string& out_file) {
    const auto w = load(paths(id));
    const auto ds = descriptor_list(w.descriptors);
    const auto result = w.index ? render_partial(w.root, ds, *w.index, mode_) : to_chat(w.root, ds, mode_);
    print(err_, result.diagnostics);
    write_file_atomic(out_file, render_chat(result.doc));
    return kOk;
  }

  int groups_check(const std::string& file) {
    const auto parsed = parse_transcript(read_file(file), mode_);
    print(err_, parsed.diagnostics);
    int rc = has_errors(parsed.diagnostics) ? kFindings : kOk;
    std::size_t n = 0;
    for (const auto& item : parsed.doc.body) {
      const auto* block = std::get_if<UtteranceBlock>(&item);
      if (!block) continue;
      ++n;
      const auto count = extract_inline_groups(block->mainline).size();
      if (count == 1) continue;
      out_ << "u" << n << ": " << count << " interpretations: *" << block->mainline.speaker.value << ":\t"
           << render_tokens(block->mainline.tokens) << '\n';
      rc = kFindings;
    }
    return rc;
  }

  int index_init(const std::string& id, const std::string& participants) {
    const auto p = paths(id);
    fs::create_directories(p.dir);
    WriterLock lock(p.lock());
    if (fs::exists(p.index())) throw Error(Errc::Io, p.index().string() + " already exists");
    if (!fs::exists(p.root())) {
      SlaRoot root;
      root.transcript_id = id;
      for (const auto& e : parse_participants_value(participants)) {
        if (!ParticipantCode::is_valid(e.code)) throw Error(Errc::Usage, "bad participant code '" + e.code + "'");
        root.participants.push_back({e.code, e.name, e.role, std::nullopt, std::nullopt});
      }
      write_file_atomic(p.changes(), serialize_changes(ChangeLog(id)));
      write_file_atomic(p.root(), serialize_root(root));
    } else if (!participants.empty()) {
      throw Error(Errc::Usage, "--participants only applies when the root is created");
    }
    write_file_atomic(p.index(), serialize_index(create_index(id, {})));
    return kOk;
  }

  int index_add(const std::string& id, const Segment& segment) {
    const auto p = paths(id);
    WriterLock lock(p.lock());
    if (!fs::exists(p.index())) throw Error(Errc::Io, "no index file " + p.index().string());
    const auto index = parse_index(read_file(p.index()));
    write_file_atomic(p.index(), serialize_index(add_segment(index, segment)));
    return kOk;
  }

  int piece_add(const std::string& id, const std::string& segment, const std::string& fragment,
                const std::string& author, std::string timestamp) {
    const auto p = paths(id);
    WriterLock lock(p.lock());
    auto w = load(p);
    if (!w.index) throw Error(Errc::Io, "no index file " + p.index().string());
    if (timestamp.empty()) timestamp = now_utc();
    const auto piece = parse_piece(read_file(fragment), segment, w.root.participants);
    const auto merged = merge_piece(w.root, w.log, *w.index, piece, timestamp, author);
    write_file_atomic(p.changes(), serialize_changes(merged.log));
    write_file_atomic(p.root(), serialize_root(merged.root));
    write_file_atomic(p.index(), serialize_index(merged.index));
    return kOk;
  }

  int log_show(const std::string& id, const std::string& path) {
    const auto p = paths(id);
    const auto log = fs::exists(p.changes()) ? parse_changes(read_file(p.changes())) : ChangeLog(id);
    const auto records = path.empty() ? std::vector<ChangeRecord>(log.records().begin(), log.records().end())
                                      : history(log, path);
    if (format() == ReportFormat::xml) {
      xml::Element doc("slaReport");
      doc.attr("kind", "log").attr("transcriptId", id).attr("schemaVersion", std::string(kSchemaVersion));
      for (const auto& r : records) {
        doc.add(xml::Element("change"))
            .attr("seq", std::to_string(r.seq))
            .attr("target", r.target.str())
            .attr("op", std::string(to_string(r.op)))
            .attr("path", r.path)
            .attr("timestamp", r.timestamp)
            .attr("author", r.author)
            .attr("after", summary(r.after));
      }
      out_ << xml::write(doc);
      return kOk;
    }
    for (const auto& r : records) {
      out_ << r.seq << ' ' << r.timestamp << ' ' << r.author << ' ' << to_string(r.op) << ' ' << r.target.str()
           << ' ' << r.path << ": " << summary(r.after) << '\n';
    }
    return kOk;
  }

  int checkout(const std::string& id, std::size_t version) {
    const auto p = paths(id);
    WriterLock lock(p.lock());
    const auto w = load(p);
    const VersionedState current{w.root, w.descriptors};
    const auto state = materialize(base_state(current, w.log), w.log, VersionId{version});
    const SlaPaths out{p.dir, id + ".v" + std::to_string(version)};
    for (const auto& [scheme, d] : state.descriptors) write_file_atomic(out.descriptor(scheme), serialize_descriptor(d));
    write_file_atomic(out.root(), serialize_root(state.root));
    return kOk;
  }

  int report(const std::string& kind, const std::string& id, const std::string& scheme) {
    const auto w = load(paths(id));
    if (!w.index) throw Error(Errc::Io, "no index file for " + id);
    if (kind == "gaps") out_ << format_gaps(id, gap_report(w.root, *w.index), format());
    else if (kind == "coverage") out_ << format_coverage(id, coverage_stats(*w.index), format());
    else out_ << format_cohesion(id, cohesion_diagnostic(w.root, w.descriptors, *w.index, scheme), format());
    return kOk;
  }

 private:
  const Options& opt_;
  Mode mode_;
  std::ostream& out_;
  std::ostream& err_;
};

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Spoken-language transcript store: CHAT conversion, versioning and partial transcription", "sla"};
  app.require_subcommand(1);
  app.fallthrough();
  Options opt;
  app.add_option("--mode", opt.mode_flag, "strict or lenient (default: $SLA_MODE, else strict)")
      ->check(CLI::IsMember({"strict", "lenient"}));
  app.add_option("--dir", opt.dir, "directory holding the transcript files");
  app.add_option("--output", opt.output, "report format")->check(CLI::IsMember({"text", "xml"}));

  std::function<int(Commands&)> action;

  auto* validate = app.add_subcommand("validate", "check a CHAT file");
  std::string chat_file;
  validate->add_option("chat", chat_file)->required();
  validate->callback([&] { action = [&](Commands& c) { return c.validate(chat_file); }; });

  auto* convert = app.add_subcommand("convert", "split a CHAT file into root and descriptor files");
  std::string out_path, id_opt;
  std::vector<std::string> picks;
  convert->add_option("chat", chat_file)->required();
  convert->add_option("--out", out_path, "output directory")->required();
  convert->add_option("--id", id_opt, "transcript id (default: file stem)");
  convert->add_option("--pick", picks, "interpretation for an ambiguous utterance, e.g. u3=1");
  convert->callback([&] { action = [&](Commands& c) { return c.convert(chat_file, out_path, id_opt, picks); }; });

  auto* render = app.add_subcommand("render", "write a transcript back out as CHAT");
  std::string id;
  render->add_option("id", id)->required();
  render->add_option("--out", out_path, "CHAT file to write")->required();
  render->callback([&] { action = [&](Commands& c) { return c.render(id, out_path); }; });

  auto* groups = app.add_subcommand("groups", "group markup tools");
  groups->require_subcommand(1);
  auto* groups_check = groups->add_subcommand("check", "list utterances whose group markup is ambiguous");
  groups_check->add_option("chat", chat_file)->required();
  groups_check->callback([&] { action = [&](Commands& c) { return c.groups_check(chat_file); }; });

  auto* index = app.add_subcommand("index", "segment index");
  index->require_subcommand(1);
  auto* index_init = index->add_subcommand("init", "create an empty index (and root if missing)");
  std::string participants;
  index_init->add_option("id", id)->required();
  index_init->add_option("--participants", participants, "e.g. \"CHI Target_Child, MOT Mother\"");
  index_init->callback([&] { action = [&](Commands& c) { return c.index_init(id, participants); }; });

  auto* index_add = index->add_subcommand("add", "add a segment");
  std::string seg_id, start, end, label, tags, status = "indexed";
  index_add->add_option("id", id)->required();
  index_add->add_option("--segment", seg_id)->required();
  index_add->add_option("--start", start, "HH:MM:SS.mmm")->required();
  index_add->add_option("--end", end, "HH:MM:SS.mmm")->required();
  index_add->add_option("--label", label)->required();
  index_add->add_option("--tags", tags, "comma separated");
  index_add->add_option("--status", status)->check(CLI::IsMember({"indexed", "excluded"}));
  index_add->callback([&] {
    action = [&](Commands& c) {
      Segment s;
      s.id = seg_id;
      s.start = MediaTime::parse(start);
      s.end = MediaTime::parse(end);
      s.label = label;
      s.status = *segment_status_from_string(status);
      for (std::string_view rest = tags; !rest.empty();) {
        const auto comma = rest.find(',');
        s.tags.emplace_back(rest.substr(0, comma));
        rest = comma == std::string_view::npos ? std::string_view{} : rest.substr(comma + 1);
      }
      return c.index_add(id, s);
    };
  });

  auto* piece = app.add_subcommand("piece", "transcript pieces");
  piece->require_subcommand(1);
  auto* piece_add = piece->add_subcommand("add", "merge a transcribed segment");
  std::string fragment, author, timestamp;
  if (const char* user = std::getenv("USER")) author = user;
  if (author.empty()) author = "unknown";
  piece_add->add_option("id", id)->required();
  piece_add->add_option("segment", seg_id)->required();
  piece_add->add_option("fragment", fragment, "CHAT file with main lines and tiers only")->required();
  piece_add->add_option("--author", author);
  piece_add->add_option("--timestamp", timestamp, "UTC, YYYY-MM-DDTHH:MM:SS[.fff]Z (default: now)");
  piece_add->callback([&] { action = [&](Commands& c) { return c.piece_add(id, seg_id, fragment, author, timestamp); }; });

  auto* log = app.add_subcommand("log", "change log");
  log->require_subcommand(1);
  auto* log_show = log->add_subcommand("show", "list change records");
  std::string path;
  log_show->add_option("id", id)->required();
  log_show->add_option("--path", path, "only records at or beneath this path");
  log_show->callback([&] { action = [&](Commands& c) { return c.log_show(id, path); }; });

  auto* checkout = app.add_subcommand("checkout", "write the state after N changes to <id>.v<N>.*");
  std::size_t version = 0;
  checkout->add_option("id", id)->required();
  checkout->add_option("--version", version)->required();
  checkout->callback([&] { action = [&](Commands& c) { return c.checkout(id, version); }; });

  auto* report = app.add_subcommand("report", "reports over the segment index");
  report->require_subcommand(1);
  std::string scheme;
  const std::pair<const char*, const char*> kinds[] = {
      {"gaps", "untranscribed stretches between transcribed segments"},
      {"cohesion", "chains of a descriptor scheme that cross a gap"},
      {"coverage", "share of the media span per segment status"}};
  for (const auto& [kind, about] : kinds) {
    auto* sub = report->add_subcommand(kind, about);
    sub->add_option("id", id)->required();
    if (std::string_view(kind) == "cohesion") sub->add_option("--scheme", scheme, "descriptor scheme")->required();
    sub->callback([&, kind] { action = [&, kind](Commands& c) { return c.report(kind, id, scheme); }; });
  }

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "usage: " << e.what() << '\n';
    return kUsage;
  } catch (const Error& e) {
    err << e.what() << '\n';
    return exit_code(e.code());
  }

  try {
    Mode mode = Mode::strict;
    if (const char* env = std::getenv("SLA_MODE"); env && *env) mode = parse_mode(env);
    if (!opt.mode_flag.empty()) mode = parse_mode(opt.mode_flag);
    Commands commands(opt, mode, out, err);
    return action(commands);
  } catch (const Error& e) {
    err << e.what() << '\n';
    return exit_code(e.code());
  } catch (const fs::filesystem_error& e) {
    err << "Io: " << e.what() << '\n';
    return kIoOrMalformed;
  }
}

}  // namespace sla::cli
