#include "sla/chat.hpp"

#include <algorithm>
#include <array>
#include <set>
#include <tuple>

namespace sla {

namespace {

bool is_blank(char c) noexcept { return c == ' ' || c == '\t'; }

std::string_view trim(std::string_view s) {
  while (!s.empty() && is_blank(s.front())) s.remove_prefix(1);
  while (!s.empty() && (is_blank(s.back()) || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::string_view trim_left(std::string_view s) {
  while (!s.empty() && is_blank(s.front())) s.remove_prefix(1);
  return s;
}

bool is_terminator_text(std::string_view s) { return s == "." || s == "?" || s == "!"; }

constexpr std::array kChangeableHeaders = {
    std::string_view{"Activities"}, std::string_view{"Bck"},
    std::string_view{"Bg"},         std::string_view{"Blank"},
    std::string_view{"Comment"},    std::string_view{"Date"},
    std::string_view{"Eg"},         std::string_view{"G"},
    std::string_view{"New Episode"}, std::string_view{"Page"},
    std::string_view{"Situation"},  std::string_view{"Time Duration"},
    std::string_view{"Time Start"},
};

}  // namespace

bool ParticipantCode::is_valid(std::string_view code) noexcept {
  return code.size() == 3 &&
         std::all_of(code.begin(), code.end(), [](char c) { return c >= 'A' && c <= 'Z'; });
}

std::string_view to_string(TokenKind kind) {
  switch (kind) {
    case TokenKind::word: return "word";
    case TokenKind::pause: return "pause";
    case TokenKind::terminator: return "terminator";
    case TokenKind::scope_open: return "scope_open";
    case TokenKind::scope_close: return "scope_close";
    case TokenKind::scope_marker: return "scope_marker";
  }
  return "word";
}

Token Token::word(std::string text) { return Token{TokenKind::word, std::move(text), {}, {}}; }
Token Token::pause() { return Token{TokenKind::pause, "#", {}, {}}; }
Token Token::terminator(char c) { return Token{TokenKind::terminator, std::string(1, c), {}, {}}; }
Token Token::open() { return Token{TokenKind::scope_open, "<", {}, {}}; }
Token Token::close() { return Token{TokenKind::scope_close, ">", {}, {}}; }
Token Token::scope_marker(ScopeMarkerKind kind, std::optional<std::string> payload) {
  std::string text = marker_text(kind, payload);
  return Token{TokenKind::scope_marker, std::move(text), kind, std::move(payload)};
}

bool marker_requires_payload(ScopeMarkerKind kind) noexcept {
  return kind == ScopeMarkerKind::paralinguistic || kind == ScopeMarkerKind::explanation ||
         kind == ScopeMarkerKind::replacement;
}

bool marker_allows_payload(ScopeMarkerKind kind) noexcept {
  return marker_requires_payload(kind) || kind == ScopeMarkerKind::error;
}

std::string marker_text(ScopeMarkerKind kind, const std::optional<std::string>& payload) {
  auto with = [&](std::string_view prefix) {
    std::string out = "[";
    out += prefix;
    if (payload) {
      out += ' ';
      out += *payload;
    }
    out += ']';
    return out;
  };
  switch (kind) {
    case ScopeMarkerKind::paralinguistic: return with("=!");
    case ScopeMarkerKind::explanation: return with("=");
    case ScopeMarkerKind::replacement: return with(":");
    case ScopeMarkerKind::error: return with("*");
    case ScopeMarkerKind::retrace: return "[/]";
    case ScopeMarkerKind::retrace_correction: return "[//]";
    case ScopeMarkerKind::overlap_follows: return "[>]";
    case ScopeMarkerKind::overlap_precedes: return "[<]";
  }
  return "[]";
}

Header Header::make(std::string name, std::string value) {
  const auto kind = is_changeable_header(name) ? HeaderKind::changeable : HeaderKind::constant;
  return Header{std::move(name), std::move(value), kind};
}

bool is_changeable_header(std::string_view name) {
  return std::find(kChangeableHeaders.begin(), kChangeableHeaders.end(), name) !=
         kChangeableHeaders.end();
}

// ---------------------------------------------------------------------------
// Tokenizer

namespace {

// Classifies the inside of "[...]". Returns nullopt for unknown markers.
std::optional<Token> classify_marker(std::string_view inner) {
  inner = trim(inner);
  if (inner == "/") return Token::scope_marker(ScopeMarkerKind::retrace);
  if (inner == "//") return Token::scope_marker(ScopeMarkerKind::retrace_correction);
  if (inner == ">") return Token::scope_marker(ScopeMarkerKind::overlap_follows);
  if (inner == "<") return Token::scope_marker(ScopeMarkerKind::overlap_precedes);

  struct Prefix {
    std::string_view text;
    ScopeMarkerKind kind;
  };
  // "=!" must be tried before "=".
  constexpr std::array prefixes = {
      Prefix{"=!", ScopeMarkerKind::paralinguistic},
      Prefix{"=", ScopeMarkerKind::explanation},
      Prefix{":", ScopeMarkerKind::replacement},
      Prefix{"*", ScopeMarkerKind::error},
  };
  for (const auto& p : prefixes) {
    if (!inner.starts_with(p.text)) continue;
    const auto rest = trim(inner.substr(p.text.size()));
    if (rest.empty()) {
      if (marker_requires_payload(p.kind)) return std::nullopt;
      return Token::scope_marker(p.kind);
    }
    return Token::scope_marker(p.kind, std::string(rest));
  }
  return std::nullopt;
}

Token classify_word(std::string_view text) {
  if (text == "#") return Token::pause();
  if (is_terminator_text(text)) return Token::terminator(text.front());
  return Token::word(std::string(text));
}

bool ends_word(char c) { return is_blank(c) || c == '[' || c == '<' || c == '>'; }

void report(Mode mode, std::vector<Diagnostic>* diags, Diagnostic d) {
  if (mode == Mode::strict) throw Error(d);
  if (diags) diags->push_back(std::move(d));
}

}  // namespace

std::vector<Token> tokenize_mainline(std::string_view line_text, Mode mode,
                                     std::vector<Diagnostic>* diagnostics, std::size_t line) {
  std::vector<Token> tokens;
  const std::size_t n = line_text.size();
  std::size_t i = 0;
  while (i < n) {
    const char c = line_text[i];
    if (is_blank(c) || c == '\r') {
      ++i;
    } else if (c == '[') {
      const auto close = line_text.find(']', i);
      if (close == std::string_view::npos) {
        report(mode, diagnostics,
               {Errc::UnterminatedMarker, line,
                "'[' at column " + std::to_string(i + 1) + " has no matching ']'"});
        // Keep the remainder as plain words.
        std::size_t j = i;
        while (j < n) {
          while (j < n && is_blank(line_text[j])) ++j;
          std::size_t k = j;
          while (k < n && !is_blank(line_text[k])) ++k;
          if (k > j) tokens.push_back(classify_word(line_text.substr(j, k - j)));
          j = k;
        }
        break;
      }
      const auto inner = line_text.substr(i + 1, close - i - 1);
      if (auto marker = classify_marker(inner)) {
        tokens.push_back(std::move(*marker));
      } else {
        const auto surface = line_text.substr(i, close - i + 1);
        report(mode, diagnostics,
               {Errc::UnknownMarker, line, "unknown marker '" + std::string(surface) + "'"});
        tokens.push_back(Token::word(std::string(surface)));
      }
      i = close + 1;
    } else if (c == '<') {
      tokens.push_back(Token::open());
      ++i;
    } else if (c == '>') {
      tokens.push_back(Token::close());
      ++i;
    } else {
      std::size_t j = i;
      while (j < n && !ends_word(line_text[j]) && line_text[j] != '\r') ++j;
      tokens.push_back(classify_word(line_text.substr(i, j - i)));
      i = j;
    }
  }
  return tokens;
}

std::string render_tokens(std::span<const Token> tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const auto& t = tokens[i];
    const bool glue = i == 0 || tokens[i - 1].kind == TokenKind::scope_open ||
                      t.kind == TokenKind::scope_close;
    if (!glue) out += ' ';
    out += t.text;
  }
  return out;
}

std::vector<Token> content_tokens(std::span<const Token> tokens) {
  std::vector<Token> out;
  for (const auto& t : tokens) {
    if (t.is_content()) out.push_back(t);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Inline group interpretations

bool Interpretation::operator<(const Interpretation& other) const {
  auto key = [](const GroupRange& r) {
    return std::make_tuple(r.start, ~r.end, r.kind, r.payload.has_value(), r.payload.value_or(""));
  };
  return std::lexicographical_compare(
      ranges.begin(), ranges.end(), other.ranges.begin(), other.ranges.end(),
      [&](const GroupRange& a, const GroupRange& b) { return key(a) < key(b); });
}

namespace {

struct Scope {
  std::size_t close_pos;
  std::size_t start;
  std::size_t end;
};

struct MarkerSlot {
  const Token* token;
  std::vector<std::size_t> scopes;  // eligible scope indices
  std::optional<std::size_t> word;  // content index of the bindable word
};

void sort_ranges(std::vector<GroupRange>& ranges) {
  std::sort(ranges.begin(), ranges.end(), [](const GroupRange& a, const GroupRange& b) {
    return Interpretation{{a}} < Interpretation{{b}};
  });
}

GroupRange make_range(std::size_t start, std::size_t end, const Token& marker) {
  GroupRange r;
  r.start = start;
  r.end = end;
  r.kind = *marker.marker;
  r.payload = marker.payload;
  return r;
}

class Binder {
 public:
  Binder(std::vector<Scope> scopes, std::vector<MarkerSlot> markers)
      : scopes_(std::move(scopes)), markers_(std::move(markers)), used_(scopes_.size(), false) {}

  std::set<Interpretation> run() {
    bind(0, 0);
    return found_;
  }

 private:
  void bind(std::size_t m, std::size_t bound_scopes) {
    if (scopes_.size() - bound_scopes > markers_.size() - m) return;
    if (m == markers_.size()) {
      Interpretation interp{current_};
      sort_ranges(interp.ranges);
      found_.insert(std::move(interp));
      return;
    }
    const auto& slot = markers_[m];
    for (auto s : slot.scopes) {
      if (used_[s]) continue;
      used_[s] = true;
      current_.push_back(make_range(scopes_[s].start, scopes_[s].end, *slot.token));
      bind(m + 1, bound_scopes + 1);
      current_.pop_back();
      used_[s] = false;
    }
    if (slot.word) {
      current_.push_back(make_range(*slot.word, *slot.word + 1, *slot.token));
      bind(m + 1, bound_scopes);
      current_.pop_back();
    }
  }

  std::vector<Scope> scopes_;
  std::vector<MarkerSlot> markers_;
  std::vector<bool> used_;
  std::vector<GroupRange> current_;
  std::set<Interpretation> found_;
};

}  // namespace

std::vector<Interpretation> extract_inline_groups(std::span<const Token> tokens) {
  std::vector<std::size_t> content_index(tokens.size() + 1, 0);
  for (std::size_t p = 0; p < tokens.size(); ++p) {
    content_index[p + 1] = content_index[p] + (tokens[p].is_content() ? 1 : 0);
  }

  std::vector<Scope> scopes;
  std::vector<std::size_t> open_stack;
  for (std::size_t p = 0; p < tokens.size(); ++p) {
    if (tokens[p].kind == TokenKind::scope_open) {
      open_stack.push_back(p);
    } else if (tokens[p].kind == TokenKind::scope_close) {
      if (open_stack.empty()) {
        throw Error(Errc::UnbalancedScopes, "'>' at token " + std::to_string(p) + " has no '<'");
      }
      const auto open = open_stack.back();
      open_stack.pop_back();
      if (content_index[open] == content_index[p]) {
        throw Error(Errc::UnbalancedScopes, "empty scope at token " + std::to_string(open));
      }
      scopes.push_back({p, content_index[open], content_index[p]});
    }
  }
  if (!open_stack.empty()) {
    throw Error(Errc::UnbalancedScopes,
                "'<' at token " + std::to_string(open_stack.back()) + " is never closed");
  }

  std::vector<MarkerSlot> markers;
  std::size_t run_start = 0;  // first index of the current run of closes/markers
  for (std::size_t p = 0; p < tokens.size(); ++p) {
    const auto kind = tokens[p].kind;
    if (kind != TokenKind::scope_close && kind != TokenKind::scope_marker) {
      run_start = p + 1;
      continue;
    }
    if (kind != TokenKind::scope_marker) continue;
    MarkerSlot slot{&tokens[p], {}, {}};
    for (std::size_t s = 0; s < scopes.size(); ++s) {
      if (scopes[s].close_pos >= run_start && scopes[s].close_pos < p) slot.scopes.push_back(s);
    }
    if (p > 0 && tokens[p - 1].kind == TokenKind::word) slot.word = content_index[p - 1];
    markers.push_back(std::move(slot));
  }

  auto found = Binder(std::move(scopes), std::move(markers)).run();
  if (found.empty()) {
    throw Error(Errc::UnbalancedScopes, "no consistent binding of markers to scopes");
  }
  return {found.begin(), found.end()};
}

std::vector<Token> embed_groups(std::span<const Token> content, std::span<const GroupRange> ranges) {
  const std::size_t n = content.size();
  std::vector<std::vector<const GroupRange*>> opens(n), closes(n);
  std::vector<const GroupRange*> bare(n, nullptr);
  for (const auto& r : ranges) {
    if (r.start >= r.end || r.end > n) {
      throw Error(Errc::OutOfBounds, "group '" + r.id + "' exceeds the utterance");
    }
    if (r.length() == 1 && content[r.start].kind == TokenKind::word && !bare[r.start]) {
      bare[r.start] = &r;
    } else {
      opens[r.start].push_back(&r);
      closes[r.end - 1].push_back(&r);
    }
  }
  std::vector<Token> out;
  for (std::size_t i = 0; i < n; ++i) {
    std::sort(opens[i].begin(), opens[i].end(),
              [](const GroupRange* a, const GroupRange* b) { return a->end > b->end; });
    std::sort(closes[i].begin(), closes[i].end(),
              [](const GroupRange* a, const GroupRange* b) { return a->start > b->start; });
    for (std::size_t k = 0; k < opens[i].size(); ++k) out.push_back(Token::open());
    out.push_back(content[i]);
    if (bare[i]) out.push_back(Token::scope_marker(bare[i]->kind, bare[i]->payload));
    for (const auto* r : closes[i]) {
      out.push_back(Token::close());
      out.push_back(Token::scope_marker(r->kind, r->payload));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Participants

std::vector<ParticipantEntry> parse_participants_value(std::string_view value) {
  std::vector<ParticipantEntry> entries;
  std::size_t pos = 0;
  while (pos <= value.size()) {
    auto comma = value.find(',', pos);
    if (comma == std::string_view::npos) comma = value.size();
    const auto entry = trim(value.substr(pos, comma - pos));
    pos = comma + 1;
    if (entry.empty()) continue;
    std::vector<std::string> words;
    std::size_t i = 0;
    while (i < entry.size()) {
      while (i < entry.size() && is_blank(entry[i])) ++i;
      std::size_t j = i;
      while (j < entry.size() && !is_blank(entry[j])) ++j;
      if (j > i) words.emplace_back(entry.substr(i, j - i));
      i = j;
    }
    ParticipantEntry e;
    e.code = words.front();
    if (words.size() >= 2) e.role = words.back();
    for (std::size_t w = 1; w + 1 < words.size(); ++w) {
      if (!e.name.empty()) e.name += ' ';
      e.name += words[w];
    }
    entries.push_back(std::move(e));
  }
  return entries;
}

std::vector<std::string> declared_participants(const TranscriptDoc& doc) {
  std::vector<std::string> codes;
  for (const auto& h : doc.constant_headers) {
    if (h.name != "Participants") continue;
    for (auto& e : parse_participants_value(h.value)) codes.push_back(std::move(e.code));
  }
  return codes;
}

// ---------------------------------------------------------------------------
// Document checks shared by parse_transcript and validate

namespace {

struct DocLines {
  std::vector<std::size_t> headers;
  std::vector<std::size_t> body;
  std::vector<std::vector<std::size_t>> tiers;
  std::size_t end = 1;
};

DocLines canonical_lines(const TranscriptDoc& doc) {
  DocLines lines;
  std::size_t next = 1;
  for (std::size_t i = 0; i < doc.constant_headers.size(); ++i) lines.headers.push_back(next++);
  for (const auto& item : doc.body) {
    lines.body.push_back(next++);
    std::vector<std::size_t> tiers;
    if (const auto* block = std::get_if<UtteranceBlock>(&item)) {
      for (std::size_t t = 0; t < block->tiers.size(); ++t) tiers.push_back(next++);
    }
    lines.tiers.push_back(std::move(tiers));
  }
  lines.end = next;
  return lines;
}

bool is_tier_code(std::string_view code) {
  return code.size() == 3 &&
         std::all_of(code.begin(), code.end(), [](char c) { return c >= 'a' && c <= 'z'; });
}

bool clean_text(std::string_view s) {
  return s.find('\n') == std::string_view::npos && s.find('\r') == std::string_view::npos &&
         trim(s).size() == s.size();
}

std::optional<std::string> token_problem(const Token& t) {
  auto has = [&](std::string_view chars) { return t.text.find_first_of(chars) != std::string::npos; };
  switch (t.kind) {
    case TokenKind::word:
      if (t.text.empty()) return "empty word";
      if (has(" \t\r\n<>[")) return "word '" + t.text + "' contains a reserved character";
      if (t.text == "#" || is_terminator_text(t.text)) return "word '" + t.text + "' reads as another token kind";
      break;
    case TokenKind::pause:
      if (t.text != "#") return "pause must be '#'";
      break;
    case TokenKind::terminator:
      if (!is_terminator_text(t.text)) return "terminator must be one of . ? !";
      break;
    case TokenKind::scope_open:
      if (t.text != "<") return "scope open must be '<'";
      break;
    case TokenKind::scope_close:
      if (t.text != ">") return "scope close must be '>'";
      break;
    case TokenKind::scope_marker: {
      if (!t.marker) return "marker token without a marker kind";
      if (t.payload) {
        if (!marker_allows_payload(*t.marker)) return "marker takes no payload";
        if (t.payload->empty() || !clean_text(*t.payload) ||
            t.payload->find_first_of("[]") != std::string::npos) {
          return "marker payload '" + *t.payload + "' is not writable";
        }
      } else if (marker_requires_payload(*t.marker)) {
        return "marker needs a payload";
      }
      if (t.text != marker_text(*t.marker, t.payload)) return "marker text does not match its kind";
      return std::nullopt;
    }
  }
  if (t.marker || t.payload) return "only markers carry a marker kind or payload";
  return std::nullopt;
}

void check_header(const Header& h, std::size_t line, std::vector<Diagnostic>& out) {
  if (h.name.empty() || !clean_text(h.name) || h.name.find(':') != std::string::npos) {
    out.push_back({Errc::BadHeader, line, "bad header name '" + h.name + "'"});
  }
  if (!clean_text(h.value)) {
    out.push_back({Errc::BadHeader, line, "header value of @" + h.name + " is not a single trimmed line"});
  }
  if (h.kind != (is_changeable_header(h.name) ? HeaderKind::changeable : HeaderKind::constant)) {
    out.push_back({Errc::BadHeader, line, "header kind of @" + h.name + " disagrees with the profile"});
  }
  if (h.name == "End") {
    out.push_back({Errc::BadHeader, line, "@End is not stored as a header"});
  }
}

std::vector<Diagnostic> check_doc(const TranscriptDoc& doc, const DocLines& lines) {
  std::vector<Diagnostic> out;

  if (doc.constant_headers.empty() || doc.constant_headers.front().name != "Begin") {
    out.push_back({Errc::MissingBegin, lines.headers.empty() ? 1 : lines.headers.front(),
                   "transcript must start with @Begin"});
  } else if (!doc.constant_headers.front().value.empty()) {
    out.push_back({Errc::BadHeader, lines.headers.front(), "@Begin takes no value"});
  }

  std::set<std::string> declared;
  for (std::size_t i = 0; i < doc.constant_headers.size(); ++i) {
    const auto& h = doc.constant_headers[i];
    check_header(h, lines.headers[i], out);
    if (i > 0 && h.name == "Begin") {
      out.push_back({Errc::BadHeader, lines.headers[i], "repeated @Begin"});
    }
    if (h.name != "Participants") continue;
    for (const auto& e : parse_participants_value(h.value)) {
      if (!ParticipantCode::is_valid(e.code)) {
        out.push_back({Errc::BadParticipantCode, lines.headers[i],
                       "participant code '" + e.code + "' is not three uppercase letters"});
      }
      if (!declared.insert(e.code).second) {
        out.push_back({Errc::DuplicateParticipant, lines.headers[i], "participant '" + e.code + "' declared twice"});
      }
    }
  }

  for (std::size_t b = 0; b < doc.body.size(); ++b) {
    const std::size_t line = lines.body[b];
    if (const auto* h = std::get_if<Header>(&doc.body[b])) {
      check_header(*h, line, out);
      if (b == 0) {
        out.push_back({Errc::MisplacedHeader, line, "the body must start with an utterance"});
      } else if (h->kind != HeaderKind::changeable) {
        out.push_back({Errc::MisplacedHeader, line,
                       "@" + h->name + " is a constant header and must precede the first utterance"});
      }
      if (h->name == "Begin") out.push_back({Errc::BadHeader, line, "@Begin inside the body"});
      continue;
    }
    const auto& block = std::get<UtteranceBlock>(doc.body[b]);
    const auto& u = block.mainline;
    if (!u.speaker.valid()) {
      out.push_back({Errc::BadParticipantCode, line,
                     "speaker '" + u.speaker.value + "' is not three uppercase letters"});
    }
    if (!declared.count(u.speaker.value)) {
      out.push_back({Errc::UnknownParticipant, line, "speaker '" + u.speaker.value + "' is not declared"});
    }
    if (u.tokens.empty()) {
      out.push_back({Errc::EmptyUtterance, line, "utterance has no tokens"});
    }
    bool tokens_ok = true;
    for (const auto& t : u.tokens) {
      if (auto problem = token_problem(t)) {
        tokens_ok = false;
        const auto rule = (t.kind == TokenKind::word && t.text.starts_with("[")) ? Errc::UnknownMarker
                                                                                  : Errc::BadToken;
        out.push_back({rule, line, *problem});
      }
    }
    if (tokens_ok && !u.tokens.empty()) {
      try {
        (void)extract_inline_groups(u);
      } catch (const Error& e) {
        out.push_back({Errc::UnbalancedScopes, line, e.what()});
      }
    }
    std::set<std::string> tier_codes;
    for (std::size_t t = 0; t < block.tiers.size(); ++t) {
      const auto& tier = block.tiers[t];
      const auto tline = lines.tiers[b][t];
      if (!is_tier_code(tier.code)) {
        out.push_back({Errc::BadTierCode, tline, "tier code '" + tier.code + "' is not three lowercase letters"});
      }
      if (!tier_codes.insert(tier.code).second) {
        out.push_back({Errc::DuplicateTier, tline, "tier %" + tier.code + " repeated in one block"});
      }
      if (!clean_text(tier.content)) {
        out.push_back({Errc::MalformedLine, tline, "tier content is not a single trimmed line"});
      }
    }
  }

  if (!doc.has_end) {
    out.push_back({Errc::MissingEnd, lines.end, "transcript must end with @End"});
  }
  return out;
}

void sort_by_line(std::vector<Diagnostic>& diags) {
  std::stable_sort(diags.begin(), diags.end(),
                   [](const Diagnostic& a, const Diagnostic& b) { return a.line < b.line; });
}

}  // namespace

std::vector<Diagnostic> validate(const TranscriptDoc& doc) {
  auto diags = check_doc(doc, canonical_lines(doc));
  sort_by_line(diags);
  return diags;
}

// ---------------------------------------------------------------------------
// Parser

namespace {

struct LogicalLine {
  char kind;  // '@', '*' or '%'
  std::string text;
  std::size_t line;
};

}  // namespace

ParseResult parse_transcript(std::string_view text, Mode mode) {
  ParseResult result;
  auto& diags = result.diagnostics;
  auto& doc = result.doc;

  // Physical lines -> logical lines with continuations folded in.
  std::vector<LogicalLine> logical;
  std::size_t line_count = 0;
  {
    std::size_t pos = 0;
    std::size_t number = 0;
    while (pos < text.size()) {
      auto nl = text.find('\n', pos);
      if (nl == std::string_view::npos) nl = text.size();
      auto raw = text.substr(pos, nl - pos);
      pos = nl + 1;
      ++number;
      if (!raw.empty() && raw.back() == '\r') raw.remove_suffix(1);
      if (trim(raw).empty()) {
        diags.push_back({Errc::MalformedLine, number, "blank line"});
        continue;
      }
      if (is_blank(raw.front())) {
        if (logical.empty()) {
          diags.push_back({Errc::MalformedLine, number, "continuation line with nothing to continue"});
        } else {
          logical.back().text += ' ';
          logical.back().text += trim(raw);
        }
        continue;
      }
      if (raw.front() != '@' && raw.front() != '*' && raw.front() != '%') {
        diags.push_back({Errc::MalformedLine, number, "line must start with @, *, % or whitespace"});
        continue;
      }
      logical.push_back({raw.front(), std::string(trim(raw.substr(1))), number});
    }
    line_count = std::max<std::size_t>(number, 1);
  }

  DocLines lines;
  lines.end = line_count;
  bool seen_mainline = false;
  bool end_seen = false;
  std::optional<std::size_t> block;  // body index of the block tiers attach to

  for (const auto& l : logical) {
    if (end_seen) {
      diags.push_back({Errc::ContentAfterEnd, l.line, "content after @End"});
    }
    const auto colon = l.text.find(':');
    if (l.kind == '@') {
      std::string name;
      std::string value;
      if (colon == std::string::npos) {
        name = l.text;
      } else {
        name = std::string(trim(std::string_view(l.text).substr(0, colon)));
        value = std::string(trim_left(std::string_view(l.text).substr(colon + 1)));
      }
      if (name.empty()) {
        diags.push_back({Errc::MalformedLine, l.line, "header without a name"});
        continue;
      }
      if (name == "End") {
        if (!value.empty()) diags.push_back({Errc::BadHeader, l.line, "@End takes no value"});
        if (!end_seen) lines.end = l.line;
        end_seen = true;
        doc.has_end = true;
        continue;
      }
      auto header = Header::make(std::move(name), std::move(value));
      if (!seen_mainline) {
        doc.constant_headers.push_back(std::move(header));
        lines.headers.push_back(l.line);
      } else {
        doc.body.emplace_back(std::move(header));
        lines.body.push_back(l.line);
        lines.tiers.emplace_back();
        block.reset();
      }
      continue;
    }

    if (colon == std::string::npos) {
      diags.push_back({Errc::MalformedLine, l.line, "missing ':' after the line label"});
      continue;
    }
    const auto label = l.text.substr(0, colon);
    const auto content = std::string(trim_left(std::string_view(l.text).substr(colon + 1)));

    if (l.kind == '*') {
      UtteranceBlock ub;
      ub.mainline.speaker = ParticipantCode{label};
      ub.mainline.tokens = tokenize_mainline(content, Mode::lenient, &diags, l.line);
      ub.mainline.raw_text = content;
      doc.body.emplace_back(std::move(ub));
      lines.body.push_back(l.line);
      lines.tiers.emplace_back();
      block = doc.body.size() - 1;
      seen_mainline = true;
    } else {
      if (!block) {
        diags.push_back({Errc::OrphanTier, l.line, "dependent tier %" + label + " has no mainline"});
        continue;
      }
      std::get<UtteranceBlock>(doc.body[*block]).tiers.push_back({label, content});
      lines.tiers[*block].push_back(l.line);
    }
  }
  if (!end_seen) lines.end = line_count;

  auto checks = check_doc(doc, lines);
  // Unknown markers were already reported by the tokenizer.
  for (auto& d : checks) {
    if (d.rule != Errc::UnknownMarker) diags.push_back(std::move(d));
  }
  sort_by_line(diags);

  if (mode == Mode::strict && has_errors(diags)) {
    const auto first = std::find_if(diags.begin(), diags.end(),
                                    [](const Diagnostic& d) { return d.severity == Severity::error; });
    throw Error(*first);
  }
  return result;
}

// ---------------------------------------------------------------------------
// Renderer

std::string render_chat(const TranscriptDoc& doc) {
  const auto diags = validate(doc);
  if (has_errors(diags)) {
    throw Error(Errc::InvalidDoc, format(diags.front()));
  }
  std::string out;
  auto header_line = [&](const Header& h) {
    out += '@';
    out += h.name;
    if (!h.value.empty()) {
      out += ":\t";
      out += h.value;
    }
    out += '\n';
  };
  for (const auto& h : doc.constant_headers) header_line(h);
  for (const auto& item : doc.body) {
    if (const auto* h = std::get_if<Header>(&item)) {
      header_line(*h);
      continue;
    }
    const auto& block = std::get<UtteranceBlock>(item);
    out += '*';
    out += block.mainline.speaker.value;
    out += ":\t";
    out += render_tokens(block.mainline.tokens);
    out += '\n';
    for (const auto& tier : block.tiers) {
      out += '%';
      out += tier.code;
      out += ":\t";
      out += tier.content;
      out += '\n';
    }
  }
  out += "@End\n";
  return out;
}

}  // namespace sla
