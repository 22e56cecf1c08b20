#include "sla/xml.hpp"

#include <expat.h>

#include <algorithm>
#include <charconv>
#include <memory>

#include "sla/error.hpp"

namespace sla::xml {

const std::string* Element::find_attr(std::string_view key) const {
  for (const auto& [k, v] : attrs) {
    if (k == key) return &v;
  }
  return nullptr;
}

namespace {

void escape(std::string& out, std::string_view s, bool attribute) {
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"':
        if (attribute) out += "&quot;";
        else out += c;
        break;
      // Attribute-value normalization would turn these into spaces.
      case '\t':
        if (attribute) out += "&#9;";
        else out += c;
        break;
      case '\n': out += "&#10;"; break;
      case '\r': out += "&#13;"; break;
      default: out += c;
    }
  }
}

void write_element(std::string& out, const Element& e, std::size_t depth) {
  out.append(depth * 2, ' ');
  out += '<';
  out += e.name;
  for (const auto& [k, v] : e.attrs) {
    out += ' ';
    out += k;
    out += "=\"";
    escape(out, v, true);
    out += '"';
  }
  if (e.children.empty() && e.text.empty()) {
    out += "/>\n";
    return;
  }
  out += '>';
  if (e.children.empty()) {
    escape(out, e.text, false);
  } else {
    out += '\n';
    for (const auto& child : e.children) write_element(out, child, depth + 1);
    out.append(depth * 2, ' ');
  }
  out += "</";
  out += e.name;
  out += ">\n";
}

struct ParseState {
  XML_Parser parser = nullptr;
  std::vector<Element> stack;
  std::optional<Element> root;
};

void XMLCALL on_start(void* user, const XML_Char* name, const XML_Char** atts) {
  auto* st = static_cast<ParseState*>(user);
  Element e(name);
  e.line = XML_GetCurrentLineNumber(st->parser);
  for (std::size_t i = 0; atts[i]; i += 2) e.attrs.emplace_back(atts[i], atts[i + 1]);
  st->stack.push_back(std::move(e));
}

bool whitespace_only(const std::string& s) {
  return std::all_of(s.begin(), s.end(), [](char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r'; });
}

void XMLCALL on_end(void* user, const XML_Char*) {
  auto* st = static_cast<ParseState*>(user);
  Element e = std::move(st->stack.back());
  st->stack.pop_back();
  if (!e.children.empty() && whitespace_only(e.text)) e.text.clear();
  if (st->stack.empty()) {
    st->root = std::move(e);
  } else {
    st->stack.back().children.push_back(std::move(e));
  }
}

void XMLCALL on_text(void* user, const XML_Char* s, int len) {
  auto* st = static_cast<ParseState*>(user);
  if (!st->stack.empty()) st->stack.back().text.append(s, static_cast<std::size_t>(len));
}

}  // namespace

std::string write(const Element& root) {
  std::string out = "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  write_element(out, root, 0);
  return out;
}

Element parse(std::string_view bytes) {
  std::unique_ptr<XML_ParserStruct, decltype(&XML_ParserFree)> parser(XML_ParserCreate("UTF-8"),
                                                                        &XML_ParserFree);
  if (!parser) throw Error(Errc::Io, "cannot allocate XML parser");
  ParseState st;
  st.parser = parser.get();
  XML_SetUserData(parser.get(), &st);
  XML_SetElementHandler(parser.get(), on_start, on_end);
  XML_SetCharacterDataHandler(parser.get(), on_text);
  if (XML_Parse(parser.get(), bytes.data(), static_cast<int>(bytes.size()), XML_TRUE) == XML_STATUS_ERROR) {
    throw Error(Errc::MalformedXml, XML_ErrorString(XML_GetErrorCode(parser.get())),
                XML_GetCurrentLineNumber(parser.get()));
  }
  if (!st.root) throw Error(Errc::MalformedXml, "no document element");
  return std::move(*st.root);
}

const std::string& required_attr(const Element& e, std::string_view key) {
  if (const auto* v = e.find_attr(key)) return *v;
  throw Error(Errc::SchemaViolation, "<" + e.name + "> lacks attribute '" + std::string(key) + "'", e.line);
}

std::optional<std::string> optional_attr(const Element& e, std::string_view key) {
  if (const auto* v = e.find_attr(key)) return *v;
  return std::nullopt;
}

void allow_attrs(const Element& e, std::initializer_list<std::string_view> keys) {
  for (const auto& [k, v] : e.attrs) {
    if (std::find(keys.begin(), keys.end(), k) == keys.end()) {
      throw Error(Errc::SchemaViolation, "<" + e.name + "> has unexpected attribute '" + k + "'", e.line);
    }
  }
}

void expect_name(const Element& e, std::string_view name) {
  if (e.name != name) {
    throw Error(Errc::SchemaViolation, "expected <" + std::string(name) + ">, found <" + e.name + ">", e.line);
  }
}

void expect_no_children(const Element& e) {
  if (!e.children.empty()) {
    throw Error(Errc::SchemaViolation, "<" + e.name + "> must not have child elements", e.line);
  }
}

std::size_t index_attr(const Element& e, std::string_view key) {
  const auto& v = required_attr(e, key);
  std::size_t out = 0;
  const auto* end = v.data() + v.size();
  const auto [ptr, ec] = std::from_chars(v.data(), end, out);
  if (v.empty() || ec != std::errc{} || ptr != end) {
    throw Error(Errc::SchemaViolation,
                "attribute '" + std::string(key) + "' of <" + e.name + "> is not a non-negative integer", e.line);
  }
  return out;
}

}  // namespace sla::xml
