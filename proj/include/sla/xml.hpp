#pragma once

#include <cstddef>
#include <initializer_list>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace sla::xml {

/// Minimal element tree. Attributes keep insertion order, which is the order
/// the writer emits them in.
struct Element {
  std::string name;
  std::vector<std::pair<std::string, std::string>> attrs;
  std::vector<Element> children;
  std::string text;
  std::size_t line = 0;

  explicit Element(std::string n = {}) : name(std::move(n)) {}

  Element& attr(std::string key, std::string value) {
    attrs.emplace_back(std::move(key), std::move(value));
    return *this;
  }
  Element& add(Element child) {
    children.push_back(std::move(child));
    return children.back();
  }
  const std::string* find_attr(std::string_view key) const;
};

/// Canonical bytes: declaration, LF line ends, two-space indent, attributes
/// in stored order, no insignificant whitespace. A childless element without
/// text is self-closed.
std::string write(const Element& root);

/// Throws Error(MalformedXml) on anything expat rejects. Whitespace-only text
/// in elements that have child elements is discarded.
Element parse(std::string_view bytes);

/// Helpers for schema checks; all throw Error(SchemaViolation).
const std::string& required_attr(const Element& e, std::string_view key);
std::optional<std::string> optional_attr(const Element& e, std::string_view key);
void allow_attrs(const Element& e, std::initializer_list<std::string_view> keys);
void expect_name(const Element& e, std::string_view name);
void expect_no_children(const Element& e);
std::size_t index_attr(const Element& e, std::string_view key);

}  // namespace sla::xml
