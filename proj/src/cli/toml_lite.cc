#include "vl/cli/toml_lite.h"

#include <cctype>
#include <charconv>

#include "vl/common/error.h"

namespace vl::toml {

namespace {

class Parser {
 public:
  Parser(std::string_view line, int line_no) : s_(line), line_(line_no) {}

  [[noreturn]] void fail(const std::string& what) const {
    throw Error(ErrorCode::config, "line " + std::to_string(line_) + ": " + what);
  }

  void skip_space() {
    while (pos_ < s_.size() && (s_[pos_] == ' ' || s_[pos_] == '\t')) ++pos_;
  }

  bool at_end_or_comment() {
    skip_space();
    return pos_ >= s_.size() || s_[pos_] == '#';
  }

  std::string key() {
    skip_space();
    const std::size_t start = pos_;
    while (pos_ < s_.size() && (std::isalnum(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '_' || s_[pos_] == '-')) {
      ++pos_;
    }
    if (pos_ == start) fail("expected a key");
    return std::string(s_.substr(start, pos_ - start));
  }

  void expect(char c) {
    skip_space();
    if (pos_ >= s_.size() || s_[pos_] != c) fail(std::string("expected '") + c + "'");
    ++pos_;
  }

  Value value() {
    skip_space();
    if (pos_ >= s_.size()) fail("missing value");
    Value v;
    v.line = line_;
    const char c = s_[pos_];
    if (c == '"') {
      v.data = string();
    } else if (c == '[') {
      v.data = array();
    } else if (s_.substr(pos_, 4) == "true") {
      pos_ += 4;
      v.data = true;
    } else if (s_.substr(pos_, 5) == "false") {
      pos_ += 5;
      v.data = false;
    } else {
      v.data = number(v);
    }
    return v;
  }

 private:
  std::string_view s_;
  std::size_t pos_ = 0;
  int line_;

  std::string string() {
    ++pos_;
    std::string out;
    while (pos_ < s_.size() && s_[pos_] != '"') {
      char c = s_[pos_++];
      if (c == '\\') {
        if (pos_ >= s_.size()) fail("unterminated escape");
        switch (s_[pos_++]) {
          case '"': c = '"'; break;
          case '\\': c = '\\'; break;
          case 'n': c = '\n'; break;
          case 't': c = '\t'; break;
          default: fail("unsupported escape");
        }
      }
      out += c;
    }
    if (pos_ >= s_.size()) fail("unterminated string");
    ++pos_;
    return out;
  }

  Array array() {
    ++pos_;
    Array out;
    skip_space();
    if (pos_ < s_.size() && s_[pos_] == ']') {
      ++pos_;
      return out;
    }
    for (;;) {
      out.push_back(value());
      skip_space();
      if (pos_ >= s_.size()) fail("unterminated array");
      if (s_[pos_] == ',') {
        ++pos_;
        skip_space();
        if (pos_ < s_.size() && s_[pos_] == ']') {
          ++pos_;
          return out;
        }
        continue;
      }
      if (s_[pos_] == ']') {
        ++pos_;
        return out;
      }
      fail("expected ',' or ']'");
    }
  }

  std::variant<bool, std::int64_t, double, std::string, Array> number(const Value&) {
    const std::size_t start = pos_;
    while (pos_ < s_.size() && (std::isalnum(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '+' ||
                                s_[pos_] == '-' || s_[pos_] == '.' || s_[pos_] == '_')) {
      ++pos_;
    }
    std::string text;
    for (const char c : s_.substr(start, pos_ - start)) {
      if (c != '_') text += c;
    }
    if (text.empty()) fail("expected a value");
    const char* first = text.data() + (text[0] == '+' ? 1 : 0);
    const char* last = text.data() + text.size();
    const bool is_float = text.find_first_of(".eE") != std::string::npos;
    if (!is_float) {
      std::int64_t i = 0;
      const auto r = std::from_chars(first, last, i);
      if (r.ec == std::errc() && r.ptr == last) return i;
    } else {
      double d = 0;
      const auto r = std::from_chars(first, last, d);
      if (r.ec == std::errc() && r.ptr == last) return d;
    }
    fail("invalid value '" + text + "'");
  }
};

}  // namespace

Table parse(std::string_view text) {
  Table table;
  std::string section;
  int line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t end = std::min(text.find('\n', pos), text.size());
    std::string_view line = text.substr(pos, end - pos);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    pos = end + 1;
    ++line_no;

    Parser p(line, line_no);
    if (p.at_end_or_comment()) continue;
    p.skip_space();
    if (line.find_first_not_of(" \t") != std::string_view::npos && line[line.find_first_not_of(" \t")] == '[') {
      p.expect('[');
      section = p.key();
      p.expect(']');
      if (!p.at_end_or_comment()) p.fail("trailing characters after section header");
      continue;
    }
    const std::string key = p.key();
    p.expect('=');
    Value v = p.value();
    if (!p.at_end_or_comment()) p.fail("trailing characters after value");
    const std::string full = section.empty() ? key : section + "." + key;
    if (!table.emplace(full, std::move(v)).second) p.fail("duplicate key '" + full + "'");
  }
  return table;
}

}  // namespace vl::toml
