#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace vl::toml {

struct Value;
using Array = std::vector<Value>;

struct Value {
  std::variant<bool, std::int64_t, double, std::string, Array> data;
  int line = 0;
};

/// Dotted key ("section.key") -> value.
using Table = std::map<std::string, Value>;

/// The subset used by run configs: [section] headers, bare keys, basic
/// strings, integers, floats, booleans, single-line arrays and # comments.
/// Throws Error(config) with the line number on anything else.
Table parse(std::string_view text);

}  // namespace vl::toml
