#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace mcpauth::util {

std::vector<std::string> split(std::string_view text, char sep);

template <typename It>
std::string join(It begin, It end, std::string_view sep) {
  std::string out;
  for (It it = begin; it != end; ++it) {
    if (it != begin) out += sep;
    out += *it;
  }
  return out;
}

inline bool starts_with(std::string_view s, std::string_view prefix) {
  return s.substr(0, prefix.size()) == prefix;
}
inline bool ends_with(std::string_view s, std::string_view suffix) {
  return s.size() >= suffix.size() && s.substr(s.size() - suffix.size()) == suffix;
}

std::string lower(std::string_view s);
std::string trim(std::string_view s);

/// Splits an identifier into lowercase words ("getApiKey" -> get, api, key).
std::vector<std::string> identifier_words(std::string_view ident);

std::string sha256_hex(std::string_view data);

/// Reads a whole file; throws ConfigError on failure.
std::string read_file(const std::string& path);

}  // namespace mcpauth::util
