#pragma once

// Minimal dotted key=value text format shared by scenario and dispersion files.
//
//   # comment
//   source.signal_nm = 1574.4
//   link.signal.segments[0].length_m = 5000
//
// Keys are unique; values are the trimmed remainder of the line (a trailing
// `# comment` is stripped). Every syntax problem is collected with its line and
// column before anything is thrown.

#include <charconv>
#include <cmath>
#include <cstdio>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "qsync/error.hpp"

namespace qsync::kv {

struct Entry {
  std::string key;
  std::string value;
  int line = 0;
  int column = 0;  // column of the value's first character
};

/// Aggregated diagnostics. `what()` lists every message, one per line.
class ParseErrors : public Error {
 public:
  ParseErrors(ErrorCategory c, std::vector<std::string> messages)
      : Error(c, join(messages)), messages_(std::move(messages)) {}
  const std::vector<std::string>& messages() const noexcept { return messages_; }

 private:
  static std::string join(const std::vector<std::string>& m) {
    std::string out;
    for (const auto& s : m) {
      if (!out.empty()) out += '\n';
      out += s;
    }
    return out;
  }
  std::vector<std::string> messages_;
};

inline std::string_view trim(std::string_view s) {
  const auto* ws = " \t\r";
  auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(ws);
  return s.substr(b, e - b + 1);
}

inline bool valid_key(std::string_view k) {
  if (k.empty()) return false;
  for (char c : k) {
    bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
              c == '_' || c == '.' || c == '[' || c == ']' || c == '-';
    if (!ok) return false;
  }
  return true;
}

inline std::vector<Entry> parse(std::string_view text) {
  std::vector<Entry> entries;
  std::vector<std::string> errors;
  std::set<std::string, std::less<>> seen;
  int line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto nl = text.find('\n', pos);
    std::string_view raw = text.substr(pos, nl == std::string_view::npos ? text.size() - pos : nl - pos);
    ++line_no;
    pos = (nl == std::string_view::npos) ? text.size() + 1 : nl + 1;

    auto hash = raw.find('#');
    std::string_view content = trim(hash == std::string_view::npos ? raw : raw.substr(0, hash));
    if (content.empty()) continue;
    auto eq = raw.find('=');
    if (eq == std::string_view::npos || (hash != std::string_view::npos && eq > hash)) {
      auto col = raw.find_first_not_of(" \t") + 1;
      errors.push_back("line " + std::to_string(line_no) + ", column " + std::to_string(col) +
                       ": expected 'key = value'");
      continue;
    }
    std::string_view key = trim(raw.substr(0, eq));
    std::string_view rest = raw.substr(eq + 1);
    if (hash != std::string_view::npos) rest = raw.substr(eq + 1, hash - eq - 1);
    std::string_view value = trim(rest);
    auto lead = rest.find_first_not_of(" \t");
    int value_col = static_cast<int>(eq + 2 + (lead == std::string_view::npos ? 0 : lead));
    if (!valid_key(key)) {
      errors.push_back("line " + std::to_string(line_no) + ", column " +
                       std::to_string(raw.find_first_not_of(" \t") + 1) + ": invalid key '" +
                       std::string(key) + "'");
      continue;
    }
    if (value.empty()) {
      errors.push_back("line " + std::to_string(line_no) + ", column " + std::to_string(eq + 2) +
                       ": missing value for '" + std::string(key) + "'");
      continue;
    }
    if (!seen.insert(std::string(key)).second) {
      errors.push_back("line " + std::to_string(line_no) + ", column 1: duplicate key '" +
                       std::string(key) + "'");
      continue;
    }
    entries.push_back(Entry{std::string(key), std::string(value), line_no, value_col});
  }
  if (!errors.empty()) throw ParseErrors(ErrorCategory::parse, std::move(errors));
  return entries;
}

/// Typed access over parsed entries with error collection and unknown-key detection.
class Reader {
 public:
  explicit Reader(std::vector<Entry> entries) : entries_(std::move(entries)) {
    for (std::size_t i = 0; i < entries_.size(); ++i) index_[entries_[i].key] = i;
  }

  bool has(const std::string& key) const { return index_.count(key) != 0; }

  /// Keys starting with `prefix`, in file order.
  std::vector<std::string> keys_with_prefix(std::string_view prefix) const {
    std::vector<std::string> out;
    for (const auto& e : entries_)
      if (std::string_view(e.key).substr(0, prefix.size()) == prefix) out.push_back(e.key);
    return out;
  }

  std::optional<double> number(const std::string& key) {
    const Entry* e = find(key);
    if (!e) return std::nullopt;
    double v = 0.0;
    const char* b = e->value.data();
    const char* end = b + e->value.size();
    auto [p, ec] = std::from_chars(b, end, v);
    if (ec != std::errc() || p != end || !std::isfinite(v)) {
      error_at(*e, "expected a finite number, got '" + e->value + "'");
      return std::nullopt;
    }
    return v;
  }

  std::optional<long long> integer(const std::string& key) {
    const Entry* e = find(key);
    if (!e) return std::nullopt;
    long long v = 0;
    const char* b = e->value.data();
    const char* end = b + e->value.size();
    auto [p, ec] = std::from_chars(b, end, v);
    if (ec != std::errc() || p != end) {
      error_at(*e, "expected an integer, got '" + e->value + "'");
      return std::nullopt;
    }
    return v;
  }

  std::optional<unsigned long long> unsigned_integer(const std::string& key) {
    const Entry* e = find(key);
    if (!e) return std::nullopt;
    unsigned long long v = 0;
    const char* b = e->value.data();
    const char* end = b + e->value.size();
    auto [p, ec] = std::from_chars(b, end, v);
    if (ec != std::errc() || p != end) {
      error_at(*e, "expected a non-negative integer, got '" + e->value + "'");
      return std::nullopt;
    }
    return v;
  }

  std::optional<std::string> text(const std::string& key) {
    const Entry* e = find(key);
    if (!e) return std::nullopt;
    return e->value;
  }

  std::optional<bool> boolean(const std::string& key) {
    const Entry* e = find(key);
    if (!e) return std::nullopt;
    if (e->value == "true") return true;
    if (e->value == "false") return false;
    error_at(*e, "expected true or false, got '" + e->value + "'");
    return std::nullopt;
  }

  void error(const std::string& message) { errors_.push_back(message); }

  void error_at(const std::string& key, const std::string& message) {
    if (const Entry* e = peek(key))
      error_at(*e, message);
    else
      errors_.push_back(key + ": " + message);
  }

  /// Records every entry that no accessor consumed.
  void reject_unknown() {
    for (std::size_t i = 0; i < entries_.size(); ++i)
      if (!used_.count(i)) error_at(entries_[i], "unknown key");
  }

  std::vector<std::string>& errors() { return errors_; }

 private:
  const Entry* peek(const std::string& key) const {
    auto it = index_.find(key);
    return it == index_.end() ? nullptr : &entries_[it->second];
  }
  const Entry* find(const std::string& key) {
    auto it = index_.find(key);
    if (it == index_.end()) return nullptr;
    used_.insert(it->second);
    return &entries_[it->second];
  }
  void error_at(const Entry& e, const std::string& message) {
    errors_.push_back(e.key + " (line " + std::to_string(e.line) + ", column " +
                      std::to_string(e.column) + "): " + message);
  }

  std::vector<Entry> entries_;
  std::map<std::string, std::size_t, std::less<>> index_;
  std::set<std::size_t> used_;
  std::vector<std::string> errors_;
};

/// Shortest round-trippable decimal representation.
inline std::string format_exact(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

}  // namespace qsync::kv
