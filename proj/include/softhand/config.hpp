// Plain-text key/value configuration files.
//
//   # comment
//   top_level_key = value
//   [section.name]
//   key = value with spaces
//
// Sections named in `verbatim` keep each line whole: the entry key is empty
// and the value holds the trimmed line.
//
// Every entry remembers its line so callers can report line-level errors.

#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace softhand::config {

class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string source, int line, const std::string& message);

  const std::string& source() const { return source_; }
  int line() const { return line_; }

 private:
  std::string source_;
  int line_;
};

struct Entry {
  std::string key;
  std::string value;
  int line = 0;
};

struct Section {
  std::string name;
  int line = 0;
  std::vector<Entry> entries;

  const Entry* find(std::string_view key) const;
};

class KeyValueFile {
 public:
  static KeyValueFile parse(std::string_view text, std::string source = "<memory>",
                            const std::vector<std::string>& verbatim = {});
  static KeyValueFile load(const std::filesystem::path& path, const std::vector<std::string>& verbatim = {});

  const std::string& source() const { return source_; }
  const std::vector<Section>& sections() const { return sections_; }

  /// The unnamed section holds entries that precede the first header.
  const Section* section(std::string_view name) const;
  std::vector<const Section*> sections_with_prefix(std::string_view prefix) const;

  [[noreturn]] void fail(int line, const std::string& message) const;

  // Typed accessors. All of them throw ConfigError pointing at the entry.
  std::string get_string(const Section& s, std::string_view key) const;
  std::string get_string(const Section& s, std::string_view key, std::string fallback) const;
  double get_double(const Section& s, std::string_view key) const;
  double get_double(const Section& s, std::string_view key, double fallback) const;
  long long get_int(const Section& s, std::string_view key) const;
  long long get_int(const Section& s, std::string_view key, long long fallback) const;
  std::vector<double> get_doubles(const Section& s, std::string_view key, std::size_t count) const;

  double to_double(const Entry& e) const;
  std::vector<double> to_doubles(const Entry& e) const;

 private:
  std::string source_;
  std::vector<Section> sections_;
};

/// Splits on ASCII whitespace.
std::vector<std::string> split_words(std::string_view text);

/// Relative paths are tried against $SOFTHAND_CONFIG_ROOT first, then against
/// `base` (usually the directory of the referencing file).
std::filesystem::path resolve_path(const std::filesystem::path& path,
                                   const std::filesystem::path& base = {});

}  // namespace softhand::config
