#include "softhand/config.hpp"

#include <algorithm>
#include <cerrno>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace softhand::config {

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

std::string strip_comment(std::string_view line) {
  const auto hash = line.find('#');
  return std::string(hash == std::string_view::npos ? line : line.substr(0, hash));
}

}  // namespace

ConfigError::ConfigError(std::string source, int line, const std::string& message)
    : std::runtime_error(source + ":" + std::to_string(line) + ": " + message),
      source_(std::move(source)),
      line_(line) {}

const Entry* Section::find(std::string_view key) const {
  for (const auto& e : entries)
    if (e.key == key) return &e;
  return nullptr;
}

KeyValueFile KeyValueFile::parse(std::string_view text, std::string source,
                                 const std::vector<std::string>& verbatim) {
  KeyValueFile file;
  file.source_ = std::move(source);
  file.sections_.push_back(Section{"", 0, {}});

  int line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto end = text.find('\n', pos);
    const auto raw = text.substr(pos, end == std::string_view::npos ? std::string_view::npos : end - pos);
    ++line_no;
    pos = end == std::string_view::npos ? text.size() + 1 : end + 1;

    const std::string stripped = strip_comment(raw);
    const auto line = trim(stripped);
    if (line.empty()) continue;

    if (line.front() == '[') {
      if (line.back() != ']') file.fail(line_no, "unterminated section header");
      const auto name = trim(line.substr(1, line.size() - 2));
      if (name.empty()) file.fail(line_no, "empty section name");
      for (const auto& s : file.sections_)
        if (s.name == name) file.fail(line_no, "duplicate section [" + std::string(name) + "]");
      file.sections_.push_back(Section{std::string(name), line_no, {}});
      continue;
    }

    auto& current = file.sections_.back();
    if (std::find(verbatim.begin(), verbatim.end(), current.name) != verbatim.end()) {
      current.entries.push_back(Entry{"", std::string(line), line_no});
      continue;
    }

    const auto eq = line.find('=');
    if (eq == std::string_view::npos) file.fail(line_no, "expected 'key = value'");
    const auto key = trim(line.substr(0, eq));
    const auto value = trim(line.substr(eq + 1));
    if (key.empty()) file.fail(line_no, "missing key before '='");
    auto& section = file.sections_.back();
    if (section.find(key) != nullptr) file.fail(line_no, "duplicate key '" + std::string(key) + "'");
    section.entries.push_back(Entry{std::string(key), std::string(value), line_no});
  }
  return file;
}

KeyValueFile KeyValueFile::load(const std::filesystem::path& path, const std::vector<std::string>& verbatim) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError(path.string(), 0, "cannot open file");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse(buf.str(), path.string(), verbatim);
}

const Section* KeyValueFile::section(std::string_view name) const {
  for (const auto& s : sections_)
    if (s.name == name) return &s;
  return nullptr;
}

std::vector<const Section*> KeyValueFile::sections_with_prefix(std::string_view prefix) const {
  std::vector<const Section*> out;
  for (const auto& s : sections_)
    if (s.name.size() > prefix.size() && s.name.compare(0, prefix.size(), prefix) == 0) out.push_back(&s);
  return out;
}

void KeyValueFile::fail(int line, const std::string& message) const {
  throw ConfigError(source_, line, message);
}

std::string KeyValueFile::get_string(const Section& s, std::string_view key) const {
  const Entry* e = s.find(key);
  if (e == nullptr) fail(s.line, "section [" + s.name + "] is missing key '" + std::string(key) + "'");
  return e->value;
}

std::string KeyValueFile::get_string(const Section& s, std::string_view key, std::string fallback) const {
  const Entry* e = s.find(key);
  return e == nullptr ? fallback : e->value;
}

double KeyValueFile::to_double(const Entry& e) const {
  const auto values = to_doubles(e);
  if (values.size() != 1) fail(e.line, "'" + e.key + "' expects a single number");
  return values.front();
}

std::vector<double> KeyValueFile::to_doubles(const Entry& e) const {
  std::vector<double> out;
  for (const auto& word : split_words(e.value)) {
    errno = 0;
    char* end = nullptr;
    const double v = std::strtod(word.c_str(), &end);
    if (end == word.c_str() || *end != '\0' || errno == ERANGE)
      fail(e.line, "'" + e.key + "': '" + word + "' is not a number");
    out.push_back(v);
  }
  return out;
}

double KeyValueFile::get_double(const Section& s, std::string_view key) const {
  const Entry* e = s.find(key);
  if (e == nullptr) fail(s.line, "section [" + s.name + "] is missing key '" + std::string(key) + "'");
  return to_double(*e);
}

double KeyValueFile::get_double(const Section& s, std::string_view key, double fallback) const {
  const Entry* e = s.find(key);
  return e == nullptr ? fallback : to_double(*e);
}

long long KeyValueFile::get_int(const Section& s, std::string_view key) const {
  const Entry* e = s.find(key);
  if (e == nullptr) fail(s.line, "section [" + s.name + "] is missing key '" + std::string(key) + "'");
  errno = 0;
  char* end = nullptr;
  const long long v = std::strtoll(e->value.c_str(), &end, 10);
  if (e->value.empty() || *end != '\0' || errno == ERANGE)
    fail(e->line, "'" + e->key + "' expects an integer");
  return v;
}

long long KeyValueFile::get_int(const Section& s, std::string_view key, long long fallback) const {
  return s.find(key) == nullptr ? fallback : get_int(s, key);
}

std::vector<double> KeyValueFile::get_doubles(const Section& s, std::string_view key, std::size_t count) const {
  const Entry* e = s.find(key);
  if (e == nullptr) fail(s.line, "section [" + s.name + "] is missing key '" + std::string(key) + "'");
  auto values = to_doubles(*e);
  if (values.size() != count)
    fail(e->line, "'" + e->key + "' expects " + std::to_string(count) + " numbers, got " +
                      std::to_string(values.size()));
  return values;
}

std::vector<std::string> split_words(std::string_view text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && (text[i] == ' ' || text[i] == '\t' || text[i] == '\r')) ++i;
    const std::size_t start = i;
    while (i < text.size() && text[i] != ' ' && text[i] != '\t' && text[i] != '\r') ++i;
    if (i > start) out.emplace_back(text.substr(start, i - start));
  }
  return out;
}

std::filesystem::path resolve_path(const std::filesystem::path& path, const std::filesystem::path& base) {
  if (path.is_absolute()) return path;
  if (const char* root = std::getenv("SOFTHAND_CONFIG_ROOT"); root != nullptr && *root != '\0') {
    const auto candidate = std::filesystem::path(root) / path;
    if (std::filesystem::exists(candidate)) return candidate;
  }
  if (!base.empty()) {
    const auto candidate = base / path;
    if (std::filesystem::exists(candidate)) return candidate;
  }
  return path;
}

}  // namespace softhand::config
