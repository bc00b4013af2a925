#include "dualreach/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

namespace dualreach {
namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::optional<double> to_double(std::string_view s) {
  s = trim(s);
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) return std::nullopt;
  return value;
}

std::vector<std::string_view> split_list(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && (s[i] == ' ' || s[i] == '\t' || s[i] == ',')) ++i;
    std::size_t j = i;
    while (j < s.size() && s[j] != ' ' && s[j] != '\t' && s[j] != ',') ++j;
    if (j > i) out.push_back(s.substr(i, j - i));
    i = j;
  }
  return out;
}

}  // namespace

bool ConfigSection::has(std::string_view key) const {
  return entries_.find(key) != entries_.end();
}

void ConfigSection::set(std::string key, std::string value) {
  entries_[std::move(key)] = std::move(value);
}

void ConfigSection::fail(std::string_view key, std::string_view what) const {
  std::ostringstream msg;
  msg << "[" << name_ << "] (line " << line_ << ") key '" << key << "': " << what;
  throw ConfigError(msg.str());
}

std::string ConfigSection::get_string(std::string_view key) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) fail(key, "missing");
  return it->second;
}

std::string ConfigSection::get_string(std::string_view key,
                                      std::string_view fallback) const {
  auto it = entries_.find(key);
  return it == entries_.end() ? std::string(fallback) : it->second;
}

double ConfigSection::get_double(std::string_view key) const {
  const auto value = to_double(get_string(key));
  if (!value) fail(key, "not a number");
  return *value;
}

double ConfigSection::get_double(std::string_view key, double fallback) const {
  return has(key) ? get_double(key) : fallback;
}

long ConfigSection::get_int(std::string_view key) const {
  const std::string text{trim(get_string(key))};
  long value = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size() || text.empty())
    fail(key, "not an integer");
  return value;
}

long ConfigSection::get_int(std::string_view key, long fallback) const {
  return has(key) ? get_int(key) : fallback;
}

bool ConfigSection::get_bool(std::string_view key, bool fallback) const {
  if (!has(key)) return fallback;
  const std::string v{trim(get_string(key))};
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  fail(key, "not a boolean");
}

std::vector<double> ConfigSection::get_doubles(std::string_view key) const {
  const std::string text = get_string(key);
  std::vector<double> out;
  for (auto token : split_list(text)) {
    const auto value = to_double(token);
    if (!value) fail(key, "list element '" + std::string(token) + "' is not a number");
    out.push_back(*value);
  }
  return out;
}

std::vector<double> ConfigSection::get_doubles(std::string_view key,
                                               std::vector<double> fallback) const {
  return has(key) ? get_doubles(key) : fallback;
}

std::vector<long> ConfigSection::get_ints(std::string_view key) const {
  std::vector<long> out;
  for (double v : get_doubles(key)) {
    if (v != static_cast<double>(static_cast<long>(v))) fail(key, "list element is not an integer");
    out.push_back(static_cast<long>(v));
  }
  return out;
}

Config Config::parse(std::string_view text, std::string source) {
  Config cfg;
  cfg.source_ = std::move(source);
  cfg.sections_.emplace_back("", 0);
  std::istringstream in{std::string(text)};
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    std::string_view line = raw;
    if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw ConfigError(cfg.source_ + ":" + std::to_string(line_no) + ": unterminated section header");
      cfg.sections_.emplace_back(std::string(trim(line.substr(1, line.size() - 2))), line_no);
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string_view::npos)
      throw ConfigError(cfg.source_ + ":" + std::to_string(line_no) + ": expected key = value");
    const auto key = trim(line.substr(0, eq));
    if (key.empty())
      throw ConfigError(cfg.source_ + ":" + std::to_string(line_no) + ": empty key");
    cfg.sections_.back().set(std::string(key), std::string(trim(line.substr(eq + 1))));
  }
  return cfg;
}

Config Config::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse(buf.str(), path.string());
}

std::vector<const ConfigSection*> Config::sections(std::string_view name) const {
  std::vector<const ConfigSection*> out;
  for (const auto& s : sections_)
    if (s.name() == name && !(s.name().empty() && s.entries().empty())) out.push_back(&s);
  return out;
}

const ConfigSection* Config::section(std::string_view name) const {
  auto found = sections(name);
  if (found.empty()) return nullptr;
  if (found.size() > 1)
    throw ConfigError(source_ + ": section [" + std::string(name) + "] appears more than once");
  return found.front();
}

const ConfigSection& Config::section_or_empty(std::string_view name) const {
  const auto* s = section(name);
  return s ? *s : empty_;
}

void Config::merge(const Config& other) {
  for (const auto& s : other.sections_)
    if (!(s.name().empty() && s.entries().empty())) sections_.push_back(s);
}

}  // namespace dualreach
