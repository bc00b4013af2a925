// Flat key=value configuration files with [section] headers.
//
//   # comment
//   [env]
//   mode = no-obstacles
//   dt = 0.05
//
//   [joint]          # sections may repeat; each occurrence is one record
//   axis = 0 -1 0
//
// Keys before the first header belong to the unnamed section "".
#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace dualreach {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigSection {
 public:
  ConfigSection(std::string name, int line) : name_(std::move(name)), line_(line) {}

  const std::string& name() const { return name_; }
  int line() const { return line_; }

  bool has(std::string_view key) const;
  void set(std::string key, std::string value);

  std::string get_string(std::string_view key) const;
  std::string get_string(std::string_view key, std::string_view fallback) const;
  double get_double(std::string_view key) const;
  double get_double(std::string_view key, double fallback) const;
  long get_int(std::string_view key) const;
  long get_int(std::string_view key, long fallback) const;
  bool get_bool(std::string_view key, bool fallback) const;
  // Whitespace- or comma-separated list of numbers.
  std::vector<double> get_doubles(std::string_view key) const;
  std::vector<double> get_doubles(std::string_view key,
                                  std::vector<double> fallback) const;
  std::vector<long> get_ints(std::string_view key) const;

  const std::map<std::string, std::string, std::less<>>& entries() const {
    return entries_;
  }

 private:
  [[noreturn]] void fail(std::string_view key, std::string_view what) const;

  std::string name_;
  int line_;
  std::map<std::string, std::string, std::less<>> entries_;
};

class Config {
 public:
  static Config parse(std::string_view text, std::string source = "<string>");
  static Config load(const std::filesystem::path& path);

  // All sections with the given name, in file order.
  std::vector<const ConfigSection*> sections(std::string_view name) const;
  // The unique section with this name; nullptr if absent, error if repeated.
  const ConfigSection* section(std::string_view name) const;
  // Like section() but an empty section stands in for a missing one.
  const ConfigSection& section_or_empty(std::string_view name) const;

  const std::string& source() const { return source_; }
  const std::vector<ConfigSection>& all() const { return sections_; }

  // Appends the sections of `other` (used to layer a scene file onto a config).
  void merge(const Config& other);

 private:
  std::string source_;
  std::vector<ConfigSection> sections_;
  ConfigSection empty_{"", 0};
};

}  // namespace dualreach
