#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include <yaml-cpp/yaml.h>

namespace mash::pipeline {

/// YAML run configuration addressed by dotted keys ("sft.lr"). Overrides
/// from the command line replace file values.
class Config {
 public:
  Config() : root_(YAML::NodeType::Map) {}

  /// Throws ConfigError on unreadable or malformed YAML.
  static Config load(const std::filesystem::path& path);
  static Config parse(const std::string& text);

  /// Sets a scalar; the value is parsed as YAML ("3", "true", "1e-3").
  void set(const std::string& key, const std::string& value);
  [[nodiscard]] bool has(const std::string& key) const;

  template <typename T>
  [[nodiscard]] T get(const std::string& key, const T& fallback) const {
    auto n = find(key);
    return n ? convert<T>(key, *n) : fallback;
  }

  /// Throws ConfigError naming the key when it is absent.
  template <typename T>
  [[nodiscard]] T require(const std::string& key) const {
    auto n = find(key);
    if (!n) {
      missing(key);
    }
    return convert<T>(key, *n);
  }

  /// Block-style YAML dump with keys in file order.
  [[nodiscard]] std::string dump() const;

 private:
  [[nodiscard]] std::optional<YAML::Node> find(const std::string& key) const;
  [[noreturn]] static void missing(const std::string& key);
  [[noreturn]] static void bad_value(const std::string& key, const std::string& what);

  template <typename T>
  static T convert(const std::string& key, const YAML::Node& n) {
    try {
      return n.as<T>();
    } catch (const YAML::Exception& e) {
      bad_value(key, e.what());
    }
  }

  YAML::Node root_;
};

}  // namespace mash::pipeline
