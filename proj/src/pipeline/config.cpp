#include "mash/pipeline/config.hpp"

#include <sstream>
#include <vector>

#include "mash/common.hpp"

namespace mash::pipeline {
namespace {

std::vector<std::string> split_key(const std::string& key) {
  std::vector<std::string> parts;
  std::stringstream ss(key);
  std::string part;
  while (std::getline(ss, part, '.')) {
    if (part.empty()) {
      throw ConfigError("malformed config key '" + key + "'");
    }
    parts.push_back(part);
  }
  if (parts.empty()) {
    throw ConfigError("empty config key");
  }
  return parts;
}

}  // namespace

Config Config::load(const std::filesystem::path& path) {
  try {
    Config c;
    c.root_ = YAML::LoadFile(path.string());
    if (c.root_.IsNull()) {
      c.root_ = YAML::Node(YAML::NodeType::Map);
    }
    if (!c.root_.IsMap()) {
      throw ConfigError("config " + path.string() + ": top level must be a mapping");
    }
    return c;
  } catch (const YAML::BadFile&) {
    throw ConfigError("cannot read config file " + path.string());
  } catch (const YAML::Exception& e) {
    throw ConfigError("config " + path.string() + ": " + e.what());
  }
}

Config Config::parse(const std::string& text) {
  try {
    Config c;
    c.root_ = YAML::Load(text);
    if (c.root_.IsNull()) {
      c.root_ = YAML::Node(YAML::NodeType::Map);
    }
    if (!c.root_.IsMap()) {
      throw ConfigError("config: top level must be a mapping");
    }
    return c;
  } catch (const YAML::Exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
}

std::optional<YAML::Node> Config::find(const std::string& key) const {
  const YAML::Node root = root_;
  YAML::Node cur = root;
  for (const auto& part : split_key(key)) {
    if (!cur.IsMap()) {
      return std::nullopt;
    }
    const YAML::Node& view = cur;
    YAML::Node next = view[part];
    if (!next.IsDefined() || next.IsNull()) {
      return std::nullopt;
    }
    cur.reset(next);
  }
  return cur;
}

bool Config::has(const std::string& key) const { return find(key).has_value(); }

void Config::set(const std::string& key, const std::string& value) {
  const auto parts = split_key(key);
  YAML::Node cur = root_;
  for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
    YAML::Node next = cur[parts[i]];
    if (!next.IsMap()) {
      next = YAML::Node(YAML::NodeType::Map);
      cur[parts[i]] = next;
    }
    cur.reset(next);
  }
  try {
    cur[parts.back()] = YAML::Load(value);
  } catch (const YAML::Exception& e) {
    bad_value(key, e.what());
  }
}

std::string Config::dump() const {
  YAML::Emitter out;
  out << root_;
  return out.c_str();
}

void Config::missing(const std::string& key) { throw ConfigError("missing config key '" + key + "'"); }

void Config::bad_value(const std::string& key, const std::string& what) {
  throw ConfigError("bad value for config key '" + key + "': " + what);
}

}  // namespace mash::pipeline
