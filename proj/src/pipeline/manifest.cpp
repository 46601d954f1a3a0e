#include "mash/pipeline/manifest.hpp"

#include <array>
#include <cstdio>
#include <fstream>

#include <openssl/evp.h>

#include "mash/common.hpp"

namespace mash::pipeline {
namespace {

class Sha256 {
 public:
  Sha256() : ctx_(EVP_MD_CTX_new()) {
    if (ctx_ == nullptr || EVP_DigestInit_ex(ctx_, EVP_sha256(), nullptr) != 1) {
      throw Error("sha256: digest init failed");
    }
  }
  ~Sha256() { EVP_MD_CTX_free(ctx_); }
  Sha256(const Sha256&) = delete;
  Sha256& operator=(const Sha256&) = delete;

  void update(const char* data, std::size_t n) {
    if (EVP_DigestUpdate(ctx_, data, n) != 1) {
      throw Error("sha256: digest update failed");
    }
  }

  std::string hex() {
    std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
    unsigned int len = 0;
    if (EVP_DigestFinal_ex(ctx_, md.data(), &len) != 1) {
      throw Error("sha256: digest final failed");
    }
    std::string out;
    char buf[3];
    for (unsigned int i = 0; i < len; ++i) {
      std::snprintf(buf, sizeof(buf), "%02x", md[i]);
      out += buf;
    }
    return out;
  }

 private:
  EVP_MD_CTX* ctx_;
};

}  // namespace

std::string sha256_hex(const std::string& bytes) {
  Sha256 h;
  h.update(bytes.data(), bytes.size());
  return h.hex();
}

std::string sha256_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw StageOrderError("missing artifact " + path.string());
  }
  Sha256 h;
  std::array<char, 1 << 16> buf{};
  while (in) {
    in.read(buf.data(), buf.size());
    h.update(buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  return h.hex();
}

std::filesystem::path manifest_path(const std::filesystem::path& artifact) {
  return artifact.parent_path() / (artifact.filename().string() + ".manifest.json");
}

nlohmann::ordered_json Manifest::to_json() const {
  nlohmann::ordered_json j;
  j["artifact"] = artifact;
  j["sha256"] = sha256;
  j["stage"] = stage;
  j["seed"] = seed;
  j["version"] = version;
  j["config_sha256"] = config_sha256;
  j["inputs"] = inputs;
  j["extra"] = extra;
  return j;
}

Manifest Manifest::from_json(const nlohmann::json& j) {
  Manifest m;
  m.artifact = j.at("artifact").get<std::string>();
  m.sha256 = j.at("sha256").get<std::string>();
  m.stage = j.at("stage").get<std::string>();
  m.seed = j.at("seed").get<std::uint64_t>();
  m.version = j.at("version").get<std::string>();
  m.config_sha256 = j.value("config_sha256", "");
  m.inputs = j.at("inputs").get<std::map<std::string, std::string>>();
  m.extra = j.value("extra", nlohmann::json::object());
  return m;
}

Manifest write_manifest(const std::filesystem::path& artifact, const std::string& stage, std::uint64_t seed,
                        const std::string& config_text, const std::vector<std::filesystem::path>& inputs,
                        const nlohmann::json& extra) {
  Manifest m;
  m.artifact = artifact.filename().string();
  m.sha256 = sha256_file(artifact);
  m.stage = stage;
  m.seed = seed;
  m.version = std::string(kVersion);
  m.config_sha256 = sha256_hex(config_text);
  for (const auto& in : inputs) {
    m.inputs[in.filename().string()] = sha256_file(in);
  }
  m.extra = extra;
  std::ofstream out(manifest_path(artifact), std::ios::binary);
  if (!out) {
    throw Error("cannot write manifest for " + artifact.string());
  }
  out << m.to_json().dump(2) << '\n';
  return m;
}

Manifest read_manifest(const std::filesystem::path& artifact) {
  const auto path = manifest_path(artifact);
  std::ifstream in(path);
  if (!in) {
    throw StageOrderError("missing manifest " + path.string());
  }
  try {
    return Manifest::from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    throw ArtifactMismatch("unreadable manifest " + path.string() + ": " + e.what());
  }
}

void verify_artifact(const std::filesystem::path& artifact) {
  const auto m = read_manifest(artifact);
  if (sha256_file(artifact) != m.sha256) {
    throw ArtifactMismatch(artifact.string() + " does not match the hash in its manifest");
  }
  for (const auto& [name, sha] : m.inputs) {
    const auto upstream = artifact.parent_path() / name;
    if (std::filesystem::exists(upstream) && sha256_file(upstream) != sha) {
      throw ArtifactMismatch(artifact.string() + " was built from a different " + name + " than the one on disk");
    }
  }
}

}  // namespace mash::pipeline
