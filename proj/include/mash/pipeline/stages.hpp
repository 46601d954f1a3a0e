#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "mash/pipeline/config.hpp"

namespace mash::pipeline {

// Artifact file names inside the run directory.
namespace artifacts {
inline constexpr const char* kDetectorDocs = "detector.jsonl";
inline constexpr const char* kPool = "pool.jsonl";
inline constexpr const char* kHeldout = "heldout.jsonl";
inline constexpr const char* kLmDocs = "lm.jsonl";
inline constexpr const char* kDetector = "detector.ckpt";
inline constexpr const char* kPairs = "pairs.jsonl";
inline constexpr const char* kSft = "sft.ckpt";
inline constexpr const char* kPrefs = "prefs.jsonl";
inline constexpr const char* kDpo = "dpo.ckpt";
inline constexpr const char* kAttack = "attack.jsonl";
inline constexpr const char* kRefined = "refined.jsonl";
inline constexpr const char* kMetrics = "metrics.json";
inline constexpr const char* kDefended = "defended_detector.ckpt";
inline constexpr const char* kDefense = "defense.json";
}  // namespace artifacts

struct StageOptions {
  Config config;
  std::filesystem::path out_dir;
  std::uint64_t seed = 0;
  bool force = false;  // evaluate: accept inputs whose manifests disagree
};

const std::vector<std::string>& stage_names();

/// Runs one stage against the run directory. Errors propagate as the mash
/// exception taxonomy; see exit_code().
void run_stage(const std::string& stage, const StageOptions& opt);

/// 2 for ConfigError, 3 for StageOrderError and ArtifactMismatch, 4 otherwise.
int exit_code(const std::exception& e);

/// Stream id mixed into the master seed for a named stage.
std::uint64_t stage_seed(std::uint64_t master, const std::string& name);

}  // namespace mash::pipeline
