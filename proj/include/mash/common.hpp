#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace mash {

/// A tokenized text. Tokens are lowercase surface strings; map to ids with
/// corpus::Vocabulary when a model needs them.
using TokenSeq = std::vector<std::string>;

/// Vocabulary ids for a TokenSeq.
using Ids = std::vector<std::int32_t>;

enum class Label { Human, AI, Unknown };

std::string_view to_string(Label label);
Label label_from_string(std::string_view text);

// Error taxonomy. Every module throws one of these; the CLI maps them to exit codes.

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad or missing configuration (CLI exit code 2).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A caller broke a documented precondition.
class ContractViolation : public Error {
 public:
  using Error::Error;
};

/// Malformed graph, shape mismatch or corrupt container.
class StructuralError : public Error {
 public:
  using Error::Error;
};

/// NaN/Inf or divergence during numeric work (CLI exit code 4).
class NumericError : public Error {
 public:
  using Error::Error;
};

/// External detector or polisher timed out or spoke the protocol wrongly.
class OracleUnavailable : public Error {
 public:
  using Error::Error;
};

/// Pair filtering accepted (almost) nothing: the detector and the corpus disagree.
class DistributionMismatch : public Error {
 public:
  using Error::Error;
};

/// Zero preference triples survived hard-negative mining.
class EmptyPreferenceSet : public Error {
 public:
  using Error::Error;
};

/// A pipeline stage ran before the artifacts it depends on exist (CLI exit code 3).
class StageOrderError : public Error {
 public:
  using Error::Error;
};

/// An input artifact no longer matches the hash recorded in its manifest (CLI exit code 3).
class ArtifactMismatch : public Error {
 public:
  using Error::Error;
};

}  // namespace mash
