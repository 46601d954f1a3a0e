#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "mash/detectors/external.hpp"
#include "mash/detectors/oracle.hpp"
#include "mash/lm/text_lm.hpp"
#include "mash/refine/segment.hpp"
#include "mash/styler/model.hpp"

namespace mash::refine {

struct PolishRequest {
  std::string sentence;
  std::string reference;  // the original machine text (C_ref)
  std::string instruction;
  std::size_t k = 4;
  std::uint64_t seed = 0;
};

/// Candidate generator. The returned list always ends with the unmodified
/// sentence as a fallback.
class Polisher {
 public:
  virtual ~Polisher() = default;
  [[nodiscard]] virtual std::vector<std::string> candidates(const PolishRequest& req) const = 0;
  [[nodiscard]] virtual std::string backend() const = 0;
};

class IdentityPolisher : public Polisher {
 public:
  [[nodiscard]] std::vector<std::string> candidates(const PolishRequest& req) const override;
  [[nodiscard]] std::string backend() const override { return "identity"; }
};

/// K temperature samples from a styler in Human style, one derived seed per candidate.
class ModelSamplerPolisher : public Polisher {
 public:
  ModelSamplerPolisher(std::shared_ptr<const styler::StylerModel> model, double temperature = 0.7);
  [[nodiscard]] std::vector<std::string> candidates(const PolishRequest& req) const override;
  [[nodiscard]] std::string backend() const override { return "model-sampler"; }

 private:
  std::shared_ptr<const styler::StylerModel> model_;
  double temperature_;
};

/// NDJSON polisher:
///   request  {"id", "sentence", "reference", "instruction", "k"}
///   response {"id", "candidates": [string, ...]}
class ExternalPolisher : public Polisher {
 public:
  explicit ExternalPolisher(std::unique_ptr<detectors::NdjsonChannel> channel);
  [[nodiscard]] std::vector<std::string> candidates(const PolishRequest& req) const override;
  [[nodiscard]] std::string backend() const override { return "external"; }

 private:
  std::unique_ptr<detectors::NdjsonChannel> channel_;
  mutable std::mutex mu_;
  mutable std::uint64_t next_id_ = 0;
};

inline constexpr std::string_view kDefaultInstruction =
    "Polish this sentence so it reads naturally. Keep its meaning and the facts of the reference text.";

struct RefineConfig {
  std::size_t k = 4;
  std::uint64_t seed = 0;
  std::string instruction = std::string(kDefaultInstruction);
};

struct RefinementPlan {
  std::vector<Span> spans;
  std::vector<double> ppl;           // per sentence, eval LM
  std::vector<std::size_t> order;    // ppl descending, ties by position
  std::vector<std::size_t> offered;  // candidates received per sentence
  std::vector<bool> accepted;
};

struct RefineResult {
  std::string id;
  std::string text;
  RefinementPlan plan;
  std::size_t replaced = 0;
  std::uint64_t queries = 0;               // candidate checks only
  std::uint64_t precondition_queries = 0;  // the initial decide on the input
  double ppl_before = 0.0;
  double ppl_after = 0.0;
  bool skipped = false;  // input was not Human-labelled to begin with
  bool partial = false;  // the oracle failed mid-run
};

/// Sentence indices sorted by ppl descending, ties by original position.
std::vector<std::size_t> processing_order(const std::vector<double>& ppl);

/// Greedy PPL-descending sentence replacement. A candidate is tried only if
/// it is not the unchanged sentence and it lowers the document perplexity
/// under eval_lm; it is accepted when the whole document still decides Human.
RefineResult refine_document(const std::string& id, const std::string& aligned_output, const std::string& reference,
                             const detectors::DetectorOracle& oracle, const Polisher& polisher,
                             const lm::TextLM& eval_lm, const RefineConfig& cfg);

// {"id", "n_sentences", "replaced", "queries", "ppl_before", "ppl_after"} plus skipped/partial flags.
std::string report_json_line(const RefineResult& r);

}  // namespace mash::refine
