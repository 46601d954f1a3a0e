#include "mash/refine/refine.hpp"

#include <algorithm>
#include <numeric>

#include <nlohmann/json.hpp>

#include "mash/corpus/text.hpp"
#include "mash/rng.hpp"
#include "mash/styler/decode.hpp"

namespace mash::refine {
namespace {

double doc_ppl(const lm::TextLM& lm, const std::string& text) {
  const auto toks = corpus::tokenize(text);
  return toks.empty() ? 0.0 : lm.perplexity(toks);
}

}  // namespace

std::vector<std::string> IdentityPolisher::candidates(const PolishRequest& req) const { return {req.sentence}; }

ModelSamplerPolisher::ModelSamplerPolisher(std::shared_ptr<const styler::StylerModel> model, double temperature)
    : model_(std::move(model)), temperature_(temperature) {
  if (!model_) {
    throw ConfigError("model-sampler polisher: no model");
  }
  if (!(temperature_ > 0.0)) {
    throw ConfigError("model-sampler polisher: temperature must be > 0");
  }
}

std::vector<std::string> ModelSamplerPolisher::candidates(const PolishRequest& req) const {
  std::vector<std::string> out;
  auto src = corpus::tokenize(req.sentence);
  if (!src.empty() && src.size() <= model_->dims().max_len) {
    for (std::size_t k = 0; k < req.k; ++k) {
      const auto y = styler::sample(*model_, src, styler::Style::Human, temperature_, derive_seed(req.seed, k));
      if (!y.empty()) {
        out.push_back(corpus::detokenize(y));
      }
    }
  }
  out.push_back(req.sentence);
  return out;
}

ExternalPolisher::ExternalPolisher(std::unique_ptr<detectors::NdjsonChannel> channel) : channel_(std::move(channel)) {
  if (!channel_) {
    throw ConfigError("external polisher: no channel");
  }
}

std::vector<std::string> ExternalPolisher::candidates(const PolishRequest& req) const {
  std::lock_guard lock(mu_);
  const auto id = std::to_string(next_id_++);
  const nlohmann::json j{{"id", id},
                         {"sentence", req.sentence},
                         {"reference", req.reference},
                         {"instruction", req.instruction},
                         {"k", req.k}};
  nlohmann::json resp;
  try {
    resp = nlohmann::json::parse(channel_->exchange(j.dump()));
  } catch (const nlohmann::json::exception&) {
    throw OracleUnavailable("external polisher: response is not JSON");
  }
  if (!resp.is_object() || resp.value("id", std::string()) != id || !resp.contains("candidates") ||
      !resp["candidates"].is_array()) {
    throw OracleUnavailable("external polisher: response lacks a matching id or a candidates array");
  }
  std::vector<std::string> out;
  for (const auto& c : resp["candidates"]) {
    if (c.is_string() && out.size() < req.k) {
      out.push_back(c.get<std::string>());
    }
  }
  out.push_back(req.sentence);
  return out;
}

std::vector<std::size_t> processing_order(const std::vector<double>& ppl) {
  std::vector<std::size_t> order(ppl.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return ppl[a] > ppl[b]; });
  return order;
}

RefineResult refine_document(const std::string& id, const std::string& aligned_output, const std::string& reference,
                             const detectors::DetectorOracle& oracle, const Polisher& polisher,
                             const lm::TextLM& eval_lm, const RefineConfig& cfg) {
  RefineResult res;
  res.id = id;
  res.text = aligned_output;
  const auto seg = segment(aligned_output);
  res.plan.spans = seg.spans;
  res.ppl_before = doc_ppl(eval_lm, aligned_output);
  res.ppl_after = res.ppl_before;
  const auto input_tokens = corpus::tokenize(aligned_output);
  if (input_tokens.empty()) {
    res.skipped = true;
    return res;
  }
  res.precondition_queries = 1;
  if (oracle.decide(input_tokens) != Label::Human) {
    res.skipped = true;
    return res;
  }
  auto current = seg.sentences();
  for (const auto& s : current) {
    const auto toks = corpus::tokenize(s);
    res.plan.ppl.push_back(toks.empty() ? 0.0 : eval_lm.perplexity(toks));
  }
  res.plan.order = processing_order(res.plan.ppl);
  res.plan.offered.assign(current.size(), 0);
  res.plan.accepted.assign(current.size(), false);
  double current_ppl = res.ppl_before;
  try {
    for (const auto i : res.plan.order) {
      PolishRequest req{current[i], reference, cfg.instruction, cfg.k, derive_seed(cfg.seed, fnv1a(id) ^ i)};
      const auto cands = polisher.candidates(req);
      res.plan.offered[i] = cands.size();
      std::size_t tried = 0;
      for (const auto& c : cands) {
        if (tried >= cfg.k) {
          break;
        }
        if (c == current[i] || corpus::tokenize(c).empty()) {
          continue;  // the fallback costs no query
        }
        auto trial = current;
        trial[i] = c;
        const auto text = reassemble(seg, trial);
        const double ppl = doc_ppl(eval_lm, text);
        if (!(ppl < current_ppl)) {
          continue;
        }
        ++tried;
        ++res.queries;
        if (oracle.decide(corpus::tokenize(text)) == Label::Human) {
          current = std::move(trial);
          current_ppl = ppl;
          res.plan.accepted[i] = true;
          ++res.replaced;
          break;
        }
      }
    }
  } catch (const OracleUnavailable&) {
    res.partial = true;
  }
  res.text = reassemble(seg, current);
  res.ppl_after = current_ppl;
  return res;
}

std::string report_json_line(const RefineResult& r) {
  nlohmann::ordered_json j;
  j["id"] = r.id;
  j["n_sentences"] = r.plan.spans.size();
  j["replaced"] = r.replaced;
  j["queries"] = r.queries;
  j["ppl_before"] = r.ppl_before;
  j["ppl_after"] = r.ppl_after;
  j["skipped"] = r.skipped;
  j["partial"] = r.partial;
  return j.dump();
}

}  // namespace mash::refine
