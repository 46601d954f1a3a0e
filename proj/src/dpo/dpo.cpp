#include "mash/dpo/dpo.hpp"

#include <cmath>
#include <fstream>
#include <optional>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "mash/corpus/text.hpp"
#include "mash/nn/optim.hpp"
#include "mash/rng.hpp"
#include "mash/styler/decode.hpp"

namespace mash::dpo {
namespace {

using styler::Style;

double log_sigmoid(double z) { return z >= 0 ? -std::log1p(std::exp(-z)) : z - std::log1p(std::exp(z)); }

double sigmoid(double z) { return z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z)); }

// Order-sensitive digest of every parameter bit pattern.
std::uint64_t weights_digest(const styler::StylerModel& m) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto* p : m.params().all()) {
    const auto* bytes = reinterpret_cast<const char*>(p->values.data.data());
    h = fnv1a(std::string_view(bytes, p->values.data.size() * sizeof(float)), h);
  }
  return h;
}

}  // namespace

std::string_view to_string(NegativeMode m) { return m == NegativeMode::hard ? "hard" : "ambiguous"; }

NegativeMode negative_mode_from_string(std::string_view text) {
  if (text == "hard") {
    return NegativeMode::hard;
  }
  if (text == "ambiguous") {
    return NegativeMode::ambiguous;
  }
  throw ConfigError("negative mode must be 'hard' or 'ambiguous' (got '" + std::string(text) + "')");
}

void write_triples(const std::filesystem::path& path, const std::vector<PreferenceTriple>& triples) {
  std::vector<std::string> lines;
  lines.reserve(triples.size());
  for (const auto& t : triples) {
    nlohmann::ordered_json j;
    j["id"] = t.id;
    j["x"] = corpus::detokenize(t.x);
    j["y_w"] = corpus::detokenize(t.y_w);
    j["y_l"] = corpus::detokenize(t.y_l);
    j["d_l"] = t.d_l;
    lines.push_back(j.dump());
  }
  corpus::write_lines(path, lines);
}

std::vector<PreferenceTriple> read_triples(const std::filesystem::path& path) {
  std::vector<PreferenceTriple> out;
  for (const auto& line : corpus::read_lines(path)) {
    try {
      const auto j = nlohmann::json::parse(line);
      out.push_back({j.value("id", std::to_string(out.size())), corpus::tokenize(j.at("x").get<std::string>()),
                     corpus::tokenize(j.at("y_w").get<std::string>()),
                     corpus::tokenize(j.at("y_l").get<std::string>()), j.at("d_l").get<double>()});
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(path.string() + ": bad triple line: " + e.what());
    }
  }
  return out;
}

std::vector<PreferenceTriple> mine_preferences(std::span<const corpus::ParallelPair> pairs,
                                               const styler::StylerModel& sft_model,
                                               const detectors::DetectorOracle& oracle, const MiningConfig& cfg,
                                               MiningReport* report) {
  MiningReport rep;
  std::vector<PreferenceTriple> out;
  const auto q0 = oracle.query_count();
  for (const auto& pair : pairs) {
    ++rep.inputs;
    const auto base = derive_seed(cfg.seed, fnv1a(pair.x_human.id));
    for (std::size_t k = 0; k < cfg.samples_per_input; ++k) {
      auto y = styler::sample(sft_model, pair.x_ai.tokens, Style::Human, cfg.temperature, derive_seed(base, k));
      if (y.empty()) {
        continue;
      }
      const double d = oracle.score(y);
      const bool flagged = detectors::decide_from_score(d, oracle.threshold()) == Label::AI;
      if (flagged == (cfg.mode == NegativeMode::hard)) {
        out.push_back({pair.x_human.id, pair.x_ai.tokens, pair.x_human.tokens, std::move(y), d});
        ++rep.retained;
        break;
      }
    }
  }
  rep.queries = oracle.query_count() - q0;
  if (report != nullptr) {
    *report = rep;
  }
  if (out.empty()) {
    throw EmptyPreferenceSet("preference mining (" + std::string(to_string(cfg.mode)) + ") retained no triples from " +
                             std::to_string(rep.inputs) + " inputs");
  }
  return out;
}

ImplicitRewards implicit_rewards(const styler::StylerModel& policy, const styler::StylerModel& reference,
                                 const PreferenceTriple& t, double beta) {
  const double pw = -policy.nll(t.x, Style::Human, t.y_w);
  const double pl = -policy.nll(t.x, Style::Human, t.y_l);
  const double rw = -reference.nll(t.x, Style::Human, t.y_w);
  const double rl = -reference.nll(t.x, Style::Human, t.y_l);
  for (double v : {pw, pl, rw, rl}) {
    if (!std::isfinite(v)) {
      throw NumericError("dpo: non-finite sequence log-probability");
    }
  }
  return {beta * (pw - rw), beta * (pl - rl)};
}

double dpo_loss_from_rewards(const ImplicitRewards& r) { return -log_sigmoid(r.h_w - r.h_l); }

double dpo_weighting_from_rewards(const ImplicitRewards& r) { return sigmoid(r.h_l - r.h_w); }

double dpo_loss(const styler::StylerModel& policy, const styler::StylerModel& reference, const PreferenceTriple& t,
                double beta) {
  return dpo_loss_from_rewards(implicit_rewards(policy, reference, t, beta));
}

double dpo_weighting(const styler::StylerModel& policy, const styler::StylerModel& reference,
                     const PreferenceTriple& t, double beta) {
  return dpo_weighting_from_rewards(implicit_rewards(policy, reference, t, beta));
}

EncodedTriple encode_triple(const styler::StylerModel& reference, const PreferenceTriple& t) {
  EncodedTriple e{reference.encode_source(t.x), reference.encode_target(t.y_w), reference.encode_target(t.y_l),
                  -reference.nll(t.x, Style::Human, t.y_w), -reference.nll(t.x, Style::Human, t.y_l)};
  if (!std::isfinite(e.ref_w) || !std::isfinite(e.ref_l)) {
    throw NumericError("dpo: non-finite reference log-probability");
  }
  return e;
}

template <typename T>
nn::NodeId build_dpo_loss(nn::Graph<T>& g, styler::StylerParams<T>& policy, const styler::ModelDims& dims,
                          std::span<const EncodedTriple> batch, double beta, std::vector<double>* weightings) {
  if (batch.empty()) {
    throw ContractViolation("dpo loss: empty batch");
  }
  if (weightings != nullptr) {
    weightings->clear();
  }
  std::optional<nn::NodeId> total;
  for (const auto& e : batch) {
    nn::NodeId z = 0;
    if (e.y_w == e.y_l) {
      // identical responses: h_w - h_l is 0 for every theta
      z = g.constant(nn::Matrix<T>(1, 1, T{0}));
    } else {
      const auto h = styler::build_encoder(g, policy, dims, e.x);
      const auto nll_w = styler::build_decoder_nll(g, policy, dims, h, Style::Human, e.y_w);
      const auto nll_l = styler::build_decoder_nll(g, policy, dims, h, Style::Human, e.y_l);
      // h_w - h_l = beta * ((nll_l - nll_w) + (ref_l - ref_w))
      const auto gap = g.add(nll_l, g.scale(nll_w, T{-1}));
      z = g.scale(g.add(gap, g.constant(nn::Matrix<T>(1, 1, static_cast<T>(e.ref_l - e.ref_w)))),
                  static_cast<T>(beta));
    }
    if (weightings != nullptr) {
      weightings->push_back(sigmoid(-static_cast<double>(g.scalar(z))));
    }
    const auto term = g.log(g.sigmoid(z));
    total = total ? g.add(*total, term) : term;
  }
  return g.scale(*total, static_cast<T>(-1.0 / static_cast<double>(batch.size())));
}

styler::StylerModel train_dpo(const styler::StylerModel& sft_model, std::span<const PreferenceTriple> triples,
                              const DpoConfig& cfg, DpoReport* report) {
  if (triples.empty()) {
    throw ContractViolation("train_dpo: no preference triples");
  }
  if (!(cfg.beta > 0.0)) {
    throw ConfigError("train_dpo: beta must be > 0");
  }
  if (cfg.batch_size == 0) {
    throw ConfigError("train_dpo: batch_size must be positive");
  }
  const auto ref_digest = weights_digest(sft_model);
  std::vector<EncodedTriple> data;
  data.reserve(triples.size());
  for (const auto& t : triples) {
    data.push_back(encode_triple(sft_model, t));
  }
  styler::StylerModel policy = sft_model;
  auto plist = policy.params().all();
  nn::AdamW<float> opt({cfg.lr, 0.0});
  Rng rng(derive_seed(cfg.seed, fnv1a("dpo.order")));
  DpoReport rep;
  std::vector<double> w;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    for (std::size_t i = data.size(); i > 1; --i) {
      std::swap(data[i - 1], data[rng.below(i)]);
    }
    DpoEpoch ep{epoch, 0.0, 0.0, 0.0};
    std::size_t batches = 0;
    for (std::size_t start = 0; start < data.size(); start += cfg.batch_size) {
      const auto batch =
          std::span<const EncodedTriple>(data).subspan(start, std::min(cfg.batch_size, data.size() - start));
      nn::Graph<float> g;
      const auto loss = build_dpo_loss(g, policy.params(), policy.dims(), batch, cfg.beta, &w);
      const double lv = g.scalar(loss);
      if (!std::isfinite(lv)) {
        throw NumericError("train_dpo: non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                           std::to_string(batches));
      }
      nn::zero_grads<float>(plist);
      g.backward(loss);
      ep.mean_grad_norm += nn::clip_grad_norm<float>(plist, cfg.clip_norm);
      opt.step(plist);
      ep.loss += lv * static_cast<double>(batch.size());
      for (double wi : w) {
        ep.mean_weighting += wi;
      }
      ++batches;
    }
    ep.loss /= static_cast<double>(data.size());
    ep.mean_weighting /= static_cast<double>(data.size());
    ep.mean_grad_norm /= static_cast<double>(batches);
    spdlog::debug("dpo epoch {} loss {:.4f} weighting {:.4f} grad norm {:.4f}", epoch, ep.loss, ep.mean_weighting,
                  ep.mean_grad_norm);
    rep.history.push_back(ep);
  }
  rep.reference_unchanged = weights_digest(sft_model) == ref_digest;
  if (!rep.reference_unchanged) {
    throw StructuralError("train_dpo: reference policy changed during training");
  }
  if (report != nullptr) {
    *report = std::move(rep);
  }
  return policy;
}

template nn::NodeId build_dpo_loss<float>(nn::Graph<float>&, styler::StylerParams<float>&, const styler::ModelDims&,
                                          std::span<const EncodedTriple>, double, std::vector<double>*);
template nn::NodeId build_dpo_loss<double>(nn::Graph<double>&, styler::StylerParams<double>&,
                                           const styler::ModelDims&, std::span<const EncodedTriple>, double,
                                           std::vector<double>*);
template nn::NodeId build_dpo_loss<long double>(nn::Graph<long double>&, styler::StylerParams<long double>&,
                                                const styler::ModelDims&, std::span<const EncodedTriple>, double,
                                                std::vector<double>*);

}  // namespace mash::dpo
