#include "mash/lm/ngram.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>

namespace mash::lm {
namespace {

constexpr int kMaxOrder = 4;
constexpr std::uint64_t kIdBits = 21;

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

std::uint64_t NgramLM::context_key(std::span<const std::int32_t> history) const {
  std::uint64_t key = 0;
  const auto bos = static_cast<std::int32_t>(vocab_size_);
  const int n_ctx = order_ - 1;
  for (int k = n_ctx; k >= 1; --k) {
    const auto idx = static_cast<std::ptrdiff_t>(history.size()) - k;
    const std::int32_t id = idx >= 0 ? history[static_cast<std::size_t>(idx)] : bos;
    key = (key << kIdBits) | static_cast<std::uint64_t>(id);
  }
  return key;
}

NgramLM NgramLM::fit(std::span<const Ids> corpus, std::size_t vocab_size, int order, double alpha) {
  if (corpus.empty()) {
    throw ConfigError("ngram fit: empty corpus");
  }
  if (order < 1 || order > kMaxOrder) {
    throw ConfigError("ngram fit: order must be in [1, 4]");
  }
  if (!(alpha > 0.0)) {
    throw ConfigError("ngram fit: alpha must be > 0");
  }
  if (vocab_size == 0 || vocab_size >= (1ULL << kIdBits) - 1) {
    throw ConfigError("ngram fit: vocabulary size out of range");
  }
  NgramLM m;
  m.order_ = order;
  m.alpha_ = alpha;
  m.vocab_size_ = vocab_size;
  for (const auto& seq : corpus) {
    for (std::size_t t = 0; t < seq.size(); ++t) {
      if (seq[t] < 0 || static_cast<std::size_t>(seq[t]) >= vocab_size) {
        throw ConfigError("ngram fit: token id outside vocabulary");
      }
      auto& c = m.counts_[m.context_key(std::span(seq).first(t))];
      ++c.total;
      ++c.next[seq[t]];
    }
  }
  return m;
}

double NgramLM::prob(std::span<const std::int32_t> history, std::int32_t token) const {
  const double denom_smooth = alpha_ * static_cast<double>(vocab_size_);
  auto it = counts_.find(context_key(history));
  if (it == counts_.end()) {
    return alpha_ / denom_smooth;
  }
  auto jt = it->second.next.find(token);
  const double c = jt == it->second.next.end() ? 0.0 : static_cast<double>(jt->second);
  return (c + alpha_) / (static_cast<double>(it->second.total) + denom_smooth);
}

void NgramLM::distribution(std::span<const std::int32_t> history, std::vector<double>& out) const {
  out.assign(vocab_size_, 0.0);
  const double denom_smooth = alpha_ * static_cast<double>(vocab_size_);
  auto it = counts_.find(context_key(history));
  if (it == counts_.end()) {
    std::fill(out.begin(), out.end(), 1.0 / static_cast<double>(vocab_size_));
    return;
  }
  const double denom = static_cast<double>(it->second.total) + denom_smooth;
  std::fill(out.begin(), out.end(), alpha_ / denom);
  for (const auto& [tok, c] : it->second.next) {
    out[static_cast<std::size_t>(tok)] = (static_cast<double>(c) + alpha_) / denom;
  }
}

std::vector<double> NgramLM::token_log_probs(std::span<const std::int32_t> x) const {
  std::vector<double> out;
  out.reserve(x.size());
  for (std::size_t t = 0; t < x.size(); ++t) {
    if (x[t] < 0 || static_cast<std::size_t>(x[t]) >= vocab_size_) {
      throw ContractViolation("ngram: token id outside vocabulary");
    }
    out.push_back(std::log(prob(x.first(t), x[t])));
  }
  return out;
}

nn::Checkpoint NgramLM::to_checkpoint() const {
  // Rows of (context ids..., token, count) in a deterministic order.
  std::map<std::pair<std::uint64_t, std::int32_t>, std::uint32_t> sorted;
  for (const auto& [key, ctx] : counts_) {
    for (const auto& [tok, c] : ctx.next) {
      sorted[{key, tok}] = c;
    }
  }
  const auto width = static_cast<std::uint32_t>(order_ + 1);
  nn::NamedTensor rows{"ngram.counts", {static_cast<std::uint32_t>(sorted.size()), width}, {}};
  rows.values.reserve(sorted.size() * width);
  const std::uint64_t mask = (1ULL << kIdBits) - 1;
  for (const auto& [k, c] : sorted) {
    for (int i = order_ - 2; i >= 0; --i) {
      rows.values.push_back(static_cast<float>((k.first >> (kIdBits * static_cast<std::uint64_t>(i))) & mask));
    }
    rows.values.push_back(static_cast<float>(k.second));
    rows.values.push_back(static_cast<float>(c));
  }
  nn::Checkpoint ckpt;
  ckpt.tensors.push_back(std::move(rows));
  ckpt.metadata["section"] = "ngram";
  ckpt.metadata["order"] = std::to_string(order_);
  ckpt.metadata["alpha"] = format_double(alpha_);
  ckpt.metadata["vocab_size"] = std::to_string(vocab_size_);
  return ckpt;
}

NgramLM NgramLM::from_checkpoint(const nn::Checkpoint& ckpt) {
  if (ckpt.section() != "ngram") {
    throw StructuralError("checkpoint section is '" + ckpt.section() + "', expected 'ngram'");
  }
  NgramLM m;
  m.order_ = std::stoi(ckpt.meta("order"));
  m.alpha_ = std::stod(ckpt.meta("alpha"));
  m.vocab_size_ = std::stoull(ckpt.meta("vocab_size"));
  const auto& rows = ckpt.tensor("ngram.counts");
  const auto width = static_cast<std::size_t>(m.order_ + 1);
  if (rows.dims.size() != 2 || rows.dims[1] != width) {
    throw StructuralError("ngram checkpoint: bad count table shape");
  }
  for (std::size_t r = 0; r < rows.dims[0]; ++r) {
    const float* row = rows.values.data() + r * width;
    std::uint64_t key = 0;
    for (int i = 0; i < m.order_ - 1; ++i) {
      key = (key << kIdBits) | static_cast<std::uint64_t>(row[i]);
    }
    const auto tok = static_cast<std::int32_t>(row[width - 2]);
    const auto c = static_cast<std::uint32_t>(row[width - 1]);
    auto& ctx = m.counts_[key];
    ctx.total += c;
    ctx.next[tok] = c;
  }
  return m;
}

bool NgramLM::operator==(const NgramLM& other) const {
  if (order_ != other.order_ || alpha_ != other.alpha_ || vocab_size_ != other.vocab_size_ ||
      counts_.size() != other.counts_.size()) {
    return false;
  }
  for (const auto& [key, ctx] : counts_) {
    auto it = other.counts_.find(key);
    if (it == other.counts_.end() || it->second.total != ctx.total || it->second.next != ctx.next) {
      return false;
    }
  }
  return true;
}

double perplexity_from_log_probs(std::span<const double> log_probs) {
  if (log_probs.empty()) {
    throw ContractViolation("perplexity: empty sequence");
  }
  double sum = 0.0;
  for (double lp : log_probs) {
    sum += lp;
  }
  return std::exp(-sum / static_cast<double>(log_probs.size()));
}

double perplexity(const NgramLM& model, std::span<const std::int32_t> x) {
  if (x.empty()) {
    throw ContractViolation("perplexity: empty sequence");
  }
  const auto lps = model.token_log_probs(x);
  return perplexity_from_log_probs(lps);
}

double cross_perplexity(const NgramLM& observer, const NgramLM& performer, std::span<const std::int32_t> x) {
  if (observer.vocab_size() != performer.vocab_size()) {
    throw ConfigError("cross_perplexity: observer and performer vocabularies differ");
  }
  if (x.empty()) {
    throw ContractViolation("cross_perplexity: empty sequence");
  }
  std::vector<double> p_obs;
  std::vector<double> p_perf;
  double total = 0.0;
  for (std::size_t t = 0; t < x.size(); ++t) {
    observer.distribution(x.first(t), p_obs);
    performer.distribution(x.first(t), p_perf);
    double h = 0.0;
    for (std::size_t v = 0; v < p_obs.size(); ++v) {
      h -= p_perf[v] * std::log(p_obs[v]);
    }
    total += h;
  }
  return std::exp(total / static_cast<double>(x.size()));
}

}  // namespace mash::lm
