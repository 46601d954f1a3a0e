#include "mash/styler/sft.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>

#include <spdlog/spdlog.h>

#include "mash/rng.hpp"

namespace mash::styler {
namespace {

std::vector<EncodedExample> encode_all(const StylerModel& model, std::span<const SftExample> examples) {
  std::vector<EncodedExample> out;
  out.reserve(examples.size());
  for (const auto& ex : examples) {
    out.push_back({model.encode_source(ex.x_ai), model.encode_target(ex.x_human)});
  }
  return out;
}

bool close(double a, double b) { return std::abs(a - b) <= 1e-6 * std::max(1.0, std::abs(b)); }

// Forward-only loss over a set, accumulated in batches of 32 to bound graph size.
SftLoss mean_loss(const StylerModel& model, std::span<const EncodedExample> data, double lambda) {
  auto& p = const_cast<StylerParams<float>&>(model.params());
  SftLoss total;
  for (std::size_t start = 0; start < data.size(); start += 32) {
    const auto batch = data.subspan(start, std::min<std::size_t>(32, data.size() - start));
    nn::Graph<float> g;
    nn::NodeId r = 0;
    nn::NodeId t = 0;
    build_sft_loss(g, p, model.dims(), batch, lambda, &r, &t);
    total.recon += g.scalar(r);
    total.trans += g.scalar(t);
  }
  const auto n = static_cast<double>(data.size());
  total.recon /= n;
  total.trans /= n;
  total.combined = lambda * total.recon + (1.0 - lambda) * total.trans;
  return total;
}

}  // namespace

std::vector<SftExample> sft_examples(std::span<const corpus::ParallelPair> pairs) {
  std::vector<SftExample> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) {
    out.push_back({p.x_ai.tokens, p.x_human.tokens});
  }
  return out;
}

template <typename T>
nn::NodeId build_sft_loss(nn::Graph<T>& g, StylerParams<T>& p, const ModelDims& dims,
                          std::span<const EncodedExample> batch, double lambda, nn::NodeId* recon,
                          nn::NodeId* trans) {
  if (batch.empty()) {
    throw ContractViolation("sft loss: empty batch");
  }
  std::optional<nn::NodeId> r_sum;
  std::optional<nn::NodeId> t_sum;
  for (const auto& ex : batch) {
    // one encoder pass serves both objectives; only the fused style differs
    const auto h = build_encoder(g, p, dims, ex.source);
    const auto r = build_decoder_nll(g, p, dims, h, Style::AI, ex.source);
    const auto t = build_decoder_nll(g, p, dims, h, Style::Human, ex.human);
    r_sum = r_sum ? g.add(*r_sum, r) : r;
    t_sum = t_sum ? g.add(*t_sum, t) : t;
  }
  if (recon != nullptr) {
    *recon = *r_sum;
  }
  if (trans != nullptr) {
    *trans = *t_sum;
  }
  const auto n = static_cast<double>(batch.size());
  return g.add(g.scale(*r_sum, static_cast<T>(lambda / n)), g.scale(*t_sum, static_cast<T>((1.0 - lambda) / n)));
}

SftLoss evaluate_sft(const StylerModel& model, std::span<const SftExample> examples, double lambda) {
  if (examples.empty()) {
    throw ContractViolation("evaluate_sft: no examples");
  }
  const auto enc = encode_all(model, examples);
  return mean_loss(model, enc, lambda);
}

SftReport train_sft(StylerModel& model, std::span<const SftExample> examples, const SftConfig& cfg) {
  if (examples.empty()) {
    throw ContractViolation("train_sft: no pairs");
  }
  if (!(cfg.lambda >= 0.0 && cfg.lambda <= 1.0)) {
    throw ConfigError("train_sft: lambda must be in [0, 1]");
  }
  if (cfg.batch_size == 0 || !(cfg.lr > 0.0)) {
    throw ConfigError("train_sft: batch_size and lr must be positive");
  }
  auto data = encode_all(model, examples);
  Rng rng(derive_seed(cfg.seed, fnv1a("sft.split")));
  for (std::size_t i = data.size(); i > 1; --i) {
    std::swap(data[i - 1], data[rng.below(i)]);
  }
  std::size_t n_val = static_cast<std::size_t>(std::round(cfg.val_fraction * static_cast<double>(data.size())));
  if (data.size() >= 2) {
    n_val = std::clamp<std::size_t>(n_val, 1, data.size() - 1);
  } else {
    n_val = 0;
  }
  const std::span<const EncodedExample> all(data);
  const auto val = n_val > 0 ? all.last(n_val) : all;
  std::vector<EncodedExample> train(data.begin(), data.end() - static_cast<std::ptrdiff_t>(n_val));

  auto& params = model.params();
  auto plist = params.all();
  nn::AdamW<float> opt({cfg.lr, cfg.weight_decay});
  SftReport report;
  report.initial_val = mean_loss(model, val, cfg.lambda);
  report.best_val = report.initial_val.combined;
  StylerParams<float> best = params;
  std::size_t since_best = 0;
  Rng order_rng(derive_seed(cfg.seed, fnv1a("sft.order")));

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    for (std::size_t i = train.size(); i > 1; --i) {
      std::swap(train[i - 1], train[order_rng.below(i)]);
    }
    SftLoss running;
    for (std::size_t start = 0; start < train.size(); start += cfg.batch_size) {
      const auto batch = std::span<const EncodedExample>(train).subspan(
          start, std::min(cfg.batch_size, train.size() - start));
      nn::Graph<float> g;
      nn::NodeId r = 0;
      nn::NodeId t = 0;
      const auto loss = build_sft_loss(g, params, model.dims(), batch, cfg.lambda, &r, &t);
      const double n = static_cast<double>(batch.size());
      const double rv = g.scalar(r) / n;
      const double tv = g.scalar(t) / n;
      const double lv = g.scalar(loss);
      if (!std::isfinite(lv)) {
        throw NumericError("train_sft: non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                           std::to_string(start / cfg.batch_size) + " (recon " + std::to_string(rv) + ", trans " +
                           std::to_string(tv) + ")");
      }
      if (!close(lv, cfg.lambda * rv + (1.0 - cfg.lambda) * tv)) {
        throw NumericError("train_sft: L_SFT composition check failed");
      }
      ++report.composition_checks;
      nn::zero_grads<float>(plist);
      g.backward(loss);
      nn::clip_grad_norm<float>(plist, cfg.clip_norm);
      opt.step(plist);
      running.recon += g.scalar(r);
      running.trans += g.scalar(t);
    }
    running.recon /= static_cast<double>(train.size());
    running.trans /= static_cast<double>(train.size());
    running.combined = cfg.lambda * running.recon + (1.0 - cfg.lambda) * running.trans;
    const auto v = mean_loss(model, val, cfg.lambda);
    report.history.push_back({epoch, running, v});
    spdlog::debug("sft epoch {} train {:.4f} val {:.4f} (recon {:.4f}, trans {:.4f})", epoch, running.combined,
                  v.combined, v.recon, v.trans);
    if (v.combined < report.best_val) {
      report.best_val = v.combined;
      report.best_epoch = epoch;
      best = params;
      since_best = 0;
    } else if (++since_best >= cfg.patience) {
      report.early_stopped = true;
      break;
    }
  }
  params = std::move(best);
  return report;
}

template nn::NodeId build_sft_loss<float>(nn::Graph<float>&, StylerParams<float>&, const ModelDims&,
                                          std::span<const EncodedExample>, double, nn::NodeId*, nn::NodeId*);
template nn::NodeId build_sft_loss<double>(nn::Graph<double>&, StylerParams<double>&, const ModelDims&,
                                           std::span<const EncodedExample>, double, nn::NodeId*, nn::NodeId*);
template nn::NodeId build_sft_loss<long double>(nn::Graph<long double>&, StylerParams<long double>&,
                                                const ModelDims&, std::span<const EncodedExample>, double,
                                                nn::NodeId*, nn::NodeId*);

}  // namespace mash::styler
