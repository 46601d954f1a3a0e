#include "mash/styler/decode.hpp"

#include <algorithm>
#include <cmath>

#include "mash/rng.hpp"

namespace mash::styler {
namespace {

using G = nn::Graph<float>;
using V = corpus::Vocabulary;

void copy_row(const nn::Matrix<float>& src, std::size_t r, float* dst) {
  auto row = src.row(r);
  std::copy(row.begin(), row.end(), dst);
}

void log_softmax(std::vector<float>& z) {
  const float max_v = *std::max_element(z.begin(), z.end());
  float sum = 0.0F;
  for (float v : z) {
    sum += std::exp(v - max_v);
  }
  const float log_z = max_v + std::log(sum);
  for (auto& v : z) {
    v -= log_z;
  }
}

std::size_t max_output_len(std::size_t source_len) { return 2 * source_len; }

struct Hyp {
  Ids tokens;
  double score = 0.0;
};

}  // namespace

bool Decoder::emittable(std::int32_t id) { return id != V::kPad && id != V::kUnk && id != V::kBos; }

EncodedSource Decoder::encode(const Ids& source, Style style) const {
  auto& p = const_cast<StylerParams<float>&>(model_.params());  // forward only
  G g;
  const auto h = build_encoder(g, p, model_.dims(), source);
  const auto fused = build_fusion(g, h, g.parameter(p.style(style)), g.parameter(p.w_p), g.parameter(p.b_p));
  const auto keys = g.matmul(fused, g.parameter(p.dec_k));
  return {g.value(fused), g.value(keys), source.size()};
}

void Decoder::log_probs(const EncodedSource& enc, std::int32_t prev1, std::int32_t prev2, std::size_t t,
                        std::vector<float>& out) const {
  const auto& p = model_.params();
  const std::size_t d = model_.dims().d;
  if (t >= model_.dims().positions()) {
    throw ContractViolation("decoder: position beyond the position table");
  }
  nn::Matrix<float> qin(1, 3 * d);
  copy_row(p.emb.values, static_cast<std::size_t>(prev1), qin.data.data());
  copy_row(p.emb.values, static_cast<std::size_t>(prev2), qin.data.data() + d);
  copy_row(p.pos.values, t, qin.data.data() + 2 * d);
  nn::Matrix<float> q(1, d);
  G::gemm_nn(qin, p.dec_q.values, q);
  for (std::size_t i = 0; i < d; ++i) {
    q.data[i] += p.b_q.values.data[i];
  }
  nn::Matrix<float> scores(1, enc.keys.rows);
  G::gemm_nt(q, enc.keys, scores);
  const float inv = static_cast<float>(1.0 / std::sqrt(static_cast<double>(d)));
  for (auto& s : scores.data) {
    s *= inv;
  }
  G::softmax_row(scores.row(0));
  nn::Matrix<float> ctx(1, d);
  G::gemm_nn(scores, enc.fused, ctx);

  nn::Matrix<float> joined(1, 2 * d);
  copy_row(ctx, 0, joined.data.data());
  copy_row(p.emb.values, static_cast<std::size_t>(prev1), joined.data.data() + d);
  nn::Matrix<float> hidden(1, d);
  G::gemm_nn(joined, p.w_1.values, hidden);
  for (std::size_t i = 0; i < d; ++i) {
    hidden.data[i] = G::logistic(hidden.data[i] + p.b_1.values.data[i]);
  }
  nn::Matrix<float> direct(1, d);
  G::gemm_nn(ctx, p.w_c.values, direct);
  nn::Matrix<float> mlp(1, d);
  G::gemm_nn(hidden, p.w_2.values, mlp);
  nn::Matrix<float> o(1, d);
  for (std::size_t i = 0; i < d; ++i) {
    o.data[i] = direct.data[i] + (mlp.data[i] + p.b_o.values.data[i]);
  }
  nn::Matrix<float> logits(1, p.emb.values.rows);
  G::gemm_nt(o, p.emb.values, logits);
  out = std::move(logits.data);
  log_softmax(out);
}

TokenSeq generate(const StylerModel& model, const TokenSeq& source, Style style, std::size_t beam) {
  if (beam == 0) {
    throw ContractViolation("generate: beam must be >= 1");
  }
  const Decoder dec(model);
  const auto enc = dec.encode(model.encode_source(source), style);
  const std::size_t max_len = max_output_len(enc.source_len);
  std::vector<Hyp> live{Hyp{}};
  std::vector<Hyp> finished;
  std::vector<float> lp;
  struct Cand {
    double score;
    std::size_t hyp;
    std::int32_t tok;
  };
  for (std::size_t t = 0; t <= max_len && !live.empty() && finished.size() < beam; ++t) {
    std::vector<Cand> cands;
    for (std::size_t h = 0; h < live.size(); ++h) {
      const auto& toks = live[h].tokens;
      const std::int32_t p1 = t >= 1 ? toks[t - 1] : V::kBos;
      const std::int32_t p2 = t >= 2 ? toks[t - 2] : V::kBos;
      dec.log_probs(enc, p1, p2, t, lp);
      for (std::size_t v = 0; v < lp.size(); ++v) {
        const auto id = static_cast<std::int32_t>(v);
        // at the length cap only the end token remains
        if (!Decoder::emittable(id) || (t == max_len && id != V::kEos)) {
          continue;
        }
        cands.push_back({live[h].score + static_cast<double>(lp[v]), h, id});
      }
    }
    const std::size_t keep = std::min(beam - finished.size(), cands.size());
    std::partial_sort(cands.begin(), cands.begin() + static_cast<std::ptrdiff_t>(keep), cands.end(),
                      [](const Cand& a, const Cand& b) {
                        if (a.score != b.score) {
                          return a.score > b.score;
                        }
                        return a.hyp != b.hyp ? a.hyp < b.hyp : a.tok < b.tok;
                      });
    std::vector<Hyp> next;
    for (std::size_t i = 0; i < keep; ++i) {
      Hyp h{live[cands[i].hyp].tokens, cands[i].score};
      if (cands[i].tok == V::kEos) {
        finished.push_back(std::move(h));
      } else {
        h.tokens.push_back(cands[i].tok);
        next.push_back(std::move(h));
      }
    }
    live = std::move(next);
  }
  const auto normalized = [](const Hyp& h) { return h.score / static_cast<double>(h.tokens.size() + 1); };
  const Hyp* best = nullptr;
  for (const auto& h : finished) {
    if (best == nullptr || normalized(h) > normalized(*best)) {
      best = &h;
    }
  }
  return best == nullptr ? TokenSeq{} : model.vocab().decode(best->tokens);
}

TokenSeq greedy(const StylerModel& model, const TokenSeq& source, Style style) {
  const Decoder dec(model);
  const auto enc = dec.encode(model.encode_source(source), style);
  const std::size_t max_len = max_output_len(enc.source_len);
  Ids out;
  std::vector<float> lp;
  for (std::size_t t = 0; t < max_len; ++t) {
    dec.log_probs(enc, t >= 1 ? out[t - 1] : V::kBos, t >= 2 ? out[t - 2] : V::kBos, t, lp);
    std::int32_t best = -1;
    for (std::size_t v = 0; v < lp.size(); ++v) {
      const auto id = static_cast<std::int32_t>(v);
      if (Decoder::emittable(id) && (best < 0 || lp[v] > lp[static_cast<std::size_t>(best)])) {
        best = id;
      }
    }
    if (best == V::kEos) {
      break;
    }
    out.push_back(best);
  }
  return model.vocab().decode(out);
}

TokenSeq sample(const StylerModel& model, const TokenSeq& source, Style style, double temperature,
                std::uint64_t seed) {
  if (!(temperature > 0.0)) {
    throw ContractViolation("sample: temperature must be > 0");
  }
  const Decoder dec(model);
  const auto enc = dec.encode(model.encode_source(source), style);
  const std::size_t max_len = max_output_len(enc.source_len);
  Rng rng(seed);
  Ids out;
  std::vector<float> lp;
  std::vector<double> w;
  for (std::size_t t = 0; t < max_len; ++t) {
    dec.log_probs(enc, t >= 1 ? out[t - 1] : V::kBos, t >= 2 ? out[t - 2] : V::kBos, t, lp);
    w.assign(lp.size(), 0.0);
    double top = -1e300;
    for (std::size_t v = 0; v < lp.size(); ++v) {
      if (Decoder::emittable(static_cast<std::int32_t>(v))) {
        top = std::max(top, static_cast<double>(lp[v]) / temperature);
      }
    }
    for (std::size_t v = 0; v < lp.size(); ++v) {
      if (Decoder::emittable(static_cast<std::int32_t>(v))) {
        w[v] = std::exp(static_cast<double>(lp[v]) / temperature - top);
      }
    }
    const auto id = static_cast<std::int32_t>(rng.categorical(std::span<const double>(w)));
    if (id == V::kEos) {
      break;
    }
    out.push_back(id);
  }
  return model.vocab().decode(out);
}

double sequence_log_prob(const StylerModel& model, const TokenSeq& source, Style style, const TokenSeq& target) {
  const Decoder dec(model);
  const auto enc = dec.encode(model.encode_source(source), style);
  auto ids = model.encode_target(target);
  ids.push_back(V::kEos);
  std::vector<float> lp;
  double total = 0.0;
  for (std::size_t t = 0; t < ids.size(); ++t) {
    dec.log_probs(enc, t >= 1 ? ids[t - 1] : V::kBos, t >= 2 ? ids[t - 2] : V::kBos, t, lp);
    total += static_cast<double>(lp[static_cast<std::size_t>(ids[t])]);
  }
  return total;
}

}  // namespace mash::styler
