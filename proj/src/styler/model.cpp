#include "mash/styler/model.hpp"

#include <cmath>
#include <cstring>

#include "mash/rng.hpp"

namespace mash::styler {
namespace {

template <typename Self>
auto collect(Self& p) {
  return std::vector{&p.emb,   &p.pos,     &p.w_in, &p.b_in,  &p.enc_q, &p.enc_k, &p.enc_v,
                     &p.s_ai,  &p.s_human, &p.w_p,  &p.b_p,   &p.dec_q, &p.b_q,   &p.dec_k,
                     &p.w_c,   &p.w_1,     &p.b_1,  &p.w_2,   &p.b_o};
}

template <typename T>
nn::Parameter<T> normal(const std::string& name, std::size_t r, std::size_t c, double stddev, Rng& rng) {
  nn::Matrix<float> m(r, c);
  rng.normal_fill(m.data, stddev);
  return nn::Parameter<T>(name, m.cast<T>());
}

template <typename T>
nn::Parameter<T> zeros(const std::string& name, std::size_t r, std::size_t c) {
  return nn::Parameter<T>(name, nn::Matrix<T>(r, c));
}

std::vector<std::int32_t> shifted(const Ids& x, std::ptrdiff_t offset) {
  std::vector<std::int32_t> out(x.size(), corpus::Vocabulary::kPad);
  for (std::size_t j = 0; j < x.size(); ++j) {
    const auto k = static_cast<std::ptrdiff_t>(j) + offset;
    if (k >= 0 && k < static_cast<std::ptrdiff_t>(x.size())) {
      out[j] = x[static_cast<std::size_t>(k)];
    }
  }
  return out;
}

std::vector<std::int32_t> iota_ids(std::size_t n) {
  std::vector<std::int32_t> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = static_cast<std::int32_t>(i);
  }
  return out;
}

}  // namespace

std::string_view to_string(Style s) { return s == Style::AI ? "ai" : "human"; }

Style style_from_string(std::string_view text) {
  if (text == "ai") {
    return Style::AI;
  }
  if (text == "human") {
    return Style::Human;
  }
  throw ConfigError("unknown style '" + std::string(text) + "'");
}

template <typename T>
std::vector<nn::Parameter<T>*> StylerParams<T>::all() {
  return collect(*this);
}

template <typename T>
std::vector<const nn::Parameter<T>*> StylerParams<T>::all() const {
  auto v = collect(*this);
  return {v.begin(), v.end()};
}

template <typename T>
template <typename U>
StylerParams<U> StylerParams<T>::cast() const {
  StylerParams<U> out;
  auto src = all();
  auto dst = out.all();
  for (std::size_t i = 0; i < src.size(); ++i) {
    *dst[i] = nn::Parameter<U>(src[i]->name, src[i]->values.template cast<U>());
  }
  return out;
}

template <typename T>
StylerParams<T> init_params(const ModelDims& dims, std::uint64_t seed) {
  if (dims.vocab_size <= static_cast<std::size_t>(corpus::Vocabulary::kEos) || dims.d == 0 || dims.max_len == 0) {
    throw ConfigError("styler: bad model dimensions");
  }
  Rng rng(derive_seed(seed, fnv1a("styler.init")));
  const std::size_t d = dims.d;
  const double s = 1.0 / std::sqrt(static_cast<double>(d));
  StylerParams<T> p;
  p.emb = normal<T>("emb", dims.vocab_size, d, 0.1, rng);
  p.pos = normal<T>("pos", dims.positions(), d, 0.1, rng);
  p.w_in = normal<T>("w_in", 4 * d, d, 0.5 * s, rng);
  p.b_in = zeros<T>("b_in", 1, d);
  p.enc_q = normal<T>("enc_q", d, d, s, rng);
  p.enc_k = normal<T>("enc_k", d, d, s, rng);
  p.enc_v = normal<T>("enc_v", d, d, s, rng);
  p.s_ai = normal<T>("s_ai", 1, d, 0.1, rng);
  p.s_human = normal<T>("s_human", 1, d, 0.1, rng);
  p.w_p = normal<T>("w_p", d, 2 * d, s / std::sqrt(2.0), rng);
  p.b_p = zeros<T>("b_p", 1, d);
  p.dec_q = normal<T>("dec_q", 3 * d, d, s / std::sqrt(3.0), rng);
  p.b_q = zeros<T>("b_q", 1, d);
  p.dec_k = normal<T>("dec_k", d, d, s, rng);
  p.w_c = normal<T>("w_c", d, d, s, rng);
  p.w_1 = normal<T>("w_1", 2 * d, d, s / std::sqrt(2.0), rng);
  p.b_1 = zeros<T>("b_1", 1, d);
  p.w_2 = normal<T>("w_2", d, d, s, rng);
  p.b_o = zeros<T>("b_o", 1, d);
  return p;
}

template <typename T>
nn::NodeId build_fusion(nn::Graph<T>& g, nn::NodeId h_rows, nn::NodeId style_row, nn::NodeId w_p, nn::NodeId b_p) {
  // copy the shape out: node references do not survive further pushes
  const std::size_t rows = g.value(h_rows).rows;
  const std::size_t d = g.value(h_rows).cols;
  const auto& W = g.value(w_p);
  if (g.value(style_row).rows != 1 || g.value(style_row).cols != d || W.rows != d || W.cols != 2 * d ||
      g.value(b_p).rows != 1 || g.value(b_p).cols != d) {
    throw StructuralError("fusion: shape mismatch");
  }
  const auto joined = g.concat(h_rows, nn::repeat_row(g, style_row, rows));
  return g.add(g.matmul(joined, w_p, true), nn::repeat_row(g, b_p, rows));
}

template <typename T>
nn::NodeId build_encoder(nn::Graph<T>& g, StylerParams<T>& p, const ModelDims& dims, const Ids& source) {
  if (source.empty() || source.size() > dims.max_len) {
    throw ContractViolation("styler: source length must be in [1, max_len]");
  }
  const auto emb = g.parameter(p.emb);
  const auto window = g.concat(g.concat(g.embedding(emb, shifted(source, -2)), g.embedding(emb, shifted(source, -1))),
                               g.concat(g.embedding(emb, source), g.embedding(emb, shifted(source, 1))));
  const auto u = g.add(nn::affine(g, window, g.parameter(p.w_in), g.parameter(p.b_in)),
                       g.embedding(g.parameter(p.pos), iota_ids(source.size())));
  const auto q = g.matmul(u, g.parameter(p.enc_q));
  const auto k = g.matmul(u, g.parameter(p.enc_k));
  const auto v = g.matmul(u, g.parameter(p.enc_v));
  const auto attn = g.softmax(g.scale(g.matmul(q, k, true), T(1.0 / std::sqrt(static_cast<double>(dims.d)))));
  return g.add(u, g.matmul(attn, v));
}

template <typename T>
nn::NodeId build_decoder_nll(nn::Graph<T>& g, StylerParams<T>& p, const ModelDims& dims, nn::NodeId encoded,
                             Style style, const Ids& target) {
  if (target.empty() || target.size() > 2 * dims.max_len) {
    throw ContractViolation("styler: target length must be in [1, 2 * max_len]");
  }
  const auto n = target.size() + 1;
  std::vector<std::int32_t> prev1(n, corpus::Vocabulary::kBos);
  std::vector<std::int32_t> prev2(n, corpus::Vocabulary::kBos);
  std::vector<std::int32_t> next(n, corpus::Vocabulary::kEos);
  for (std::size_t t = 0; t < target.size(); ++t) {
    prev1[t + 1] = target[t];
    if (t + 2 < n) {
      prev2[t + 2] = target[t];
    }
    next[t] = target[t];
  }
  const auto emb = g.parameter(p.emb);
  const auto fused = build_fusion(g, encoded, g.parameter(p.style(style)), g.parameter(p.w_p), g.parameter(p.b_p));
  const auto keys = g.matmul(fused, g.parameter(p.dec_k));
  const auto e1 = g.embedding(emb, prev1);
  const auto qin = g.concat(g.concat(e1, g.embedding(emb, prev2)), g.embedding(g.parameter(p.pos), iota_ids(n)));
  const auto q = nn::affine(g, qin, g.parameter(p.dec_q), g.parameter(p.b_q));
  const auto attn = g.softmax(g.scale(g.matmul(q, keys, true), T(1.0 / std::sqrt(static_cast<double>(dims.d)))));
  const auto ctx = g.matmul(attn, fused);
  const auto hidden = g.sigmoid(nn::affine(g, g.concat(ctx, e1), g.parameter(p.w_1), g.parameter(p.b_1)));
  const auto out = g.add(g.matmul(ctx, g.parameter(p.w_c)),
                         nn::affine(g, hidden, g.parameter(p.w_2), g.parameter(p.b_o)));
  return g.cross_entropy(g.matmul(out, emb, true), std::move(next));
}

template <typename T>
nn::NodeId build_nll(nn::Graph<T>& g, StylerParams<T>& p, const ModelDims& dims, const Ids& source, Style style,
                     const Ids& target) {
  return build_decoder_nll(g, p, dims, build_encoder(g, p, dims, source), style, target);
}

std::vector<double> fuse_style(std::span<const double> h_content, std::span<const double> s_style,
                               const nn::Matrix<double>& w_p, std::span<const double> b_p) {
  const std::size_t d = h_content.size();
  if (s_style.size() != d || b_p.size() != d || w_p.rows != d || w_p.cols != 2 * d) {
    throw StructuralError("fuse_style: shape mismatch");
  }
  std::vector<double> out(b_p.begin(), b_p.end());
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      out[i] += w_p(i, j) * h_content[j] + w_p(i, d + j) * s_style[j];
    }
  }
  return out;
}

StylerModel::StylerModel(corpus::Vocabulary vocab, ModelDims dims, std::uint64_t seed)
    : vocab_(std::move(vocab)), dims_(dims) {
  dims_.vocab_size = vocab_.size();
  params_ = init_params<float>(dims_, seed);
}

StylerModel::StylerModel(corpus::Vocabulary vocab, ModelDims dims, StylerParams<float> params)
    : vocab_(std::move(vocab)), dims_(dims), params_(std::move(params)) {
  if (dims_.vocab_size != vocab_.size() || params_.emb.values.rows != vocab_.size() ||
      params_.emb.values.cols != dims_.d || params_.pos.values.rows != dims_.positions()) {
    throw StructuralError("styler: parameters do not match vocabulary/dimensions");
  }
}

Ids StylerModel::encode_source(const TokenSeq& x) const {
  if (x.empty() || x.size() > dims_.max_len) {
    throw ContractViolation("styler: source has " + std::to_string(x.size()) + " tokens, limit is " +
                            std::to_string(dims_.max_len));
  }
  return vocab_.encode(x);
}

Ids StylerModel::encode_target(const TokenSeq& y) const {
  if (y.empty() || y.size() > 2 * dims_.max_len) {
    throw ContractViolation("styler: target must have 1.." + std::to_string(2 * dims_.max_len) + " tokens");
  }
  return vocab_.encode(y);
}

double StylerModel::nll(const TokenSeq& source, Style style, const TokenSeq& target) const {
  nn::Graph<float> g;
  auto& p = const_cast<StylerParams<float>&>(params_);  // forward only, grads untouched
  return g.scalar(build_nll(g, p, dims_, encode_source(source), style, encode_target(target)));
}

nn::Checkpoint StylerModel::to_checkpoint() const {
  nn::Checkpoint ckpt;
  for (const auto* prm : params_.all()) {
    ckpt.tensors.push_back(nn::to_named(*prm));
  }
  ckpt.metadata["section"] = "styler";
  ckpt.metadata["architecture"] = std::string(kArchitecture);
  ckpt.metadata["d"] = std::to_string(dims_.d);
  ckpt.metadata["max_len"] = std::to_string(dims_.max_len);
  ckpt.metadata["vocab"] = vocab_.serialize();
  return ckpt;
}

StylerModel StylerModel::from_checkpoint(const nn::Checkpoint& ckpt) {
  if (ckpt.section() != "styler") {
    throw StructuralError("checkpoint section is '" + ckpt.section() + "', expected 'styler'");
  }
  if (ckpt.meta("architecture") != kArchitecture) {
    throw StructuralError("styler checkpoint has unknown architecture '" + ckpt.meta("architecture") + "'");
  }
  auto vocab = corpus::Vocabulary::deserialize(ckpt.meta("vocab"));
  ModelDims dims{vocab.size(), std::stoull(ckpt.meta("d")), std::stoull(ckpt.meta("max_len"))};
  StylerParams<float> params = init_params<float>(dims, 0);
  for (auto* prm : params.all()) {
    nn::assign(*prm, ckpt.tensor(prm->name));
  }
  return StylerModel(std::move(vocab), dims, std::move(params));
}

void StylerModel::save(const std::filesystem::path& path) const { nn::save_checkpoint(path, to_checkpoint()); }

StylerModel StylerModel::load(const std::filesystem::path& path) { return from_checkpoint(nn::load_checkpoint(path)); }

bool StylerModel::same_weights(const StylerModel& other) const {
  auto a = params_.all();
  auto b = other.params_.all();
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!a[i]->values.same_shape(b[i]->values) ||
        std::memcmp(a[i]->values.data.data(), b[i]->values.data.data(), a[i]->values.data.size() * sizeof(float)) != 0) {
      return false;
    }
  }
  return true;
}

double StylerModel::squared_distance(const StylerModel& other) const {
  auto a = params_.all();
  auto b = other.params_.all();
  double total = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t k = 0; k < a[i]->values.data.size(); ++k) {
      const double diff = static_cast<double>(a[i]->values.data[k]) - static_cast<double>(b[i]->values.data[k]);
      total += diff * diff;
    }
  }
  return total;
}

template struct StylerParams<float>;
template struct StylerParams<double>;
template StylerParams<double> StylerParams<float>::cast<double>() const;
template StylerParams<float> StylerParams<double>::cast<float>() const;
template StylerParams<float> init_params<float>(const ModelDims&, std::uint64_t);
template StylerParams<double> init_params<double>(const ModelDims&, std::uint64_t);
template nn::NodeId build_fusion<float>(nn::Graph<float>&, nn::NodeId, nn::NodeId, nn::NodeId, nn::NodeId);
template nn::NodeId build_fusion<double>(nn::Graph<double>&, nn::NodeId, nn::NodeId, nn::NodeId, nn::NodeId);
template nn::NodeId build_encoder<float>(nn::Graph<float>&, StylerParams<float>&, const ModelDims&, const Ids&);
template nn::NodeId build_encoder<double>(nn::Graph<double>&, StylerParams<double>&, const ModelDims&, const Ids&);
template nn::NodeId build_decoder_nll<float>(nn::Graph<float>&, StylerParams<float>&, const ModelDims&, nn::NodeId,
                                             Style, const Ids&);
template nn::NodeId build_decoder_nll<double>(nn::Graph<double>&, StylerParams<double>&, const ModelDims&, nn::NodeId,
                                              Style, const Ids&);
template nn::NodeId build_nll<float>(nn::Graph<float>&, StylerParams<float>&, const ModelDims&, const Ids&, Style,
                                     const Ids&);
template nn::NodeId build_nll<double>(nn::Graph<double>&, StylerParams<double>&, const ModelDims&, const Ids&, Style,
                                      const Ids&);

// extended precision, for finite-difference oracles
template struct StylerParams<long double>;
template StylerParams<long double> init_params<long double>(const ModelDims&, std::uint64_t);
template nn::NodeId build_fusion<long double>(nn::Graph<long double>&, nn::NodeId, nn::NodeId, nn::NodeId,
                                              nn::NodeId);
template nn::NodeId build_encoder<long double>(nn::Graph<long double>&, StylerParams<long double>&,
                                               const ModelDims&, const Ids&);
template nn::NodeId build_decoder_nll<long double>(nn::Graph<long double>&, StylerParams<long double>&,
                                                   const ModelDims&, nn::NodeId, Style, const Ids&);
template nn::NodeId build_nll<long double>(nn::Graph<long double>&, StylerParams<long double>&, const ModelDims&,
                                           const Ids&, Style, const Ids&);

}  // namespace mash::styler
