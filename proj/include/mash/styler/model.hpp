#pragma once

// Style-injection encoder-decoder.
//
// Encoder: each source position j sees the window [x_{j-2}, x_{j-1}, x_j, x_{j+1}]
// (pad outside the sequence) projected to d, plus a learned position vector,
// followed by one single-head self-attention block with a residual:
//   U = [e(x_{j-2}); e(x_{j-1}); e(x_j); e(x_{j+1})] W_in + b_in + P_j
//   H = U + softmax(U Wq (U Wk)^T / sqrt d) U Wv
// Fusion at every position: F_j = W_p [H_j ; s_style] + b_p.
// Decoder (non-recurrent): step t queries F with its two previous tokens and
// its position, attends, and emits through the tied embedding table:
//   q_t = [e(y_{t-1}); e(y_{t-2}); P_t] W_q + b_q
//   c_t = softmax(q_t (F W_k)^T / sqrt d) F
//   o_t = c_t W_c + sigmoid([c_t ; e(y_{t-1})] W_1 + b_1) W_2 + b_o
//   logits_t = o_t E^T

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "mash/corpus/text.hpp"
#include "mash/nn/checkpoint.hpp"
#include "mash/nn/graph.hpp"

namespace mash::styler {

enum class Style { AI, Human };
std::string_view to_string(Style s);
Style style_from_string(std::string_view text);

inline constexpr std::string_view kArchitecture = "window4-selfattn1/fusion/xattn-nonrecurrent/tied";

struct ModelDims {
  std::size_t vocab_size = 0;
  std::size_t d = 64;
  std::size_t max_len = 64;  // longest source; targets may reach 2 * max_len
  [[nodiscard]] std::size_t positions() const { return 2 * max_len + 2; }
};

template <typename T>
struct StylerParams {
  using P = nn::Parameter<T>;
  P emb;      // V x d, also the output projection
  P pos;      // positions x d
  P w_in;     // 4d x d
  P b_in;     // 1 x d
  P enc_q;    // d x d
  P enc_k;    // d x d
  P enc_v;    // d x d
  P s_ai;     // 1 x d
  P s_human;  // 1 x d
  P w_p;      // d x 2d
  P b_p;      // 1 x d
  P dec_q;    // 3d x d
  P b_q;      // 1 x d
  P dec_k;    // d x d
  P w_c;      // d x d
  P w_1;      // 2d x d
  P b_1;      // 1 x d
  P w_2;      // d x d
  P b_o;      // 1 x d

  std::vector<P*> all();
  std::vector<const P*> all() const;
  P& style(Style s) { return s == Style::AI ? s_ai : s_human; }
  const P& style(Style s) const { return s == Style::AI ? s_ai : s_human; }

  template <typename U>
  [[nodiscard]] StylerParams<U> cast() const;
};

/// Random initialization; fully determined by seed.
template <typename T>
StylerParams<T> init_params(const ModelDims& dims, std::uint64_t seed);

/// Builds -sum_t log P(target_t | target_<t, source, style), the target
/// followed by end-of-sequence, into g. Returns the 1 x 1 node.
template <typename T>
nn::NodeId build_nll(nn::Graph<T>& g, StylerParams<T>& p, const ModelDims& dims, const Ids& source, Style style,
                     const Ids& target);

/// Same, but reuses an already built encoder output H (before fusion).
template <typename T>
nn::NodeId build_encoder(nn::Graph<T>& g, StylerParams<T>& p, const ModelDims& dims, const Ids& source);
template <typename T>
nn::NodeId build_decoder_nll(nn::Graph<T>& g, StylerParams<T>& p, const ModelDims& dims, nn::NodeId encoded,
                             Style style, const Ids& target);

/// W_p [h ; s] + b_p for row vectors h, s (1 x d each). W_p is d x 2d.
template <typename T>
nn::NodeId build_fusion(nn::Graph<T>& g, nn::NodeId h_rows, nn::NodeId style_row, nn::NodeId w_p, nn::NodeId b_p);

/// Plain-matrix fusion for single vectors. Throws StructuralError on shape mismatch.
std::vector<double> fuse_style(std::span<const double> h_content, std::span<const double> s_style,
                               const nn::Matrix<double>& w_p, std::span<const double> b_p);

class StylerModel {
 public:
  StylerModel(corpus::Vocabulary vocab, ModelDims dims, std::uint64_t seed);
  StylerModel(corpus::Vocabulary vocab, ModelDims dims, StylerParams<float> params);

  [[nodiscard]] const corpus::Vocabulary& vocab() const { return vocab_; }
  [[nodiscard]] const ModelDims& dims() const { return dims_; }
  [[nodiscard]] StylerParams<float>& params() { return params_; }
  [[nodiscard]] const StylerParams<float>& params() const { return params_; }

  /// Token ids for a text; throws ContractViolation when empty or longer
  /// than the source limit.
  [[nodiscard]] Ids encode_source(const TokenSeq& x) const;
  /// Token ids for a target; throws ContractViolation when empty or longer than 2 * max_len.
  [[nodiscard]] Ids encode_target(const TokenSeq& y) const;

  /// Teacher-forced sequence negative log-likelihood (sum over positions, EOS included).
  [[nodiscard]] double nll(const TokenSeq& source, Style style, const TokenSeq& target) const;

  [[nodiscard]] nn::Checkpoint to_checkpoint() const;
  static StylerModel from_checkpoint(const nn::Checkpoint& ckpt);
  void save(const std::filesystem::path& path) const;
  static StylerModel load(const std::filesystem::path& path);

  /// Bitwise equality of every parameter.
  [[nodiscard]] bool same_weights(const StylerModel& other) const;
  /// sum of squared parameter differences.
  [[nodiscard]] double squared_distance(const StylerModel& other) const;

 private:
  corpus::Vocabulary vocab_;
  ModelDims dims_;
  StylerParams<float> params_;
};

}  // namespace mash::styler
