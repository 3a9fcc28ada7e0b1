#pragma once

#include <vector>

#include "masra/nn.hpp"

namespace masra {

/// Codeword table stored in a ParamStore under `param_name` (size x dim).
struct Codebook {
  std::string param_name;
  int size = 0;  // K_B
  int dim = 0;   // C

  const Matrix& codewords(const ParamStore& store) const { return store.value(param_name); }
};

/// The K codewords nearest to a context token.
struct AuxSelection {
  std::vector<int> indices;  // ascending distance, ties by lower index
  Matrix tokens;             // K x C
  Vector quantized_mean;     // mean of tokens
};

/// K nearest codewords to z by L2 distance. Throws if k > codeword count.
AuxSelection retrieve_aux_tokens(const Vector& z, const Matrix& codewords, int k);

/// VQ-style codebook loss:
///   (1/K) sum_j ||sg(z) - b_kj||^2 + beta ||z - sg(mean_j b_kj)||^2
/// The first term only moves codewords, the second only moves z.
Var codebook_loss(Var z, Var codewords, const AuxSelection& selection, double beta);
double codebook_loss(const Vector& z, const AuxSelection& selection, double beta);

/// Cross-modal interaction with codebook-retrieved auxiliary tokens.
///
/// The context token z = mean(Linear_v(V)) - mean(Linear_q(Q)) selects K
/// codewords; video clips then attend over [query tokens; aux tokens], so
/// clips that do not match the query can park attention on the aux tokens.
class DecoupledAlignmentInteraction {
 public:
  DecoupledAlignmentInteraction() = default;
  DecoupledAlignmentInteraction(ParamStore& store, const std::string& name, AttentionSpec spec,
                                int codebook_size, int top_k, int ffn_hidden);

  struct Output {
    Var z;
    AuxSelection selection;
    Var interaction;  // T x C
    AttentionTrace trace;
  };

  Var context_token(Graph& g, Var video, Var query) const;
  /// Cross-attention of video over [query; aux] followed by a feed-forward
  /// sublayer. An invalid `aux` gives plain video-to-query attention.
  Var interact(Graph& g, Var video, Var query, Var aux, AttentionTrace* trace = nullptr) const;
  /// Full module. With `use_aux == false` no codewords are retrieved.
  /// With `codebook_attn_grads == false` the aux tokens enter the attention
  /// as constants.
  Output operator()(Graph& g, Var video, Var query, bool use_aux,
                    bool codebook_attn_grads) const;

  const Codebook& codebook() const { return codebook_; }
  int top_k() const { return top_k_; }

 private:
  std::string name_;
  Codebook codebook_;
  int top_k_ = 8;
  Linear linear_v_;
  Linear linear_q_;
  LayerNorm video_norm_;
  LayerNorm kv_norm_;
  MultiHeadAttention cross_attn_;
  FeedForward ffn_;
};

/// Free-function form of the interaction step.
Var dai_interact(Graph& g, Var video, Var query, const AuxSelection& aux,
                 const DecoupledAlignmentInteraction& dai, AttentionTrace* trace = nullptr);

/// Mean attention mass (over heads) that each query row places on the last
/// `aux_count` keys.
Eigen::VectorXd aux_attention_mass(const AttentionTrace& trace, int aux_count);

}  // namespace masra
