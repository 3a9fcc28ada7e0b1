#pragma once

#include <string>
#include <vector>

#include "masra/autodiff.hpp"

namespace masra {

/// Dense real matrix with at least one row and one column and finite entries.
using Tensor2D = Matrix;

/// Throws DimensionError/ValueError when `t` is empty or holds NaN/Inf.
void validate_tensor(const Tensor2D& t, const std::string& what);

struct AttentionSpec {
  int model_dim = 64;
  int num_heads = 4;
  int head_dim = 16;

  static AttentionSpec make(int model_dim, int num_heads);
  void validate() const;
};

enum class Activation { Identity, Relu };

class Linear {
 public:
  Linear() = default;
  Linear(ParamStore& store, std::string name, int in, int out, bool bias = true);

  Var operator()(Graph& g, Var x) const;

  const std::string& name() const { return name_; }
  std::string weight_name() const { return name_ + ".weight"; }
  std::string bias_name() const { return name_ + ".bias"; }
  int in() const { return in_; }
  int out() const { return out_; }
  bool has_bias() const { return bias_; }

 private:
  std::string name_;
  int in_ = 0;
  int out_ = 0;
  bool bias_ = true;
};

/// Stack of Linear layers. Hidden layers use `hidden`; the last layer uses
/// `last`.
class Mlp {
 public:
  Mlp() = default;
  Mlp(ParamStore& store, const std::string& name, const std::vector<int>& widths,
      Activation hidden = Activation::Relu, Activation last = Activation::Identity);

  Var operator()(Graph& g, Var x) const;
  const std::vector<Linear>& layers() const { return layers_; }
  int in() const { return layers_.front().in(); }
  int out() const { return layers_.back().out(); }

 private:
  std::vector<Linear> layers_;
  Activation hidden_ = Activation::Relu;
  Activation last_ = Activation::Identity;
};

/// Forward pass of `mlp`; checks that x has the first layer's input width.
Var mlp_forward(Graph& g, Var x, const Mlp& mlp);

class LayerNorm {
 public:
  LayerNorm() = default;
  LayerNorm(ParamStore& store, std::string name, int dim);
  Var operator()(Graph& g, Var x) const;

 private:
  std::string name_;
};

/// Per-head attention weights (q.rows x k.rows each) from the last call.
struct AttentionTrace {
  std::vector<Matrix> weights;
};

/// Multi-head scaled dot-product attention with separate query, key, value
/// and output projections. Projection biases start at zero.
class MultiHeadAttention {
 public:
  MultiHeadAttention() = default;
  MultiHeadAttention(ParamStore& store, std::string name, AttentionSpec spec,
                     bool zero_output = false);

  Var operator()(Graph& g, Var q, Var k, Var v, AttentionTrace* trace = nullptr) const;

  const AttentionSpec& spec() const { return spec_; }
  const std::string& name() const { return name_; }

 private:
  std::string name_;
  AttentionSpec spec_;
};

/// Free-function form used by tests and callers that hold a spec and a store.
Var multi_head_attention(Graph& g, Var q, Var k, Var v, const MultiHeadAttention& attn,
                         AttentionTrace* trace = nullptr);

/// Pre-norm feed-forward block: x + W2 relu(W1 LN(x)).
class FeedForward {
 public:
  FeedForward() = default;
  FeedForward(ParamStore& store, const std::string& name, int dim, int hidden,
              bool zero_output);
  Var operator()(Graph& g, Var x) const;

 private:
  LayerNorm norm_;
  Linear up_;
  Linear down_;
};

/// Pre-norm transformer encoder followed by a final LayerNorm.
/// With zero layers the encoder is the identity (no final norm).
class TransformerEncoder {
 public:
  TransformerEncoder() = default;
  TransformerEncoder(ParamStore& store, const std::string& name, AttentionSpec spec,
                     int layers, int ffn_hidden, bool zero_init_residual = false);

  Var operator()(Graph& g, Var x) const;
  int layers() const { return static_cast<int>(attn_.size()); }

 private:
  std::vector<LayerNorm> norms_;
  std::vector<MultiHeadAttention> attn_;
  std::vector<FeedForward> ffn_;
  LayerNorm final_norm_;
};

Var transformer_encode(Graph& g, Var x, const TransformerEncoder& encoder);

/// Pre-norm decoder: self-attention over targets, cross-attention into
/// `memory_keys`/`memory_values`, feed-forward; final LayerNorm.
class TransformerDecoder {
 public:
  TransformerDecoder() = default;
  TransformerDecoder(ParamStore& store, const std::string& name, AttentionSpec spec,
                     int layers, int ffn_hidden);

  Var operator()(Graph& g, Var targets, Var memory_keys, Var memory_values,
                 std::vector<AttentionTrace>* cross_traces = nullptr) const;

 private:
  struct Layer {
    LayerNorm self_norm;
    MultiHeadAttention self_attn;
    LayerNorm cross_norm;
    MultiHeadAttention cross_attn;
    FeedForward ffn;
  };
  std::vector<Layer> layers_;
  LayerNorm final_norm_;
};

/// rows x dim fixed encoding: column 2i is sin(t / 10000^(2i/dim)), column
/// 2i+1 the matching cos, for t = 0..rows-1.
Matrix sinusoidal_positions(int rows, int dim);

/// Column-wise arithmetic mean. Throws on empty input.
Vector mean_pool(const Tensor2D& x);
Var mean_pool(Var x);

/// Cosine similarity with each norm floored at `eps`; a zero vector yields 0.
double cosine_sim(const Vector& a, const Vector& b, double eps = 1e-8);

}  // namespace masra
