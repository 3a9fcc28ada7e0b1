#include "masra/nn.hpp"

#include <algorithm>
#include <cmath>

namespace masra {

void validate_tensor(const Tensor2D& t, const std::string& what) {
  if (t.rows() < 1 || t.cols() < 1) {
    throw DimensionError(what + ": empty tensor " + shape_str(t.rows(), t.cols()));
  }
  if (!t.allFinite()) throw ValueError(what + ": non-finite entries");
}

AttentionSpec AttentionSpec::make(int model_dim, int num_heads) {
  if (num_heads < 1 || model_dim % num_heads != 0) {
    throw ConfigError("heads", "model_dim " + std::to_string(model_dim) +
                                   " not divisible by " + std::to_string(num_heads));
  }
  return {model_dim, num_heads, model_dim / num_heads};
}

void AttentionSpec::validate() const {
  if (model_dim < 1 || num_heads < 1 || num_heads * head_dim != model_dim) {
    throw ConfigError("heads", "num_heads x head_dim must equal model_dim");
  }
}

Linear::Linear(ParamStore& store, std::string name, int in, int out, bool bias)
    : name_(std::move(name)), in_(in), out_(out), bias_(bias) {
  store.add(weight_name(), in, out, Init::Normal, 1.0 / std::sqrt(static_cast<double>(in)));
  if (bias_) store.add(bias_name(), 1, out, Init::Zeros);
}

Var Linear::operator()(Graph& g, Var x) const {
  if (x.cols() != in_) {
    throw DimensionError(name_ + ": input " + shape_str(x.rows(), x.cols()) +
                         " vs weight " + shape_str(in_, out_));
  }
  Var y = ops::matmul(x, g.param(weight_name()));
  return bias_ ? ops::add_row(y, g.param(bias_name())) : y;
}

namespace {
Var activate(Var x, Activation a) { return a == Activation::Relu ? ops::relu(x) : x; }
}  // namespace

Mlp::Mlp(ParamStore& store, const std::string& name, const std::vector<int>& widths,
         Activation hidden, Activation last)
    : hidden_(hidden), last_(last) {
  if (widths.size() < 2) throw ConfigError(name, "MLP needs at least two widths");
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
    layers_.emplace_back(store, name + "." + std::to_string(i), widths[i], widths[i + 1]);
  }
}

Var Mlp::operator()(Graph& g, Var x) const {
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    x = layers_[i](g, x);
    x = activate(x, i + 1 == layers_.size() ? last_ : hidden_);
  }
  return x;
}

Var mlp_forward(Graph& g, Var x, const Mlp& mlp) {
  if (x.cols() != mlp.in()) {
    throw DimensionError("mlp_forward: input " + shape_str(x.rows(), x.cols()) +
                         " vs first layer " + shape_str(mlp.in(), mlp.layers().front().out()));
  }
  return mlp(g, x);
}

LayerNorm::LayerNorm(ParamStore& store, std::string name, int dim) : name_(std::move(name)) {
  store.add(name_ + ".gamma", 1, dim, Init::Ones);
  store.add(name_ + ".beta", 1, dim, Init::Zeros);
}

Var LayerNorm::operator()(Graph& g, Var x) const {
  return ops::layer_norm(x, g.param(name_ + ".gamma"), g.param(name_ + ".beta"));
}

MultiHeadAttention::MultiHeadAttention(ParamStore& store, std::string name,
                                       AttentionSpec spec, bool zero_output)
    : name_(std::move(name)), spec_(spec) {
  spec_.validate();
  const int c = spec_.model_dim;
  const double s = 1.0 / std::sqrt(static_cast<double>(c));
  store.add(name_ + ".wq", c, c, Init::Normal, s);
  store.add(name_ + ".wk", c, c, Init::Normal, s);
  store.add(name_ + ".wv", c, c, Init::Normal, s);
  store.add(name_ + ".wo", c, c, zero_output ? Init::Zeros : Init::Normal, s);
  for (const char* b : {".bq", ".bk", ".bv", ".bo"}) store.add(name_ + b, 1, c, Init::Zeros, 0.0);
}

Var MultiHeadAttention::operator()(Graph& g, Var q, Var k, Var v,
                                   AttentionTrace* trace) const {
  const int c = spec_.model_dim;
  if (q.cols() != c || k.cols() != c || v.cols() != c) {
    throw DimensionError(name_ + ": expected width " + std::to_string(c) + ", got q " +
                         shape_str(q.rows(), q.cols()) + " k " +
                         shape_str(k.rows(), k.cols()) + " v " + shape_str(v.rows(), v.cols()));
  }
  if (k.rows() != v.rows()) {
    throw DimensionError(name_ + ": key/value row counts differ " +
                         shape_pair(k.value(), v.value()));
  }
  if (!q.value().allFinite() || !k.value().allFinite() || !v.value().allFinite()) {
    throw ValueError(name_ + ": non-finite attention input");
  }
  Var qp = ops::add_row(ops::matmul(q, g.param(name_ + ".wq")), g.param(name_ + ".bq"));
  Var kp = ops::add_row(ops::matmul(k, g.param(name_ + ".wk")), g.param(name_ + ".bk"));
  Var vp = ops::add_row(ops::matmul(v, g.param(name_ + ".wv")), g.param(name_ + ".bv"));
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(spec_.head_dim));
  std::vector<Var> heads;
  heads.reserve(spec_.num_heads);
  if (trace) trace->weights.clear();
  for (int h = 0; h < spec_.num_heads; ++h) {
    const int off = h * spec_.head_dim;
    Var qh = spec_.num_heads == 1 ? qp : ops::slice_cols(qp, off, spec_.head_dim);
    Var kh = spec_.num_heads == 1 ? kp : ops::slice_cols(kp, off, spec_.head_dim);
    Var vh = spec_.num_heads == 1 ? vp : ops::slice_cols(vp, off, spec_.head_dim);
    Var w = ops::softmax_rows(ops::scale(ops::matmul_nt(qh, kh), inv_sqrt));
    if (trace) trace->weights.push_back(w.value());
    heads.push_back(ops::matmul(w, vh));
  }
  Var merged = spec_.num_heads == 1 ? heads.front() : ops::concat_cols(heads);
  return ops::add_row(ops::matmul(merged, g.param(name_ + ".wo")), g.param(name_ + ".bo"));
}

Var multi_head_attention(Graph& g, Var q, Var k, Var v, const MultiHeadAttention& attn,
                         AttentionTrace* trace) {
  return attn(g, q, k, v, trace);
}

FeedForward::FeedForward(ParamStore& store, const std::string& name, int dim, int hidden,
                         bool zero_output)
    : norm_(store, name + ".norm", dim),
      up_(store, name + ".up", dim, hidden),
      down_(store, name + ".down", hidden, dim) {
  if (zero_output) store.value(down_.weight_name()).setZero();
}

Var FeedForward::operator()(Graph& g, Var x) const {
  return ops::add(x, down_(g, ops::relu(up_(g, norm_(g, x)))));
}

TransformerEncoder::TransformerEncoder(ParamStore& store, const std::string& name,
                                       AttentionSpec spec, int layers, int ffn_hidden,
                                       bool zero_init_residual) {
  if (layers < 0) throw ConfigError(name, "negative layer count");
  for (int l = 0; l < layers; ++l) {
    const std::string p = name + ".layer" + std::to_string(l);
    norms_.emplace_back(store, p + ".attn_norm", spec.model_dim);
    attn_.emplace_back(store, p + ".attn", spec, zero_init_residual);
    ffn_.emplace_back(store, p + ".ffn", spec.model_dim, ffn_hidden, zero_init_residual);
  }
  if (layers > 0) final_norm_ = LayerNorm(store, name + ".final_norm", spec.model_dim);
}

Var TransformerEncoder::operator()(Graph& g, Var x) const {
  if (attn_.empty()) return x;
  for (std::size_t l = 0; l < attn_.size(); ++l) {
    Var h = norms_[l](g, x);
    x = ops::add(x, attn_[l](g, h, h, h));
    x = ffn_[l](g, x);
  }
  return final_norm_(g, x);
}

Var transformer_encode(Graph& g, Var x, const TransformerEncoder& encoder) {
  return encoder(g, x);
}

TransformerDecoder::TransformerDecoder(ParamStore& store, const std::string& name,
                                       AttentionSpec spec, int layers, int ffn_hidden) {
  for (int l = 0; l < layers; ++l) {
    const std::string p = name + ".layer" + std::to_string(l);
    Layer layer{LayerNorm(store, p + ".self_norm", spec.model_dim),
                MultiHeadAttention(store, p + ".self_attn", spec),
                LayerNorm(store, p + ".cross_norm", spec.model_dim),
                MultiHeadAttention(store, p + ".cross_attn", spec),
                FeedForward(store, p + ".ffn", spec.model_dim, ffn_hidden, false)};
    layers_.push_back(std::move(layer));
  }
  final_norm_ = LayerNorm(store, name + ".final_norm", spec.model_dim);
}

Var TransformerDecoder::operator()(Graph& g, Var targets, Var memory_keys,
                                   Var memory_values,
                                   std::vector<AttentionTrace>* cross_traces) const {
  Var x = targets;
  if (cross_traces) cross_traces->assign(layers_.size(), {});
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const Layer& layer = layers_[l];
    Var h = layer.self_norm(g, x);
    x = ops::add(x, layer.self_attn(g, h, h, h));
    h = layer.cross_norm(g, x);
    x = ops::add(x, layer.cross_attn(g, h, memory_keys, memory_values,
                                     cross_traces ? &(*cross_traces)[l] : nullptr));
    x = layer.ffn(g, x);
  }
  return final_norm_(g, x);
}

Matrix sinusoidal_positions(int rows, int dim) {
  Matrix out(rows, dim);
  for (int c = 0; c < dim; ++c) {
    const double freq = std::pow(10000.0, -static_cast<double>(c - c % 2) / dim);
    for (int t = 0; t < rows; ++t) out(t, c) = c % 2 == 0 ? std::sin(t * freq) : std::cos(t * freq);
  }
  return out;
}

Vector mean_pool(const Tensor2D& x) {
  if (x.rows() < 1 || x.cols() < 1) {
    throw ValueError("mean_pool: empty input " + shape_str(x.rows(), x.cols()));
  }
  return x.colwise().mean();
}

Var mean_pool(Var x) {
  if (x.rows() < 1) throw ValueError("mean_pool: empty input");
  return ops::mean_rows(x);
}

double cosine_sim(const Vector& a, const Vector& b, double eps) {
  if (a.size() != b.size()) {
    throw DimensionError("cosine_sim: lengths " + std::to_string(a.size()) + " vs " +
                         std::to_string(b.size()));
  }
  const double denom = std::max(a.norm(), eps) * std::max(b.norm(), eps);
  return std::clamp(a.dot(b) / denom, -1.0, 1.0);
}

}  // namespace masra
