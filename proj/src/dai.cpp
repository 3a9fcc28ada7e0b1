#include "masra/dai.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace masra {

AuxSelection retrieve_aux_tokens(const Vector& z, const Matrix& codewords, int k) {
  const auto n = static_cast<int>(codewords.rows());
  if (k < 0 || k > n) {
    throw ValueError("retrieve_aux_tokens: K=" + std::to_string(k) + " exceeds codebook size " +
                     std::to_string(n));
  }
  if (z.size() != codewords.cols()) {
    throw DimensionError("retrieve_aux_tokens: z length " + std::to_string(z.size()) +
                         " vs codebook " + shape_str(codewords.rows(), codewords.cols()));
  }
  Eigen::VectorXd dist = (codewords.rowwise() - z).rowwise().squaredNorm();
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  auto closer = [&](int a, int b) { return dist(a) < dist(b) || (dist(a) == dist(b) && a < b); };
  std::partial_sort(order.begin(), order.begin() + k, order.end(), closer);
  order.resize(k);

  AuxSelection sel;
  sel.indices = order;
  sel.tokens.resize(k, codewords.cols());
  for (int j = 0; j < k; ++j) sel.tokens.row(j) = codewords.row(order[j]);
  sel.quantized_mean = k > 0 ? Vector(sel.tokens.colwise().mean()) : Vector::Zero(z.size());
  return sel;
}

Var codebook_loss(Var z, Var codewords, const AuxSelection& selection, double beta) {
  if (beta < 0.0) throw ValueError("codebook_loss: beta must be >= 0");
  if (selection.indices.empty()) throw ValueError("codebook_loss: empty selection");
  Graph& g = z.graph();
  const auto k = static_cast<Eigen::Index>(selection.indices.size());
  Var picked = ops::gather_rows(codewords, selection.indices);
  Var z_rows = g.constant(z.value().replicate(k, 1));
  Var codeword_term = ops::scale(ops::sum(ops::square(ops::sub(z_rows, picked))),
                                 1.0 / static_cast<double>(k));
  Var commit = ops::sum(ops::square(ops::sub(z, g.constant(selection.quantized_mean))));
  return ops::add(codeword_term, ops::scale(commit, beta));
}

double codebook_loss(const Vector& z, const AuxSelection& selection, double beta) {
  if (beta < 0.0) throw ValueError("codebook_loss: beta must be >= 0");
  if (selection.indices.empty()) throw ValueError("codebook_loss: empty selection");
  const double term1 = (selection.tokens.rowwise() - z).rowwise().squaredNorm().mean();
  const double term2 = (z - selection.quantized_mean).squaredNorm();
  return term1 + beta * term2;
}

DecoupledAlignmentInteraction::DecoupledAlignmentInteraction(ParamStore& store,
                                                             const std::string& name,
                                                             AttentionSpec spec,
                                                             int codebook_size, int top_k,
                                                             int ffn_hidden)
    : name_(name), top_k_(top_k) {
  if (top_k < 0 || top_k > codebook_size) {
    throw ConfigError("aux_top_k", "must lie in [0, codebook_size]");
  }
  const int c = spec.model_dim;
  codebook_ = {name + ".codebook", codebook_size, c};
  store.add(codebook_.param_name, codebook_size, c, Init::Normal,
            1.0 / std::sqrt(static_cast<double>(c)));
  linear_v_ = Linear(store, name + ".linear_v", c, c);
  linear_q_ = Linear(store, name + ".linear_q", c, c);
  video_norm_ = LayerNorm(store, name + ".video_norm", c);
  kv_norm_ = LayerNorm(store, name + ".kv_norm", c);
  cross_attn_ = MultiHeadAttention(store, name + ".cross_attn", spec);
  ffn_ = FeedForward(store, name + ".ffn", c, ffn_hidden, false);
}

Var DecoupledAlignmentInteraction::context_token(Graph& g, Var video, Var query) const {
  if (video.cols() != query.cols()) {
    throw DimensionError("context_token: video/query widths differ " +
                         shape_pair(video.value(), query.value()));
  }
  return ops::sub(mean_pool(linear_v_(g, video)), mean_pool(linear_q_(g, query)));
}

Var DecoupledAlignmentInteraction::interact(Graph& g, Var video, Var query, Var aux,
                                            AttentionTrace* trace) const {
  if (video.cols() != query.cols()) {
    throw DimensionError("dai_interact: video/query widths differ " +
                         shape_pair(video.value(), query.value()));
  }
  Var kv = aux.valid() && aux.rows() > 0 ? ops::concat_rows({query, aux}) : query;
  kv = kv_norm_(g, kv);
  Var x = ops::add(video, cross_attn_(g, video_norm_(g, video), kv, kv, trace));
  return ffn_(g, x);
}

DecoupledAlignmentInteraction::Output DecoupledAlignmentInteraction::operator()(
    Graph& g, Var video, Var query, bool use_aux, bool codebook_attn_grads) const {
  Output out;
  out.z = context_token(g, video, query);
  Var aux;
  if (use_aux && top_k_ > 0) {
    Var book = g.param(codebook_.param_name);
    out.selection = retrieve_aux_tokens(out.z.value(), book.value(), top_k_);
    aux = ops::gather_rows(book, out.selection.indices);
    if (!codebook_attn_grads) aux = ops::stop_gradient(aux);
  }
  out.interaction = interact(g, video, query, aux, &out.trace);
  return out;
}

Var dai_interact(Graph& g, Var video, Var query, const AuxSelection& aux,
                 const DecoupledAlignmentInteraction& dai, AttentionTrace* trace) {
  Var tokens = aux.indices.empty() ? Var() : g.constant(aux.tokens);
  return dai.interact(g, video, query, tokens, trace);
}

Eigen::VectorXd aux_attention_mass(const AttentionTrace& trace, int aux_count) {
  if (trace.weights.empty()) return {};
  const Matrix& first = trace.weights.front();
  Eigen::VectorXd mass = Eigen::VectorXd::Zero(first.rows());
  for (const Matrix& w : trace.weights) mass += w.rightCols(aux_count).rowwise().sum();
  return mass / static_cast<double>(trace.weights.size());
}

}  // namespace masra
