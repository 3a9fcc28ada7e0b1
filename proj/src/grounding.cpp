#include "masra/grounding.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace masra {

Interval MomentPrediction::span() const {
  return {std::clamp(center - width / 2.0, 0.0, 1.0), std::clamp(center + width / 2.0, 0.0, 1.0)};
}

void GroundTruthSpan::validate() const {
  if (!(start < end)) {
    throw ValueError("degenerate ground truth [" + std::to_string(start) + ", " +
                     std::to_string(end) + "]");
  }
}

GroundTruthSpan GroundTruthSpan::from_clips(const Span& span, int clips) {
  if (clips < 1 || span.start < 1 || span.end > clips || span.start > span.end) {
    throw ValueError("GroundTruthSpan: clip span outside video");
  }
  return {(span.start - 1) / static_cast<double>(clips), span.end / static_cast<double>(clips)};
}

nlohmann::json LossBreakdown::to_json() const {
  return {{"vtg", vtg},
          {"sal", sal},
          {"semantic", semantic},
          {"relation", relation},
          {"cb", cb},
          {"lambda_sal", lambdas.sal},
          {"lambda_sem", lambdas.sem},
          {"lambda_rel", lambdas.rel},
          {"lambda_cb", lambdas.cb},
          {"total", total}};
}

GroundingHead::GroundingHead(ParamStore& store, const std::string& name, AttentionSpec spec,
                             int n_queries, int decoder_layers, int ffn_hidden)
    : tokens_(name + ".tokens"),
      relevance_dir_(name + ".relevance_dir"),
      n_queries_(n_queries) {
  if (n_queries < 1) throw ConfigError("n_queries", "must be >= 1");
  store.add(tokens_, n_queries, spec.model_dim, Init::Normal, 1.0);
  decoder_ = TransformerDecoder(store, name + ".decoder", spec, decoder_layers, ffn_hidden);
  store.add(relevance_dir_, 1, spec.model_dim, Init::Normal, 1.0);
  head_ = Mlp(store, name + ".head", {spec.model_dim, spec.model_dim, 3});
}

Var GroundingHead::operator()(Graph& g, Var relevance) const {
  if (relevance.cols() != 1) {
    throw DimensionError("grounding head: relevance must be T x 1, got " +
                         shape_str(relevance.rows(), relevance.cols()));
  }
  const int dim = static_cast<int>(g.param(relevance_dir_).cols());
  Var memory = ops::add(g.constant(sinusoidal_positions(static_cast<int>(relevance.rows()), dim)),
                        ops::matmul(relevance, g.param(relevance_dir_)));
  Var decoded = decoder_(g, g.param(tokens_), memory, memory);
  return ops::sigmoid(head_(g, decoded));
}

std::vector<MomentPrediction> to_predictions(const Matrix& raw) {
  if (raw.cols() != 3) throw DimensionError("to_predictions: expected n x 3, got " +
                                            shape_str(raw.rows(), raw.cols()));
  std::vector<MomentPrediction> out;
  out.reserve(static_cast<std::size_t>(raw.rows()));
  for (Eigen::Index i = 0; i < raw.rows(); ++i) out.push_back({raw(i, 0), raw(i, 1), raw(i, 2)});
  return out;
}

std::vector<MomentPrediction> predict_moments(Graph& g, Var relevance, const GroundingHead& head) {
  return to_predictions(head(g, relevance).value());
}

SaliencyHead::SaliencyHead(ParamStore& store, const std::string& name, int model_dim)
    : clip_proj_(store, name + ".clip_proj", model_dim, model_dim, false),
      query_proj_(store, name + ".query_proj", model_dim, model_dim, false),
      model_dim_(model_dim) {}

Var SaliencyHead::operator()(Graph& g, Var features, Var query_pooled) const {
  if (query_pooled.rows() != 1) {
    throw DimensionError("saliency_scores: pooled query must be one row, got " +
                         shape_str(query_pooled.rows(), query_pooled.cols()));
  }
  Var scores = ops::matmul_nt(clip_proj_(g, features), query_proj_(g, query_pooled));
  return ops::scale(scores, 1.0 / std::sqrt(static_cast<double>(model_dim_)));
}

Var saliency_scores(Graph& g, Var features, Var query_pooled, const SaliencyHead& head) {
  return head(g, features, query_pooled);
}

double match_cost(const MomentPrediction& p, const GroundTruthSpan& gt, const MatchWeights& w) {
  const Interval s = p.raw_span();
  const double l1 = std::abs(s.start - gt.start) + std::abs(s.end - gt.end);
  const Interval valid{s.start, std::max(s.start, s.end)};
  return w.l1 * l1 + w.giou * (1.0 - giou_1d(valid, gt.interval())) - w.cls * p.confidence;
}

int match_predictions(const std::vector<MomentPrediction>& preds, const GroundTruthSpan& gt,
                      const MatchWeights& w) {
  if (preds.empty()) throw ValueError("match_predictions: no predictions");
  int best = 0;
  double best_cost = match_cost(preds[0], gt, w);
  for (std::size_t i = 1; i < preds.size(); ++i) {
    const double c = match_cost(preds[i], gt, w);
    if (c < best_cost) {
      best_cost = c;
      best = static_cast<int>(i);
    }
  }
  return best;
}

std::vector<int> match_predictions_multi(const std::vector<MomentPrediction>& preds,
                                         const std::vector<GroundTruthSpan>& gts,
                                         const MatchWeights& w) {
  const int n = static_cast<int>(gts.size());
  const int m = static_cast<int>(preds.size());
  if (n == 0) return {};
  if (m < n) throw ValueError("match_predictions_multi: fewer predictions than ground truths");
  // Shortest augmenting path with potentials, rows = ground truths.
  constexpr double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0);
  std::vector<int> owner(m + 1, 0), way(m + 1, 0);
  for (int i = 1; i <= n; ++i) {
    owner[0] = i;
    int j0 = 0;
    std::vector<double> minv(m + 1, inf);
    std::vector<bool> used(m + 1, false);
    do {
      used[j0] = true;
      const int i0 = owner[j0];
      double delta = inf;
      int j1 = 0;
      for (int j = 1; j <= m; ++j) {
        if (used[j]) continue;
        const double cur = match_cost(preds[j - 1], gts[i0 - 1], w) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= m; ++j) {
        if (used[j]) {
          u[owner[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (owner[j0] != 0);
    do {
      const int j1 = way[j0];
      owner[j0] = owner[j1];
      j0 = j1;
    } while (j0);
  }
  std::vector<int> assignment(n, -1);
  for (int j = 1; j <= m; ++j)
    if (owner[j] > 0) assignment[owner[j] - 1] = j - 1;
  return assignment;
}

Var vtg_loss(Var predictions, int matched, const GroundTruthSpan& gt, const MatchWeights& w) {
  gt.validate();
  if (predictions.cols() != 3) {
    throw DimensionError("vtg_loss: expected n x 3 predictions, got " +
                         shape_str(predictions.rows(), predictions.cols()));
  }
  if (matched < 0 || matched >= predictions.rows()) {
    throw ValueError("vtg_loss: matched index " + std::to_string(matched) + " out of range");
  }
  Graph& g = predictions.graph();
  Var center = ops::element(predictions, matched, 0);
  Var half = ops::scale(ops::element(predictions, matched, 1), 0.5);
  Var start = ops::sub(center, half);
  Var end = ops::add(center, half);
  Var gs = g.scalar(gt.start);
  Var ge = g.scalar(gt.end);

  Var l1 = ops::add(ops::abs(ops::sub(start, gs)), ops::abs(ops::sub(end, ge)));

  Var inter = ops::relu(ops::sub(ops::minimum(end, ge), ops::maximum(start, gs)));
  Var uni = ops::sub(ops::add(ops::sub(end, start), g.scalar(gt.end - gt.start)), inter);
  Var hull = ops::sub(ops::maximum(end, ge), ops::minimum(start, gs));
  Var giou = ops::sub(ops::divide(inter, uni), ops::divide(ops::sub(hull, uni), hull));
  Var giou_term = ops::add_scalar(ops::scale(giou, -1.0), 1.0);

  Var conf = ops::slice_cols(predictions, 2, 1);
  Matrix labels = Matrix::Zero(predictions.rows(), 1);
  labels(matched, 0) = 1.0;
  Var y = g.constant(labels);
  Var one_minus_y = g.constant(Matrix::Ones(labels.rows(), 1) - labels);
  Var log_p = ops::log(conf);
  Var log_q = ops::log(ops::add_scalar(ops::scale(conf, -1.0), 1.0));
  Var bce = ops::scale(ops::sum(ops::add(ops::hadamard(y, log_p), ops::hadamard(one_minus_y, log_q))),
                       -1.0);

  return ops::add(ops::add(ops::scale(l1, w.l1), ops::scale(giou_term, w.giou)),
                  ops::scale(bce, w.cls));
}

Var saliency_loss(Var scores, const Eigen::VectorXd& labels, double margin,
                  std::vector<std::string>* warnings) {
  if (scores.cols() != 1 || scores.rows() != labels.size()) {
    throw DimensionError("saliency_loss: scores " + shape_str(scores.rows(), scores.cols()) +
                         " vs labels of length " + std::to_string(labels.size()));
  }
  std::vector<int> inside, outside;
  for (Eigen::Index t = 0; t < labels.size(); ++t)
    (labels(t) > 0.5 ? inside : outside).push_back(static_cast<int>(t));
  Graph& g = scores.graph();
  if (inside.empty() || outside.empty()) {
    if (warnings) warnings->push_back("saliency_loss: no inside/outside clip pair; loss set to 0");
    return ops::scale(ops::sum(scores), 0.0);
  }
  const auto ni = static_cast<Eigen::Index>(inside.size());
  const auto no = static_cast<Eigen::Index>(outside.size());
  Var pos = ops::gather_rows(scores, inside);   // ni x 1
  Var neg = ops::gather_rows(scores, outside);  // no x 1
  Var pos_grid = ops::matmul(pos, g.constant(Matrix::Ones(1, no)));
  Var neg_grid = ops::matmul_nt(g.constant(Matrix::Ones(ni, 1)), neg);
  Var hinge = ops::relu(ops::add_scalar(ops::sub(neg_grid, pos_grid), margin));
  return ops::mean(hinge);
}

namespace {
void require_finite(double v, const char* name) {
  if (!std::isfinite(v)) throw ValueError(std::string("overall_loss: non-finite component ") + name);
}
}  // namespace

LossBreakdown overall_loss(double vtg, double sal, double semantic, double relation, double cb,
                           const LossLambdas& lambdas) {
  require_finite(vtg, "vtg");
  require_finite(sal, "sal");
  require_finite(semantic, "semantic");
  require_finite(relation, "relation");
  require_finite(cb, "cb");
  LossBreakdown b{vtg, sal, semantic, relation, cb, lambdas, 0.0};
  b.total = vtg + lambdas.sal * sal + lambdas.sem * semantic + lambdas.rel * relation +
            lambdas.cb * cb;
  return b;
}

Var overall_loss(Var vtg, Var sal, Var semantic, Var relation, Var cb, const LossLambdas& lambdas) {
  Var total = vtg;
  auto add_term = [&](Var term, double lambda, const char* name) {
    if (!term.valid()) return;
    require_finite(term.scalar(), name);
    if (lambda == 0.0) return;
    total = ops::add(total, ops::scale(term, lambda));
  };
  require_finite(vtg.scalar(), "vtg");
  add_term(sal, lambdas.sal, "sal");
  add_term(semantic, lambdas.sem, "semantic");
  add_term(relation, lambdas.rel, "relation");
  add_term(cb, lambdas.cb, "cb");
  return total;
}

nlohmann::json prediction_record(const std::string& scenario_id,
                                 const std::vector<MomentPrediction>& preds,
                                 const SaliencyScores& saliency) {
  nlohmann::json spans = nlohmann::json::array();
  for (const MomentPrediction& p : preds) {
    const Interval s = p.span();
    spans.push_back({s.start, s.end, p.confidence});
  }
  std::vector<double> sal(saliency.data(), saliency.data() + saliency.size());
  return {{"scenario_id", scenario_id}, {"spans", spans}, {"saliency", sal}};
}

}  // namespace masra
