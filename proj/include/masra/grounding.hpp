#pragma once

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "masra/errors.hpp"
#include "masra/metrics.hpp"
#include "masra/nn.hpp"
#include "masra/synth.hpp"

namespace masra {

struct MomentPrediction {
  double center = 0.5;
  double width = 0.5;
  double confidence = 0.0;

  /// [center - width/2, center + width/2] clamped to [0, 1].
  Interval span() const;
  /// Unclamped endpoints.
  Interval raw_span() const { return {center - width / 2.0, center + width / 2.0}; }
};

/// Ground-truth moment in normalized time, start < end.
struct GroundTruthSpan {
  double start = 0.0;
  double end = 1.0;

  void validate() const;
  Interval interval() const { return {start, end}; }
  /// Clip span [s, e] (1-based, inclusive) of a T-clip video -> [(s-1)/T, e/T].
  static GroundTruthSpan from_clips(const Span& span, int clips);
};

using SaliencyScores = Eigen::VectorXd;

struct MatchWeights {
  double cls = 2.0;
  double l1 = 5.0;
  double giou = 1.0;
};

struct LossLambdas {
  double sal = 1.0;
  double sem = 0.5;
  double rel = 0.5;
  double cb = 0.25;
};

struct LossBreakdown {
  double vtg = 0.0;
  double sal = 0.0;
  double semantic = 0.0;
  double relation = 0.0;
  double cb = 0.0;
  LossLambdas lambdas;
  double total = 0.0;

  nlohmann::json to_json() const;
};

/// Learned grounding tokens decoded against a memory of clip positions and
/// clip relevance. Each token is mapped to (center, width, confidence), each
/// through a sigmoid.
class GroundingHead {
 public:
  GroundingHead() = default;
  GroundingHead(ParamStore& store, const std::string& name, AttentionSpec spec, int n_queries,
                int decoder_layers, int ffn_hidden);

  /// n_queries x 3 matrix of (center, width, confidence). Memory row t is
  /// the sinusoidal encoding of t plus relevance(t) times a learned direction.
  Var operator()(Graph& g, Var relevance) const;
  int n_queries() const { return n_queries_; }
  const std::string& token_name() const { return tokens_; }

 private:
  std::string tokens_;
  std::string relevance_dir_;
  int n_queries_ = 0;
  TransformerDecoder decoder_;
  Mlp head_;
};

std::vector<MomentPrediction> to_predictions(const Matrix& raw);
/// `relevance` is T x 1, typically the saliency scores of the refined features.
std::vector<MomentPrediction> predict_moments(Graph& g, Var relevance, const GroundingHead& head);

/// score_t = <W_f f_t, W_q q> / sqrt(C); no bias, no positional term.
class SaliencyHead {
 public:
  SaliencyHead() = default;
  SaliencyHead(ParamStore& store, const std::string& name, int model_dim);
  /// T x 1 scores.
  Var operator()(Graph& g, Var features, Var query_pooled) const;

 private:
  Linear clip_proj_;
  Linear query_proj_;
  int model_dim_ = 0;
};

Var saliency_scores(Graph& g, Var features, Var query_pooled, const SaliencyHead& head);

/// Matching cost of one prediction against the ground truth:
///   l1 * L1 + giou * (1 - GIoU) - cls * confidence
double match_cost(const MomentPrediction& p, const GroundTruthSpan& gt, const MatchWeights& w);

/// Index of the lowest-cost prediction (ties to the lower index).
int match_predictions(const std::vector<MomentPrediction>& preds, const GroundTruthSpan& gt,
                      const MatchWeights& w = {});

/// Minimum-cost one-to-one assignment of ground truths to predictions
/// (Hungarian algorithm). Entry i is the prediction matched to gts[i].
std::vector<int> match_predictions_multi(const std::vector<MomentPrediction>& preds,
                                         const std::vector<GroundTruthSpan>& gts,
                                         const MatchWeights& w = {});

/// Classification + L1 + GIoU loss on raw n x 3 predictions. Classification
/// is binary cross-entropy summed over all predictions, with the matched
/// prediction labeled 1 and the rest 0.
Var vtg_loss(Var predictions, int matched, const GroundTruthSpan& gt, const MatchWeights& w = {});

/// Mean hinge max(0, margin - s_i + s_j) over every (inside i, outside j)
/// clip pair. Returns 0 and appends to `warnings` when no pair exists.
Var saliency_loss(Var scores, const Eigen::VectorXd& labels, double margin,
                  std::vector<std::string>* warnings = nullptr);

/// total = vtg + lambda_sal*sal + lambda_sem*semantic + lambda_rel*relation +
/// lambda_cb*cb. Throws naming the first non-finite component.
LossBreakdown overall_loss(double vtg, double sal, double semantic, double relation, double cb,
                           const LossLambdas& lambdas);
Var overall_loss(Var vtg, Var sal, Var semantic, Var relation, Var cb, const LossLambdas& lambdas);

/// One JSON-lines record of the prediction dump.
nlohmann::json prediction_record(const std::string& scenario_id,
                                 const std::vector<MomentPrediction>& preds,
                                 const SaliencyScores& saliency);

}  // namespace masra
