#pragma once

#include <string>
#include <vector>

#include "masra/config.hpp"
#include "masra/dai.hpp"
#include "masra/esta.hpp"
#include "masra/grounding.hpp"
#include "masra/lrca.hpp"

namespace masra {

/// Every intermediate of one forward pass.
struct ForwardOutput {
  Var video;  // projected clips V (T x C)
  Var query;  // projected tokens Q (L x C)
  DecoupledAlignmentInteraction::Output dai;
  TemporalContext context;  // H
  Var fused;                // E
  Var similarity;           // S
  SecondOrderRelationalAttention::Output sora;
  Var head_input;  // E + F
  Var moments;   // n_queries x 3
  Var saliency;  // T x 1
};

struct TrainingLoss {
  Var total;
  // Individual terms; invalid when the term is disabled.
  Var vtg, sal, semantic, relation, cb;
  LossBreakdown breakdown;
  std::vector<std::string> warnings;
};

/// Full grounding network. The forward pass sees only video and query
/// features; priors are consumed by `losses` alone.
class MasraModel {
 public:
  explicit MasraModel(const RunConfig& config);

  const RunConfig& config() const { return config_; }
  ParamStore& params() { return store_; }
  const ParamStore& params() const { return store_; }

  ForwardOutput forward(Graph& g, const Tensor2D& video, const Tensor2D& query) const;

  /// Overall objective of one scenario. Reads the training-only priors that
  /// the enabled alignments need; throws DatasetError when they are absent.
  TrainingLoss losses(Graph& g, const ForwardOutput& out, const Scenario& scenario) const;

  /// Inference on video and query only.
  std::vector<MomentPrediction> predict(const Tensor2D& video, const Tensor2D& query,
                                        SaliencyScores* saliency = nullptr) const;

  /// Alignment targets of the semantic loss for the configured source.
  std::pair<std::vector<Span>, Matrix> semantic_targets(const Scenario& scenario) const;
  /// Relation matrix R for the configured source.
  SimilarityMatrix relation_target(const Scenario& scenario) const;

 private:
  RunConfig config_;
  ParamStore store_;
  Mlp video_in_;
  Mlp query_in_;
  DecoupledAlignmentInteraction dai_;
  ContextualReasoner reasoner_;
  Linear span_proj_;
  SemanticGuidedEnhancement sge_;
  Linear concat_fuse_;
  TransformerEncoder fusion_;
  SecondOrderRelationalAttention sora_;
  GroundingHead head_;
  SaliencyHead saliency_;
};

}  // namespace masra
