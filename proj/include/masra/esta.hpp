#pragma once

#include <vector>

#include "masra/synth.hpp"

namespace masra {

/// Temporal context H (T x C) produced by the contextual reasoning encoder.
struct TemporalContext {
  Var features;
};

/// Span-pooled event representations U (M x D), one row per span.
struct EventFeatureSet {
  Var features;
  std::vector<Span> spans;
};

/// Self-attention encoder over the clip sequence with learned positional
/// encodings.
class ContextualReasoner {
 public:
  ContextualReasoner() = default;
  ContextualReasoner(ParamStore& store, const std::string& name, AttentionSpec spec, int layers,
                     int ffn_hidden, int max_clips, bool zero_init_residual = false);

  TemporalContext operator()(Graph& g, Var video, bool positional = true) const;

 private:
  std::string pos_name_;
  int max_clips_ = 0;
  TransformerEncoder encoder_;
};

TemporalContext contextual_reason(Graph& g, Var video, const ContextualReasoner& reasoner);

/// u_i = mean_{t in [s_i, e_i]} Linear(h_t) with one Linear shared by all spans.
EventFeatureSet span_pool(const TemporalContext& context, const std::vector<Span>& spans,
                          const Linear& projection);

/// (1/M) sum_i (1 - cos(u_i, o_i)); `targets` holds one o_i per row.
Var semantic_loss(const EventFeatureSet& events, const Matrix& targets);
Var semantic_loss(const EventFeatureSet& events, const std::vector<EventPrior>& priors);

/// Two attention stages guided by the temporal context:
///   E1 = Attn(Q=H, K=H, V=I)
///   E2 = E1 + Attn(Q=E1, K=H, V=H)
class SemanticGuidedEnhancement {
 public:
  SemanticGuidedEnhancement() = default;
  SemanticGuidedEnhancement(ParamStore& store, const std::string& name, AttentionSpec spec);

  struct Output {
    Var stage1;
    Var stage2;
    AttentionTrace stage1_trace;
    AttentionTrace stage2_trace;
  };
  Output operator()(Graph& g, Var context, Var interaction) const;

  const MultiHeadAttention& redistribute() const { return redistribute_; }
  const MultiHeadAttention& inject() const { return inject_; }

 private:
  MultiHeadAttention redistribute_;
  MultiHeadAttention inject_;
};

SemanticGuidedEnhancement::Output sge_fuse(Graph& g, const TemporalContext& context,
                                           Var interaction,
                                           const SemanticGuidedEnhancement& sge);

}  // namespace masra
