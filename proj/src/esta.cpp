#include "masra/esta.hpp"

namespace masra {

ContextualReasoner::ContextualReasoner(ParamStore& store, const std::string& name,
                                       AttentionSpec spec, int layers, int ffn_hidden,
                                       int max_clips, bool zero_init_residual)
    : pos_name_(name + ".pos"), max_clips_(max_clips) {
  store.add(pos_name_, max_clips, spec.model_dim, Init::Normal, 0.1);
  encoder_ = TransformerEncoder(store, name + ".encoder", spec, layers, ffn_hidden,
                                zero_init_residual);
}

TemporalContext ContextualReasoner::operator()(Graph& g, Var video, bool positional) const {
  if (video.rows() < 1) throw ValueError("contextual_reason: T = 0");
  Var x = video;
  if (positional) {
    if (video.rows() > max_clips_) {
      throw DimensionError("contextual_reason: T=" + std::to_string(video.rows()) +
                           " exceeds positional table of " + std::to_string(max_clips_));
    }
    x = ops::add(x, ops::slice_rows(g.param(pos_name_), 0, video.rows()));
  }
  return {encoder_(g, x)};
}

TemporalContext contextual_reason(Graph& g, Var video, const ContextualReasoner& reasoner) {
  return reasoner(g, video, true);
}

EventFeatureSet span_pool(const TemporalContext& context, const std::vector<Span>& spans,
                          const Linear& projection) {
  Var h = context.features;
  const auto t = static_cast<int>(h.rows());
  for (const Span& s : spans) {
    if (s.start < 1 || s.end > t || s.start > s.end) {
      throw ValueError("span_pool: span [" + std::to_string(s.start) + ", " +
                       std::to_string(s.end) + "] outside [1, " + std::to_string(t) + "]");
    }
  }
  if (spans.empty()) throw ValueError("span_pool: no spans");
  Graph& g = h.graph();
  Var projected = projection(g, h);
  std::vector<Var> rows;
  rows.reserve(spans.size());
  for (const Span& s : spans) {
    rows.push_back(ops::mean_rows(ops::slice_rows(projected, s.start - 1, s.length())));
  }
  return {rows.size() == 1 ? rows.front() : ops::concat_rows(rows), spans};
}

Var semantic_loss(const EventFeatureSet& events, const Matrix& targets) {
  const Var u = events.features;
  if (u.rows() == 0 || targets.rows() == 0) throw ValueError("semantic_loss: M = 0");
  if (u.rows() != targets.rows() || u.cols() != targets.cols()) {
    throw DimensionError("semantic_loss: events vs priors " + shape_pair(u.value(), targets));
  }
  Graph& g = u.graph();
  Var un = ops::normalize_rows(u);
  Var on = ops::normalize_rows(g.constant(targets));
  Var mean_cos = ops::scale(ops::sum(ops::hadamard(un, on)), 1.0 / static_cast<double>(u.rows()));
  return ops::add_scalar(ops::scale(mean_cos, -1.0), 1.0);
}

Var semantic_loss(const EventFeatureSet& events, const std::vector<EventPrior>& priors) {
  if (priors.empty()) throw ValueError("semantic_loss: M = 0");
  Matrix targets(static_cast<Eigen::Index>(priors.size()), priors.front().description.size());
  for (std::size_t i = 0; i < priors.size(); ++i)
    targets.row(static_cast<Eigen::Index>(i)) = priors[i].description;
  return semantic_loss(events, targets);
}

SemanticGuidedEnhancement::SemanticGuidedEnhancement(ParamStore& store, const std::string& name,
                                                     AttentionSpec spec)
    : redistribute_(store, name + ".redistribute", spec),
      inject_(store, name + ".inject", spec) {}

SemanticGuidedEnhancement::Output SemanticGuidedEnhancement::operator()(Graph& g, Var context,
                                                                        Var interaction) const {
  if (context.rows() != interaction.rows() || context.cols() != interaction.cols()) {
    throw DimensionError("sge_fuse: context vs interaction " +
                         shape_pair(context.value(), interaction.value()));
  }
  Output out;
  out.stage1 = redistribute_(g, context, context, interaction, &out.stage1_trace);
  out.stage2 = ops::add(out.stage1, inject_(g, out.stage1, context, context, &out.stage2_trace));
  return out;
}

SemanticGuidedEnhancement::Output sge_fuse(Graph& g, const TemporalContext& context,
                                           Var interaction,
                                           const SemanticGuidedEnhancement& sge) {
  return sge(g, context.features, interaction);
}

}  // namespace masra
