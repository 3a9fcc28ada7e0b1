#include "masra/model.hpp"

namespace masra {

MasraModel::MasraModel(const RunConfig& config) : config_(config), store_(config.seed) {
  config_.validate();
  const AttentionSpec spec = config_.attention();
  const int c = config_.model_dim;
  const ScenarioConfig& sc = config_.scenario;
  video_in_ = Mlp(store_, "video_in", {sc.video_dim, c, c});
  query_in_ = Mlp(store_, "query_in", {sc.query_dim, c, c});
  dai_ = DecoupledAlignmentInteraction(store_, "dai", spec, config_.codebook_size,
                                       config_.aux_top_k, config_.ffn_hidden);
  reasoner_ = ContextualReasoner(store_, "esta.reasoner", spec, config_.ctx_layers,
                                 config_.ffn_hidden, config_.max_clips);
  const int target_dim = config_.esta_source == "visual_prior" ? sc.video_dim : sc.event_dim;
  span_proj_ = Linear(store_, "esta.span_proj", c, target_dim);
  sge_ = SemanticGuidedEnhancement(store_, "sge", AttentionSpec::make(c, config_.sge_heads));
  concat_fuse_ = Linear(store_, "concat_fuse", 2 * c, c);
  fusion_ = TransformerEncoder(store_, "fusion", spec, config_.post_fuse_layers, config_.ffn_hidden);
  sora_ = SecondOrderRelationalAttention(store_, "sora", c, config_.sora_hidden);
  head_ = GroundingHead(store_, "grounding", spec, config_.n_queries, config_.decoder_layers,
                        config_.ffn_hidden);
  saliency_ = SaliencyHead(store_, "saliency", c);
}

ForwardOutput MasraModel::forward(Graph& g, const Tensor2D& video, const Tensor2D& query) const {
  validate_tensor(video, "video");
  validate_tensor(query, "query");
  ForwardOutput out;
  out.video = mlp_forward(g, g.constant(video), video_in_);
  out.query = mlp_forward(g, g.constant(query), query_in_);
  out.dai = dai_(g, out.video, out.query, config_.use_dai, config_.codebook_attn_grads);
  out.context = reasoner_(g, out.video);
  Var fused;
  if (config_.use_sge) {
    // Skip around both attention stages keeps per-clip interaction features.
    fused = ops::add(sge_(g, out.context.features, out.dai.interaction).stage2,
                     out.dai.interaction);
  } else {
    fused = concat_fuse_(g, ops::concat_cols({out.context.features, out.dai.interaction}));
  }
  out.fused = transformer_encode(g, fused, fusion_);
  out.similarity = similarity_matrix(out.fused);
  out.sora = sora_(g, out.similarity, out.fused, config_.use_sora);
  out.head_input = ops::add(out.fused, out.sora.features);
  const Var query_pooled = mean_pool(out.query);
  out.saliency = saliency_(g, out.head_input, query_pooled);
  out.moments = head_(g, out.saliency);
  return out;
}

std::pair<std::vector<Span>, Matrix> MasraModel::semantic_targets(const Scenario& sc) const {
  const std::string& source = config_.esta_source;
  if (source == "visual_prior") {
    if (sc.event_spans.empty()) throw DatasetError(sc.id + ": event spans missing");
    Matrix targets(static_cast<Eigen::Index>(sc.event_spans.size()), sc.video.cols());
    for (std::size_t i = 0; i < sc.event_spans.size(); ++i) {
      const Span& s = sc.event_spans[i];
      targets.row(static_cast<Eigen::Index>(i)) =
          sc.video.middleRows(s.start - 1, s.length()).colwise().mean();
    }
    return {sc.event_spans, targets};
  }
  if (!sc.has_priors()) throw DatasetError(sc.id + ": event priors missing");
  if (source == "gt_only") {
    if (sc.target_event < 0) throw DatasetError(sc.id + ": target event missing");
    return {{sc.gt_span}, sc.events.at(static_cast<std::size_t>(sc.target_event)).description};
  }
  std::vector<Span> spans;
  Matrix targets(static_cast<Eigen::Index>(sc.events.size()), sc.events.front().description.size());
  for (std::size_t i = 0; i < sc.events.size(); ++i) {
    spans.push_back(sc.events[i].span);
    targets.row(static_cast<Eigen::Index>(i)) = sc.events[i].description;
  }
  return {spans, targets};
}

SimilarityMatrix MasraModel::relation_target(const Scenario& sc) const {
  if (config_.lrca_source == "visual_self") return similarity_matrix(sc.video);
  if (sc.relation.size() > 0) return sc.relation;
  if (sc.clip_captions.size() == 0) throw DatasetError(sc.id + ": clip captions missing");
  return textual_relation_matrix(sc.clip_captions);
}

TrainingLoss MasraModel::losses(Graph& g, const ForwardOutput& out, const Scenario& sc) const {
  TrainingLoss result;
  const GroundTruthSpan gt = GroundTruthSpan::from_clips(sc.gt_span, sc.T());
  const std::vector<MomentPrediction> preds = to_predictions(out.moments.value());
  const int matched = config_.multi_span
                          ? match_predictions_multi(preds, {gt}, config_.match).front()
                          : match_predictions(preds, gt, config_.match);
  Var vtg = vtg_loss(out.moments, matched, gt, config_.match);

  const Eigen::VectorXd labels = sc.saliency_gt.transpose();
  Var sal = saliency_loss(out.saliency, labels, config_.margin, &result.warnings);

  Var semantic, relation, cb;
  if (config_.use_esta) {
    auto [spans, targets] = semantic_targets(sc);
    semantic = semantic_loss(span_pool(out.context, spans, span_proj_), targets);
  }
  if (config_.use_lrca) relation = relation_loss(out.similarity, relation_target(sc));
  if (config_.use_dai && !out.dai.selection.indices.empty()) {
    cb = codebook_loss(out.dai.z, g.param(dai_.codebook().param_name), out.dai.selection,
                       config_.beta);
  }
  auto value = [](Var v) { return v.valid() ? v.scalar() : 0.0; };
  result.breakdown = overall_loss(vtg.scalar(), sal.scalar(), value(semantic), value(relation),
                                  value(cb), config_.lambdas);
  result.total = overall_loss(vtg, sal, semantic, relation, cb, config_.lambdas);
  result.vtg = vtg;
  result.sal = sal;
  result.semantic = semantic;
  result.relation = relation;
  result.cb = cb;
  return result;
}

std::vector<MomentPrediction> MasraModel::predict(const Tensor2D& video, const Tensor2D& query,
                                                  SaliencyScores* saliency) const {
  Graph g(&store_);
  ForwardOutput out = forward(g, video, query);
  if (saliency) *saliency = out.saliency.value().col(0);
  return to_predictions(out.moments.value());
}

}  // namespace masra
