#pragma once

#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace masra {

/// Half-open interval [start, end) in normalized time.
struct Interval {
  double start = 0.0;
  double end = 0.0;
  double length() const { return end - start; }
  bool operator==(const Interval&) const = default;
};

double temporal_iou(const Interval& a, const Interval& b);
/// IoU - (|hull| - |union|) / |hull|.
double giou_1d(const Interval& a, const Interval& b);

double recall_at_1(const std::vector<double>& top1_ious, double tau);
double mean_iou(const std::vector<double>& top1_ious);

struct ScoredSpan {
  Interval span;
  double confidence = 0.0;
};

/// All predictions and ground-truth moments for one query.
struct QueryResult {
  std::string id;
  std::vector<ScoredSpan> predictions;
  std::vector<Interval> ground_truth;
};

struct ApResult {
  std::map<double, double> per_tau;
  double average = 0.0;
  std::vector<std::string> warnings;
};

/// IoU thresholds 0.5, 0.55, ..., 0.95.
std::vector<double> map_thresholds();

/// Average precision per IoU threshold.
///
/// Predictions of all queries are ranked together by confidence (ties by
/// query position, then prediction position). Walking that ranking, each
/// prediction claims the unmatched ground truth of its own query with the
/// highest IoU, provided IoU >= tau. AP is the area under the all-points
/// interpolated precision-recall curve.
ApResult mean_ap(const std::vector<QueryResult>& queries, const std::vector<double>& taus);

struct EvalResult {
  std::map<double, double> r1_at;
  std::map<double, double> map_at;
  double map_avg = 0.0;
  double miou = 0.0;
  std::size_t n_queries_evaluated = 0;
  std::vector<std::string> warnings;

  nlohmann::json to_json() const;
  static EvalResult from_json(const nlohmann::json& j);
  std::string table() const;
};

/// Top-1 prediction by confidence (ties by lower index).
const ScoredSpan& top1(const QueryResult& q);

/// R1 at {0.3, 0.5, 0.7}, mAP over `map_thresholds()`, and mIoU of the top-1
/// prediction against the first ground-truth moment of each query.
EvalResult evaluate_queries(const std::vector<QueryResult>& queries);

std::string tau_key(double tau);

}  // namespace masra
