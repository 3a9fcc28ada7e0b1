#include "masra/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "masra/errors.hpp"

namespace masra {

namespace {
void check_interval(const Interval& a, const char* what) {
  if (!(a.end >= a.start)) {
    throw ValueError(std::string(what) + ": negative-length interval [" +
                     std::to_string(a.start) + ", " + std::to_string(a.end) + ")");
  }
}
}  // namespace

double temporal_iou(const Interval& a, const Interval& b) {
  check_interval(a, "temporal_iou");
  check_interval(b, "temporal_iou");
  const double inter = std::max(0.0, std::min(a.end, b.end) - std::max(a.start, b.start));
  const double uni = a.length() + b.length() - inter;
  if (uni <= 0.0) return a == b ? 1.0 : 0.0;
  return inter / uni;
}

double giou_1d(const Interval& a, const Interval& b) {
  check_interval(a, "giou_1d");
  check_interval(b, "giou_1d");
  const double inter = std::max(0.0, std::min(a.end, b.end) - std::max(a.start, b.start));
  const double uni = a.length() + b.length() - inter;
  const double hull = std::max(a.end, b.end) - std::min(a.start, b.start);
  const double iou = uni > 0.0 ? inter / uni : (a == b ? 1.0 : 0.0);
  if (hull <= 0.0) return iou;
  return iou - (hull - uni) / hull;
}

double recall_at_1(const std::vector<double>& top1_ious, double tau) {
  if (top1_ious.empty()) throw ValueError("recall_at_1: empty IoU list");
  std::size_t hits = 0;
  for (double iou : top1_ious) {
    if (!(iou >= 0.0 && iou <= 1.0)) throw ValueError("recall_at_1: IoU outside [0, 1]");
    if (iou >= tau) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(top1_ious.size());
}

double mean_iou(const std::vector<double>& top1_ious) {
  if (top1_ious.empty()) throw ValueError("mean_iou: empty IoU list");
  return std::accumulate(top1_ious.begin(), top1_ious.end(), 0.0) /
         static_cast<double>(top1_ious.size());
}

std::vector<double> map_thresholds() {
  std::vector<double> taus;
  for (int i = 0; i <= 9; ++i) taus.push_back((50 + 5 * i) / 100.0);
  return taus;
}

ApResult mean_ap(const std::vector<QueryResult>& queries, const std::vector<double>& taus) {
  ApResult result;
  if (taus.empty()) throw ValueError("mean_ap: no IoU thresholds");

  struct Ranked {
    std::size_t query;
    std::size_t pred;
    double confidence;
  };
  std::vector<Ranked> ranked;
  std::size_t n_gt = 0;
  for (std::size_t q = 0; q < queries.size(); ++q) {
    if (queries[q].ground_truth.empty()) {
      throw ValueError("mean_ap: query " + queries[q].id + " has no ground truth");
    }
    n_gt += queries[q].ground_truth.size();
    for (std::size_t p = 0; p < queries[q].predictions.size(); ++p) {
      const double c = queries[q].predictions[p].confidence;
      if (!std::isfinite(c)) throw ValueError("mean_ap: non-finite confidence");
      ranked.push_back({q, p, c});
    }
  }
  std::stable_sort(ranked.begin(), ranked.end(), [](const Ranked& a, const Ranked& b) {
    if (a.confidence != b.confidence) return a.confidence > b.confidence;
    if (a.query != b.query) return a.query < b.query;
    return a.pred < b.pred;
  });

  if (ranked.empty()) {
    result.warnings.push_back("mean_ap: empty prediction set, AP = 0");
    for (double tau : taus) result.per_tau[tau] = 0.0;
    result.average = 0.0;
    return result;
  }

  for (double tau : taus) {
    std::vector<std::vector<bool>> taken(queries.size());
    for (std::size_t q = 0; q < queries.size(); ++q)
      taken[q].assign(queries[q].ground_truth.size(), false);
    std::vector<double> precision(ranked.size()), recall(ranked.size());
    std::size_t tp = 0;
    for (std::size_t k = 0; k < ranked.size(); ++k) {
      const QueryResult& q = queries[ranked[k].query];
      const Interval& span = q.predictions[ranked[k].pred].span;
      int best = -1;
      double best_iou = -1.0;
      for (std::size_t g = 0; g < q.ground_truth.size(); ++g) {
        if (taken[ranked[k].query][g]) continue;
        const double iou = temporal_iou(span, q.ground_truth[g]);
        if (iou >= tau && iou > best_iou) {
          best_iou = iou;
          best = static_cast<int>(g);
        }
      }
      if (best >= 0) {
        taken[ranked[k].query][best] = true;
        ++tp;
      }
      precision[k] = static_cast<double>(tp) / static_cast<double>(k + 1);
      recall[k] = static_cast<double>(tp) / static_cast<double>(n_gt);
    }
    // all-points interpolation: make precision monotone from the right
    for (std::size_t k = ranked.size() - 1; k-- > 0;)
      precision[k] = std::max(precision[k], precision[k + 1]);
    double ap = 0.0, prev_recall = 0.0;
    for (std::size_t k = 0; k < ranked.size(); ++k) {
      ap += (recall[k] - prev_recall) * precision[k];
      prev_recall = recall[k];
    }
    result.per_tau[tau] = ap;
  }
  double total = 0.0;
  for (const auto& [_, ap] : result.per_tau) total += ap;
  result.average = total / static_cast<double>(result.per_tau.size());
  return result;
}

const ScoredSpan& top1(const QueryResult& q) {
  if (q.predictions.empty()) throw ValueError("top1: query " + q.id + " has no predictions");
  std::size_t best = 0;
  for (std::size_t i = 1; i < q.predictions.size(); ++i)
    if (q.predictions[i].confidence > q.predictions[best].confidence) best = i;
  return q.predictions[best];
}

EvalResult evaluate_queries(const std::vector<QueryResult>& queries) {
  if (queries.empty()) throw ValueError("evaluate_queries: no queries");
  std::vector<double> ious;
  ious.reserve(queries.size());
  for (const QueryResult& q : queries) {
    if (q.ground_truth.empty()) throw ValueError("evaluate_queries: query without ground truth");
    ious.push_back(temporal_iou(top1(q).span, q.ground_truth.front()));
  }
  EvalResult r;
  for (double tau : {0.3, 0.5, 0.7}) r.r1_at[tau] = recall_at_1(ious, tau);
  ApResult ap = mean_ap(queries, map_thresholds());
  r.map_at = ap.per_tau;
  r.map_avg = ap.average;
  r.miou = mean_iou(ious);
  r.n_queries_evaluated = queries.size();
  r.warnings = ap.warnings;
  return r;
}

std::string tau_key(double tau) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%.2f", tau);
  return buf;
}

nlohmann::json EvalResult::to_json() const {
  nlohmann::json r1 = nlohmann::json::object(), ap = nlohmann::json::object();
  for (const auto& [t, v] : r1_at) r1[tau_key(t)] = v;
  for (const auto& [t, v] : map_at) ap[tau_key(t)] = v;
  return {{"r1_at", r1},
          {"map_at", ap},
          {"map_avg", map_avg},
          {"miou", miou},
          {"n_queries_evaluated", n_queries_evaluated},
          {"warnings", warnings}};
}

EvalResult EvalResult::from_json(const nlohmann::json& j) {
  EvalResult r;
  for (const auto& [k, v] : j.at("r1_at").items()) r.r1_at[std::stod(k)] = v.get<double>();
  for (const auto& [k, v] : j.at("map_at").items()) r.map_at[std::stod(k)] = v.get<double>();
  r.map_avg = j.at("map_avg").get<double>();
  r.miou = j.at("miou").get<double>();
  r.n_queries_evaluated = j.at("n_queries_evaluated").get<std::size_t>();
  if (j.contains("warnings")) r.warnings = j.at("warnings").get<std::vector<std::string>>();
  return r;
}

std::string EvalResult::table() const {
  std::ostringstream os;
  char buf[64];
  os << "metric      value\n";
  for (const auto& [t, v] : r1_at) {
    std::snprintf(buf, sizeof buf, "R1@%-7s %7.2f\n", tau_key(t).c_str(), 100.0 * v);
    os << buf;
  }
  for (double t : {0.5, 0.75}) {
    auto it = map_at.find(t);
    if (it == map_at.end()) continue;
    std::snprintf(buf, sizeof buf, "mAP@%-6s %7.2f\n", tau_key(t).c_str(), 100.0 * it->second);
    os << buf;
  }
  std::snprintf(buf, sizeof buf, "mAP-avg    %7.2f\nmIoU       %7.2f\nqueries    %7zu\n",
                100.0 * map_avg, 100.0 * miou, n_queries_evaluated);
  os << buf;
  return os.str();
}

}  // namespace masra
