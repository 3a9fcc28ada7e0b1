#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>

#include <gtest/gtest.h>

#include "masra/gradcheck.hpp"
#include "masra/grounding.hpp"
#include "test_util.hpp"

using namespace masra;
using masra::testing::bit_identical;
using masra::testing::max_abs_diff;
using masra::testing::random_matrix;

namespace {

AttentionSpec spec16() { return AttentionSpec::make(16, 2); }

GroundingHead make_head(ParamStore& store, int n_queries = 5) {
  return GroundingHead(store, "head", spec16(), n_queries, 2, 32);
}

Matrix run_head(const ParamStore& store, const GroundingHead& head, const Matrix& relevance) {
  Graph g(&store);
  return head(g, g.constant(relevance)).value();
}

// Cost evaluated without the library's matching code.
double reference_cost(const MomentPrediction& p, const GroundTruthSpan& gt, const MatchWeights& w) {
  const double s = p.center - p.width / 2.0;
  const double e = p.center + p.width / 2.0;
  const double inter = std::max(0.0, std::min(e, gt.end) - std::max(s, gt.start));
  const double uni = (e - s) + (gt.end - gt.start) - inter;
  const double hull = std::max(e, gt.end) - std::min(s, gt.start);
  const double giou = inter / uni - (hull - uni) / hull;
  return w.l1 * (std::abs(s - gt.start) + std::abs(e - gt.end)) + w.giou * (1.0 - giou) -
         w.cls * p.confidence;
}

std::vector<MomentPrediction> random_predictions(int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> c(0.15, 0.85), wd(0.05, 0.3), conf(0.0, 0.99);
  std::vector<MomentPrediction> out;
  for (int i = 0; i < n; ++i) out.push_back({c(rng), wd(rng), conf(rng)});
  return out;
}

Matrix as_raw(const std::vector<MomentPrediction>& preds) {
  Matrix m(static_cast<Eigen::Index>(preds.size()), 3);
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    m(r, 0) = preds[i].center;
    m(r, 1) = preds[i].width;
    m(r, 2) = preds[i].confidence;
  }
  return m;
}

double vtg_value(const Matrix& raw, int matched, const GroundTruthSpan& gt,
                 const MatchWeights& w = {}) {
  Graph g(nullptr);
  return vtg_loss(g.constant(raw), matched, gt, w).scalar();
}

double saliency_value(const Eigen::VectorXd& scores, const Eigen::VectorXd& labels, double margin,
                      std::vector<std::string>* warnings = nullptr) {
  Graph g(nullptr);
  return saliency_loss(g.constant(Matrix(scores)), labels, margin, warnings).scalar();
}

}  // namespace

// ---------------------------------------------------------------------------
// Spans

TEST(GroundTruthSpan, FromClipsUsesLeftEdgeAndRightEdge) {
  const GroundTruthSpan a = GroundTruthSpan::from_clips({1, 4}, 32);
  EXPECT_DOUBLE_EQ(a.start, 0.0);
  EXPECT_DOUBLE_EQ(a.end, 0.125);
  const GroundTruthSpan b = GroundTruthSpan::from_clips({29, 32}, 32);
  EXPECT_DOUBLE_EQ(b.start, 28.0 / 32.0);
  EXPECT_DOUBLE_EQ(b.end, 1.0);
  EXPECT_THROW(GroundTruthSpan::from_clips({30, 33}, 32), ValueError);
  EXPECT_THROW(GroundTruthSpan::from_clips({0, 3}, 32), ValueError);
}

TEST(GroundTruthSpan, DegenerateRejected) {
  EXPECT_THROW((GroundTruthSpan{0.5, 0.5}.validate()), ValueError);
  EXPECT_THROW((GroundTruthSpan{0.6, 0.4}.validate()), ValueError);
  EXPECT_NO_THROW((GroundTruthSpan{0.4, 0.6}.validate()));
}

TEST(MomentPrediction, SpanIsClampedRawSpanIsNot) {
  const MomentPrediction p{0.05, 0.3, 0.5};
  EXPECT_DOUBLE_EQ(p.span().start, 0.0);
  EXPECT_DOUBLE_EQ(p.span().end, 0.2);
  EXPECT_DOUBLE_EQ(p.raw_span().start, -0.1);
}

// ---------------------------------------------------------------------------
// Grounding head

TEST(GroundingHead, OutputsLieInOpenUnitInterval) {
  ParamStore store(3);
  const GroundingHead head = make_head(store);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Matrix raw = run_head(store, head, random_matrix(32, 1, seed, 3.0));
    ASSERT_EQ(raw.rows(), 5);
    ASSERT_EQ(raw.cols(), 3);
    EXPECT_GT(raw.minCoeff(), 0.0);
    EXPECT_LT(raw.maxCoeff(), 1.0);
  }
}

TEST(GroundingHead, IdenticalTokensGiveIdenticalPredictions) {
  ParamStore store(4);
  const GroundingHead head = make_head(store, 3);
  Matrix& tokens = store.value(head.token_name());
  tokens.row(1) = tokens.row(0);
  tokens.row(2) = tokens.row(0);
  const Matrix raw = run_head(store, head, random_matrix(20, 1, 9));
  EXPECT_LT(max_abs_diff(raw.row(0), raw.row(1)), 1e-14);
  EXPECT_LT(max_abs_diff(raw.row(0), raw.row(2)), 1e-14);
}

TEST(GroundingHead, FixedSeedIsReproducibleAtT32) {
  const Matrix relevance = random_matrix(32, 1, 11);
  ParamStore a(21), b(21);
  const GroundingHead ha = make_head(a);
  const GroundingHead hb = make_head(b);
  const Matrix ra = run_head(a, ha, relevance);
  EXPECT_TRUE(bit_identical(ra, run_head(b, hb, relevance)));
  EXPECT_TRUE(bit_identical(ra, run_head(a, ha, relevance)));
  // A different seed changes the output, so the check above is not vacuous.
  ParamStore c(22);
  const GroundingHead hc = make_head(c);
  EXPECT_FALSE(bit_identical(ra, run_head(c, hc, relevance)));
}

TEST(GroundingHead, ZeroQueriesIsConfigError) {
  ParamStore store(0);
  try {
    make_head(store, 0);
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.key(), "n_queries");
  }
}

TEST(GroundingHead, RelevanceMustBeColumn) {
  ParamStore store(0);
  const GroundingHead head = make_head(store);
  Graph g(&store);
  EXPECT_THROW(head(g, g.constant(Matrix::Zero(8, 2))), DimensionError);
}

TEST(GroundingHead, PredictMomentsMatchesRawRows) {
  ParamStore store(5);
  const GroundingHead head = make_head(store);
  const Matrix relevance = random_matrix(16, 1, 2);
  Graph g(&store);
  const auto preds = predict_moments(g, g.constant(relevance), head);
  const Matrix raw = run_head(store, head, relevance);
  ASSERT_EQ(preds.size(), 5u);
  for (int i = 0; i < 5; ++i) {
    EXPECT_EQ(preds[i].center, raw(i, 0));
    EXPECT_EQ(preds[i].width, raw(i, 1));
    EXPECT_EQ(preds[i].confidence, raw(i, 2));
  }
  EXPECT_THROW(to_predictions(Matrix::Zero(2, 4)), DimensionError);
}

// ---------------------------------------------------------------------------
// Saliency head

TEST(SaliencyHead, ZeroProjectionsGiveZeroScores) {
  ParamStore store(1);
  const SaliencyHead head(store, "sal", 8);
  store.value("sal.clip_proj.weight").setZero();
  Graph g(&store);
  const Matrix s =
      head(g, g.constant(random_matrix(10, 8, 1)), g.constant(random_matrix(1, 8, 2))).value();
  EXPECT_EQ(s.rows(), 10);
  EXPECT_EQ(s.cols(), 1);
  EXPECT_EQ(s.cwiseAbs().maxCoeff(), 0.0);
}

TEST(SaliencyHead, PermutationEquivariant) {
  ParamStore store(2);
  const SaliencyHead head(store, "sal", 8);
  const Matrix f = random_matrix(12, 8, 3);
  const Matrix q = random_matrix(1, 8, 4);
  std::vector<int> perm(12);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), std::mt19937_64(5));
  Matrix fp(12, 8);
  for (int i = 0; i < 12; ++i) fp.row(i) = f.row(perm[i]);
  Graph g(&store);
  const Matrix s = head(g, g.constant(f), g.constant(q)).value();
  const Matrix sp = saliency_scores(g, g.constant(fp), g.constant(q), head).value();
  for (int i = 0; i < 12; ++i) EXPECT_NEAR(sp(i, 0), s(perm[i], 0), 1e-12);
}

TEST(SaliencyHead, MatchesDirectDotProducts) {
  ParamStore store(6);
  const SaliencyHead head(store, "sal", 8);
  const Matrix f = random_matrix(7, 8, 7);
  const Matrix q = random_matrix(1, 8, 8);
  Graph g(&store);
  const Matrix s = head(g, g.constant(f), g.constant(q)).value();
  const Matrix& wc = store.value("sal.clip_proj.weight");
  const Matrix& wq = store.value("sal.query_proj.weight");
  for (int t = 0; t < 7; ++t) {
    double dot = 0.0;
    for (int c = 0; c < 8; ++c) {
      double a = 0.0, b = 0.0;
      for (int k = 0; k < 8; ++k) {
        a += f(t, k) * wc(k, c);
        b += q(0, k) * wq(k, c);
      }
      dot += a * b;
    }
    EXPECT_NEAR(s(t, 0), dot / std::sqrt(8.0), 1e-12);
  }
  EXPECT_THROW(head(g, g.constant(f), g.constant(random_matrix(2, 8, 1))), DimensionError);
}

// ---------------------------------------------------------------------------
// Matching

TEST(MatchPredictions, SingletonIsIndexZero) {
  EXPECT_EQ(match_predictions({{0.9, 0.1, 0.0}}, {0.1, 0.2}), 0);
  EXPECT_THROW(match_predictions({}, {0.1, 0.2}), ValueError);
}

TEST(MatchPredictions, ExactPredictionWinsExhaustiveEnumeration) {
  const MatchWeights w;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    std::mt19937_64 rng(seed);
    const GroundTruthSpan gt{0.3 + 0.001 * static_cast<double>(seed), 0.55};
    auto preds = random_predictions(9, seed + 1000);
    const auto slot = static_cast<std::size_t>(rng() % 10);
    preds.insert(preds.begin() + static_cast<std::ptrdiff_t>(slot),
                 {(gt.start + gt.end) / 2.0, gt.end - gt.start, 1.0});
    std::size_t best = 0;
    for (std::size_t i = 1; i < preds.size(); ++i)
      if (reference_cost(preds[i], gt, w) < reference_cost(preds[best], gt, w)) best = i;
    EXPECT_EQ(best, slot);
    EXPECT_EQ(match_predictions(preds, gt, w), static_cast<int>(best));
    for (const auto& p : preds) EXPECT_NEAR(match_cost(p, gt, w), reference_cost(p, gt, w), 1e-12);
  }
}

TEST(MatchPredictions, TiesGoToLowerIndex) {
  const MomentPrediction p{0.5, 0.2, 0.4};
  EXPECT_EQ(match_predictions({{0.9, 0.1, 0.0}, p, p, p}, {0.35, 0.6}), 1);
}

TEST(MatchPredictions, InvariantUnderUniformWeightScaling) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto preds = random_predictions(8, seed);
    const GroundTruthSpan gt{0.2, 0.45};
    const MatchWeights w;
    const int base = match_predictions(preds, gt, w);
    for (double k : {0.01, 0.5, 3.0, 1e4}) {
      EXPECT_EQ(match_predictions(preds, gt, {w.cls * k, w.l1 * k, w.giou * k}), base);
    }
  }
}

TEST(MatchPredictionsMulti, MatchesBruteForceAssignment) {
  const MatchWeights w;
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    const auto preds = random_predictions(5, seed);
    const std::vector<GroundTruthSpan> gts{{0.1, 0.3}, {0.4, 0.5}, {0.6, 0.9}};
    const std::vector<int> got = match_predictions_multi(preds, gts, w);
    ASSERT_EQ(got.size(), 3u);
    double got_cost = 0.0;
    for (int i = 0; i < 3; ++i) got_cost += reference_cost(preds[got[i]], gts[i], w);
    EXPECT_EQ(std::set<int>(got.begin(), got.end()).size(), 3u);
    double best = 1e300;
    for (int a = 0; a < 5; ++a)
      for (int b = 0; b < 5; ++b)
        for (int c = 0; c < 5; ++c) {
          if (a == b || b == c || a == c) continue;
          best = std::min(best, reference_cost(preds[a], gts[0], w) +
                                    reference_cost(preds[b], gts[1], w) +
                                    reference_cost(preds[c], gts[2], w));
        }
    EXPECT_NEAR(got_cost, best, 1e-9);
  }
}

TEST(MatchPredictionsMulti, SingleGroundTruthEqualsArgmin) {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const auto preds = random_predictions(6, seed);
    const GroundTruthSpan gt{0.25, 0.5};
    EXPECT_EQ(match_predictions_multi(preds, {gt}).at(0), match_predictions(preds, gt));
  }
  EXPECT_TRUE(match_predictions_multi(random_predictions(2, 0), {}).empty());
  EXPECT_THROW(match_predictions_multi(random_predictions(1, 0), {{0.1, 0.2}, {0.3, 0.4}}),
               ValueError);
}

// ---------------------------------------------------------------------------
// vtg loss

TEST(VtgLoss, PerfectPredictionIsZero) {
  const GroundTruthSpan gt{0.2, 0.6};
  const Matrix raw = as_raw({{0.9, 0.1, 0.0}, {0.4, 0.4, 1.0}, {0.1, 0.05, 0.0}});
  EXPECT_NEAR(vtg_value(raw, 1, gt), 0.0, 1e-12);
}

TEST(VtgLoss, HalfConfidenceLeavesOnlyClassification) {
  const GroundTruthSpan gt{0.2, 0.6};
  const Matrix raw = as_raw({{0.9, 0.1, 0.0}, {0.4, 0.4, 0.5}});
  EXPECT_NEAR(vtg_value(raw, 1, gt), -std::log(0.5) * 2.0, 1e-12);
  // Each unmatched query adds -log(1 - c) * w_cls.
  const Matrix raw2 = as_raw({{0.9, 0.1, 0.25}, {0.4, 0.4, 0.5}});
  EXPECT_NEAR(vtg_value(raw2, 1, gt), 2.0 * (-std::log(0.5) - std::log(0.75)), 1e-12);
}

TEST(VtgLoss, DisjointSpanGiouTermExceedsOne) {
  const GroundTruthSpan gt{0.6, 0.8};
  const Matrix raw = as_raw({{0.2, 0.2, 1.0}});
  const double term = vtg_value(raw, 0, gt, {0.0, 0.0, 1.0});
  const double giou = giou_1d({0.1, 0.3}, gt.interval());
  EXPECT_LT(giou, 0.0);
  EXPECT_NEAR(term, 1.0 - giou, 1e-12);
  EXPECT_GT(term, 1.0);
  EXPECT_NEAR(term, 1.0 + 3.0 / 7.0, 1e-12);
}

TEST(VtgLoss, L1TermMatchesEndpoints) {
  const GroundTruthSpan gt{0.2, 0.6};
  const Matrix raw = as_raw({{0.5, 0.2, 1.0}});
  EXPECT_NEAR(vtg_value(raw, 0, gt, {0.0, 1.0, 0.0}), 0.2, 1e-12);
}

TEST(VtgLoss, ZeroOnlyForExactSpanAndConfidences) {
  const GroundTruthSpan gt{0.2, 0.6};
  const std::vector<Matrix> near_misses{
      as_raw({{0.0, 0.1, 0.0}, {0.41, 0.4, 1.0}}), as_raw({{0.0, 0.1, 0.0}, {0.4, 0.41, 1.0}}),
      as_raw({{0.0, 0.1, 0.0}, {0.4, 0.4, 0.99}}), as_raw({{0.0, 0.1, 0.01}, {0.4, 0.4, 1.0}})};
  for (const Matrix& m : near_misses) EXPECT_GT(vtg_value(m, 1, gt), 1e-4);
}

TEST(VtgLoss, Errors) {
  Graph g(nullptr);
  const Matrix raw = as_raw({{0.4, 0.4, 0.5}});
  EXPECT_THROW(vtg_loss(g.constant(raw), 0, {0.5, 0.5}), ValueError);
  EXPECT_THROW(vtg_loss(g.constant(raw), 1, {0.1, 0.5}), ValueError);
  EXPECT_THROW(vtg_loss(g.constant(Matrix::Zero(2, 2)), 0, {0.1, 0.5}), DimensionError);
}

TEST(VtgLoss, GradientMatchesFiniteDifferences) {
  ParamStore store(8);
  store.add("p", 4, 3, Init::Normal, 1.0);
  const GroundTruthSpan gt{0.3, 0.7};
  const GradReport r = finite_diff_grad_check(
      [&](Graph& g) { return vtg_loss(ops::sigmoid(g.param("p")), 2, gt); }, store);
  EXPECT_TRUE(r.pass) << r.to_json().dump();
}

// ---------------------------------------------------------------------------
// Saliency loss

TEST(SaliencyLoss, SatisfiedMarginIsZero) {
  Eigen::VectorXd labels(6), scores(6);
  labels << 0, 1, 1, 1, 0, 0;
  scores << -1.0, 0.5, 0.35, 0.9, 0.1, 0.0;
  EXPECT_DOUBLE_EQ(saliency_value(scores, labels, 0.2), 0.0);
}

TEST(SaliencyLoss, EqualScoresGiveMargin) {
  Eigen::VectorXd labels(5);
  labels << 0, 1, 1, 0, 0;
  EXPECT_NEAR(saliency_value(Eigen::VectorXd::Constant(5, 0.7), labels, 0.2), 0.2, 1e-15);
}

TEST(SaliencyLoss, MatchesBruteForcePairsAtT8) {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> n(0.0, 0.3);
  for (int trial = 0; trial < 50; ++trial) {
    Eigen::VectorXd labels = Eigen::VectorXd::Zero(8), scores(8);
    // Inside clips [s, e] with 0 <= s < e <= 6, so clip 7 is always outside.
    const int s = static_cast<int>(rng() % 6);
    const int e = s + 1 + static_cast<int>(rng() % static_cast<std::uint64_t>(6 - s));
    for (int t = s; t <= e; ++t) labels(t) = 1.0;
    for (int t = 0; t < 8; ++t) scores(t) = n(rng);
    double sum = 0.0;
    int pairs = 0;
    for (int i = 0; i < 8; ++i)
      for (int j = 0; j < 8; ++j)
        if (labels(i) == 1.0 && labels(j) == 0.0) {
          sum += std::max(0.0, 0.2 - scores(i) + scores(j));
          ++pairs;
        }
    ASSERT_GT(pairs, 0);
    EXPECT_NEAR(saliency_value(scores, labels, 0.2), sum / pairs, 1e-12);
  }
}

TEST(SaliencyLoss, ShiftInvariantAndNonNegative) {
  Eigen::VectorXd labels = Eigen::VectorXd::Zero(10);
  labels.segment(3, 4).setOnes();
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Eigen::VectorXd scores = random_matrix(10, 1, seed);
    const double base = saliency_value(scores, labels, 0.2);
    EXPECT_GE(base, 0.0);
    for (double c : {-5.0, 0.3, 12.0}) {
      EXPECT_NEAR(saliency_value((scores.array() + c).matrix(), labels, 0.2), base, 1e-12);
    }
  }
}

TEST(SaliencyLoss, NoOutsideClipIsZeroWithWarning) {
  std::vector<std::string> warnings;
  EXPECT_EQ(saliency_value(Eigen::VectorXd::LinSpaced(6, 0, 1), Eigen::VectorXd::Ones(6), 0.2,
                           &warnings),
            0.0);
  ASSERT_EQ(warnings.size(), 1u);
  EXPECT_NE(warnings[0].find("no inside/outside"), std::string::npos);
}

TEST(SaliencyLoss, ShapeMismatchIsDimensionError) {
  Graph g(nullptr);
  EXPECT_THROW(saliency_loss(g.constant(Matrix::Zero(4, 1)), Eigen::VectorXd::Zero(5), 0.2),
               DimensionError);
}

// ---------------------------------------------------------------------------
// Overall loss

TEST(OverallLoss, ZeroLambdasReduceToVtg) {
  const LossBreakdown b = overall_loss(1.7, 2, 3, 4, 5, {0, 0, 0, 0});
  EXPECT_EQ(b.total, 1.7);
}

TEST(OverallLoss, UnitWeightsSumTo15) {
  const LossBreakdown b = overall_loss(1, 2, 3, 4, 5, {1, 1, 1, 1});
  EXPECT_EQ(b.total, 15.0);
  EXPECT_EQ(b.to_json().at("total"), 15.0);
  EXPECT_EQ(b.to_json().at("cb"), 5.0);
}

TEST(OverallLoss, DefaultLambdasMatchWeightedSum) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0.0, 5.0);
  for (int i = 0; i < 100; ++i) {
    const double v = u(rng), s = u(rng), se = u(rng), r = u(rng), c = u(rng);
    const LossBreakdown b = overall_loss(v, s, se, r, c, LossLambdas{});
    EXPECT_NEAR(b.total, v + 1.0 * s + 0.5 * se + 0.5 * r + 0.25 * c, 1e-12);
  }
}

TEST(OverallLoss, LinearInEachComponent) {
  const LossLambdas l{0.7, 0.3, 1.9, 0.05};
  const LossBreakdown base = overall_loss(1, 1, 1, 1, 1, l);
  EXPECT_NEAR(overall_loss(2, 1, 1, 1, 1, l).total - base.total, 1.0, 1e-12);
  EXPECT_NEAR(overall_loss(1, 2, 1, 1, 1, l).total - base.total, l.sal, 1e-12);
  EXPECT_NEAR(overall_loss(1, 1, 2, 1, 1, l).total - base.total, l.sem, 1e-12);
  EXPECT_NEAR(overall_loss(1, 1, 1, 2, 1, l).total - base.total, l.rel, 1e-12);
  EXPECT_NEAR(overall_loss(1, 1, 1, 1, 2, l).total - base.total, l.cb, 1e-12);
}

TEST(OverallLoss, NonFiniteComponentIsNamed) {
  const double nan = std::nan("");
  try {
    overall_loss(1, 2, 3, nan, 5, {});
    FAIL() << "expected ValueError";
  } catch (const ValueError& e) {
    EXPECT_NE(std::string(e.what()).find("relation"), std::string::npos);
  }
  Graph g(nullptr);
  try {
    overall_loss(g.scalar(1), g.scalar(INFINITY), g.scalar(3), g.scalar(4), g.scalar(5), {});
    FAIL() << "expected ValueError";
  } catch (const ValueError& e) {
    EXPECT_NE(std::string(e.what()).find("sal"), std::string::npos);
  }
}

TEST(OverallLoss, GraphFormMatchesScalarForm) {
  Graph g(nullptr);
  const LossLambdas l{1.0, 0.5, 0.5, 0.25};
  const Var t = overall_loss(g.scalar(1.5), g.scalar(0.2), g.scalar(0.8), g.scalar(0.1),
                             g.scalar(2.0), l);
  EXPECT_NEAR(t.scalar(), overall_loss(1.5, 0.2, 0.8, 0.1, 2.0, l).total, 1e-15);
}

// ---------------------------------------------------------------------------
// Prediction dump

TEST(PredictionRecord, ClampsSpansAndKeepsSaliency) {
  Eigen::VectorXd sal(3);
  sal << 0.1, -0.2, 0.3;
  const auto j = prediction_record("scn7", {{0.05, 0.3, 0.8}, {0.5, 0.2, 0.1}}, sal);
  EXPECT_EQ(j.at("scenario_id"), "scn7");
  ASSERT_EQ(j.at("spans").size(), 2u);
  EXPECT_DOUBLE_EQ(j.at("spans")[0][0].get<double>(), 0.0);
  EXPECT_DOUBLE_EQ(j.at("spans")[0][1].get<double>(), 0.2);
  EXPECT_DOUBLE_EQ(j.at("spans")[0][2].get<double>(), 0.8);
  EXPECT_DOUBLE_EQ(j.at("spans")[1][0].get<double>(), 0.4);
  EXPECT_EQ(j.at("saliency").get<std::vector<double>>(), (std::vector<double>{0.1, -0.2, 0.3}));
}
