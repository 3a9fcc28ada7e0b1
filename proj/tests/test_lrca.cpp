#include <gtest/gtest.h>

#include "masra/gradcheck.hpp"
#include "masra/lrca.hpp"
#include "masra/synth.hpp"
#include "test_util.hpp"

using namespace masra;
using masra::testing::max_abs_diff;
using masra::testing::random_matrix;
using masra::testing::scratch_dir;

// ---------------------------------------------------------------------------
// similarity_matrix / textual_relation_matrix

TEST(SimilarityMatrix, IdenticalRowsGiveAllOnes) {
  const Matrix e = random_matrix(1, 6, 2).replicate(4, 1);
  EXPECT_LT(max_abs_diff(similarity_matrix(e), Matrix::Ones(4, 4)), 1e-12);
  Graph g;
  EXPECT_LT(max_abs_diff(similarity_matrix(g.constant(e)).value(), Matrix::Ones(4, 4)), 1e-12);
}

TEST(SimilarityMatrix, OrthogonalRowsGiveIdentity) {
  Matrix e = Matrix::Zero(3, 5);
  e(0, 0) = 2.0;
  e(1, 3) = -0.5;
  e(2, 4) = 7.0;
  EXPECT_LT(max_abs_diff(similarity_matrix(e), Matrix::Identity(3, 3)), 1e-15);
}

TEST(SimilarityMatrix, MatchesPairwiseCosineLoop) {
  const Matrix e = random_matrix(5, 6, 3);
  Graph g;
  const Matrix s = similarity_matrix(g.constant(e)).value();
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 5; ++j) EXPECT_NEAR(s(i, j), cosine_sim(e.row(i), e.row(j)), 1e-12);
  EXPECT_LT(max_abs_diff(similarity_matrix(e), s), 1e-12);
}

TEST(SimilarityMatrix, SymmetricBoundedUnitDiagonal) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const SimilarityMatrix s = similarity_matrix(random_matrix(7, 4, seed));
    EXPECT_LT(max_abs_diff(s, s.transpose()), 1e-12);
    EXPECT_LE(s.cwiseAbs().maxCoeff(), 1.0);
    EXPECT_LT((s.diagonal().array() - 1.0).abs().maxCoeff(), 1e-12);
  }
}

TEST(SimilarityMatrix, ZeroRowIsZeroNeverNaN) {
  Matrix e = random_matrix(4, 3, 1);
  e.row(2).setZero();
  const SimilarityMatrix s = similarity_matrix(e);
  EXPECT_TRUE(s.allFinite());
  EXPECT_EQ(s.row(2).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(s.col(2).cwiseAbs().maxCoeff(), 0.0);
  Graph g;
  EXPECT_TRUE(similarity_matrix(g.constant(e)).value().allFinite());
}

TEST(SimilarityMatrix, SingleRowThrows) {
  EXPECT_THROW(similarity_matrix(Matrix::Ones(1, 3)), DimensionError);
  EXPECT_THROW(textual_relation_matrix(Matrix::Ones(1, 3)), DimensionError);
}

TEST(TextualRelation, ZeroNoiseIsBlockConstantAndIdenticalCaptionsAllOnes) {
  ScenarioConfig c;
  c.noise_sigma = 0.0;
  c.seed = 3;
  const Scenario sc = generate_scenario(c);
  const SimilarityMatrix r = textual_relation_matrix(sc.clip_captions);
  for (const auto& e : sc.events)
    for (int i = e.span.start; i <= e.span.end; ++i)
      for (int j = e.span.start; j <= e.span.end; ++j) {
        EXPECT_NEAR(r(i - 1, j - 1), 1.0, 1e-12);
        EXPECT_EQ(r.row(i - 1), r.row(j - 1));
      }
  EXPECT_LT(max_abs_diff(textual_relation_matrix(random_matrix(1, 8, 4).replicate(5, 1)),
                         Matrix::Ones(5, 5)),
            1e-12);
}

TEST(TextualRelation, MatchesBruteForceOnSyntheticScenario) {
  ScenarioConfig c;
  c.seed = 17;
  const Scenario sc = generate_scenario(c);
  const SimilarityMatrix r = textual_relation_matrix(sc.clip_captions);
  ASSERT_EQ(r.rows(), 32);
  for (int i = 0; i < 32; ++i)
    for (int j = 0; j < 32; ++j) {
      double dot = 0.0, ni = 0.0, nj = 0.0;
      for (int k = 0; k < sc.clip_captions.cols(); ++k) {
        dot += sc.clip_captions(i, k) * sc.clip_captions(j, k);
        ni += sc.clip_captions(i, k) * sc.clip_captions(i, k);
        nj += sc.clip_captions(j, k) * sc.clip_captions(j, k);
      }
      EXPECT_NEAR(r(i, j), dot / std::sqrt(ni * nj), 1e-12);
    }
}

// ---------------------------------------------------------------------------
// relation_loss

TEST(RelationLoss, AnalyticCases) {
  const Matrix s = random_matrix(4, 4, 1);
  EXPECT_EQ(relation_loss(s, s), 0.0);
  EXPECT_DOUBLE_EQ(relation_loss(Matrix::Ones(2, 2), Matrix::Identity(2, 2)), 0.5);
  Graph g;
  EXPECT_DOUBLE_EQ(relation_loss(g.constant(Matrix::Ones(2, 2)), Matrix::Identity(2, 2)).scalar(), 0.5);
}

TEST(RelationLoss, MatchesElementwiseSummation) {
  const Matrix s = random_matrix(8, 8, 5), r = random_matrix(8, 8, 6);
  double acc = 0.0;
  for (int i = 0; i < 8; ++i)
    for (int j = 0; j < 8; ++j) acc += (s(i, j) - r(i, j)) * (s(i, j) - r(i, j));
  EXPECT_NEAR(relation_loss(s, r), acc / 64.0, 1e-12);
  Graph g;
  EXPECT_NEAR(relation_loss(g.constant(s), r).scalar(), acc / 64.0, 1e-12);
}

TEST(RelationLoss, SymmetricValueOneSidedGradient) {
  const Matrix a = random_matrix(5, 5, 1), b = random_matrix(5, 5, 2);
  EXPECT_DOUBLE_EQ(relation_loss(a, b), relation_loss(b, a));
  ParamStore store;
  store.add("s", 5, 5, Init::Zeros);
  store.value("s") = a;
  Graph g(&store);
  Var l = relation_loss(g.param("s"), b);
  g.backward(l);
  EXPECT_LT(max_abs_diff(g.param_grads().at("s"), 2.0 * (a - b) / 25.0), 1e-15);
}

TEST(RelationLoss, SizeMismatchThrows) {
  EXPECT_THROW(relation_loss(Matrix::Ones(3, 3), Matrix::Ones(4, 4)), DimensionError);
}

TEST(RelationLoss, GradientThroughSimilarityMatchesCentralDifferences) {
  ParamStore store(3);
  store.add("e", 6, 4, Init::Normal);
  const SimilarityMatrix r = similarity_matrix(random_matrix(6, 3, 9));
  const GradReport rep = finite_diff_grad_check(
      [&](Graph& g) { return relation_loss(similarity_matrix(g.param("e")), r); }, store);
  EXPECT_TRUE(rep.pass) << rep.to_json().dump();
}

TEST(RelationLoss, DrivesZeroNoiseScenariosTowardBlockStructure) {
  // Features are free parameters; only the relation loss shapes them.
  double mean_gap = 0.0;
  const int seeds = 20;
  for (int seed = 0; seed < seeds; ++seed) {
    ScenarioConfig c;
    c.noise_sigma = 0.0;
    c.seed = static_cast<std::uint64_t>(seed);
    const Scenario sc = generate_scenario(c);
    const SimilarityMatrix r = textual_relation_matrix(sc.clip_captions);
    ParamStore store(static_cast<std::uint64_t>(seed));
    store.add("e", sc.T(), 16, Init::Normal);
    for (int step = 0; step < 300; ++step) {
      Graph g(&store);
      Var l = relation_loss(similarity_matrix(g.param("e")), r);
      g.backward(l);
      store.value("e") -= 20.0 * g.param_grads().at("e");
    }
    const SimilarityMatrix s = similarity_matrix(store.value("e"));
    std::vector<int> owner(sc.T(), -1);
    for (std::size_t i = 0; i < sc.events.size(); ++i)
      for (int t = sc.events[i].span.start; t <= sc.events[i].span.end; ++t) owner[t - 1] = int(i);
    double within = 0.0, cross = 0.0;
    int nw = 0, nc = 0;
    for (int i = 0; i < sc.T(); ++i)
      for (int j = 0; j < sc.T(); ++j) {
        if (i == j || owner[i] < 0 || owner[j] < 0) continue;
        (owner[i] == owner[j] ? within : cross) += s(i, j);
        ++(owner[i] == owner[j] ? nw : nc);
      }
    mean_gap += within / nw - cross / nc;
  }
  EXPECT_GT(mean_gap / seeds, 0.5);
}

// ---------------------------------------------------------------------------
// sora_refine

TEST(SoraRefine, ZeroInitializedFinalConvIsExactNoOp) {
  ParamStore store(5);
  SecondOrderRelationalAttention sora(store, "sora", 8, 8);
  const Matrix e = random_matrix(6, 8, 1);
  Graph g(&store);
  Var s = similarity_matrix(g.constant(e));
  const auto out = sora_refine(g, s, g.constant(e), sora);
  EXPECT_EQ(out.refined.value(), s.value());
}

TEST(SoraRefine, MatchesDirectEvaluationOfRefineAndMix) {
  ParamStore store(5);
  SecondOrderRelationalAttention sora(store, "sora", 4, 2);
  store.value("sora.conv2.weight") = random_matrix(1, 18, 3, 0.5);
  store.value("sora.conv1.bias") = random_matrix(2, 1, 4, 0.1);
  store.value("sora.conv2.bias") = random_matrix(1, 1, 5, 0.1);
  const Matrix e = random_matrix(5, 4, 1);
  Graph g(&store);
  Var s = similarity_matrix(g.constant(e));
  const auto out = sora(g, s, g.constant(e));
  const Matrix sv = s.value();
  const int t = 5;
  auto conv = [&](const std::vector<Matrix>& in, const Matrix& w, const Matrix& b) {
    std::vector<Matrix> outp;
    for (Eigen::Index oc = 0; oc < w.rows(); ++oc) {
      Matrix o = Matrix::Constant(t, t, b(oc, 0));
      for (std::size_t ic = 0; ic < in.size(); ++ic)
        for (int i = 0; i < t; ++i)
          for (int j = 0; j < t; ++j)
            for (int dy = -1; dy <= 1; ++dy)
              for (int dx = -1; dx <= 1; ++dx) {
                const int y = i + dy, x = j + dx;
                if (y < 0 || y >= t || x < 0 || x >= t) continue;
                o(i, j) += w(oc, static_cast<Eigen::Index>(ic) * 9 + (dy + 1) * 3 + (dx + 1)) * in[ic](y, x);
              }
      outp.push_back(o);
    }
    return outp;
  };
  auto hidden = conv({sv}, store.value("sora.conv1.weight"), store.value("sora.conv1.bias"));
  for (Matrix& h : hidden) h = h.cwiseMax(0.0);
  const Matrix refined = sv + conv(hidden, store.value("sora.conv2.weight"), store.value("sora.conv2.bias"))[0];
  EXPECT_LT(max_abs_diff(out.refined.value(), refined), 1e-12);

  Matrix mlp = e * store.value("sora.mlp.0.weight");
  mlp.rowwise() += store.value("sora.mlp.0.bias").row(0);
  mlp = mlp.cwiseMax(0.0) * store.value("sora.mlp.1.weight");
  mlp.rowwise() += store.value("sora.mlp.1.bias").row(0);
  Matrix w(t, t);
  for (int i = 0; i < t; ++i) {
    double z = 0.0;
    for (int j = 0; j < t; ++j) z += std::exp(refined(i, j));
    for (int j = 0; j < t; ++j) w(i, j) = std::exp(refined(i, j)) / z;
  }
  EXPECT_LT(max_abs_diff(out.features.value(), w * mlp), 1e-12);
}

TEST(SoraRefine, UniformMapAveragesMlpRows) {
  ParamStore store(5);
  SecondOrderRelationalAttention sora(store, "sora", 4, 2);
  const Matrix e = random_matrix(6, 4, 1);
  Graph g(&store);
  const auto out = sora(g, g.constant(Matrix::Constant(6, 6, 0.3)), g.constant(e), false);
  Matrix m = e * store.value("sora.mlp.0.weight");
  m.rowwise() += store.value("sora.mlp.0.bias").row(0);
  m = m.cwiseMax(0.0) * store.value("sora.mlp.1.weight");
  m.rowwise() += store.value("sora.mlp.1.bias").row(0);
  for (int i = 0; i < 6; ++i)
    EXPECT_LT((out.features.value().row(i) - m.colwise().mean()).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(SoraRefine, RowsInConvexHullOfMlpRows) {
  ParamStore store(5);
  SecondOrderRelationalAttention sora(store, "sora", 4, 3);
  store.value("sora.conv2.weight") = random_matrix(1, 27, 8);
  const Matrix e = random_matrix(7, 4, 1);
  Graph g(&store);
  Var s = similarity_matrix(g.constant(e));
  const auto out = sora(g, s, g.constant(e));
  const Matrix w = [&] {
    Matrix r = out.refined.value();
    for (Eigen::Index i = 0; i < r.rows(); ++i) {
      r.row(i) = (r.row(i).array() - r.row(i).maxCoeff()).exp();
      r.row(i) /= r.row(i).sum();
    }
    return r;
  }();
  EXPECT_LT((w.rowwise().sum().array() - 1.0).abs().maxCoeff(), 1e-12);
  EXPECT_GE(w.minCoeff(), 0.0);
  // Each coordinate of F lies between the column min and max of MLP(E).
  Matrix m = e * store.value("sora.mlp.0.weight");
  m.rowwise() += store.value("sora.mlp.0.bias").row(0);
  m = m.cwiseMax(0.0) * store.value("sora.mlp.1.weight");
  m.rowwise() += store.value("sora.mlp.1.bias").row(0);
  const Matrix f = out.features.value();
  for (Eigen::Index c = 0; c < f.cols(); ++c) {
    EXPECT_GE(f.col(c).minCoeff(), m.col(c).minCoeff() - 1e-12);
    EXPECT_LE(f.col(c).maxCoeff(), m.col(c).maxCoeff() + 1e-12);
  }
}

TEST(SoraRefine, TinyMapsUsePaddingWithoutError) {
  ParamStore store(5);
  SecondOrderRelationalAttention sora(store, "sora", 4, 2);
  store.value("sora.conv2.weight") = random_matrix(1, 18, 3);
  const Matrix e = random_matrix(2, 4, 1);
  Graph g(&store);
  Var s = similarity_matrix(g.constant(e));
  const auto out = sora(g, s, g.constant(e));
  EXPECT_EQ(out.refined.rows(), 2);
  EXPECT_TRUE(out.features.value().allFinite());
}

TEST(SoraRefine, MismatchedShapesThrow) {
  ParamStore store(5);
  SecondOrderRelationalAttention sora(store, "sora", 4, 2);
  Graph g(&store);
  EXPECT_THROW(sora(g, g.constant(Matrix::Ones(3, 3)), g.constant(Matrix::Ones(4, 4))), DimensionError);
}

TEST(SoraRefine, GradientMatchesCentralDifferences) {
  ParamStore store(5);
  SecondOrderRelationalAttention sora(store, "sora", 4, 2);
  store.value("sora.conv2.weight") = random_matrix(1, 18, 3, 0.3);
  const Matrix e = random_matrix(5, 4, 1);
  const Matrix w = random_matrix(5, 4, 2);
  const GradReport r = finite_diff_grad_check(
      [&](Graph& g) {
        Var s = similarity_matrix(g.constant(e));
        return ops::sum(ops::hadamard(sora(g, s, g.constant(e)).features, g.constant(w)));
      },
      store);
  EXPECT_TRUE(r.pass) << r.to_json().dump();
}

// ---------------------------------------------------------------------------
// CSV grid export

TEST(CsvGrid, RoundTripIsExact) {
  const auto dir = scratch_dir("lrca_csv");
  const Matrix m = random_matrix(4, 4, 3);
  write_csv_grid(dir / "g.csv", m);
  EXPECT_EQ(read_csv_grid(dir / "g.csv"), m);
}
