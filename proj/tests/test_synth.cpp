#include <fstream>
#include <set>

#include <gtest/gtest.h>

#include "masra/lrca.hpp"
#include "masra/synth.hpp"
#include "test_util.hpp"

using namespace masra;
using masra::testing::bit_identical;
using masra::testing::scratch_dir;

namespace {

ScenarioConfig config_with_seed(std::uint64_t seed, double noise = 0.1) {
  ScenarioConfig c;
  c.seed = seed;
  c.noise_sigma = noise;
  return c;
}

void expect_same_scenario(const Scenario& a, const Scenario& b) {
  EXPECT_EQ(a.id, b.id);
  EXPECT_EQ(a.seed, b.seed);
  EXPECT_TRUE(bit_identical(a.video, b.video));
  EXPECT_TRUE(bit_identical(a.query, b.query));
  EXPECT_EQ(a.gt_span, b.gt_span);
  EXPECT_EQ(a.target_event, b.target_event);
  EXPECT_EQ(a.event_spans, b.event_spans);
  ASSERT_EQ(a.events.size(), b.events.size());
  for (std::size_t i = 0; i < a.events.size(); ++i) {
    EXPECT_TRUE(bit_identical(a.events[i].description, b.events[i].description));
    EXPECT_EQ(a.events[i].span, b.events[i].span);
  }
  EXPECT_TRUE(bit_identical(a.clip_captions, b.clip_captions));
  EXPECT_TRUE(bit_identical(a.relation, b.relation));
  EXPECT_TRUE(bit_identical(a.saliency_gt, b.saliency_gt));
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), {}};
}

}  // namespace

TEST(ScenarioConfig, ValidationNamesTheKey) {
  ScenarioConfig c;
  c.T = 3;
  try {
    c.validate();
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.key(), "T");
  }
  c = {};
  c.min_events = 1;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.noise_sigma = -0.1;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(ScenarioConfig, JsonRoundTrip) {
  ScenarioConfig c = config_with_seed(12);
  c.T = 20;
  c.noise_sigma = 0.3;
  EXPECT_EQ(ScenarioConfig::from_json(c.to_json()), c);
}

TEST(GenerateScenario, ShapesAndLabels) {
  const Scenario sc = generate_scenario(config_with_seed(5));
  EXPECT_EQ(sc.video.rows(), 32);
  EXPECT_EQ(sc.video.cols(), 64);
  EXPECT_EQ(sc.query.rows(), 8);
  EXPECT_EQ(sc.query.cols(), 64);
  EXPECT_EQ(sc.clip_captions.rows(), 32);
  EXPECT_EQ(sc.clip_captions.cols(), 32);
  EXPECT_TRUE(sc.has_priors());
  EXPECT_GE(sc.events.size(), 3u);
  EXPECT_LE(sc.events.size(), 5u);
  for (int t = 1; t <= sc.T(); ++t) {
    const bool inside = t >= sc.gt_span.start && t <= sc.gt_span.end;
    EXPECT_EQ(sc.saliency_gt(t - 1), inside ? 1.0 : 0.0);
  }
}

TEST(GenerateScenario, ZeroNoiseMakesEventClipsIdentical) {
  const Scenario sc = generate_scenario(config_with_seed(8, 0.0));
  for (const EventPrior& e : sc.events) {
    for (int t = e.span.start + 1; t <= e.span.end; ++t) {
      EXPECT_EQ(sc.video.row(t - 1), sc.video.row(e.span.start - 1));
      EXPECT_EQ(sc.clip_captions.row(t - 1), sc.clip_captions.row(e.span.start - 1));
    }
    // Descriptions are the jitter-free caption image of the prototype.
    EXPECT_LT((sc.clip_captions.row(e.span.start - 1) - e.description).cwiseAbs().maxCoeff(), 1e-6);
  }
}

TEST(GenerateScenario, SameSeedIsBitIdentical) {
  expect_same_scenario(generate_scenario(config_with_seed(77)),
                       generate_scenario(config_with_seed(77)));
}

TEST(GenerateScenario, WithinEventCaptionCosineExceedsCrossEvent) {
  const Scenario sc = generate_scenario(config_with_seed(21, 0.1));
  std::vector<int> owner(sc.T(), -1);
  for (std::size_t i = 0; i < sc.events.size(); ++i)
    for (int t = sc.events[i].span.start; t <= sc.events[i].span.end; ++t) owner[t - 1] = int(i);
  double within = 0.0, cross = 0.0;
  int nw = 0, nc = 0;
  for (int i = 0; i < sc.T(); ++i)
    for (int j = 0; j < sc.T(); ++j) {
      if (i == j || owner[i] < 0 || owner[j] < 0) continue;
      const double c = cosine_sim(sc.clip_captions.row(i), sc.clip_captions.row(j));
      if (owner[i] == owner[j]) {
        within += c;
        ++nw;
      } else {
        cross += c;
        ++nc;
      }
    }
  ASSERT_GT(nw, 0);
  ASSERT_GT(nc, 0);
  EXPECT_GT(within / nw, cross / nc);
}

TEST(GenerateScenario, InfeasiblePartitionThrows) {
  ScenarioConfig c;
  c.T = 8;
  c.min_events = 3;
  c.max_events = 5;
  EXPECT_THROW(generate_scenario(c), ValueError);
}

TEST(GenerateScenario, SpanInvariantsOverThousandScenarios) {
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    ScenarioConfig c = config_with_seed(seed);
    c.T = 12 + static_cast<int>(seed % 21);
    c.max_events = std::min(5, c.T / 2);
    const Scenario sc = generate_scenario(c);
    int matches = 0;
    int last = 0;
    for (const EventPrior& e : sc.events) {
      ASSERT_GE(e.span.start, 1);
      ASSERT_LE(e.span.start, e.span.end);
      ASSERT_LE(e.span.end, sc.T());
      ASSERT_GT(e.span.start, last) << "overlap at seed " << seed;
      last = e.span.end;
      matches += e.span == sc.gt_span;
    }
    ASSERT_EQ(matches, 1) << "seed " << seed;
    ASSERT_LT(sc.gt_span.start, sc.gt_span.end);
    ASSERT_EQ(sc.events[static_cast<std::size_t>(sc.target_event)].span, sc.gt_span);
  }
}

TEST(GenerateScenario, ZeroNoiseRelationIsBlockConstant) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Scenario sc = generate_scenario(config_with_seed(seed, 0.0));
    const SimilarityMatrix r = textual_relation_matrix(sc.clip_captions);
    std::vector<int> owner(sc.T(), -1);
    for (std::size_t i = 0; i < sc.events.size(); ++i)
      for (int t = sc.events[i].span.start; t <= sc.events[i].span.end; ++t) owner[t - 1] = int(i);
    // Clips with the same owner (background included) have identical rows of R.
    for (int i = 0; i < sc.T(); ++i)
      for (int k = 0; k < sc.T(); ++k)
        if (owner[i] == owner[k]) EXPECT_EQ(r.row(i), r.row(k)) << "seed " << seed;
  }
}

TEST(GenerateDataset, SingletonEqualsGenerateScenario) {
  const ScenarioConfig c = config_with_seed(0);
  const Dataset ds = generate_dataset(c, 1, 314);
  ASSERT_EQ(ds.size(), 1u);
  expect_same_scenario(ds[0], generate_scenario(config_with_seed(314)));
}

TEST(GenerateDataset, SeedsAreConsecutiveAndSplitCountsExact) {
  const Dataset ds = generate_dataset(ScenarioConfig{}, 100, 50, 0.8);
  for (std::size_t i = 0; i < ds.size(); ++i) EXPECT_EQ(ds[i].seed, 50 + i);
  EXPECT_EQ(ds.indices(Split::Train).size(), 80u);
  EXPECT_EQ(ds.indices(Split::Val).size(), 20u);
  EXPECT_EQ(assign_splits(100, 50, 0.8), assign_splits(100, 50, 0.8));
  EXPECT_THROW(generate_dataset(ScenarioConfig{}, 0, 1), ValueError);
}

TEST(GenerateDataset, StreamingMatchesInMemory) {
  ScenarioStream stream(ScenarioConfig{}, 5, 9);
  const Dataset ds = generate_dataset(ScenarioConfig{}, 5, 9);
  for (std::size_t i = 0; !stream.done(); ++i) {
    const DatasetRecord rec = stream.next();
    EXPECT_EQ(rec.split, ds.record(i).split);
    expect_same_scenario(rec.scenario, ds[i]);
  }
  EXPECT_THROW(stream.next(), std::out_of_range);
}

TEST(DatasetIO, HundredRecordsAreByteReproducible) {
  const auto a = scratch_dir("synth_repro_a"), b = scratch_dir("synth_repro_b");
  const auto ma = write_generated_dataset(ScenarioConfig{}, 100, 3, 0.8, a);
  const auto mb = write_generated_dataset(ScenarioConfig{}, 100, 3, 0.8, b);
  EXPECT_EQ(ma, mb);
  EXPECT_EQ(slurp(a / "manifest.json"), slurp(b / "manifest.json"));
  std::size_t train = 0;
  for (const auto& r : ma.at("records")) {
    train += r.at("split") == "train";
    for (const auto& [name, arr] : r.at("arrays").items()) {
      const std::string file = arr.at("file");
      EXPECT_EQ(slurp(a / "records" / file), slurp(b / "records" / file)) << file;
    }
  }
  EXPECT_EQ(train, 80u);
}

TEST(DatasetIO, RoundTripIsExactAtFloat32) {
  const auto dir = scratch_dir("synth_roundtrip");
  const Dataset ds = generate_dataset(ScenarioConfig{}, 100, 11);
  save_dataset(ds, dir);
  const Dataset back = load_dataset(dir);
  ASSERT_EQ(back.size(), ds.size());
  EXPECT_EQ(back.config(), ds.config());
  double worst = 0.0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    EXPECT_EQ(back.record(i).split, ds.record(i).split);
    expect_same_scenario(back[i], ds[i]);
    worst = std::max(worst, (back[i].video - ds[i].video).cwiseAbs().maxCoeff());
  }
  EXPECT_EQ(worst, 0.0);
}

TEST(DatasetIO, BlobHeaderLayout) {
  const auto dir = scratch_dir("synth_blob");
  Matrix m(2, 3);
  m << 1, 2, 3, 4, 5, 6.5;
  write_blob(dir / "x.f32", m);
  const std::string bytes = slurp(dir / "x.f32");
  ASSERT_EQ(bytes.size(), 8u + 4u + 4u + 6u * 4u);
  EXPECT_EQ(bytes.substr(0, 8), "MASRAF32");
  std::uint32_t rows = 0, cols = 0;
  float last = 0.0f;
  std::memcpy(&rows, bytes.data() + 8, 4);
  std::memcpy(&cols, bytes.data() + 12, 4);
  std::memcpy(&last, bytes.data() + 16 + 5 * 4, 4);
  EXPECT_EQ(rows, 2u);
  EXPECT_EQ(cols, 3u);
  EXPECT_EQ(last, 6.5f);
  EXPECT_EQ(read_blob(dir / "x.f32"), m);
}

TEST(DatasetIO, ManifestShapeDisagreementIsAnError) {
  const auto dir = scratch_dir("synth_shape");
  save_dataset(generate_dataset(ScenarioConfig{}, 1, 4), dir);
  const Scenario sc = load_dataset(dir)[0];
  // Blob now holds 31 rows while the manifest still claims 32.
  write_blob(dir / "records" / (sc.id + ".video.f32"), sc.video.topRows(31));
  try {
    load_dataset(dir);
    FAIL() << "expected DatasetError";
  } catch (const DatasetError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find(sc.id), std::string::npos) << msg;
    EXPECT_NE(msg.find("(32x64)"), std::string::npos) << msg;
  }
}

TEST(DatasetIO, TruncatedBlobNamesTheRecord) {
  const auto dir = scratch_dir("synth_trunc");
  save_dataset(generate_dataset(ScenarioConfig{}, 2, 4), dir);
  const auto path = dir / "records" / "scn5.query.f32";
  const std::string bytes = slurp(path);
  std::ofstream(path, std::ios::binary | std::ios::trunc) << bytes.substr(0, bytes.size() - 7);
  try {
    load_dataset(dir);
    FAIL() << "expected DatasetError";
  } catch (const DatasetError& e) {
    EXPECT_NE(std::string(e.what()).find("scn5"), std::string::npos) << e.what();
  }
}

TEST(DatasetIO, MissingManifestAndUnwritableDirErrorWithPath) {
  const auto dir = scratch_dir("synth_missing");
  try {
    load_dataset(dir);
    FAIL();
  } catch (const DatasetError& e) {
    EXPECT_NE(std::string(e.what()).find(dir.string()), std::string::npos);
  }
  const auto blocker = dir / "file";
  std::ofstream(blocker) << "x";
  try {
    save_dataset(generate_dataset(ScenarioConfig{}, 1, 1), blocker / "sub");
    FAIL();
  } catch (const DatasetError& e) {
    EXPECT_NE(std::string(e.what()).find("sub"), std::string::npos);
  }
}

TEST(DatasetIO, StripPriorsRemovesOnlyTrainingArrays) {
  const auto dir = scratch_dir("synth_strip");
  save_dataset(generate_dataset(ScenarioConfig{}, 10, 2), dir);
  strip_priors(dir, Split::Val);
  const Dataset ds = load_dataset(dir);
  const Dataset fresh = generate_dataset(ScenarioConfig{}, 10, 2);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const bool val = ds.record(i).split == Split::Val;
    EXPECT_EQ(ds[i].has_priors(), !val);
    EXPECT_EQ(ds[i].relation.size() == 0, val);
    EXPECT_TRUE(bit_identical(ds[i].video, fresh[i].video));
    EXPECT_TRUE(bit_identical(ds[i].query, fresh[i].query));
    EXPECT_EQ(ds[i].gt_span, fresh[i].gt_span);
  }
  for (const auto& entry : std::filesystem::directory_iterator(dir / "records")) {
    const std::string name = entry.path().filename().string();
    if (name.find(".captions.") == std::string::npos) continue;
    const std::string id = name.substr(0, name.find('.'));
    for (std::size_t i = 0; i < ds.size(); ++i)
      if (ds[i].id == id) EXPECT_EQ(ds.record(i).split, Split::Train);
  }
}
