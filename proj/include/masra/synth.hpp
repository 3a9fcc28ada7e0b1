#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "masra/nn.hpp"

namespace masra {

/// Inclusive clip-index span, 1-based: 1 <= start <= end <= T.
struct Span {
  int start = 1;
  int end = 1;
  int length() const { return end - start + 1; }
  bool operator==(const Span&) const = default;
};

struct ScenarioConfig {
  int T = 32;          // clips
  int L = 8;           // query tokens
  int video_dim = 64;  // raw video feature width
  int query_dim = 64;  // raw query feature width
  int event_dim = 32;  // caption / description embedding width (D)
  int min_events = 3;
  int max_events = 5;
  double noise_sigma = 0.1;
  std::uint64_t seed = 0;
  // Seeds the shared latent-to-feature maps. Scenarios generated with the
  // same world seed live in the same feature space.
  std::uint64_t world_seed = 20240917;
  int latent_dim = 16;

  void validate() const;
  nlohmann::json to_json() const;
  static ScenarioConfig from_json(const nlohmann::json& j);
  bool operator==(const ScenarioConfig&) const = default;
};

struct EventPrior {
  Vector description;  // length D
  Span span;
};

struct Scenario {
  std::string id;
  std::uint64_t seed = 0;
  Tensor2D video;          // T x video_dim
  Tensor2D query;          // L x query_dim
  Span gt_span;
  int target_event = -1;   // index into events; -1 when priors are absent
  std::vector<Span> event_spans;
  std::vector<EventPrior> events;  // empty when priors were stripped
  Tensor2D clip_captions;          // T x D, empty when stripped
  Tensor2D relation;               // cached caption relation matrix, may be empty
  Vector saliency_gt;              // length T, 1 inside gt_span

  int T() const { return static_cast<int>(video.rows()); }
  bool has_priors() const { return !events.empty() && clip_captions.size() > 0; }
};

/// One synthetic grounding instance drawn from `config.seed`.
Scenario generate_scenario(const ScenarioConfig& config);

enum class Split { Train, Val };
const char* split_name(Split s);

struct DatasetRecord {
  Scenario scenario;
  Split split = Split::Train;
};

/// In-memory collection of scenarios sharing one generator config.
class Dataset {
 public:
  Dataset() = default;
  Dataset(ScenarioConfig config, std::uint64_t base_seed, double train_fraction,
          std::vector<DatasetRecord> records);

  std::size_t size() const { return records_.size(); }
  const DatasetRecord& record(std::size_t i) const { return records_.at(i); }
  const Scenario& operator[](std::size_t i) const { return records_.at(i).scenario; }
  std::vector<std::size_t> indices(Split split) const;
  const ScenarioConfig& config() const { return config_; }
  std::uint64_t base_seed() const { return base_seed_; }
  double train_fraction() const { return train_fraction_; }
  const std::vector<DatasetRecord>& records() const { return records_; }

 private:
  ScenarioConfig config_;
  std::uint64_t base_seed_ = 0;
  double train_fraction_ = 0.8;
  std::vector<DatasetRecord> records_;
};

/// Train/val tags for n records: exactly round(n * train_fraction) train
/// records, chosen by a permutation seeded from base_seed.
std::vector<Split> assign_splits(std::size_t n, std::uint64_t base_seed, double train_fraction);

/// Lazily generates the scenarios of a dataset one at a time.
class ScenarioStream {
 public:
  ScenarioStream(ScenarioConfig config, std::size_t n, std::uint64_t base_seed,
                 double train_fraction = 0.8);
  bool done() const { return next_ >= n_; }
  DatasetRecord next();

 private:
  ScenarioConfig config_;
  std::size_t n_;
  std::uint64_t base_seed_;
  std::vector<Split> splits_;
  std::size_t next_ = 0;
};

Dataset generate_dataset(const ScenarioConfig& config, std::size_t n, std::uint64_t base_seed,
                         double train_fraction = 0.8);

// ---------------------------------------------------------------------------
// On-disk layout
//
//   <dir>/manifest.json
//   <dir>/records/<id>.<array>.f32
//
// Every .f32 blob is: 8-byte magic "MASRAF32", uint32 rows, uint32 cols
// (little-endian), then rows*cols little-endian float32 values, row-major.
// The manifest lists each record's id, seed, split, spans and, per array,
// the blob file name and shape. Arrays: video, query, saliency, and the
// training-only priors captions, events, relation.
// ---------------------------------------------------------------------------

inline constexpr char kBlobMagic[8] = {'M', 'A', 'S', 'R', 'A', 'F', '3', '2'};
inline constexpr int kManifestVersion = 1;

void write_blob(const std::filesystem::path& path, const Tensor2D& m);
Tensor2D read_blob(const std::filesystem::path& path);

/// Writes manifest + blobs. Returns the manifest that was written.
nlohmann::json save_dataset(const Dataset& ds, const std::filesystem::path& dir);
/// Streams `n` generated scenarios straight to disk.
nlohmann::json write_generated_dataset(const ScenarioConfig& config, std::size_t n,
                                       std::uint64_t base_seed, double train_fraction,
                                       const std::filesystem::path& dir);
Dataset load_dataset(const std::filesystem::path& dir);

/// Removes the training-only prior arrays (captions, events, relation) of the
/// records in `split` from disk and from the manifest.
void strip_priors(const std::filesystem::path& dir, std::optional<Split> split = std::nullopt);

}  // namespace masra
