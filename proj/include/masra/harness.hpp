#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "masra/config.hpp"
#include "masra/gradcheck.hpp"
#include "masra/metrics.hpp"
#include "masra/model.hpp"

namespace masra {

/// First and second moment estimates of AdamW, per trainable parameter.
struct AdamState {
  std::map<std::string, Matrix> m;
  std::map<std::string, Matrix> v;
  std::int64_t step = 0;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  RunConfig config;
  ParamStore params;
  AdamState optimizer;
  int epoch = 0;
  nlohmann::json history = nlohmann::json::array();  // one entry per epoch
  EvalResult validation;                              // metrics of `params`
};

/// Binary layout: "MASRACKP", uint32 version, uint64 header length, JSON
/// header, then every tensor as row-major float64 (parameters, then the
/// optimizer's m and v for each trainable parameter).
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Rebuilds the network described by the checkpoint's config and installs
/// its parameters.
MasraModel model_from_checkpoint(const Checkpoint& ckpt);

/// Loads `config.dataset` when set, otherwise generates n_train + n_val
/// scenarios in memory from `data_seed`.
Dataset load_or_generate(const RunConfig& config);

/// Step size at optimizer step `step` of `total_steps` under config.lr_schedule.
double learning_rate(const RunConfig& config, std::int64_t step, std::int64_t total_steps);

/// One optimizer step of AdamW (decoupled weight decay) over `grads`.
void adamw_step(ParamStore& params, AdamState& state, const std::map<std::string, Matrix>& grads,
                double lr, double weight_decay, double beta1 = 0.9, double beta2 = 0.999,
                double eps = 1e-8);

/// Training stopped on a non-finite or diverging loss.
class TrainingAborted : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrainOptions {
  std::filesystem::path out_dir;  // empty: nothing written
  bool verbose = false;
  bool keep_best = true;  // false: return the final epoch instead
};

/// AdamW training of the overall objective with per-epoch validation. Returns
/// the checkpoint with the best validation mAP-avg (latest epoch on ties).
/// With out_dir set, writes config.json, log.jsonl, checkpoint.bin and
/// eval.json there.
Checkpoint train(const RunConfig& config, const Dataset& data, const TrainOptions& options = {});

/// Predictions for every record of `split`, one JSON-lines record each.
std::vector<nlohmann::json> predict_split(const MasraModel& model, const Dataset& data,
                                          Split split);
/// Metrics from a prediction dump, matched to the dataset by scenario id.
EvalResult evaluate_predictions(const std::vector<nlohmann::json>& dump, const Dataset& data,
                                Split split);
EvalResult evaluate(const MasraModel& model, const Dataset& data, Split split);
EvalResult evaluate(const Checkpoint& ckpt, const Dataset& data, Split split);

struct Variant {
  std::string label;
  nlohmann::json overrides = nlohmann::json::object();
};

struct AblationRun {
  std::string variant;
  std::uint64_t seed = 0;
  bool failed = false;
  std::string error;
  EvalResult result;
};

struct VariantSummary {
  std::string label;
  double mean = 0.0;  // validation mAP-avg
  double std = 0.0;   // sample standard deviation
  double r1_mean = 0.0;
  double miou_mean = 0.0;
  int completed = 0;
};

struct AblationReport {
  std::vector<Variant> variants;
  std::vector<std::uint64_t> seeds;
  std::vector<AblationRun> runs;
  std::vector<VariantSummary> summary;

  const VariantSummary& of(const std::string& label) const;
  std::string markdown() const;
  nlohmann::json to_json() const;
};

struct AblateOptions {
  std::filesystem::path out_dir;  // per-run directories under it when set
  bool verbose = false;
};

/// Trains and evaluates every (variant, seed) pair on one shared dataset.
/// A run that throws is recorded as failed and the others proceed.
AblationReport ablate(const RunConfig& base, const std::vector<Variant>& variants,
                      const std::vector<std::uint64_t>& seeds, const AblateOptions& options = {});

RunConfig apply_variant(const RunConfig& base, const Variant& variant, std::uint64_t seed);

enum class HeatmapStage { NoLrca, PreSora, PostSora };
HeatmapStage parse_heatmap_stage(const std::string& name);
const char* heatmap_stage_name(HeatmapStage stage);

struct Heatmap {
  Matrix grid;           // T x T
  Eigen::VectorXd mask;  // 1 inside the ground-truth span
};

/// `NoLrca` requires a model trained with use_lrca = false and yields its
/// refined map; `PreSora` is S and `PostSora` is the refined map.
Heatmap compute_heatmap(const MasraModel& model, const Scenario& scenario, HeatmapStage stage);

/// Writes <out_dir>/<id>.<stage>.csv and <out_dir>/<id>.mask.csv.
std::pair<std::filesystem::path, std::filesystem::path> emit_heatmap(
    const MasraModel& model, const Dataset& data, const std::string& scenario_id,
    HeatmapStage stage, const std::filesystem::path& out_dir);

/// Mean similarity inside the ground-truth block minus mean similarity
/// between ground-truth and other clips.
double block_contrast(const Matrix& grid, const Eigen::VectorXd& mask);

/// Finite-difference checks of every loss on a tiny fixed instance.
std::map<std::string, GradReport> gradient_suite(double eps = 1e-5, double tol = 1e-4);

}  // namespace masra
