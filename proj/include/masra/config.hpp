#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

#include <nlohmann/json.hpp>

#include "masra/grounding.hpp"
#include "masra/synth.hpp"

namespace masra {

/// Flat run configuration. Every field is a JSON key of the same name.
struct RunConfig {
  // data: an existing dataset directory, or generated in memory when empty
  std::string dataset;
  int n_train = 500;
  int n_val = 100;
  std::uint64_t data_seed = 7;
  ScenarioConfig scenario;

  // model
  int model_dim = 64;
  int num_heads = 4;
  int sge_heads = 4;
  int ctx_layers = 2;
  int post_fuse_layers = 1;
  int decoder_layers = 2;
  int ffn_hidden = 128;
  int codebook_size = 128;
  int aux_top_k = 8;
  int n_queries = 5;
  int sora_hidden = 8;
  int max_clips = 64;

  // loss
  LossLambdas lambdas;
  double beta = 0.25;
  MatchWeights match;
  double margin = 0.2;
  bool multi_span = false;

  // optimizer
  double lr = 1e-3;
  double weight_decay = 1e-4;
  int batch_size = 16;
  int epochs = 40;
  double grad_clip = 0.1;                // global gradient-norm cap; 0 disables
  std::string lr_schedule = "constant";  // constant | cosine
  double divergence_factor = 10.0;

  std::uint64_t seed = 0;

  // toggles
  bool use_esta = true;
  bool use_lrca = true;
  bool use_dai = true;
  bool use_sge = true;
  bool use_sora = true;
  bool codebook_attn_grads = true;
  std::string esta_source = "mllm_prior";  // mllm_prior | gt_only | visual_prior
  std::string lrca_source = "text_prior";  // text_prior | visual_self

  /// Throws ConfigError naming the offending key.
  void validate() const;
  nlohmann::json to_json() const;
  /// Starts from defaults; unknown keys are a ConfigError.
  static RunConfig from_json(const nlohmann::json& j);
  AttentionSpec attention() const { return AttentionSpec::make(model_dim, num_heads); }
};

/// All flat key names accepted by RunConfig::from_json.
const std::vector<std::string>& run_config_keys();

/// Applies one `--key value` override given as text. The value is parsed
/// with the type of the existing field.
void apply_override(nlohmann::json& config, const std::string& key, const std::string& value);

/// file (optional) < MASRA_SEED < explicit overrides.
RunConfig resolve_config(const std::filesystem::path& file,
                         const std::map<std::string, std::string>& overrides);

}  // namespace masra
