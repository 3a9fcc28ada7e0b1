#include "masra/config.hpp"

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <variant>

#include "masra/errors.hpp"

namespace masra {

namespace {

using Field = std::variant<int*, double*, bool*, std::string*, std::uint64_t*>;

std::vector<std::pair<std::string, Field>> fields(RunConfig& c) {
  return {
      {"dataset", &c.dataset},
      {"n_train", &c.n_train},
      {"n_val", &c.n_val},
      {"data_seed", &c.data_seed},
      {"T", &c.scenario.T},
      {"L", &c.scenario.L},
      {"video_dim", &c.scenario.video_dim},
      {"query_dim", &c.scenario.query_dim},
      {"event_dim", &c.scenario.event_dim},
      {"min_events", &c.scenario.min_events},
      {"max_events", &c.scenario.max_events},
      {"noise_sigma", &c.scenario.noise_sigma},
      {"world_seed", &c.scenario.world_seed},
      {"latent_dim", &c.scenario.latent_dim},
      {"model_dim", &c.model_dim},
      {"num_heads", &c.num_heads},
      {"sge_heads", &c.sge_heads},
      {"ctx_layers", &c.ctx_layers},
      {"post_fuse_layers", &c.post_fuse_layers},
      {"decoder_layers", &c.decoder_layers},
      {"ffn_hidden", &c.ffn_hidden},
      {"codebook_size", &c.codebook_size},
      {"aux_top_k", &c.aux_top_k},
      {"n_queries", &c.n_queries},
      {"sora_hidden", &c.sora_hidden},
      {"max_clips", &c.max_clips},
      {"lambda_sal", &c.lambdas.sal},
      {"lambda_sem", &c.lambdas.sem},
      {"lambda_rel", &c.lambdas.rel},
      {"lambda_cb", &c.lambdas.cb},
      {"beta", &c.beta},
      {"w_cls", &c.match.cls},
      {"w_l1", &c.match.l1},
      {"w_giou", &c.match.giou},
      {"margin", &c.margin},
      {"multi_span", &c.multi_span},
      {"lr", &c.lr},
      {"weight_decay", &c.weight_decay},
      {"batch_size", &c.batch_size},
      {"epochs", &c.epochs},
      {"grad_clip", &c.grad_clip},
      {"lr_schedule", &c.lr_schedule},
      {"divergence_factor", &c.divergence_factor},
      {"seed", &c.seed},
      {"use_esta", &c.use_esta},
      {"use_lrca", &c.use_lrca},
      {"use_dai", &c.use_dai},
      {"use_sge", &c.use_sge},
      {"use_sora", &c.use_sora},
      {"codebook_attn_grads", &c.codebook_attn_grads},
      {"esta_source", &c.esta_source},
      {"lrca_source", &c.lrca_source},
  };
}

void read_field(const std::string& key, const Field& f, const nlohmann::json& v) {
  try {
    std::visit(
        [&](auto* p) {
          using T = std::remove_pointer_t<decltype(p)>;
          if constexpr (std::is_same_v<T, bool>) {
            if (!v.is_boolean()) throw ConfigError(key, "expected a boolean");
          } else if constexpr (std::is_same_v<T, std::string>) {
            if (!v.is_string()) throw ConfigError(key, "expected a string");
          } else if constexpr (std::is_same_v<T, double>) {
            if (!v.is_number()) throw ConfigError(key, "expected a number");
          } else if constexpr (std::is_same_v<T, std::uint64_t>) {
            if (!v.is_number_unsigned()) throw ConfigError(key, "expected a non-negative integer");
          } else {
            if (!v.is_number_integer()) throw ConfigError(key, "expected an integer");
          }
          *p = v.get<T>();
        },
        f);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(key, e.what());
  }
}

void require(bool ok, const char* key, const char* what) {
  if (!ok) throw ConfigError(key, what);
}

}  // namespace

const std::vector<std::string>& run_config_keys() {
  static const std::vector<std::string> keys = [] {
    RunConfig c;
    std::vector<std::string> k;
    for (const auto& [name, _] : fields(c)) k.push_back(name);
    return k;
  }();
  return keys;
}

void RunConfig::validate() const {
  scenario.validate();
  require(n_train >= 1, "n_train", "must be >= 1");
  require(n_val >= 1, "n_val", "must be >= 1");
  require(model_dim >= 1, "model_dim", "must be >= 1");
  require(num_heads >= 1 && model_dim % num_heads == 0, "num_heads", "must divide model_dim");
  require(sge_heads >= 1 && model_dim % sge_heads == 0, "sge_heads", "must divide model_dim");
  require(ctx_layers >= 0, "ctx_layers", "must be >= 0");
  require(post_fuse_layers >= 0, "post_fuse_layers", "must be >= 0");
  require(decoder_layers >= 1, "decoder_layers", "must be >= 1");
  require(ffn_hidden >= 1, "ffn_hidden", "must be >= 1");
  require(codebook_size >= 1, "codebook_size", "must be >= 1");
  require(aux_top_k >= 0 && aux_top_k <= codebook_size, "aux_top_k",
          "must be in [0, codebook_size]");
  require(n_queries >= 1, "n_queries", "must be >= 1");
  require(sora_hidden >= 1, "sora_hidden", "must be >= 1");
  require(max_clips >= scenario.T, "max_clips", "must be >= T");
  const std::pair<const char*, double> weights[] = {
      {"lambda_sal", lambdas.sal}, {"lambda_sem", lambdas.sem}, {"lambda_rel", lambdas.rel},
      {"lambda_cb", lambdas.cb},   {"beta", beta},              {"w_cls", match.cls},
      {"w_l1", match.l1},          {"w_giou", match.giou},      {"margin", margin},
      {"weight_decay", weight_decay}};
  for (const auto& [key, w] : weights) require(std::isfinite(w) && w >= 0.0, key, "must be >= 0");
  require(std::isfinite(lr) && lr > 0.0, "lr", "must be > 0");
  require(batch_size >= 1, "batch_size", "must be >= 1");
  require(epochs >= 0, "epochs", "must be >= 0");
  require(std::isfinite(grad_clip) && grad_clip >= 0.0, "grad_clip", "must be >= 0");
  require(lr_schedule == "constant" || lr_schedule == "cosine", "lr_schedule",
          "must be one of constant, cosine");
  require(divergence_factor > 1.0, "divergence_factor", "must be > 1");
  require(esta_source == "mllm_prior" || esta_source == "gt_only" ||
              esta_source == "visual_prior",
          "esta_source", "must be one of mllm_prior, gt_only, visual_prior");
  require(lrca_source == "text_prior" || lrca_source == "visual_self", "lrca_source",
          "must be one of text_prior, visual_self");
}

nlohmann::json RunConfig::to_json() const {
  nlohmann::json j = nlohmann::json::object();
  RunConfig copy = *this;
  for (const auto& [key, f] : fields(copy)) std::visit([&](auto* p) { j[key] = *p; }, f);
  return j;
}

RunConfig RunConfig::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("<root>", "config must be a JSON object");
  RunConfig c;
  auto table = fields(c);
  for (const auto& [key, value] : j.items()) {
    auto it = std::find_if(table.begin(), table.end(), [&](const auto& e) { return e.first == key; });
    if (it == table.end()) throw ConfigError(key, "unknown config key");
    read_field(key, it->second, value);
  }
  return c;
}

void apply_override(nlohmann::json& config, const std::string& key, const std::string& value) {
  RunConfig defaults;
  auto table = fields(defaults);
  auto it = std::find_if(table.begin(), table.end(), [&](const auto& e) { return e.first == key; });
  if (it == table.end()) throw ConfigError(key, "unknown config key");
  std::visit(
      [&](auto* p) {
        using T = std::remove_pointer_t<decltype(p)>;
        if constexpr (std::is_same_v<T, std::string>) {
          config[key] = value;
        } else {
          nlohmann::json parsed = nlohmann::json::parse(value, nullptr, false);
          if (parsed.is_discarded()) throw ConfigError(key, "cannot parse '" + value + "'");
          config[key] = parsed;
        }
      },
      it->second);
}

RunConfig resolve_config(const std::filesystem::path& file,
                         const std::map<std::string, std::string>& overrides) {
  nlohmann::json j = nlohmann::json::object();
  if (!file.empty()) {
    std::ifstream is(file);
    if (!is) throw ConfigError("config", "cannot open " + file.string());
    j = nlohmann::json::parse(is, nullptr, false);
    if (j.is_discarded()) throw ConfigError("config", "invalid JSON in " + file.string());
  }
  if (const char* env = std::getenv("MASRA_SEED"); env && *env) apply_override(j, "seed", env);
  for (const auto& [key, value] : overrides) apply_override(j, key, value);
  RunConfig c = RunConfig::from_json(j);
  c.validate();
  return c;
}

}  // namespace masra
