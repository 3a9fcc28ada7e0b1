// Command-line front end: generate, train, eval, ablate, heatmap, gradcheck.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "masra/errors.hpp"
#include "masra/harness.hpp"

namespace fs = std::filesystem;
using namespace masra;

namespace {

struct Common {
  std::string config_file;
  std::map<std::string, std::string> raw;
};

void add_config_flags(CLI::App* cmd, Common& common) {
  cmd->add_option("--config", common.config_file, "JSON run configuration");
  for (const std::string& key : run_config_keys()) {
    cmd->add_option("--" + key, common.raw[key], "override config key " + key);
  }
}

std::map<std::string, std::string> given(const CLI::App* cmd, const Common& common) {
  std::map<std::string, std::string> out;
  for (const auto& [key, value] : common.raw)
    if (cmd->count("--" + key) > 0) out[key] = value;
  return out;
}

std::vector<Variant> default_grid() {
  return {{"esta+lrca", {{"use_esta", true}, {"use_lrca", true}}},
          {"esta_only", {{"use_esta", true}, {"use_lrca", false}}},
          {"lrca_only", {{"use_esta", false}, {"use_lrca", true}}},
          {"neither", {{"use_esta", false}, {"use_lrca", false}}}};
}

std::vector<Variant> read_variants(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("variants", "cannot open " + path.string());
  const nlohmann::json j = nlohmann::json::parse(is, nullptr, false);
  if (!j.is_array()) throw ConfigError("variants", "expected a JSON array of {label, overrides}");
  std::vector<Variant> out;
  for (const auto& v : j) {
    out.push_back({v.at("label").get<std::string>(), v.value("overrides", nlohmann::json::object())});
  }
  return out;
}

std::vector<std::uint64_t> parse_seeds(const std::string& text) {
  std::vector<std::uint64_t> seeds;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      seeds.push_back(std::stoull(item));
    } catch (const std::exception&) {
      throw ConfigError("seeds", "cannot parse '" + item + "'");
    }
  }
  return seeds;
}

/// Checkpoint config with data-key overrides applied.
Checkpoint checkpoint_with_data(const fs::path& path, const std::map<std::string, std::string>& ov) {
  Checkpoint ckpt = load_checkpoint(path);
  nlohmann::json j = ckpt.config.to_json();
  for (const auto& [k, v] : ov) apply_override(j, k, v);
  ckpt.config = RunConfig::from_json(j);
  ckpt.config.validate();
  return ckpt;
}

Split parse_split(const std::string& s) {
  if (s == "train") return Split::Train;
  if (s == "val") return Split::Val;
  throw ConfigError("split", "must be train or val");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Desk-scale video temporal grounding with training-time alignment priors"};
  app.require_subcommand(1);

  Common gen_c, train_c, eval_c, ablate_c, heat_c, grad_c;
  std::string out_dir, checkpoint, split = "val", variants_file, seeds_text = "0,1,2,3,4";
  std::string scenario_id, stage;
  bool verbose = false;
  double eps = 1e-5, tol = 1e-4;

  auto* gen = app.add_subcommand("generate", "write a synthetic dataset");
  add_config_flags(gen, gen_c);
  gen->add_option("--out", out_dir, "dataset directory")->required();

  auto* tr = app.add_subcommand("train", "train and keep the best validation checkpoint");
  add_config_flags(tr, train_c);
  tr->add_option("--out", out_dir, "run directory")->required();
  tr->add_flag("-v,--verbose", verbose, "per-epoch progress on stderr");

  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint");
  add_config_flags(ev, eval_c);
  ev->add_option("--checkpoint", checkpoint, "checkpoint.bin")->required();
  ev->add_option("--split", split, "train or val");
  ev->add_option("--out", out_dir, "directory for eval.json and predictions.jsonl");

  auto* ab = app.add_subcommand("ablate", "train and evaluate variants over seeds");
  add_config_flags(ab, ablate_c);
  ab->add_option("--variants", variants_file, "JSON array of {label, overrides}");
  ab->add_option("--seeds", seeds_text, "comma-separated seeds");
  ab->add_option("--out", out_dir, "ablation directory")->required();
  ab->add_flag("-v,--verbose", verbose, "per-run progress on stderr");

  auto* hm = app.add_subcommand("heatmap", "export a similarity map and ground-truth mask");
  add_config_flags(hm, heat_c);
  hm->add_option("--checkpoint", checkpoint, "checkpoint.bin")->required();
  hm->add_option("--scenario", scenario_id, "scenario id")->required();
  hm->add_option("--stage", stage, "no_lrca | pre_sora | post_sora")->required();
  hm->add_option("--out", out_dir, "output directory")->required();

  auto* gc = app.add_subcommand("gradcheck", "finite-difference check of every loss");
  add_config_flags(gc, grad_c);
  gc->add_option("--eps", eps, "central-difference step");
  gc->add_option("--tol", tol, "maximum relative error");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n\n" << app.help();
    return 2;
  }

  try {
    if (gen->parsed()) {
      const RunConfig cfg = resolve_config(gen_c.config_file, given(gen, gen_c));
      const std::size_t n = static_cast<std::size_t>(cfg.n_train + cfg.n_val);
      write_generated_dataset(cfg.scenario, n, cfg.data_seed,
                              static_cast<double>(cfg.n_train) / static_cast<double>(n), out_dir);
      std::cout << "wrote " << n << " scenarios to " << out_dir << '\n';
    } else if (tr->parsed()) {
      const RunConfig cfg = resolve_config(train_c.config_file, given(tr, train_c));
      const Dataset data = load_or_generate(cfg);
      TrainOptions opts{out_dir, verbose};
      const Checkpoint best = train(cfg, data, opts);
      std::cout << "best epoch " << best.epoch << '\n' << best.validation.table();
    } else if (ev->parsed()) {
      const Checkpoint ckpt = checkpoint_with_data(checkpoint, given(ev, eval_c));
      const Dataset data = load_or_generate(ckpt.config);
      const MasraModel model = model_from_checkpoint(ckpt);
      const auto dump = predict_split(model, data, parse_split(split));
      const EvalResult result = evaluate_predictions(dump, data, parse_split(split));
      if (!out_dir.empty()) {
        fs::create_directories(out_dir);
        std::ofstream(fs::path(out_dir) / "eval.json") << result.to_json().dump(2) << '\n';
        std::ofstream lines(fs::path(out_dir) / "predictions.jsonl");
        for (const auto& rec : dump) lines << rec.dump() << '\n';
      }
      std::cout << result.table();
      for (const auto& w : result.warnings) std::cerr << "warning: " << w << '\n';
    } else if (ab->parsed()) {
      const RunConfig cfg = resolve_config(ablate_c.config_file, given(ab, ablate_c));
      const auto variants = variants_file.empty() ? default_grid() : read_variants(variants_file);
      const AblationReport report = ablate(cfg, variants, parse_seeds(seeds_text), {out_dir, verbose});
      std::cout << report.markdown();
    } else if (hm->parsed()) {
      const HeatmapStage st = parse_heatmap_stage(stage);
      const Checkpoint ckpt = checkpoint_with_data(checkpoint, given(hm, heat_c));
      const Dataset data = load_or_generate(ckpt.config);
      const auto [grid, mask] = emit_heatmap(model_from_checkpoint(ckpt), data, scenario_id, st,
                                             out_dir);
      std::cout << grid.string() << '\n' << mask.string() << '\n';
    } else if (gc->parsed()) {
      resolve_config(grad_c.config_file, given(gc, grad_c));
      const auto reports = gradient_suite(eps, tol);
      bool pass = true;
      nlohmann::json out;
      for (const auto& [name, r] : reports) {
        out[name] = {{"max_rel_err", r.max_rel_err}, {"pass", r.pass}};
        pass = pass && r.pass;
      }
      out["pass"] = pass;
      std::cout << out.dump(2) << '\n';
      return pass ? 0 : 1;
    }
  } catch (const ConfigError& e) {
    std::cerr << "invalid config key '" << e.key() << "': " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
