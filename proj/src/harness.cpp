#include "masra/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <numbers>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "masra/errors.hpp"

namespace masra {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Checkpoint I/O

namespace {

constexpr char kCheckpointMagic[8] = {'M', 'A', 'S', 'R', 'A', 'C', 'K', 'P'};

void write_doubles(std::ofstream& os, const Matrix& m) {
  // Eigen is column-major; the file is row-major.
  const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm = m;
  os.write(reinterpret_cast<const char*>(rm.data()),
           static_cast<std::streamsize>(rm.size() * sizeof(double)));
}

Matrix read_doubles(std::ifstream& is, Eigen::Index rows, Eigen::Index cols,
                    const std::string& what) {
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm(rows, cols);
  is.read(reinterpret_cast<char*>(rm.data()),
          static_cast<std::streamsize>(rm.size() * sizeof(double)));
  if (!is) throw CheckpointError("checkpoint truncated while reading " + what);
  return rm;
}

const nlohmann::json& field(const nlohmann::json& header, const char* key) {
  if (!header.contains(key)) {
    throw CheckpointError("checkpoint version " + std::to_string(kCheckpointVersion) +
                          ": missing field '" + key + "'");
  }
  return header.at(key);
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const fs::path& path) {
  nlohmann::json tensors = nlohmann::json::array();
  std::vector<std::string> optimized;
  for (const auto& [name, p] : ckpt.params.entries()) {
    tensors.push_back({{"name", name}, {"rows", p.value.rows()}, {"cols", p.value.cols()},
                       {"trainable", p.trainable}});
    if (ckpt.optimizer.m.count(name) && ckpt.optimizer.v.count(name)) optimized.push_back(name);
  }
  const nlohmann::json header = {{"version", kCheckpointVersion},
                                 {"config", ckpt.config.to_json()},
                                 {"param_seed", ckpt.params.seed()},
                                 {"epoch", ckpt.epoch},
                                 {"history", ckpt.history},
                                 {"validation", ckpt.validation.to_json()},
                                 {"optimizer_step", ckpt.optimizer.step},
                                 {"optimizer_tensors", optimized},
                                 {"tensors", tensors}};
  const std::string text = header.dump();
  if (!path.parent_path().empty()) fs::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw CheckpointError("cannot open for writing: " + path.string());
  os.write(kCheckpointMagic, sizeof kCheckpointMagic);
  const std::uint32_t version = kCheckpointVersion;
  const std::uint64_t length = text.size();
  os.write(reinterpret_cast<const char*>(&version), sizeof version);
  os.write(reinterpret_cast<const char*>(&length), sizeof length);
  os.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& [name, p] : ckpt.params.entries()) write_doubles(os, p.value);
  for (const std::string& name : optimized) {
    write_doubles(os, ckpt.optimizer.m.at(name));
    write_doubles(os, ckpt.optimizer.v.at(name));
  }
  if (!os) throw CheckpointError("write failed: " + path.string());
}

Checkpoint load_checkpoint(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw CheckpointError("cannot open checkpoint: " + path.string());
  char magic[8];
  std::uint32_t version = 0;
  std::uint64_t length = 0;
  is.read(magic, sizeof magic);
  if (!is || std::memcmp(magic, kCheckpointMagic, sizeof magic) != 0) {
    throw CheckpointError("not a checkpoint file: " + path.string());
  }
  is.read(reinterpret_cast<char*>(&version), sizeof version);
  is.read(reinterpret_cast<char*>(&length), sizeof length);
  if (!is) throw CheckpointError("checkpoint header truncated: " + path.string());
  if (version != kCheckpointVersion) {
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version) +
                          " (expected " + std::to_string(kCheckpointVersion) + ")");
  }
  std::string text(length, '\0');
  is.read(text.data(), static_cast<std::streamsize>(length));
  if (!is) throw CheckpointError("checkpoint header truncated: " + path.string());
  const nlohmann::json header = nlohmann::json::parse(text, nullptr, false);
  if (header.is_discarded()) throw CheckpointError("checkpoint header is not valid JSON");

  Checkpoint ckpt;
  ckpt.config = RunConfig::from_json(field(header, "config"));
  ckpt.params = ParamStore(field(header, "param_seed").get<std::uint64_t>());
  ckpt.epoch = field(header, "epoch").get<int>();
  ckpt.history = field(header, "history");
  ckpt.validation = EvalResult::from_json(field(header, "validation"));
  ckpt.optimizer.step = field(header, "optimizer_step").get<std::int64_t>();
  for (const auto& t : field(header, "tensors")) {
    const auto name = t.at("name").get<std::string>();
    const auto rows = t.at("rows").get<Eigen::Index>();
    const auto cols = t.at("cols").get<Eigen::Index>();
    Parameter& p = const_cast<Parameter&>(
        ckpt.params.add(name, rows, cols, Init::Zeros, 1.0, t.at("trainable").get<bool>()));
    p.value = read_doubles(is, rows, cols, name);
  }
  for (const auto& n : field(header, "optimizer_tensors")) {
    const auto name = n.get<std::string>();
    const Matrix& shape = ckpt.params.value(name);
    ckpt.optimizer.m[name] = read_doubles(is, shape.rows(), shape.cols(), name + " (m)");
    ckpt.optimizer.v[name] = read_doubles(is, shape.rows(), shape.cols(), name + " (v)");
  }
  if (is.peek() != std::char_traits<char>::eof()) {
    throw CheckpointError("trailing bytes after checkpoint payload: " + path.string());
  }
  return ckpt;
}

MasraModel model_from_checkpoint(const Checkpoint& ckpt) {
  MasraModel model(ckpt.config);
  auto& entries = model.params().entries();
  if (entries.size() != ckpt.params.size()) {
    throw CheckpointError("checkpoint holds " + std::to_string(ckpt.params.size()) +
                          " tensors, model expects " + std::to_string(entries.size()));
  }
  for (auto& [name, p] : entries) {
    if (!ckpt.params.contains(name)) throw CheckpointError("checkpoint lacks tensor " + name);
    const Matrix& saved = ckpt.params.value(name);
    if (saved.rows() != p.value.rows() || saved.cols() != p.value.cols()) {
      throw CheckpointError("tensor " + name + " shape " + shape_pair(saved, p.value));
    }
    p.value = saved;
  }
  return model;
}

Dataset load_or_generate(const RunConfig& config) {
  if (!config.dataset.empty()) return load_dataset(config.dataset);
  const std::size_t n = static_cast<std::size_t>(config.n_train + config.n_val);
  return generate_dataset(config.scenario, n, config.data_seed,
                          static_cast<double>(config.n_train) / static_cast<double>(n));
}

double learning_rate(const RunConfig& config, std::int64_t step, std::int64_t total_steps) {
  if (config.lr_schedule == "constant" || total_steps <= 0) return config.lr;
  const double progress = static_cast<double>(step) / static_cast<double>(total_steps);
  return 0.5 * config.lr * (1.0 + std::cos(std::numbers::pi * progress));
}

void adamw_step(ParamStore& params, AdamState& state, const std::map<std::string, Matrix>& grads,
                double lr, double weight_decay, double beta1, double beta2, double eps) {
  ++state.step;
  const double c1 = 1.0 - std::pow(beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(beta2, static_cast<double>(state.step));
  for (const auto& [name, grad] : grads) {
    Parameter& p = params.at(name);
    if (!p.trainable) continue;
    auto [mit, fresh_m] = state.m.try_emplace(name, Matrix::Zero(grad.rows(), grad.cols()));
    auto [vit, fresh_v] = state.v.try_emplace(name, Matrix::Zero(grad.rows(), grad.cols()));
    Matrix& m = mit->second;
    Matrix& v = vit->second;
    m = beta1 * m + (1.0 - beta1) * grad;
    v = beta2 * v + (1.0 - beta2) * grad.cwiseProduct(grad);
    p.value *= 1.0 - lr * weight_decay;
    p.value.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
  }
}

// ---------------------------------------------------------------------------
// Evaluation

std::vector<nlohmann::json> predict_split(const MasraModel& model, const Dataset& data,
                                          Split split) {
  std::vector<nlohmann::json> dump;
  for (std::size_t i : data.indices(split)) {
    const Scenario& sc = data[i];
    SaliencyScores saliency;
    const auto preds = model.predict(sc.video, sc.query, &saliency);
    dump.push_back(prediction_record(sc.id, preds, saliency));
  }
  return dump;
}

EvalResult evaluate_predictions(const std::vector<nlohmann::json>& dump, const Dataset& data,
                                Split split) {
  std::map<std::string, const nlohmann::json*> by_id;
  for (const auto& rec : dump) by_id[rec.at("scenario_id").get<std::string>()] = &rec;
  std::vector<QueryResult> queries;
  for (std::size_t i : data.indices(split)) {
    const Scenario& sc = data[i];
    auto it = by_id.find(sc.id);
    if (it == by_id.end()) throw DatasetError("no prediction for scenario " + sc.id);
    QueryResult q;
    q.id = sc.id;
    for (const auto& s : it->second->at("spans")) {
      q.predictions.push_back({{s.at(0).get<double>(), s.at(1).get<double>()}, s.at(2).get<double>()});
    }
    q.ground_truth.push_back(GroundTruthSpan::from_clips(sc.gt_span, sc.T()).interval());
    queries.push_back(std::move(q));
  }
  if (queries.empty()) throw DatasetError(std::string("split ") + split_name(split) + " is empty");
  return evaluate_queries(queries);
}

EvalResult evaluate(const MasraModel& model, const Dataset& data, Split split) {
  return evaluate_predictions(predict_split(model, data, split), data, split);
}

EvalResult evaluate(const Checkpoint& ckpt, const Dataset& data, Split split) {
  return evaluate(model_from_checkpoint(ckpt), data, split);
}

// ---------------------------------------------------------------------------
// Training

namespace {

nlohmann::json breakdown_json(const LossBreakdown& b) {
  return {{"vtg", b.vtg}, {"sal", b.sal}, {"semantic", b.semantic}, {"relation", b.relation},
          {"cb", b.cb},   {"total", b.total}};
}

void accumulate(LossBreakdown& sum, const LossBreakdown& b) {
  sum.vtg += b.vtg;
  sum.sal += b.sal;
  sum.semantic += b.semantic;
  sum.relation += b.relation;
  sum.cb += b.cb;
  sum.total += b.total;
}

LossBreakdown scaled(LossBreakdown b, double s) {
  b.vtg *= s;
  b.sal *= s;
  b.semantic *= s;
  b.relation *= s;
  b.cb *= s;
  b.total *= s;
  return b;
}

void write_json(const fs::path& path, const nlohmann::json& j) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open for writing: " + path.string());
  os << std::setw(2) << j << '\n';
}

}  // namespace

Checkpoint train(const RunConfig& config, const Dataset& data, const TrainOptions& options) {
  config.validate();
  MasraModel model(config);
  const std::vector<std::size_t> train_idx = data.indices(Split::Train);
  if (train_idx.empty()) throw DatasetError("training split is empty");

  std::ofstream log;
  if (!options.out_dir.empty()) {
    fs::create_directories(options.out_dir);
    write_json(options.out_dir / "config.json", config.to_json());
    log.open(options.out_dir / "log.jsonl", std::ios::trunc);
  }

  Checkpoint current{config, model.params(), {}, 0, nlohmann::json::array(), {}};
  current.validation = evaluate(model, data, Split::Val);
  current.history.push_back({{"epoch", 0}, {"val", current.validation.to_json()}});
  Checkpoint best = current;

  auto finish = [&](const Checkpoint& ckpt) {
    if (options.out_dir.empty()) return;
    save_checkpoint(ckpt, options.out_dir / "checkpoint.bin");
    write_json(options.out_dir / "eval.json", ckpt.validation.to_json());
  };

  std::mt19937_64 rng(config.seed * 0x9E3779B97F4A7C15ULL + 1);
  std::vector<std::size_t> order = train_idx;
  const auto batch = static_cast<std::size_t>(config.batch_size);
  double initial_loss = -1.0;
  std::int64_t step = 0;
  const std::int64_t total_steps =
      static_cast<std::int64_t>(config.epochs) *
      static_cast<std::int64_t>((order.size() + batch - 1) / batch);

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    LossBreakdown epoch_sum;
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t end = std::min(order.size(), start + batch);
      const double inv = 1.0 / static_cast<double>(end - start);
      std::map<std::string, Matrix> grads;
      LossBreakdown batch_sum;
      std::vector<std::string> ids;
      for (std::size_t k = start; k < end; ++k) {
        const Scenario& sc = data[order[k]];
        ids.push_back(sc.id);
        auto abort = [&](const std::string& why) {
          if (!options.out_dir.empty()) {
            save_checkpoint(current, options.out_dir / "checkpoint.bin");
            write_json(options.out_dir / "diagnostic.json",
                       {{"epoch", epoch}, {"step", step}, {"batch", start / batch},
                        {"scenario_id", sc.id}, {"batch_ids", ids}, {"error", why}});
          }
          throw TrainingAborted("epoch " + std::to_string(epoch) + " batch " +
                                std::to_string(start / batch) + " (" + sc.id + "): " + why);
        };
        Graph g(&model.params());
        ForwardOutput out = model.forward(g, sc.video, sc.query);
        TrainingLoss loss;
        try {
          loss = model.losses(g, out, sc);
        } catch (const ValueError& e) {
          abort(e.what());
        }
        g.backward(loss.total);
        for (auto& [name, gr] : g.param_grads()) {
          if (!gr.allFinite()) abort("non-finite gradient in " + name);
          auto [it, fresh] = grads.try_emplace(name, gr);
          if (!fresh) it->second += gr;
        }
        accumulate(batch_sum, loss.breakdown);
      }
      for (auto& [_, gr] : grads) gr *= inv;
      const LossBreakdown mean = scaled(batch_sum, inv);
      if (initial_loss < 0.0) initial_loss = mean.total;
      if (log.is_open()) {
        nlohmann::json line = breakdown_json(mean);
        line["epoch"] = epoch;
        line["step"] = step;
        log << line.dump() << '\n';
      }
      if (mean.total > config.divergence_factor * initial_loss) {
        if (!options.out_dir.empty()) {
          save_checkpoint(current, options.out_dir / "checkpoint.bin");
          write_json(options.out_dir / "diagnostic.json",
                     {{"epoch", epoch}, {"step", step}, {"batch", start / batch},
                      {"batch_ids", ids}, {"total", mean.total}, {"initial", initial_loss}});
        }
        throw TrainingAborted("loss diverged at step " + std::to_string(step) + ": " +
                              std::to_string(mean.total) + " > " +
                              std::to_string(config.divergence_factor) + " x initial " +
                              std::to_string(initial_loss));
      }
      if (config.grad_clip > 0.0) {
        double sq = 0.0;
        for (const auto& [_, gr] : grads) sq += gr.squaredNorm();
        const double norm = std::sqrt(sq);
        if (norm > config.grad_clip)
          for (auto& [_, gr] : grads) gr *= config.grad_clip / norm;
      }
      adamw_step(model.params(), current.optimizer, grads, learning_rate(config, step, total_steps),
                 config.weight_decay);
      accumulate(epoch_sum, scaled(batch_sum, 1.0));
      ++step;
    }
    const LossBreakdown epoch_mean = scaled(epoch_sum, 1.0 / static_cast<double>(order.size()));
    current.params = model.params();
    current.epoch = epoch;
    current.validation = evaluate(model, data, Split::Val);
    current.history.push_back({{"epoch", epoch},
                               {"train", breakdown_json(epoch_mean)},
                               {"val", current.validation.to_json()}});
    if (options.verbose) {
      std::cerr << "epoch " << epoch << " loss " << epoch_mean.total << " val mAP-avg "
                << current.validation.map_avg << " R1@0.5 " << current.validation.r1_at.at(0.5)
                << '\n';
    }
    if (current.validation.map_avg >= best.validation.map_avg) best = current;
  }
  if (!options.keep_best) best = current;
  best.history = current.history;
  if (log.is_open()) log.flush();
  finish(best);
  return best;
}

// ---------------------------------------------------------------------------
// Ablation

namespace {

const std::set<std::string>& data_keys() {
  static const std::set<std::string> keys = {
      "dataset",   "n_train",    "n_val",       "data_seed",  "T",          "L",
      "video_dim", "query_dim",  "event_dim",   "min_events", "max_events", "noise_sigma",
      "world_seed", "latent_dim"};
  return keys;
}

std::string dir_label(const std::string& label) {
  std::string out;
  for (char c : label) out += std::isalnum(static_cast<unsigned char>(c)) ? c : '_';
  return out;
}

}  // namespace

RunConfig apply_variant(const RunConfig& base, const Variant& variant, std::uint64_t seed) {
  nlohmann::json j = base.to_json();
  if (!variant.overrides.is_null() && !variant.overrides.is_object()) {
    throw ConfigError(variant.label, "overrides must be an object");
  }
  for (const auto& [key, value] : variant.overrides.items()) {
    if (data_keys().count(key)) {
      throw ConfigError(key, "variant '" + variant.label + "' may not change the dataset");
    }
    j[key] = value;
  }
  j["seed"] = seed;
  RunConfig c = RunConfig::from_json(j);
  c.validate();
  return c;
}

const VariantSummary& AblationReport::of(const std::string& label) const {
  for (const auto& s : summary)
    if (s.label == label) return s;
  throw ValueError("no variant labelled " + label);
}

AblationReport ablate(const RunConfig& base, const std::vector<Variant>& variants,
                      const std::vector<std::uint64_t>& seeds, const AblateOptions& options) {
  if (variants.size() < 2) throw ValueError("ablate: need at least 2 variants");
  if (seeds.size() < 3) throw ValueError("ablate: need at least 3 seeds");
  std::set<std::string> labels;
  for (const auto& v : variants)
    if (!labels.insert(v.label).second) throw ValueError("ablate: duplicate label " + v.label);

  const Dataset data = load_or_generate(base);
  AblationReport report{variants, seeds, {}, {}};
  for (const Variant& v : variants) {
    for (std::uint64_t seed : seeds) {
      AblationRun run{v.label, seed, false, "", {}};
      try {
        const RunConfig cfg = apply_variant(base, v, seed);
        TrainOptions topts;
        if (!options.out_dir.empty()) {
          topts.out_dir = options.out_dir / dir_label(v.label) / ("seed_" + std::to_string(seed));
        }
        run.result = train(cfg, data, topts).validation;
      } catch (const std::exception& e) {
        run.failed = true;
        run.error = e.what();
      }
      if (options.verbose) {
        std::cerr << v.label << " seed " << seed << ": "
                  << (run.failed ? "FAILED " + run.error : std::to_string(run.result.map_avg))
                  << '\n';
      }
      report.runs.push_back(run);
    }
  }
  for (const Variant& v : variants) {
    VariantSummary s{v.label};
    std::vector<double> maps;
    for (const auto& r : report.runs) {
      if (r.variant != v.label || r.failed) continue;
      maps.push_back(r.result.map_avg);
      s.r1_mean += r.result.r1_at.at(0.5);
      s.miou_mean += r.result.miou;
    }
    s.completed = static_cast<int>(maps.size());
    if (!maps.empty()) {
      const double n = static_cast<double>(maps.size());
      s.mean = std::accumulate(maps.begin(), maps.end(), 0.0) / n;
      s.r1_mean /= n;
      s.miou_mean /= n;
      double ss = 0.0;
      for (double m : maps) ss += (m - s.mean) * (m - s.mean);
      s.std = maps.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
    }
    report.summary.push_back(s);
  }
  if (!options.out_dir.empty()) {
    fs::create_directories(options.out_dir);
    std::ofstream(options.out_dir / "ablation.md") << report.markdown();
    write_json(options.out_dir / "ablation.json", report.to_json());
  }
  return report;
}

std::string AblationReport::markdown() const {
  std::ostringstream os;
  os << std::fixed << std::setprecision(2);
  os << "# Ablation\n\nSeeds:";
  for (auto s : seeds) os << ' ' << s;
  os << "\n\n| variant | runs | mAP-avg (mean ± std) | R1@0.5 | mIoU |\n|---|---|---|---|---|\n";
  for (const auto& s : summary) {
    os << "| " << s.label << " | " << s.completed << '/' << seeds.size() << " | "
       << 100.0 * s.mean << " ± " << 100.0 * s.std << " | " << 100.0 * s.r1_mean << " | "
       << 100.0 * s.miou_mean << " |\n";
  }
  os << "\n## Pairwise ordering (mean mAP-avg)\n\n";
  for (std::size_t i = 0; i < summary.size(); ++i) {
    for (std::size_t j = i + 1; j < summary.size(); ++j) {
      const auto& a = summary[i];
      const auto& b = summary[j];
      const char* rel = a.mean > b.mean ? ">" : (a.mean < b.mean ? "<" : "=");
      os << "- " << a.label << ' ' << rel << ' ' << b.label << " (Δ " << std::showpos
         << 100.0 * (a.mean - b.mean) << std::noshowpos << ")\n";
    }
  }
  bool any_failed = false;
  for (const auto& r : runs) {
    if (!r.failed) continue;
    if (!any_failed) os << "\n## Failed runs\n\n";
    any_failed = true;
    os << "- " << r.variant << " seed " << r.seed << ": " << r.error << '\n';
  }
  return os.str();
}

nlohmann::json AblationReport::to_json() const {
  nlohmann::json j;
  j["seeds"] = seeds;
  j["variants"] = nlohmann::json::array();
  for (const auto& v : variants) j["variants"].push_back({{"label", v.label}, {"overrides", v.overrides}});
  j["runs"] = nlohmann::json::array();
  for (const auto& r : runs) {
    nlohmann::json e = {{"variant", r.variant}, {"seed", r.seed}, {"failed", r.failed}};
    if (r.failed) e["error"] = r.error;
    else e["result"] = r.result.to_json();
    j["runs"].push_back(e);
  }
  j["summary"] = nlohmann::json::array();
  for (const auto& s : summary) {
    j["summary"].push_back({{"label", s.label}, {"map_avg_mean", s.mean}, {"map_avg_std", s.std},
                            {"r1_05_mean", s.r1_mean}, {"miou_mean", s.miou_mean},
                            {"completed", s.completed}});
  }
  return j;
}

// ---------------------------------------------------------------------------
// Heatmaps

HeatmapStage parse_heatmap_stage(const std::string& name) {
  if (name == "no_lrca") return HeatmapStage::NoLrca;
  if (name == "pre_sora") return HeatmapStage::PreSora;
  if (name == "post_sora") return HeatmapStage::PostSora;
  throw ValueError("unknown heatmap stage '" + name + "'; valid stages: no_lrca, pre_sora, post_sora");
}

const char* heatmap_stage_name(HeatmapStage stage) {
  switch (stage) {
    case HeatmapStage::NoLrca: return "no_lrca";
    case HeatmapStage::PreSora: return "pre_sora";
    case HeatmapStage::PostSora: return "post_sora";
  }
  return "?";
}

Heatmap compute_heatmap(const MasraModel& model, const Scenario& scenario, HeatmapStage stage) {
  if (stage == HeatmapStage::NoLrca && model.config().use_lrca) {
    throw ValueError("stage no_lrca needs a model trained with use_lrca=false");
  }
  Graph g(&model.params());
  const ForwardOutput out = model.forward(g, scenario.video, scenario.query);
  Heatmap h;
  h.grid = stage == HeatmapStage::PreSora ? out.similarity.value() : out.sora.refined.value();
  h.mask = scenario.saliency_gt.transpose();
  return h;
}

std::pair<fs::path, fs::path> emit_heatmap(const MasraModel& model, const Dataset& data,
                                           const std::string& scenario_id, HeatmapStage stage,
                                           const fs::path& out_dir) {
  const Scenario* found = nullptr;
  for (const auto& r : data.records())
    if (r.scenario.id == scenario_id) found = &r.scenario;
  if (!found) throw DatasetError("scenario " + scenario_id + " not in dataset");
  const Heatmap h = compute_heatmap(model, *found, stage);
  fs::create_directories(out_dir);
  const fs::path grid = out_dir / (scenario_id + "." + heatmap_stage_name(stage) + ".csv");
  const fs::path mask = out_dir / (scenario_id + ".mask.csv");
  write_csv_grid(grid, h.grid);
  write_csv_grid(mask, h.mask.transpose());
  return {grid, mask};
}

double block_contrast(const Matrix& grid, const Eigen::VectorXd& mask) {
  if (grid.rows() != grid.cols() || grid.rows() != mask.size()) {
    throw DimensionError("block_contrast: grid " + shape_str(grid.rows(), grid.cols()) +
                         " vs mask of length " + std::to_string(mask.size()));
  }
  double within = 0.0, cross = 0.0;
  std::size_t n_within = 0, n_cross = 0;
  for (Eigen::Index i = 0; i < grid.rows(); ++i) {
    if (mask(i) < 0.5) continue;
    for (Eigen::Index j = 0; j < grid.cols(); ++j) {
      if (mask(j) > 0.5) {
        within += grid(i, j);
        ++n_within;
      } else {
        cross += 0.5 * (grid(i, j) + grid(j, i));
        ++n_cross;
      }
    }
  }
  if (n_within == 0 || n_cross == 0) throw ValueError("block_contrast: mask must split the clips");
  return within / static_cast<double>(n_within) - cross / static_cast<double>(n_cross);
}

// ---------------------------------------------------------------------------
// Gradient suite

std::map<std::string, GradReport> gradient_suite(double eps, double tol) {
  RunConfig cfg;
  cfg.scenario.T = 6;
  cfg.scenario.L = 3;
  cfg.scenario.video_dim = 5;
  cfg.scenario.query_dim = 4;
  cfg.scenario.event_dim = 3;
  cfg.scenario.min_events = 2;
  cfg.scenario.max_events = 3;
  cfg.scenario.latent_dim = 4;
  cfg.scenario.seed = 3;
  cfg.model_dim = 8;
  cfg.num_heads = 2;
  cfg.ctx_layers = 1;
  cfg.post_fuse_layers = 1;
  cfg.decoder_layers = 1;
  cfg.ffn_hidden = 8;
  cfg.codebook_size = 6;
  cfg.aux_top_k = 2;
  cfg.n_queries = 3;
  cfg.sora_hidden = 2;
  cfg.max_clips = 6;
  cfg.seed = 11;
  MasraModel model(cfg);
  // Move zero-initialized tensors off zero so every path carries gradient.
  std::mt19937_64 rng(5);
  std::normal_distribution<double> noise(0.0, 0.1);
  for (auto& [_, p] : model.params().entries())
    for (Eigen::Index i = 0; i < p.value.size(); ++i) p.value.data()[i] += noise(rng);
  const Scenario sc = generate_scenario(cfg.scenario);

  using Pick = Var TrainingLoss::*;
  const std::vector<std::pair<std::string, Pick>> losses = {
      {"semantic", &TrainingLoss::semantic}, {"relation", &TrainingLoss::relation},
      {"codebook", &TrainingLoss::cb},       {"vtg", &TrainingLoss::vtg},
      {"saliency", &TrainingLoss::sal},      {"overall", &TrainingLoss::total}};

  // The codebook loss stops gradients through z and through the quantized
  // mean; its finite-difference surrogate freezes both (and the selection)
  // at the unperturbed point.
  Vector z0;
  AuxSelection selection0;
  {
    Graph g(&model.params());
    const ForwardOutput out = model.forward(g, sc.video, sc.query);
    z0 = out.dai.z.value();
    selection0 = out.dai.selection;
  }
  const std::string book = model.params().contains("dai.codebook") ? "dai.codebook" : "";
  auto frozen_codebook = [&](Graph& g, Var z) {
    const auto k = static_cast<Eigen::Index>(selection0.indices.size());
    Var picked = ops::gather_rows(g.param(book), selection0.indices);
    Var codeword_term = ops::scale(
        ops::sum(ops::square(ops::sub(g.constant(z0.replicate(k, 1)), picked))),
        1.0 / static_cast<double>(k));
    Var commit = ops::sum(ops::square(ops::sub(z, g.constant(selection0.quantized_mean))));
    return ops::add(codeword_term, ops::scale(commit, cfg.beta));
  };

  std::map<std::string, GradReport> reports;
  for (const auto& [name, pick] : losses) {
    LossBuilder build = [&, pick = pick](Graph& g) {
      ForwardOutput out = model.forward(g, sc.video, sc.query);
      return model.losses(g, out, sc).*pick;
    };
    LossBuilder surrogate = build;
    if (name == "codebook" || name == "overall") {
      surrogate = [&, name = name](Graph& g) {
        ForwardOutput out = model.forward(g, sc.video, sc.query);
        TrainingLoss l = model.losses(g, out, sc);
        Var frozen = frozen_codebook(g, out.dai.z);
        if (name == "codebook") return frozen;
        return ops::add(ops::sub(l.total, ops::scale(l.cb, cfg.lambdas.cb)),
                        ops::scale(frozen, cfg.lambdas.cb));
      };
    }
    reports[name] = finite_diff_grad_check(build, surrogate, model.params(), eps, tol);
  }
  return reports;
}

}  // namespace masra
