#include "masra/synth.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <random>

#include "masra/lrca.hpp"

namespace masra {

namespace fs = std::filesystem;

void ScenarioConfig::validate() const {
  if (T < 4) throw ConfigError("T", "must be >= 4");
  if (L < 1) throw ConfigError("L", "must be >= 1");
  if (video_dim < 1) throw ConfigError("video_dim", "must be >= 1");
  if (query_dim < 1) throw ConfigError("query_dim", "must be >= 1");
  if (event_dim < 1) throw ConfigError("event_dim", "must be >= 1");
  if (latent_dim < 1) throw ConfigError("latent_dim", "must be >= 1");
  if (min_events < 2) throw ConfigError("min_events", "must be >= 2");
  if (max_events < min_events) throw ConfigError("max_events", "must be >= min_events");
  if (!(noise_sigma >= 0.0)) throw ConfigError("noise_sigma", "must be >= 0");
}

nlohmann::json ScenarioConfig::to_json() const {
  return {{"T", T},
          {"L", L},
          {"video_dim", video_dim},
          {"query_dim", query_dim},
          {"event_dim", event_dim},
          {"min_events", min_events},
          {"max_events", max_events},
          {"noise_sigma", noise_sigma},
          {"seed", seed},
          {"world_seed", world_seed},
          {"latent_dim", latent_dim}};
}

ScenarioConfig ScenarioConfig::from_json(const nlohmann::json& j) {
  ScenarioConfig c;
  c.T = j.value("T", c.T);
  c.L = j.value("L", c.L);
  c.video_dim = j.value("video_dim", c.video_dim);
  c.query_dim = j.value("query_dim", c.query_dim);
  c.event_dim = j.value("event_dim", c.event_dim);
  c.min_events = j.value("min_events", c.min_events);
  c.max_events = j.value("max_events", c.max_events);
  c.noise_sigma = j.value("noise_sigma", c.noise_sigma);
  c.seed = j.value("seed", c.seed);
  c.world_seed = j.value("world_seed", c.world_seed);
  c.latent_dim = j.value("latent_dim", c.latent_dim);
  return c;
}

namespace {

Matrix gaussian(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols, double sd) {
  std::normal_distribution<double> dist(0.0, sd);
  Matrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = dist(rng);
  return m;
}

// Latent-to-feature maps shared by every scenario of one world seed.
struct World {
  Matrix video_map;    // latent x video_dim
  Vector video_bias;
  Matrix caption_map;  // latent x event_dim
  Vector caption_bias;
  Matrix query_map;    // latent x query_dim, aligned with video_map
  Matrix token_offsets;  // L x query_dim
  Vector background;     // latent

  explicit World(const ScenarioConfig& c) {
    std::mt19937_64 rng(c.world_seed);
    const double s = 1.0 / std::sqrt(static_cast<double>(c.latent_dim));
    video_map = gaussian(rng, c.latent_dim, c.video_dim, s);
    video_bias = gaussian(rng, 1, c.video_dim, 0.2);
    caption_map = gaussian(rng, c.latent_dim, c.event_dim, s);
    caption_bias = gaussian(rng, 1, c.event_dim, 0.2);
    // Queries live in the video feature space on their shared leading
    // coordinates, like jointly trained vision-language encoders.
    query_map = gaussian(rng, c.latent_dim, c.query_dim, s);
    const int shared = std::min(c.query_dim, c.video_dim);
    query_map.leftCols(shared) = video_map.leftCols(shared);
    token_offsets = gaussian(rng, c.L, c.query_dim, 0.3);
    background = gaussian(rng, 1, c.latent_dim, 1.0);
  }
};

Matrix to_float32(Matrix m) {
  for (Eigen::Index i = 0; i < m.size(); ++i)
    m.data()[i] = static_cast<double>(static_cast<float>(m.data()[i]));
  return m;
}

// Splits `extra` clips among `parts` bins with random exponential weights.
std::vector<int> random_composition(std::mt19937_64& rng, int extra, int parts) {
  std::vector<int> out(parts, 0);
  if (extra <= 0) return out;
  std::exponential_distribution<double> expo(1.0);
  std::vector<double> w(parts);
  for (double& x : w) x = expo(rng);
  const double total = std::accumulate(w.begin(), w.end(), 0.0);
  int used = 0;
  for (int i = 0; i < parts; ++i) {
    out[i] = static_cast<int>(std::floor(w[i] / total * extra));
    used += out[i];
  }
  std::uniform_int_distribution<int> pick(0, parts - 1);
  for (; used < extra; ++used) ++out[pick(rng)];
  return out;
}

}  // namespace

Scenario generate_scenario(const ScenarioConfig& config) {
  config.validate();
  if (2 * config.max_events > config.T) {
    throw ValueError("infeasible partition: " + std::to_string(config.max_events) +
                     " events of length >= 2 exceed T=" + std::to_string(config.T));
  }
  const World world(config);
  std::mt19937_64 rng(config.seed);

  const int m = std::uniform_int_distribution<int>(config.min_events, config.max_events)(rng);
  const int max_bg = std::min(config.T - 2 * m, config.T / 4);
  const int n_bg = std::uniform_int_distribution<int>(0, std::max(0, max_bg))(rng);
  const std::vector<int> extra = random_composition(rng, config.T - n_bg - 2 * m, m);
  std::vector<int> gaps(m + 1, 0);
  std::uniform_int_distribution<int> gap_pick(0, m);
  for (int i = 0; i < n_bg; ++i) ++gaps[gap_pick(rng)];
  const int target = std::uniform_int_distribution<int>(0, m - 1)(rng);

  // Latent prototypes: events draw fresh codes, background clips perturb
  // the world background code.
  const Matrix prototypes = gaussian(rng, m, config.latent_dim, 1.0);
  const Vector background = world.background + gaussian(rng, 1, config.latent_dim, 0.5);

  Scenario sc;
  sc.seed = config.seed;
  sc.id = "scn" + std::to_string(config.seed);
  std::vector<int> owner(config.T, -1);  // event index per clip, -1 background
  int t = 0;
  for (int i = 0; i < m; ++i) {
    t += gaps[i];
    const int len = 2 + extra[i];
    sc.event_spans.push_back({t + 1, t + len});
    for (int k = 0; k < len; ++k) owner[t + k] = i;
    t += len;
  }

  Matrix latent(config.T, config.latent_dim);
  for (int c = 0; c < config.T; ++c)
    latent.row(c) = owner[c] >= 0 ? Vector(prototypes.row(owner[c])) : background;

  const double sigma = config.noise_sigma;
  Matrix video = latent * world.video_map;
  video.rowwise() += world.video_bias;
  video += gaussian(rng, config.T, config.video_dim, sigma);
  Matrix captions = latent * world.caption_map;
  captions.rowwise() += world.caption_bias;
  captions += gaussian(rng, config.T, config.event_dim, sigma);
  Matrix query = (prototypes.row(target) * world.query_map).replicate(config.L, 1);
  query += world.token_offsets;
  query += gaussian(rng, config.L, config.query_dim, sigma);

  sc.video = to_float32(std::move(video));
  sc.query = to_float32(std::move(query));
  sc.clip_captions = to_float32(std::move(captions));
  for (int i = 0; i < m; ++i) {
    Vector desc = prototypes.row(i) * world.caption_map + world.caption_bias;
    sc.events.push_back({to_float32(desc), sc.event_spans[i]});
  }
  sc.target_event = target;
  sc.gt_span = sc.event_spans[target];
  sc.saliency_gt = Vector::Zero(config.T);
  for (int c = sc.gt_span.start; c <= sc.gt_span.end; ++c) sc.saliency_gt(c - 1) = 1.0;
  sc.relation = to_float32(textual_relation_matrix(sc.clip_captions));
  return sc;
}

const char* split_name(Split s) { return s == Split::Train ? "train" : "val"; }

Dataset::Dataset(ScenarioConfig config, std::uint64_t base_seed, double train_fraction,
                 std::vector<DatasetRecord> records)
    : config_(config),
      base_seed_(base_seed),
      train_fraction_(train_fraction),
      records_(std::move(records)) {}

std::vector<std::size_t> Dataset::indices(Split split) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < records_.size(); ++i)
    if (records_[i].split == split) out.push_back(i);
  return out;
}

std::vector<Split> assign_splits(std::size_t n, std::uint64_t base_seed, double train_fraction) {
  if (!(train_fraction >= 0.0 && train_fraction <= 1.0)) {
    throw ConfigError("train_fraction", "must lie in [0, 1]");
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(base_seed ^ 0x9e3779b97f4a7c15ULL);
  std::shuffle(order.begin(), order.end(), rng);
  const auto n_train = static_cast<std::size_t>(std::llround(train_fraction * n));
  std::vector<Split> out(n, Split::Val);
  for (std::size_t k = 0; k < n_train; ++k) out[order[k]] = Split::Train;
  return out;
}

ScenarioStream::ScenarioStream(ScenarioConfig config, std::size_t n, std::uint64_t base_seed,
                               double train_fraction)
    : config_(config), n_(n), base_seed_(base_seed) {
  if (n < 1) throw ValueError("dataset needs n >= 1");
  config_.validate();
  splits_ = assign_splits(n, base_seed, train_fraction);
}

DatasetRecord ScenarioStream::next() {
  if (done()) throw std::out_of_range("ScenarioStream exhausted");
  ScenarioConfig c = config_;
  c.seed = base_seed_ + next_;
  DatasetRecord rec{generate_scenario(c), splits_[next_]};
  ++next_;
  return rec;
}

Dataset generate_dataset(const ScenarioConfig& config, std::size_t n, std::uint64_t base_seed,
                         double train_fraction) {
  ScenarioStream stream(config, n, base_seed, train_fraction);
  std::vector<DatasetRecord> records;
  records.reserve(n);
  while (!stream.done()) records.push_back(stream.next());
  ScenarioConfig echo = config;
  echo.seed = base_seed;
  return Dataset(echo, base_seed, train_fraction, std::move(records));
}

// ---------------------------------------------------------------------------
// Blob I/O

namespace {

static_assert(std::endian::native == std::endian::little,
              "blob I/O assumes a little-endian host");

void put_u32(std::ostream& os, std::uint32_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

}  // namespace

void write_blob(const fs::path& path, const Tensor2D& m) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw DatasetError("cannot open for writing: " + path.string());
  os.write(kBlobMagic, sizeof kBlobMagic);
  put_u32(os, static_cast<std::uint32_t>(m.rows()));
  put_u32(os, static_cast<std::uint32_t>(m.cols()));
  std::vector<float> buf(static_cast<std::size_t>(m.size()));
  std::size_t k = 0;
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) buf[k++] = static_cast<float>(m(r, c));
  os.write(reinterpret_cast<const char*>(buf.data()),
           static_cast<std::streamsize>(buf.size() * sizeof(float)));
  if (!os) throw DatasetError("write failed: " + path.string());
}

Tensor2D read_blob(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DatasetError("cannot open blob: " + path.string());
  char magic[8];
  std::uint32_t rows = 0, cols = 0;
  is.read(magic, sizeof magic);
  is.read(reinterpret_cast<char*>(&rows), sizeof rows);
  is.read(reinterpret_cast<char*>(&cols), sizeof cols);
  if (!is || std::memcmp(magic, kBlobMagic, sizeof magic) != 0) {
    throw DatasetError("corrupt blob header: " + path.string());
  }
  std::vector<float> buf(static_cast<std::size_t>(rows) * cols);
  is.read(reinterpret_cast<char*>(buf.data()),
          static_cast<std::streamsize>(buf.size() * sizeof(float)));
  if (is.gcount() != static_cast<std::streamsize>(buf.size() * sizeof(float))) {
    throw DatasetError("truncated blob: " + path.string());
  }
  if (is.peek() != std::char_traits<char>::eof()) {
    throw DatasetError("trailing bytes in blob: " + path.string());
  }
  Tensor2D m(rows, cols);
  std::size_t k = 0;
  for (std::uint32_t r = 0; r < rows; ++r)
    for (std::uint32_t c = 0; c < cols; ++c) m(r, c) = static_cast<double>(buf[k++]);
  return m;
}

// ---------------------------------------------------------------------------
// Manifest

namespace {

nlohmann::json span_json(const Span& s) { return nlohmann::json::array({s.start, s.end}); }
Span span_from(const nlohmann::json& j) { return {j.at(0).get<int>(), j.at(1).get<int>()}; }

nlohmann::json write_record(const DatasetRecord& rec, const fs::path& dir) {
  const Scenario& sc = rec.scenario;
  nlohmann::json arrays = nlohmann::json::object();
  auto put = [&](const std::string& name, const Tensor2D& m) {
    const std::string file = sc.id + "." + name + ".f32";
    write_blob(dir / "records" / file, m);
    arrays[name] = {{"file", file}, {"rows", m.rows()}, {"cols", m.cols()}};
  };
  put("video", sc.video);
  put("query", sc.query);
  put("saliency", Matrix(sc.saliency_gt));
  if (sc.has_priors()) {
    Matrix desc(static_cast<Eigen::Index>(sc.events.size()), sc.events.front().description.size());
    for (std::size_t i = 0; i < sc.events.size(); ++i)
      desc.row(static_cast<Eigen::Index>(i)) = sc.events[i].description;
    put("captions", sc.clip_captions);
    put("events", desc);
    if (sc.relation.size() > 0) put("relation", sc.relation);
  }
  nlohmann::json spans = nlohmann::json::array();
  for (const Span& s : sc.event_spans) spans.push_back(span_json(s));
  return {{"id", sc.id},
          {"seed", sc.seed},
          {"split", split_name(rec.split)},
          {"T", sc.video.rows()},
          {"L", sc.query.rows()},
          {"M", sc.event_spans.size()},
          {"gt_span", span_json(sc.gt_span)},
          {"target_event", sc.target_event},
          {"event_spans", spans},
          {"arrays", arrays}};
}

nlohmann::json manifest_header(const ScenarioConfig& config, std::uint64_t base_seed,
                               double train_fraction) {
  return {{"version", kManifestVersion},
          {"config", config.to_json()},
          {"base_seed", base_seed},
          {"train_fraction", train_fraction},
          {"records", nlohmann::json::array()}};
}

void write_manifest(const nlohmann::json& manifest, const fs::path& dir) {
  const fs::path path = dir / "manifest.json";
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw DatasetError("cannot open for writing: " + path.string());
  os << manifest.dump(1) << "\n";
  if (!os) throw DatasetError("write failed: " + path.string());
}

nlohmann::json read_manifest(const fs::path& dir) {
  const fs::path path = dir / "manifest.json";
  std::ifstream is(path);
  if (!is) throw DatasetError("cannot open manifest: " + path.string());
  try {
    return nlohmann::json::parse(is);
  } catch (const nlohmann::json::exception& e) {
    throw DatasetError("malformed manifest " + path.string() + ": " + e.what());
  }
}

void prepare_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir / "records", ec);
  if (ec) throw DatasetError("cannot create " + (dir / "records").string() + ": " + ec.message());
}

Tensor2D load_array(const fs::path& dir, const std::string& record_id,
                    const nlohmann::json& arrays, const std::string& name) {
  const auto& entry = arrays.at(name);
  Tensor2D m;
  try {
    m = read_blob(dir / "records" / entry.at("file").get<std::string>());
  } catch (const DatasetError& e) {
    throw DatasetError("record " + record_id + " array " + name + ": " + e.what());
  }
  const auto rows = entry.at("rows").get<Eigen::Index>();
  const auto cols = entry.at("cols").get<Eigen::Index>();
  if (m.rows() != rows || m.cols() != cols) {
    throw DatasetError("record " + record_id + " array " + name + ": manifest shape " +
                       shape_str(rows, cols) + " but blob holds " +
                       shape_str(m.rows(), m.cols()));
  }
  return m;
}

}  // namespace

nlohmann::json save_dataset(const Dataset& ds, const fs::path& dir) {
  prepare_dir(dir);
  nlohmann::json manifest = manifest_header(ds.config(), ds.base_seed(), ds.train_fraction());
  for (const DatasetRecord& rec : ds.records()) manifest["records"].push_back(write_record(rec, dir));
  write_manifest(manifest, dir);
  return manifest;
}

nlohmann::json write_generated_dataset(const ScenarioConfig& config, std::size_t n,
                                       std::uint64_t base_seed, double train_fraction,
                                       const fs::path& dir) {
  prepare_dir(dir);
  ScenarioConfig echo = config;
  echo.seed = base_seed;
  nlohmann::json manifest = manifest_header(echo, base_seed, train_fraction);
  ScenarioStream stream(config, n, base_seed, train_fraction);
  while (!stream.done()) manifest["records"].push_back(write_record(stream.next(), dir));
  write_manifest(manifest, dir);
  return manifest;
}

Dataset load_dataset(const fs::path& dir) {
  const nlohmann::json manifest = read_manifest(dir);
  if (manifest.value("version", 0) != kManifestVersion) {
    throw DatasetError("unsupported manifest version in " + dir.string());
  }
  const ScenarioConfig config = ScenarioConfig::from_json(manifest.at("config"));
  std::vector<DatasetRecord> records;
  for (const auto& r : manifest.at("records")) {
    const std::string id = r.at("id").get<std::string>();
    const auto& arrays = r.at("arrays");
    DatasetRecord rec;
    rec.split = r.at("split").get<std::string>() == "train" ? Split::Train : Split::Val;
    Scenario& sc = rec.scenario;
    sc.id = id;
    sc.seed = r.at("seed").get<std::uint64_t>();
    sc.gt_span = span_from(r.at("gt_span"));
    sc.target_event = r.value("target_event", -1);
    for (const auto& s : r.at("event_spans")) sc.event_spans.push_back(span_from(s));
    sc.video = load_array(dir, id, arrays, "video");
    sc.query = load_array(dir, id, arrays, "query");
    sc.saliency_gt = load_array(dir, id, arrays, "saliency");
    const int t = r.at("T").get<int>();
    if (sc.video.rows() != t || sc.saliency_gt.size() != t) {
      throw DatasetError("record " + id + ": manifest T=" + std::to_string(t) +
                         " disagrees with blob rows " + std::to_string(sc.video.rows()));
    }
    if (sc.query.rows() != r.at("L").get<int>()) {
      throw DatasetError("record " + id + ": manifest L disagrees with query blob");
    }
    if (arrays.contains("captions") && arrays.contains("events")) {
      sc.clip_captions = load_array(dir, id, arrays, "captions");
      const Tensor2D desc = load_array(dir, id, arrays, "events");
      if (sc.clip_captions.rows() != t) {
        throw DatasetError("record " + id + ": captions rows disagree with T");
      }
      if (desc.rows() != static_cast<Eigen::Index>(sc.event_spans.size())) {
        throw DatasetError("record " + id + ": events rows disagree with event_spans");
      }
      for (Eigen::Index i = 0; i < desc.rows(); ++i)
        sc.events.push_back({desc.row(i), sc.event_spans[static_cast<std::size_t>(i)]});
      if (arrays.contains("relation")) sc.relation = load_array(dir, id, arrays, "relation");
    }
    records.push_back(std::move(rec));
  }
  return Dataset(config, manifest.value("base_seed", std::uint64_t{0}),
                 manifest.value("train_fraction", 0.8), std::move(records));
}

void strip_priors(const fs::path& dir, std::optional<Split> split) {
  nlohmann::json manifest = read_manifest(dir);
  for (auto& r : manifest.at("records")) {
    const bool is_train = r.at("split").get<std::string>() == "train";
    if (split && is_train != (*split == Split::Train)) continue;
    auto& arrays = r.at("arrays");
    for (const char* name : {"captions", "events", "relation"}) {
      if (!arrays.contains(name)) continue;
      std::error_code ec;
      fs::remove(dir / "records" / arrays[name].at("file").get<std::string>(), ec);
      arrays.erase(name);
    }
    r["event_spans"] = nlohmann::json::array();
    r["target_event"] = -1;
  }
  write_manifest(manifest, dir);
}

}  // namespace masra
