// Run orchestration: a flat-key config file, per-run manifest with content
// hashes, a single-writer lock, and the five pipeline stages (simulate,
// train, reconstruct, enhance, report) operating on one run directory.
//
// A run is created by the simulate stage; its config snapshot and seed are
// frozen into the manifest and every later stage replays them, so re-running
// any stage reproduces the same artifacts. Stage RNG seeds derive from the
// run seed with fixed offsets.

#pragma once

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "erec/avae.hpp"
#include "erec/cgan.hpp"
#include "erec/dynamics.hpp"
#include "erec/image.hpp"
#include "erec/metrics.hpp"
#include "erec/reconstruction.hpp"
#include "erec/sha256.hpp"

namespace erec {

struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};
struct MissingStageError : std::runtime_error {
  explicit MissingStageError(const std::string& what) : std::runtime_error(what) {}
};
struct UnknownRunError : std::runtime_error {
  explicit UnknownRunError(const std::string& what) : std::runtime_error(what) {}
};

namespace paths {
inline constexpr const char* kManifest = "manifest.json";
inline constexpr const char* kLock = ".lock";
inline constexpr const char* kFramesDir = "frames";
inline constexpr const char* kDenseDir = "dense";
inline constexpr const char* kEnhancedDir = "enhanced";
inline constexpr const char* kAvaeModel = "model_avae.erec";
inline constexpr const char* kAvaeHistory = "history_avae.csv";
inline constexpr const char* kVaeModel = "model_vae.erec";
inline constexpr const char* kVaeHistory = "history_vae.csv";
inline constexpr const char* kTrajectory = "trajectory.csv";
inline constexpr const char* kReconReport = "reconstruction_report.csv";
inline constexpr const char* kCganModel = "model_cgan.erec";
inline constexpr const char* kCganHistory = "history_cgan.csv";
inline constexpr const char* kEnhanceMetrics = "enhance_metrics.csv";
inline constexpr const char* kReport = "report.txt";
}  // namespace paths

// ---- configuration ----

struct PipelineConfig {
  Scenario scenario;
  int feature_dim = 1;
  int avae_base_width = 16;
  TrainConfig avae;
  int cgan_base_width = 16;
  int cgan_noise_channels = 4;
  CganTrainConfig cgan;
  int substeps = 9;
  int window = 4;
  std::string output_dir = "runs/default";
  unsigned long long seed = 1;

  void validate() const {
    try {
      scenario.validate();
      avae.validate();
      cgan.validate();
    } catch (const std::exception& e) {
      throw ConfigError(std::string("config: ") + e.what());
    }
    if (scenario.frame_height != scenario.frame_width || scenario.frame_height % 64 != 0)
      throw ConfigError("config: scenario.frame_size must be a multiple of 64 (square frames)");
    if (feature_dim < 1) throw ConfigError("config: feature_dim must be >= 1");
    if (avae_base_width < 1 || cgan_base_width < 1 || cgan_noise_channels < 1)
      throw ConfigError("config: network widths must be >= 1");
    if (substeps < 1) throw ConfigError("config: substeps must be >= 1");
    if (window < 2 || window % 2 != 0) throw ConfigError("config: window must be even and >= 2");
    if (output_dir.empty()) throw ConfigError("config: output.dir must not be empty");
  }
};

namespace detail {

inline std::string real_key(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline std::string trim(const std::string& s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

// pulls typed values out of a raw key map; leftovers are unknown keys
struct KeyReader {
  std::map<std::string, std::string> raw;

  bool take(const std::string& key, std::string& out) {
    const auto it = raw.find(key);
    if (it == raw.end()) return false;
    out = it->second;
    raw.erase(it);
    return true;
  }
  void str(const std::string& key, std::string& field) {
    std::string v;
    if (take(key, v)) field = v;
  }
  void integer(const std::string& key, int& field) {
    std::string v;
    if (!take(key, v)) return;
    char* end = nullptr;
    const long parsed = std::strtol(v.c_str(), &end, 10);
    if (!end || *end != '\0' || v.empty()) throw ConfigError("config: bad integer for key '" + key + "': " + v);
    field = static_cast<int>(parsed);
  }
  void integer(const std::string& key, long& field) {
    int tmp = static_cast<int>(field);
    integer(key, tmp);
    field = tmp;
  }
  void uint64(const std::string& key, unsigned long long& field) {
    std::string v;
    if (!take(key, v)) return;
    char* end = nullptr;
    field = std::strtoull(v.c_str(), &end, 10);
    if (!end || *end != '\0' || v.empty()) throw ConfigError("config: bad integer for key '" + key + "': " + v);
  }
  void real(const std::string& key, double& field) {
    std::string v;
    if (!take(key, v)) return;
    char* end = nullptr;
    field = std::strtod(v.c_str(), &end);
    if (!end || *end != '\0' || v.empty()) throw ConfigError("config: bad number for key '" + key + "': " + v);
  }
  void finish() const {
    if (raw.empty()) return;
    throw ConfigError("config: unknown key '" + raw.begin()->first + "'");
  }
};

}  // namespace detail

// canonical snapshot: every key present, numbers in fixed formats
inline std::map<std::string, std::string> config_to_map(const PipelineConfig& c) {
  std::map<std::string, std::string> m;
  m["scenario.units"] = c.scenario.units;
  m["scenario.nodes"] = std::to_string(c.scenario.nodes);
  m["scenario.mass"] = detail::real_key(c.scenario.mass);
  m["scenario.stiffness"] = detail::real_key(c.scenario.stiffness);
  m["scenario.damping"] = detail::real_key(c.scenario.damping);
  m["scenario.initial_velocity"] = detail::real_key(c.scenario.initial_velocity);
  m["scenario.stop_stiffness"] = detail::real_key(c.scenario.stop_stiffness);
  m["scenario.element_length"] = detail::real_key(c.scenario.element_length);
  m["scenario.dt"] = detail::real_key(c.scenario.dt);
  m["scenario.duration"] = detail::real_key(c.scenario.duration);
  m["scenario.frame_stride"] = std::to_string(c.scenario.frame_stride);
  m["scenario.warmup_steps"] = std::to_string(c.scenario.warmup_steps);
  m["scenario.frame_size"] = std::to_string(c.scenario.frame_height);
  m["feature_dim"] = std::to_string(c.feature_dim);
  m["avae.base_width"] = std::to_string(c.avae_base_width);
  m["avae.epochs"] = std::to_string(c.avae.epochs);
  m["avae.batch_size"] = std::to_string(c.avae.batch_size);
  m["avae.learning_rate"] = detail::real_key(c.avae.learning_rate);
  m["avae.beta1"] = detail::real_key(c.avae.beta1);
  m["avae.beta2"] = detail::real_key(c.avae.beta2);
  m["avae.lambda_adv"] = detail::real_key(c.avae.lambda_adv);
  m["avae.critic_clip"] = detail::real_key(c.avae.critic_clip);
  m["cgan.base_width"] = std::to_string(c.cgan_base_width);
  m["cgan.noise_channels"] = std::to_string(c.cgan_noise_channels);
  m["cgan.epochs"] = std::to_string(c.cgan.epochs);
  m["cgan.batch_size"] = std::to_string(c.cgan.batch_size);
  m["cgan.learning_rate"] = detail::real_key(c.cgan.learning_rate);
  m["cgan.beta1"] = detail::real_key(c.cgan.beta1);
  m["cgan.beta2"] = detail::real_key(c.cgan.beta2);
  m["cgan.lambda_rec"] = detail::real_key(c.cgan.lambda_rec);
  m["cgan.adversarial_weight"] = detail::real_key(c.cgan.adversarial_weight);
  m["substeps"] = std::to_string(c.substeps);
  m["window"] = std::to_string(c.window);
  m["output.dir"] = c.output_dir;
  m["seed"] = std::to_string(c.seed);
  return m;
}

inline PipelineConfig config_from_map(const std::map<std::string, std::string>& raw) {
  detail::KeyReader r{raw};
  PipelineConfig c;
  int frame_size = c.scenario.frame_height;
  r.str("scenario.units", c.scenario.units);
  r.integer("scenario.nodes", c.scenario.nodes);
  r.real("scenario.mass", c.scenario.mass);
  r.real("scenario.stiffness", c.scenario.stiffness);
  r.real("scenario.damping", c.scenario.damping);
  r.real("scenario.initial_velocity", c.scenario.initial_velocity);
  r.real("scenario.stop_stiffness", c.scenario.stop_stiffness);
  r.real("scenario.element_length", c.scenario.element_length);
  r.real("scenario.dt", c.scenario.dt);
  r.real("scenario.duration", c.scenario.duration);
  r.integer("scenario.frame_stride", c.scenario.frame_stride);
  r.integer("scenario.warmup_steps", c.scenario.warmup_steps);
  r.integer("scenario.frame_size", frame_size);
  c.scenario.frame_height = c.scenario.frame_width = frame_size;
  r.integer("feature_dim", c.feature_dim);
  r.integer("avae.base_width", c.avae_base_width);
  r.integer("avae.epochs", c.avae.epochs);
  r.integer("avae.batch_size", c.avae.batch_size);
  r.real("avae.learning_rate", c.avae.learning_rate);
  r.real("avae.beta1", c.avae.beta1);
  r.real("avae.beta2", c.avae.beta2);
  r.real("avae.lambda_adv", c.avae.lambda_adv);
  r.real("avae.critic_clip", c.avae.critic_clip);
  r.integer("cgan.base_width", c.cgan_base_width);
  r.integer("cgan.noise_channels", c.cgan_noise_channels);
  r.integer("cgan.epochs", c.cgan.epochs);
  r.integer("cgan.batch_size", c.cgan.batch_size);
  r.real("cgan.learning_rate", c.cgan.learning_rate);
  r.real("cgan.beta1", c.cgan.beta1);
  r.real("cgan.beta2", c.cgan.beta2);
  r.real("cgan.lambda_rec", c.cgan.lambda_rec);
  r.real("cgan.adversarial_weight", c.cgan.adversarial_weight);
  r.integer("substeps", c.substeps);
  r.integer("window", c.window);
  r.str("output.dir", c.output_dir);
  r.uint64("seed", c.seed);
  r.finish();
  return c;
}

// `key = value` lines, '#' starts a comment, blank lines ignored
inline PipelineConfig parse_config_text(const std::string& text) {
  std::map<std::string, std::string> raw;
  std::istringstream is(text);
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config: line " + std::to_string(line_no) + " is not 'key = value': " + line);
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string value = detail::trim(line.substr(eq + 1));
    if (key.empty() || value.empty())
      throw ConfigError("config: line " + std::to_string(line_no) + " is missing a key or value");
    if (!raw.emplace(key, value).second)
      throw ConfigError("config: duplicate key '" + key + "'");
  }
  return config_from_map(raw);
}

inline PipelineConfig load_config_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("config: cannot open " + path);
  std::ostringstream buf;
  buf << is.rdbuf();
  return parse_config_text(buf.str());
}

// ---- run manifest ----

struct ArtifactRecord {
  std::string path;  // relative to the run directory
  std::string sha256;
};

struct StageRecord {
  std::string name;
  std::vector<ArtifactRecord> artifacts;
};

struct RunManifest {
  std::string run_id;
  unsigned long long seed = 0;
  std::map<std::string, std::string> config_snapshot;
  std::vector<StageRecord> stages;  // execution order; reruns update in place

  const StageRecord* find_stage(const std::string& name) const {
    for (const auto& s : stages)
      if (s.name == name) return &s;
    return nullptr;
  }

  void upsert_stage(StageRecord rec) {
    for (auto& s : stages)
      if (s.name == rec.name) {
        s = std::move(rec);
        return;
      }
    stages.push_back(std::move(rec));
  }

  void save(const std::string& path) const {
    nlohmann::json j;
    j["run_id"] = run_id;
    j["seed"] = seed;
    j["config"] = config_snapshot;
    j["stages"] = nlohmann::json::array();
    for (const auto& s : stages) {
      nlohmann::json js;
      js["name"] = s.name;
      js["artifacts"] = nlohmann::json::array();
      for (const auto& a : s.artifacts) js["artifacts"].push_back({{"path", a.path}, {"sha256", a.sha256}});
      j["stages"].push_back(js);
    }
    std::ofstream os(path);
    if (!os) throw std::runtime_error("manifest: cannot open " + path + " for writing");
    os << j.dump(2) << "\n";
    if (!os) throw std::runtime_error("manifest: write failed for " + path);
  }

  static RunManifest load(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("manifest: cannot open " + path);
    nlohmann::json j;
    try {
      is >> j;
      RunManifest m;
      m.run_id = j.at("run_id").get<std::string>();
      m.seed = j.at("seed").get<unsigned long long>();
      m.config_snapshot = j.at("config").get<std::map<std::string, std::string>>();
      for (const auto& js : j.at("stages")) {
        StageRecord s;
        s.name = js.at("name").get<std::string>();
        for (const auto& ja : js.at("artifacts"))
          s.artifacts.push_back({ja.at("path").get<std::string>(), ja.at("sha256").get<std::string>()});
        m.stages.push_back(std::move(s));
      }
      return m;
    } catch (const nlohmann::json::exception& e) {
      throw std::runtime_error("manifest: malformed " + path + ": " + e.what());
    }
  }
};

inline std::string run_id_for(const std::map<std::string, std::string>& snapshot) {
  std::string blob;
  for (const auto& [k, v] : snapshot) blob += k + "=" + v + "\n";
  return sha256_hex(blob).substr(0, 16);
}

// single writer per run directory
class RunLock {
 public:
  explicit RunLock(const std::string& run_dir) : path_(run_dir + "/" + paths::kLock) {
    std::filesystem::create_directories(run_dir);
    std::FILE* f = std::fopen(path_.c_str(), "wx");
    if (!f) throw std::runtime_error("run directory is locked (remove " + path_ + " if no stage is running)");
    std::fclose(f);
  }
  ~RunLock() {
    std::error_code ec;
    std::filesystem::remove(path_, ec);
  }
  RunLock(const RunLock&) = delete;
  RunLock& operator=(const RunLock&) = delete;

 private:
  std::string path_;
};

namespace detail {

inline std::string manifest_path(const std::string& run_dir) {
  return run_dir + "/" + paths::kManifest;
}

inline std::vector<ArtifactRecord> hash_files(const std::string& run_dir, const std::vector<std::string>& rel_paths) {
  std::vector<ArtifactRecord> out;
  for (const auto& rel : rel_paths) out.push_back({rel, sha256_file(run_dir + "/" + rel)});
  return out;
}

// every regular file in run_dir/subdir, sorted by name
inline std::vector<ArtifactRecord> hash_directory(const std::string& run_dir, const std::string& subdir) {
  std::vector<std::string> rel;
  for (const auto& entry : std::filesystem::directory_iterator(run_dir + "/" + subdir))
    if (entry.is_regular_file()) rel.push_back(subdir + "/" + entry.path().filename().string());
  std::sort(rel.begin(), rel.end());
  return hash_files(run_dir, rel);
}

inline RunManifest load_manifest_for_stage(const std::string& run_dir) {
  const std::string path = manifest_path(run_dir);
  if (!std::filesystem::exists(path))
    throw MissingStageError("no manifest in " + run_dir + "; run the simulate stage first");
  return RunManifest::load(path);
}

inline void require_stage(const RunManifest& m, const std::string& run_dir, const std::string& name) {
  const StageRecord* s = m.find_stage(name);
  if (!s) throw MissingStageError("stage '" + name + "' has not completed in " + run_dir);
  for (const auto& a : s->artifacts) {
    const std::string full = run_dir + "/" + a.path;
    if (!std::filesystem::exists(full))
      throw MissingStageError("stage '" + name + "' artifact missing: " + a.path);
    if (sha256_file(full) != a.sha256)
      throw MissingStageError("stage '" + name + "' artifact does not match its recorded hash: " + a.path);
  }
}

// snapshot config governs the run; an explicit config must agree with it
inline PipelineConfig stage_config(const RunManifest& m, const PipelineConfig* override_cfg) {
  if (override_cfg) {
    const auto given = config_to_map(*override_cfg);
    for (const auto& [k, v] : given) {
      const auto it = m.config_snapshot.find(k);
      if (it == m.config_snapshot.end() || it->second != v)
        throw ConfigError("config: key '" + k + "' does not match the run's recorded configuration");
    }
  }
  return config_from_map(m.config_snapshot);
}

inline double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return v[v.size() / 2];
}

// which trained encoder-decoder drives reconstruction: the adversarial model
// when present, the plain one otherwise
inline std::string reconstruction_model_stage(const RunManifest& m) {
  if (m.find_stage("train")) return "train";
  if (m.find_stage("train_vae")) return "train_vae";
  throw MissingStageError("stage 'train' has not completed; train a model first");
}

}  // namespace detail

// ---- stages ----

inline void run_simulate(const std::string& run_dir, const PipelineConfig& cfg) {
  cfg.validate();
  RunLock lock(run_dir);
  const auto snapshot = config_to_map(cfg);

  RunManifest manifest;
  const std::string mpath = detail::manifest_path(run_dir);
  if (std::filesystem::exists(mpath)) {
    manifest = RunManifest::load(mpath);
    if (manifest.config_snapshot != snapshot)
      throw ConfigError("config: run " + run_dir + " was created with a different configuration");
  } else {
    manifest.run_id = run_id_for(snapshot);
    manifest.seed = cfg.seed;
    manifest.config_snapshot = snapshot;
  }

  const FrameSequence<double> seq = generate_sequence(cfg.scenario);
  save_sequence(run_dir + "/" + paths::kFramesDir, seq);
  manifest.upsert_stage({"simulate", detail::hash_directory(run_dir, paths::kFramesDir)});
  manifest.save(mpath);
}

template <class T>
void run_train(const std::string& run_dir, bool adversarial, const PipelineConfig* override_cfg = nullptr) {
  RunLock lock(run_dir);
  RunManifest manifest = detail::load_manifest_for_stage(run_dir);
  detail::require_stage(manifest, run_dir, "simulate");
  const PipelineConfig cfg = detail::stage_config(manifest, override_cfg);

  const FrameSequence<T> data = load_sequence<T>(run_dir + "/" + paths::kFramesDir);
  AvaeShape shape;
  shape.input_size = cfg.scenario.frame_height;
  shape.base_width = cfg.avae_base_width;
  shape.feature_dim = cfg.feature_dim;
  Avae<T> model(shape, cfg.seed + 1);

  TrainConfig tc = cfg.avae;
  tc.adversarial = adversarial;
  tc.seed = cfg.seed + 2;
  const auto history = train_avae(model, data, tc);

  const std::string model_name = adversarial ? paths::kAvaeModel : paths::kVaeModel;
  const std::string history_name = adversarial ? paths::kAvaeHistory : paths::kVaeHistory;
  model.save(run_dir + "/" + model_name);
  save_history(run_dir + "/" + history_name, history);
  manifest.upsert_stage({adversarial ? "train" : "train_vae",
                         detail::hash_files(run_dir, {model_name, history_name})});
  manifest.save(detail::manifest_path(run_dir));
}

template <class T>
void run_reconstruct(const std::string& run_dir, const PipelineConfig* override_cfg = nullptr) {
  RunLock lock(run_dir);
  RunManifest manifest = detail::load_manifest_for_stage(run_dir);
  detail::require_stage(manifest, run_dir, "simulate");
  const std::string model_stage = detail::reconstruction_model_stage(manifest);
  detail::require_stage(manifest, run_dir, model_stage);
  const PipelineConfig cfg = detail::stage_config(manifest, override_cfg);

  AvaeShape shape;
  shape.input_size = cfg.scenario.frame_height;
  shape.base_width = cfg.avae_base_width;
  shape.feature_dim = cfg.feature_dim;
  Avae<T> model(shape, cfg.seed + 1);
  model.load(run_dir + "/" + (model_stage == "train" ? paths::kAvaeModel : paths::kVaeModel));

  const FrameSequence<T> frames = load_sequence<T>(run_dir + "/" + paths::kFramesDir);
  const LatentTrajectory traj = extract_trajectory(model, frames);
  save_trajectory(run_dir + "/" + paths::kTrajectory, traj);

  const LatentTrajectory dense = densify_trajectory(traj, cfg.substeps, cfg.window);
  const FrameSequence<T> decoded = decode_trajectory(model, dense);
  save_sequence(run_dir + "/" + paths::kDenseDir, decoded);

  const ReconstructionReport report = interpolate_objective(traj, cfg.substeps, cfg.window);
  save_reconstruction_report(run_dir + "/" + paths::kReconReport, report);

  auto artifacts = detail::hash_files(run_dir, {paths::kTrajectory, paths::kReconReport});
  auto dense_files = detail::hash_directory(run_dir, paths::kDenseDir);
  artifacts.insert(artifacts.end(), dense_files.begin(), dense_files.end());
  manifest.upsert_stage({"reconstruct", std::move(artifacts)});
  manifest.save(detail::manifest_path(run_dir));
}

template <class T>
void run_enhance(const std::string& run_dir, const PipelineConfig* override_cfg = nullptr) {
  RunLock lock(run_dir);
  RunManifest manifest = detail::load_manifest_for_stage(run_dir);
  detail::require_stage(manifest, run_dir, "simulate");
  const std::string model_stage = detail::reconstruction_model_stage(manifest);
  detail::require_stage(manifest, run_dir, model_stage);
  detail::require_stage(manifest, run_dir, "reconstruct");
  const PipelineConfig cfg = detail::stage_config(manifest, override_cfg);

  AvaeShape shape;
  shape.input_size = cfg.scenario.frame_height;
  shape.base_width = cfg.avae_base_width;
  shape.feature_dim = cfg.feature_dim;
  Avae<T> avae(shape, cfg.seed + 1);
  avae.load(run_dir + "/" + (model_stage == "train" ? paths::kAvaeModel : paths::kVaeModel));

  const FrameSequence<T> targets = load_sequence<T>(run_dir + "/" + paths::kFramesDir);
  const LatentTrajectory traj = load_trajectory(run_dir + "/" + paths::kTrajectory);
  const FrameSequence<T> decoded = decode_trajectory(avae, traj);
  const PairedSet<T> pairs = make_paired_set(decoded, targets);

  CganShape cshape;
  cshape.input_size = cfg.scenario.frame_height;
  cshape.base_width = cfg.cgan_base_width;
  cshape.noise_channels = cfg.cgan_noise_channels;
  Cgan<T> cgan(cshape, cfg.seed + 3);
  CganTrainConfig cc = cfg.cgan;
  cc.seed = cfg.seed + 4;
  const auto history = train_cgan(cgan, pairs, cc);
  cgan.save(run_dir + "/" + paths::kCganModel);
  save_cgan_history(run_dir + "/" + paths::kCganHistory, history);

  FrameSequence<T> enhanced;
  enhanced.source = run_dir;
  std::ofstream metrics(run_dir + "/" + paths::kEnhanceMetrics);
  if (!metrics) throw std::runtime_error("enhance: cannot open metrics table for writing");
  metrics << "index,psnr_decoded_db,ssim_decoded,psnr_enhanced_db,ssim_enhanced\n";
  std::vector<double> psnr_enh, ssim_enh;
  for (const auto& item : pairs.items) {
    Frame<T> out;
    out.pixels = cgan.generate(item.condition.pixels);
    out.meta = item.condition.meta;
    const MetricsReport before = compare_images(item.condition.pixels, item.target.pixels);
    const MetricsReport after = compare_images(out.pixels, item.target.pixels);
    metrics << item.condition.meta.iteration_index << "," << format_real(before.psnr_db) << ","
            << format_real(before.ssim) << "," << format_real(after.psnr_db) << "," << format_real(after.ssim)
            << "\n";
    psnr_enh.push_back(after.psnr_db);
    ssim_enh.push_back(after.ssim);
    enhanced.frames.push_back(std::move(out));
  }
  const double med_psnr = detail::median(psnr_enh);
  const double med_ssim = detail::median(ssim_enh);
  const bool thresholds_met = med_psnr > 20.0 && med_ssim > 0.9;
  metrics << "# median_psnr_enhanced_db " << format_real(med_psnr) << ", median_ssim_enhanced "
          << format_real(med_ssim) << "\n";
  metrics << "# thresholds_20db_0.9_met " << (thresholds_met ? "yes" : "no") << "\n";
  if (!metrics) throw std::runtime_error("enhance: metrics table write failed");
  metrics.close();

  save_sequence(run_dir + "/" + paths::kEnhancedDir, enhanced);

  auto artifacts = detail::hash_files(run_dir, {paths::kCganModel, paths::kCganHistory, paths::kEnhanceMetrics});
  auto files = detail::hash_directory(run_dir, paths::kEnhancedDir);
  artifacts.insert(artifacts.end(), files.begin(), files.end());
  manifest.upsert_stage({"enhance", std::move(artifacts)});
  manifest.save(detail::manifest_path(run_dir));
}

// ---- report ----

namespace detail {

inline void append_file(std::ostringstream& os, const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("report: cannot open " + path);
  os << is.rdbuf();
  os << "\n";
}

// median reconstruction metrics of a model against the simulated frames
template <class T>
void comparison_rows(const std::string& run_dir, const PipelineConfig& cfg, const FrameSequence<T>& frames,
                     const std::string& model_file, std::vector<double>& out) {
  AvaeShape shape;
  shape.input_size = cfg.scenario.frame_height;
  shape.base_width = cfg.avae_base_width;
  shape.feature_dim = cfg.feature_dim;
  Avae<T> model(shape, 1);
  model.load(run_dir + "/" + model_file);
  std::vector<double> psnr, ssim, mse;
  for (const auto& f : frames.frames) {
    const auto z = model.encode_mean(f.pixels);
    const MetricsReport r = compare_images(model.decode(z), f.pixels);
    psnr.push_back(r.psnr_db);
    ssim.push_back(r.ssim);
    mse.push_back(r.mse);
  }
  out = {median(psnr), median(ssim), median(mse)};
}

template <class T>
bool try_comparison(const std::string& run_dir, const PipelineConfig& cfg, const std::string& model_file,
                    std::vector<double>& out) {
  try {
    const FrameSequence<T> frames = load_sequence<T>(run_dir + "/" + paths::kFramesDir);
    comparison_rows(run_dir, cfg, frames, model_file, out);
    return true;
  } catch (const std::exception&) {
    return false;
  }
}

}  // namespace detail

// Consolidated run summary; written to report.txt and returned. Sections
// appear for completed stages, absent stages are listed at the end.
inline std::string run_report(const std::string& run_dir) {
  if (!std::filesystem::exists(detail::manifest_path(run_dir)))
    throw UnknownRunError("unknown run: no manifest in " + run_dir);
  RunLock lock(run_dir);
  const RunManifest manifest = RunManifest::load(detail::manifest_path(run_dir));
  const PipelineConfig cfg = config_from_map(manifest.config_snapshot);

  std::ostringstream os;
  os << "run " << manifest.run_id << "\n";
  os << "seed " << manifest.seed << "\n\n";

  if (manifest.find_stage("simulate")) {
    os << "== simulation ==\n";
    std::ifstream frames_csv(run_dir + "/" + paths::kFramesDir + "/frames.csv");
    std::string line;
    long count = -1;  // header line
    while (std::getline(frames_csv, line))
      if (!line.empty()) ++count;
    os << "frames " << count << "\n";
    os << "frame_size " << cfg.scenario.frame_height << "\n\n";
  }

  const bool has_avae = manifest.find_stage("train") != nullptr;
  const bool has_vae = manifest.find_stage("train_vae") != nullptr;
  if (has_avae || has_vae) {
    os << "== training loss ==\n";
    if (has_avae) {
      os << "adversarial (" << paths::kAvaeHistory << ")\n";
      detail::append_file(os, run_dir + "/" + paths::kAvaeHistory);
    }
    if (has_vae) {
      os << "plain (" << paths::kVaeHistory << ")\n";
      detail::append_file(os, run_dir + "/" + paths::kVaeHistory);
    }
  }

  if (manifest.find_stage("reconstruct")) {
    os << "== latent trajectory ==\n";
    detail::append_file(os, run_dir + "/" + paths::kTrajectory);
    os << "== interpolation errors ==\n";
    detail::append_file(os, run_dir + "/" + paths::kReconReport);
  }

  if (manifest.find_stage("enhance")) {
    os << "== enhancement ==\n";
    detail::append_file(os, run_dir + "/" + paths::kEnhanceMetrics);
  }

  if (has_avae && has_vae) {
    std::vector<double> avae_row, vae_row;
    const bool ok = (detail::try_comparison<double>(run_dir, cfg, paths::kAvaeModel, avae_row) ||
                     detail::try_comparison<float>(run_dir, cfg, paths::kAvaeModel, avae_row)) &&
                    (detail::try_comparison<double>(run_dir, cfg, paths::kVaeModel, vae_row) ||
                     detail::try_comparison<float>(run_dir, cfg, paths::kVaeModel, vae_row));
    if (ok) {
      os << "== model comparison ==\n";
      os << "metric,adversarial,plain\n";
      os << "median_psnr_db," << format_real(avae_row[0]) << "," << format_real(vae_row[0]) << "\n";
      os << "median_ssim," << format_real(avae_row[1]) << "," << format_real(vae_row[1]) << "\n";
      os << "median_mse," << format_real(avae_row[2]) << "," << format_real(vae_row[2]) << "\n\n";
    }
  }

  static const char* kAllStages[] = {"simulate", "train", "train_vae", "reconstruct", "enhance"};
  for (const char* name : kAllStages)
    if (!manifest.find_stage(name)) os << "missing stage: " << name << "\n";

  const std::string text = os.str();
  std::ofstream out(run_dir + "/" + paths::kReport);
  if (!out) throw std::runtime_error("report: cannot open " + std::string(paths::kReport) + " for writing");
  out << text;
  if (!out) throw std::runtime_error("report: write failed");
  return text;
}

}  // namespace erec
