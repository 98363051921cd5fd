// Copyright 2026 The sslnas Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "sslnas/harness.hpp"

#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <set>
#include <sstream>

#include <spdlog/spdlog.h>

#include "json.hpp"
#include "sslnas/error.hpp"
#include "sslnas/eval.hpp"

namespace sslnas {

using nlohmann::json;
using ojson = nlohmann::ordered_json;

std::string command_name(Command c) {
  switch (c) {
    case Command::Search: return "search";
    case Command::Pretrain: return "pretrain";
    case Command::LinearEval: return "linear-eval";
    case Command::Derive: return "derive";
    case Command::Study: return "study";
    case Command::Report: return "report";
    case Command::Supervised: return "supervised";
  }
  return "unknown";
}

Command parse_command(const std::string& name) {
  for (Command c : {Command::Search, Command::Pretrain, Command::LinearEval, Command::Derive, Command::Study,
                    Command::Report, Command::Supervised})
    if (command_name(c) == name) return c;
  throw ConfigError("unknown command '" + name + "'");
}

// ---------------------------------------------------------------------------
// Manifest parsing
// ---------------------------------------------------------------------------

namespace {

[[noreturn]] void field_error(const std::string& field, const std::string& what) {
  throw ConfigError("manifest field '" + field + "': " + what);
}

void allow_only(const json& j, const std::string& where, std::initializer_list<const char*> keys) {
  if (!j.is_object()) field_error(where.empty() ? "<root>" : where, "expected an object");
  for (const auto& [key, _] : j.items()) {
    bool known = false;
    for (const char* k : keys) known = known || key == k;
    if (!known) field_error(where.empty() ? key : where + "." + key, "unknown field");
  }
}

template <typename T>
bool read(const json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return false;
  const std::string field = where.empty() ? key : where + "." + key;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception&) {
    field_error(field, "has the wrong type (" + std::string(j.at(key).type_name()) + ")");
  }
  return true;
}

std::filesystem::path resolve(const std::filesystem::path& p, const std::filesystem::path& base) {
  if (p.empty() || p.is_absolute() || base.empty()) return p;
  return base / p;
}

DatasetDescriptor parse_dataset(const json& j, const std::string& where, const std::filesystem::path& base) {
  allow_only(j, where, {"name", "kind", "root", "image_size", "synthetic", "train_fraction", "test_fraction",
                        "split_seed"});
  DatasetDescriptor d;
  if (!read(j, "name", d.name, where)) field_error(where + ".name", "is required");
  std::string kind = "synthetic";
  read(j, "kind", kind, where);
  if (kind == "folder") {
    d.kind = DatasetKind::Folder;
  } else if (kind == "synthetic") {
    d.kind = DatasetKind::Synthetic;
  } else {
    field_error(where + ".kind", "must be 'folder' or 'synthetic', got '" + kind + "'");
  }
  std::string root;
  if (read(j, "root", root, where)) d.root = resolve(root, base);
  read(j, "image_size", d.image_size, where);
  if (j.contains("synthetic")) {
    const std::string w = where + ".synthetic";
    const auto& s = j.at("synthetic");
    allow_only(s, w, {"classes", "samples_per_class", "image_size", "seed", "noise"});
    read(s, "classes", d.synthetic.classes, w);
    read(s, "samples_per_class", d.synthetic.samples_per_class, w);
    read(s, "image_size", d.synthetic.image_size, w);
    read(s, "seed", d.synthetic.seed, w);
    read(s, "noise", d.synthetic.noise, w);
  }
  const bool has_train = read(j, "train_fraction", d.train_fraction, where);
  const bool has_test = read(j, "test_fraction", d.test_fraction, where);
  if (has_train && !has_test) d.test_fraction = 1.0 - d.train_fraction;
  if (has_test && !has_train) d.train_fraction = 1.0 - d.test_fraction;
  read(j, "split_seed", d.split_seed, where);
  if (d.kind == DatasetKind::Folder) {
    if (d.root.empty()) field_error(where + ".root", "is required for folder datasets");
    if (!std::filesystem::is_directory(d.root)) field_error(where + ".root", "directory " + d.root.string() + " does not exist");
  }
  try {
    validate(d);
  } catch (const ConfigError& e) {
    field_error(where, e.what());
  }
  return d;
}

StudySpec parse_study(const json& j) {
  allow_only(j, "study", {"family", "num_models", "resnet", "mobilenet", "searched_width", "width_scale"});
  StudySpec s;
  std::string family;
  if (read(j, "family", family, "study")) {
    try {
      s.family = parse_family(family);
    } catch (const Error& e) {
      field_error("study.family", e.what());
    }
  }
  read(j, "num_models", s.num_models, "study");
  read(j, "searched_width", s.searched_width, "study");
  read(j, "width_scale", s.width_scale, "study");
  if (j.contains("resnet")) {
    const auto& r = j.at("resnet");
    allow_only(r, "study.resnet", {"min_blocks", "max_blocks", "widths", "groups"});
    read(r, "min_blocks", s.resnet.min_blocks, "study.resnet");
    read(r, "max_blocks", s.resnet.max_blocks, "study.resnet");
    read(r, "widths", s.resnet.widths, "study.resnet");
    read(r, "groups", s.resnet.groups, "study.resnet");
  }
  if (j.contains("mobilenet")) {
    const auto& m = j.at("mobilenet");
    allow_only(m, "study.mobilenet", {"min_blocks", "max_blocks", "widths"});
    read(m, "min_blocks", s.mobilenet.min_blocks, "study.mobilenet");
    read(m, "max_blocks", s.mobilenet.max_blocks, "study.mobilenet");
    read(m, "widths", s.mobilenet.widths, "study.mobilenet");
  }
  if (s.num_models < 3) field_error("study.num_models", "must be >= 3 for correlations");
  if (!(s.searched_width > 0.0)) field_error("study.searched_width", "must be positive");
  if (!(s.width_scale > 0.0)) field_error("study.width_scale", "must be positive");
  if (s.resnet.min_blocks < 1 || s.resnet.max_blocks < s.resnet.min_blocks || s.resnet.widths.empty() ||
      s.resnet.groups.empty())
    field_error("study.resnet", "needs 1 <= min_blocks <= max_blocks and non-empty widths and groups");
  if (s.mobilenet.min_blocks < 1 || s.mobilenet.max_blocks < s.mobilenet.min_blocks || s.mobilenet.widths.empty())
    field_error("study.mobilenet", "needs 1 <= min_blocks <= max_blocks and non-empty widths");
  return s;
}

void require_file(const std::filesystem::path& p, const char* field, Command c) {
  if (p.empty()) field_error(field, "is required for the " + command_name(c) + " command");
  if (!std::filesystem::exists(p)) field_error(field, "file " + p.string() + " does not exist");
}

}  // namespace

ExperimentManifest parse_manifest(const std::string& text, const std::filesystem::path& base_dir) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("manifest is not valid JSON: ") + e.what());
  }
  allow_only(j, "", {"command", "seed", "output_dir", "space_width", "arch", "checkpoint", "results", "datasets",
                     "train", "study", "resume"});
  ExperimentManifest m;
  std::string command;
  if (!read(j, "command", command, "")) field_error("command", "is required");
  try {
    m.command = parse_command(command);
  } catch (const ConfigError& e) {
    field_error("command", e.what());
  }
  if (!read(j, "seed", m.seed, "")) field_error("seed", "is required");
  std::string path;
  if (read(j, "output_dir", path, "")) m.output_dir = resolve(path, base_dir);
  else m.output_dir = resolve(m.output_dir, base_dir);
  read(j, "space_width", m.space_width, "");
  if (!(m.space_width > 0.0)) field_error("space_width", "must be positive");
  if (read(j, "arch", path, "")) m.arch_path = resolve(path, base_dir);
  if (read(j, "checkpoint", path, "")) m.checkpoint_path = resolve(path, base_dir);
  if (read(j, "results", path, "")) m.results_path = resolve(path, base_dir);
  read(j, "resume", m.resume, "");
  if (j.contains("datasets")) {
    if (!j.at("datasets").is_array()) field_error("datasets", "expected an array");
    std::set<std::string> names;
    for (size_t i = 0; i < j.at("datasets").size(); ++i) {
      const std::string where = "datasets[" + std::to_string(i) + "]";
      m.datasets.push_back(parse_dataset(j.at("datasets")[i], where, base_dir));
      if (!names.insert(m.datasets.back().name).second) field_error(where + ".name", "duplicate dataset name");
    }
  }
  if (j.contains("train")) {
    try {
      m.train = config_from_json(j.at("train").dump());
    } catch (const ConfigError& e) {
      field_error("train", e.what());
    }
  }
  m.train.seed = m.seed;
  if (j.contains("study")) m.study = parse_study(j.at("study"));

  switch (m.command) {
    case Command::Search:
    case Command::Study:
      if (m.datasets.empty()) field_error("datasets", "at least one dataset is required");
      break;
    case Command::Pretrain:
    case Command::Supervised:
      if (m.datasets.empty()) field_error("datasets", "at least one dataset is required");
      require_file(m.arch_path, "arch", m.command);
      break;
    case Command::LinearEval:
      if (m.datasets.empty()) field_error("datasets", "at least one dataset is required");
      require_file(m.arch_path, "arch", m.command);
      require_file(m.checkpoint_path, "checkpoint", m.command);
      break;
    case Command::Derive:
      require_file(m.checkpoint_path, "checkpoint", m.command);
      break;
    case Command::Report:
      require_file(m.results_path, "results", m.command);
      break;
  }
  if (m.resume) {
    if (m.command != Command::Search && m.command != Command::Pretrain && m.command != Command::Supervised)
      field_error("resume", "only search, pretrain and supervised runs can resume");
    require_file(m.checkpoint_path, "checkpoint", m.command);
  }
  if (m.command == Command::Supervised)
    for (const auto& d : m.datasets)
      if (d.kind == DatasetKind::Synthetic && d.synthetic.classes < 2)
        field_error("datasets", "labeled use needs >= 2 classes");
  return m;
}

ExperimentManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read manifest " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_manifest(ss.str(), path.parent_path());
}

std::string manifest_to_json(const ExperimentManifest& m) {
  ojson j;
  j["command"] = command_name(m.command);
  j["seed"] = m.seed;
  j["output_dir"] = m.output_dir.string();
  j["space_width"] = m.space_width;
  if (!m.arch_path.empty()) j["arch"] = m.arch_path.string();
  if (!m.checkpoint_path.empty()) j["checkpoint"] = m.checkpoint_path.string();
  if (!m.results_path.empty()) j["results"] = m.results_path.string();
  j["resume"] = m.resume;
  j["datasets"] = ojson::array();
  for (const auto& d : m.datasets) {
    ojson e;
    e["name"] = d.name;
    e["kind"] = d.kind == DatasetKind::Folder ? "folder" : "synthetic";
    if (d.kind == DatasetKind::Folder) {
      e["root"] = d.root.string();
      e["image_size"] = d.image_size;
    } else {
      e["synthetic"] = {{"classes", d.synthetic.classes},
                        {"samples_per_class", d.synthetic.samples_per_class},
                        {"image_size", d.synthetic.image_size},
                        {"seed", d.synthetic.seed},
                        {"noise", d.synthetic.noise}};
    }
    e["train_fraction"] = d.train_fraction;
    e["test_fraction"] = d.test_fraction;
    e["split_seed"] = d.split_seed;
    j["datasets"].push_back(e);
  }
  j["train"] = ojson::parse(config_to_json(m.train));
  const auto& s = m.study;
  j["study"] = {{"family", family_name(s.family)},
                {"num_models", s.num_models},
                {"resnet",
                 {{"min_blocks", s.resnet.min_blocks},
                  {"max_blocks", s.resnet.max_blocks},
                  {"widths", s.resnet.widths},
                  {"groups", s.resnet.groups}}},
                {"mobilenet",
                 {{"min_blocks", s.mobilenet.min_blocks},
                  {"max_blocks", s.mobilenet.max_blocks},
                  {"widths", s.mobilenet.widths}}},
                {"searched_width", s.searched_width},
                {"width_scale", s.width_scale}};
  return j.dump(2);
}

// ---------------------------------------------------------------------------
// Run directories
// ---------------------------------------------------------------------------

std::filesystem::path make_run_dir(const std::filesystem::path& output_dir, Command command) {
  std::error_code ec;
  std::filesystem::create_directories(output_dir, ec);
  if (ec) throw IoError("cannot create output directory " + output_dir.string() + ": " + ec.message());
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char stamp[32];
  std::strftime(stamp, sizeof(stamp), "%Y%m%dT%H%M%SZ", &tm);
  const std::string base = command_name(command) + "-" + stamp;
  for (int k = 0; k < 10000; ++k) {
    const auto dir = output_dir / (k == 0 ? base : base + "-" + std::to_string(k));
    // create_directory reports false when the directory already exists, so
    // an existing run is never reused.
    if (std::filesystem::create_directory(dir, ec)) return dir;
    if (ec) throw IoError("cannot create run directory " + dir.string() + ": " + ec.message());
  }
  throw IoError("no free run directory name under " + output_dir.string());
}

namespace {

constexpr std::uint64_t kStudyKey = 0x57d1;

std::string exact(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::error_code ec;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw IoError("write failed for " + path.string());
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Appends epoch rows to run_dir/metrics.csv as they complete.
class MetricsLog {
 public:
  explicit MetricsLog(const std::filesystem::path& path) : path_(path) {
    write_text(path_, "epoch,phase,loss,lr_w,lr_alpha\n");
  }

  void add(const EpochInfo& e, const std::string& phase_label = "") {
    std::ofstream out(path_, std::ios::app);
    out << e.epoch << "," << (phase_label.empty() ? phase_name(e.phase) : phase_label) << "," << exact(e.loss) << ","
        << exact(e.lr_weights) << "," << exact(e.lr_alpha) << "\n";
    if (!out) throw IoError("write failed for " + path_.string());
    last_loss_ = e.loss;
  }

  double last_loss() const { return last_loss_; }

 private:
  std::filesystem::path path_;
  double last_loss_ = 0.0;
};

struct Run {
  const ExperimentManifest& m;
  RunRecord& rec;
  MetricsLog log;
  ojson normalization = ojson::object();

  Run(const ExperimentManifest& manifest, RunRecord& record)
      : m(manifest), rec(record), log(record.run_dir / "metrics.csv") {}

  std::filesystem::path dir() const { return rec.run_dir; }

  void artifact(const std::filesystem::path& p) { rec.artifacts.push_back(p); }

  const Normalization& note_normalization(const std::string& name, const Normalization& n) {
    normalization[name] = {{"mean", n.mean}, {"stddev", n.stddev}};
    write_text(dir() / "normalization.json", normalization.dump(2));
    return n;
  }

  TrainHooks hooks(const std::string& phase_label = "") {
    TrainHooks h;
    h.checkpoint_dir = dir() / "checkpoints";
    h.on_epoch = [this, phase_label](const EpochInfo& e) { log.add(e, phase_label); };
    return h;
  }
};

// Runs `fn` as stage `name`; failures are recorded in error.json first.
template <typename Fn>
auto stage(Run& run, const std::string& name, Fn&& fn) {
  try {
    return fn();
  } catch (const std::exception& e) {
    ojson err;
    err["stage"] = name;
    err["command"] = command_name(run.m.command);
    if (const auto* se = dynamic_cast<const Error*>(&e)) {
      static const char* kCategories[] = {"domain", "structural", "numeric", "parse", "integrity", "config", "io", "data"};
      err["category"] = kCategories[static_cast<int>(se->category())];
    } else {
      err["category"] = "internal";
    }
    err["message"] = e.what();
    try {
      write_text(run.dir() / "error.json", err.dump(2));
    } catch (const std::exception&) {
      spdlog::error("could not record the failure of stage {}", name);
    }
    throw;
  }
}

ArchitectureSpec load_arch(const std::filesystem::path& path) { return parse_arch(read_text(path)); }

void write_arch(Run& run, const ArchitectureSpec& arch) {
  const auto path = run.dir() / "derived" / "arch.json";
  write_text(path, serialize_arch(arch));
  run.artifact(path);
  const auto svg = run.dir() / "derived" / "arch.svg";
  write_text(svg, arch_diagram_svg(arch, "Derived architecture"));
  run.artifact(svg);
}

std::vector<DatasetSplits> load_all(Run& run) {
  return stage(run, "load-data", [&] {
    std::vector<DatasetSplits> out;
    for (const auto& d : run.m.datasets) {
      out.push_back(load_dataset(d));
      run.rec.metrics["skipped_" + d.name] = out.back().skipped;
    }
    return out;
  });
}

void search_command(Run& run) {
  const auto data = load_all(run);
  const auto& train = data.front().train;
  const TrainConfig& cfg = run.m.train;
  const Normalization norm = run.note_normalization(run.m.datasets.front().name, compute_normalization(train));
  SearchState state(build_default_space(run.m.space_width), cfg);
  if (run.m.resume)
    stage(run, "resume", [&] { state.restore(load_checkpoint(run.m.checkpoint_path, config_hash(cfg)), cfg); });
  auto hooks = run.hooks();
  stage(run, "search", [&] {
    warmup_phase(state, train, norm, cfg, hooks);
    search_phase(state, train, norm, cfg, hooks);
  });
  const ArchitectureSpec arch = stage(run, "derive", [&] { return derive_architecture(state.net); });
  stage(run, "write", [&] {
    write_arch(run, arch);
    ojson probs = ojson::array();
    for (const auto& e : state.net.edges()) probs.push_back(path_probabilities(e));
    write_text(run.dir() / "derived" / "probabilities.json", probs.dump(2));
    save_checkpoint(run.dir() / "checkpoints" / "final", state.checkpoint(cfg));
    run.artifact(run.dir() / "checkpoints" / "final");
  });
  int zeros = 0;
  for (const auto& c : arch.cells) zeros += c.op.kind == OpKind::Zero;
  run.rec.metrics["final_loss"] = run.log.last_loss();
  run.rec.metrics["derived_params"] = static_cast<double>(count_params(arch));
  run.rec.metrics["derived_zero_cells"] = zeros;
}

void derive_command(Run& run) {
  const ArchitectureSpec arch = stage(run, "derive", [&] {
    const Checkpoint ck = load_checkpoint(run.m.checkpoint_path);
    const SearchSpaceSpec space = build_default_space(run.m.space_width);
    if (ck.space_hash != space_hash(space))
      throw IntegrityError("checkpoint was searched in a different space (check space_width)");
    std::vector<MixedEdge> edges;
    for (int i = 0; i < space.total_cells(); ++i) edges.push_back({i, candidate_set(space, i), {}});
    if (ck.alphas.size() != edges.size()) throw IntegrityError("checkpoint edge count does not match the space");
    for (size_t i = 0; i < edges.size(); ++i) {
      if (ck.alphas[i].size() != edges[i].candidates.size())
        throw IntegrityError("checkpoint alpha length does not match edge " + std::to_string(i));
      edges[i].alpha = ck.alphas[i];
    }
    return derive_architecture(space, edges);
  });
  stage(run, "write", [&] { write_arch(run, arch); });
  run.rec.metrics["derived_params"] = static_cast<double>(count_params(arch));
}

FeatureSet features_of(nn::Backbone& backbone, const Dataset& data, const Normalization& norm, const TrainConfig& cfg) {
  return extract_features(backbone, data, norm, cfg.augment.output_size, cfg.batch_size);
}

// Linear probe of `backbone` on every dataset; returns top-1 per dataset.
std::vector<double> probe_all(Run& run, nn::Backbone& backbone, const std::vector<DatasetSplits>& data) {
  std::vector<double> top1;
  for (size_t i = 0; i < data.size(); ++i) {
    const auto& name = run.m.datasets[i].name;
    const Normalization norm = run.note_normalization(name, compute_normalization(data[i].train));
    const FeatureSet tr = features_of(backbone, data[i].train, norm, run.m.train);
    const FeatureSet te = features_of(backbone, data[i].test, norm, run.m.train);
    top1.push_back(linear_eval(tr, te));
  }
  return top1;
}

void pretrain_command(Run& run) {
  const auto data = load_all(run);
  const TrainConfig& cfg = run.m.train;
  const ArchitectureSpec arch = stage(run, "load-arch", [&] { return load_arch(run.m.arch_path); });
  const Normalization norm =
      run.note_normalization(run.m.datasets.front().name, compute_normalization(data.front().train));
  ModelState state(arch, cfg, Phase::Pretrain);
  if (run.m.resume)
    stage(run, "resume", [&] { state.restore(load_checkpoint(run.m.checkpoint_path, config_hash(cfg)), cfg); });
  stage(run, "pretrain", [&] { pretrain(state, data.front().train, norm, cfg, run.hooks()); });
  stage(run, "write", [&] {
    save_checkpoint(run.dir() / "checkpoints" / "final", state.checkpoint(cfg));
    run.artifact(run.dir() / "checkpoints" / "final");
  });
  run.rec.metrics["final_loss"] = run.log.last_loss();
  run.rec.metrics["params"] = static_cast<double>(count_params(arch));
}

void linear_eval_command(Run& run) {
  const auto data = load_all(run);
  const TrainConfig& cfg = run.m.train;
  const ArchitectureSpec arch = stage(run, "load-arch", [&] { return load_arch(run.m.arch_path); });
  Rng rng(derive_seed(cfg.seed, {kStudyKey, 1}));
  nn::Backbone backbone(arch, rng);
  stage(run, "load-checkpoint", [&] { load_backbone_weights(backbone, arch, load_checkpoint(run.m.checkpoint_path)); });
  const auto top1 = stage(run, "linear-eval", [&] { return probe_all(run, backbone, data); });
  for (size_t i = 0; i < top1.size(); ++i) run.rec.metrics["top1_" + run.m.datasets[i].name] = top1[i];
}

void supervised_command(Run& run) {
  const auto data = load_all(run);
  const TrainConfig& cfg = run.m.train;
  const ArchitectureSpec arch = stage(run, "load-arch", [&] { return load_arch(run.m.arch_path); });
  const auto& split = data.front();
  const Normalization norm = run.note_normalization(run.m.datasets.front().name, compute_normalization(split.train));
  ModelState state(arch, cfg, Phase::Supervised, split.train.num_classes());
  if (run.m.resume)
    stage(run, "resume", [&] { state.restore(load_checkpoint(run.m.checkpoint_path, config_hash(cfg)), cfg); });
  stage(run, "supervised", [&] { supervised_train(state, split.train, norm, cfg, run.hooks()); });
  run.rec.metrics["top1"] = stage(run, "evaluate", [&] { return classify_accuracy(state, split.test, norm, cfg); });
  run.rec.metrics["final_loss"] = run.log.last_loss();
  stage(run, "write", [&] {
    save_checkpoint(run.dir() / "checkpoints" / "final", state.checkpoint(cfg));
    run.artifact(run.dir() / "checkpoints" / "final");
  });
}

ArchitectureSpec sample_study_model(const StudySpec& s, std::uint64_t seed, int index) {
  Rng rng(derive_seed(seed, {kStudyKey, static_cast<std::uint64_t>(index)}));
  ArchitectureSpec a;
  switch (s.family) {
    case Family::ResNetLike: a = sample_resnet_variant(rng, s.resnet); break;
    case Family::MobileNetLike: a = sample_mobilenet_variant(rng, s.mobilenet); break;
    case Family::Searched: a = sample_searched_variant(rng, s.searched_width); break;
  }
  if (s.family != Family::Searched) a.width_multiplier *= s.width_scale;
  return a;
}

void emit(Run& run, const ResultTable& table) {
  const CorrelationReport report = stage(run, "report", [&] { return build_correlation_matrix(table); });
  const auto files = stage(run, "report", [&] { return emit_report(report, table, run.dir() / "report"); });
  for (const auto& f : files) run.artifact(f);
  double sum = 0.0;
  int pairs = 0;
  for (Eigen::Index a = 0; a < report.spearman.rows(); ++a)
    for (Eigen::Index b = a + 1; b < report.spearman.cols(); ++b) {
      sum += report.spearman(a, b);
      ++pairs;
    }
  run.rec.metrics["dataset_pairs"] = pairs;
  if (pairs > 0) run.rec.metrics["mean_spearman"] = sum / pairs;
}

void study_command(Run& run) {
  const auto data = load_all(run);
  const TrainConfig& cfg = run.m.train;
  const auto& pre = data.front().train;
  const Normalization norm = run.note_normalization(run.m.datasets.front().name, compute_normalization(pre));
  ResultTable table;
  for (const auto& d : run.m.datasets) table.datasets.push_back(d.name);
  table.top1.resize(run.m.study.num_models, static_cast<Eigen::Index>(data.size()));
  for (int i = 0; i < run.m.study.num_models; ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "%s-%02d", family_name(run.m.study.family).c_str(), i);
    const ArchitectureSpec arch = sample_study_model(run.m.study, run.m.seed, i);
    spdlog::info("study model {} ({} params)", name, count_params(arch));
    ModelState state(arch, cfg, Phase::Pretrain);
    TrainHooks hooks;
    hooks.on_epoch = [&](const EpochInfo& e) { run.log.add(e, std::string("pretrain/") + name); };
    stage(run, std::string("study/") + name + "/pretrain", [&] { pretrain(state, pre, norm, cfg, hooks); });
    const auto top1 = stage(run, std::string("study/") + name + "/linear-eval",
                            [&] { return probe_all(run, state.backbone, data); });
    table.models.push_back(name);
    table.params.push_back(count_params(arch));
    table.ratios.push_back(top_bottom_ratio(arch));
    table.archs.push_back(arch);
    for (size_t j = 0; j < top1.size(); ++j) table.top1(i, static_cast<Eigen::Index>(j)) = top1[j];
  }
  emit(run, table);
}

void report_command(Run& run) {
  const ResultTable table = stage(run, "load-results", [&] { return parse_results_csv(read_text(run.m.results_path)); });
  emit(run, table);
}

}  // namespace

RunRecord run_experiment(const ExperimentManifest& manifest) {
  const auto t0 = std::chrono::steady_clock::now();
  RunRecord rec;
  rec.command = manifest.command;
  rec.run_dir = make_run_dir(manifest.output_dir, manifest.command);
  write_text(rec.run_dir / "config.json", manifest_to_json(manifest));
  Run run(manifest, rec);
  spdlog::info("{} run in {}", command_name(manifest.command), rec.run_dir.string());
  stage(run, "config", [&] { validate(manifest.train); });
  switch (manifest.command) {
    case Command::Search: search_command(run); break;
    case Command::Derive: derive_command(run); break;
    case Command::Pretrain: pretrain_command(run); break;
    case Command::LinearEval: linear_eval_command(run); break;
    case Command::Supervised: supervised_command(run); break;
    case Command::Study: study_command(run); break;
    case Command::Report: report_command(run); break;
  }
  rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  ojson summary;
  summary["command"] = command_name(rec.command);
  summary["metrics"] = rec.metrics;
  summary["artifacts"] = ojson::array();
  for (const auto& a : rec.artifacts) summary["artifacts"].push_back(a.string());
  summary["wall_seconds"] = rec.wall_seconds;
  write_text(rec.run_dir / "summary.json", summary.dump(2));
  return rec;
}

}  // namespace sslnas
