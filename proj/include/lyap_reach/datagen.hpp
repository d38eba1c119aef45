#pragma once

// Dataset generation for the learned controller.
//
// Each sample is a snapshot of the exact controller partway through a reaching
// episode: scenes are sampled like the simulator's, a start configuration is
// solved by IK, the arm follows the exact controller toward a uniformly chosen
// instance for a uniform fraction of an episode, and the labels (V, u) are the
// exact controller's outputs for the instance it would commit to from there.
// Rolling partway concentrates samples along realistic approach paths,
// including the near-goal region where value estimates matter most.

#include <cstdint>
#include <filesystem>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "simulator.hpp"

namespace lyap_reach {

// ---------------------------------------------------------------------------
// Sampler configuration
// ---------------------------------------------------------------------------

struct SamplerConfig {
  int scenes = 2000;
  int samples_per_scene = 5;
  double t_max = 4.0;        // rolled duration is U[0, t_max] seconds
  double dt = 0.02;
  int min_instances = 1;
  int max_instances = 3;
  Vector3d ws_min = workspace_min();
  Vector3d ws_max = workspace_max();
  double table_height = 0.0;
  int eval_modulus = 10;     // every (eval_modulus)-th scene is held out
};

inline nlohmann::json sampler_config_to_json(const SamplerConfig& c) {
  nlohmann::json j;
  j["scenes"] = c.scenes;
  j["samples_per_scene"] = c.samples_per_scene;
  j["t_max"] = c.t_max;
  j["dt"] = c.dt;
  j["min_instances"] = c.min_instances;
  j["max_instances"] = c.max_instances;
  j["workspace"]["min"] = {c.ws_min(0), c.ws_min(1), c.ws_min(2)};
  j["workspace"]["max"] = {c.ws_max(0), c.ws_max(1), c.ws_max(2)};
  j["table_height"] = c.table_height;
  j["eval_modulus"] = c.eval_modulus;
  return j;
}

inline SamplerConfig sampler_config_from_json(const nlohmann::json& j) {
  SamplerConfig c;
  c.scenes = j.value("scenes", c.scenes);
  c.samples_per_scene = j.value("samples_per_scene", c.samples_per_scene);
  c.t_max = j.value("t_max", c.t_max);
  c.dt = j.value("dt", c.dt);
  c.min_instances = j.value("min_instances", c.min_instances);
  c.max_instances = j.value("max_instances", c.max_instances);
  if (j.contains("workspace")) {
    for (int i = 0; i < 3; ++i) {
      c.ws_min(i) = j.at("workspace").at("min").at(static_cast<std::size_t>(i)).get<double>();
      c.ws_max(i) = j.at("workspace").at("max").at(static_cast<std::size_t>(i)).get<double>();
    }
  }
  c.table_height = j.value("table_height", c.table_height);
  c.eval_modulus = j.value("eval_modulus", c.eval_modulus);
  if (c.scenes < 1 || c.samples_per_scene < 1) throw std::invalid_argument("sampler config: counts must be positive");
  if (c.t_max < 0.0 || c.dt <= 0.0) throw std::invalid_argument("sampler config: invalid timing");
  if (c.min_instances < 1 || c.max_instances < c.min_instances)
    throw std::invalid_argument("sampler config: invalid instance range");
  if (c.eval_modulus < 2) throw std::invalid_argument("sampler config: eval_modulus must be at least 2");
  return c;
}

// ---------------------------------------------------------------------------
// Samples
// ---------------------------------------------------------------------------

// Dataset targets follow the tabletop convention: grasp frames with a
// continuous symmetry about the local z axis.
inline SymmetrySpec dataset_symmetry() { return SymmetrySpec::continuous(Vector3d::UnitZ()); }

struct Sample {
  int scene = 0;
  Vector6d q = Vector6d::Zero();
  std::vector<Pose> targets;
  int selected = 0;
  double V = 0.0;
  Vector6d u = Vector6d::Zero();
};

inline bool is_eval_scene(int scene, int eval_modulus = 10) {
  return scene % eval_modulus == eval_modulus - 1;
}

struct Dataset {
  std::vector<Sample> samples;

  std::vector<std::size_t> train_indices(int eval_modulus = 10) const {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < samples.size(); ++i)
      if (!is_eval_scene(samples[i].scene, eval_modulus)) idx.push_back(i);
    return idx;
  }
  std::vector<std::size_t> eval_indices(int eval_modulus = 10) const {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < samples.size(); ++i)
      if (is_eval_scene(samples[i].scene, eval_modulus)) idx.push_back(i);
    return idx;
  }
};

// ---------------------------------------------------------------------------
// Labeling
// ---------------------------------------------------------------------------

// Exact-controller labels at q: evaluate every instance, commit to the lowest
// value, and record its (V, u).
inline void label_sample(const KinematicChain& chain, Sample& sample) {
  std::vector<double> values(sample.targets.size());
  std::vector<Vector6d> commands(sample.targets.size());
  for (std::size_t k = 0; k < sample.targets.size(); ++k) {
    TargetInstance t{sample.targets[k], dataset_symmetry()};
    const ControlOutput out = velocity_control(chain, sample.q, t);
    values[k] = out.clf_value;
    commands[k] = out.u;
  }
  sample.selected = static_cast<int>(select_target(values));
  sample.V = values[static_cast<std::size_t>(sample.selected)];
  sample.u = commands[static_cast<std::size_t>(sample.selected)];
}

// ---------------------------------------------------------------------------
// Generation
// ---------------------------------------------------------------------------

inline Dataset generate_dataset(const KinematicChain& chain, const SamplerConfig& cfg,
                                std::uint64_t seed) {
  const Rng master(seed);
  std::vector<std::vector<Sample>> per_scene(static_cast<std::size_t>(cfg.scenes));

  parallel_for(per_scene.size(), [&](std::size_t s) {
    Rng rng = master.substream("scene", s);
    const int span = cfg.max_instances - cfg.min_instances + 1;
    const int n_inst = cfg.min_instances + static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(span)));
    const Scene scene = sample_scene(rng, n_inst, cfg.ws_min, cfg.ws_max, cfg.table_height);

    for (int k = 0; k < cfg.samples_per_scene; ++k) {
      const auto pose = sample_start_pose(rng, cfg.ws_min, cfg.ws_max, cfg.table_height);
      if (!pose) continue;
      const auto q0 = solve_start_configuration(chain, *pose, rng);
      if (!q0) continue;

      const std::size_t chase = rng.uniform_int(scene.targets.size());
      const double duration = rng.uniform(0.0, cfg.t_max);
      const int steps = static_cast<int>(duration / cfg.dt);

      Vector6d q = *q0;
      const TargetInstance& chased = scene.targets[chase];
      for (int step = 0; step < steps; ++step) {
        const ControlOutput out = velocity_control(chain, q, chased);
        if (out.clf_value < 5e-5) break;
        q += cfg.dt * out.u;
      }

      Sample sample;
      sample.scene = static_cast<int>(s);
      sample.q = q;
      sample.targets.reserve(scene.targets.size());
      for (const auto& t : scene.targets) sample.targets.push_back(t.goal);
      label_sample(chain, sample);
      per_scene[s].push_back(std::move(sample));
    }
  });

  Dataset out;
  for (auto& bucket : per_scene)
    for (auto& sample : bucket) out.samples.push_back(std::move(sample));
  return out;
}

// ---------------------------------------------------------------------------
// JSONL serialization
// ---------------------------------------------------------------------------

inline nlohmann::json sample_to_json(const Sample& s) {
  nlohmann::json j;
  j["scene"] = s.scene;
  j["q"] = std::vector<double>(s.q.data(), s.q.data() + 6);
  j["targets"] = nlohmann::json::array();
  for (const auto& t : s.targets) {
    const auto arr = pose_to_array(t);
    j["targets"].push_back(std::vector<double>(arr.begin(), arr.end()));
  }
  j["selected"] = s.selected;
  j["V"] = s.V;
  j["u"] = std::vector<double>(s.u.data(), s.u.data() + 6);
  return j;
}

inline Sample sample_from_json(const nlohmann::json& j) {
  Sample s;
  s.scene = j.at("scene").get<int>();
  for (int i = 0; i < 6; ++i) s.q(i) = j.at("q").at(static_cast<std::size_t>(i)).get<double>();
  for (const auto& jt : j.at("targets")) {
    std::array<double, 12> arr{};
    if (jt.size() != 12) throw std::invalid_argument("sample: target pose needs 12 numbers");
    for (std::size_t i = 0; i < 12; ++i) arr[i] = jt.at(i).get<double>();
    s.targets.push_back(pose_from_array(arr));
  }
  s.selected = j.at("selected").get<int>();
  if (s.selected < 0 || s.selected >= static_cast<int>(s.targets.size()))
    throw std::invalid_argument("sample: selected index out of range");
  s.V = j.at("V").get<double>();
  for (int i = 0; i < 6; ++i) s.u(i) = j.at("u").at(static_cast<std::size_t>(i)).get<double>();
  return s;
}

inline std::string dataset_to_jsonl(const Dataset& d) {
  std::string out;
  for (const auto& s : d.samples) {
    out += sample_to_json(s).dump();
    out += '\n';
  }
  return out;
}

inline Dataset dataset_from_jsonl(const std::string& text) {
  Dataset d;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error&) {
      throw std::invalid_argument("dataset: malformed JSON on line " + std::to_string(lineno));
    }
    d.samples.push_back(sample_from_json(j));
  }
  return d;
}

inline Dataset load_dataset(const std::filesystem::path& path) {
  return dataset_from_jsonl(read_text_file(path));
}

// ---------------------------------------------------------------------------
// On-disk layout: <dir>/train.jsonl + <dir>/eval.jsonl + <dir>/manifest.json.
// The split is by scene identifier, so reloading preserves membership exactly.
// ---------------------------------------------------------------------------

inline nlohmann::json dataset_manifest(const Dataset& d, const SamplerConfig& cfg, std::uint64_t seed) {
  nlohmann::json j;
  j["counts"]["samples"] = d.samples.size();
  j["counts"]["train"] = d.train_indices(cfg.eval_modulus).size();
  j["counts"]["eval"] = d.eval_indices(cfg.eval_modulus).size();
  j["counts"]["scenes"] = cfg.scenes;
  j["eval_modulus"] = cfg.eval_modulus;
  j["seed"] = seed;
  j["config_hash"] = RunManifest::fnv1a_hex(sampler_config_to_json(cfg).dump());
  return j;
}

inline void write_dataset(const std::filesystem::path& dir, const Dataset& d, const SamplerConfig& cfg,
                          std::uint64_t seed) {
  std::filesystem::create_directories(dir);
  Dataset train;
  Dataset eval;
  for (const Sample& s : d.samples)
    (is_eval_scene(s.scene, cfg.eval_modulus) ? eval : train).samples.push_back(s);
  write_text_file(dir / "train.jsonl", dataset_to_jsonl(train));
  write_text_file(dir / "eval.jsonl", dataset_to_jsonl(eval));
  write_text_file(dir / "manifest.json", json_dump(dataset_manifest(d, cfg, seed)));
}

// Loads a directory written by write_dataset. Sample order is train rows then
// eval rows; the train/eval membership recomputed from scene identifiers is
// unaffected by that ordering.
inline Dataset load_dataset_dir(const std::filesystem::path& dir) {
  Dataset d = load_dataset(dir / "train.jsonl");
  const Dataset eval = load_dataset(dir / "eval.jsonl");
  d.samples.insert(d.samples.end(), eval.samples.begin(), eval.samples.end());
  return d;
}

}  // namespace lyap_reach
