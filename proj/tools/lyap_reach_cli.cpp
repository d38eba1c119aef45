// lyap-reach: single entry point for the reaching stack.
//
// Subcommands
//   simulate      closed-loop reaching batches with the exact or a learned controller
//   gen-data      labeled dataset generation (train/eval JSONL + manifest)
//   train         regressor training with optional differential constraint
//   eval          metric row for a checkpoint on a dataset's eval split
//   ablate        paired constraint-on/constraint-off study across seeds
//   export-plots  plot-ready V(t) and ||u||(t) series from trajectory logs
//
// Exit codes: 0 success, 2 usage error, 3 data error, 4 numerical abort.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include <lyap_reach/datagen.hpp>
#include <lyap_reach/learning.hpp>
#include <lyap_reach/simulator.hpp>

namespace {

using namespace lyap_reach;
namespace fs = std::filesystem;

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitNumeric = 4;

// Argument-level problems discovered after CLI11 parsing (composite flags,
// cross-flag constraints). Content-level problems stay std::invalid_argument.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// ---------------------------------------------------------------------------
// Controller selection
// ---------------------------------------------------------------------------

struct ControllerSpec {
  bool exact = true;
  fs::path ckpt;
};

ControllerSpec parse_controller(const std::string& s) {
  if (s == "exact") return {};
  if (s.rfind("ckpt:", 0) == 0) {
    ControllerSpec spec;
    spec.exact = false;
    spec.ckpt = s.substr(5);
    if (spec.ckpt.empty() || !fs::exists(spec.ckpt))
      throw UsageError("--controller checkpoint not found: '" + s.substr(5) + "'");
    return spec;
  }
  throw UsageError("--controller expects 'exact' or 'ckpt:<path>', got '" + s + "'");
}

std::unique_ptr<ControlProvider> make_provider(const ControllerSpec& spec, const KinematicChain& chain,
                                               double gain) {
  if (spec.exact) return std::make_unique<ExactProvider>(chain, gain);
  return std::make_unique<LearnedProvider>(load_checkpoint(spec.ckpt));
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

struct SimulateArgs {
  std::string chain;
  std::string controller = "exact";
  std::string scene;  // optional fixed-scene file; replaces the generator spec
  std::vector<int> instances;
  int scenes = 10;
  int trajectories_per_scene = 10;
  std::uint64_t seed = 0;
  double eta = 0.0;
  double gain = 1.0;
  double dt = 0.02;
  int max_steps = 1500;
  double convergence_V = -1.0;  // <= 0 picks a default per controller kind
  bool phantoms = false;
  FalsePositiveInjector phantom;
  int save_trajectories = 3;
  std::string out = "runs/simulate";
};

BatchSummary summarize_results(const std::vector<RolloutResult>& results, const std::vector<char>& valid) {
  BatchSummary s;
  s.attempted = static_cast<int>(results.size());
  for (std::size_t i = 0; i < results.size(); ++i) {
    if (!valid[i]) continue;
    const RolloutResult& r = results[i];
    ++s.rollouts;
    s.mean_switches += r.selection_switches;
    s.mean_steps += static_cast<double>(r.steps.size());
    switch (r.outcome) {
      case Outcome::success: ++s.successes; break;
      case Outcome::failed_grasp: ++s.failed_grasps; break;
      case Outcome::timeout: ++s.timeouts; break;
      case Outcome::singular_abort: ++s.singular_aborts; break;
    }
  }
  if (s.rollouts > 0) {
    s.mean_switches /= s.rollouts;
    s.mean_steps /= s.rollouts;
  }
  return s;
}

// Rolls a fixed scene from freshly sampled start states; the per-index
// substreams mirror the batch runner so results are scheduling-independent.
BatchSummary run_fixed_scene(const KinematicChain& chain, const ControlProvider& provider, const Scene& scene,
                             int trajectories, std::uint64_t seed, const RolloutConfig& rollout_cfg,
                             const std::optional<FalsePositiveInjector>& injector,
                             std::vector<RolloutResult>* results_out) {
  const Rng master(seed);
  std::vector<RolloutResult> results(static_cast<std::size_t>(trajectories));
  std::vector<char> valid(static_cast<std::size_t>(trajectories), 0);
  parallel_for(results.size(), [&](std::size_t idx) {
    Rng start_rng = master.substream("start", idx);
    const auto pose = sample_start_pose(start_rng, scene.ws_min, scene.ws_max);
    if (!pose) return;
    const auto q0 = solve_start_configuration(chain, *pose, start_rng);
    if (!q0) return;
    results[idx] = rollout(chain, *q0, scene, provider, rollout_cfg, master.substream("rollout", idx),
                           injector ? &*injector : nullptr);
    valid[idx] = 1;
  });
  const BatchSummary s = summarize_results(results, valid);
  if (results_out) *results_out = std::move(results);
  return s;
}

// Saves the first `limit` rolled-out trajectories; when the episode list is
// available, the matching scene goes next to each log so a replay audit can
// re-score every step.
int save_trajectories(const fs::path& out_dir, const std::string& prefix,
                      const std::vector<RolloutResult>& results, const std::vector<Episode>* episodes,
                      int limit, std::vector<std::string>& outputs) {
  int saved = 0;
  for (std::size_t i = 0; i < results.size() && saved < limit; ++i) {
    if (results[i].steps.empty()) continue;
    const std::string stem = prefix + "_e" + std::to_string(i);
    write_text_file(out_dir / (stem + ".csv"), trajectory_to_csv(results[i].steps));
    outputs.push_back(stem + ".csv");
    if (episodes) {
      write_text_file(out_dir / (stem + "_scene.json"), json_dump(scene_to_json((*episodes)[i].scene)));
      outputs.push_back(stem + "_scene.json");
    }
    ++saved;
  }
  return saved;
}

void print_summary_line(const std::string& label, const BatchSummary& s) {
  std::printf("%-12s rollouts=%-4d success_rate=%.3f successes=%d failed_grasps=%d timeouts=%d "
              "singular_aborts=%d mean_switches=%.3f mean_steps=%.1f\n",
              label.c_str(), s.rollouts, s.rollouts > 0 ? static_cast<double>(s.successes) / s.rollouts : 0.0,
              s.successes, s.failed_grasps, s.timeouts, s.singular_aborts, s.mean_switches, s.mean_steps);
}

int cmd_simulate(const SimulateArgs& a) {
  const KinematicChain chain = load_chain(a.chain);
  const ControllerSpec spec = parse_controller(a.controller);
  const auto provider = make_provider(spec, chain, a.gain);

  RolloutConfig rollout_cfg;
  rollout_cfg.dt = a.dt;
  rollout_cfg.max_steps = a.max_steps;
  rollout_cfg.gain = a.gain;
  rollout_cfg.eta = a.eta;
  // A learned controller's command decays near the goal without reaching the
  // exact controller's terminal accuracy, so its grasp trigger defaults to the
  // success tolerance instead.
  rollout_cfg.convergence_V =
      a.convergence_V > 0.0 ? a.convergence_V
                            : (spec.exact ? rollout_cfg.convergence_V : rollout_cfg.success_V_tol);

  std::optional<FalsePositiveInjector> injector;
  if (a.phantoms) injector = a.phantom;

  const fs::path out_dir(a.out);
  fs::create_directories(out_dir);
  std::vector<std::string> outputs;
  nlohmann::json summary;
  summary["controller"] = a.controller;
  summary["per_instance"] = nlohmann::json::object();

  if (!a.scene.empty()) {
    const Scene scene = scene_from_json(json_load(a.scene));
    if (scene.targets.empty()) throw std::invalid_argument("scene: no targets");
    std::vector<RolloutResult> results;
    const BatchSummary s = run_fixed_scene(chain, *provider, scene, a.trajectories_per_scene, a.seed,
                                           rollout_cfg, injector, &results);
    const std::string key = std::to_string(scene.targets.size());
    summary["scene"] = a.scene;
    summary["per_instance"][key] = s.to_json();
    save_trajectories(out_dir, "traj_scene", results, nullptr, a.save_trajectories, outputs);
    print_summary_line("scene(" + key + ")", s);
  } else {
    const std::vector<int> counts = a.instances.empty() ? std::vector<int>{1, 2, 3, 4} : a.instances;
    for (const int k : counts) {
      BatchConfig bc;
      bc.scenes = a.scenes;
      bc.trajectories_per_scene = a.trajectories_per_scene;
      bc.instances = k;
      bc.seed = a.seed;
      bc.rollout = rollout_cfg;
      bc.injector = injector;
      std::vector<RolloutResult> results;
      std::vector<Episode> episodes;
      const BatchSummary s = run_batch(chain, *provider, bc, &results, &episodes);
      summary["per_instance"][std::to_string(k)] = s.to_json();
      save_trajectories(out_dir, "traj_i" + std::to_string(k), results, &episodes, a.save_trajectories,
                        outputs);
      print_summary_line("instances=" + std::to_string(k), s);
    }
  }

  write_text_file(out_dir / "summary.json", json_dump(summary));
  outputs.push_back("summary.json");

  RunManifest man;
  man.subcommand = "simulate";
  man.config = {{"chain", a.chain},
                {"controller", a.controller},
                {"scene", a.scene},
                {"instances", a.instances},
                {"scenes", a.scenes},
                {"trajectories_per_scene", a.trajectories_per_scene},
                {"eta", a.eta},
                {"gain", a.gain},
                {"dt", a.dt},
                {"max_steps", a.max_steps},
                {"convergence_V", rollout_cfg.convergence_V},
                {"phantoms", a.phantoms},
                {"phantom",
                 {{"spawn_probability", a.phantom.spawn_probability},
                  {"lifetime", a.phantom.lifetime},
                  {"clf_bias", a.phantom.clf_bias}}},
                {"save_trajectories", a.save_trajectories}};
  man.seed = a.seed;
  man.write(out_dir, outputs);
  std::printf("wrote %s\n", (out_dir / "summary.json").string().c_str());
  return kExitOk;
}

// ---------------------------------------------------------------------------
// gen-data
// ---------------------------------------------------------------------------

struct GenDataArgs {
  std::string chain;
  std::string config;  // optional JSON config; flags below override it
  std::string out;
  std::uint64_t seed = 0;
  // Sentinels mark "flag not given" so an unset flag never stomps the file.
  int scenes = -1;
  int samples_per_scene = -1;
  int min_instances = -1;
  int max_instances = -1;
  int eval_modulus = -1;
  double t_max = -1.0;
  double dt = -1.0;
  double table_height = std::numeric_limits<double>::quiet_NaN();
};

int cmd_gen_data(const GenDataArgs& a) {
  const KinematicChain chain = load_chain(a.chain);
  SamplerConfig cfg;
  if (!a.config.empty()) cfg = sampler_config_from_json(json_load(a.config));
  if (a.scenes >= 0) cfg.scenes = a.scenes;
  if (a.samples_per_scene >= 0) cfg.samples_per_scene = a.samples_per_scene;
  if (a.min_instances >= 0) cfg.min_instances = a.min_instances;
  if (a.max_instances >= 0) cfg.max_instances = a.max_instances;
  if (a.eval_modulus >= 0) cfg.eval_modulus = a.eval_modulus;
  if (a.t_max >= 0.0) cfg.t_max = a.t_max;
  if (a.dt >= 0.0) cfg.dt = a.dt;
  if (!std::isnan(a.table_height)) cfg.table_height = a.table_height;
  // Round-trip through the parser to validate the merged config.
  cfg = sampler_config_from_json(sampler_config_to_json(cfg));

  const std::string started = iso8601_now();
  const Dataset d = generate_dataset(chain, cfg, a.seed);
  const fs::path out_dir(a.out);
  write_dataset(out_dir, d, cfg, a.seed);

  // Fold run provenance into the dataset manifest so the directory keeps a
  // single manifest file.
  nlohmann::json man = dataset_manifest(d, cfg, a.seed);
  man["subcommand"] = "gen-data";
  man["config"] = sampler_config_to_json(cfg);
  man["started_at"] = started;
  man["finished_at"] = iso8601_now();
  man["outputs"] = {"eval.jsonl", "train.jsonl"};
  write_text_file(out_dir / "manifest.json", json_dump(man));

  std::printf("wrote %zu samples (%zu train / %zu eval) to %s\n", d.samples.size(),
              d.train_indices(cfg.eval_modulus).size(), d.eval_indices(cfg.eval_modulus).size(),
              out_dir.string().c_str());
  return kExitOk;
}

// ---------------------------------------------------------------------------
// train / eval
// ---------------------------------------------------------------------------

// The dataset directory's manifest records the scene modulus used for the
// train/eval split; adopt it so downstream splits always agree with the files.
int dataset_eval_modulus(const fs::path& data_dir, int fallback) {
  const fs::path manifest = data_dir / "manifest.json";
  if (!fs::exists(manifest)) return fallback;
  const nlohmann::json j = json_load(manifest);
  return j.contains("eval_modulus") ? j.at("eval_modulus").get<int>() : fallback;
}

struct TrainArgs {
  std::string chain;
  std::string data;
  std::string out;
  std::string diff = "on";
  std::uint64_t seed = 0;
  int epochs = 15;
  int batch_size = 64;
  double lr = 1e-3;
};

void print_metric_header() { std::printf("mae_V,mae_u,mre_V,mre_u,diff_err\n"); }

void print_metric_row(const EvalMetrics& m) {
  std::printf("%s,%s,%s,%s,%s\n", format_double(m.mae_V).c_str(), format_double(m.mae_u).c_str(),
              format_double(m.mre_V).c_str(), format_double(m.mre_u).c_str(),
              format_double(m.diff_err).c_str());
}

int cmd_train(const TrainArgs& a) {
  const KinematicChain chain = load_chain(a.chain);
  const Dataset dataset = load_dataset_dir(a.data);

  TrainConfig cfg;
  cfg.use_diff = a.diff == "on";
  cfg.seed = a.seed;
  cfg.epochs = a.epochs;
  cfg.batch_size = a.batch_size;
  cfg.lr = a.lr;
  cfg.eval_modulus = dataset_eval_modulus(a.data, cfg.eval_modulus);

  const TrainResult result = train(chain, dataset, cfg);
  if (result.diverged) {
    std::fprintf(stderr, "error: training diverged at epoch %d\n", result.diverged_epoch);
    return kExitNumeric;
  }

  const fs::path ckpt(a.out);
  const fs::path parent = ckpt.has_parent_path() ? ckpt.parent_path() : fs::path(".");
  fs::create_directories(parent);
  const std::string config_hash = RunManifest::fnv1a_hex(train_config_to_json(cfg).dump());
  save_checkpoint(ckpt, result.model, config_hash);

  fs::path log_path = ckpt;
  log_path.replace_extension();
  log_path += "_log.csv";
  write_text_file(log_path, training_log_to_csv(result.log));

  RunManifest man;
  man.subcommand = "train";
  man.config = train_config_to_json(cfg);
  man.config["data"] = a.data;
  man.seed = a.seed;
  man.write(parent, {ckpt.filename().string(), log_path.filename().string()});

  const EpochLog& last = result.log.back();
  std::printf("trained %d epochs: train_loss=%s eval_loss=%s\n", a.epochs,
              format_double(last.train_loss).c_str(), format_double(last.eval_loss).c_str());
  print_metric_header();
  print_metric_row(last.metrics);
  std::printf("wrote %s\n", ckpt.string().c_str());
  return kExitOk;
}

struct EvalArgs {
  std::string chain;
  std::string ckpt;
  std::string data;
};

int cmd_eval(const EvalArgs& a) {
  const KinematicChain chain = load_chain(a.chain);
  const Regressor reg = load_checkpoint(a.ckpt);
  const Dataset dataset = load_dataset_dir(a.data);
  const int modulus = dataset_eval_modulus(a.data, 10);
  const auto eval_idx = dataset.eval_indices(modulus);
  if (eval_idx.empty()) throw std::invalid_argument("eval: dataset has no eval split");
  const Tensors t = build_tensors(chain, dataset, eval_idx);
  const EvalMetrics m = evaluate_metrics(reg, t);
  print_metric_header();
  print_metric_row(m);
  return kExitOk;
}

// ---------------------------------------------------------------------------
// ablate
// ---------------------------------------------------------------------------

struct AblateArgs {
  std::string chain;
  std::string data;
  std::string out = "runs/ablate";
  int seeds = 3;
  int epochs = 15;
  std::uint64_t seed = 0;
  int sim_scenes = 4;
  int sim_trajectories = 10;
  std::vector<int> sim_instances = {1, 2, 3};
};

struct ArmResult {
  bool diverged = false;
  int diverged_epoch = -1;
  EvalMetrics metrics;
  int sim_successes = 0;
  int sim_rollouts = 0;

  double success_rate() const {
    return sim_rollouts > 0 ? static_cast<double>(sim_successes) / sim_rollouts : 0.0;
  }
  nlohmann::json to_json() const {
    nlohmann::json j;
    j["diverged"] = diverged;
    if (diverged) {
      j["diverged_epoch"] = diverged_epoch;
      return j;
    }
    j["mae_V"] = metrics.mae_V;
    j["mae_u"] = metrics.mae_u;
    j["mre_V"] = metrics.mre_V;
    j["mre_u"] = metrics.mre_u;
    j["diff_err"] = metrics.diff_err;
    j["sim_successes"] = sim_successes;
    j["sim_rollouts"] = sim_rollouts;
    j["sim_success_rate"] = success_rate();
    return j;
  }
};

void print_ablate_header() {
  std::printf("%-8s %-8s %-10s %-10s %-10s %-10s %-10s %s\n", "seed", "arm", "mae_V", "mre_V", "mae_u",
              "mre_u", "diff_err", "success");
}

void print_ablate_row(const std::string& seed_label, const std::string& arm, const ArmResult& r) {
  if (r.diverged) {
    std::printf("%-8s %-8s diverged at epoch %d\n", seed_label.c_str(), arm.c_str(), r.diverged_epoch);
    return;
  }
  std::printf("%-8s %-8s %-10.5f %-10.5f %-10.5f %-10.5f %-10.5f %.3f\n", seed_label.c_str(), arm.c_str(),
              r.metrics.mae_V, r.metrics.mre_V, r.metrics.mae_u, r.metrics.mre_u, r.metrics.diff_err,
              r.success_rate());
}

ArmResult run_arm(const KinematicChain& chain, const Dataset& dataset, const Tensors& t_eval,
                  const AblateArgs& a, std::uint64_t seed, bool use_diff) {
  TrainConfig cfg;
  cfg.use_diff = use_diff;
  cfg.seed = seed;
  cfg.epochs = a.epochs;
  cfg.eval_modulus = dataset_eval_modulus(a.data, cfg.eval_modulus);

  ArmResult arm;
  const TrainResult r = train(chain, dataset, cfg);
  if (r.diverged) {
    arm.diverged = true;
    arm.diverged_epoch = r.diverged_epoch;
    return arm;
  }
  arm.metrics = evaluate_metrics(r.model, t_eval);

  const LearnedProvider provider(r.model);
  for (const int k : a.sim_instances) {
    BatchConfig bc;
    bc.scenes = a.sim_scenes;
    bc.trajectories_per_scene = a.sim_trajectories;
    bc.instances = k;
    bc.seed = seed;  // both arms of a seed share episodes exactly
    bc.rollout.convergence_V = bc.rollout.success_V_tol;
    const BatchSummary s = run_batch(chain, provider, bc);
    arm.sim_successes += s.successes;
    arm.sim_rollouts += s.rollouts;
  }
  return arm;
}

int cmd_ablate(const AblateArgs& a) {
  const KinematicChain chain = load_chain(a.chain);
  const Dataset dataset = load_dataset_dir(a.data);
  const int modulus = dataset_eval_modulus(a.data, 10);
  const auto eval_idx = dataset.eval_indices(modulus);
  if (eval_idx.empty()) throw std::invalid_argument("ablate: dataset has no eval split");
  const Tensors t_eval = build_tensors(chain, dataset, eval_idx);

  nlohmann::json report;
  report["rows"] = nlohmann::json::array();
  std::vector<double> med_mre_u[2], med_diff_err[2], med_mae_V[2], med_mae_u[2], med_mre_V[2], med_succ[2];
  int pooled_succ[2] = {0, 0};
  int pooled_total[2] = {0, 0};
  int usable_pairs = 0;

  print_ablate_header();
  for (int s = 0; s < a.seeds; ++s) {
    const std::uint64_t seed = a.seed + static_cast<std::uint64_t>(s);
    const ArmResult with = run_arm(chain, dataset, t_eval, a, seed, true);
    const ArmResult without = run_arm(chain, dataset, t_eval, a, seed, false);

    nlohmann::json row;
    row["seed"] = seed;
    row["with"] = with.to_json();
    row["without"] = without.to_json();
    report["rows"].push_back(row);

    const std::string label = std::to_string(seed);
    print_ablate_row(label, "with", with);
    print_ablate_row(label, "without", without);

    if (with.diverged || without.diverged) continue;
    ++usable_pairs;
    const ArmResult* arms[2] = {&with, &without};
    for (int i = 0; i < 2; ++i) {
      med_mae_V[i].push_back(arms[i]->metrics.mae_V);
      med_mae_u[i].push_back(arms[i]->metrics.mae_u);
      med_mre_V[i].push_back(arms[i]->metrics.mre_V);
      med_mre_u[i].push_back(arms[i]->metrics.mre_u);
      med_diff_err[i].push_back(arms[i]->metrics.diff_err);
      med_succ[i].push_back(arms[i]->success_rate());
      pooled_succ[i] += arms[i]->sim_successes;
      pooled_total[i] += arms[i]->sim_rollouts;
    }
  }

  if (usable_pairs == 0) {
    std::fprintf(stderr, "error: every seed diverged; no comparison possible\n");
    return kExitNumeric;
  }

  const char* arm_names[2] = {"with", "without"};
  for (int i = 0; i < 2; ++i) {
    nlohmann::json m;
    m["mae_V"] = median(med_mae_V[i]);
    m["mae_u"] = median(med_mae_u[i]);
    m["mre_V"] = median(med_mre_V[i]);
    m["mre_u"] = median(med_mre_u[i]);
    m["diff_err"] = median(med_diff_err[i]);
    m["sim_success_rate"] = median(med_succ[i]);
    report["median"][arm_names[i]] = m;
    report["pooled"][arm_names[i]] = {
        {"sim_successes", pooled_succ[i]},
        {"sim_rollouts", pooled_total[i]},
        {"sim_success_rate", pooled_total[i] > 0 ? static_cast<double>(pooled_succ[i]) / pooled_total[i] : 0.0}};
  }
  report["usable_pairs"] = usable_pairs;

  if (a.seeds > 1) {
    for (int i = 0; i < 2; ++i) {
      ArmResult m;
      m.metrics.mae_V = median(med_mae_V[i]);
      m.metrics.mae_u = median(med_mae_u[i]);
      m.metrics.mre_V = median(med_mre_V[i]);
      m.metrics.mre_u = median(med_mre_u[i]);
      m.metrics.diff_err = median(med_diff_err[i]);
      m.sim_successes = pooled_succ[i];
      m.sim_rollouts = pooled_total[i];
      print_ablate_row("median", arm_names[i], m);
    }
  }

  const fs::path out_dir(a.out);
  fs::create_directories(out_dir);
  write_text_file(out_dir / "report.json", json_dump(report));

  RunManifest man;
  man.subcommand = "ablate";
  man.config = {{"chain", a.chain},     {"data", a.data},
                {"seeds", a.seeds},     {"epochs", a.epochs},
                {"sim_scenes", a.sim_scenes}, {"sim_trajectories", a.sim_trajectories},
                {"sim_instances", a.sim_instances}};
  man.seed = a.seed;
  man.write(out_dir, {"report.json"});
  std::printf("wrote %s\n", (out_dir / "report.json").string().c_str());
  return kExitOk;
}

// ---------------------------------------------------------------------------
// export-plots
// ---------------------------------------------------------------------------

struct ExportArgs {
  std::string runs;
  std::string out;  // default: <runs>/plots
};

int cmd_export_plots(const ExportArgs& a) {
  const fs::path runs(a.runs);
  const fs::path out_dir = a.out.empty() ? runs / "plots" : fs::path(a.out);

  std::vector<fs::path> logs;
  for (const auto& entry : fs::recursive_directory_iterator(runs)) {
    if (!entry.is_regular_file() || entry.path().extension() != ".csv") continue;
    std::ifstream f(entry.path());
    std::string first;
    std::getline(f, first);
    if (first == kTrajectoryHeader) logs.push_back(entry.path());
  }
  std::sort(logs.begin(), logs.end());
  if (logs.empty()) {
    std::fprintf(stderr, "warning: no trajectory logs found under %s\n", runs.string().c_str());
    return kExitOk;
  }

  fs::create_directories(out_dir);
  std::vector<std::string> outputs;
  std::string plot_v;
  std::string plot_u;
  for (const fs::path& p : logs) {
    const std::vector<TrajectoryStep> steps = trajectory_from_csv(read_text_file(p));
    std::string stem = fs::relative(p, runs).replace_extension().string();
    std::replace(stem.begin(), stem.end(), '/', '_');

    std::string v_csv = "t,V\n";
    std::string u_csv = "t,u_norm\n";
    int dips = 0;
    for (std::size_t i = 0; i < steps.size(); ++i) {
      v_csv += format_double(steps[i].t) + "," + format_double(steps[i].V) + "\n";
      u_csv += format_double(steps[i].t) + "," + format_double(steps[i].u_bar.norm()) + "\n";
      if (i > 0 && steps[i].target_idx == steps[i - 1].target_idx && steps[i].V > steps[i - 1].V) ++dips;
    }
    if (dips > 0)
      std::fprintf(stderr, "warning: %s: V increases on %d step(s) with an unchanged target\n",
                   p.string().c_str(), dips);

    const std::string v_name = stem + "_V.csv";
    const std::string u_name = stem + "_u_norm.csv";
    write_text_file(out_dir / v_name, v_csv);
    write_text_file(out_dir / u_name, u_csv);
    outputs.push_back(v_name);
    outputs.push_back(u_name);
    if (!plot_v.empty()) plot_v += ", ";
    if (!plot_u.empty()) plot_u += ", ";
    plot_v += "\"" + v_name + "\" using 1:2 with lines title \"" + stem + "\"";
    plot_u += "\"" + u_name + "\" using 1:2 with lines title \"" + stem + "\"";
  }

  std::string script;
  script += "set terminal pngcairo size 900,600\n";
  script += "set datafile separator \",\"\n";
  script += "set key outside\n";
  script += "set xlabel \"t [s]\"\n";
  script += "set output \"V_vs_t.png\"\n";
  script += "set ylabel \"V\"\n";
  script += "plot " + plot_v + "\n";
  script += "set output \"u_norm_vs_t.png\"\n";
  script += "set ylabel \"||u||\"\n";
  script += "plot " + plot_u + "\n";
  write_text_file(out_dir / "plots.gp", script);
  outputs.push_back("plots.gp");

  RunManifest man;
  man.subcommand = "export-plots";
  man.config = {{"runs", a.runs}};
  man.write(out_dir, outputs);
  std::printf("wrote %zu series for %zu trajectories to %s\n", outputs.size() - 1, logs.size(),
              out_dir.string().c_str());
  return kExitOk;
}

}  // namespace

// ---------------------------------------------------------------------------
// Argument wiring
// ---------------------------------------------------------------------------

int main(int argc, char** argv) {
  CLI::App app{"lyap-reach: symmetry-aware Lyapunov reaching, dataset generation, and training"};
  app.require_subcommand(1);

  SimulateArgs sim;
  CLI::App* c_sim = app.add_subcommand("simulate", "Run closed-loop reaching batches");
  c_sim->add_option("--chain", sim.chain, "Kinematic chain JSON")->required()->check(CLI::ExistingFile);
  c_sim->add_option("--controller", sim.controller, "'exact' or 'ckpt:<path>'")->capture_default_str();
  c_sim->add_option("--scene", sim.scene, "Fixed scene JSON (replaces the generator spec)")
      ->check(CLI::ExistingFile);
  c_sim->add_option("--instances", sim.instances, "Targets per generated scene (repeatable; default 1 2 3 4)")
      ->check(CLI::Range(1, 4));
  c_sim->add_option("--scenes", sim.scenes, "Scenes per instance count")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  c_sim->add_option("--trajectories-per-scene", sim.trajectories_per_scene, "Rollouts per scene")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  c_sim->add_option("--seed", sim.seed, "Master seed")->capture_default_str();
  c_sim->add_option("--eta", sim.eta, "Command momentum coefficient")->capture_default_str();
  c_sim->add_option("--gain", sim.gain, "Exact-controller gain")->capture_default_str();
  c_sim->add_option("--dt", sim.dt, "Integration step [s]")->check(CLI::PositiveNumber)->capture_default_str();
  c_sim->add_option("--max-steps", sim.max_steps, "Step budget per rollout")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  c_sim->add_option("--convergence-V", sim.convergence_V,
                    "Grasp-trigger threshold on the committed target's true value (default per controller)");
  c_sim->add_flag("--phantoms", sim.phantoms, "Inject false-positive candidates");
  c_sim->add_option("--phantom-prob", sim.phantom.spawn_probability, "Phantom spawn probability per step")
      ->capture_default_str();
  c_sim->add_option("--phantom-lifetime", sim.phantom.lifetime, "Phantom lifetime [steps]")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  c_sim->add_option("--phantom-bias", sim.phantom.clf_bias, "Bias added to phantom value estimates")
      ->capture_default_str();
  c_sim->add_option("--save-trajectories", sim.save_trajectories, "Trajectory logs kept per batch")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  c_sim->add_option("--out", sim.out, "Output directory")->capture_default_str();

  GenDataArgs gen;
  CLI::App* c_gen = app.add_subcommand("gen-data", "Generate a labeled reaching dataset");
  c_gen->add_option("--chain", gen.chain, "Kinematic chain JSON")->required()->check(CLI::ExistingFile);
  c_gen->add_option("--config", gen.config, "Sampler config JSON (flags override file values)")
      ->check(CLI::ExistingFile);
  c_gen->add_option("--out", gen.out, "Output directory")->required();
  c_gen->add_option("--seed", gen.seed, "Master seed")->capture_default_str();
  c_gen->add_option("--scenes", gen.scenes, "Scene count")->check(CLI::PositiveNumber);
  c_gen->add_option("--samples-per-scene", gen.samples_per_scene, "Average samples per scene")
      ->check(CLI::PositiveNumber);
  c_gen->add_option("--min-instances", gen.min_instances, "Minimum targets per scene")
      ->check(CLI::PositiveNumber);
  c_gen->add_option("--max-instances", gen.max_instances, "Maximum targets per scene")
      ->check(CLI::PositiveNumber);
  c_gen->add_option("--eval-modulus", gen.eval_modulus, "Every k-th scene goes to the eval split")
      ->check(CLI::Range(2, 1000000));
  c_gen->add_option("--t-max", gen.t_max, "Maximum rollout duration per sample [s]")
      ->check(CLI::NonNegativeNumber);
  c_gen->add_option("--dt", gen.dt, "Integration step [s]")->check(CLI::PositiveNumber);
  c_gen->add_option("--table-height", gen.table_height, "Tabletop height [m]");

  TrainArgs tr;
  CLI::App* c_train = app.add_subcommand("train", "Train the (V, u) regressor");
  c_train->add_option("--chain", tr.chain, "Kinematic chain JSON")->required()->check(CLI::ExistingFile);
  c_train->add_option("--data", tr.data, "Dataset directory from gen-data")
      ->required()
      ->check(CLI::ExistingDirectory);
  c_train->add_option("--out", tr.out, "Checkpoint path (JSON)")->required();
  c_train->add_option("--diff", tr.diff, "Differential constraint: on|off")
      ->check(CLI::IsMember({"on", "off"}))
      ->capture_default_str();
  c_train->add_option("--seed", tr.seed, "Master seed")->capture_default_str();
  c_train->add_option("--epochs", tr.epochs, "Training epochs")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  c_train->add_option("--batch-size", tr.batch_size, "Minibatch size")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  c_train->add_option("--lr", tr.lr, "Adam learning rate")->check(CLI::PositiveNumber)->capture_default_str();

  EvalArgs ev;
  CLI::App* c_eval = app.add_subcommand("eval", "Print metrics for a checkpoint on a dataset's eval split");
  c_eval->add_option("--chain", ev.chain, "Kinematic chain JSON")->required()->check(CLI::ExistingFile);
  c_eval->add_option("--ckpt", ev.ckpt, "Checkpoint JSON")->required()->check(CLI::ExistingFile);
  c_eval->add_option("--data", ev.data, "Dataset directory from gen-data")
      ->required()
      ->check(CLI::ExistingDirectory);

  AblateArgs ab;
  CLI::App* c_ablate = app.add_subcommand("ablate", "Paired constraint-on/off training and evaluation");
  c_ablate->add_option("--chain", ab.chain, "Kinematic chain JSON")->required()->check(CLI::ExistingFile);
  c_ablate->add_option("--data", ab.data, "Dataset directory from gen-data")
      ->required()
      ->check(CLI::ExistingDirectory);
  c_ablate->add_option("--out", ab.out, "Output directory")->capture_default_str();
  c_ablate->add_option("--seeds", ab.seeds, "Number of paired seeds")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  c_ablate->add_option("--epochs", ab.epochs, "Training epochs per arm")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  c_ablate->add_option("--seed", ab.seed, "Base seed (seed+i per pair)")->capture_default_str();
  c_ablate->add_option("--sim-scenes", ab.sim_scenes, "Scenes per instance count in the grasp simulation")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  c_ablate->add_option("--sim-trajectories", ab.sim_trajectories, "Rollouts per simulated scene")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  c_ablate->add_option("--sim-instances", ab.sim_instances, "Instance counts simulated (repeatable)")
      ->check(CLI::Range(1, 4));

  ExportArgs ex;
  CLI::App* c_export = app.add_subcommand("export-plots", "Emit V(t) and ||u||(t) series plus a gnuplot script");
  c_export->add_option("--runs", ex.runs, "Directory scanned recursively for trajectory logs")
      ->required()
      ->check(CLI::ExistingDirectory);
  c_export->add_option("--out", ex.out, "Output directory (default <runs>/plots)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (c_sim->parsed()) return cmd_simulate(sim);
    if (c_gen->parsed()) return cmd_gen_data(gen);
    if (c_train->parsed()) return cmd_train(tr);
    if (c_eval->parsed()) return cmd_eval(ev);
    if (c_ablate->parsed()) return cmd_ablate(ab);
    if (c_export->parsed()) return cmd_export_plots(ex);
  } catch (const UsageError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitUsage;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitData;
  }
  return kExitOk;
}
