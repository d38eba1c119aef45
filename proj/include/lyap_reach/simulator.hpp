#pragma once

// Kinematic multi-instance reaching simulator.
//
// A scene is a set of grasp targets on a table plane. Each control step the
// active provider (exact controller or a learned surrogate) reports a value
// estimate and a joint-velocity command for every candidate target; the arm
// commits to the candidate with the lowest reported value, smooths the command
// through a momentum filter, and integrates. A grasp is triggered the moment
// the true reaching error of the committed candidate drops below the
// convergence threshold, and is then adjudicated against the success
// tolerances. An optional injector spawns short-lived false-positive
// candidates to stress the selection loop.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "controller.hpp"
#include "io.hpp"
#include "rng.hpp"

namespace lyap_reach {

// ---------------------------------------------------------------------------
// Workspace defaults
// ---------------------------------------------------------------------------

inline Vector3d workspace_min() { return Vector3d(-0.62, -0.30, 0.10); }
inline Vector3d workspace_max() { return Vector3d(-0.30, 0.12, 0.42); }

// Elbow-up posture over the table; start sampling seeds its solver here.
inline Vector6d home_configuration() {
  Vector6d q;
  q << 0.0, -2.0, 1.8, -1.37, -M_PI / 2, 0.0;
  return q;
}

// ---------------------------------------------------------------------------
// Scenes
// ---------------------------------------------------------------------------

struct Scene {
  std::vector<TargetInstance> targets;
  Vector3d ws_min = workspace_min();
  Vector3d ws_max = workspace_max();
  double table_height = 0.0;
  std::uint64_t seed = 0;  // seed the scene was sampled from (provenance)
};

inline nlohmann::json symmetry_to_json(const SymmetrySpec& sym) {
  nlohmann::json j;
  if (sym.kind == SymmetrySpec::Kind::continuous_axis) {
    j["kind"] = "continuous_axis";
    j["axis"] = {sym.axis(0), sym.axis(1), sym.axis(2)};
  } else {
    j["kind"] = "discrete";
    for (const auto& E : sym.elements) {
      nlohmann::json row = nlohmann::json::array();
      for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) row.push_back(E(r, c));
      j["elements"].push_back(row);
    }
  }
  return j;
}

inline SymmetrySpec symmetry_from_json(const nlohmann::json& j) {
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "continuous_axis") {
    const auto& a = j.at("axis");
    return SymmetrySpec::continuous(Vector3d(a.at(0).get<double>(), a.at(1).get<double>(), a.at(2).get<double>()));
  }
  if (kind != "discrete") throw std::invalid_argument("symmetry: unknown kind '" + kind + "'");
  std::vector<Matrix3d> elems;
  for (const auto& row : j.at("elements")) {
    if (row.size() != 9) throw std::invalid_argument("symmetry: discrete element needs 9 numbers");
    Matrix3d E;
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) E(r, c) = row.at(static_cast<std::size_t>(3 * r + c)).get<double>();
    elems.push_back(E);
  }
  return SymmetrySpec::discrete_set(std::move(elems));
}

inline nlohmann::json scene_to_json(const Scene& scene) {
  nlohmann::json j;
  j["targets"] = nlohmann::json::array();
  for (const auto& t : scene.targets) {
    nlohmann::json jt;
    const auto arr = pose_to_array(t.goal);
    jt["pose"] = std::vector<double>(arr.begin(), arr.end());
    jt["symmetry"] = symmetry_to_json(t.symmetry);
    j["targets"].push_back(jt);
  }
  j["workspace"]["min"] = {scene.ws_min(0), scene.ws_min(1), scene.ws_min(2)};
  j["workspace"]["max"] = {scene.ws_max(0), scene.ws_max(1), scene.ws_max(2)};
  j["table_height"] = scene.table_height;
  j["seed"] = scene.seed;
  return j;
}

inline Scene scene_from_json(const nlohmann::json& j) {
  Scene scene;
  for (const auto& jt : j.at("targets")) {
    TargetInstance t;
    std::array<double, 12> arr{};
    if (jt.at("pose").size() != 12) throw std::invalid_argument("scene: target pose needs 12 numbers");
    for (std::size_t i = 0; i < 12; ++i) arr[i] = jt.at("pose").at(i).get<double>();
    t.goal = pose_from_array(arr);
    t.symmetry = symmetry_from_json(jt.at("symmetry"));
    scene.targets.push_back(std::move(t));
  }
  if (j.contains("workspace")) {
    const auto& w = j.at("workspace");
    for (int i = 0; i < 3; ++i) {
      scene.ws_min(i) = w.at("min").at(static_cast<std::size_t>(i)).get<double>();
      scene.ws_max(i) = w.at("max").at(static_cast<std::size_t>(i)).get<double>();
    }
  }
  scene.table_height = j.value("table_height", 0.0);
  scene.seed = j.value("seed", std::uint64_t{0});
  return scene;
}

// ---------------------------------------------------------------------------
// Scene and start-state sampling
// ---------------------------------------------------------------------------

inline constexpr double kTargetMargin = 0.03;      // keep targets off the box walls
inline constexpr double kTargetSeparation = 0.12;  // min distance between targets
inline constexpr double kTargetHeight = 0.05;      // grasp point above the table

// A tabletop grasp target: z-down orientation with a uniform spin about the
// symmetry axis, placed uniformly inside the workspace footprint.
inline TargetInstance make_target(Rng& rng, const Vector3d& ws_min, const Vector3d& ws_max,
                                  double table_height = 0.0) {
  TargetInstance t;
  t.goal.t = Vector3d(rng.uniform(ws_min(0) + kTargetMargin, ws_max(0) - kTargetMargin),
                      rng.uniform(ws_min(1) + kTargetMargin, ws_max(1) - kTargetMargin),
                      table_height + kTargetHeight);
  t.goal.R = rot_x(M_PI) * rot_z(rng.uniform(-M_PI, M_PI));
  t.symmetry = SymmetrySpec::continuous(Vector3d::UnitZ());
  return t;
}

// A perception false positive: uniform position anywhere in the workspace box
// (not confined to the tabletop), same grasp-style orientation family as the
// real targets.
inline TargetInstance make_phantom_target(Rng& rng, const Vector3d& ws_min, const Vector3d& ws_max) {
  TargetInstance t;
  t.goal.t = Vector3d(rng.uniform(ws_min(0), ws_max(0)), rng.uniform(ws_min(1), ws_max(1)),
                      rng.uniform(ws_min(2), ws_max(2)));
  t.goal.R = rot_x(M_PI) * rot_z(rng.uniform(-M_PI, M_PI));
  t.symmetry = SymmetrySpec::continuous(Vector3d::UnitZ());
  return t;
}

// n targets with pairwise separation; the whole scene is resampled if a
// placement gets stuck, so the caller always receives exactly n instances.
inline Scene sample_scene(Rng& rng, int n_instances, const Vector3d& ws_min = workspace_min(),
                          const Vector3d& ws_max = workspace_max(), double table_height = 0.0) {
  if (n_instances < 1) throw std::invalid_argument("sample_scene: need at least one instance");
  Scene scene;
  scene.ws_min = ws_min;
  scene.ws_max = ws_max;
  scene.table_height = table_height;
  for (int attempt = 0; attempt < 50; ++attempt) {
    scene.targets.clear();
    bool stuck = false;
    for (int k = 0; k < n_instances && !stuck; ++k) {
      bool placed = false;
      for (int trial = 0; trial < 100 && !placed; ++trial) {
        TargetInstance cand = make_target(rng, ws_min, ws_max, table_height);
        placed = true;
        for (const auto& other : scene.targets)
          if ((cand.goal.t - other.goal.t).norm() <= kTargetSeparation) {
            placed = false;
            break;
          }
        if (placed) scene.targets.push_back(std::move(cand));
      }
      stuck = !placed;
    }
    if (!stuck) return scene;
  }
  throw std::runtime_error("sample_scene: could not place " + std::to_string(n_instances) +
                           " separated targets in the workspace");
}

// Random end-effector start pose: position uniform in the workspace box,
// orientation a perturbed z-down attitude whose approach ray hits the table
// plane inside the workspace footprint (with a small margin). Returns nullopt
// when no admissible orientation is found for the drawn position.
inline std::optional<Pose> sample_start_pose(Rng& rng, const Vector3d& ws_min = workspace_min(),
                                             const Vector3d& ws_max = workspace_max(),
                                             double table_height = 0.0) {
  Pose pose;
  for (int i = 0; i < 3; ++i) pose.t(i) = rng.uniform(ws_min(i), ws_max(i));
  for (int trial = 0; trial < 100; ++trial) {
    const double ex = rng.uniform(-0.5, 0.5);
    const double ey = rng.uniform(-0.5, 0.5);
    const double ez = rng.uniform(-M_PI, M_PI);
    const Matrix3d R = rot_z(ez) * rot_y(ey) * rot_x(ex) * rot_x(M_PI);
    const Vector3d zax = R.col(2);
    if (zax(2) > -1e-6) continue;  // approach must point at the table
    const double s = (table_height - pose.t(2)) / zax(2);
    const Vector3d hit = pose.t + s * zax;
    if (hit(0) >= ws_min(0) - 0.05 && hit(0) <= ws_max(0) + 0.05 && hit(1) >= ws_min(1) - 0.05 &&
        hit(1) <= ws_max(1) + 0.05) {
      pose.R = R;
      return pose;
    }
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Inverse kinematics
// ---------------------------------------------------------------------------

inline constexpr double kIkTol = 1e-6;  // residual sqrt(2 V) at acceptance

struct IkResult {
  Vector6d q = Vector6d::Zero();
  bool converged = false;
  int iterations = 0;
};

// Newton iteration on the full-pose reaching error (identity-only symmetry):
// each step solves J dq = vee(grad V), falling back to the damped inverse near
// singularities. Iterates move through unrestricted joint space; limits are
// the caller's acceptance criterion.
inline IkResult inverse_kinematics(const KinematicChain& chain, const Pose& goal, const Vector6d& q_init,
                                   int max_iters = 100, double tol = kIkTol) {
  KinematicChain free = chain;
  for (auto& lim : free.joint_limits) lim = {-1e9, 1e9};
  TargetInstance target;
  target.goal = goal;
  target.symmetry = SymmetrySpec::none();

  IkResult out;
  out.q = q_init;
  for (int k = 0; k < max_iters; ++k) {
    Pose T_H;
    const Matrix6d J = body_jacobian(free, out.q, &T_H);
    const ClfResult c = clf_value(T_H, target);
    out.iterations = k;
    if (std::sqrt(2.0 * c.V) < tol) {
      out.converged = true;
      return out;
    }
    const Vector6d g = vee_vector(clf_gradient(T_H, c.T_G_star));
    out.q -= solve_joint_velocity(J, g).qdot;
  }
  out.iterations = max_iters;
  return out;
}

// Start configuration for a sampled start pose: solve from home first, then
// from perturbed seeds. A candidate is accepted only when it converged inside
// the chain's joint limits.
inline std::optional<Vector6d> solve_start_configuration(const KinematicChain& chain, const Pose& pose,
                                                         Rng& rng, int restarts = 100) {
  Vector6d seed = home_configuration();
  for (int attempt = 0; attempt < restarts; ++attempt) {
    const IkResult ik = inverse_kinematics(chain, pose, seed);
    if (ik.converged && joints_within_limits(chain, ik.q)) return ik.q;
    seed = home_configuration();
    for (int i = 0; i < 6; ++i) seed(i) += rng.uniform(-0.5, 0.5);
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Control providers
// ---------------------------------------------------------------------------

struct TargetEvaluation {
  double V = 0.0;               // reported value estimate (drives selection)
  Vector6d u = Vector6d::Zero();  // joint-velocity command toward this target
  bool damped = false;          // provider hit a singularity guard
};

class ControlProvider {
 public:
  virtual ~ControlProvider() = default;
  virtual void evaluate(const Vector6d& q, const std::vector<TargetInstance>& targets,
                        std::vector<TargetEvaluation>& out) const = 0;
};

class ExactProvider final : public ControlProvider {
 public:
  explicit ExactProvider(KinematicChain chain, double gain = 1.0) : chain_(std::move(chain)), gain_(gain) {}

  void evaluate(const Vector6d& q, const std::vector<TargetInstance>& targets,
                std::vector<TargetEvaluation>& out) const override {
    out.resize(targets.size());
    for (std::size_t k = 0; k < targets.size(); ++k) {
      const ControlOutput c = velocity_control(chain_, q, targets[k], gain_);
      out[k] = TargetEvaluation{c.clf_value, c.u, c.damped};
    }
  }

  const KinematicChain& chain() const { return chain_; }

 private:
  KinematicChain chain_;
  double gain_;
};

// ---------------------------------------------------------------------------
// False-positive injection
// ---------------------------------------------------------------------------

// Spawns short-lived phantom candidates that enter target selection alongside
// the real instances. A negative bias makes them look spuriously promising to
// the selector; committing to one is adjudicated as a failed grasp.
struct FalsePositiveInjector {
  double spawn_probability = 0.02;  // per-step chance of a new phantom
  int lifetime = 10;                // steps a phantom stays alive
  double clf_bias = -0.2;           // added to the phantom's reported value
};

// ---------------------------------------------------------------------------
// Rollouts
// ---------------------------------------------------------------------------

struct RolloutConfig {
  double dt = 0.02;             // integration step (50 Hz)
  int max_steps = 1500;
  double gain = 1.0;            // forwarded to the exact provider by callers
  double eta = 0.0;             // momentum coefficient
  double convergence_V = 5e-5;  // grasp triggers when the committed target's
                                // true reaching error drops below this
  double success_pos_tol = 0.012;
  double success_V_tol = 1e-3;
  int singular_abort_steps = 50;  // consecutive damped steps before aborting
};

enum class Outcome { success, failed_grasp, timeout, singular_abort };

inline const char* outcome_name(Outcome o) {
  switch (o) {
    case Outcome::success: return "success";
    case Outcome::failed_grasp: return "failed_grasp";
    case Outcome::timeout: return "timeout";
    case Outcome::singular_abort: return "singular_abort";
  }
  return "unknown";
}

struct TrajectoryStep {
  double t = 0.0;
  Vector6d q = Vector6d::Zero();
  int target_idx = 0;   // committed candidate; >= #targets marks a phantom
  double V = 0.0;       // reported value of the committed candidate
  Vector6d u = Vector6d::Zero();      // raw command for that candidate
  Vector6d u_bar = Vector6d::Zero();  // momentum-filtered command applied
};

struct Adjudication {
  bool success = false;
  double pos_err = 0.0;
  double true_V = 0.0;
};

// Grasp adjudication: the end effector must sit within the position tolerance
// of the target and the true reaching error must be below the value tolerance.
inline Adjudication adjudicate(const KinematicChain& chain, const Vector6d& q, const TargetInstance& target,
                               const RolloutConfig& cfg) {
  const Pose H = forward_kinematics(chain, q);
  Adjudication adj;
  adj.true_V = clf_value(H, target).V;
  adj.pos_err = (H.t - target.goal.t).norm();
  adj.success = adj.pos_err <= cfg.success_pos_tol && adj.true_V <= cfg.success_V_tol;
  return adj;
}

struct RolloutResult {
  Outcome outcome = Outcome::timeout;
  std::vector<TrajectoryStep> steps;
  int selection_switches = 0;
  bool limits_clamped = false;
  int selected = -1;            // candidate id committed to (or last selected)
  bool selected_phantom = false;
  double final_true_V = std::numeric_limits<double>::infinity();
  double final_pos_err = std::numeric_limits<double>::infinity();
};

// One closed-loop reaching episode. The provider scores every live candidate
// (real targets first, phantoms after); the arm commits to the minimum
// reported value, and the episode ends when the committed candidate's true
// reaching error crosses the convergence threshold, when the singularity
// guard trips, or on timeout. `rng` only feeds the phantom injector, so runs
// without one are deterministic functions of (q0, scene, provider, cfg).
inline RolloutResult rollout(const KinematicChain& chain, const Vector6d& q0, const Scene& scene,
                             const ControlProvider& provider, const RolloutConfig& cfg, Rng rng,
                             const FalsePositiveInjector* injector = nullptr) {
  check_joint_limits(chain, q0);
  if (scene.targets.empty()) throw std::invalid_argument("rollout: scene has no targets");

  struct Phantom {
    TargetInstance target;
    int expires_at = 0;
    int id = 0;
  };

  RolloutResult result;
  Vector6d q = q0;
  Vector6d u_bar = Vector6d::Zero();
  std::vector<Phantom> phantoms;
  int phantom_serial = 0;
  const int n_real = static_cast<int>(scene.targets.size());

  std::vector<TargetInstance> candidates = scene.targets;
  std::vector<int> ids(scene.targets.size());
  for (int k = 0; k < n_real; ++k) ids[static_cast<std::size_t>(k)] = k;

  std::vector<TargetEvaluation> evals;
  std::vector<double> reported;
  int prev_id = -1;
  int consecutive_damped = 0;

  TargetInstance committed;  // copy of the last selected candidate
  bool have_committed = false;
  for (int step = 0; step < cfg.max_steps; ++step) {
    const double t = cfg.dt * static_cast<double>(step);

    if (injector) {
      std::erase_if(phantoms, [&](const Phantom& p) { return p.expires_at <= step; });
      if (rng.uniform01() < injector->spawn_probability) {
        Phantom p;
        p.target = make_phantom_target(rng, scene.ws_min, scene.ws_max);
        p.expires_at = step + injector->lifetime;
        p.id = n_real + phantom_serial++;
        phantoms.push_back(std::move(p));
      }
      candidates.assign(scene.targets.begin(), scene.targets.end());
      ids.assign(scene.targets.size(), 0);
      for (int k = 0; k < n_real; ++k) ids[static_cast<std::size_t>(k)] = k;
      for (const auto& p : phantoms) {
        candidates.push_back(p.target);
        ids.push_back(p.id);
      }
    }

    provider.evaluate(q, candidates, evals);
    reported.resize(evals.size());
    for (std::size_t k = 0; k < evals.size(); ++k) reported[k] = evals[k].V;
    for (std::size_t k = scene.targets.size(); k < reported.size(); ++k) reported[k] += injector->clf_bias;

    const std::size_t sel = select_target(reported);
    const bool is_phantom = ids[sel] >= n_real;
    if (prev_id >= 0 && ids[sel] != prev_id) ++result.selection_switches;
    prev_id = ids[sel];
    result.selected = ids[sel];
    result.selected_phantom = is_phantom;
    committed = candidates[sel];
    have_committed = true;

    const Pose H = forward_kinematics(chain, q);
    const double true_V = clf_value(H, candidates[sel]).V;

    if (true_V < cfg.convergence_V) {
      result.steps.push_back(TrajectoryStep{t, q, ids[sel], reported[sel], evals[sel].u, u_bar});
      const Adjudication adj = adjudicate(chain, q, candidates[sel], cfg);
      result.final_true_V = adj.true_V;
      result.final_pos_err = adj.pos_err;
      result.outcome = (!is_phantom && adj.success) ? Outcome::success : Outcome::failed_grasp;
      return result;
    }

    u_bar = momentum_step(MomentumState{u_bar, cfg.eta}, evals[sel].u).u_bar;
    result.steps.push_back(TrajectoryStep{t, q, ids[sel], reported[sel], evals[sel].u, u_bar});

    if (evals[sel].damped) {
      if (++consecutive_damped >= cfg.singular_abort_steps) {
        const Adjudication adj = adjudicate(chain, q, candidates[sel], cfg);
        result.final_true_V = adj.true_V;
        result.final_pos_err = adj.pos_err;
        result.outcome = Outcome::singular_abort;
        return result;
      }
    } else {
      consecutive_damped = 0;
    }

    q += cfg.dt * u_bar;
    for (int i = 0; i < 6; ++i) {
      const auto& lim = chain.joint_limits[static_cast<std::size_t>(i)];
      if (q(i) < lim[0] || q(i) > lim[1]) {
        q(i) = std::clamp(q(i), lim[0], lim[1]);
        result.limits_clamped = true;
      }
    }
  }

  if (have_committed) {
    const Adjudication adj = adjudicate(chain, q, committed, cfg);
    result.final_true_V = adj.true_V;
    result.final_pos_err = adj.pos_err;
  }
  result.outcome = Outcome::timeout;
  return result;
}

// ---------------------------------------------------------------------------
// Trajectory files
// ---------------------------------------------------------------------------

inline constexpr const char* kTrajectoryHeader =
    "t,q1,q2,q3,q4,q5,q6,target_idx,V,u1,u2,u3,u4,u5,u6,ubar1,ubar2,ubar3,ubar4,ubar5,ubar6";

inline std::string trajectory_to_csv(const std::vector<TrajectoryStep>& steps) {
  std::string out = kTrajectoryHeader;
  out += '\n';
  for (const auto& s : steps) {
    out += format_double(s.t);
    for (int i = 0; i < 6; ++i) out += "," + format_double(s.q(i));
    out += "," + std::to_string(s.target_idx);
    out += "," + format_double(s.V);
    for (int i = 0; i < 6; ++i) out += "," + format_double(s.u(i));
    for (int i = 0; i < 6; ++i) out += "," + format_double(s.u_bar(i));
    out += '\n';
  }
  return out;
}

inline std::vector<TrajectoryStep> trajectory_from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != kTrajectoryHeader)
    throw std::invalid_argument("trajectory csv: bad header");
  std::vector<TrajectoryStep> steps;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(row, cell, ',')) cells.push_back(cell);
    if (cells.size() != 21) throw std::invalid_argument("trajectory csv: expected 21 columns");
    TrajectoryStep s;
    s.t = std::stod(cells[0]);
    for (int i = 0; i < 6; ++i) s.q(i) = std::stod(cells[static_cast<std::size_t>(1 + i)]);
    s.target_idx = std::stoi(cells[7]);
    s.V = std::stod(cells[8]);
    for (int i = 0; i < 6; ++i) s.u(i) = std::stod(cells[static_cast<std::size_t>(9 + i)]);
    for (int i = 0; i < 6; ++i) s.u_bar(i) = std::stod(cells[static_cast<std::size_t>(15 + i)]);
    steps.push_back(s);
  }
  return steps;
}

// Replay audit: a trajectory is internally consistent with the recorded
// commands when integrating each row's filtered command reproduces the next
// row's joint state (joint-limit clamping aside).
inline bool trajectory_replays(const std::vector<TrajectoryStep>& steps, double dt, double tol = 1e-12) {
  for (std::size_t k = 0; k + 1 < steps.size(); ++k) {
    const Vector6d predicted = steps[k].q + dt * steps[k].u_bar;
    if ((steps[k + 1].q - predicted).cwiseAbs().maxCoeff() > tol) return false;
  }
  return true;
}

// ---------------------------------------------------------------------------
// Batch runner
// ---------------------------------------------------------------------------

struct BatchConfig {
  int scenes = 10;
  int trajectories_per_scene = 10;
  int instances = 1;            // targets per scene
  std::uint64_t seed = 0;
  RolloutConfig rollout;
  std::optional<FalsePositiveInjector> injector;
};

struct BatchSummary {
  int attempted = 0;        // scene/start pairs drawn
  int rollouts = 0;         // pairs whose start sampling succeeded
  int successes = 0;
  int failed_grasps = 0;
  int timeouts = 0;
  int singular_aborts = 0;
  double mean_switches = 0.0;
  double mean_steps = 0.0;

  nlohmann::json to_json() const {
    return nlohmann::json{{"attempted", attempted},
                          {"rollouts", rollouts},
                          {"successes", successes},
                          {"failed_grasps", failed_grasps},
                          {"timeouts", timeouts},
                          {"singular_aborts", singular_aborts},
                          {"mean_switches", mean_switches},
                          {"mean_steps", mean_steps},
                          {"success_rate", rollouts > 0 ? static_cast<double>(successes) / rollouts : 0.0}};
  }
};

// A reaching episode specification that can be shared across providers so
// comparisons run on identical scenes and start states.
struct Episode {
  Scene scene;
  Vector6d q0 = Vector6d::Zero();
  Rng rollout_rng{0};
  bool valid = false;
};

// Episodes are derived from per-index substreams, so the set depends only on
// (seed, scenes, trajectories_per_scene, instances), never on scheduling.
inline std::vector<Episode> sample_episodes(const KinematicChain& chain, const BatchConfig& cfg) {
  const Rng master(cfg.seed);
  std::vector<Episode> episodes(
      static_cast<std::size_t>(cfg.scenes) * static_cast<std::size_t>(cfg.trajectories_per_scene));
  parallel_for(episodes.size(), [&](std::size_t idx) {
    const std::size_t scene_idx = idx / static_cast<std::size_t>(cfg.trajectories_per_scene);
    Episode& ep = episodes[idx];
    Rng scene_rng = master.substream("scene", scene_idx);
    ep.scene = sample_scene(scene_rng, cfg.instances);
    ep.scene.seed = cfg.seed;
    Rng start_rng = master.substream("start", idx);
    const auto pose = sample_start_pose(start_rng);
    if (!pose) return;
    const auto q0 = solve_start_configuration(chain, *pose, start_rng);
    if (!q0) return;
    ep.q0 = *q0;
    ep.rollout_rng = master.substream("rollout", idx);
    ep.valid = true;
  });
  return episodes;
}

inline BatchSummary run_batch(const KinematicChain& chain, const ControlProvider& provider,
                              const BatchConfig& cfg, std::vector<RolloutResult>* results_out = nullptr,
                              std::vector<Episode>* episodes_out = nullptr) {
  std::vector<Episode> episodes = sample_episodes(chain, cfg);
  std::vector<RolloutResult> results(episodes.size());
  parallel_for(episodes.size(), [&](std::size_t idx) {
    if (!episodes[idx].valid) return;
    results[idx] = rollout(chain, episodes[idx].q0, episodes[idx].scene, provider, cfg.rollout,
                           episodes[idx].rollout_rng, cfg.injector ? &*cfg.injector : nullptr);
  });

  BatchSummary summary;
  summary.attempted = static_cast<int>(episodes.size());
  for (std::size_t idx = 0; idx < episodes.size(); ++idx) {
    if (!episodes[idx].valid) continue;
    const RolloutResult& r = results[idx];
    ++summary.rollouts;
    summary.mean_switches += r.selection_switches;
    summary.mean_steps += static_cast<double>(r.steps.size());
    switch (r.outcome) {
      case Outcome::success: ++summary.successes; break;
      case Outcome::failed_grasp: ++summary.failed_grasps; break;
      case Outcome::timeout: ++summary.timeouts; break;
      case Outcome::singular_abort: ++summary.singular_aborts; break;
    }
  }
  if (summary.rollouts > 0) {
    summary.mean_switches /= summary.rollouts;
    summary.mean_steps /= summary.rollouts;
  }
  if (results_out) *results_out = std::move(results);
  if (episodes_out) *episodes_out = std::move(episodes);
  return summary;
}

}  // namespace lyap_reach
