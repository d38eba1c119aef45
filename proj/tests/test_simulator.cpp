#include <catch2/catch_amalgamated.hpp>

#include "lyap_reach/simulator.hpp"

using namespace lyap_reach;

namespace {

KinematicChain ur5() { return load_chain(LYAP_REACH_CHAIN_FILE); }

// A scene/start pair built the same way the batch runner does it.
struct Setup {
  Scene scene;
  Vector6d q0;
};

Setup sampled_setup(const KinematicChain& chain, std::uint64_t seed, int instances) {
  const Rng master(seed);
  for (std::uint64_t idx = 0;; ++idx) {
    Rng scene_rng = master.substream("scene", idx);
    Scene scene = sample_scene(scene_rng, instances);
    Rng start_rng = master.substream("start", idx);
    const auto pose = sample_start_pose(start_rng);
    if (!pose) continue;
    const auto q0 = solve_start_configuration(chain, *pose, start_rng);
    if (!q0) continue;
    return Setup{std::move(scene), *q0};
  }
}

}  // namespace

TEST_CASE("scene JSON round-trip", "[simulator]") {
  Scene scene;
  Rng rng(41);
  scene.targets.push_back(make_target(rng, scene.ws_min, scene.ws_max));
  TargetInstance discrete;
  discrete.goal = scene.targets[0].goal;
  discrete.symmetry = SymmetrySpec::discrete_set({Matrix3d::Identity(), rot_z(M_PI)});
  scene.targets.push_back(discrete);
  scene.seed = 99;

  const nlohmann::json j = scene_to_json(scene);
  const Scene back = scene_from_json(j);
  REQUIRE(back.targets.size() == 2);
  CHECK(back.targets[0].symmetry.kind == SymmetrySpec::Kind::continuous_axis);
  CHECK(back.targets[1].symmetry.kind == SymmetrySpec::Kind::discrete);
  CHECK(back.targets[1].symmetry.elements.size() == 2);
  CHECK(back.seed == 99);
  CHECK(scene_to_json(back) == j);  // stable after one round trip

  SECTION("bad pose length is rejected") {
    nlohmann::json bad = j;
    bad["targets"][0]["pose"].erase(11);
    CHECK_THROWS_AS(scene_from_json(bad), std::invalid_argument);
  }
  SECTION("unknown symmetry kind is rejected") {
    nlohmann::json bad = j;
    bad["targets"][0]["symmetry"]["kind"] = "helical";
    CHECK_THROWS_AS(scene_from_json(bad), std::invalid_argument);
  }
}

TEST_CASE("sampled scenes respect placement rules", "[simulator]") {
  Rng rng(42);
  for (int rep = 0; rep < 20; ++rep) {
    const int n = 1 + static_cast<int>(rng.uniform_int(4));
    Scene scene = sample_scene(rng, n);
    REQUIRE(static_cast<int>(scene.targets.size()) == n);
    for (std::size_t a = 0; a < scene.targets.size(); ++a) {
      const auto& t = scene.targets[a];
      CHECK(pose_is_valid(t.goal));
      CHECK(t.goal.t(0) >= scene.ws_min(0) + kTargetMargin);
      CHECK(t.goal.t(0) <= scene.ws_max(0) - kTargetMargin);
      CHECK(t.goal.t(1) >= scene.ws_min(1) + kTargetMargin);
      CHECK(t.goal.t(1) <= scene.ws_max(1) - kTargetMargin);
      CHECK(t.goal.t(2) == kTargetHeight);
      CHECK((t.goal.R.col(2) - Vector3d(0, 0, -1)).norm() < 1e-15);  // grasp approach points down
      for (std::size_t b = a + 1; b < scene.targets.size(); ++b)
        CHECK((t.goal.t - scene.targets[b].goal.t).norm() > kTargetSeparation);
    }
  }
}

TEST_CASE("sampled start poses aim at the table", "[simulator]") {
  Rng rng(43);
  int accepted = 0;
  for (int rep = 0; rep < 200; ++rep) {
    const auto pose = sample_start_pose(rng);
    if (!pose) continue;
    ++accepted;
    CHECK(pose_is_valid(*pose));
    for (int i = 0; i < 3; ++i) {
      CHECK(pose->t(i) >= workspace_min()(i));
      CHECK(pose->t(i) <= workspace_max()(i));
    }
    const Vector3d zax = pose->R.col(2);
    CHECK(zax(2) <= -1e-6);
    const Vector3d hit = pose->t + (0.0 - pose->t(2)) / zax(2) * zax;
    CHECK(hit(0) >= workspace_min()(0) - 0.05);
    CHECK(hit(0) <= workspace_max()(0) + 0.05);
    CHECK(hit(1) >= workspace_min()(1) - 0.05);
    CHECK(hit(1) <= workspace_max()(1) + 0.05);
  }
  CHECK(accepted > 150);  // rejection is the exception, not the rule
}

TEST_CASE("inverse kinematics reaches sampled poses", "[simulator]") {
  const KinematicChain chain = ur5();
  Rng rng(44);
  int solved = 0;
  for (int rep = 0; rep < 25; ++rep) {
    const auto pose = sample_start_pose(rng);
    if (!pose) continue;
    const auto q = solve_start_configuration(chain, *pose, rng);
    if (!q) continue;
    ++solved;
    CHECK(joints_within_limits(chain, *q));
    const Pose reached = forward_kinematics(chain, *q);
    const double resid = std::sqrt((reached.R - pose->R).squaredNorm() + (reached.t - pose->t).squaredNorm());
    CHECK(resid < kIkTol);
  }
  CHECK(solved >= 20);

  SECTION("unreachable poses are refused") {
    Pose far;
    far.t = Vector3d(5.0, 5.0, 5.0);
    CHECK_FALSE(inverse_kinematics(chain, far, home_configuration()).converged);
  }
}

TEST_CASE("exact-controller rollouts reach single targets", "[simulator]") {
  const KinematicChain chain = ur5();
  const ExactProvider provider(chain);
  RolloutConfig cfg;  // eta = 0, convergence at 5e-5
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const Setup setup = sampled_setup(chain, seed, 1);
    const RolloutResult r = rollout(chain, setup.q0, setup.scene, provider, cfg, Rng(seed));
    CHECK(r.outcome == Outcome::success);
    CHECK(r.final_pos_err <= cfg.success_pos_tol);
    CHECK(r.final_true_V <= cfg.success_V_tol);
    CHECK(r.selection_switches == 0);
    CHECK_FALSE(r.limits_clamped);
    for (std::size_t k = 1; k < r.steps.size(); ++k) CHECK(r.steps[k].V < r.steps[k - 1].V);
    CHECK(r.steps.back().V < cfg.convergence_V);
  }
}

TEST_CASE("a rollout that starts at the goal commits immediately", "[simulator]") {
  const KinematicChain chain = ur5();
  Rng rng(45);
  Scene scene = sample_scene(rng, 1);
  const auto q0 = solve_start_configuration(chain, scene.targets[0].goal, rng);
  REQUIRE(q0.has_value());
  const RolloutResult r = rollout(chain, *q0, scene, ExactProvider(chain), RolloutConfig{}, Rng(1));
  CHECK(r.outcome == Outcome::success);
  CHECK(r.steps.size() == 1);
  CHECK(r.steps[0].u_bar.isZero());
}

TEST_CASE("identical candidates tie-break to the lowest index", "[simulator]") {
  const KinematicChain chain = ur5();
  Rng rng(46);
  Scene scene = sample_scene(rng, 1);
  scene.targets.push_back(scene.targets[0]);  // exact duplicate
  const auto q0 = solve_start_configuration(chain, *sample_start_pose(rng), rng);
  REQUIRE(q0.has_value());
  const RolloutResult r = rollout(chain, *q0, scene, ExactProvider(chain), RolloutConfig{}, Rng(1));
  CHECK(r.outcome == Outcome::success);
  CHECK(r.selection_switches == 0);
  for (const auto& s : r.steps) CHECK(s.target_idx == 0);
}

TEST_CASE("rollouts are bitwise deterministic", "[simulator]") {
  const KinematicChain chain = ur5();
  const Setup setup = sampled_setup(chain, 7, 2);
  const ExactProvider provider(chain);
  RolloutConfig cfg;
  cfg.eta = 0.6;
  FalsePositiveInjector inj;  // defaults exercise the phantom path
  const RolloutResult a = rollout(chain, setup.q0, setup.scene, provider, cfg, Rng(7), &inj);
  const RolloutResult b = rollout(chain, setup.q0, setup.scene, provider, cfg, Rng(7), &inj);
  CHECK(trajectory_to_csv(a.steps) == trajectory_to_csv(b.steps));
  CHECK(a.outcome == b.outcome);
  CHECK(a.selection_switches == b.selection_switches);
}

TEST_CASE("a zero-rate injector changes nothing", "[simulator]") {
  const KinematicChain chain = ur5();
  const Setup setup = sampled_setup(chain, 8, 2);
  const ExactProvider provider(chain);
  RolloutConfig cfg;
  cfg.eta = 0.6;
  FalsePositiveInjector off;
  off.spawn_probability = 0.0;
  const RolloutResult with_off = rollout(chain, setup.q0, setup.scene, provider, cfg, Rng(8), &off);
  const RolloutResult without = rollout(chain, setup.q0, setup.scene, provider, cfg, Rng(8));
  CHECK(trajectory_to_csv(with_off.steps) == trajectory_to_csv(without.steps));
  CHECK(with_off.outcome == without.outcome);
}

TEST_CASE("phantoms with a deterrent bias are never selected", "[simulator]") {
  const KinematicChain chain = ur5();
  const Setup setup = sampled_setup(chain, 9, 1);
  FalsePositiveInjector inj;
  inj.spawn_probability = 0.5;
  inj.lifetime = 30;
  inj.clf_bias = +100.0;  // reported value can never win the argmin
  const RolloutResult r = rollout(chain, setup.q0, setup.scene, ExactProvider(chain), RolloutConfig{}, Rng(9), &inj);
  CHECK(r.outcome == Outcome::success);
  for (const auto& s : r.steps) CHECK(s.target_idx == 0);
}

TEST_CASE("committing to a phantom is a failed grasp", "[simulator]") {
  const KinematicChain chain = ur5();
  const Setup setup = sampled_setup(chain, 10, 1);
  FalsePositiveInjector inj;
  inj.spawn_probability = 1.0;  // flood the scene
  inj.lifetime = 1600;          // phantoms outlive the episode
  inj.clf_bias = -1000.0;       // and always win selection
  const RolloutResult r = rollout(chain, setup.q0, setup.scene, ExactProvider(chain), RolloutConfig{}, Rng(10), &inj);
  CHECK(r.selected_phantom);
  CHECK(r.outcome != Outcome::success);
  bool phantom_step = false;
  for (const auto& s : r.steps) phantom_step |= s.target_idx >= 1;
  CHECK(phantom_step);
}

TEST_CASE("joint-limit clamping is flagged", "[simulator]") {
  KinematicChain chain = ur5();
  const Vector6d home = home_configuration();
  for (int i = 0; i < 6; ++i) chain.joint_limits[static_cast<std::size_t>(i)] = {home(i) - 0.02, home(i) + 0.02};
  Rng rng(47);
  const Scene scene = sample_scene(rng, 1);
  const RolloutResult r = rollout(chain, home, scene, ExactProvider(chain), RolloutConfig{}, Rng(11));
  CHECK(r.limits_clamped);
  CHECK(r.outcome != Outcome::success);
}

TEST_CASE("adjudication tolerances", "[simulator]") {
  const KinematicChain chain = ur5();
  Rng rng(48);
  const Scene scene = sample_scene(rng, 1);
  const TargetInstance& target = scene.targets[0];
  const RolloutConfig cfg;

  const auto q_at_offset = [&](const Vector3d& offset) {
    Pose pose = target.goal;
    pose.t += offset;
    const auto q = solve_start_configuration(chain, pose, rng);
    REQUIRE(q.has_value());
    return *q;
  };

  SECTION("on-target grasp passes") {
    const Adjudication adj = adjudicate(chain, q_at_offset(Vector3d::Zero()), target, cfg);
    CHECK(adj.success);
  }
  SECTION("twice the position tolerance fails") {
    const Adjudication adj = adjudicate(chain, q_at_offset(Vector3d(2 * cfg.success_pos_tol, 0, 0)), target, cfg);
    CHECK_FALSE(adj.success);
    CHECK(adj.pos_err > cfg.success_pos_tol);
  }
  SECTION("value within tolerance but position out still fails") {
    const Adjudication adj = adjudicate(chain, q_at_offset(Vector3d(0.02, 0, 0)), target, cfg);
    CHECK(adj.true_V < cfg.success_V_tol);
    CHECK(adj.pos_err > cfg.success_pos_tol);
    CHECK_FALSE(adj.success);
  }
}

TEST_CASE("trajectory CSV round-trip", "[simulator]") {
  const KinematicChain chain = ur5();
  const Setup setup = sampled_setup(chain, 12, 2);
  const RolloutResult r = rollout(chain, setup.q0, setup.scene, ExactProvider(chain), RolloutConfig{}, Rng(12));
  const std::string csv = trajectory_to_csv(r.steps);
  CHECK(csv.rfind(kTrajectoryHeader, 0) == 0);
  const auto back = trajectory_from_csv(csv);
  CHECK(trajectory_to_csv(back) == csv);  // shortest round-trip doubles survive

  CHECK_THROWS_AS(trajectory_from_csv("time,stuff\n1,2\n"), std::invalid_argument);
  CHECK_THROWS_AS(trajectory_from_csv(std::string(kTrajectoryHeader) + "\n1,2,3\n"), std::invalid_argument);
}

TEST_CASE("recorded trajectories replay their own commands", "[simulator]") {
  const KinematicChain chain = ur5();
  const Setup setup = sampled_setup(chain, 13, 2);
  RolloutConfig cfg;
  cfg.eta = 0.6;
  const RolloutResult r = rollout(chain, setup.q0, setup.scene, ExactProvider(chain), cfg, Rng(13));
  REQUIRE_FALSE(r.limits_clamped);
  CHECK(trajectory_replays(r.steps, cfg.dt));
  CHECK(trajectory_replays(trajectory_from_csv(trajectory_to_csv(r.steps)), cfg.dt));

  auto broken = r.steps;
  if (broken.size() > 2) {
    broken[1].q(0) += 1e-6;
    CHECK_FALSE(trajectory_replays(broken, cfg.dt));
  }
}

TEST_CASE("batch runner aggregates deterministically", "[simulator]") {
  const KinematicChain chain = ur5();
  BatchConfig cfg;
  cfg.scenes = 4;
  cfg.trajectories_per_scene = 2;
  cfg.instances = 2;
  cfg.seed = 77;
  const ExactProvider provider(chain);
  std::vector<RolloutResult> first_results;
  const BatchSummary a = run_batch(chain, provider, cfg, &first_results);
  const BatchSummary b = run_batch(chain, provider, cfg);
  CHECK(a.to_json() == b.to_json());
  CHECK(a.attempted == 8);
  CHECK(a.rollouts > 0);
  CHECK(a.successes == a.rollouts);  // exact controller, no phantoms
  CHECK(static_cast<int>(first_results.size()) == a.attempted);
}
