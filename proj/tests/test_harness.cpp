// Tests for the pipeline harness: config parsing, the frozen feature
// table, single perception steps, full episodes, the toy training task
// and the evaluation suite.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <set>
#include <string>
#include <vector>

#include "lcg/errors.hpp"
#include "lcg/harness.hpp"

using namespace lcg;
using namespace lcg::harness;
using nlohmann::json;

namespace {

geometry::CameraIntrinsics small_intrinsics() {
  geometry::CameraIntrinsics intr;
  intr.width = 128;
  intr.height = 128;
  intr.fx = 64.0;
  intr.fy = 64.0;
  intr.cx = 64.0;
  intr.cy = 64.0;
  return intr;
}

synthscene::Scene open_scene(double half) {
  synthscene::Scene s;
  s.bounds = {-half, -half, half, half};
  return s;
}

// Ghost whose pose sits within 0.1 m of (x, y); fails the test if the
// frontier holds no such node.
topograph::NodeId ghost_near(const topograph::TopoGraph& g, double x,
                             double y) {
  for (const topograph::NodeId id : g.frontier()) {
    const topograph::Pose& p = g.node(id).pose;
    if (std::hypot(p.x - x, p.y - y) < 0.1) return id;
  }
  REQUIRE(false);
  return 0;
}

double deg(double d) { return d * std::numbers::pi / 180.0; }

}  // namespace

TEST_CASE("config json round-trips and defaults hold") {
  const PipelineConfig def = parse_config(json::object());
  CHECK(def.d_max == 3.0);
  CHECK(def.n_pts == 256);
  CHECK(def.d == 768);
  CHECK(def.scope == Scope::Local);
  CHECK(def.fusion == Fusion::Weighted);
  CHECK(def.truncation == Truncation::Z3D);

  PipelineConfig cfg;
  cfg.d_max = 2.5;
  cfg.n_pts = 64;
  cfg.d = 32;
  cfg.scope = Scope::Global;
  cfg.fusion = Fusion::Direct;
  cfg.truncation = Truncation::Crop2D;
  cfg.crop2d_scope = Scope::Global;
  cfg.crop2d_threshold = 1.75;

  const PipelineConfig back = parse_config(config_json(cfg));
  CHECK(back.d_max == cfg.d_max);
  CHECK(back.n_pts == cfg.n_pts);
  CHECK(back.d == cfg.d);
  CHECK(back.scope == cfg.scope);
  CHECK(back.fusion == cfg.fusion);
  CHECK(back.truncation == cfg.truncation);
  CHECK(back.crop2d_scope == cfg.crop2d_scope);
  CHECK(back.crop2d_threshold == cfg.crop2d_threshold);
  CHECK(config_json(back) == config_json(cfg));

  {
    std::ofstream out("harness_cfg.json");
    out << config_json(cfg).dump(2) << "\n";
  }
  const PipelineConfig loaded = load_config("harness_cfg.json");
  CHECK(config_json(loaded) == config_json(cfg));
  std::remove("harness_cfg.json");
}

TEST_CASE("config parsing is strict") {
  CHECK_THROWS_AS(parse_config(json::parse(R"({"d_max":3,"typo":1})")),
                  ConfigError);
  CHECK_THROWS_AS(parse_config(json::parse(R"({"scope":"both"})")),
                  ConfigError);
  CHECK_THROWS_AS(parse_config(json::parse(R"({"fusion":"mean"})")),
                  ConfigError);
  CHECK_THROWS_AS(parse_config(json::parse(R"({"truncation":"box"})")),
                  ConfigError);
  CHECK_THROWS_AS(parse_config(json::parse(R"({"n_pts":2.5})")), ConfigError);
  CHECK_THROWS_AS(parse_config(json::parse(R"({"n_pts":0})")), ConfigError);
  CHECK_THROWS_AS(parse_config(json::parse(R"({"D":-4})")), ConfigError);
  CHECK_THROWS_AS(parse_config(json::parse(R"({"d_max":"far"})")), ConfigError);
  CHECK_THROWS_AS(parse_config(json::parse(R"({"d_max":0})")), ConfigError);
  CHECK_THROWS_AS(parse_config(json::parse(R"({"crop2d_threshold":-1})")),
                  ConfigError);
  CHECK_THROWS_AS(parse_config(json::parse(R"([1,2,3])")), ConfigError);
  CHECK_THROWS_AS(load_config("no_such_dir/config.json"), ConfigError);

  // Malformed JSON text through the file loader.
  {
    std::ofstream out("harness_bad.json");
    out << "{\"d_max\": ";
  }
  CHECK_THROWS_AS(load_config("harness_bad.json"), ConfigError);
  std::remove("harness_bad.json");
}

TEST_CASE("enum names round-trip") {
  for (const Scope s : {Scope::Local, Scope::Global})
    CHECK(scope_from_string(to_string(s)) == s);
  for (const Fusion f : {Fusion::Weighted, Fusion::Direct})
    CHECK(fusion_from_string(to_string(f)) == f);
  for (const Truncation t : {Truncation::Z3D, Truncation::None,
                             Truncation::Crop2D, Truncation::SphereAblation})
    CHECK(truncation_from_string(to_string(t)) == t);
  CHECK_THROWS_AS(scope_from_string("LOCAL"), ConfigError);
  CHECK_THROWS_AS(fusion_from_string(""), ConfigError);
  CHECK_THROWS_AS(truncation_from_string("z3d "), ConfigError);
}

TEST_CASE("heading buckets are 30 degrees wide and wrap") {
  CHECK(FeatureTable::bucket_of(0.0) == 0);
  // Nearest-bucket rounding around the first boundary.
  CHECK(FeatureTable::bucket_of(deg(14.9)) == 0);
  CHECK(FeatureTable::bucket_of(deg(15.1)) == 1);
  CHECK(FeatureTable::bucket_of(deg(30.0)) == 1);
  CHECK(FeatureTable::bucket_of(deg(180.0)) == 6);
  CHECK(FeatureTable::bucket_of(deg(330.0)) == 11);
  // Negative and oversized angles wrap into [0, 2pi).
  CHECK(FeatureTable::bucket_of(deg(-5.7)) == 0);
  CHECK(FeatureTable::bucket_of(deg(-17.0)) == 11);
  CHECK(FeatureTable::bucket_of(deg(-90.0)) == 9);
  CHECK(FeatureTable::bucket_of(2.0 * std::numbers::pi) == 0);
  CHECK(FeatureTable::bucket_of(4.0 * std::numbers::pi + deg(30.0)) == 1);
  CHECK(FeatureTable::bucket_of(-2.0 * std::numbers::pi) == 0);

  const FeatureTable t = FeatureTable::make(16, 3);
  CHECK(&t.for_heading(0.0) == &t.by_bucket[0]);
  CHECK(&t.for_heading(deg(90.0)) == &t.by_bucket[3]);
  CHECK(&t.for_heading(deg(-30.0)) == &t.by_bucket[11]);
}

TEST_CASE("feature table generation is deterministic") {
  const FeatureTable a = FeatureTable::make(24, 99);
  const FeatureTable b = FeatureTable::make(24, 99);
  const FeatureTable c = FeatureTable::make(24, 100);

  REQUIRE(a.by_bucket.size() == 12);
  REQUIRE(a.readout.size() == 24);
  CHECK(a.readout == b.readout);
  bool same = true;
  for (std::size_t k = 0; k < 12; ++k) {
    REQUIRE(a.by_bucket[k].values.size() == 24);
    if (a.by_bucket[k].values != b.by_bucket[k].values) same = false;
  }
  CHECK(same);
  CHECK(a.readout != c.readout);
  CHECK_THROWS_AS(FeatureTable::make(0, 1), DomainError);
}

TEST_CASE("one pipeline step populates and enhances the frontier") {
  PipelineConfig cfg;
  cfg.d_max = 3.0;
  cfg.n_pts = 32;
  cfg.d = 8;

  const FeatureTable ft = FeatureTable::make(cfg.d, 11);
  encoder::EncoderParams params = encoder::init_params(cfg.d, 5);
  params.lambda = 0.5;

  const synthscene::Scene scene = open_scene(12.0);
  topograph::TopoGraph graph =
      topograph::TopoGraph::init({0.0, 0.0, 0.0}, ft.for_heading(0.0));
  PipelineState state;

  const StepResult sr = step_pipeline(graph, scene, params, cfg, ft,
                                      small_intrinsics(), state);
  CHECK(sr.candidates == 12);
  CHECK(sr.ghost_ids.size() == 12);
  CHECK(std::set<topograph::NodeId>(sr.ghost_ids.begin(), sr.ghost_ids.end())
            .size() == 12);
  CHECK(graph.node_count() == 13);
  CHECK(graph.edge_count() == 12);
  CHECK(graph.frontier().size() == 12);

  bool any_nonzero = false;
  for (const topograph::NodeId id : graph.frontier()) {
    const topograph::TopoNode& nd = graph.node(id);
    REQUIRE(nd.enhancement.has_value());
    CHECK(nd.enhancement->size() == cfg.d);
    for (const double v : *nd.enhancement)
      if (v != 0.0) any_nonzero = true;
    CHECK(state.geom_cache.count(id) == 1);
  }
  CHECK(any_nonzero);
}

TEST_CASE("zero gate writes enhancements that change nothing") {
  PipelineConfig cfg;
  cfg.n_pts = 32;
  cfg.d = 8;

  const FeatureTable ft = FeatureTable::make(cfg.d, 11);
  // Fresh initialization keeps the gate at zero.
  encoder::EncoderParams params = encoder::init_params(cfg.d, 5);
  REQUIRE(params.lambda == 0.0);

  const synthscene::Scene scene = open_scene(12.0);
  topograph::TopoGraph graph =
      topograph::TopoGraph::init({0.0, 0.0, 0.0}, ft.for_heading(0.0));
  PipelineState state;
  step_pipeline(graph, scene, params, cfg, ft, small_intrinsics(), state);

  for (const topograph::NodeId id : graph.frontier()) {
    const topograph::TopoNode& nd = graph.node(id);
    REQUIRE(nd.enhancement.has_value());
    // Weighted fusion scales the projection by lambda = 0, so the
    // effective feature must equal the base bit for bit.
    const encoder::FeatureVector eff = graph.effective_feature(id);
    CHECK(eff.values == nd.base_feature.values);
  }

  // Direct fusion skips the gate and injects raw geometry.
  PipelineConfig direct = cfg;
  direct.fusion = Fusion::Direct;
  topograph::TopoGraph graph2 =
      topograph::TopoGraph::init({0.0, 0.0, 0.0}, ft.for_heading(0.0));
  PipelineState state2;
  step_pipeline(graph2, scene, params, direct, ft, small_intrinsics(), state2);
  bool any_changed = false;
  for (const topograph::NodeId id : graph2.frontier()) {
    const topograph::TopoNode& nd = graph2.node(id);
    if (nd.enhancement.has_value() &&
        graph2.effective_feature(id).values != nd.base_feature.values)
      any_changed = true;
  }
  CHECK(any_changed);
}

TEST_CASE("out-of-range clouds leave ghosts bare") {
  PipelineConfig cfg;
  cfg.d_max = 0.4;  // nothing projects this close in an empty scene
  cfg.n_pts = 32;
  cfg.d = 8;

  const FeatureTable ft = FeatureTable::make(cfg.d, 11);
  encoder::EncoderParams params = encoder::init_params(cfg.d, 5);
  params.lambda = 0.5;

  const synthscene::Scene scene = open_scene(12.0);
  topograph::TopoGraph graph =
      topograph::TopoGraph::init({0.0, 0.0, 0.0}, ft.for_heading(0.0));
  PipelineState state;
  const StepResult sr = step_pipeline(graph, scene, params, cfg, ft,
                                      small_intrinsics(), state);
  CHECK(sr.candidates == 12);
  for (const topograph::NodeId id : graph.frontier())
    CHECK_FALSE(graph.node(id).enhancement.has_value());
  CHECK(state.geom_cache.empty());
}

TEST_CASE("local scope stops at the frontier edge, global does not") {
  PipelineConfig cfg;
  cfg.d_max = 3.0;
  cfg.n_pts = 32;
  cfg.d = 8;

  const FeatureTable ft = FeatureTable::make(cfg.d, 11);
  const synthscene::Scene scene = open_scene(12.0);

  for (const Scope scope : {Scope::Local, Scope::Global}) {
    PipelineConfig run = cfg;
    run.scope = scope;
    encoder::EncoderParams params = encoder::init_params(cfg.d, 5);
    params.lambda = 0.5;

    topograph::TopoGraph graph =
        topograph::TopoGraph::init({0.0, 0.0, 0.0}, ft.for_heading(0.0));
    PipelineState state;
    step_pipeline(graph, scene, params, run, ft, small_intrinsics(), state);

    // The ghost straight up keeps its id but loses adjacency once the
    // agent moves 3 m east.
    const topograph::NodeId side = ghost_near(graph, 0.0, 3.0);
    const topograph::NodeId ahead = ghost_near(graph, 3.0, 0.0);
    graph.select_and_move(ahead);
    CHECK_FALSE(graph.node(side).enhancement.has_value());

    step_pipeline(graph, scene, params, run, ft, small_intrinsics(), state);
    CHECK_FALSE(graph.has_edge(graph.current(), side));
    if (scope == Scope::Local) {
      CHECK_FALSE(graph.node(side).enhancement.has_value());
    } else {
      CHECK(graph.node(side).enhancement.has_value());
    }
  }
}

TEST_CASE("global 2d cropping can erase candidates that survive locally") {
  // Wall 3.5 m ahead of view 0, past the 3.0 m crop threshold but
  // within candidate range. Local cropping only restricts the encoder
  // input; global cropping blanks the wall before proposals, so the
  // forward candidate lands past the wall and gets discarded.
  synthscene::Scene scene = open_scene(8.0);
  scene.boxes.push_back({{3.5, -0.6, 0.0}, {3.8, 0.6, 2.5}});

  PipelineConfig cfg;
  cfg.d_max = 4.0;
  cfg.n_pts = 32;
  cfg.d = 8;
  cfg.truncation = Truncation::Crop2D;
  cfg.crop2d_threshold = 3.0;

  const FeatureTable ft = FeatureTable::make(cfg.d, 11);
  encoder::EncoderParams params = encoder::init_params(cfg.d, 5);

  cfg.crop2d_scope = Scope::Local;
  topograph::TopoGraph local_graph =
      topograph::TopoGraph::init({0.0, 0.0, 0.0}, ft.for_heading(0.0));
  PipelineState ls;
  const StepResult local = step_pipeline(local_graph, scene, params, cfg, ft,
                                         small_intrinsics(), ls);

  cfg.crop2d_scope = Scope::Global;
  topograph::TopoGraph global_graph =
      topograph::TopoGraph::init({0.0, 0.0, 0.0}, ft.for_heading(0.0));
  PipelineState gs;
  const StepResult global = step_pipeline(global_graph, scene, params, cfg, ft,
                                          small_intrinsics(), gs);

  CHECK(local.candidates == 12);
  CHECK(global.candidates == 11);
  // The local run stops 0.3 m short of the wall face.
  const topograph::NodeId fwd = ghost_near(local_graph, 3.2, 0.0);
  CHECK(local_graph.node(fwd).pose.y == 0.0);
  for (const topograph::NodeId id : global_graph.frontier()) {
    const topograph::Pose& p = global_graph.node(id).pose;
    CHECK(std::hypot(p.x - 3.2, p.y) > 0.5);
  }
}

TEST_CASE("densify keeps segments under the step length") {
  using topograph::Pose;
  const metrics::Trajectory a = densify({{0, 0, 0}, {1, 0, 0}}, 0.25);
  REQUIRE(a.poses.size() == 5);
  CHECK(a.poses[1] == metrics::Point2{0.25, 0.0});
  CHECK(a.poses[4] == metrics::Point2{1.0, 0.0});

  // A leg exactly one step long gains no interior points.
  CHECK(densify({{0, 0, 0}, {0.25, 0, 0}}, 0.25).poses.size() == 2);
  // A slightly longer one splits in half.
  const metrics::Trajectory b = densify({{0, 0, 0}, {0.26, 0, 0}}, 0.25);
  REQUIRE(b.poses.size() == 3);
  CHECK(b.poses[1][0] == doctest::Approx(0.13).epsilon(1e-12));

  CHECK(densify({{2, 3, 1}}, 0.25).poses.size() == 1);
  CHECK(densify({{2, 3, 1}, {2, 3, 9}}, 0.25).poses.size() == 2);

  const metrics::Trajectory c =
      densify({{0, 0, 0}, {1.1, 0, 0}, {1.1, 2.3, 0}}, 0.25);
  for (std::size_t i = 1; i < c.poses.size(); ++i)
    CHECK(metrics::euclidean(c.poses[i - 1], c.poses[i]) <= 0.25 + 1e-9);
  CHECK(c.poses.front() == metrics::Point2{0.0, 0.0});
  CHECK(c.poses.back() == metrics::Point2{1.1, 2.3});

  CHECK_THROWS_AS(densify({}, 0.25), DomainError);
  CHECK_THROWS_AS(densify({{0, 0, 0}}, 0.0), DomainError);
}

TEST_CASE("greedy episode walks the corridor to the goal") {
  const synthscene::Scenario scenario = synthscene::preset_scenario("corridor");
  PipelineConfig cfg;
  cfg.n_pts = 64;
  cfg.d = 16;
  const FeatureTable ft = FeatureTable::make(cfg.d, 11);
  encoder::EncoderParams params = encoder::init_params(cfg.d, 5);

  Policy policy;  // greedy
  EpisodeOptions opts;
  opts.intrinsics = small_intrinsics();

  std::size_t hook_calls = 0;
  opts.step_hook = [&hook_calls](const topograph::TopoGraph& g) {
    ++hook_calls;
    CHECK(g.node_count() > 1);
  };

  const EpisodeResult res = run_episode(scenario, params, cfg, policy, ft, opts);
  CHECK(res.scores.sr == 1);
  CHECK(res.scores.osr == 1);
  CHECK_FALSE(res.stuck);
  CHECK(res.steps <= 6);
  CHECK(res.steps >= 1);
  CHECK(hook_calls == res.steps);
  CHECK(res.node_poses.size() == res.steps + 1);
  CHECK(res.l_star == doctest::Approx(11.0).epsilon(0.01));
  CHECK(res.scores.id == "corridor");

  // The trajectory is the node polyline at 0.25 m granularity and the
  // reported length is its length, not the node-hop sum.
  CHECK(res.trajectory.poses.front() ==
        metrics::Point2{scenario.start.x, scenario.start.y});
  for (std::size_t i = 1; i < res.trajectory.poses.size(); ++i)
    CHECK(metrics::euclidean(res.trajectory.poses[i - 1],
                             res.trajectory.poses[i]) <= 0.25 + 1e-9);
  CHECK(res.scores.tl == metrics::trajectory_length(res.trajectory));
  CHECK(res.scores.ne <= metrics::kSuccessRadius);
  CHECK(res.scores.spl > 0.0);

  REQUIRE(res.step_log.size() == res.steps);
  for (std::size_t i = 0; i < res.steps; ++i) {
    const auto& rec = res.step_log[i];
    CHECK(rec["step"] == i);
    CHECK(rec["candidates"].get<std::size_t>() >= 1);
    CHECK(rec["frontier"].get<std::size_t>() >= 1);
    CHECK(rec["jump"].get<double>() <= cfg.d_max + 1e-9);
  }
}

TEST_CASE("a step budget of zero scores the starting pose") {
  const synthscene::Scenario scenario = synthscene::preset_scenario("corridor");
  PipelineConfig cfg;
  cfg.n_pts = 32;
  cfg.d = 8;
  const FeatureTable ft = FeatureTable::make(cfg.d, 11);
  encoder::EncoderParams params = encoder::init_params(cfg.d, 5);
  EpisodeOptions opts;
  opts.intrinsics = small_intrinsics();
  opts.max_steps = 0;

  const EpisodeResult res =
      run_episode(scenario, params, cfg, Policy{}, ft, opts);
  CHECK(res.steps == 0);
  CHECK_FALSE(res.stuck);
  CHECK(res.trajectory.poses.size() == 1);
  CHECK(res.scores.tl == 0.0);
  CHECK(res.scores.sr == 0);
  CHECK(res.scores.spl == 0.0);
  CHECK(res.step_log.empty());
}

TEST_CASE("an episode with no viable candidates reports stuck") {
  // A box ring 0.4 m out defeats the minimum open-depth rule in every
  // view, but a 0.2 m slot (off any view axis) keeps the goal reachable
  // on the occupancy grid, so the episode starts and then strands.
  synthscene::Scenario scenario;
  scenario.name = "ringed";
  scenario.scene = open_scene(4.0);
  scenario.scene.boxes = {
      {{-0.6, -0.6, 0.0}, {-0.4, 0.6, 2.5}},   // west
      {{-0.6, 0.4, 0.0}, {0.6, 0.6, 2.5}},     // north
      {{-0.6, -0.6, 0.0}, {0.6, -0.4, 2.5}},   // south
      {{0.4, -0.6, 0.0}, {0.6, 0.1, 2.5}},     // east, below the slot
      {{0.4, 0.3, 0.0}, {0.6, 0.6, 2.5}},      // east, above the slot
  };
  scenario.start = {0.0, 0.0, 0.0};
  scenario.goal = {3.5, 0.2};

  PipelineConfig cfg;
  cfg.n_pts = 32;
  cfg.d = 8;
  const FeatureTable ft = FeatureTable::make(cfg.d, 11);
  encoder::EncoderParams params = encoder::init_params(cfg.d, 5);
  EpisodeOptions opts;
  opts.intrinsics = small_intrinsics();

  const EpisodeResult res =
      run_episode(scenario, params, cfg, Policy{}, ft, opts);
  CHECK(res.stuck);
  CHECK(res.steps == 0);
  CHECK(res.scores.sr == 0);
  CHECK(res.trajectory.poses.size() == 1);
}

TEST_CASE("unreachable goals are rejected up front") {
  synthscene::Scenario scenario;
  scenario.name = "walled";
  scenario.scene = open_scene(6.0);
  // Full-width wall between start and goal.
  scenario.scene.boxes = {{{2.0, -6.0, 0.0}, {2.5, 6.0, 2.5}}};
  scenario.start = {0.0, 0.0, 0.0};
  scenario.goal = {5.0, 0.0};

  PipelineConfig cfg;
  cfg.n_pts = 32;
  cfg.d = 8;
  const FeatureTable ft = FeatureTable::make(cfg.d, 11);
  encoder::EncoderParams params = encoder::init_params(cfg.d, 5);
  CHECK_THROWS_AS(run_episode(scenario, params, cfg, Policy{}, ft, {}),
                  DomainError);
}

TEST_CASE("episodes are reproducible") {
  const synthscene::Scenario scenario = synthscene::preset_scenario("corridor");
  PipelineConfig cfg;
  cfg.n_pts = 32;
  cfg.d = 8;
  const FeatureTable ft = FeatureTable::make(cfg.d, 11);
  EpisodeOptions opts;
  opts.intrinsics = small_intrinsics();

  Policy policy;
  policy.kind = PolicyKind::Random;
  policy.seed = 3;

  encoder::EncoderParams pa = encoder::init_params(cfg.d, 5);
  encoder::EncoderParams pb = encoder::init_params(cfg.d, 5);
  opts.max_steps = 10;
  const EpisodeResult a = run_episode(scenario, pa, cfg, policy, ft, opts);
  const EpisodeResult b = run_episode(scenario, pb, cfg, policy, ft, opts);
  CHECK(episode_json(a.scores).dump() == episode_json(b.scores).dump());
  CHECK(a.step_log.dump() == b.step_log.dump());
  // Eval-mode encoding leaves the parameters untouched.
  CHECK(pa.lambda == 0.0);
  CHECK(pa.bn1.running_mean == pb.bn1.running_mean);

  Policy other = policy;
  other.seed = 4;
  encoder::EncoderParams pc = encoder::init_params(cfg.d, 5);
  const EpisodeResult c = run_episode(scenario, pc, cfg, other, ft, opts);
  CHECK(a.step_log.dump() != c.step_log.dump());
}

TEST_CASE("scripted policies follow the frontier indices exactly") {
  const synthscene::Scenario scenario = synthscene::preset_scenario("corridor");
  PipelineConfig cfg;
  cfg.n_pts = 32;
  cfg.d = 8;
  const FeatureTable ft = FeatureTable::make(cfg.d, 11);
  EpisodeOptions opts;
  opts.intrinsics = small_intrinsics();
  opts.max_steps = 2;

  Policy scripted;
  scripted.kind = PolicyKind::Scripted;
  scripted.script = {0, 0};
  encoder::EncoderParams params = encoder::init_params(cfg.d, 5);
  const EpisodeResult res =
      run_episode(scenario, params, cfg, scripted, ft, opts);
  CHECK(res.steps == 2);
  for (std::size_t i = 0; i < res.steps; ++i) {
    // Index 0 always picks the lowest ghost id on the frontier.
    CHECK(res.step_log[i]["selected"].get<topograph::NodeId>() ==
          res.step_log[i]["step"].get<std::size_t>() + 2);
  }

  // Too short a script, then an index past the frontier.
  Policy exhausted = scripted;
  exhausted.script = {0};
  encoder::EncoderParams p2 = encoder::init_params(cfg.d, 5);
  CHECK_THROWS_AS(run_episode(scenario, p2, cfg, exhausted, ft, opts),
                  ConfigError);
  Policy wild = scripted;
  wild.script = {999, 999};
  encoder::EncoderParams p3 = encoder::init_params(cfg.d, 5);
  CHECK_THROWS_AS(run_episode(scenario, p3, cfg, wild, ft, opts), ConfigError);
}

TEST_CASE("toy dataset is deterministic and config-agnostic in its labels") {
  ToyTaskSpec spec;
  spec.n_samples = 120;
  spec.seed = 7;

  PipelineConfig z3d;
  z3d.n_pts = 48;
  z3d.d = 8;
  PipelineConfig keep = z3d;
  keep.truncation = Truncation::None;

  const std::vector<ToySample> a = toy_dataset(spec, z3d);
  const std::vector<ToySample> b = toy_dataset(spec, z3d);
  const std::vector<ToySample> c = toy_dataset(spec, keep);
  REQUIRE(a.size() == 120);
  REQUIRE(b.size() == 120);
  REQUIRE(c.size() == 120);

  double blocked = 0.0;
  bool clouds_match = true, labels_match = true;
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].cloud.size() == z3d.n_pts);
    CHECK(c[i].cloud.size() == keep.n_pts);
    CHECK(a[i].bucket >= 0);
    CHECK(a[i].bucket < 12);
    blocked += a[i].label;
    if (a[i].label != b[i].label || a[i].bucket != b[i].bucket)
      labels_match = false;
    // Labels come from the scene geometry, not from the cloud config.
    if (a[i].label != c[i].label) labels_match = false;
    for (std::size_t k = 0; k < a[i].cloud.points.size(); ++k) {
      const auto& p = a[i].cloud.points[k];
      const auto& q = b[i].cloud.points[k];
      if (p.x != q.x || p.y != q.y || p.z != q.z) clouds_match = false;
    }
  }
  CHECK(labels_match);
  CHECK(clouds_match);
  const double balance = blocked / static_cast<double>(a.size());
  CHECK(balance >= 0.25);
  CHECK(balance <= 0.55);

  ToyTaskSpec none = spec;
  none.n_samples = 0;
  CHECK_THROWS_AS(toy_dataset(none, z3d), ConfigError);
}

TEST_CASE("toy training moves the loss and opens the gate") {
  ToyTaskSpec spec;
  spec.n_samples = 320;
  spec.seed = 7;
  spec.iters = 100;
  spec.batch = 16;

  PipelineConfig cfg;
  cfg.n_pts = 64;
  cfg.d = 32;

  const ToyResult res = train_toy(spec, cfg);
  CHECK(res.iters_run == 100);
  REQUIRE(res.loss_history.size() == res.iters_run);
  CHECK(res.label_balance >= 0.25);
  CHECK(res.label_balance <= 0.55);
  CHECK(res.baseline_accuracy >= 0.0);
  CHECK(res.baseline_accuracy <= 1.0);
  CHECK(res.train_accuracy >= 0.0);
  CHECK(res.train_accuracy <= 1.0);
  CHECK(res.val_accuracy >= 0.0);
  CHECK(res.val_accuracy <= 1.0);

  double head = 0.0, tail = 0.0;
  for (std::size_t i = 0; i < 10; ++i) {
    head += res.loss_history[i];
    tail += res.loss_history[res.loss_history.size() - 10 + i];
  }
  CHECK(tail < head);
  // Optimization must have moved the gate off its zero initialization.
  CHECK(res.params.lambda != 0.0);
}

TEST_CASE("toy training validates its knobs before working") {
  PipelineConfig cfg;
  cfg.n_pts = 16;
  cfg.d = 8;
  ToyTaskSpec spec;
  spec.n_samples = 8;

  ToyTaskSpec bad = spec;
  bad.batch = 0;
  CHECK_THROWS_AS(train_toy(bad, cfg), ConfigError);
  bad = spec;
  bad.iters = 0;
  CHECK_THROWS_AS(train_toy(bad, cfg), ConfigError);
  bad = spec;
  bad.lr = 0.0;
  CHECK_THROWS_AS(train_toy(bad, cfg), ConfigError);
  bad = spec;
  bad.holdout_fraction = 0.0;
  CHECK_THROWS_AS(train_toy(bad, cfg), ConfigError);
  bad = spec;
  bad.holdout_fraction = 1.0;
  CHECK_THROWS_AS(train_toy(bad, cfg), ConfigError);
}

TEST_CASE("episode json freezes the record layout") {
  metrics::EpisodeMetrics m;
  m.id = "ep";
  m.tl = 8.0;
  m.ne = 2.0;
  m.sr = 1;
  m.osr = 1;
  m.spl = 0.5;
  m.ndtw = 0.25;
  m.sdtw = 0.25;
  const nlohmann::ordered_json j = episode_json(m);
  std::vector<std::string> keys;
  for (const auto& item : j.items()) keys.push_back(item.key());
  CHECK(keys == std::vector<std::string>{"id", "tl", "ne", "sr", "osr", "spl",
                                         "ndtw", "sdtw"});
  CHECK(j["tl"] == 8.0);
  CHECK(j["sr"] == 1);
}

TEST_CASE("eval suite emits stable jsonl") {
  PipelineConfig cfg;
  cfg.n_pts = 32;
  cfg.d = 8;
  const FeatureTable ft = FeatureTable::make(cfg.d, 11);

  EvalOptions opts;
  opts.presets = {"corridor"};
  opts.seeds = 2;
  opts.max_steps = 10;
  opts.intrinsics = small_intrinsics();

  encoder::EncoderParams pa = encoder::init_params(cfg.d, 5);
  const EvalResult a = eval_suite(pa, cfg, ft, opts);
  REQUIRE(a.episodes.size() == 2);
  CHECK(a.episodes[0].id == "corridor-0");
  CHECK(a.episodes[1].id == "corridor-1");
  CHECK(a.summary.episodes == 2);
  CHECK(a.table == metrics::summary_table(a.summary));

  std::size_t lines = 0;
  for (const char ch : a.jsonl)
    if (ch == '\n') ++lines;
  CHECK(lines == 2);
  // Every line parses back into the frozen record shape.
  std::size_t start = 0;
  for (std::size_t i = 0; i < a.jsonl.size(); ++i) {
    if (a.jsonl[i] != '\n') continue;
    const json rec = json::parse(a.jsonl.substr(start, i - start));
    CHECK(rec.size() == 8);
    CHECK(rec.contains("id"));
    CHECK(rec.contains("ndtw"));
    start = i + 1;
  }

  encoder::EncoderParams pb = encoder::init_params(cfg.d, 5);
  const EvalResult b = eval_suite(pb, cfg, ft, opts);
  CHECK(a.jsonl == b.jsonl);
  CHECK(a.table == b.table);

  EvalOptions none = opts;
  none.seeds = 0;
  CHECK_THROWS_AS(eval_suite(pa, cfg, ft, none), ConfigError);
}

TEST_CASE("eval suite defaults to the four benchmark scenes") {
  PipelineConfig cfg;
  cfg.n_pts = 32;
  cfg.d = 8;
  const FeatureTable ft = FeatureTable::make(cfg.d, 11);
  encoder::EncoderParams params = encoder::init_params(cfg.d, 5);

  EvalOptions opts;
  opts.seeds = 1;
  opts.max_steps = 8;
  opts.intrinsics = small_intrinsics();

  const EvalResult res = eval_suite(params, cfg, ft, opts);
  REQUIRE(res.episodes.size() == 4);
  CHECK(res.episodes[0].id == "corridor-0");
  CHECK(res.episodes[1].id == "t_junction-0");
  CHECK(res.episodes[2].id == "crossing-0");
  CHECK(res.episodes[3].id == "room_clutter-0");
  CHECK(res.summary.episodes == 4);
}
