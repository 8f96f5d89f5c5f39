// Command line front end for the lcg library: depth and point cloud
// utilities, encoder tools, synthetic scenes, episode rollouts, the toy
// trainer and the evaluation suite.
//
// Exit codes: 0 success, 2 configuration or input error, 3 numeric
// failure, 4 episode terminated stuck.

#include <cmath>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "lcg/encoder.hpp"
#include "lcg/errors.hpp"
#include "lcg/geometry.hpp"
#include "lcg/harness.hpp"
#include "lcg/metrics.hpp"
#include "lcg/rng.hpp"
#include "lcg/synthscene.hpp"
#include "lcg/topograph.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitNumeric = 3;
constexpr int kExitStuck = 4;

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw lcg::ConfigError("cannot open " + path + " for writing");
  out << text;
}

lcg::encoder::EncoderParams params_for(const std::string& ckpt_path,
                                       std::size_t d, std::uint64_t seed) {
  if (!ckpt_path.empty()) return lcg::encoder::load_checkpoint(ckpt_path);
  return lcg::encoder::init_params(d, seed);
}

lcg::harness::PipelineConfig config_for(const std::string& path) {
  if (path.empty()) return {};
  return lcg::harness::load_config(path);
}

lcg::synthscene::Scenario scenario_for(const std::string& file,
                                       const std::string& preset,
                                       std::uint64_t seed) {
  if (!file.empty() && !preset.empty())
    throw lcg::ConfigError("give either --scenario or --preset, not both");
  if (!file.empty()) return lcg::synthscene::load_scenario(file);
  if (!preset.empty()) return lcg::synthscene::preset_scenario(preset, seed);
  throw lcg::ConfigError("an episode needs --scenario or --preset");
}

std::vector<std::size_t> parse_script(const std::string& text) {
  std::vector<std::size_t> script;
  std::stringstream ss(text);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (tok.empty()) continue;
    try {
      script.push_back(static_cast<std::size_t>(std::stoull(tok)));
    } catch (const std::exception&) {
      throw lcg::ConfigError("bad script entry '" + tok + "'");
    }
  }
  if (script.empty()) throw lcg::ConfigError("the script has no entries");
  return script;
}

lcg::harness::Policy policy_for(const std::string& name, std::uint64_t seed,
                                const std::string& script) {
  lcg::harness::Policy p;
  p.seed = seed;
  if (!script.empty()) {
    p.kind = lcg::harness::PolicyKind::Scripted;
    p.script = parse_script(script);
    return p;
  }
  if (name == "greedy") {
    p.kind = lcg::harness::PolicyKind::Greedy;
  } else if (name == "random") {
    p.kind = lcg::harness::PolicyKind::Random;
  } else {
    throw lcg::ConfigError("unknown policy '" + name +
                           "' (expected greedy or random)");
  }
  return p;
}

// --- subcommand bodies -----------------------------------------------------

struct ProjectArgs {
  std::string in, out;
};

int run_project(const ProjectArgs& a) {
  const lcg::geometry::DepthMap depth = lcg::geometry::read_dpf(a.in);
  const lcg::geometry::PointCloud pc = lcg::geometry::project_depth(depth);
  if (!a.out.empty()) lcg::geometry::write_xyz(pc, a.out);
  std::cout << pc.points.size() << " points from " << depth.intrinsics.width
            << "x" << depth.intrinsics.height << " depth\n";
  return kExitOk;
}

struct TruncateArgs {
  std::string in, out, mode = "z3d";
  double d_max = 3.0;
};

int run_truncate(const TruncateArgs& a) {
  const lcg::geometry::PointCloud pc = lcg::geometry::read_xyz(a.in);
  lcg::geometry::PointCloud kept;
  if (a.mode == "z3d") {
    kept = lcg::geometry::truncate_z(pc, a.d_max);
  } else if (a.mode == "sphere_ablation") {
    // Route through the pipeline so the radial variant stays in one place.
    kept.from_empty = pc.from_empty;
    const double r2 = a.d_max * a.d_max;
    for (const auto& p : pc.points)
      if (p.x * p.x + p.y * p.y + p.z * p.z <= r2) kept.points.push_back(p);
  } else {
    throw lcg::ConfigError("unknown truncation mode '" + a.mode + "'");
  }
  lcg::geometry::write_xyz(kept, a.out);
  std::cout << kept.points.size() << " of " << pc.points.size()
            << " points kept\n";
  return kExitOk;
}

struct FpsArgs {
  std::string in, out;
  std::size_t n = 256;
  bool fix = false;
};

int run_fps(const FpsArgs& a) {
  const lcg::geometry::PointCloud pc = lcg::geometry::read_xyz(a.in);
  const lcg::geometry::PointCloud sel =
      a.fix ? lcg::geometry::fix_size(pc, a.n)
            : lcg::geometry::farthest_point_sample(pc, a.n);
  lcg::geometry::write_xyz(sel, a.out);
  std::cout << sel.points.size() << " points selected\n";
  return kExitOk;
}

struct EncodeArgs {
  std::string cloud, ckpt, out;
  std::size_t d = 768;
  std::size_t n_pts = 256;
  std::uint64_t seed = 0;
};

int run_encode(const EncodeArgs& a) {
  lcg::encoder::EncoderParams params = params_for(a.ckpt, a.d, a.seed);
  const lcg::geometry::PointCloud raw = lcg::geometry::read_xyz(a.cloud);
  const lcg::geometry::PointCloud fixed = lcg::geometry::fix_size(raw, a.n_pts);
  const lcg::encoder::GeomFeature g =
      lcg::encoder::encode(fixed, params, lcg::encoder::Mode::Eval);
  nlohmann::ordered_json j;
  j["n"] = fixed.points.size();
  j["empty"] = g.empty_flag;
  j["geom"] = g.values;
  j["projected"] = lcg::encoder::project_feature(g, params);
  const std::string text = j.dump(2) + "\n";
  if (a.out.empty())
    std::cout << text;
  else
    write_text(a.out, text);
  return kExitOk;
}

struct GradcheckArgs {
  std::size_t n = 8;
  std::size_t d = 12;
  std::uint64_t seed = 1;
  double step = 1e-5;
  double tol = 1e-4;
};

int run_gradcheck(const GradcheckArgs& a) {
  lcg::Rng rng(a.seed);
  lcg::geometry::PointCloud pc;
  for (std::size_t i = 0; i < a.n; ++i)
    pc.points.push_back({rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0),
                         rng.uniform(0.2, 2.0)});
  lcg::encoder::EncoderParams params = lcg::encoder::init_params(a.d, a.seed);
  // A nonzero gate makes every tensor feed the loss. Both scales stay
  // small on purpose: biases feeding a normalizer have exactly-zero
  // true gradients, so their difference quotient is pure rounding
  // noise, and that noise must land below the tolerance floor.
  params.lambda = 0.01;
  std::vector<double> v_ghost(a.d);
  for (double& v : v_ghost) v = rng.normal(0.0, 0.01);
  const lcg::encoder::GradCheckReport rep =
      lcg::encoder::grad_check(pc, params, v_ghost, a.step, a.tol);
  for (const auto& e : rep.entries)
    std::cout << "  " << e.tensor << "  max rel err " << e.max_rel_err << "\n";
  std::cout << (rep.pass ? "PASS" : "FAIL") << "  overall " << rep.max_rel_err
            << " (tol " << a.tol << ")\n";
  if (!rep.pass) return kExitNumeric;
  return kExitOk;
}

struct SceneArgs {
  std::string preset = "open";
  std::uint64_t seed = 0;
  std::string out, depth_out;
  int view = 0;
};

int run_scene(const SceneArgs& a) {
  const lcg::synthscene::Scenario sc =
      lcg::synthscene::preset_scenario(a.preset, a.seed);
  if (!a.out.empty()) {
    lcg::synthscene::save_scenario(sc, a.out);
    std::cout << "wrote scenario " << sc.name << " to " << a.out << "\n";
  }
  if (!a.depth_out.empty()) {
    const lcg::geometry::DepthMap dm = lcg::synthscene::render_depth(
        sc.scene, sc.start, lcg::geometry::default_intrinsics(),
        static_cast<double>(a.view) * lcg::synthscene::kViewStep);
    lcg::geometry::write_dpf(dm, a.depth_out);
    std::cout << "wrote view " << a.view << " depth to " << a.depth_out << "\n";
  }
  if (a.out.empty() && a.depth_out.empty())
    std::cout << lcg::synthscene::preset_scenario(a.preset, a.seed).name
              << ": " << sc.scene.boxes.size() << " boxes\n";
  return kExitOk;
}

struct EpisodeArgs {
  std::string scenario, preset, config, ckpt, policy = "greedy", script;
  std::string log_out;
  std::uint64_t seed = 0;
  std::size_t max_steps = 50;
  bool snapshots = false;
};

int run_episode_cmd(const EpisodeArgs& a) {
  const lcg::synthscene::Scenario sc = scenario_for(a.scenario, a.preset, a.seed);
  const lcg::harness::PipelineConfig cfg = config_for(a.config);
  lcg::encoder::EncoderParams params = params_for(a.ckpt, cfg.d, 0);
  if (params.d != cfg.d)
    throw lcg::ConfigError("checkpoint width does not match the config");
  const lcg::harness::FeatureTable features =
      lcg::harness::FeatureTable::make(cfg.d, 42);
  const lcg::harness::Policy policy = policy_for(a.policy, a.seed, a.script);
  lcg::harness::EpisodeOptions opts;
  opts.max_steps = a.max_steps;
  opts.record_snapshots = a.snapshots || !a.log_out.empty();
  const lcg::harness::EpisodeResult ep =
      lcg::harness::run_episode(sc, params, cfg, policy, features, opts);

  nlohmann::ordered_json j = lcg::harness::episode_json(ep.scores);
  j["steps"] = ep.steps;
  j["stuck"] = ep.stuck;
  j["l_star"] = ep.l_star;
  std::cout << j.dump() << "\n";
  if (!a.log_out.empty()) {
    nlohmann::ordered_json log;
    log["scenario"] = sc.name;
    log["config"] = lcg::harness::config_json(cfg);
    log["steps"] = ep.step_log;
    log["snapshots"] = ep.snapshots;
    write_text(a.log_out, log.dump(2) + "\n");
  }
  return ep.stuck ? kExitStuck : kExitOk;
}

struct TrainToyArgs {
  std::string config, out, history_out;
  std::size_t samples = 2000;
  std::uint64_t seed = 7;
  std::size_t iters = 1000;
  std::size_t batch = 16;
  double lr = 1e-3;
};

int run_train_toy(const TrainToyArgs& a) {
  const lcg::harness::PipelineConfig cfg = config_for(a.config);
  lcg::harness::ToyTaskSpec spec;
  spec.n_samples = a.samples;
  spec.seed = a.seed;
  spec.iters = a.iters;
  spec.batch = a.batch;
  spec.lr = a.lr;
  const lcg::harness::ToyResult res = lcg::harness::train_toy(spec, cfg);
  nlohmann::ordered_json j;
  j["iters_run"] = res.iters_run;
  j["label_balance"] = res.label_balance;
  j["baseline_accuracy"] = res.baseline_accuracy;
  j["train_accuracy"] = res.train_accuracy;
  j["val_accuracy"] = res.val_accuracy;
  j["lambda"] = res.params.lambda;
  std::cout << j.dump() << "\n";
  if (!a.out.empty()) lcg::encoder::save_checkpoint(res.params, a.out);
  if (!a.history_out.empty()) {
    nlohmann::ordered_json h;
    h["loss"] = res.loss_history;
    write_text(a.history_out, h.dump() + "\n");
  }
  return kExitOk;
}

struct EvalArgs {
  std::string config, ckpt, preset = "all", policy = "greedy", out;
  std::size_t seeds = 25;
  std::size_t max_steps = 50;
  std::uint64_t seed = 0;
  bool no_table = false;
};

int run_eval(const EvalArgs& a) {
  const lcg::harness::PipelineConfig cfg = config_for(a.config);
  lcg::encoder::EncoderParams params = params_for(a.ckpt, cfg.d, 0);
  if (params.d != cfg.d)
    throw lcg::ConfigError("checkpoint width does not match the config");
  const lcg::harness::FeatureTable features =
      lcg::harness::FeatureTable::make(cfg.d, 42);
  lcg::harness::EvalOptions opts;
  if (a.preset != "all") opts.presets = {a.preset};
  opts.seeds = a.seeds;
  opts.max_steps = a.max_steps;
  opts.policy = policy_for(a.policy, a.seed, "");
  const lcg::harness::EvalResult res =
      lcg::harness::eval_suite(params, cfg, features, opts);
  if (a.out.empty())
    std::cout << res.jsonl;
  else
    write_text(a.out, res.jsonl);
  if (!a.no_table) std::cout << res.table;
  return kExitOk;
}

struct AblateArgs {
  std::string axis = "depth";
  std::string config;
  std::size_t samples = 800;
  std::uint64_t seed = 7;
  std::size_t iters = 400;
  std::size_t seeds = 5;
};

int run_ablate(const AblateArgs& a) {
  const lcg::harness::PipelineConfig base = config_for(a.config);

  // Each variant is the base config with one knob moved.
  std::vector<std::pair<std::string, lcg::harness::PipelineConfig>> variants;
  if (a.axis == "depth") {
    for (const double dm : {3.0, 5.0}) {
      lcg::harness::PipelineConfig c = base;
      c.truncation = lcg::harness::Truncation::Z3D;
      c.d_max = dm;
      variants.emplace_back("z3d d_max=" + std::to_string(dm).substr(0, 3), c);
    }
    lcg::harness::PipelineConfig c = base;
    c.truncation = lcg::harness::Truncation::None;
    variants.emplace_back("no truncation", c);
  } else if (a.axis == "truncation") {
    for (const auto t :
         {lcg::harness::Truncation::Z3D, lcg::harness::Truncation::Crop2D,
          lcg::harness::Truncation::SphereAblation,
          lcg::harness::Truncation::None}) {
      lcg::harness::PipelineConfig c = base;
      c.truncation = t;
      variants.emplace_back(lcg::harness::to_string(t), c);
    }
  } else if (a.axis == "fusion") {
    for (const auto f :
         {lcg::harness::Fusion::Weighted, lcg::harness::Fusion::Direct}) {
      lcg::harness::PipelineConfig c = base;
      c.fusion = f;
      variants.emplace_back(lcg::harness::to_string(f), c);
    }
  } else if (a.axis == "scope") {
    for (const auto s :
         {lcg::harness::Scope::Local, lcg::harness::Scope::Global}) {
      lcg::harness::PipelineConfig c = base;
      c.scope = s;
      variants.emplace_back(lcg::harness::to_string(s), c);
    }
  } else if (a.axis == "points") {
    for (const std::size_t n : {std::size_t{256}, std::size_t{512},
                                std::size_t{1024}}) {
      lcg::harness::PipelineConfig c = base;
      c.n_pts = n;
      variants.emplace_back("n_pts=" + std::to_string(n), c);
    }
  } else {
    throw lcg::ConfigError(
        "unknown axis '" + a.axis +
        "' (expected depth, truncation, fusion, scope or points)");
  }

  if (a.axis == "scope") {
    // Scope changes nothing about the toy task, so compare on episodes.
    for (const auto& [label, cfg] : variants) {
      lcg::encoder::EncoderParams params = lcg::encoder::init_params(cfg.d, 0);
      const lcg::harness::FeatureTable features =
          lcg::harness::FeatureTable::make(cfg.d, 42);
      lcg::harness::EvalOptions opts;
      opts.seeds = a.seeds;
      const lcg::harness::EvalResult res =
          lcg::harness::eval_suite(params, cfg, features, opts);
      std::cout << label << "\n" << res.table;
    }
    return kExitOk;
  }

  std::cout << "variant                 val acc   baseline   iters\n";
  for (const auto& [label, cfg] : variants) {
    lcg::harness::ToyTaskSpec spec;
    spec.n_samples = a.samples;
    spec.seed = a.seed;
    spec.iters = a.iters;
    const lcg::harness::ToyResult res = lcg::harness::train_toy(spec, cfg);
    char line[128];
    std::snprintf(line, sizeof(line), "%-22s %8.3f %10.3f %7zu\n",
                  label.c_str(), res.val_accuracy, res.baseline_accuracy,
                  res.iters_run);
    std::cout << line;
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"depth-to-graph geometric enhancement toolkit"};
  app.require_subcommand(1);

  ProjectArgs project_args;
  CLI::App* project = app.add_subcommand(
      "project", "Back-project a depth file into an XYZ point cloud");
  project->add_option("--in,in", project_args.in, "input .dpf depth file")
      ->required();
  project->add_option("--out,--xyz", project_args.out,
                      "output .xyz file (omit for a summary only)");

  TruncateArgs trunc_args;
  CLI::App* trunc =
      app.add_subcommand("truncate", "Truncate a point cloud by distance");
  trunc->add_option("--in", trunc_args.in, "input .xyz file")->required();
  trunc->add_option("--out", trunc_args.out, "output .xyz file")->required();
  trunc->add_option("--d-max,--dmax", trunc_args.d_max, "distance threshold");
  trunc->add_option("--mode", trunc_args.mode, "z3d or sphere_ablation");

  FpsArgs fps_args;
  CLI::App* fps = app.add_subcommand(
      "fps", "Farthest point sampling (optionally fixed-size output)");
  fps->add_option("--in", fps_args.in, "input .xyz file")->required();
  fps->add_option("--out", fps_args.out, "output .xyz file")->required();
  fps->add_option("--n", fps_args.n, "number of points to keep");
  fps->add_flag("--fix-size", fps_args.fix,
                "pad by cyclic repetition when the cloud is small");

  EncodeArgs encode_args;
  CLI::App* encode =
      app.add_subcommand("encode", "Encode a point cloud into features");
  encode->add_option("--cloud", encode_args.cloud, "input .xyz file")
      ->required();
  encode->add_option("--ckpt", encode_args.ckpt, "encoder checkpoint");
  encode->add_option("--out", encode_args.out, "output JSON (default stdout)");
  encode->add_option("--d", encode_args.d, "projection width without a checkpoint");
  encode->add_option("--n-pts", encode_args.n_pts, "fixed cloud size");
  encode->add_option("--seed", encode_args.seed, "init seed without a checkpoint");

  GradcheckArgs grad_args;
  CLI::App* grad = app.add_subcommand(
      "gradcheck", "Finite-difference check of the encoder gradients");
  grad->add_option("--n", grad_args.n, "points in the probe cloud");
  grad->add_option("--d", grad_args.d, "projection width");
  grad->add_option("--seed", grad_args.seed, "probe seed");
  grad->add_option("--step", grad_args.step, "finite difference step");
  grad->add_option("--tol", grad_args.tol, "relative error tolerance");

  SceneArgs scene_args;
  CLI::App* scene =
      app.add_subcommand("scene", "Export preset scenarios and depth renders");
  scene->add_option("--preset", scene_args.preset,
                    "open, corridor, t_junction, crossing or room_clutter");
  scene->add_option("--seed", scene_args.seed, "seed for seeded presets");
  scene->add_option("--out", scene_args.out, "scenario JSON output");
  scene->add_option("--depth", scene_args.depth_out, "render a .dpf view");
  scene->add_option("--view", scene_args.view, "panorama view index 0-11");

  EpisodeArgs ep_args;
  CLI::App* episode =
      app.add_subcommand("episode", "Run one navigation episode");
  episode->add_option("--scenario,--scene", ep_args.scenario,
                      "scenario JSON file");
  episode->add_option("--preset", ep_args.preset, "preset scenario name");
  episode->add_option("--seed", ep_args.seed,
                      "scenario seed, also feeds a random policy");
  episode->add_option("--config,--cfg", ep_args.config,
                      "pipeline config JSON");
  episode->add_option("--ckpt", ep_args.ckpt, "encoder checkpoint");
  episode->add_option("--policy", ep_args.policy, "greedy or random");
  episode->add_option("--script", ep_args.script,
                      "comma-separated frontier indices (overrides --policy)");
  episode->add_option("--max-steps", ep_args.max_steps, "step budget");
  episode->add_option("--log", ep_args.log_out, "write a step/graph log JSON");
  episode->add_flag("--snapshots", ep_args.snapshots,
                    "record a graph snapshot every step");

  TrainToyArgs toy_args;
  CLI::App* toy = app.add_subcommand(
      "train-toy", "Train the encoder on the blocked-vs-open toy task");
  toy->add_option("--config", toy_args.config, "pipeline config JSON");
  toy->add_option("--samples", toy_args.samples, "dataset size");
  toy->add_option("--seed", toy_args.seed, "dataset and init seed");
  toy->add_option("--iters", toy_args.iters, "max optimizer iterations");
  toy->add_option("--batch", toy_args.batch, "minibatch size");
  toy->add_option("--lr", toy_args.lr, "Adam learning rate");
  toy->add_option("--out", toy_args.out, "checkpoint output path");
  toy->add_option("--history", toy_args.history_out, "loss history JSON");

  EvalArgs eval_args;
  CLI::App* eval =
      app.add_subcommand("eval", "Run the preset evaluation suite");
  eval->add_option("--config", eval_args.config, "pipeline config JSON");
  eval->add_option("--ckpt", eval_args.ckpt, "encoder checkpoint");
  eval->add_option("--preset", eval_args.preset, "preset name or 'all'");
  eval->add_option("--seeds", eval_args.seeds, "seeds per preset");
  eval->add_option("--policy", eval_args.policy, "greedy or random");
  eval->add_option("--seed", eval_args.seed, "random policy base seed");
  eval->add_option("--max-steps", eval_args.max_steps, "step budget");
  eval->add_option("--out", eval_args.out, "episode JSONL output");
  eval->add_flag("--no-table", eval_args.no_table, "suppress the summary table");

  AblateArgs ab_args;
  CLI::App* ablate =
      app.add_subcommand("ablate", "Compare pipeline variants along one axis");
  ablate->add_option("--axis", ab_args.axis,
                     "depth, truncation, fusion, scope or points");
  ablate->add_option("--config", ab_args.config, "base pipeline config JSON");
  ablate->add_option("--samples", ab_args.samples, "toy dataset size");
  ablate->add_option("--seed", ab_args.seed, "toy seed");
  ablate->add_option("--iters", ab_args.iters, "toy iterations");
  ablate->add_option("--seeds", ab_args.seeds, "episode seeds for scope");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (project->parsed()) return run_project(project_args);
    if (trunc->parsed()) return run_truncate(trunc_args);
    if (fps->parsed()) return run_fps(fps_args);
    if (encode->parsed()) return run_encode(encode_args);
    if (grad->parsed()) return run_gradcheck(grad_args);
    if (scene->parsed()) return run_scene(scene_args);
    if (episode->parsed()) return run_episode_cmd(ep_args);
    if (toy->parsed()) return run_train_toy(toy_args);
    if (eval->parsed()) return run_eval(eval_args);
    if (ablate->parsed()) return run_ablate(ab_args);
  } catch (const lcg::NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const lcg::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "unexpected error: " << e.what() << "\n";
    return 1;
  }
  return kExitOk;
}
