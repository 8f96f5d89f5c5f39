#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lcg/encoder.hpp"
#include "lcg/geometry.hpp"
#include "lcg/metrics.hpp"
#include "lcg/synthscene.hpp"
#include "lcg/topograph.hpp"

namespace lcg::harness {

// Which ghosts receive geometric enhancements. Local is the shipping
// behavior; Global indiscriminately rewrites the whole frontier and
// exists for ablation runs only.
enum class Scope { Local, Global };

// Weighted applies the learnable gate lambda; Direct adds the raw
// projected feature (ablation).
enum class Fusion { Weighted, Direct };

// How depth gets restricted before encoding. Z3D truncates the cloud
// along the optical axis, Crop2D zeroes far pixels before projection,
// SphereAblation cuts on the Euclidean radius (labeled ablation only),
// None keeps everything.
enum class Truncation { Z3D, None, Crop2D, SphereAblation };

std::string to_string(Scope s);
std::string to_string(Fusion f);
std::string to_string(Truncation t);
Scope scope_from_string(const std::string& s);
Fusion fusion_from_string(const std::string& s);
Truncation truncation_from_string(const std::string& s);

struct PipelineConfig {
  double d_max = 3.0;
  std::size_t n_pts = 256;
  std::size_t d = 768;
  Scope scope = Scope::Local;
  Fusion fusion = Fusion::Weighted;
  Truncation truncation = Truncation::Z3D;
  Scope crop2d_scope = Scope::Local;
  double crop2d_threshold = 3.0;

  void validate() const;
};

// Strict JSON parsing: unknown keys, malformed values and bad enum
// strings raise ConfigError.
PipelineConfig parse_config(const nlohmann::json& j);
PipelineConfig load_config(const std::string& path);
nlohmann::ordered_json config_json(const PipelineConfig& cfg);

// Frozen random baseline features, one per 30-degree heading bucket,
// plus the frozen linear readout used by the toy task.
struct FeatureTable {
  std::vector<encoder::FeatureVector> by_bucket;  // 12 vectors of length d
  std::vector<double> readout;                    // d

  static FeatureTable make(std::size_t d, std::uint64_t seed);
  static int bucket_of(double theta);
  const encoder::FeatureVector& for_heading(double theta) const;
};

// Per-episode cache of each ghost's last geometric vector, needed by
// the Global scope ablation to rewrite off-frontier ghosts.
struct PipelineState {
  std::map<topograph::NodeId, std::vector<double>> geom_cache;
};

struct StepResult {
  std::size_t candidates = 0;
  std::vector<topograph::NodeId> ghost_ids;  // one per surviving candidate
};

// One perception-enhancement step at the graph's current node: render
// the panorama, propose candidates, insert ghosts, then run
// depth -> cloud -> truncation -> fixed size -> encoder -> projection
// for each candidate view and write the resulting enhancement vectors
// according to cfg.scope. Eval-mode encoding; params are not mutated.
StepResult step_pipeline(topograph::TopoGraph& graph,
                         const synthscene::Scene& scene,
                         encoder::EncoderParams& params,
                         const PipelineConfig& cfg,
                         const FeatureTable& features,
                         const geometry::CameraIntrinsics& intrinsics,
                         PipelineState& state);

enum class PolicyKind { Greedy, Random, Scripted };

struct Policy {
  PolicyKind kind = PolicyKind::Greedy;
  std::uint64_t seed = 0;                 // Random
  std::vector<std::size_t> script;        // Scripted: frontier indices
};

struct EpisodeOptions {
  std::size_t max_steps = 50;
  bool record_snapshots = false;
  bool full_snapshots = false;
  geometry::CameraIntrinsics intrinsics = geometry::default_intrinsics();
  double grid_resolution = 0.1;
  // Invoked after every pipeline step with the live graph (tests).
  std::function<void(const topograph::TopoGraph&)> step_hook;
};

struct EpisodeResult {
  metrics::EpisodeMetrics scores;
  bool stuck = false;
  std::size_t steps = 0;
  double l_star = 0.0;
  std::vector<topograph::Pose> node_poses;  // visited node sequence
  metrics::Trajectory trajectory;           // densified, 0.25 m steps
  nlohmann::ordered_json step_log;          // per-step selection records
  nlohmann::ordered_json snapshots;         // graph snapshots when enabled
};

// Greedy/Random/Scripted navigation over the live graph: step the
// pipeline, pick a ghost, move, until within the success radius of the
// goal, the frontier empties (stuck) or max_steps runs out. The agent
// teleports between nodes; the trajectory is the node polyline
// discretized into 0.25 m steps. Reference path and shortest-path
// length come from the occupancy-grid geodesic.
EpisodeResult run_episode(const synthscene::Scenario& scenario,
                          encoder::EncoderParams& params,
                          const PipelineConfig& cfg, const Policy& policy,
                          const FeatureTable& features,
                          const EpisodeOptions& opts = {});

// Inserts intermediate poses so no segment exceeds `step` meters.
metrics::Trajectory densify(const std::vector<topograph::Pose>& nodes,
                            double step = 0.25);

// --- toy training task -------------------------------------------------

// Binary blocked-vs-open judgment: a view is blocked when boxes within
// obstacle_range cover at least coverage_threshold of the central
// 32x32 patch. Labels are recomputed from the geometry, never from the
// generator's intent.
struct ToyTaskSpec {
  std::size_t n_samples = 2000;
  std::uint64_t seed = 7;
  std::size_t iters = 1000;
  std::size_t batch = 16;
  double lr = 1e-3;
  double holdout_fraction = 0.25;
  double obstacle_range = 1.5;
  double coverage_threshold = 0.30;
};

struct ToySample {
  geometry::PointCloud cloud;  // after truncation and fix_size
  int label = 0;
  int bucket = 0;
};

// Deterministic scene sampler + label rule; clouds already follow the
// pipeline config. Same seed, same scenes and labels for any config.
std::vector<ToySample> toy_dataset(const ToyTaskSpec& spec,
                                   const PipelineConfig& cfg);

struct ToyResult {
  encoder::EncoderParams params;
  double train_accuracy = 0.0;
  double val_accuracy = 0.0;
  double baseline_accuracy = 0.0;  // frozen readout on v_ghost alone
  double label_balance = 0.0;      // fraction of blocked samples
  std::size_t iters_run = 0;
  std::vector<double> loss_history;  // minibatch loss per iteration
};

// Trains only the encoder stack (MLP, batch norm, W_proj, lambda) with
// Adam on the logistic loss of readout . fuse(v_ghost, g); the bucket
// features and the readout stay frozen. Running stats are calibrated on
// training clouds first, then every optimization step runs against the
// Eval-mode forward pass with those stats frozen, so the trained
// function is the deployed one. lambda = 0 makes iteration 0 predict
// exactly like the frozen baseline.
ToyResult train_toy(const ToyTaskSpec& spec, const PipelineConfig& cfg);

// --- evaluation suite ----------------------------------------------------

struct EvalOptions {
  std::vector<std::string> presets;  // empty = the four eval presets
  std::size_t seeds = 25;
  Policy policy;
  std::size_t max_steps = 50;
  geometry::CameraIntrinsics intrinsics = geometry::default_intrinsics();
};

struct EvalResult {
  std::vector<metrics::EpisodeMetrics> episodes;
  metrics::Summary summary;
  std::string jsonl;  // one JSON object per line, byte-stable
  std::string table;
};

EvalResult eval_suite(encoder::EncoderParams& params, const PipelineConfig& cfg,
                      const FeatureTable& features, const EvalOptions& opts);

nlohmann::ordered_json episode_json(const metrics::EpisodeMetrics& m);

}  // namespace lcg::harness
