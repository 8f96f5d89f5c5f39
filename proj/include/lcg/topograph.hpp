#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "lcg/encoder.hpp"

namespace lcg::topograph {

using NodeId = std::uint64_t;

enum class NodeKind { Current, Visited, Ghost };

std::string to_string(NodeKind kind);

struct Pose {
  double x = 0.0;
  double y = 0.0;
  double theta = 0.0;
};

double pose_distance(const Pose& a, const Pose& b);

struct TopoNode {
  NodeId id = 0;
  NodeKind kind = NodeKind::Ghost;
  Pose pose;
  encoder::FeatureVector base_feature;
  // Present only between an enhancement write and the next move.
  std::optional<std::vector<double>> enhancement;
};

struct GhostCandidate {
  Pose pose;
  encoder::FeatureVector base_feature;
};

// Navigation graph with one Current node, Visited history and Ghost
// frontier. Node kinds only ever move Ghost -> Current -> Visited.
class TopoGraph {
 public:
  // Fresh graph holding a single Current node at the start pose.
  static TopoGraph init(const Pose& start,
                        const encoder::FeatureVector& base_feature);

  // Inserts ghost candidates, each edged to the Current node with the
  // Euclidean pose distance as length. A candidate within kMergeRadius
  // of an existing Ghost merges into it (no new node, base feature
  // kept, edge to Current ensured). Returns one node id per candidate
  // in input order.
  std::vector<NodeId> add_ghosts(const std::vector<GhostCandidate>& candidates);

  // Writes enhancement vectors. Every key must be a Ghost adjacent to
  // the Current node (ScopeError otherwise); vector length must match
  // the node's base feature (ShapeError). An empty map is a no-op.
  void enhance_local(const std::map<NodeId, std::vector<double>>& enhancements);

  // Unchecked write used by the global-scope ablation only: no
  // adjacency requirement, target must still be a Ghost.
  void enhance_unchecked(NodeId id, const std::vector<double>& enhancement);

  // Promotes a Ghost to Current. The old Current becomes Visited and
  // every enhancement in the graph is dropped, the promoted node's
  // included, so geometric context never leaks across moves.
  void select_and_move(NodeId target);

  // base + enhancement when present, base otherwise.
  encoder::FeatureVector effective_feature(NodeId id) const;

  // All Ghost ids, ascending.
  std::vector<NodeId> frontier() const;

  const TopoNode& node(NodeId id) const;
  NodeId current() const { return current_; }
  const Pose& current_pose() const;
  std::size_t node_count() const { return nodes_.size(); }
  std::size_t edge_count() const { return edges_.size(); }
  std::uint64_t steps() const { return steps_; }

  bool has_edge(NodeId a, NodeId b) const;
  double edge_length(NodeId a, NodeId b) const;
  std::vector<NodeId> neighbors(NodeId id) const;

  // Ordered by id; iteration is deterministic.
  const std::map<NodeId, TopoNode>& nodes() const { return nodes_; }
  const std::map<std::pair<NodeId, NodeId>, double>& edges() const {
    return edges_;
  }

  // {step, nodes, edges}; full adds base features and enhancements.
  nlohmann::ordered_json snapshot(bool full = false) const;

  static constexpr double kMergeRadius = 0.05;

 private:
  TopoGraph() = default;
  NodeId insert_node(NodeKind kind, const Pose& pose,
                     const encoder::FeatureVector& base_feature);
  void add_edge(NodeId a, NodeId b);
  TopoNode& node_mut(NodeId id);

  std::map<NodeId, TopoNode> nodes_;
  std::map<std::pair<NodeId, NodeId>, double> edges_;
  NodeId next_id_ = 1;
  NodeId current_ = 0;
  std::uint64_t steps_ = 0;
};

}  // namespace lcg::topograph
