#include "lcg/topograph.hpp"

#include <algorithm>
#include <cmath>

#include "lcg/errors.hpp"

namespace lcg::topograph {

std::string to_string(NodeKind kind) {
  switch (kind) {
    case NodeKind::Current: return "current";
    case NodeKind::Visited: return "visited";
    case NodeKind::Ghost: return "ghost";
  }
  return "?";
}

double pose_distance(const Pose& a, const Pose& b) {
  const double dx = a.x - b.x, dy = a.y - b.y;
  return std::sqrt(dx * dx + dy * dy);
}

TopoGraph TopoGraph::init(const Pose& start,
                          const encoder::FeatureVector& base_feature) {
  TopoGraph g;
  g.current_ = g.insert_node(NodeKind::Current, start, base_feature);
  return g;
}

NodeId TopoGraph::insert_node(NodeKind kind, const Pose& pose,
                              const encoder::FeatureVector& base_feature) {
  TopoNode n;
  n.id = next_id_++;
  n.kind = kind;
  n.pose = pose;
  n.base_feature = base_feature;
  const NodeId id = n.id;
  nodes_.emplace(id, std::move(n));
  return id;
}

void TopoGraph::add_edge(NodeId a, NodeId b) {
  if (a == b) throw DomainError("add_edge: self loop");
  const auto key = std::minmax(a, b);
  edges_.emplace(std::make_pair(key.first, key.second),
                 pose_distance(node(a).pose, node(b).pose));
}

TopoNode& TopoGraph::node_mut(NodeId id) {
  auto it = nodes_.find(id);
  if (it == nodes_.end())
    throw LookupError("graph: unknown node id " + std::to_string(id));
  return it->second;
}

const TopoNode& TopoGraph::node(NodeId id) const {
  auto it = nodes_.find(id);
  if (it == nodes_.end())
    throw LookupError("graph: unknown node id " + std::to_string(id));
  return it->second;
}

const Pose& TopoGraph::current_pose() const { return node(current_).pose; }

std::vector<NodeId> TopoGraph::add_ghosts(
    const std::vector<GhostCandidate>& candidates) {
  std::vector<NodeId> ids;
  ids.reserve(candidates.size());
  for (const GhostCandidate& c : candidates) {
    // Merge into the nearest existing ghost within the dedup radius,
    // lowest id on distance ties.
    NodeId merged = 0;
    double best = kMergeRadius;
    for (const auto& [id, n] : nodes_) {
      if (n.kind != NodeKind::Ghost) continue;
      const double d = pose_distance(n.pose, c.pose);
      if (d < best) {
        best = d;
        merged = id;
      }
    }
    NodeId id;
    if (merged != 0) {
      id = merged;
    } else {
      id = insert_node(NodeKind::Ghost, c.pose, c.base_feature);
    }
    if (!has_edge(id, current_)) add_edge(id, current_);
    ids.push_back(id);
  }
  return ids;
}

void TopoGraph::enhance_local(
    const std::map<NodeId, std::vector<double>>& enhancements) {
  // Validate the whole batch before writing anything.
  for (const auto& [id, vec] : enhancements) {
    const TopoNode& n = node(id);
    if (n.kind != NodeKind::Ghost)
      throw ScopeError("enhance_local: node " + std::to_string(id) +
                       " is not a ghost");
    if (!has_edge(id, current_))
      throw ScopeError("enhance_local: ghost " + std::to_string(id) +
                       " is not adjacent to the current node");
    if (vec.size() != n.base_feature.values.size())
      throw ShapeError("enhance_local: enhancement length mismatch");
  }
  for (const auto& [id, vec] : enhancements)
    node_mut(id).enhancement = vec;
}

void TopoGraph::enhance_unchecked(NodeId id,
                                  const std::vector<double>& enhancement) {
  TopoNode& n = node_mut(id);
  if (n.kind != NodeKind::Ghost)
    throw ScopeError("enhance_unchecked: node is not a ghost");
  if (enhancement.size() != n.base_feature.values.size())
    throw ShapeError("enhance_unchecked: enhancement length mismatch");
  n.enhancement = enhancement;
}

void TopoGraph::select_and_move(NodeId target) {
  TopoNode& t = node_mut(target);
  if (t.kind != NodeKind::Ghost)
    throw DomainError("select_and_move: target is not a ghost");

  node_mut(current_).kind = NodeKind::Visited;
  t.kind = NodeKind::Current;
  current_ = target;
  // Dual degradation: the promoted node loses its enhancement and so
  // does the bypassed frontier.
  for (auto& [id, n] : nodes_) n.enhancement.reset();
  ++steps_;
}

encoder::FeatureVector TopoGraph::effective_feature(NodeId id) const {
  const TopoNode& n = node(id);
  if (!n.enhancement) return n.base_feature;
  encoder::FeatureVector out = n.base_feature;
  for (std::size_t i = 0; i < out.values.size(); ++i)
    out.values[i] += (*n.enhancement)[i];
  return out;
}

std::vector<NodeId> TopoGraph::frontier() const {
  std::vector<NodeId> out;
  for (const auto& [id, n] : nodes_)
    if (n.kind == NodeKind::Ghost) out.push_back(id);
  return out;
}

bool TopoGraph::has_edge(NodeId a, NodeId b) const {
  const auto key = std::minmax(a, b);
  return edges_.count(std::make_pair(key.first, key.second)) > 0;
}

double TopoGraph::edge_length(NodeId a, NodeId b) const {
  const auto key = std::minmax(a, b);
  auto it = edges_.find(std::make_pair(key.first, key.second));
  if (it == edges_.end()) throw LookupError("graph: no such edge");
  return it->second;
}

std::vector<NodeId> TopoGraph::neighbors(NodeId id) const {
  node(id);  // raises LookupError for unknown ids
  std::vector<NodeId> out;
  for (const auto& [key, len] : edges_) {
    (void)len;
    if (key.first == id) out.push_back(key.second);
    else if (key.second == id) out.push_back(key.first);
  }
  std::sort(out.begin(), out.end());
  return out;
}

nlohmann::ordered_json TopoGraph::snapshot(bool full) const {
  nlohmann::ordered_json j;
  j["step"] = steps_;
  j["nodes"] = nlohmann::ordered_json::array();
  for (const auto& [id, n] : nodes_) {
    nlohmann::ordered_json nj;
    nj["id"] = id;
    nj["kind"] = to_string(n.kind);
    nj["pose"] = {n.pose.x, n.pose.y, n.pose.theta};
    nj["has_enhancement"] = n.enhancement.has_value();
    if (full) {
      nj["base_feature"] = n.base_feature.values;
      if (n.enhancement) nj["enhancement"] = *n.enhancement;
    }
    j["nodes"].push_back(std::move(nj));
  }
  j["edges"] = nlohmann::ordered_json::array();
  for (const auto& [key, len] : edges_)
    j["edges"].push_back({key.first, key.second, len});
  return j;
}

}  // namespace lcg::topograph
