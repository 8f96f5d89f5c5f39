#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "lcg/geometry.hpp"

namespace lcg::synthscene {

// Camera mounting height above the ground plane, meters.
constexpr double kCameraHeight = 1.25;
// Depth beyond this renders as invalid.
constexpr double kFarPlane = 10.0;
// Panorama discretization: 12 views, 30 degrees apart.
constexpr int kViewCount = 12;
constexpr double kViewStep = 0.52359877559829887307710723054658;  // pi/6

struct Vec3 {
  double x = 0.0, y = 0.0, z = 0.0;
};

// Axis-aligned box obstacle.
struct Box {
  Vec3 min;
  Vec3 max;
};

struct Rect {
  double x0 = 0.0, y0 = 0.0, x1 = 0.0, y1 = 0.0;
};

// World: a ground plane at ground_z, axis-aligned boxes, rectangular
// bounds. +z is up; agents travel in the xy plane.
struct Scene {
  Rect bounds;
  double ground_z = 0.0;
  std::vector<Box> boxes;
};

struct AgentPose {
  double x = 0.0;
  double y = 0.0;
  double theta = 0.0;  // radians, 0 = +x, counter-clockwise
};

// Z-depth render from the agent's camera (height kCameraHeight above
// the ground) looking along theta + heading_offset with zero pitch.
// Stored values are distances along the optical axis; pixels beyond
// kFarPlane or hitting nothing are NaN. Throws DomainError when the
// camera sits inside a box.
geometry::DepthMap render_depth(const Scene& scene, const AgentPose& pose,
                                const geometry::CameraIntrinsics& intrinsics,
                                double heading_offset = 0.0,
                                bool include_ground = true);

// 12 views at offsets k * 30 degrees, k = 0..11.
std::vector<geometry::DepthMap> panorama(
    const Scene& scene, const AgentPose& pose,
    const geometry::CameraIntrinsics& intrinsics);

struct Candidate {
  AgentPose pose;
  int direction_index = 0;  // panorama view the candidate came from
};

// Depth-driven waypoint heuristic. Per view: z_bar = 10th-percentile
// depth of the central 32x32 patch (invalid counted as the far plane);
// views with z_bar > kMinOpenDepth emit a candidate at
// min(z_bar - kWallMargin, d_max) along the view heading. Candidates
// with less than kWallMargin clearance to a box footprint, with a
// straight approach crossing a footprint inflated by kApproachMargin,
// or outside the scene bounds are discarded.
std::vector<Candidate> propose_candidates(
    const Scene& scene, const std::vector<geometry::DepthMap>& views,
    const AgentPose& pose, double d_max);

constexpr double kMinOpenDepth = 0.5;
constexpr double kWallMargin = 0.3;
constexpr double kApproachMargin = 0.2;

// 2D helpers shared with the proposer.
double footprint_distance(const Box& box, double px, double py);
bool segment_hits_footprint(const Box& box, double inflate, double ax,
                            double ay, double bx, double by);

struct OccupancyGrid {
  double resolution = 0.1;
  double x0 = 0.0, y0 = 0.0;  // world position of cell (0, 0) corner
  std::size_t nx = 0, ny = 0;
  std::vector<char> blocked;  // row-major, ny rows of nx

  bool cell_blocked(std::size_t ix, std::size_t iy) const {
    return blocked[iy * nx + ix] != 0;
  }
  std::array<double, 2> center(std::size_t ix, std::size_t iy) const {
    return {x0 + (static_cast<double>(ix) + 0.5) * resolution,
            y0 + (static_cast<double>(iy) + 0.5) * resolution};
  }
};

// Rasterizes the scene bounds; a cell is blocked iff its center lies
// inside some box footprint. Throws DomainError on a non-positive
// resolution or empty bounds.
OccupancyGrid occupancy(const Scene& scene, double resolution);

struct GeodesicResult {
  // +infinity when no path exists.
  double length = 0.0;
  // Cell-center polyline from start cell to goal cell; empty when
  // disconnected.
  std::vector<std::array<double, 2>> path;
};

// 8-connected A* shortest path (straight moves cost resolution,
// diagonals sqrt(2) * resolution, no corner cutting). Start/goal snap
// to their containing cells; a blocked endpoint raises DomainError.
GeodesicResult geodesic(const OccupancyGrid& grid, std::array<double, 2> a,
                        std::array<double, 2> b);

// A named scene plus canonical start and goal.
struct Scenario {
  std::string name;
  Scene scene;
  AgentPose start;
  std::array<double, 2> goal{0.0, 0.0};
};

// Presets: "open", "corridor", "t_junction", "crossing",
// "room_clutter" (seeded box placement; the seed only matters there).
Scenario preset_scenario(const std::string& name, std::uint64_t seed = 0);
std::vector<std::string> eval_preset_names();

// JSON i/o. Scene files carry {bounds, ground_z, boxes} and optionally
// {start, goal}; unknown keys are rejected.
Scenario load_scenario(const std::string& path);
void save_scenario(const Scenario& scenario, const std::string& path);

}  // namespace lcg::synthscene
