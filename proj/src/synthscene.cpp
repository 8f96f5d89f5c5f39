#include "lcg/synthscene.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <queue>

#include <nlohmann/json.hpp>

#include "lcg/errors.hpp"
#include "lcg/rng.hpp"

namespace lcg::synthscene {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

bool inside_box(const Box& b, double x, double y, double z) {
  return x >= b.min.x && x <= b.max.x && y >= b.min.y && y <= b.max.y &&
         z >= b.min.z && z <= b.max.z;
}

// Slab-method ray/AABB intersection; returns the entry parameter or
// +inf on a miss. Rays starting inside return +inf as well (callers
// reject in-box cameras up front).
double ray_box(const Vec3& o, const Vec3& d, const Box& b) {
  double t0 = 0.0, t1 = kInf;
  const double ov[3] = {o.x, o.y, o.z};
  const double dv[3] = {d.x, d.y, d.z};
  const double lo[3] = {b.min.x, b.min.y, b.min.z};
  const double hi[3] = {b.max.x, b.max.y, b.max.z};
  for (int a = 0; a < 3; ++a) {
    if (dv[a] == 0.0) {
      if (ov[a] < lo[a] || ov[a] > hi[a]) return kInf;
      continue;
    }
    const double inv = 1.0 / dv[a];
    double ta = (lo[a] - ov[a]) * inv;
    double tb = (hi[a] - ov[a]) * inv;
    if (ta > tb) std::swap(ta, tb);
    if (ta > t0) t0 = ta;
    if (tb < t1) t1 = tb;
    if (t0 > t1) return kInf;
  }
  return t0 > 0.0 ? t0 : kInf;
}

}  // namespace

geometry::DepthMap render_depth(const Scene& scene, const AgentPose& pose,
                                const geometry::CameraIntrinsics& intrinsics,
                                double heading_offset, bool include_ground) {
  intrinsics.validate();

  const double h = pose.theta + heading_offset;
  const Vec3 origin{pose.x, pose.y, scene.ground_z + kCameraHeight};
  for (const Box& b : scene.boxes)
    if (inside_box(b, origin.x, origin.y, origin.z))
      throw DomainError("render_depth: camera inside a box");

  // Right-handed camera basis: z along the heading, x to the right,
  // y down. A ray through pixel (u, v) has unit forward component, so
  // the ray parameter is directly the z-depth.
  const double ch = std::cos(h), sh = std::sin(h);
  const Vec3 xc{sh, -ch, 0.0};
  const Vec3 yc{0.0, 0.0, -1.0};
  const Vec3 zc{ch, sh, 0.0};

  geometry::DepthMap out;
  out.intrinsics = intrinsics;
  out.values.assign(static_cast<std::size_t>(intrinsics.width) * intrinsics.height,
                    std::numeric_limits<float>::quiet_NaN());

  for (std::uint32_t v = 0; v < intrinsics.height; ++v) {
    const double py = (static_cast<double>(v) - intrinsics.cy) / intrinsics.fy;
    for (std::uint32_t u = 0; u < intrinsics.width; ++u) {
      const double px = (static_cast<double>(u) - intrinsics.cx) / intrinsics.fx;
      const Vec3 dir{px * xc.x + py * yc.x + zc.x,
                     px * xc.y + py * yc.y + zc.y,
                     px * xc.z + py * yc.z + zc.z};
      double t = kInf;
      for (const Box& b : scene.boxes) {
        const double tb = ray_box(origin, dir, b);
        if (tb < t) t = tb;
      }
      if (include_ground && dir.z < 0.0) {
        const double tg = (scene.ground_z - origin.z) / dir.z;
        if (tg > 0.0 && tg < t) t = tg;
      }
      if (t <= kFarPlane)
        out.values[static_cast<std::size_t>(v) * intrinsics.width + u] =
            static_cast<float>(t);
    }
  }
  return out;
}

std::vector<geometry::DepthMap> panorama(
    const Scene& scene, const AgentPose& pose,
    const geometry::CameraIntrinsics& intrinsics) {
  std::vector<geometry::DepthMap> views;
  views.reserve(kViewCount);
  for (int k = 0; k < kViewCount; ++k)
    views.push_back(render_depth(scene, pose, intrinsics, kViewStep * k));
  return views;
}

double footprint_distance(const Box& box, double px, double py) {
  const double dx = std::max({box.min.x - px, 0.0, px - box.max.x});
  const double dy = std::max({box.min.y - py, 0.0, py - box.max.y});
  return std::sqrt(dx * dx + dy * dy);
}

bool segment_hits_footprint(const Box& box, double inflate, double ax,
                            double ay, double bx, double by) {
  // 2D slab clip of the segment parameter range against the inflated
  // rectangle.
  const double lo[2] = {box.min.x - inflate, box.min.y - inflate};
  const double hi[2] = {box.max.x + inflate, box.max.y + inflate};
  const double o[2] = {ax, ay};
  const double d[2] = {bx - ax, by - ay};
  double t0 = 0.0, t1 = 1.0;
  for (int a = 0; a < 2; ++a) {
    if (d[a] == 0.0) {
      if (o[a] < lo[a] || o[a] > hi[a]) return false;
      continue;
    }
    const double inv = 1.0 / d[a];
    double ta = (lo[a] - o[a]) * inv;
    double tb = (hi[a] - o[a]) * inv;
    if (ta > tb) std::swap(ta, tb);
    if (ta > t0) t0 = ta;
    if (tb < t1) t1 = tb;
    if (t0 > t1) return false;
  }
  return true;
}

std::vector<Candidate> propose_candidates(
    const Scene& scene, const std::vector<geometry::DepthMap>& views,
    const AgentPose& pose, double d_max) {
  if (views.size() != static_cast<std::size_t>(kViewCount))
    throw ShapeError("propose_candidates: expected a 12-view panorama");
  if (!(d_max > 0.0)) throw DomainError("propose_candidates: d_max must be positive");

  std::vector<Candidate> out;
  std::vector<float> patch;
  for (int k = 0; k < kViewCount; ++k) {
    const geometry::DepthMap& view = views[k];
    const std::uint32_t w = view.intrinsics.width;
    const std::uint32_t hgt = view.intrinsics.height;

    const std::uint32_t half = 16;
    const std::uint32_t u0 = w / 2 > half ? w / 2 - half : 0;
    const std::uint32_t u1 = std::min(w, w / 2 + half);
    const std::uint32_t v0 = hgt / 2 > half ? hgt / 2 - half : 0;
    const std::uint32_t v1 = std::min(hgt, hgt / 2 + half);

    patch.clear();
    for (std::uint32_t v = v0; v < v1; ++v)
      for (std::uint32_t u = u0; u < u1; ++u)
        patch.push_back(view.valid(u, v) ? view.at(u, v)
                                         : static_cast<float>(kFarPlane));
    if (patch.empty()) continue;

    const std::size_t idx = patch.size() * 10 / 100;
    std::nth_element(patch.begin(), patch.begin() + idx, patch.end());
    const double z_bar = static_cast<double>(patch[idx]);
    if (!(z_bar > kMinOpenDepth)) continue;

    const double dist = std::min(z_bar - kWallMargin, d_max);
    const double heading = pose.theta + kViewStep * k;
    const double cx = pose.x + dist * std::cos(heading);
    const double cy = pose.y + dist * std::sin(heading);

    if (cx < scene.bounds.x0 || cx > scene.bounds.x1 || cy < scene.bounds.y0 ||
        cy > scene.bounds.y1)
      continue;

    bool ok = true;
    for (const Box& b : scene.boxes) {
      // Wall-limited candidates sit exactly kWallMargin away from the
      // facing surface; the epsilon keeps them from flickering out on
      // float rounding.
      if (footprint_distance(b, cx, cy) < kWallMargin - 1e-4) {
        ok = false;
        break;
      }
      if (segment_hits_footprint(b, kApproachMargin, pose.x, pose.y, cx, cy)) {
        ok = false;
        break;
      }
    }
    if (!ok) continue;

    out.push_back(Candidate{AgentPose{cx, cy, heading}, k});
  }
  return out;
}

OccupancyGrid occupancy(const Scene& scene, double resolution) {
  if (!(resolution > 0.0))
    throw DomainError("occupancy: resolution must be positive");
  const double w = scene.bounds.x1 - scene.bounds.x0;
  const double h = scene.bounds.y1 - scene.bounds.y0;
  if (!(w > 0.0) || !(h > 0.0)) throw DomainError("occupancy: empty bounds");

  OccupancyGrid g;
  g.resolution = resolution;
  g.x0 = scene.bounds.x0;
  g.y0 = scene.bounds.y0;
  g.nx = static_cast<std::size_t>(std::ceil(w / resolution));
  g.ny = static_cast<std::size_t>(std::ceil(h / resolution));
  g.blocked.assign(g.nx * g.ny, 0);

  for (std::size_t iy = 0; iy < g.ny; ++iy) {
    for (std::size_t ix = 0; ix < g.nx; ++ix) {
      const std::array<double, 2> c = g.center(ix, iy);
      for (const Box& b : scene.boxes) {
        if (c[0] >= b.min.x && c[0] <= b.max.x && c[1] >= b.min.y &&
            c[1] <= b.max.y) {
          g.blocked[iy * g.nx + ix] = 1;
          break;
        }
      }
    }
  }
  return g;
}

namespace {

std::pair<std::size_t, std::size_t> snap(const OccupancyGrid& g,
                                         std::array<double, 2> p) {
  const auto clampi = [](double v, std::size_t n) {
    if (v < 0.0) return static_cast<std::size_t>(0);
    const std::size_t i = static_cast<std::size_t>(v);
    return i >= n ? n - 1 : i;
  };
  return {clampi((p[0] - g.x0) / g.resolution, g.nx),
          clampi((p[1] - g.y0) / g.resolution, g.ny)};
}

}  // namespace

GeodesicResult geodesic(const OccupancyGrid& grid, std::array<double, 2> a,
                        std::array<double, 2> b) {
  const auto [ax, ay] = snap(grid, a);
  const auto [bx, by] = snap(grid, b);
  if (grid.cell_blocked(ax, ay))
    throw DomainError("geodesic: start cell is blocked");
  if (grid.cell_blocked(bx, by))
    throw DomainError("geodesic: goal cell is blocked");

  const std::size_t n = grid.nx * grid.ny;
  const std::size_t start = ay * grid.nx + ax;
  const std::size_t goal = by * grid.nx + bx;
  const double res = grid.resolution;
  const double diag = res * std::sqrt(2.0);

  const auto heuristic = [&](std::size_t idx) {
    const double dx = static_cast<double>(
        std::llabs(static_cast<long long>(idx % grid.nx) -
                   static_cast<long long>(goal % grid.nx)));
    const double dy = static_cast<double>(
        std::llabs(static_cast<long long>(idx / grid.nx) -
                   static_cast<long long>(goal / grid.nx)));
    return res * std::fabs(dx - dy) + diag * std::min(dx, dy);
  };

  std::vector<double> dist(n, kInf);
  std::vector<std::size_t> parent(n, n);
  std::vector<char> done(n, 0);
  using Entry = std::pair<double, std::size_t>;  // (f, cell), min-heap
  std::priority_queue<Entry, std::vector<Entry>, std::greater<Entry>> open;

  dist[start] = 0.0;
  open.emplace(heuristic(start), start);

  while (!open.empty()) {
    const auto [f, idx] = open.top();
    open.pop();
    if (done[idx]) continue;
    done[idx] = 1;
    if (idx == goal) break;

    const long long ix = static_cast<long long>(idx % grid.nx);
    const long long iy = static_cast<long long>(idx / grid.nx);
    for (int dy = -1; dy <= 1; ++dy) {
      for (int dx = -1; dx <= 1; ++dx) {
        if (dx == 0 && dy == 0) continue;
        const long long jx = ix + dx, jy = iy + dy;
        if (jx < 0 || jy < 0 || jx >= static_cast<long long>(grid.nx) ||
            jy >= static_cast<long long>(grid.ny))
          continue;
        const std::size_t jdx = static_cast<std::size_t>(jy) * grid.nx +
                                static_cast<std::size_t>(jx);
        if (grid.blocked[jdx]) continue;
        if (dx != 0 && dy != 0) {
          // No corner cutting: both orthogonal neighbors must be free.
          const std::size_t s1 = static_cast<std::size_t>(iy) * grid.nx +
                                 static_cast<std::size_t>(jx);
          const std::size_t s2 = static_cast<std::size_t>(jy) * grid.nx +
                                 static_cast<std::size_t>(ix);
          if (grid.blocked[s1] || grid.blocked[s2]) continue;
        }
        const double step = (dx != 0 && dy != 0) ? diag : res;
        const double nd = dist[idx] + step;
        if (nd < dist[jdx]) {
          dist[jdx] = nd;
          parent[jdx] = idx;
          open.emplace(nd + heuristic(jdx), jdx);
        }
      }
    }
  }

  GeodesicResult r;
  if (dist[goal] == kInf) {
    r.length = kInf;
    return r;
  }
  r.length = dist[goal];
  std::vector<std::size_t> cells;
  for (std::size_t c = goal; c != n; c = parent[c]) {
    cells.push_back(c);
    if (c == start) break;
  }
  std::reverse(cells.begin(), cells.end());
  r.path.reserve(cells.size());
  for (std::size_t c : cells) r.path.push_back(grid.center(c % grid.nx, c / grid.nx));
  return r;
}

// --- presets ----------------------------------------------------------

namespace {

Box make_box(double x0, double y0, double x1, double y1, double height,
             double ground = 0.0) {
  return Box{{x0, y0, ground}, {x1, y1, ground + height}};
}

constexpr double kWallHeight = 2.5;

Scenario make_open() {
  Scenario s;
  s.name = "open";
  s.scene.bounds = {-10.0, -10.0, 10.0, 10.0};
  s.start = {0.0, 0.0, 0.0};
  s.goal = {6.0, 0.0};
  return s;
}

Scenario make_corridor() {
  Scenario s;
  s.name = "corridor";
  s.scene.bounds = {0.0, 0.0, 14.0, 4.0};
  s.scene.boxes = {
      make_box(0.0, 0.0, 14.0, 0.3, kWallHeight),
      make_box(0.0, 3.7, 14.0, 4.0, kWallHeight),
      make_box(0.0, 0.3, 0.3, 3.7, kWallHeight),
      make_box(13.7, 0.3, 14.0, 3.7, kWallHeight),
  };
  s.start = {1.5, 2.0, 0.0};
  s.goal = {12.5, 2.0};
  return s;
}

Scenario make_t_junction() {
  Scenario s;
  s.name = "t_junction";
  s.scene.bounds = {0.0, 0.0, 12.0, 10.0};
  s.scene.boxes = {
      make_box(0.0, 0.0, 5.0, 8.0, kWallHeight),    // left of the stem
      make_box(7.0, 0.0, 12.0, 8.0, kWallHeight),   // right of the stem
      make_box(0.0, 9.7, 12.0, 10.0, kWallHeight),  // top of the bar
      make_box(0.0, 8.0, 0.3, 9.7, kWallHeight),    // west bar end
      make_box(11.7, 8.0, 12.0, 9.7, kWallHeight),  // east bar end
      make_box(5.0, 0.0, 7.0, 0.3, kWallHeight),    // stem bottom
  };
  s.start = {6.0, 1.0, 1.5707963267948966};  // facing +y
  s.goal = {11.0, 8.85};
  return s;
}

Scenario make_crossing() {
  Scenario s;
  s.name = "crossing";
  s.scene.bounds = {0.0, 0.0, 12.0, 12.0};
  s.scene.boxes = {
      make_box(0.0, 0.0, 5.0, 5.0, kWallHeight),
      make_box(7.0, 0.0, 12.0, 5.0, kWallHeight),
      make_box(0.0, 7.0, 5.0, 12.0, kWallHeight),
      make_box(7.0, 7.0, 12.0, 12.0, kWallHeight),
      make_box(5.0, 0.0, 7.0, 0.3, kWallHeight),
      make_box(5.0, 11.7, 7.0, 12.0, kWallHeight),
      make_box(0.0, 5.0, 0.3, 7.0, kWallHeight),
      make_box(11.7, 5.0, 12.0, 7.0, kWallHeight),
  };
  s.start = {1.2, 6.0, 0.0};  // west arm, facing +x
  s.goal = {6.0, 10.8};       // north arm end
  return s;
}

Scenario make_room_clutter(std::uint64_t seed) {
  Scenario s;
  s.name = "room_clutter";
  s.scene.bounds = {0.0, 0.0, 12.0, 12.0};
  s.scene.boxes = {
      make_box(0.0, 0.0, 12.0, 0.3, kWallHeight),
      make_box(0.0, 11.7, 12.0, 12.0, kWallHeight),
      make_box(0.0, 0.3, 0.3, 11.7, kWallHeight),
      make_box(11.7, 0.3, 12.0, 11.7, kWallHeight),
  };
  s.start = {1.5, 1.5, 0.7853981633974483};  // facing the far corner
  s.goal = {10.5, 10.5};

  Rng rng(seed * 0x9e3779b97f4a7c15ULL + 17);
  const int want = 6;
  int placed = 0;
  int attempts = 0;
  while (placed < want && attempts < 200) {
    ++attempts;
    const double cx = rng.uniform(2.0, 10.0);
    const double cy = rng.uniform(2.0, 10.0);
    const double hx = rng.uniform(0.2, 0.6);
    const double hy = rng.uniform(0.2, 0.6);
    const double hgt = rng.uniform(0.8, 2.0);
    const Box b = make_box(cx - hx, cy - hy, cx + hx, cy + hy, hgt);
    // Keep the endpoints workable: clearance around start and goal.
    if (footprint_distance(b, s.start.x, s.start.y) < 1.0) continue;
    if (footprint_distance(b, s.goal[0], s.goal[1]) < 1.0) continue;
    s.scene.boxes.push_back(b);
    ++placed;
  }
  return s;
}

}  // namespace

Scenario preset_scenario(const std::string& name, std::uint64_t seed) {
  if (name == "open") return make_open();
  if (name == "corridor") return make_corridor();
  if (name == "t_junction") return make_t_junction();
  if (name == "crossing") return make_crossing();
  if (name == "room_clutter") return make_room_clutter(seed);
  throw ConfigError("unknown preset scene: " + name);
}

std::vector<std::string> eval_preset_names() {
  return {"corridor", "t_junction", "crossing", "room_clutter"};
}

// --- json i/o ---------------------------------------------------------

namespace {

using nlohmann::json;

void reject_unknown(const json& j, std::initializer_list<const char*> allowed,
                    const char* where) {
  for (const auto& [key, value] : j.items()) {
    (void)value;
    bool ok = false;
    for (const char* a : allowed)
      if (key == a) ok = true;
    if (!ok)
      throw ConfigError(std::string(where) + ": unknown key '" + key + "'");
  }
}

}  // namespace

Scenario load_scenario(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("scene: cannot open " + path);
  json j;
  try {
    f >> j;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("scene: bad json: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("scene: top level must be an object");
  reject_unknown(j, {"name", "bounds", "ground_z", "boxes", "start", "goal"},
                 "scene");
  if (!j.contains("bounds") || !j.contains("boxes"))
    throw ConfigError("scene: bounds and boxes are required");

  Scenario s;
  try {
    s.name = j.value("name", std::string("scene"));
    const auto& b = j.at("bounds");
    if (!b.is_array() || b.size() != 4)
      throw ConfigError("scene: bounds must be [x0, y0, x1, y1]");
    s.scene.bounds = {b[0].get<double>(), b[1].get<double>(),
                      b[2].get<double>(), b[3].get<double>()};
    s.scene.ground_z = j.value("ground_z", 0.0);
    for (const auto& bj : j.at("boxes")) {
      reject_unknown(bj, {"min", "max"}, "scene box");
      const auto& lo = bj.at("min");
      const auto& hi = bj.at("max");
      if (!lo.is_array() || lo.size() != 3 || !hi.is_array() || hi.size() != 3)
        throw ConfigError("scene: box min/max must be [x, y, z]");
      Box box{{lo[0].get<double>(), lo[1].get<double>(), lo[2].get<double>()},
              {hi[0].get<double>(), hi[1].get<double>(), hi[2].get<double>()}};
      if (box.min.x > box.max.x || box.min.y > box.max.y || box.min.z > box.max.z)
        throw ConfigError("scene: box min exceeds max");
      s.scene.boxes.push_back(box);
    }
    if (j.contains("start")) {
      const auto& st = j.at("start");
      if (!st.is_array() || st.size() != 3)
        throw ConfigError("scene: start must be [x, y, theta]");
      s.start = {st[0].get<double>(), st[1].get<double>(), st[2].get<double>()};
    }
    if (j.contains("goal")) {
      const auto& g = j.at("goal");
      if (!g.is_array() || g.size() != 2)
        throw ConfigError("scene: goal must be [x, y]");
      s.goal = {g[0].get<double>(), g[1].get<double>()};
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("scene: bad value: ") + e.what());
  }
  return s;
}

void save_scenario(const Scenario& scenario, const std::string& path) {
  nlohmann::ordered_json j;
  j["name"] = scenario.name;
  j["bounds"] = {scenario.scene.bounds.x0, scenario.scene.bounds.y0,
                 scenario.scene.bounds.x1, scenario.scene.bounds.y1};
  j["ground_z"] = scenario.scene.ground_z;
  j["boxes"] = nlohmann::ordered_json::array();
  for (const Box& b : scenario.scene.boxes) {
    nlohmann::ordered_json bj;
    bj["min"] = {b.min.x, b.min.y, b.min.z};
    bj["max"] = {b.max.x, b.max.y, b.max.z};
    j["boxes"].push_back(std::move(bj));
  }
  j["start"] = {scenario.start.x, scenario.start.y, scenario.start.theta};
  j["goal"] = {scenario.goal[0], scenario.goal[1]};

  std::ofstream f(path);
  if (!f) throw ConfigError("scene: cannot open " + path + " for writing");
  f << j.dump(2) << "\n";
}

}  // namespace lcg::synthscene
