#include "lcg/geometry.hpp"

#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>

#include "lcg/errors.hpp"

static_assert(std::endian::native == std::endian::little,
              "DPF1 i/o assumes a little-endian host");

namespace lcg::geometry {

void CameraIntrinsics::validate() const {
  if (!(fx > 0.0) || !(fy > 0.0))
    throw ShapeError("intrinsics: focal lengths must be positive");
  if (!(cx >= 0.0) || !(cx < static_cast<double>(width)) ||
      !(cy >= 0.0) || !(cy < static_cast<double>(height)))
    throw ShapeError("intrinsics: principal point outside image");
  if (width == 0 || height == 0)
    throw ShapeError("intrinsics: zero image dimension");
}

CameraIntrinsics default_intrinsics() { return CameraIntrinsics{}; }

bool DepthMap::valid(std::uint32_t u, std::uint32_t v) const {
  const float z = at(u, v);
  return std::isfinite(z) && z > 0.0f;
}

PointCloud project_depth(const DepthMap& depth) {
  const CameraIntrinsics& k = depth.intrinsics;
  k.validate();
  const std::size_t expect =
      static_cast<std::size_t>(k.width) * static_cast<std::size_t>(k.height);
  if (depth.values.size() != expect)
    throw ShapeError("project_depth: value buffer does not match width*height");

  PointCloud out;
  out.points.reserve(expect);
  for (std::uint32_t v = 0; v < k.height; ++v) {
    for (std::uint32_t u = 0; u < k.width; ++u) {
      const float zf = depth.at(u, v);
      if (!std::isfinite(zf) || zf <= 0.0f) continue;
      const double z = static_cast<double>(zf);
      out.points.push_back({(static_cast<double>(u) - k.cx) * z / k.fx,
                            (static_cast<double>(v) - k.cy) * z / k.fy, z});
    }
  }
  return out;
}

PointCloud truncate_z(const PointCloud& pc, double d_max) {
  if (std::isnan(d_max) || !(d_max > 0.0))
    throw DomainError("truncate_z: d_max must be positive");
  PointCloud out;
  out.from_empty = pc.from_empty;
  out.points.reserve(pc.points.size());
  for (const Point3& p : pc.points)
    if (p.z <= d_max) out.points.push_back(p);
  return out;
}

namespace {

inline double sqdist(const Point3& a, const Point3& b) {
  const double dx = a.x - b.x, dy = a.y - b.y, dz = a.z - b.z;
  return dx * dx + dy * dy + dz * dz;
}

}  // namespace

PointCloud farthest_point_sample(const PointCloud& pc, std::size_t n) {
  if (n == 0) throw DomainError("farthest_point_sample: n must be >= 1");
  if (pc.points.empty())
    throw DomainError("farthest_point_sample: empty cloud");
  if (pc.points.size() <= n) return pc;

  const std::size_t count = pc.points.size();
  const std::vector<Point3>& pts = pc.points;

  Point3 centroid{0.0, 0.0, 0.0};
  for (const Point3& p : pts) {
    centroid.x += p.x;
    centroid.y += p.y;
    centroid.z += p.z;
  }
  centroid.x /= static_cast<double>(count);
  centroid.y /= static_cast<double>(count);
  centroid.z /= static_cast<double>(count);

  // Seed: farthest from the centroid, lowest index on ties (strict >).
  std::size_t seed = 0;
  double best = -1.0;
  for (std::size_t i = 0; i < count; ++i) {
    const double d = sqdist(pts[i], centroid);
    if (d > best) {
      best = d;
      seed = i;
    }
  }

  std::vector<char> taken(count, 0);
  std::vector<double> mind(count);
  PointCloud out;
  out.from_empty = pc.from_empty;
  out.points.reserve(n);

  taken[seed] = 1;
  out.points.push_back(pts[seed]);
  for (std::size_t i = 0; i < count; ++i) mind[i] = sqdist(pts[i], pts[seed]);

  for (std::size_t k = 1; k < n; ++k) {
    std::size_t pick = count;
    double far = -1.0;
    for (std::size_t i = 0; i < count; ++i) {
      if (taken[i]) continue;
      if (mind[i] > far) {
        far = mind[i];
        pick = i;
      }
    }
    taken[pick] = 1;
    out.points.push_back(pts[pick]);
    const Point3& q = pts[pick];
    for (std::size_t i = 0; i < count; ++i) {
      const double d = sqdist(pts[i], q);
      if (d < mind[i]) mind[i] = d;
    }
  }
  return out;
}

PointCloud fix_size(const PointCloud& pc, std::size_t n) {
  if (n == 0) throw DomainError("fix_size: n must be >= 1");
  if (pc.points.size() >= n) return farthest_point_sample(pc, n);

  PointCloud out;
  if (pc.points.empty()) {
    out.points.assign(n, Point3{0.0, 0.0, 0.0});
    out.from_empty = true;
    return out;
  }
  out.from_empty = pc.from_empty;
  out.points.reserve(n);
  for (std::size_t i = 0; i < n; ++i)
    out.points.push_back(pc.points[i % pc.points.size()]);
  return out;
}

// --- DPF1 -----------------------------------------------------------

namespace {

constexpr char kDpfMagic[4] = {'D', 'P', 'F', '1'};

template <typename T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw ShapeError("dpf: truncated file");
  return v;
}

}  // namespace

DepthMap read_dpf(std::istream& in) {
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kDpfMagic, 4) != 0)
    throw ShapeError("dpf: bad magic");

  DepthMap d;
  d.intrinsics.width = get<std::uint32_t>(in);
  d.intrinsics.height = get<std::uint32_t>(in);
  d.intrinsics.fx = static_cast<double>(get<float>(in));
  d.intrinsics.fy = static_cast<double>(get<float>(in));
  d.intrinsics.cx = static_cast<double>(get<float>(in));
  d.intrinsics.cy = static_cast<double>(get<float>(in));
  d.intrinsics.validate();

  const std::size_t count = static_cast<std::size_t>(d.intrinsics.width) *
                            static_cast<std::size_t>(d.intrinsics.height);
  d.values.resize(count);
  in.read(reinterpret_cast<char*>(d.values.data()),
          static_cast<std::streamsize>(count * sizeof(float)));
  if (!in) throw ShapeError("dpf: value block shorter than width*height");
  in.peek();
  if (!in.eof()) throw ShapeError("dpf: trailing bytes after value block");
  return d;
}

DepthMap read_dpf(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ConfigError("dpf: cannot open " + path);
  return read_dpf(f);
}

void write_dpf(const DepthMap& depth, std::ostream& out) {
  const CameraIntrinsics& k = depth.intrinsics;
  k.validate();
  if (depth.values.size() !=
      static_cast<std::size_t>(k.width) * static_cast<std::size_t>(k.height))
    throw ShapeError("dpf: value buffer does not match width*height");
  out.write(kDpfMagic, 4);
  put<std::uint32_t>(out, k.width);
  put<std::uint32_t>(out, k.height);
  put<float>(out, static_cast<float>(k.fx));
  put<float>(out, static_cast<float>(k.fy));
  put<float>(out, static_cast<float>(k.cx));
  put<float>(out, static_cast<float>(k.cy));
  out.write(reinterpret_cast<const char*>(depth.values.data()),
            static_cast<std::streamsize>(depth.values.size() * sizeof(float)));
}

void write_dpf(const DepthMap& depth, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ConfigError("dpf: cannot open " + path + " for writing");
  write_dpf(depth, f);
}

// --- XYZ ------------------------------------------------------------

void write_xyz(const PointCloud& pc, std::ostream& out) {
  char line[128];
  for (const Point3& p : pc.points) {
    std::snprintf(line, sizeof(line), "%.9g %.9g %.9g\n", p.x, p.y, p.z);
    out << line;
  }
}

void write_xyz(const PointCloud& pc, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw ConfigError("xyz: cannot open " + path + " for writing");
  write_xyz(pc, f);
}

PointCloud read_xyz(std::istream& in) {
  PointCloud pc;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    Point3 p;
    std::istringstream ls(line);
    if (!(ls >> p.x >> p.y >> p.z))
      throw ShapeError("xyz: malformed line " + std::to_string(lineno));
    pc.points.push_back(p);
  }
  return pc;
}

PointCloud read_xyz(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("xyz: cannot open " + path);
  return read_xyz(f);
}

}  // namespace lcg::geometry
