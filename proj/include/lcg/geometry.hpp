#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace lcg::geometry {

struct CameraIntrinsics {
  double fx = 128.0;
  double fy = 128.0;
  double cx = 128.0;
  double cy = 128.0;
  std::uint32_t width = 256;
  std::uint32_t height = 256;

  // Throws ShapeError unless fx,fy > 0 and the principal point lies
  // inside the image.
  void validate() const;
};

// 90 degree horizontal FOV at 256x256.
CameraIntrinsics default_intrinsics();

// Row-major depth grid. A pixel is invalid when its value is non-finite
// or <= 0; invalid pixels are skipped by projection.
struct DepthMap {
  CameraIntrinsics intrinsics;
  std::vector<float> values;

  float at(std::uint32_t u, std::uint32_t v) const {
    return values[static_cast<std::size_t>(v) * intrinsics.width + u];
  }
  bool valid(std::uint32_t u, std::uint32_t v) const;
};

struct Point3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
};

struct PointCloud {
  std::vector<Point3> points;
  // Set by fix_size when the input cloud had no points at all, so the
  // fusion stage downstream can skip the placeholder cloud.
  bool from_empty = false;

  std::size_t size() const { return points.size(); }
};

// Pinhole back-projection. Pixel (u, v) with depth z maps to
// ((u - cx) z / fx, (v - cy) z / fy, z); invalid pixels are skipped.
// Output order is row-major scan order. Throws ShapeError on a value
// buffer whose size does not match width * height.
PointCloud project_depth(const DepthMap& depth);

// Keeps points with z <= d_max (inclusive), preserving order. The cut
// is along the optical axis only, not a Euclidean radius. d_max must be
// positive (+infinity allowed); otherwise DomainError.
PointCloud truncate_z(const PointCloud& pc, double d_max);

// Deterministic greedy farthest point sampling. The seed is the point
// farthest from the centroid; each following pick maximizes the minimum
// distance to the already-selected set. Ties resolve to the lowest
// input index. Returns points in selection order. A cloud with size()
// <= n is returned unchanged. Throws DomainError on an empty cloud or
// n = 0.
PointCloud farthest_point_sample(const PointCloud& pc, std::size_t n);

// Normalizes a cloud to exactly n points: FPS when oversized, cyclic
// repetition when undersized, and n origin points with from_empty set
// when the input is empty. Throws DomainError on n = 0.
PointCloud fix_size(const PointCloud& pc, std::size_t n);

// --- file formats ---------------------------------------------------

// Binary depth grid: magic "DPF1", u32 width, u32 height, f32 fx, fy,
// cx, cy, then width*height f32 values row-major, little-endian
// throughout. NaN marks an invalid pixel.
DepthMap read_dpf(std::istream& in);
DepthMap read_dpf(const std::string& path);
void write_dpf(const DepthMap& depth, std::ostream& out);
void write_dpf(const DepthMap& depth, const std::string& path);

// ASCII export, one "x y z" line per point, 9 significant digits.
void write_xyz(const PointCloud& pc, std::ostream& out);
void write_xyz(const PointCloud& pc, const std::string& path);
PointCloud read_xyz(std::istream& in);
PointCloud read_xyz(const std::string& path);

}  // namespace lcg::geometry
