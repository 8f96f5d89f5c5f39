#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <vector>

namespace lcg::metrics {

// Success radius in meters, shared by SR, OSR and the nDTW normalizer.
constexpr double kSuccessRadius = 3.0;

using Point2 = std::array<double, 2>;

// Ordered 2D pose sequence. A trajectory must hold at least one pose.
struct Trajectory {
  std::vector<Point2> poses;
};

double euclidean(const Point2& a, const Point2& b);

// Sum of segment lengths; 0 for a single pose. Throws DomainError on an
// empty trajectory.
double trajectory_length(const Trajectory& t);

// Distance from the final pose to the goal.
double nav_error(const Trajectory& t, const Point2& goal);

// 1 iff nav_error <= d_th.
int success(const Trajectory& t, const Point2& goal,
            double d_th = kSuccessRadius);

// 1 iff any pose comes within d_th of the goal.
int oracle_success(const Trajectory& t, const Point2& goal,
                   double d_th = kSuccessRadius);

// sr * l_star / max(l_star, tl). Throws DomainError if l_star <= 0 or
// tl < 0.
double spl(int sr, double l_star, double tl);

// Classic cumulative dynamic-time-warping cost between predicted and
// reference with Euclidean point cost and steps right/down/diagonal.
// Both trajectories must be non-empty.
double dtw(const Trajectory& predicted, const Trajectory& reference);

// exp(-DTW / (|reference| * d_th)), in (0, 1].
double ndtw(const Trajectory& predicted, const Trajectory& reference,
            double d_th = kSuccessRadius);

// Success-gated nDTW: sr * ndtw.
double sdtw(int sr, double ndtw_value);

struct EpisodeMetrics {
  std::string id;
  double tl = 0.0;
  double ne = 0.0;
  int sr = 0;
  int osr = 0;
  double spl = 0.0;
  double ndtw = 0.0;
  double sdtw = 0.0;
};

// Computes the whole block for one episode. l_star is the geodesic
// shortest-path length from start to goal.
EpisodeMetrics score_episode(const std::string& id, const Trajectory& predicted,
                             const Trajectory& reference, const Point2& goal,
                             double l_star, double d_th = kSuccessRadius);

struct Summary {
  std::size_t episodes = 0;
  double tl = 0.0;
  double ne = 0.0;
  double osr_pct = 0.0;  // percent
  double sr_pct = 0.0;   // percent
  double spl = 0.0;
  double ndtw = 0.0;
  double sdtw = 0.0;
};

// Means over episodes; SR and OSR are reported as percentages. Throws
// DomainError on an empty list.
Summary aggregate(const std::vector<EpisodeMetrics>& episodes);

// Fixed-width text table with columns TL, NE, OSR, SR, SPL, nDTW, SDTW.
std::string summary_table(const Summary& s);

}  // namespace lcg::metrics
