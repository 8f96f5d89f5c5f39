#include "lcg/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "lcg/errors.hpp"

namespace lcg::metrics {

double euclidean(const Point2& a, const Point2& b) {
  const double dx = a[0] - b[0], dy = a[1] - b[1];
  return std::sqrt(dx * dx + dy * dy);
}

namespace {

void require_nonempty(const Trajectory& t, const char* who) {
  if (t.poses.empty()) throw DomainError(std::string(who) + ": empty trajectory");
}

}  // namespace

double trajectory_length(const Trajectory& t) {
  require_nonempty(t, "trajectory_length");
  double sum = 0.0;
  for (std::size_t i = 1; i < t.poses.size(); ++i)
    sum += euclidean(t.poses[i - 1], t.poses[i]);
  return sum;
}

double nav_error(const Trajectory& t, const Point2& goal) {
  require_nonempty(t, "nav_error");
  return euclidean(t.poses.back(), goal);
}

int success(const Trajectory& t, const Point2& goal, double d_th) {
  return nav_error(t, goal) <= d_th ? 1 : 0;
}

int oracle_success(const Trajectory& t, const Point2& goal, double d_th) {
  require_nonempty(t, "oracle_success");
  for (const Point2& p : t.poses)
    if (euclidean(p, goal) <= d_th) return 1;
  return 0;
}

double spl(int sr, double l_star, double tl) {
  if (!(l_star > 0.0)) throw DomainError("spl: l_star must be positive");
  if (tl < 0.0) throw DomainError("spl: negative trajectory length");
  return static_cast<double>(sr) * l_star / std::max(l_star, tl);
}

double dtw(const Trajectory& predicted, const Trajectory& reference) {
  require_nonempty(predicted, "dtw");
  require_nonempty(reference, "dtw");
  const std::size_t n = predicted.poses.size();
  const std::size_t m = reference.poses.size();
  const double inf = std::numeric_limits<double>::infinity();

  // Rolling single row; acc[j] holds the cumulative cost up to (i, j).
  std::vector<double> acc(m, inf);
  std::vector<double> prev(m, inf);
  for (std::size_t i = 0; i < n; ++i) {
    std::swap(prev, acc);
    for (std::size_t j = 0; j < m; ++j) {
      const double cost = euclidean(predicted.poses[i], reference.poses[j]);
      double best;
      if (i == 0 && j == 0) {
        best = 0.0;
      } else {
        best = inf;
        if (i > 0) best = std::min(best, prev[j]);
        if (j > 0) best = std::min(best, acc[j - 1]);
        if (i > 0 && j > 0) best = std::min(best, prev[j - 1]);
      }
      acc[j] = cost + best;
    }
  }
  return acc[m - 1];
}

double ndtw(const Trajectory& predicted, const Trajectory& reference,
            double d_th) {
  const double d = dtw(predicted, reference);
  return std::exp(-d / (static_cast<double>(reference.poses.size()) * d_th));
}

double sdtw(int sr, double ndtw_value) {
  return static_cast<double>(sr) * ndtw_value;
}

EpisodeMetrics score_episode(const std::string& id, const Trajectory& predicted,
                             const Trajectory& reference, const Point2& goal,
                             double l_star, double d_th) {
  EpisodeMetrics m;
  m.id = id;
  m.tl = trajectory_length(predicted);
  m.ne = nav_error(predicted, goal);
  m.sr = m.ne <= d_th ? 1 : 0;
  m.osr = oracle_success(predicted, goal, d_th);
  m.spl = spl(m.sr, l_star, m.tl);
  m.ndtw = ndtw(predicted, reference, d_th);
  m.sdtw = sdtw(m.sr, m.ndtw);
  return m;
}

Summary aggregate(const std::vector<EpisodeMetrics>& episodes) {
  if (episodes.empty()) throw DomainError("aggregate: no episodes");
  Summary s;
  s.episodes = episodes.size();
  for (const EpisodeMetrics& e : episodes) {
    s.tl += e.tl;
    s.ne += e.ne;
    s.osr_pct += static_cast<double>(e.osr);
    s.sr_pct += static_cast<double>(e.sr);
    s.spl += e.spl;
    s.ndtw += e.ndtw;
    s.sdtw += e.sdtw;
  }
  const double n = static_cast<double>(episodes.size());
  s.tl /= n;
  s.ne /= n;
  s.osr_pct = 100.0 * s.osr_pct / n;
  s.sr_pct = 100.0 * s.sr_pct / n;
  s.spl /= n;
  s.ndtw /= n;
  s.sdtw /= n;
  return s;
}

std::string summary_table(const Summary& s) {
  char buf[256];
  std::string out;
  std::snprintf(buf, sizeof(buf), "%8s %8s %8s %8s %8s %8s %8s\n", "TL", "NE",
                "OSR", "SR", "SPL", "nDTW", "SDTW");
  out += buf;
  std::snprintf(buf, sizeof(buf),
                "%8.2f %8.2f %8.1f %8.1f %8.3f %8.3f %8.3f\n", s.tl, s.ne,
                s.osr_pct, s.sr_pct, s.spl, s.ndtw, s.sdtw);
  out += buf;
  return out;
}

}  // namespace lcg::metrics
