#include "midas/analytics.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "midas/dataset.hpp"

namespace midas {

namespace {

// Least-squares polynomial fit of the window evaluated at `eval_at` (relative
// offset within the window). Solved via the normal equations.
double polyfit_at(const std::vector<double>& y, int start, int len, int order, int eval_at) {
  const int p = std::min(order, len - 1) + 1;  // coefficients
  Eigen::MatrixXd A(len, p);
  Eigen::VectorXd b(len);
  for (int i = 0; i < len; ++i) {
    double at = 1.0;
    for (int j = 0; j < p; ++j) {
      A(i, j) = at;
      at *= i;
    }
    b(i) = y[start + i];
  }
  Eigen::VectorXd coef = (A.transpose() * A).ldlt().solve(A.transpose() * b);
  double out = 0.0, at = 1.0;
  for (int j = 0; j < p; ++j) {
    out += coef(j) * at;
    at *= eval_at;
  }
  return out;
}

}  // namespace

std::vector<double> savitzky_golay(const std::vector<double>& series, int window, int order) {
  const int n = static_cast<int>(series.size());
  if (n == 0) return {};
  if (window % 2 == 0) ++window;
  while (window > n) window -= 2;  // largest valid odd length
  if (window < 3) return series;
  const int half = window / 2;

  std::vector<double> out(n);
  for (int i = 0; i < n; ++i) {
    const int lo = std::max(0, i - half);
    const int hi = std::min(n - 1, i + half);
    out[i] = polyfit_at(series, lo, hi - lo + 1, order, i - lo);
  }
  return out;
}

std::vector<double> clean_speed(const Eigen::MatrixXd& positions, double dt,
                                const SpeedCleanParams& params) {
  const int T = static_cast<int>(positions.rows());
  if (T < 2) return std::vector<double>(T, 0.0);

  Eigen::MatrixXd vel(T, 2);
  for (int t = 1; t < T; ++t) vel.row(t) = (positions.row(t) - positions.row(t - 1)) / dt;
  vel.row(0) = vel.row(1);
  Eigen::MatrixXd acc(T, 2);
  for (int t = 0; t + 1 < T; ++t) acc.row(t) = (vel.row(t + 1) - vel.row(t)) / dt;
  acc.row(T - 1) = acc.row(T - 2);

  std::vector<double> speed(T);
  std::vector<bool> bad(T, false);
  for (int t = 0; t < T; ++t) {
    speed[t] = vel.row(t).norm();
    bad[t] = speed[t] > params.max_speed || acc.row(t).norm() > params.max_accel;
  }

  // Replace flagged frames by linear interpolation between clean neighbors.
  std::vector<double> cleaned = speed;
  int t = 0;
  while (t < T) {
    if (!bad[t]) {
      ++t;
      continue;
    }
    int lo = t - 1;
    int hi = t;
    while (hi < T && bad[hi]) ++hi;
    if (lo < 0 && hi >= T) {
      // Everything flagged: clamp instead.
      for (int u = 0; u < T; ++u) cleaned[u] = std::min(speed[u], params.max_speed);
      break;
    }
    const double left = lo >= 0 ? speed[lo] : speed[hi];
    const double right = hi < T ? speed[hi] : speed[lo];
    const double span = hi - std::max(lo, -1);
    for (int u = t; u < hi; ++u) {
      const double w = (u - lo) / span;
      cleaned[u] = lo >= 0 && hi < T ? (1.0 - w) * left + w * right : (lo >= 0 ? left : right);
    }
    t = hi;
  }

  return savitzky_golay(cleaned, params.sg_window, params.sg_order);
}

double total_distance(const std::vector<double>& speed, double dt) {
  double sum = 0.0;
  for (double s : speed) sum += s * dt;
  return sum;
}

int count_sprints(const std::vector<double>& speed, double dt, const SpeedCleanParams& params) {
  const int min_frames = std::max(1, static_cast<int>(std::lround(params.sprint_min_seconds / dt)));
  int count = 0;
  int run = 0;
  for (double s : speed) {
    if (s > params.sprint_speed) {
      ++run;
    } else {
      if (run >= min_frames) ++count;
      run = 0;
    }
  }
  if (run >= min_frames) ++count;
  return count;
}

std::vector<PhysicalStats> match_stats(const std::vector<TrajectoryWindow>& windows,
                                       const SpeedCleanParams& params) {
  // Concatenate each player's track across windows, keyed by agent id.
  std::map<std::string, std::vector<Eigen::RowVector2d>> tracks;
  double dt = 0.1;
  for (const auto& w : windows) {
    dt = w.dt;
    for (int k = 0; k < w.agents; ++k) {
      auto& tr = tracks[w.agent_ids[k]];
      for (int t = 0; t < w.frames; ++t) tr.push_back(w.pos(t, k));
    }
  }

  std::vector<PhysicalStats> out;
  for (const auto& [id, tr] : tracks) {
    PhysicalStats st;
    st.player_id = id;
    Eigen::MatrixXd p(tr.size(), 2);
    for (std::size_t i = 0; i < tr.size(); ++i) p.row(static_cast<long>(i)) = tr[i];
    const auto speed = clean_speed(p, dt, params);
    st.minutes_played = static_cast<double>(tr.size()) * dt / 60.0;
    st.distance = total_distance(speed, dt);
    st.sprints = count_sprints(speed, dt, params);
    const double per90 = st.minutes_played > 0 ? 90.0 / st.minutes_played : 0.0;
    st.distance_per90 = st.distance * per90;
    st.sprints_per90 = st.sprints * per90;
    st.in_aggregate = st.sprints >= 2;
    out.push_back(std::move(st));
  }
  return out;
}

ControlMap pitch_control(const Eigen::MatrixXd& positions, const Eigen::MatrixXd& velocities,
                         int left_count, const Eigen::RowVector2d& ball_position,
                         const Eigen::Vector2d& pitch_bounds, const GridSpec& grid,
                         const ControlParams& params) {
  const int K = static_cast<int>(positions.rows());
  if (left_count <= 0 || left_count >= K)
    throw InvalidWindowError("pitch_control: each team needs at least one player");

  // Ballistic drift during the reaction window, then straight-line pursuit.
  Eigen::MatrixXd start(K, 2);
  for (int k = 0; k < K; ++k)
    start.row(k) = positions.row(k) + params.reaction_s * velocities.row(k);

  ControlMap map;
  map.spec = grid;
  map.pitch_bounds = pitch_bounds;
  map.grid.resize(grid.ny, grid.nx);

#pragma omp parallel for schedule(static)
  for (int iy = 0; iy < grid.ny; ++iy) {
    for (int ix = 0; ix < grid.nx; ++ix) {
      const Eigen::Vector2d c = map.cell_center(ix, iy);
      const Eigen::RowVector2d cell(c(0), c(1));
      const double t_ball = (cell - ball_position).norm() / params.ball_speed;
      double t_left = std::numeric_limits<double>::infinity();
      double t_right = t_left;
      for (int k = 0; k < K; ++k) {
        const double t_run =
            params.reaction_s + (cell - start.row(k)).norm() / params.player_speed;
        if (k < left_count)
          t_left = std::min(t_left, t_run);
        else
          t_right = std::min(t_right, t_run);
      }
      t_left = std::max(t_left, t_ball);
      t_right = std::max(t_right, t_ball);
      map.grid(iy, ix) = 1.0 / (1.0 + std::exp(-(t_right - t_left) / params.sigma_s));
    }
  }
  return map;
}

}  // namespace midas
