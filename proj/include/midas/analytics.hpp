#pragma once

#include <vector>

#include "midas/types.hpp"

namespace midas {

// Speed-cleaning parameters follow common sports-science practice: frames
// whose speed exceeds 12 m/s or whose acceleration norm exceeds 8 m/s^2 are
// replaced by linear interpolation of their neighbors, then the series is
// Savitzky-Golay smoothed.
struct SpeedCleanParams {
  double max_speed = 12.0;        // m/s
  double max_accel = 8.0;         // m/s^2
  int sg_window = 11;             // frames, odd
  int sg_order = 3;
  double sprint_speed = 6.0;      // m/s
  double sprint_min_seconds = 1.0;
};

// Savitzky-Golay smoothing; at the edges the window is clipped to the series
// and the polynomial order reduced to fit. Series shorter than the window use
// the largest valid odd length.
std::vector<double> savitzky_golay(const std::vector<double>& series, int window, int order);

// Speed series (m/s) from one agent's T x 2 position track: outlier
// replacement then smoothing.
std::vector<double> clean_speed(const Eigen::MatrixXd& positions, double dt,
                                const SpeedCleanParams& params = {});

double total_distance(const std::vector<double>& speed, double dt);

// Number of maximal runs with speed above the sprint threshold lasting at
// least sprint_min_seconds.
int count_sprints(const std::vector<double>& speed, double dt, const SpeedCleanParams& params = {});

struct PhysicalStats {
  std::string player_id;
  double minutes_played = 0;
  double distance = 0;        // meters
  int sprints = 0;
  double distance_per90 = 0;
  double sprints_per90 = 0;
  bool in_aggregate = true;   // false for players with fewer than two sprints
};

// Per-player load statistics over a match built from spliced windows
// (observed plus imputed frames).
std::vector<PhysicalStats> match_stats(const std::vector<TrajectoryWindow>& windows,
                                       const SpeedCleanParams& params = {});

// Simplified pass-success control surface: per cell, each player's arrival
// time is a reaction delay plus remaining distance at a capped speed; the
// ball's flight time lower-bounds both teams. Team control compares best
// arrival times through a logistic in time units.
struct ControlParams {
  double reaction_s = 0.7;
  double player_speed = 5.0;   // m/s
  double ball_speed = 15.0;    // m/s
  double sigma_s = 0.45;       // logistic scale
};
struct GridSpec {
  int nx = 105;
  int ny = 68;
};
struct ControlMap {
  Eigen::MatrixXd grid;  // ny x nx, probability the left team controls
  GridSpec spec;
  Eigen::Vector2d pitch_bounds;

  Eigen::Vector2d cell_center(int ix, int iy) const {
    return {(ix + 0.5) * pitch_bounds(0) / spec.nx, (iy + 0.5) * pitch_bounds(1) / spec.ny};
  }
};

// Positions/velocities: K x 2 row per player; the first `left_count` rows are
// the left team. Throws if either team is empty.
ControlMap pitch_control(const Eigen::MatrixXd& positions, const Eigen::MatrixXd& velocities,
                         int left_count, const Eigen::RowVector2d& ball_position,
                         const Eigen::Vector2d& pitch_bounds, const GridSpec& grid = {},
                         const ControlParams& params = {});

}  // namespace midas
