#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "midas/common.hpp"

namespace midas {

enum class Sport { soccer, basketball, am_football };

std::string to_string(Sport s);
Sport sport_from_string(const std::string& name);

// Static description of one dataset family. All windows produced for a sport
// share these constants.
struct DatasetSpec {
  Sport sport = Sport::soccer;
  int agents = 22;            // K
  double native_hz = 25.0;    // sampling rate of the raw source
  double target_hz = 10.0;    // rate after resampling
  int window_frames = 200;    // T
  Eigen::Vector2d pitch_bounds{105.0, 68.0};  // (length, width) in meters
  double bounds_margin = 5.0;                 // tolerance outside the pitch

  double dt() const { return 1.0 / target_hz; }
  double window_seconds() const { return window_frames * dt(); }

  static DatasetSpec for_sport(Sport s);
};

// One fixed-length multi-agent segment. Per-agent/frame arrays are stored
// frame-major: row(t, k) = t * agents + k, so one frame occupies a contiguous
// block of K rows. Positions in meters; velocities/accelerations follow the
// backward/forward difference relations against positions.
struct TrajectoryWindow {
  std::string sequence_id;
  std::vector<std::string> agent_ids;  // size K
  int agents = 0;                      // K
  int frames = 0;                      // T
  double dt = 0.1;
  Eigen::MatrixXd positions;       // (T*K) x 2
  Eigen::MatrixXd velocities;      // (T*K) x 2
  Eigen::MatrixXd accelerations;   // (T*K) x 2
  Eigen::Vector2d pitch_bounds{105.0, 68.0};
  bool has_ball = false;
  Eigen::MatrixXd ball_positions;  // T x 2 when has_ball

  int row(int t, int k) const { return t * agents + k; }
  Eigen::RowVector2d pos(int t, int k) const { return positions.row(row(t, k)); }
  Eigen::RowVector2d vel(int t, int k) const { return velocities.row(row(t, k)); }
  Eigen::RowVector2d acc(int t, int k) const { return accelerations.row(row(t, k)); }
};

// Per-agent, per-frame observation indicators. values(k, t) == 1 means agent k
// is observed at frame t. The first and last `guard` frames of every agent are
// always observed so each missing run has anchors on both sides.
struct MaskMatrix {
  Eigen::MatrixXi values;  // K x T
  int guard = 5;

  int agents() const { return static_cast<int>(values.rows()); }
  int frames() const { return static_cast<int>(values.cols()); }
  bool observed(int k, int t) const { return values(k, t) != 0; }
  int missing_count() const {
    return static_cast<int>(values.size()) - static_cast<int>(values.sum());
  }
};

// One contiguous missing run for a single agent. t_start is the last observed
// frame before the gap, t_end the first observed frame after it, so the
// missing frames are exactly (t_start, t_end) exclusive.
struct MissingSegment {
  int agent = 0;
  int t_start = 0;
  int t_end = 0;

  int missing_len() const { return t_end - t_start - 1; }
};

constexpr int kDefaultGuardFrames = 5;

}  // namespace midas
