#pragma once

#include <vector>

#include "midas/types.hpp"

namespace midas {

enum class Scenario { uniform, agentwise, camera };
std::string to_string(Scenario s);
Scenario scenario_from_string(const std::string& name);

enum class Phase { train, eval };

// Virtual broadcast camera: an axis-aligned rectangle following the smoothed
// ball track, clamped so the view stays on the pitch.
struct CameraSpec {
  double width = 50.0;        // m
  double height = 35.0;       // m
  double smooth_seconds = 1.0;  // moving-average window on the ball track
};

// One contiguous missing block per agent, identical interval for all agents.
// `blocks` > 1 splits the missing budget into that many disjoint runs.
MaskMatrix uniform_mask(int frames, int agents, double rate, Rng& rng,
                        int guard = kDefaultGuardFrames, int blocks = 1);

// Like uniform_mask but intervals drawn independently per agent. When
// rate_max > rate, each agent's rate is drawn uniformly from [rate, rate_max]
// (the training-time variant).
MaskMatrix agent_wise_mask(int frames, int agents, double rate, Rng& rng,
                           int guard = kDefaultGuardFrames, int blocks = 1,
                           double rate_max = -1.0);

MaskMatrix camera_mask(const TrajectoryWindow& window, const CameraSpec& camera,
                       int guard = kDefaultGuardFrames);

// Decomposes a mask into its missing runs, sorted by (agent, t_start).
std::vector<MissingSegment> segments(const MaskMatrix& mask);

// Missing-rate curriculum: uniform in [0.1, 0.9] for training, fixed 0.5 for
// evaluation.
double missing_rate_schedule(Phase phase, Rng& rng);

// Centered moving average over ~window_seconds, shrinking symmetrically at
// the series edges. Used to steady the camera on the ball track.
Eigen::MatrixXd moving_average(const Eigen::MatrixXd& series, double window_seconds, double dt);

}  // namespace midas
