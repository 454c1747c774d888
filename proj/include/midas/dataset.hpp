#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "midas/types.hpp"

namespace midas {

// Finite-difference kinematics on a frame-major (T*K) x 2 position pack:
//   v[t] = (p[t] - p[t-1]) / dt   for t >= 1,       v[0] = v[1]
//   a[t] = (v[t+1] - v[t]) / dt   for t <= T-2,     a[T-1] = a[T-2]
// Boundary frames replicate the nearest defined value.
struct Derivatives {
  Eigen::MatrixXd velocities;
  Eigen::MatrixXd accelerations;
};
Derivatives compute_derivatives(const Eigen::MatrixXd& positions, int agents, int frames,
                                double dt);

// Affine map of pitch coordinates onto [-1, 1]^2. Velocities and accelerations
// share the per-axis scale factors and carry no offset.
class Normalizer {
 public:
  explicit Normalizer(const Eigen::Vector2d& pitch_bounds);

  TrajectoryWindow normalize(const TrajectoryWindow& w) const;
  TrajectoryWindow denormalize(const TrajectoryWindow& w) const;

  // Row-wise transforms on (N x 2) packs.
  Eigen::MatrixXd positions_to_norm(const Eigen::MatrixXd& p) const;
  Eigen::MatrixXd positions_from_norm(const Eigen::MatrixXd& p) const;
  Eigen::MatrixXd scale_to_norm(const Eigen::MatrixXd& v) const;
  Eigen::MatrixXd scale_from_norm(const Eigen::MatrixXd& v) const;

  const Eigen::Vector2d& scale() const { return scale_; }

 private:
  Eigen::Vector2d scale_;   // 2 / bounds
  Eigen::Vector2d center_;  // bounds / 2
};

// Raw per-sequence frames as parsed from the canonical CSV (or produced by a
// format adapter). Frames are keyed by frame index at the target rate.
struct RawFrame {
  std::map<std::string, Eigen::RowVector2d> agents;  // agent_id -> position (m)
  std::optional<Eigen::RowVector2d> ball;
};

struct RawSequence {
  std::string sequence_id;
  std::map<long long, RawFrame> frames;  // frame_idx -> frame
};

// Slices non-overlapping windows of spec.window_frames out of each sequence.
// Windows containing any source gap (missing frame index, missing agent, or an
// agent set different from spec.agents) are dropped; positions outside the
// pitch bounds plus margin also drop the window. Deterministic for a given
// input: sequences ordered by id, agents by id.
struct WindowingStats {
  int windows_kept = 0;
  int windows_dropped_gap = 0;
  int windows_dropped_bounds = 0;
};
std::vector<TrajectoryWindow> make_windows(const std::vector<RawSequence>& sequences,
                                           const DatasetSpec& spec,
                                           WindowingStats* stats = nullptr);

// Resamples (timestamp, frame) pairs from the native rate onto the uniform
// target grid by nearest-timestamp selection, starting at the first source
// timestamp. Ties round to the later source frame.
std::vector<int> resample_indices(const std::vector<double>& source_times, double target_hz);

// Smooth-dynamics synthetic data: sum of low-frequency per-agent oscillations,
// a shared flow field, and a small Ornstein-Uhlenbeck steering term with
// bounded acceleration. Used by tests, benchmarks, and `preprocess --synthetic`.
struct SynthParams {
  double mode_amp_min = 1.5;    // m
  double mode_amp_max = 3.5;    // m
  double mode_omega_min = 0.15; // rad/s
  double mode_omega_max = 0.55; // rad/s
  double flow_amp = 3.0;        // m, shared across agents in a window
  double flow_omega_max = 0.35; // rad/s
  double ou_sigma = 0.6;        // m/s^2, steering noise scale
  double ou_theta = 1.0;        // 1/s, mean reversion
  double max_accel = 6.0;       // m/s^2 clamp
  bool with_ball = false;
};
std::vector<TrajectoryWindow> make_synthetic_windows(const DatasetSpec& spec, int count,
                                                     std::uint64_t seed,
                                                     const SynthParams& params = {});

}  // namespace midas
