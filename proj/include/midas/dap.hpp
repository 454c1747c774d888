#pragma once

#include <vector>

#include "midas/ad.hpp"
#include "midas/types.hpp"

namespace midas {

enum class DapMode { vel_only, vel_accel };
std::string to_string(DapMode m);
DapMode dap_mode_from_string(const std::string& name);

// Derivative-accumulating predictions. `ip` is the (T*K) x 6 pack
// [px py vx vy ax ay] predicted by the network; `observed_p` the (T*K) x 2
// ground-truth position pack supplying the anchors. All accumulation is
// float64.
//
// Forward, for frames t in (t_start, t_end):
//   vel_accel: p[t] = p[t-1] + (v[t-1] + a[t-1]*dt)*dt,  p[t_start] = anchor
//   vel_only:  p[t] = p[t-1] + v[t]*dt
// Backward mirrors the recursion from the t_end anchor; the v index t+2 is
// clamped to the last frame.
Eigen::MatrixXd accumulate_forward(const MissingSegment& seg, const Eigen::MatrixXd& observed_p,
                                   const Eigen::MatrixXd& ip, int agents, int frames, double dt,
                                   DapMode mode);
Eigen::MatrixXd accumulate_backward(const MissingSegment& seg, const Eigen::MatrixXd& observed_p,
                                    const Eigen::MatrixXd& ip, int agents, int frames, double dt,
                                    DapMode mode);

// Both directions over every segment, assembled into (T*K) x 2 packs that are
// zero outside the missing frames. Segments are independent; the loop is
// OpenMP-parallel.
struct DapResult {
  Eigen::MatrixXd forward;   // (T*K) x 2
  Eigen::MatrixXd backward;  // (T*K) x 2
  Eigen::MatrixXi defined;   // K x T, 1 exactly on missing frames
};
DapResult dap_predict(const std::vector<MissingSegment>& segs, const Eigen::MatrixXd& observed_p,
                      const Eigen::MatrixXd& ip, int agents, int frames, double dt, DapMode mode);

// Tape node wrapping dap_predict for one direction; gradients flow into the
// velocity/acceleration columns of `ip_var`.
ad::Var dap_accumulate_op(const ad::Var& ip_var, const Eigen::MatrixXd& observed_p,
                          const std::vector<MissingSegment>& segs, int agents, int frames,
                          double dt, DapMode mode, bool forward_direction);

}  // namespace midas
