#pragma once

#include "midas/types.hpp"

namespace midas {

// Temporal decay of trust away from observed anchors:
//   gamma = exp(-max(0, delta * Wg + bg))   (rowwise)
// delta rows are frame gaps (t - t_start, t_end - t); observed frames use
// (0, 0). Wg: 2 x g, bg: 1 x g.
Eigen::MatrixXd temporal_decay(const Eigen::MatrixXd& delta, const Eigen::MatrixXd& Wg,
                               const Eigen::RowVectorXd& bg);

// Frame-gap features for every agent-frame, (T*K) x 2 pack.
Eigen::MatrixXd delta_features(const std::vector<MissingSegment>& segs, int agents, int frames);

// Convex blend of the three component predictions.
// lambdas: N x 3 rows (li, lf, lb) summing to 1; positions: N x 2 packs.
Eigen::MatrixXd combine(const Eigen::MatrixXd& ip_pos, const Eigen::MatrixXd& dap_fwd,
                        const Eigen::MatrixXd& dap_bwd, const Eigen::MatrixXd& lambdas);

// Completes the trajectory: observed frames copy the input window bit-exactly,
// missing frames take the ensemble position and the network's
// velocity/acceleration estimates. All packs in meters.
TrajectoryWindow splice(const TrajectoryWindow& window, const MaskMatrix& mask,
                        const Eigen::MatrixXd& final_pos, const Eigen::MatrixXd& ip_va);

}  // namespace midas
