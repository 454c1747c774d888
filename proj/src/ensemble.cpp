#include "midas/ensemble.hpp"

namespace midas {

Eigen::MatrixXd temporal_decay(const Eigen::MatrixXd& delta, const Eigen::MatrixXd& Wg,
                               const Eigen::RowVectorXd& bg) {
  Eigen::MatrixXd z = (delta * Wg).rowwise() + bg;
  return (-z.cwiseMax(0.0)).array().exp();
}

Eigen::MatrixXd delta_features(const std::vector<MissingSegment>& segs, int agents, int frames) {
  Eigen::MatrixXd delta = Eigen::MatrixXd::Zero(static_cast<long>(frames) * agents, 2);
  for (const auto& seg : segs)
    for (int t = seg.t_start + 1; t < seg.t_end; ++t) {
      const long r = static_cast<long>(t) * agents + seg.agent;
      delta(r, 0) = t - seg.t_start;
      delta(r, 1) = seg.t_end - t;
    }
  return delta;
}

Eigen::MatrixXd combine(const Eigen::MatrixXd& ip_pos, const Eigen::MatrixXd& dap_fwd,
                        const Eigen::MatrixXd& dap_bwd, const Eigen::MatrixXd& lambdas) {
  Eigen::MatrixXd out(ip_pos.rows(), 2);
  out = (ip_pos.array().colwise() * lambdas.col(0).array()) +
        (dap_fwd.array().colwise() * lambdas.col(1).array()) +
        (dap_bwd.array().colwise() * lambdas.col(2).array());
  return out;
}

TrajectoryWindow splice(const TrajectoryWindow& window, const MaskMatrix& mask,
                        const Eigen::MatrixXd& final_pos, const Eigen::MatrixXd& ip_va) {
  TrajectoryWindow out = window;
  for (int t = 0; t < window.frames; ++t)
    for (int k = 0; k < window.agents; ++k) {
      if (mask.observed(k, t)) continue;
      const long r = window.row(t, k);
      out.positions.row(r) = final_pos.row(r);
      out.velocities.row(r) = ip_va.row(r).segment<2>(0);
      out.accelerations.row(r) = ip_va.row(r).segment<2>(2);
    }
  return out;
}

}  // namespace midas
