#include "midas/dap.hpp"

#include <algorithm>

namespace midas {

std::string to_string(DapMode m) { return m == DapMode::vel_only ? "vel_only" : "vel_accel"; }

DapMode dap_mode_from_string(const std::string& name) {
  if (name == "vel_only" || name == "velocity") return DapMode::vel_only;
  if (name == "vel_accel" || name == "velocity_acceleration") return DapMode::vel_accel;
  throw ConfigError("unknown dap mode: " + name);
}

namespace {

void check_segment(const MissingSegment& seg, int agents, int frames) {
  if (seg.agent < 0 || seg.agent >= agents || seg.t_start < 0 || seg.t_end >= frames ||
      seg.t_end - seg.t_start < 2)
    throw InvalidWindowError("dap: segment outside the window");
}

inline long at(int t, int k, int agents) { return static_cast<long>(t) * agents + k; }

}  // namespace

Eigen::MatrixXd accumulate_forward(const MissingSegment& seg, const Eigen::MatrixXd& observed_p,
                                   const Eigen::MatrixXd& ip, int agents, int frames, double dt,
                                   DapMode mode) {
  check_segment(seg, agents, frames);
  const int k = seg.agent;
  const int len = seg.missing_len();
  Eigen::MatrixXd out(len, 2);
  Eigen::RowVector2d p = observed_p.row(at(seg.t_start, k, agents));
  for (int t = seg.t_start + 1; t < seg.t_end; ++t) {
    if (mode == DapMode::vel_accel) {
      const auto prev = ip.row(at(t - 1, k, agents));
      p += (prev.segment<2>(2) + prev.segment<2>(4) * dt) * dt;
    } else {
      p += ip.row(at(t, k, agents)).segment<2>(2) * dt;
    }
    out.row(t - seg.t_start - 1) = p;
  }
  return out;
}

Eigen::MatrixXd accumulate_backward(const MissingSegment& seg, const Eigen::MatrixXd& observed_p,
                                    const Eigen::MatrixXd& ip, int agents, int frames, double dt,
                                    DapMode mode) {
  check_segment(seg, agents, frames);
  const int k = seg.agent;
  const int len = seg.missing_len();
  Eigen::MatrixXd out(len, 2);
  Eigen::RowVector2d p = observed_p.row(at(seg.t_end, k, agents));
  for (int t = seg.t_end - 1; t > seg.t_start; --t) {
    if (mode == DapMode::vel_accel) {
      const int tv = std::min(t + 2, frames - 1);
      p -= (ip.row(at(tv, k, agents)).segment<2>(2) -
            ip.row(at(t + 1, k, agents)).segment<2>(4) * dt) *
           dt;
    } else {
      p -= ip.row(at(t + 1, k, agents)).segment<2>(2) * dt;
    }
    out.row(t - seg.t_start - 1) = p;
  }
  return out;
}

DapResult dap_predict(const std::vector<MissingSegment>& segs, const Eigen::MatrixXd& observed_p,
                      const Eigen::MatrixXd& ip, int agents, int frames, double dt, DapMode mode) {
  DapResult r;
  r.forward = Eigen::MatrixXd::Zero(static_cast<long>(frames) * agents, 2);
  r.backward = Eigen::MatrixXd::Zero(static_cast<long>(frames) * agents, 2);
  r.defined = Eigen::MatrixXi::Zero(agents, frames);

  const int n = static_cast<int>(segs.size());
#pragma omp parallel for schedule(dynamic)
  for (int i = 0; i < n; ++i) {
    const MissingSegment& seg = segs[i];
    const Eigen::MatrixXd f = accumulate_forward(seg, observed_p, ip, agents, frames, dt, mode);
    const Eigen::MatrixXd b = accumulate_backward(seg, observed_p, ip, agents, frames, dt, mode);
    for (int t = seg.t_start + 1; t < seg.t_end; ++t) {
      r.forward.row(at(t, seg.agent, agents)) = f.row(t - seg.t_start - 1);
      r.backward.row(at(t, seg.agent, agents)) = b.row(t - seg.t_start - 1);
      r.defined(seg.agent, t) = 1;
    }
  }
  return r;
}

ad::Var dap_accumulate_op(const ad::Var& ip_var, const Eigen::MatrixXd& observed_p,
                          const std::vector<MissingSegment>& segs, int agents, int frames,
                          double dt, DapMode mode, bool forward_direction) {
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(static_cast<long>(frames) * agents, 2);
  for (const auto& seg : segs) {
    const Eigen::MatrixXd block =
        forward_direction ? accumulate_forward(seg, observed_p, ip_var.val(), agents, frames, dt, mode)
                          : accumulate_backward(seg, observed_p, ip_var.val(), agents, frames, dt, mode);
    for (int t = seg.t_start + 1; t < seg.t_end; ++t)
      out.row(at(t, seg.agent, agents)) = block.row(t - seg.t_start - 1);
  }

  auto n = std::make_shared<ad::Node>();
  n->val = std::move(out);
  if (ad::grad_enabled() && ip_var.requires_grad()) {
    n->requires_grad = true;
    n->parents.push_back(ip_var.node());
    auto segs_copy = std::make_shared<std::vector<MissingSegment>>(segs);
    ad::Var ip = ip_var;
    n->backfn = [ip, segs_copy, agents, frames, dt, mode, forward_direction](ad::Node& node) mutable {
      Eigen::MatrixXd dip = Eigen::MatrixXd::Zero(ip.val().rows(), 6);
      for (const auto& seg : *segs_copy) {
        const int k = seg.agent;
        Eigen::RowVector2d carry = Eigen::RowVector2d::Zero();
        if (forward_direction) {
          // p[t] sums increments up to t: suffix-accumulate upstream grads.
          for (int t = seg.t_end - 1; t > seg.t_start; --t) {
            carry += node.grad.row(at(t, k, agents));
            if (mode == DapMode::vel_accel) {
              dip.row(at(t - 1, k, agents)).segment<2>(2) += carry * dt;
              dip.row(at(t - 1, k, agents)).segment<2>(4) += carry * dt * dt;
            } else {
              dip.row(at(t, k, agents)).segment<2>(2) += carry * dt;
            }
          }
        } else {
          // p[t] subtracts decrements from t upward: prefix-accumulate.
          for (int t = seg.t_start + 1; t < seg.t_end; ++t) {
            carry += node.grad.row(at(t, k, agents));
            if (mode == DapMode::vel_accel) {
              const int tv = std::min(t + 2, frames - 1);
              dip.row(at(tv, k, agents)).segment<2>(2) -= carry * dt;
              dip.row(at(t + 1, k, agents)).segment<2>(4) += carry * dt * dt;
            } else {
              dip.row(at(t + 1, k, agents)).segment<2>(2) -= carry * dt;
            }
          }
        }
      }
      ip.node()->accumulate(dip);
    };
  }
  return ad::Var(n);
}

}  // namespace midas
