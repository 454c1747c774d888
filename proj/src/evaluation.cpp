#include "midas/evaluation.hpp"

#include <algorithm>
#include <cmath>

namespace midas {

double position_error(const Eigen::MatrixXd& true_p, const Eigen::MatrixXd& pred_p,
                      const MaskMatrix& mask) {
  const int K = mask.agents();
  const int T = mask.frames();
  double sum = 0.0;
  long n = 0;
  for (int t = 0; t < T; ++t)
    for (int k = 0; k < K; ++k) {
      if (mask.observed(k, t)) continue;
      const long r = static_cast<long>(t) * K + k;
      sum += (true_p.row(r) - pred_p.row(r)).norm();
      ++n;
    }
  return n == 0 ? 0.0 : sum / n;
}

namespace {

double step_variance(const Eigen::MatrixXd& p, int agents, int k, int t_start, int t_end) {
  // Steps across [t_start, t_end]: count = t_end - t_start.
  const int n = t_end - t_start;
  double mean = 0.0;
  std::vector<double> steps(n);
  for (int t = t_start + 1; t <= t_end; ++t) {
    const long r = static_cast<long>(t) * agents + k;
    const long rp = static_cast<long>(t - 1) * agents + k;
    steps[t - t_start - 1] = (p.row(r) - p.row(rp)).norm();
    mean += steps[t - t_start - 1];
  }
  mean /= n;
  double var = 0.0;
  for (double s : steps) var += (s - mean) * (s - mean);
  return var / n;
}

}  // namespace

double step_change_error(const Eigen::MatrixXd& true_p, const Eigen::MatrixXd& pred_p,
                         const MaskMatrix& mask) {
  const auto segs = segments(mask);
  double sum = 0.0;
  int n = 0;
  for (const auto& seg : segs) {
    if (seg.missing_len() < 3) continue;
    const double vt = step_variance(true_p, mask.agents(), seg.agent, seg.t_start, seg.t_end);
    const double vp = step_variance(pred_p, mask.agents(), seg.agent, seg.t_start, seg.t_end);
    sum += std::abs(vt - vp);
    ++n;
  }
  return n == 0 ? 0.0 : sum / n;
}

Eigen::MatrixXd linear_interp(const TrajectoryWindow& window, const MaskMatrix& mask) {
  Eigen::MatrixXd out = window.positions;
  for (const auto& seg : segments(mask)) {
    const Eigen::RowVector2d a = window.pos(seg.t_start, seg.agent);
    const Eigen::RowVector2d b = window.pos(seg.t_end, seg.agent);
    const double span = seg.t_end - seg.t_start;
    for (int t = seg.t_start + 1; t < seg.t_end; ++t) {
      const double u = (t - seg.t_start) / span;
      out.row(window.row(t, seg.agent)) = (1.0 - u) * a + u * b;
    }
  }
  return out;
}

std::vector<double> spline_eval(const std::vector<double>& xs, const std::vector<double>& ys,
                                const std::vector<double>& queries, SplineBoundary bc) {
  const int n = static_cast<int>(xs.size());
  if (n < 2) throw InvalidWindowError("spline_eval: need at least two knots");
  std::vector<double> out;
  out.reserve(queries.size());
  if (n == 2) {
    // Degenerate case: chord.
    const double slope = (ys[1] - ys[0]) / (xs[1] - xs[0]);
    for (double q : queries) out.push_back(ys[0] + slope * (q - xs[0]));
    return out;
  }

  // Solve for second derivatives M_i.
  std::vector<double> h(n - 1);
  for (int i = 0; i + 1 < n; ++i) h[i] = xs[i + 1] - xs[i];
  Eigen::VectorXd M(n);

  if (bc == SplineBoundary::natural) {
    // Tridiagonal Thomas pass over the interior equations, M_0 = M_{n-1} = 0.
    const int m = n - 2;
    std::vector<double> diag(m), lower(m), upper(m), rhs(m);
    for (int i = 0; i < m; ++i) {
      diag[i] = 2.0 * (h[i] + h[i + 1]);
      lower[i] = h[i];
      upper[i] = h[i + 1];
      rhs[i] = 6.0 * ((ys[i + 2] - ys[i + 1]) / h[i + 1] - (ys[i + 1] - ys[i]) / h[i]);
    }
    for (int i = 1; i < m; ++i) {
      const double w = lower[i] / diag[i - 1];
      diag[i] -= w * upper[i - 1];
      rhs[i] -= w * rhs[i - 1];
    }
    M(n - 1) = 0.0;
    M(0) = 0.0;
    if (m > 0) {
      M(m) = rhs[m - 1] / diag[m - 1];
      for (int i = m - 2; i >= 0; --i) M(i + 1) = (rhs[i] - upper[i] * M(i + 2)) / diag[i];
    }
  } else {
    // Not-a-knot: third-derivative continuity at the second and second-to-last
    // knots. Small dense solve.
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(n, n);
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n);
    for (int i = 1; i + 1 < n; ++i) {
      A(i, i - 1) = h[i - 1];
      A(i, i) = 2.0 * (h[i - 1] + h[i]);
      A(i, i + 1) = h[i];
      rhs(i) = 6.0 * ((ys[i + 1] - ys[i]) / h[i] - (ys[i] - ys[i - 1]) / h[i - 1]);
    }
    A(0, 0) = h[1];
    A(0, 1) = -(h[0] + h[1]);
    A(0, 2) = h[0];
    A(n - 1, n - 3) = h[n - 2];
    A(n - 1, n - 2) = -(h[n - 3] + h[n - 2]);
    A(n - 1, n - 1) = h[n - 3];
    M = A.partialPivLu().solve(rhs);
  }

  for (double q : queries) {
    int i = static_cast<int>(std::upper_bound(xs.begin(), xs.end(), q) - xs.begin()) - 1;
    i = std::clamp(i, 0, n - 2);
    const double a = xs[i], b = xs[i + 1], hi = h[i];
    const double A1 = (b - q) / hi, B1 = (q - a) / hi;
    out.push_back(A1 * ys[i] + B1 * ys[i + 1] +
                  ((A1 * A1 * A1 - A1) * M(i) + (B1 * B1 * B1 - B1) * M(i + 1)) * hi * hi / 6.0);
  }
  return out;
}

Eigen::MatrixXd cubic_spline(const TrajectoryWindow& window, const MaskMatrix& mask,
                             SplineBoundary bc) {
  Eigen::MatrixXd out = window.positions;
  const int K = window.agents;
  const int T = window.frames;
  for (int k = 0; k < K; ++k) {
    std::vector<double> xs, qs;
    for (int t = 0; t < T; ++t)
      (mask.observed(k, t) ? xs : qs).push_back(static_cast<double>(t));
    if (qs.empty()) continue;
    for (int axis = 0; axis < 2; ++axis) {
      std::vector<double> ys;
      ys.reserve(xs.size());
      for (double x : xs) ys.push_back(window.positions(window.row(static_cast<int>(x), k), axis));
      const auto vals = spline_eval(xs, ys, qs, bc);
      for (std::size_t i = 0; i < qs.size(); ++i)
        out(window.row(static_cast<int>(qs[i]), k), axis) = vals[i];
    }
  }
  return out;
}

std::vector<SegmentEval> per_segment_eval(const TrajectoryWindow& truth, const MaskMatrix& mask,
                                          const ImputationResult& result) {
  std::vector<SegmentEval> out;
  for (const auto& seg : segments(mask)) {
    SegmentEval se;
    se.seg = seg;
    const int len = seg.missing_len();
    for (int t = seg.t_start + 1; t < seg.t_end; ++t) {
      const long r = truth.row(t, seg.agent);
      const Eigen::RowVector2d tp = truth.positions.row(r);
      se.pe_ip += (tp - result.ip.row(r).head<2>()).norm();
      se.pe_fwd += (tp - result.dap_fwd.row(r)).norm();
      se.pe_bwd += (tp - result.dap_bwd.row(r)).norm();
      se.pe_ens += (tp - result.final_pos.row(r)).norm();
      se.mean_li += result.lambdas(r, 0);
      se.mean_lf += result.lambdas(r, 1);
      se.mean_lb += result.lambdas(r, 2);
    }
    se.pe_ip /= len;
    se.pe_fwd /= len;
    se.pe_bwd /= len;
    se.pe_ens /= len;
    se.mean_li /= len;
    se.mean_lf /= len;
    se.mean_lb /= len;
    out.push_back(se);
  }
  return out;
}

TercileReport tercile_report(const std::vector<SegmentEval>& segments) {
  TercileReport rep;
  if (segments.empty()) return rep;
  std::vector<int> lens;
  lens.reserve(segments.size());
  for (const auto& s : segments) lens.push_back(s.seg.missing_len());
  std::sort(lens.begin(), lens.end());
  const int S = static_cast<int>(lens.size());
  const int q1 = lens[(S + 2) / 3 - 1];  // ceil(S/3)-th smallest
  const int q2 = lens[(2 * S + 2) / 3 - 1];

  std::vector<std::vector<const SegmentEval*>> groups(3);
  for (const auto& s : segments) {
    const int len = s.seg.missing_len();
    const int g = (len <= q1) ? 0 : (len <= q2 ? 1 : 2);
    groups[g].push_back(&s);
  }
  for (int g = 0; g < 3; ++g) {
    TercileGroup& tg = rep.groups[g];
    tg.count = static_cast<int>(groups[g].size());
    if (tg.count == 0) continue;
    double sum_len = 0, sum_len2 = 0;
    for (const auto* s : groups[g]) {
      sum_len += s->seg.missing_len();
      sum_len2 += static_cast<double>(s->seg.missing_len()) * s->seg.missing_len();
      tg.pe_ip += s->pe_ip;
      tg.pe_fwd += s->pe_fwd;
      tg.pe_bwd += s->pe_bwd;
      tg.pe_ens += s->pe_ens;
      tg.mean_li += s->mean_li;
      tg.mean_lf += s->mean_lf;
      tg.mean_lb += s->mean_lb;
    }
    const double n = tg.count;
    tg.mean_len = sum_len / n;
    tg.sd_len = std::sqrt(std::max(0.0, sum_len2 / n - tg.mean_len * tg.mean_len));
    tg.pe_ip /= n;
    tg.pe_fwd /= n;
    tg.pe_bwd /= n;
    tg.pe_ens /= n;
    tg.mean_li /= n;
    tg.mean_lf /= n;
    tg.mean_lb /= n;
  }
  return rep;
}

MaskMatrix make_scenario_mask(const TrajectoryWindow& w, const EvalOptions& opts, Rng& rng) {
  switch (opts.scenario) {
    case Scenario::uniform:
      return uniform_mask(w.frames, w.agents, opts.rate, rng, opts.guard);
    case Scenario::agentwise:
      if (opts.variable_rate)
        return agent_wise_mask(w.frames, w.agents, opts.rate_min, rng, opts.guard, 1,
                               opts.rate_max);
      return agent_wise_mask(w.frames, w.agents, opts.rate, rng, opts.guard);
    case Scenario::camera:
      return camera_mask(w, opts.camera, opts.guard);
  }
  throw ConfigError("bad scenario");
}

EvalResult evaluate_scenario(const MidasModel& model, const std::vector<TrajectoryWindow>& windows,
                             const EvalOptions& opts) {
  const int n = static_cast<int>(windows.size());
  struct PerWindow {
    double pe_li, sce_li, pe_cs, sce_cs, pe_ip, sce_ip, pe_mid, sce_mid;
    long missing;
    std::vector<SegmentEval> segs;
  };
  std::vector<PerWindow> rows(n);

#pragma omp parallel for schedule(dynamic)
  for (int i = 0; i < n; ++i) {
    const auto& w = windows[i];
    Rng rng = make_rng(opts.seed, static_cast<std::uint64_t>(i), 0xE7A1);
    const MaskMatrix mask = make_scenario_mask(w, opts, rng);
    PerWindow& r = rows[i];
    r.missing = mask.missing_count();

    const Eigen::MatrixXd li = linear_interp(w, mask);
    const Eigen::MatrixXd cs = cubic_spline(w, mask);
    const ImputationResult imp = model.impute(w, mask);

    r.pe_li = position_error(w.positions, li, mask);
    r.sce_li = step_change_error(w.positions, li, mask);
    r.pe_cs = position_error(w.positions, cs, mask);
    r.sce_cs = step_change_error(w.positions, cs, mask);
    Eigen::MatrixXd ip_pos = imp.ip.leftCols(2);
    r.pe_ip = position_error(w.positions, ip_pos, mask);
    r.sce_ip = step_change_error(w.positions, ip_pos, mask);
    r.pe_mid = position_error(w.positions, imp.spliced.positions, mask);
    r.sce_mid = step_change_error(w.positions, imp.spliced.positions, mask);
    r.segs = per_segment_eval(w, mask, imp);
  }

  EvalResult out;
  out.windows = n;
  std::vector<SegmentEval> all_segs;
  double pe_li = 0, sce_li = 0, pe_cs = 0, sce_cs = 0, pe_ip = 0, sce_ip = 0, pe_mid = 0,
         sce_mid = 0;
  for (const auto& r : rows) {
    pe_li += r.pe_li;
    sce_li += r.sce_li;
    pe_cs += r.pe_cs;
    sce_cs += r.sce_cs;
    pe_ip += r.pe_ip;
    sce_ip += r.sce_ip;
    pe_mid += r.pe_mid;
    sce_mid += r.sce_mid;
    all_segs.insert(all_segs.end(), r.segs.begin(), r.segs.end());
  }
  const double dn = std::max(1, n);
  out.methods["LI"] = {pe_li / dn, sce_li / dn};
  out.methods["CS"] = {pe_cs / dn, sce_cs / dn};
  out.methods["IP"] = {pe_ip / dn, sce_ip / dn};
  out.methods["MIDAS"] = {pe_mid / dn, sce_mid / dn};
  out.segments = static_cast<int>(all_segs.size());
  out.terciles = tercile_report(all_segs);
  return out;
}

}  // namespace midas
