#pragma once

#include <map>
#include <vector>

#include "midas/model.hpp"

namespace midas {

// Mean Euclidean distance between true and predicted positions over missing
// agent-frames, in meters. Packs are (T*K) x 2, frame-major.
double position_error(const Eigen::MatrixXd& true_p, const Eigen::MatrixXd& pred_p,
                      const MaskMatrix& mask);

// Step-change error: per missing segment, the absolute difference between the
// population variances of true and predicted step-size norms |p_t - p_{t-1}|
// (meters per frame), averaged over segments. Segments with fewer than 3
// missing frames are excluded.
double step_change_error(const Eigen::MatrixXd& true_p, const Eigen::MatrixXd& pred_p,
                         const MaskMatrix& mask);

// Naive baselines. Both return a complete (T*K) x 2 position pack: observed
// frames copy the window, missing frames are interpolated.
Eigen::MatrixXd linear_interp(const TrajectoryWindow& window, const MaskMatrix& mask);

enum class SplineBoundary { natural, not_a_knot };
Eigen::MatrixXd cubic_spline(const TrajectoryWindow& window, const MaskMatrix& mask,
                             SplineBoundary bc = SplineBoundary::natural);

// Natural cubic spline through (x_i, y_i), evaluated at `queries`. Exposed for
// reuse; interior solve is a Thomas pass over the tridiagonal system.
std::vector<double> spline_eval(const std::vector<double>& xs, const std::vector<double>& ys,
                                const std::vector<double>& queries, SplineBoundary bc);

// Per-segment component errors and mean ensemble weights, the rows behind the
// missing-length tercile table.
struct SegmentEval {
  MissingSegment seg;
  double pe_ip = 0, pe_fwd = 0, pe_bwd = 0, pe_ens = 0;
  double mean_li = 0, mean_lf = 0, mean_lb = 0;
};
std::vector<SegmentEval> per_segment_eval(const TrajectoryWindow& truth, const MaskMatrix& mask,
                                          const ImputationResult& result);

// Missing-length terciles: boundaries at the ceil(S/3)-th and ceil(2S/3)-th
// smallest lengths; ties fall into the lower group.
struct TercileGroup {
  int count = 0;
  double mean_len = 0, sd_len = 0;
  double pe_ip = 0, pe_fwd = 0, pe_bwd = 0, pe_ens = 0;
  double mean_li = 0, mean_lf = 0, mean_lb = 0;
};
struct TercileReport {
  TercileGroup groups[3];  // short, medium, long
};
TercileReport tercile_report(const std::vector<SegmentEval>& segments);

struct MethodMetrics {
  double pe = 0;
  double sce = 0;
};

// Scenario evaluation over a window set: runs the model plus the LI/CS/IP
// baselines under per-window masks and aggregates PE/SCE. Windows are
// processed in parallel and reduced in index order.
struct EvalOptions {
  Scenario scenario = Scenario::agentwise;
  double rate = 0.5;
  std::uint64_t seed = 0;
  int guard = kDefaultGuardFrames;
  CameraSpec camera;
  // Draw per-agent rates from [rate_min, rate_max] instead of the fixed rate
  // (used for missing-length ablations).
  bool variable_rate = false;
  double rate_min = 0.1, rate_max = 0.9;
};
struct EvalResult {
  std::map<std::string, MethodMetrics> methods;  // LI, CS, IP, MIDAS
  TercileReport terciles;
  int windows = 0;
  int segments = 0;
};
EvalResult evaluate_scenario(const MidasModel& model, const std::vector<TrajectoryWindow>& windows,
                             const EvalOptions& opts);

MaskMatrix make_scenario_mask(const TrajectoryWindow& w, const EvalOptions& opts, Rng& rng);

}  // namespace midas
