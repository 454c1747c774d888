#include "midas/masking.hpp"

#include <algorithm>
#include <cmath>

namespace midas {

std::string to_string(Scenario s) {
  switch (s) {
    case Scenario::uniform: return "uniform";
    case Scenario::agentwise: return "agentwise";
    case Scenario::camera: return "camera";
  }
  return "unknown";
}

Scenario scenario_from_string(const std::string& name) {
  if (name == "uniform") return Scenario::uniform;
  if (name == "agentwise" || name == "agent-wise") return Scenario::agentwise;
  if (name == "camera") return Scenario::camera;
  throw ConfigError("unknown scenario: " + name);
}

namespace {

MaskMatrix all_observed(int frames, int agents, int guard) {
  MaskMatrix m;
  m.guard = guard;
  m.values = Eigen::MatrixXi::Ones(agents, frames);
  return m;
}

void check_rate(int frames, double rate, int guard) {
  if (rate < 0.0) throw ConfigError("missing rate must be non-negative");
  const double max_rate = static_cast<double>(frames - 2 * guard) / frames;
  if (rate > max_rate + 1e-12)
    throw ConfigError("missing rate " + std::to_string(rate) +
                      " too large for guard frames (max " + std::to_string(max_rate) + ")");
}

// Carves `blocks` disjoint missing runs totalling `missing` frames into row k,
// keeping the guards observed and at least one observed frame between runs.
void carve_blocks(Eigen::MatrixXi& values, int k, int frames, int guard, int missing, int blocks,
                  Rng& rng) {
  if (missing <= 0) return;
  blocks = std::max(1, std::min(blocks, missing));
  const int interior = frames - 2 * guard;
  // `blocks` runs and `blocks - 1` single-frame separators must fit.
  if (missing + (blocks - 1) > interior)
    throw ConfigError("mask blocks do not fit: rate too large for block count");

  // Split the budget into block lengths >= 1.
  std::vector<int> lens(blocks, 1);
  int rest = missing - blocks;
  for (int b = 0; rest > 0; b = (b + 1) % blocks) {
    std::uniform_int_distribution<int> d(0, rest);
    const int take = (blocks == 1) ? rest : std::min(rest, d(rng));
    lens[b] += take;
    rest -= take;
  }

  // Place runs left to right: distribute the leftover observed slack randomly
  // between them.
  int slack = interior - missing - (blocks - 1);
  std::vector<int> gaps(blocks + 1, 0);
  for (int b = 0; b < blocks + 1; ++b) {
    std::uniform_int_distribution<int> d(0, slack);
    gaps[b] = (b == blocks) ? slack : d(rng);
    slack -= gaps[b];
  }
  int cursor = guard;
  for (int b = 0; b < blocks; ++b) {
    cursor += gaps[b] + (b > 0 ? 1 : 0);
    for (int t = cursor; t < cursor + lens[b]; ++t) values(k, t) = 0;
    cursor += lens[b];
  }
}

}  // namespace

MaskMatrix uniform_mask(int frames, int agents, double rate, Rng& rng, int guard, int blocks) {
  check_rate(frames, rate, guard);
  MaskMatrix m = all_observed(frames, agents, guard);
  const int missing = static_cast<int>(std::lround(rate * frames));
  if (missing <= 0) return m;
  carve_blocks(m.values, 0, frames, guard, missing, blocks, rng);
  for (int k = 1; k < agents; ++k) m.values.row(k) = m.values.row(0);
  return m;
}

MaskMatrix agent_wise_mask(int frames, int agents, double rate, Rng& rng, int guard, int blocks,
                           double rate_max) {
  check_rate(frames, rate, guard);
  if (rate_max > rate) check_rate(frames, rate_max, guard);
  MaskMatrix m = all_observed(frames, agents, guard);
  for (int k = 0; k < agents; ++k) {
    double r = rate;
    if (rate_max > rate) {
      std::uniform_real_distribution<double> d(rate, rate_max);
      r = d(rng);
    }
    const int missing = static_cast<int>(std::lround(r * frames));
    carve_blocks(m.values, k, frames, guard, missing, blocks, rng);
  }
  return m;
}

Eigen::MatrixXd moving_average(const Eigen::MatrixXd& series, double window_seconds, double dt) {
  const int n = static_cast<int>(series.rows());
  int radius = static_cast<int>(std::lround(window_seconds / dt)) / 2;
  radius = std::max(0, radius);
  Eigen::MatrixXd out(n, series.cols());
  for (int i = 0; i < n; ++i) {
    const int r = std::min({radius, i, n - 1 - i});
    out.row(i) = series.middleRows(i - r, 2 * r + 1).colwise().mean();
  }
  return out;
}

MaskMatrix camera_mask(const TrajectoryWindow& window, const CameraSpec& camera, int guard) {
  if (!window.has_ball)
    throw InvalidWindowError("camera_mask: window has no ball track");
  const int T = window.frames;
  const int K = window.agents;
  MaskMatrix m;
  m.guard = guard;
  m.values = Eigen::MatrixXi::Zero(K, T);

  const Eigen::MatrixXd center = moving_average(window.ball_positions, camera.smooth_seconds,
                                                window.dt);
  const double hw = camera.width / 2.0;
  const double hh = camera.height / 2.0;
  const Eigen::Vector2d bounds = window.pitch_bounds;
  for (int t = 0; t < T; ++t) {
    double cx = center(t, 0);
    double cy = center(t, 1);
    // Keep the view on the pitch; a view wider than the pitch sees everything.
    cx = std::clamp(cx, std::min(hw, bounds(0) - hw), std::max(hw, bounds(0) - hw));
    cy = std::clamp(cy, std::min(hh, bounds(1) - hh), std::max(hh, bounds(1) - hh));
    for (int k = 0; k < K; ++k) {
      const Eigen::RowVector2d p = window.pos(t, k);
      const bool in_view = std::abs(p(0) - cx) <= hw && std::abs(p(1) - cy) <= hh;
      m.values(k, t) = in_view ? 1 : 0;
    }
  }
  for (int k = 0; k < K; ++k)
    for (int g = 0; g < guard; ++g) {
      m.values(k, g) = 1;
      m.values(k, T - 1 - g) = 1;
    }
  return m;
}

std::vector<MissingSegment> segments(const MaskMatrix& mask) {
  std::vector<MissingSegment> out;
  const int K = mask.agents();
  const int T = mask.frames();
  for (int k = 0; k < K; ++k) {
    int t = 0;
    while (t < T) {
      if (mask.values(k, t) == 0) {
        const int run_start = t;
        while (t < T && mask.values(k, t) == 0) ++t;
        if (run_start == 0 || t >= T)
          throw InvalidWindowError("segments: mask violates the guard invariant");
        out.push_back({k, run_start - 1, t});
      } else {
        ++t;
      }
    }
  }
  return out;
}

double missing_rate_schedule(Phase phase, Rng& rng) {
  if (phase == Phase::eval) return 0.5;
  std::uniform_real_distribution<double> d(0.1, 0.9);
  return d(rng);
}

}  // namespace midas
