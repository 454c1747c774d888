#include "midas/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace midas {

std::string to_string(Sport s) {
  switch (s) {
    case Sport::soccer: return "soccer";
    case Sport::basketball: return "basketball";
    case Sport::am_football: return "football";
  }
  return "unknown";
}

Sport sport_from_string(const std::string& name) {
  if (name == "soccer") return Sport::soccer;
  if (name == "basketball") return Sport::basketball;
  if (name == "football" || name == "am_football") return Sport::am_football;
  throw ConfigError("unknown sport: " + name);
}

DatasetSpec DatasetSpec::for_sport(Sport s) {
  DatasetSpec spec;
  spec.sport = s;
  switch (s) {
    case Sport::soccer:
      spec.agents = 22;
      spec.native_hz = 25.0;
      spec.window_frames = 200;
      spec.pitch_bounds = {105.0, 68.0};
      break;
    case Sport::basketball:
      spec.agents = 10;
      spec.native_hz = 25.0;
      spec.window_frames = 200;
      spec.pitch_bounds = {28.65, 15.24};
      break;
    case Sport::am_football:
      spec.agents = 6;
      spec.native_hz = 10.0;
      spec.window_frames = 50;
      spec.pitch_bounds = {109.73, 48.76};
      break;
  }
  spec.target_hz = 10.0;
  return spec;
}

Derivatives compute_derivatives(const Eigen::MatrixXd& positions, int agents, int frames,
                                double dt) {
  if (frames < 3) throw InvalidWindowError("compute_derivatives: need at least 3 frames");
  if (dt <= 0.0) throw InvalidWindowError("compute_derivatives: dt must be positive");
  if (positions.rows() != static_cast<long>(agents) * frames || positions.cols() != 2)
    throw InvalidWindowError("compute_derivatives: position pack shape mismatch");

  Derivatives d;
  d.velocities.resize(positions.rows(), 2);
  d.accelerations.resize(positions.rows(), 2);

  const int K = agents;
  for (int t = 1; t < frames; ++t)
    d.velocities.middleRows(t * K, K) =
        (positions.middleRows(t * K, K) - positions.middleRows((t - 1) * K, K)) / dt;
  d.velocities.middleRows(0, K) = d.velocities.middleRows(K, K);

  for (int t = 0; t + 1 < frames; ++t)
    d.accelerations.middleRows(t * K, K) =
        (d.velocities.middleRows((t + 1) * K, K) - d.velocities.middleRows(t * K, K)) / dt;
  d.accelerations.middleRows((frames - 1) * K, K) = d.accelerations.middleRows((frames - 2) * K, K);
  return d;
}

Normalizer::Normalizer(const Eigen::Vector2d& pitch_bounds) {
  if (pitch_bounds(0) <= 0.0 || pitch_bounds(1) <= 0.0)
    throw InvalidWindowError("normalize: degenerate pitch bounds");
  scale_ = Eigen::Vector2d(2.0 / pitch_bounds(0), 2.0 / pitch_bounds(1));
  center_ = pitch_bounds / 2.0;
}

Eigen::MatrixXd Normalizer::positions_to_norm(const Eigen::MatrixXd& p) const {
  Eigen::MatrixXd out(p.rows(), 2);
  out.col(0) = (p.col(0).array() - center_(0)) * scale_(0);
  out.col(1) = (p.col(1).array() - center_(1)) * scale_(1);
  return out;
}

Eigen::MatrixXd Normalizer::positions_from_norm(const Eigen::MatrixXd& p) const {
  Eigen::MatrixXd out(p.rows(), 2);
  out.col(0) = p.col(0).array() / scale_(0) + center_(0);
  out.col(1) = p.col(1).array() / scale_(1) + center_(1);
  return out;
}

Eigen::MatrixXd Normalizer::scale_to_norm(const Eigen::MatrixXd& v) const {
  Eigen::MatrixXd out(v.rows(), 2);
  out.col(0) = v.col(0) * scale_(0);
  out.col(1) = v.col(1) * scale_(1);
  return out;
}

Eigen::MatrixXd Normalizer::scale_from_norm(const Eigen::MatrixXd& v) const {
  Eigen::MatrixXd out(v.rows(), 2);
  out.col(0) = v.col(0) / scale_(0);
  out.col(1) = v.col(1) / scale_(1);
  return out;
}

TrajectoryWindow Normalizer::normalize(const TrajectoryWindow& w) const {
  TrajectoryWindow out = w;
  out.positions = positions_to_norm(w.positions);
  out.velocities = scale_to_norm(w.velocities);
  out.accelerations = scale_to_norm(w.accelerations);
  if (w.has_ball) out.ball_positions = positions_to_norm(w.ball_positions);
  return out;
}

TrajectoryWindow Normalizer::denormalize(const TrajectoryWindow& w) const {
  TrajectoryWindow out = w;
  out.positions = positions_from_norm(w.positions);
  out.velocities = scale_from_norm(w.velocities);
  out.accelerations = scale_from_norm(w.accelerations);
  if (w.has_ball) out.ball_positions = positions_from_norm(w.ball_positions);
  return out;
}

std::vector<int> resample_indices(const std::vector<double>& source_times, double target_hz) {
  std::vector<int> picks;
  if (source_times.empty()) return picks;
  const double t0 = source_times.front();
  const double span = source_times.back() - t0;
  const int n_target = static_cast<int>(std::floor(span * target_hz + 1e-9)) + 1;
  picks.reserve(n_target);
  std::size_t j = 0;
  for (int i = 0; i < n_target; ++i) {
    const double target = t0 + i / target_hz;
    while (j + 1 < source_times.size() &&
           std::abs(source_times[j + 1] - target) <= std::abs(source_times[j] - target))
      ++j;
    picks.push_back(static_cast<int>(j));
  }
  return picks;
}

namespace {

bool inside_bounds(const Eigen::RowVector2d& p, const Eigen::Vector2d& bounds, double margin) {
  return p(0) >= -margin && p(0) <= bounds(0) + margin && p(1) >= -margin &&
         p(1) <= bounds(1) + margin;
}

}  // namespace

std::vector<TrajectoryWindow> make_windows(const std::vector<RawSequence>& sequences,
                                           const DatasetSpec& spec, WindowingStats* stats) {
  std::vector<TrajectoryWindow> out;
  WindowingStats local;
  const int T = spec.window_frames;
  const int K = spec.agents;

  for (const auto& seq : sequences) {
    if (seq.frames.empty()) continue;

    // Agent universe for the sequence, ordered by id for determinism.
    std::set<std::string> agent_set;
    for (const auto& [idx, fr] : seq.frames)
      for (const auto& [id, p] : fr.agents) agent_set.insert(id);
    if (static_cast<int>(agent_set.size()) != K)
      throw SchemaError("sequence " + seq.sequence_id + ": expected " + std::to_string(K) +
                        " agents, found " + std::to_string(agent_set.size()));
    std::vector<std::string> agent_ids(agent_set.begin(), agent_set.end());

    const long long first = seq.frames.begin()->first;
    const long long last = seq.frames.rbegin()->first;
    for (long long start = first; start + T - 1 <= last; start += T) {
      TrajectoryWindow w;
      w.sequence_id = seq.sequence_id + ":" + std::to_string(start);
      w.agent_ids = agent_ids;
      w.agents = K;
      w.frames = T;
      w.dt = spec.dt();
      w.pitch_bounds = spec.pitch_bounds;
      w.positions.resize(static_cast<long>(T) * K, 2);
      bool gap = false, oob = false;
      bool ball_all = true;
      Eigen::MatrixXd ball(T, 2);
      for (int t = 0; t < T && !gap && !oob; ++t) {
        auto it = seq.frames.find(start + t);
        if (it == seq.frames.end()) {
          gap = true;
          break;
        }
        const RawFrame& fr = it->second;
        for (int k = 0; k < K; ++k) {
          auto ap = fr.agents.find(agent_ids[k]);
          if (ap == fr.agents.end()) {
            gap = true;
            break;
          }
          if (!inside_bounds(ap->second, spec.pitch_bounds, spec.bounds_margin)) {
            oob = true;
            break;
          }
          w.positions.row(w.row(t, k)) = ap->second;
        }
        if (fr.ball.has_value())
          ball.row(t) = *fr.ball;
        else
          ball_all = false;
      }
      if (gap) {
        local.windows_dropped_gap++;
        continue;
      }
      if (oob) {
        local.windows_dropped_bounds++;
        continue;
      }
      auto d = compute_derivatives(w.positions, K, T, w.dt);
      w.velocities = std::move(d.velocities);
      w.accelerations = std::move(d.accelerations);
      if (ball_all) {
        w.has_ball = true;
        w.ball_positions = std::move(ball);
      }
      local.windows_kept++;
      out.push_back(std::move(w));
    }
  }
  if (stats) *stats = local;
  return out;
}

std::vector<TrajectoryWindow> make_synthetic_windows(const DatasetSpec& spec, int count,
                                                     std::uint64_t seed,
                                                     const SynthParams& params) {
  std::vector<TrajectoryWindow> out;
  out.reserve(count);
  const int T = spec.window_frames;
  const int K = spec.agents;
  const double dt = spec.dt();
  const Eigen::Vector2d bounds = spec.pitch_bounds;

  for (int w_idx = 0; w_idx < count; ++w_idx) {
    Rng rng = make_rng(seed, static_cast<std::uint64_t>(w_idx));
    std::uniform_real_distribution<double> unif(0.0, 1.0);

    // Shared flow for the window.
    const double flow_amp = params.flow_amp * unif(rng);
    const double flow_omega = 0.05 + (params.flow_omega_max - 0.05) * unif(rng);
    const double flow_phase_x = 2.0 * M_PI * unif(rng);
    const double flow_phase_y = 2.0 * M_PI * unif(rng);

    TrajectoryWindow w;
    w.sequence_id = "synthetic:" + std::to_string(w_idx);
    w.agents = K;
    w.frames = T;
    w.dt = dt;
    w.pitch_bounds = bounds;
    w.positions.resize(static_cast<long>(T) * K, 2);
    for (int k = 0; k < K; ++k) {
      w.agent_ids.push_back("P" + std::to_string(k));
      // Keep anchors far enough from the boundary that modes + flow + drift fit.
      const double reach = params.mode_amp_max * 2 + params.flow_amp + 3.0;
      const double margin_x = std::min(reach, 0.45 * bounds(0));
      const double margin_y = std::min(reach, 0.45 * bounds(1));
      const double cx = margin_x + (bounds(0) - 2 * margin_x) * unif(rng);
      const double cy = margin_y + (bounds(1) - 2 * margin_y) * unif(rng);

      double amp[2], omg[2], ph_x[2], ph_y[2];
      for (int j = 0; j < 2; ++j) {
        amp[j] = params.mode_amp_min + (params.mode_amp_max - params.mode_amp_min) * unif(rng);
        omg[j] = params.mode_omega_min + (params.mode_omega_max - params.mode_omega_min) * unif(rng);
        ph_x[j] = 2.0 * M_PI * unif(rng);
        ph_y[j] = 2.0 * M_PI * unif(rng);
      }

      // OU steering accumulated into a positional drift.
      std::normal_distribution<double> gauss(0.0, 1.0);
      double ax = 0.0, ay = 0.0, vx = 0.0, vy = 0.0, dx = 0.0, dy = 0.0;
      for (int t = 0; t < T; ++t) {
        const double time = t * dt;
        double px = cx + flow_amp * std::sin(flow_omega * time + flow_phase_x) + dx;
        double py = cy + flow_amp * std::sin(flow_omega * time + flow_phase_y) + dy;
        for (int j = 0; j < 2; ++j) {
          px += amp[j] * std::sin(omg[j] * time + ph_x[j]);
          py += amp[j] * std::sin(omg[j] * time + ph_y[j]);
        }
        px = std::clamp(px, 0.0, bounds(0));
        py = std::clamp(py, 0.0, bounds(1));
        w.positions.row(w.row(t, k)) = Eigen::RowVector2d(px, py);

        ax += (-params.ou_theta * ax) * dt + params.ou_sigma * std::sqrt(dt) * gauss(rng);
        ay += (-params.ou_theta * ay) * dt + params.ou_sigma * std::sqrt(dt) * gauss(rng);
        ax = std::clamp(ax, -params.max_accel, params.max_accel);
        ay = std::clamp(ay, -params.max_accel, params.max_accel);
        vx += ax * dt;
        vy += ay * dt;
        // Soft cap on the drift speed so noise stays a perturbation.
        const double sp = std::hypot(vx, vy);
        if (sp > 2.0) {
          vx *= 2.0 / sp;
          vy *= 2.0 / sp;
        }
        dx += vx * dt;
        dy += vy * dt;
      }
    }
    auto d = compute_derivatives(w.positions, K, T, dt);
    w.velocities = std::move(d.velocities);
    w.accelerations = std::move(d.accelerations);

    if (params.with_ball) {
      w.has_ball = true;
      w.ball_positions.resize(T, 2);
      const double bx = 2.0 * M_PI * unif(rng), by = 2.0 * M_PI * unif(rng);
      for (int t = 0; t < T; ++t) {
        const double time = t * dt;
        w.ball_positions(t, 0) =
            bounds(0) * (0.5 + 0.3 * std::sin(0.25 * time + bx));
        w.ball_positions(t, 1) =
            bounds(1) * (0.5 + 0.3 * std::sin(0.2 * time + by));
      }
    }
    out.push_back(std::move(w));
  }
  return out;
}

}  // namespace midas
