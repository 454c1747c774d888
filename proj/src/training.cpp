#include "midas/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "midas/evaluation.hpp"

namespace midas {

using ad::Mat;
using ad::Var;

LossBreakdown LossVars::values() const {
  LossBreakdown b;
  b.l_i = li.defined() ? li.val()(0, 0) : 0.0;
  b.l_f = lf.defined() ? lf.val()(0, 0) : 0.0;
  b.l_b = lb.defined() ? lb.val()(0, 0) : 0.0;
  b.l_h = lh.defined() ? lh.val()(0, 0) : 0.0;
  b.total = total.defined() ? total.val()(0, 0) : 0.0;
  return b;
}

LossVars build_loss(const ForwardGraph& graph, const TrajectoryWindow& normed) {
  const long N = normed.positions.rows();
  LossVars out;

  Mat truth6(N, 6);
  truth6.leftCols(2) = normed.positions;
  truth6.middleCols(2, 2) = normed.velocities;
  truth6.middleCols(4, 2) = normed.accelerations;

  // l_i covers every frame (observed reconstruction included).
  Var di = ad::abs_(ad::sub(graph.ip, ad::constant(truth6)));
  out.li = ad::scal(ad::sum_all(di), 1.0 / static_cast<double>(N));

  const double n_missing = graph.missing01.sum();
  if (n_missing > 0) {
    Mat miss2(N, 2);
    miss2.col(0) = graph.missing01;
    miss2.col(1) = graph.missing01;
    Mat truth_missing = normed.positions.cwiseProduct(miss2);
    const double inv = 1.0 / n_missing;

    out.lf = ad::scal(
        ad::sum_all(ad::abs_(ad::sub(graph.dap_fwd, ad::constant(truth_missing)))), inv);
    out.lb = ad::scal(
        ad::sum_all(ad::abs_(ad::sub(graph.dap_bwd, ad::constant(truth_missing)))), inv);
    out.lh = ad::scal(
        ad::masked_sum(ad::abs_(ad::sub(graph.ens_pos, ad::constant(normed.positions))), miss2),
        inv);
    out.total = ad::add(ad::add(out.li, out.lf), ad::add(out.lb, out.lh));
  } else {
    out.lf = ad::constant(Mat::Zero(1, 1));
    out.lb = ad::constant(Mat::Zero(1, 1));
    out.lh = ad::constant(Mat::Zero(1, 1));
    out.total = out.li;
  }
  return out;
}

std::pair<std::vector<Mat>, LossBreakdown> window_gradients(const MidasModel& model,
                                                            const TrajectoryWindow& normed,
                                                            const MaskMatrix& mask,
                                                            Rng* dropout_rng) {
  nn::ParamRefs refs = nn::make_refs(model.params(), true);
  nn::GraphCtx ctx;
  ctx.dropout = dropout_rng ? model.config().dropout : 0.0;
  ctx.rng = dropout_rng;
  ForwardGraph graph = model.build_graph(normed, mask, refs, ctx);
  LossVars loss = build_loss(graph, normed);
  ad::backward(loss.total);

  std::vector<Mat> grads;
  grads.reserve(refs.vars.size());
  for (const auto& v : refs.vars) {
    if (v.node()->grad.size() == 0)
      grads.push_back(Mat::Zero(v.val().rows(), v.val().cols()));
    else
      grads.push_back(v.node()->grad);
  }
  return {std::move(grads), loss.values()};
}

void Adam::step(nn::ParamStore& params, std::vector<Mat>& grads) {
  const std::size_t P = params.entries.size();
  if (grads.size() != P) throw Error("Adam::step: gradient count mismatch");
  if (m_.empty()) {
    m_.resize(P);
    v_.resize(P);
    for (std::size_t i = 0; i < P; ++i) {
      m_[i] = Mat::Zero(params.entries[i].value.rows(), params.entries[i].value.cols());
      v_[i] = m_[i];
    }
  }
  double norm2 = 0.0;
  for (const auto& g : grads) norm2 += g.squaredNorm();
  const double norm = std::sqrt(norm2);
  if (!std::isfinite(norm)) throw Error("training diverged: non-finite gradient norm");
  const double scale = (opts_.clip_norm > 0 && norm > opts_.clip_norm)
                           ? opts_.clip_norm / norm
                           : 1.0;
  ++t_;
  const double bc1 = 1.0 - std::pow(opts_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(opts_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < P; ++i) {
    Mat g = grads[i] * scale;
    m_[i] = opts_.beta1 * m_[i] + (1.0 - opts_.beta1) * g;
    v_[i] = opts_.beta2 * v_[i] + (1.0 - opts_.beta2) * g.cwiseProduct(g);
    Mat mhat = m_[i] / bc1;
    Mat vhat = v_[i] / bc2;
    params.entries[i].value -=
        opts_.lr * mhat.cwiseQuotient(vhat.cwiseSqrt() + Mat::Constant(vhat.rows(), vhat.cols(),
                                                                       opts_.eps));
  }
}

namespace {

// Sums per-window gradients in window order so results do not depend on the
// thread schedule.
struct BatchResult {
  std::vector<Mat> grads;
  LossBreakdown loss;
  int windows = 0;
};

BatchResult run_batch(const MidasModel& model, const std::vector<const TrajectoryWindow*>& batch,
                      const std::vector<MaskMatrix>& masks, const std::vector<std::uint64_t>& seeds,
                      bool with_dropout) {
  const int B = static_cast<int>(batch.size());
  std::vector<std::vector<Mat>> grads(B);
  std::vector<LossBreakdown> losses(B);

#pragma omp parallel for schedule(dynamic)
  for (int i = 0; i < B; ++i) {
    Rng rng(seeds[i]);
    auto [g, l] = window_gradients(model, *batch[i], masks[i], with_dropout ? &rng : nullptr);
    grads[i] = std::move(g);
    losses[i] = l;
  }

  BatchResult out;
  out.windows = B;
  out.grads = std::move(grads[0]);
  out.loss = losses[0];
  for (int i = 1; i < B; ++i) {
    for (std::size_t p = 0; p < out.grads.size(); ++p) out.grads[p] += grads[i][p];
    out.loss.l_i += losses[i].l_i;
    out.loss.l_f += losses[i].l_f;
    out.loss.l_b += losses[i].l_b;
    out.loss.l_h += losses[i].l_h;
    out.loss.total += losses[i].total;
  }
  const double inv = 1.0 / B;
  for (auto& g : out.grads) g *= inv;
  out.loss.l_i *= inv;
  out.loss.l_f *= inv;
  out.loss.l_b *= inv;
  out.loss.l_h *= inv;
  out.loss.total *= inv;
  return out;
}

double validation_pe(const MidasModel& model, const std::vector<TrajectoryWindow>& val,
                     const TrainOptions& opts) {
  if (val.empty()) return 0.0;
  const int n = static_cast<int>(val.size());
  std::vector<double> pes(n);
#pragma omp parallel for schedule(dynamic)
  for (int i = 0; i < n; ++i) {
    const auto& w = val[i];
    Rng rng = make_rng(opts.seed, static_cast<std::uint64_t>(i), 0x7A11);
    const Scenario sc = opts.scenarios[i % opts.scenarios.size()];
    MaskMatrix mask;
    if (sc == Scenario::camera && w.has_ball)
      mask = camera_mask(w, opts.camera, opts.guard);
    else if (sc == Scenario::uniform)
      mask = uniform_mask(w.frames, w.agents, opts.eval_rate, rng, opts.guard);
    else
      mask = agent_wise_mask(w.frames, w.agents, opts.eval_rate, rng, opts.guard);
    const ImputationResult r = model.impute(w, mask);
    pes[i] = position_error(w.positions, r.spliced.positions, mask);
  }
  return std::accumulate(pes.begin(), pes.end(), 0.0) / n;
}

MaskMatrix training_mask(const TrajectoryWindow& w, const TrainOptions& opts, Rng& rng) {
  std::vector<Scenario> usable;
  for (Scenario s : opts.scenarios)
    if (s != Scenario::camera || w.has_ball) usable.push_back(s);
  if (usable.empty()) usable.push_back(Scenario::agentwise);
  std::uniform_int_distribution<std::size_t> pick(0, usable.size() - 1);
  const Scenario sc = usable[pick(rng)];
  const double rate = missing_rate_schedule(Phase::train, rng);
  switch (sc) {
    case Scenario::uniform:
      return uniform_mask(w.frames, w.agents, rate, rng, opts.guard);
    case Scenario::agentwise:
      // Per-agent rates drawn from the curriculum range.
      return agent_wise_mask(w.frames, w.agents, 0.1, rng, opts.guard, 1, 0.9);
    case Scenario::camera:
      return camera_mask(w, opts.camera, opts.guard);
  }
  return uniform_mask(w.frames, w.agents, rate, rng, opts.guard);
}

}  // namespace

TrainReport train_model(MidasModel& model, const std::vector<TrajectoryWindow>& train_windows,
                        const std::vector<TrajectoryWindow>& val_windows,
                        const TrainOptions& opts) {
  if (train_windows.empty()) throw ConfigError("train_model: empty training set");
  Normalizer norm(model.spec().pitch_bounds);
  std::vector<TrajectoryWindow> train_n;
  train_n.reserve(train_windows.size());
  for (const auto& w : train_windows) train_n.push_back(norm.normalize(w));

  AdamOptions aopts = opts.adam;
  aopts.lr = model.config().learning_rate;
  Adam adam(aopts);
  const int B = std::min<int>(model.config().batch_size, static_cast<int>(train_n.size()));

  TrainReport report;
  std::vector<Mat> best_params;
  double best_pe = std::numeric_limits<double>::infinity();
  int best_epoch = -1;

  std::vector<int> order(train_n.size());
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 0; epoch < opts.max_epochs; ++epoch) {
    Rng shuffle_rng = make_rng(opts.seed, 0x5EED, static_cast<std::uint64_t>(epoch));
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    LossBreakdown epoch_loss;
    int batches = 0;
    for (std::size_t at = 0; at < order.size(); at += B) {
      const std::size_t end = std::min(order.size(), at + B);
      std::vector<const TrajectoryWindow*> batch;
      std::vector<MaskMatrix> masks;
      std::vector<std::uint64_t> seeds;
      for (std::size_t i = at; i < end; ++i) {
        const int idx = order[i];
        batch.push_back(&train_n[idx]);
        Rng rng = make_rng(opts.seed, static_cast<std::uint64_t>(epoch) * 1000003 + idx, 0x3A5F);
        masks.push_back(training_mask(train_n[idx], opts, rng));
        seeds.push_back(derive_seed(opts.seed, static_cast<std::uint64_t>(epoch) * 7 + idx, 0xD0));
      }
      BatchResult br = run_batch(model, batch, masks, seeds, model.config().dropout > 0);
      if (!std::isfinite(br.loss.total))
        throw Error("training diverged: non-finite loss at epoch " + std::to_string(epoch));
      adam.step(model.params(), br.grads);
      model.invalidate_cache();
      epoch_loss.l_i += br.loss.l_i;
      epoch_loss.l_f += br.loss.l_f;
      epoch_loss.l_b += br.loss.l_b;
      epoch_loss.l_h += br.loss.l_h;
      epoch_loss.total += br.loss.total;
      ++batches;
    }
    const double inv = 1.0 / std::max(1, batches);
    epoch_loss.l_i *= inv;
    epoch_loss.l_f *= inv;
    epoch_loss.l_b *= inv;
    epoch_loss.l_h *= inv;
    epoch_loss.total *= inv;

    EpochLog log;
    log.epoch = epoch;
    log.train_loss = epoch_loss;
    log.val_pe = validation_pe(model, val_windows, opts);
    report.epochs.push_back(log);
    if (opts.on_epoch) opts.on_epoch(log);

    const double crit = val_windows.empty() ? epoch_loss.total : log.val_pe;
    if (crit < best_pe - 1e-12) {
      best_pe = crit;
      best_epoch = epoch;
      best_params.clear();
      for (const auto& e : model.params().entries) best_params.push_back(e.value);
    } else if (epoch - best_epoch >= opts.patience) {
      break;
    }
  }

  if (!best_params.empty()) {
    for (std::size_t i = 0; i < best_params.size(); ++i)
      model.params().entries[i].value = best_params[i];
    model.invalidate_cache();
  }
  report.best_val_pe = best_pe;
  report.best_epoch = best_epoch;
  return report;
}

std::vector<LossBreakdown> overfit_steps(MidasModel& model,
                                         const std::vector<TrajectoryWindow>& windows,
                                         const std::vector<MaskMatrix>& masks, int steps,
                                         const AdamOptions& adam_opts) {
  Normalizer norm(model.spec().pitch_bounds);
  std::vector<TrajectoryWindow> normed;
  for (const auto& w : windows) normed.push_back(norm.normalize(w));
  std::vector<const TrajectoryWindow*> batch;
  for (const auto& w : normed) batch.push_back(&w);
  std::vector<std::uint64_t> seeds(windows.size(), 0);

  Adam adam(adam_opts);
  std::vector<LossBreakdown> out;
  for (int s = 0; s < steps; ++s) {
    BatchResult br = run_batch(model, batch, masks, seeds, false);
    out.push_back(br.loss);
    adam.step(model.params(), br.grads);
    model.invalidate_cache();
  }
  return out;
}

}  // namespace midas
