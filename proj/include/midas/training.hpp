#pragma once

#include <functional>
#include <vector>

#include "midas/model.hpp"

namespace midas {

// The four-term objective: MAE of the initial prediction over all frames plus
// MAEs of the forward/backward accumulated and ensemble positions over missing
// frames. Each term averages the per-row L1 over its support; values are in
// normalized units.
struct LossBreakdown {
  double l_i = 0, l_f = 0, l_b = 0, l_h = 0;
  double total = 0;
};

struct LossVars {
  ad::Var total;
  ad::Var li, lf, lb, lh;
  LossBreakdown values() const;
};

// Builds the loss on top of a forward graph. `normed` supplies ground truth in
// normalized units. With no missing frames the DAP/ensemble terms are zero.
LossVars build_loss(const ForwardGraph& graph, const TrajectoryWindow& normed);

// One differentiable pass over a normalized window: returns the gradient per
// parameter (aligned with the model's ParamStore) and the loss values.
// `dropout_rng` enables training-mode dropout when non-null.
std::pair<std::vector<ad::Mat>, LossBreakdown> window_gradients(const MidasModel& model,
                                                                const TrajectoryWindow& normed,
                                                                const MaskMatrix& mask,
                                                                Rng* dropout_rng);

// Adam with global-norm gradient clipping.
struct AdamOptions {
  double lr = 1e-3;
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  double clip_norm = 1.0;
};
class Adam {
 public:
  explicit Adam(AdamOptions opts) : opts_(opts) {}
  void step(nn::ParamStore& params, std::vector<ad::Mat>& grads);
  long steps() const { return t_; }

 private:
  AdamOptions opts_;
  std::vector<ad::Mat> m_, v_;
  long t_ = 0;
};

struct EpochLog {
  int epoch = 0;
  LossBreakdown train_loss;
  double val_pe = 0;
};

struct TrainOptions {
  int max_epochs = 100;
  int patience = 10;  // early stopping on validation PE
  std::uint64_t seed = 0;
  int guard = kDefaultGuardFrames;
  std::vector<Scenario> scenarios = {Scenario::uniform, Scenario::agentwise};
  CameraSpec camera;
  double eval_rate = 0.5;
  AdamOptions adam;
  std::function<void(const EpochLog&)> on_epoch;  // optional progress hook
};

struct TrainReport {
  std::vector<EpochLog> epochs;
  double best_val_pe = 0;
  int best_epoch = -1;
};

// End-to-end optimization under the dynamic missing-rate curriculum. Scenario
// and rate are drawn per window per epoch; the best-validation parameter set
// is restored into the model before returning. Throws on non-finite loss.
TrainReport train_model(MidasModel& model, const std::vector<TrajectoryWindow>& train_windows,
                        const std::vector<TrajectoryWindow>& val_windows,
                        const TrainOptions& opts);

// Applies `steps` optimizer updates on one fixed batch with fixed masks.
// Returns the loss at each step (used by the overfit smoke check).
std::vector<LossBreakdown> overfit_steps(MidasModel& model,
                                         const std::vector<TrajectoryWindow>& windows,
                                         const std::vector<MaskMatrix>& masks, int steps,
                                         const AdamOptions& adam);

}  // namespace midas
