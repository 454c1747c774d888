#pragma once

#include <filesystem>
#include <utility>

#include "midas/dap.hpp"
#include "midas/dataset.hpp"
#include "midas/layers.hpp"
#include "midas/masking.hpp"

namespace midas {

enum class FeatureMode { pos, pos_vel, all };
std::string to_string(FeatureMode m);
FeatureMode feature_mode_from_string(const std::string& name);

// Hyperparameters the architecture leaves open. Serialized (as key = value
// text) into every checkpoint.
struct ModelConfig {
  int embed_dim = 64;       // m, set-attention width
  int heads = 4;
  int inducing_points = 16;
  int hidden_dim = 96;      // LSTM hidden size (initial prediction and ensemble)
  int decay_dim = 16;       // g, temporal-decay feature width
  double dropout = 0.1;
  double learning_rate = 1e-3;
  int batch_size = 16;
  FeatureMode feature_mode = FeatureMode::all;
  DapMode dap_mode = DapMode::vel_accel;

  int feature_width() const;
  void validate() const;
  std::string to_text() const;
  static ModelConfig from_text(const std::string& text);
  static ModelConfig from_file(const std::filesystem::path& path);
};

// All tape heads produced for one window. Values are in normalized units.
struct ForwardGraph {
  ad::Var ip;                 // (T*K) x 6
  ad::Var z_agent;            // (T*K) x m
  ad::Var z_global;           // T x m
  ad::Var dap_fwd, dap_bwd;   // (T*K) x 2, zero off the missing support
  ad::Var lambdas;            // (T*K) x 3
  ad::Var ens_pos;            // (T*K) x 2
  std::vector<MissingSegment> segs;
  Eigen::MatrixXd missing01;  // (T*K) x 1 indicator of missing agent-frames
};

// Inference output, de-normalized back to meters.
struct ImputationResult {
  Eigen::MatrixXd ip;                 // (T*K) x 6
  Eigen::MatrixXd dap_fwd, dap_bwd;   // (T*K) x 2, zero off-support
  Eigen::MatrixXi dap_defined;        // K x T
  Eigen::MatrixXd lambdas;            // (T*K) x 3
  Eigen::MatrixXd final_pos;          // (T*K) x 2, ensemble positions
  TrajectoryWindow spliced;           // complete trajectories
};

class MidasModel {
 public:
  MidasModel(ModelConfig cfg, DatasetSpec spec, std::uint64_t seed);

  // Set-attention encoder on a single frame of masked inputs (K x d).
  // Returns per-agent embeddings (K x m) and the pooled global embedding.
  std::pair<Eigen::MatrixXd, Eigen::RowVectorXd> encode_frame(
      const Eigen::MatrixXd& masked_inputs) const;

  // Network-only prediction of the full (T*K) x 6 pack, in meters.
  Eigen::MatrixXd initial_prediction(const TrajectoryWindow& window,
                                     const MaskMatrix& mask) const;

  // Full pipeline: initial prediction, bidirectional derivative accumulation,
  // learned convex ensemble, splice. Window in meters.
  ImputationResult impute(const TrajectoryWindow& window, const MaskMatrix& mask) const;

  // Builds the differentiable graph for one normalized window. Used by the
  // trainer; inference goes through the same path under NoGradGuard.
  ForwardGraph build_graph(const TrajectoryWindow& normalized, const MaskMatrix& mask,
                           const nn::ParamRefs& refs, const nn::GraphCtx& ctx) const;

  const ModelConfig& config() const { return cfg_; }
  const DatasetSpec& spec() const { return spec_; }
  nn::ParamStore& params() { return params_; }
  const nn::ParamStore& params() const { return params_; }
  long total_params() const { return params_.total_params(); }

  void save(const std::filesystem::path& path) const;
  static MidasModel load(const std::filesystem::path& path);

  // Drops cached inference handles after a parameter update.
  void invalidate_cache();

 private:
  Eigen::MatrixXd masked_features(const TrajectoryWindow& normalized,
                                  const MaskMatrix& mask) const;
  const nn::ParamRefs& inference_refs() const;

  ModelConfig cfg_;
  DatasetSpec spec_;
  nn::ParamStore params_;

  nn::Linear input_proj_;
  nn::Isab isab1_, isab2_;
  nn::Pma pma_;
  nn::BiLstm ip_lstm_;
  nn::Linear decoder_;
  int decay_w_ = -1, decay_b_ = -1;
  nn::BiLstm ens_lstm_;
  nn::Linear ens_fc_;

  mutable nn::ParamRefs cached_refs_;
  mutable bool cache_valid_ = false;
};

std::uint64_t dataset_fingerprint(const DatasetSpec& spec);

}  // namespace midas
