#include "midas/model.hpp"

#include <cstring>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "midas/ensemble.hpp"

namespace midas {

using ad::Mat;
using ad::Var;

std::string to_string(FeatureMode m) {
  switch (m) {
    case FeatureMode::pos: return "pos";
    case FeatureMode::pos_vel: return "pos_vel";
    case FeatureMode::all: return "all";
  }
  return "unknown";
}

FeatureMode feature_mode_from_string(const std::string& name) {
  if (name == "pos") return FeatureMode::pos;
  if (name == "pos_vel") return FeatureMode::pos_vel;
  if (name == "all") return FeatureMode::all;
  throw ConfigError("unknown feature mode: " + name);
}

int ModelConfig::feature_width() const {
  switch (feature_mode) {
    case FeatureMode::pos: return 2;
    case FeatureMode::pos_vel: return 4;
    case FeatureMode::all: return 6;
  }
  return 6;
}

void ModelConfig::validate() const {
  if (embed_dim <= 0 || heads <= 0 || inducing_points <= 0 || hidden_dim <= 0 || decay_dim <= 0)
    throw ConfigError("model dims must be positive");
  if (embed_dim % heads != 0) throw ConfigError("embed_dim must be divisible by heads");
  if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("dropout must be in [0, 1)");
  if (learning_rate <= 0.0) throw ConfigError("learning_rate must be positive");
  if (batch_size <= 0) throw ConfigError("batch_size must be positive");
}

std::string ModelConfig::to_text() const {
  std::ostringstream os;
  os << "embed_dim = " << embed_dim << "\n";
  os << "heads = " << heads << "\n";
  os << "inducing_points = " << inducing_points << "\n";
  os << "hidden_dim = " << hidden_dim << "\n";
  os << "decay_dim = " << decay_dim << "\n";
  os << "dropout = " << dropout << "\n";
  os << "learning_rate = " << learning_rate << "\n";
  os << "batch_size = " << batch_size << "\n";
  os << "feature_mode = " << to_string(feature_mode) << "\n";
  os << "dap_mode = " << to_string(dap_mode) << "\n";
  return os.str();
}

ModelConfig ModelConfig::from_text(const std::string& text) {
  ModelConfig cfg;
  std::istringstream is(text);
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    auto eq = line.find('=');
    if (eq == std::string::npos) {
      bool blank = line.find_first_not_of(" \t\r\n") == std::string::npos;
      if (blank) continue;
      throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
    }
    auto strip = [](std::string s) {
      auto b = s.find_first_not_of(" \t\r\n");
      auto e = s.find_last_not_of(" \t\r\n");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    const std::string key = strip(line.substr(0, eq));
    const std::string val = strip(line.substr(eq + 1));
    try {
      if (key == "embed_dim") cfg.embed_dim = std::stoi(val);
      else if (key == "heads") cfg.heads = std::stoi(val);
      else if (key == "inducing_points") cfg.inducing_points = std::stoi(val);
      else if (key == "hidden_dim") cfg.hidden_dim = std::stoi(val);
      else if (key == "decay_dim") cfg.decay_dim = std::stoi(val);
      else if (key == "dropout") cfg.dropout = std::stod(val);
      else if (key == "learning_rate") cfg.learning_rate = std::stod(val);
      else if (key == "batch_size") cfg.batch_size = std::stoi(val);
      else if (key == "feature_mode") cfg.feature_mode = feature_mode_from_string(val);
      else if (key == "dap_mode") cfg.dap_mode = dap_mode_from_string(val);
      else throw ConfigError("unknown config key: " + key);
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception&) {
      throw ConfigError("bad value for " + key + ": '" + val + "'");
    }
  }
  cfg.validate();
  return cfg;
}

ModelConfig ModelConfig::from_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return from_text(ss.str());
}

std::uint64_t dataset_fingerprint(const DatasetSpec& spec) {
  std::ostringstream os;
  os << to_string(spec.sport) << '|' << spec.agents << '|' << spec.target_hz << '|'
     << spec.window_frames << '|' << spec.pitch_bounds(0) << '|' << spec.pitch_bounds(1);
  return fnv1a(os.str());
}

MidasModel::MidasModel(ModelConfig cfg, DatasetSpec spec, std::uint64_t seed)
    : cfg_(std::move(cfg)), spec_(std::move(spec)) {
  cfg_.validate();
  Rng rng = make_rng(seed, 0xC0FFEE);
  const int m = cfg_.embed_dim;
  const int d = cfg_.feature_width();
  const int h = cfg_.hidden_dim;
  const int g = cfg_.decay_dim;

  input_proj_ = nn::Linear::create(params_, "enc.proj", d, m, rng);
  isab1_ = nn::Isab::create(params_, "enc.isab1", m, cfg_.heads, cfg_.inducing_points, rng);
  isab2_ = nn::Isab::create(params_, "enc.isab2", m, cfg_.heads, cfg_.inducing_points, rng);
  pma_ = nn::Pma::create(params_, "enc.pma", m, cfg_.heads, rng);
  ip_lstm_ = nn::BiLstm::create(params_, "ip.lstm", d + 2 * m, h, rng);
  decoder_ = nn::Linear::create(params_, "ip.decoder", 2 * h, 6, rng);
  decay_w_ = params_.add("ens.decay.w", 2, g, rng);
  decay_b_ = params_.add_full("ens.decay.b", 1, g, 0.0);
  ens_lstm_ = nn::BiLstm::create(params_, "ens.lstm", 10 + 2 * m + g, h, rng);
  ens_fc_ = nn::Linear::create(params_, "ens.fc", 2 * h, 3, rng);
}

void MidasModel::invalidate_cache() { cache_valid_ = false; }

const nn::ParamRefs& MidasModel::inference_refs() const {
  if (!cache_valid_) {
    ad::NoGradGuard guard;
    cached_refs_ = nn::make_refs(params_, false);
    cache_valid_ = true;
  }
  return cached_refs_;
}

Eigen::MatrixXd MidasModel::masked_features(const TrajectoryWindow& w,
                                            const MaskMatrix& mask) const {
  const int d = cfg_.feature_width();
  const long N = static_cast<long>(w.frames) * w.agents;
  Mat x(N, d);
  x.leftCols(2) = w.positions;
  if (d >= 4) x.middleCols(2, 2) = w.velocities;
  if (d >= 6) x.middleCols(4, 2) = w.accelerations;
  for (int t = 0; t < w.frames; ++t)
    for (int k = 0; k < w.agents; ++k)
      if (!mask.observed(k, t)) x.row(w.row(t, k)).setZero();
  return x;
}

ForwardGraph MidasModel::build_graph(const TrajectoryWindow& w, const MaskMatrix& mask,
                                     const nn::ParamRefs& refs, const nn::GraphCtx& ctx) const {
  const int T = w.frames;
  const int K = w.agents;
  const long N = static_cast<long>(T) * K;
  if (mask.agents() != K || mask.frames() != T)
    throw InvalidWindowError("build_graph: mask shape disagrees with window");

  ForwardGraph out;
  out.segs = segments(mask);
  out.missing01 = Mat::Zero(N, 1);
  for (const auto& seg : out.segs)
    for (int t = seg.t_start + 1; t < seg.t_end; ++t) out.missing01(w.row(t, seg.agent), 0) = 1.0;

  // Encoder over masked per-frame inputs.
  Var xm = ad::constant(masked_features(w, mask));
  Var e0 = input_proj_(refs, xm);
  Var e1 = isab1_(refs, ctx, e0, T, K);
  Var z_agent = isab2_(refs, ctx, e1, T, K);
  Var z_global = pma_(refs, ctx, z_agent, T, K);
  out.z_agent = z_agent;
  out.z_global = z_global;

  // Per-agent bidirectional recurrence over (masked inputs, agent context,
  // global context), then a linear decode to the 6 outputs.
  Var zg_rep = ad::repeat_each_row(z_global, K);
  Var ip_in = ad::concat_cols({xm, z_agent, zg_rep});
  Var ip_h = ip_lstm_(refs, ctx, ip_in, T, K);
  Var ip = decoder_(refs, ip_h);
  out.ip = ip;

  // Derivative accumulation from the observed anchors, both directions.
  out.dap_fwd = dap_accumulate_op(ip, w.positions, out.segs, K, T, w.dt, cfg_.dap_mode, true);
  out.dap_bwd = dap_accumulate_op(ip, w.positions, out.segs, K, T, w.dt, cfg_.dap_mode, false);

  // Observed frames carry the true position in the DAP channels so the
  // ensemble recurrence always sees an anchored value.
  Mat obs_fill = w.positions;
  for (long r = 0; r < N; ++r)
    if (out.missing01(r, 0) != 0.0) obs_fill.row(r).setZero();
  Var obs_fill_c = ad::constant(obs_fill);
  Var pf_full = ad::add(out.dap_fwd, obs_fill_c);
  Var pb_full = ad::add(out.dap_bwd, obs_fill_c);

  // Temporal decay from the symmetric frame gaps.
  Var delta = ad::constant(delta_features(out.segs, K, T));
  Var gamma = ad::exp_(ad::neg(ad::relu(ad::add_rowbc(ad::matmul(delta, refs[decay_w_]),
                                                      refs[decay_b_]))));

  Var ens_in = ad::concat_cols({ip, pf_full, pb_full, z_agent, zg_rep, gamma});
  Var ens_h = ens_lstm_(refs, ctx, ens_in, T, K);
  Var lambdas = ad::softmax_rows(ens_fc_(refs, ens_h));
  out.lambdas = lambdas;

  Var ip_pos = ad::slice_cols(ip, 0, 2);
  Var ens_pos = ad::add(ad::add(ad::cmul_colbc(ad::slice_cols(lambdas, 0, 1), ip_pos),
                                ad::cmul_colbc(ad::slice_cols(lambdas, 1, 1), pf_full)),
                        ad::cmul_colbc(ad::slice_cols(lambdas, 2, 1), pb_full));
  out.ens_pos = ens_pos;
  return out;
}

std::pair<Eigen::MatrixXd, Eigen::RowVectorXd> MidasModel::encode_frame(
    const Eigen::MatrixXd& masked_inputs) const {
  if (masked_inputs.cols() != cfg_.feature_width())
    throw InvalidWindowError("encode_frame: expected " + std::to_string(cfg_.feature_width()) +
                             " feature columns, got " + std::to_string(masked_inputs.cols()));
  ad::NoGradGuard guard;
  const nn::ParamRefs& refs = inference_refs();
  nn::GraphCtx ctx;  // no dropout
  const int K = static_cast<int>(masked_inputs.rows());
  Var x = ad::constant(masked_inputs);
  Var e0 = input_proj_(refs, x);
  Var e1 = isab1_(refs, ctx, e0, 1, K);
  Var z_agent = isab2_(refs, ctx, e1, 1, K);
  Var z_global = pma_(refs, ctx, z_agent, 1, K);
  return {z_agent.val(), z_global.val().row(0)};
}

Eigen::MatrixXd MidasModel::initial_prediction(const TrajectoryWindow& window,
                                               const MaskMatrix& mask) const {
  ad::NoGradGuard guard;
  Normalizer norm(window.pitch_bounds);
  TrajectoryWindow w = norm.normalize(window);
  nn::GraphCtx ctx;
  ForwardGraph g = build_graph(w, mask, inference_refs(), ctx);
  Mat ip = g.ip.val();
  Mat out(ip.rows(), 6);
  out.leftCols(2) = norm.positions_from_norm(ip.leftCols(2));
  out.middleCols(2, 2) = norm.scale_from_norm(ip.middleCols(2, 2));
  out.middleCols(4, 2) = norm.scale_from_norm(ip.middleCols(4, 2));
  return out;
}

ImputationResult MidasModel::impute(const TrajectoryWindow& window,
                                    const MaskMatrix& mask) const {
  ad::NoGradGuard guard;
  Normalizer norm(window.pitch_bounds);
  TrajectoryWindow w = norm.normalize(window);
  nn::GraphCtx ctx;
  ForwardGraph g = build_graph(w, mask, inference_refs(), ctx);

  ImputationResult r;
  const Mat& ip = g.ip.val();
  r.ip.resize(ip.rows(), 6);
  r.ip.leftCols(2) = norm.positions_from_norm(ip.leftCols(2));
  r.ip.middleCols(2, 2) = norm.scale_from_norm(ip.middleCols(2, 2));
  r.ip.middleCols(4, 2) = norm.scale_from_norm(ip.middleCols(4, 2));

  const long N = ip.rows();
  r.dap_fwd = Mat::Zero(N, 2);
  r.dap_bwd = Mat::Zero(N, 2);
  r.final_pos = Mat::Zero(N, 2);
  r.dap_defined = Eigen::MatrixXi::Zero(window.agents, window.frames);
  const Mat fwd_m = norm.positions_from_norm(g.dap_fwd.val());
  const Mat bwd_m = norm.positions_from_norm(g.dap_bwd.val());
  const Mat ens_m = norm.positions_from_norm(g.ens_pos.val());
  for (const auto& seg : g.segs)
    for (int t = seg.t_start + 1; t < seg.t_end; ++t) {
      const long row = window.row(t, seg.agent);
      r.dap_fwd.row(row) = fwd_m.row(row);
      r.dap_bwd.row(row) = bwd_m.row(row);
      r.final_pos.row(row) = ens_m.row(row);
      r.dap_defined(seg.agent, t) = 1;
    }
  r.lambdas = g.lambdas.val();

  Mat ip_va = r.ip.middleCols(2, 4);
  r.spliced = splice(window, mask, r.final_pos, ip_va);
  return r;
}

// ---------------------------------------------------------------------------
// Checkpoints: magic, version, JSON header, raw float64 parameter payload.

namespace {
constexpr char kMagic[8] = {'M', 'I', 'D', 'A', 'S', 'C', 'K', '1'};
}

void MidasModel::save(const std::filesystem::path& path) const {
  nlohmann::json j;
  j["version"] = 1;
  j["config"] = cfg_.to_text();
  j["sport"] = to_string(spec_.sport);
  j["dataset"] = {{"agents", spec_.agents},
                  {"native_hz", spec_.native_hz},
                  {"target_hz", spec_.target_hz},
                  {"window_frames", spec_.window_frames},
                  {"pitch_length", spec_.pitch_bounds(0)},
                  {"pitch_width", spec_.pitch_bounds(1)},
                  {"fingerprint", dataset_fingerprint(spec_)}};
  j["params"] = nlohmann::json::array();
  for (const auto& e : params_.entries)
    j["params"].push_back({{"name", e.name}, {"rows", e.value.rows()}, {"cols", e.value.cols()}});
  const std::string header = j.dump();

  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write checkpoint " + path.string());
    out.write(kMagic, 8);
    const std::uint32_t version = 1;
    out.write(reinterpret_cast<const char*>(&version), 4);
    const std::uint64_t hlen = header.size();
    out.write(reinterpret_cast<const char*>(&hlen), 8);
    out.write(header.data(), static_cast<std::streamsize>(hlen));
    for (const auto& e : params_.entries)
      out.write(reinterpret_cast<const char*>(e.value.data()),
                static_cast<std::streamsize>(e.value.size() * sizeof(double)));
    if (!out) throw Error("short write on checkpoint " + path.string());
  }
  std::filesystem::rename(tmp, path);
}

MidasModel MidasModel::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open checkpoint " + path.string());
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kMagic, 8) != 0)
    throw FormatError("not a MIDAS checkpoint: " + path.string());
  std::uint32_t version = 0;
  in.read(reinterpret_cast<char*>(&version), 4);
  if (version != 1) throw FormatError("unsupported checkpoint version");
  std::uint64_t hlen = 0;
  in.read(reinterpret_cast<char*>(&hlen), 8);
  std::string header(hlen, '\0');
  in.read(header.data(), static_cast<std::streamsize>(hlen));
  if (!in) throw FormatError("truncated checkpoint header");
  nlohmann::json j = nlohmann::json::parse(header);

  ModelConfig cfg = ModelConfig::from_text(j["config"].get<std::string>());
  DatasetSpec spec = DatasetSpec::for_sport(sport_from_string(j["sport"].get<std::string>()));
  spec.agents = j["dataset"]["agents"].get<int>();
  spec.native_hz = j["dataset"]["native_hz"].get<double>();
  spec.target_hz = j["dataset"]["target_hz"].get<double>();
  spec.window_frames = j["dataset"]["window_frames"].get<int>();
  spec.pitch_bounds(0) = j["dataset"]["pitch_length"].get<double>();
  spec.pitch_bounds(1) = j["dataset"]["pitch_width"].get<double>();

  MidasModel model(cfg, spec, 0);
  if (j["params"].size() != model.params_.entries.size())
    throw FormatError("checkpoint parameter manifest mismatch");
  for (std::size_t i = 0; i < model.params_.entries.size(); ++i) {
    auto& e = model.params_.entries[i];
    const auto& pj = j["params"][i];
    if (pj["name"].get<std::string>() != e.name ||
        pj["rows"].get<long>() != e.value.rows() || pj["cols"].get<long>() != e.value.cols())
      throw FormatError("checkpoint parameter " + e.name + " shape mismatch");
    in.read(reinterpret_cast<char*>(e.value.data()),
            static_cast<std::streamsize>(e.value.size() * sizeof(double)));
  }
  if (!in) throw FormatError("truncated checkpoint payload");
  return model;
}

}  // namespace midas
