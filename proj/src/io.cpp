#include "midas/io.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <json.hpp>
#include <sstream>

namespace midas {

namespace fs = std::filesystem;

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t\r\n");
  auto e = s.find_last_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  return s.substr(b, e - b + 1);
}

double parse_double(const std::string& s, const char* what) {
  try {
    size_t pos = 0;
    double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw FormatError(std::string("cannot parse ") + what + ": '" + s + "'");
  }
}

long long parse_ll(const std::string& s, const char* what) {
  try {
    size_t pos = 0;
    long long v = std::stoll(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw FormatError(std::string("cannot parse ") + what + ": '" + s + "'");
  }
}

}  // namespace

std::vector<RawSequence> read_canonical_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw FormatError("empty file: " + path.string());
  auto header = split_csv_line(trim(line));
  const std::vector<std::string> expect = {"sequence_id", "frame_idx", "agent_id", "x", "y"};
  if (header.size() != expect.size() ||
      !std::equal(header.begin(), header.end(), expect.begin(),
                  [](const std::string& a, const std::string& b) { return trim(a) == b; }))
    throw FormatError("not a canonical trajectory CSV: " + path.string());

  std::map<std::string, RawSequence> by_id;
  long long line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    auto f = split_csv_line(line);
    if (f.size() != 5)
      throw FormatError(path.string() + ":" + std::to_string(line_no) + ": expected 5 fields");
    RawSequence& seq = by_id[f[0]];
    seq.sequence_id = f[0];
    const long long frame = parse_ll(f[1], "frame_idx");
    const Eigen::RowVector2d p(parse_double(f[3], "x"), parse_double(f[4], "y"));
    if (f[2] == "BALL")
      seq.frames[frame].ball = p;
    else
      seq.frames[frame].agents[f[2]] = p;
  }
  std::vector<RawSequence> out;
  out.reserve(by_id.size());
  for (auto& [id, seq] : by_id) out.push_back(std::move(seq));
  return out;
}

void write_canonical_csv(const fs::path& path, const std::vector<TrajectoryWindow>& windows) {
  std::ostringstream os;
  os << "sequence_id,frame_idx,agent_id,x,y\n";
  char buf[160];
  for (const auto& w : windows) {
    for (int t = 0; t < w.frames; ++t) {
      for (int k = 0; k < w.agents; ++k) {
        const auto p = w.pos(t, k);
        std::snprintf(buf, sizeof(buf), "%s,%d,%s,%.9f,%.9f\n", w.sequence_id.c_str(), t,
                      w.agent_ids[k].c_str(), p(0), p(1));
        os << buf;
      }
      if (w.has_ball) {
        std::snprintf(buf, sizeof(buf), "%s,%d,BALL,%.9f,%.9f\n", w.sequence_id.c_str(), t,
                      w.ball_positions(t, 0), w.ball_positions(t, 1));
        os << buf;
      }
    }
  }
  atomic_write(path, os.str());
}

void write_mask_csv(const fs::path& path, const std::vector<TrajectoryWindow>& windows,
                    const std::vector<MaskMatrix>& masks) {
  if (windows.size() != masks.size())
    throw ConfigError("write_mask_csv: window/mask count mismatch");
  std::ostringstream os;
  os << "sequence_id,frame_idx,agent_id,observed\n";
  for (std::size_t i = 0; i < windows.size(); ++i) {
    const auto& w = windows[i];
    const auto& m = masks[i];
    for (int t = 0; t < w.frames; ++t)
      for (int k = 0; k < w.agents; ++k)
        os << w.sequence_id << ',' << t << ',' << w.agent_ids[k] << ','
           << (m.observed(k, t) ? 1 : 0) << '\n';
  }
  atomic_write(path, os.str());
}

std::map<std::string, MaskMatrix> read_mask_csv(const fs::path& path,
                                                const std::vector<TrajectoryWindow>& windows) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || trim(line) != "sequence_id,frame_idx,agent_id,observed")
    throw FormatError("not a mask CSV: " + path.string());

  std::map<std::string, const TrajectoryWindow*> by_id;
  std::map<std::string, MaskMatrix> out;
  for (const auto& w : windows) {
    by_id[w.sequence_id] = &w;
    MaskMatrix m;
    m.values = Eigen::MatrixXi::Ones(w.agents, w.frames);
    out[w.sequence_id] = std::move(m);
  }
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    auto f = split_csv_line(line);
    if (f.size() != 4) throw FormatError("mask CSV: expected 4 fields");
    auto it = by_id.find(f[0]);
    if (it == by_id.end()) continue;  // mask rows for windows we are not using
    const TrajectoryWindow& w = *it->second;
    const int t = static_cast<int>(parse_ll(f[1], "frame_idx"));
    auto ag = std::find(w.agent_ids.begin(), w.agent_ids.end(), f[2]);
    if (ag == w.agent_ids.end()) {
      if (f[2] == "BALL") continue;
      throw SchemaError("mask CSV: unknown agent " + f[2]);
    }
    const int k = static_cast<int>(ag - w.agent_ids.begin());
    if (t < 0 || t >= w.frames) throw FormatError("mask CSV: frame out of range");
    out[f[0]].values(k, t) = parse_ll(f[3], "observed") ? 1 : 0;
  }
  return out;
}

void write_weights_csv(const fs::path& path, const std::vector<WeightDumpRow>& rows) {
  std::ostringstream os;
  os << "sequence_id,frame_idx,agent_id,li,lf,lb\n";
  char buf[160];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof(buf), "%s,%d,%s,%.6f,%.6f,%.6f\n", r.sequence_id.c_str(),
                  r.frame_idx, r.agent_id.c_str(), r.li, r.lf, r.lb);
    os << buf;
  }
  atomic_write(path, os.str());
}

// ---------------------------------------------------------------------------
// Metrica wide CSV

namespace {

struct MetricaTrack {
  std::vector<double> times;                       // seconds
  std::vector<std::string> players;                // column labels
  std::vector<std::vector<Eigen::RowVector2d>> xy; // [frame][player]
  std::vector<Eigen::RowVector2d> ball;            // [frame], NaN if absent
};

MetricaTrack read_metrica_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path.string());
  std::string l1, l2, l3;
  if (!std::getline(in, l1) || !std::getline(in, l2) || !std::getline(in, l3))
    throw FormatError("metrica: missing header rows in " + path.string());
  auto cols = split_csv_line(trim(l3));
  // Header row 3 holds Period, Frame, Time [s], then player/ball x,y pairs.
  if (cols.size() < 5 || trim(cols[0]) != "Period")
    throw FormatError("metrica: unexpected header in " + path.string());
  auto names = split_csv_line(trim(l2));
  names.resize(cols.size());

  MetricaTrack track;
  for (std::size_t c = 3; c + 1 < cols.size(); c += 2) {
    std::string label = trim(names[c]);
    if (label.empty()) label = "col" + std::to_string(c);
    track.players.push_back(label);
  }
  const bool last_is_ball = !track.players.empty() && track.players.back() == "Ball";
  if (last_is_ball) track.players.pop_back();

  std::string line;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    auto f = split_csv_line(line);
    if (f.size() < cols.size()) f.resize(cols.size());
    track.times.push_back(parse_double(f[2], "Time [s]"));
    std::vector<Eigen::RowVector2d> row;
    const std::size_t n_pairs = track.players.size() + (last_is_ball ? 1 : 0);
    for (std::size_t j = 0; j < n_pairs; ++j) {
      const std::size_t c = 3 + 2 * j;
      const std::string xs = trim(f[c]), ys = trim(f[c + 1]);
      Eigen::RowVector2d p(std::nan(""), std::nan(""));
      if (!xs.empty() && !ys.empty() && xs != "NaN" && ys != "NaN")
        p = Eigen::RowVector2d(parse_double(xs, "x"), parse_double(ys, "y"));
      if (j < track.players.size())
        row.push_back(p);
      else
        track.ball.push_back(p);
    }
    if (!last_is_ball) track.ball.push_back(Eigen::RowVector2d(std::nan(""), std::nan("")));
    track.xy.push_back(std::move(row));
  }
  return track;
}

}  // namespace

std::vector<RawSequence> read_metrica(const fs::path& home_csv, const fs::path& away_csv,
                                      const DatasetSpec& spec) {
  MetricaTrack home = read_metrica_file(home_csv);
  MetricaTrack away = read_metrica_file(away_csv);
  if (home.times.size() != away.times.size())
    throw FormatError("metrica: home/away frame counts differ");

  const auto picks = resample_indices(home.times, spec.target_hz);
  RawSequence seq;
  seq.sequence_id = home_csv.stem().string();
  const Eigen::Vector2d pitch = spec.pitch_bounds;
  for (std::size_t i = 0; i < picks.size(); ++i) {
    const int src = picks[i];
    RawFrame fr;
    auto add_team = [&](const MetricaTrack& tr, const char* prefix) {
      for (std::size_t j = 0; j < tr.players.size(); ++j) {
        const Eigen::RowVector2d p = tr.xy[src][j];
        if (std::isnan(p(0))) continue;  // substitutes / not on pitch
        fr.agents[std::string(prefix) + tr.players[j]] =
            Eigen::RowVector2d(p(0) * pitch(0), p(1) * pitch(1));
      }
    };
    add_team(home, "H_");
    add_team(away, "A_");
    const Eigen::RowVector2d b = home.ball[src];
    if (!std::isnan(b(0))) fr.ball = Eigen::RowVector2d(b(0) * pitch(0), b(1) * pitch(1));
    seq.frames[static_cast<long long>(i)] = std::move(fr);
  }
  return {seq};
}

// ---------------------------------------------------------------------------
// SportVU JSON

std::vector<RawSequence> read_sportvu(const fs::path& json_path, const DatasetSpec& spec) {
  std::ifstream in(json_path);
  if (!in) throw FormatError("cannot open " + json_path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw FormatError("sportvu: bad JSON: " + std::string(e.what()));
  }
  if (!j.contains("events")) throw FormatError("sportvu: no events array");

  constexpr double kFeet = 0.3048;
  std::vector<RawSequence> out;
  int event_idx = 0;
  for (const auto& ev : j["events"]) {
    if (!ev.contains("moments")) continue;
    std::vector<double> times;
    std::vector<RawFrame> frames;
    for (const auto& mo : ev["moments"]) {
      if (!mo.is_array() || mo.size() < 6) continue;
      const double t_ms = mo[1].get<double>();
      const auto& ents = mo[5];
      RawFrame fr;
      for (const auto& e : ents) {
        if (!e.is_array() || e.size() < 4) continue;
        const long long team = e[0].get<long long>();
        const long long player = e[1].get<long long>();
        const Eigen::RowVector2d p(e[2].get<double>() * kFeet, e[3].get<double>() * kFeet);
        if (team == -1)
          fr.ball = p;
        else
          fr.agents[std::to_string(team) + "_" + std::to_string(player)] = p;
      }
      times.push_back(t_ms / 1000.0);
      frames.push_back(std::move(fr));
    }
    if (times.empty()) continue;
    const auto picks = resample_indices(times, spec.target_hz);
    RawSequence seq;
    seq.sequence_id = json_path.stem().string() + ":" + std::to_string(event_idx++);
    for (std::size_t i = 0; i < picks.size(); ++i)
      seq.frames[static_cast<long long>(i)] = frames[picks[i]];
    out.push_back(std::move(seq));
  }
  return out;
}

// ---------------------------------------------------------------------------
// npy

NpyArray read_npy(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  char magic[6];
  in.read(magic, 6);
  if (!in || std::string(magic, 6) != "\x93NUMPY") throw FormatError("not a .npy file");
  unsigned char ver[2];
  in.read(reinterpret_cast<char*>(ver), 2);
  std::uint32_t header_len = 0;
  if (ver[0] == 1) {
    std::uint16_t l16;
    in.read(reinterpret_cast<char*>(&l16), 2);
    header_len = l16;
  } else {
    in.read(reinterpret_cast<char*>(&header_len), 4);
  }
  std::string header(header_len, '\0');
  in.read(header.data(), header_len);
  if (!in) throw FormatError("npy: truncated header");

  const bool f8 = header.find("'<f8'") != std::string::npos;
  const bool f4 = header.find("'<f4'") != std::string::npos;
  if (!f8 && !f4) throw FormatError("npy: only little-endian float32/float64 supported");
  if (header.find("'fortran_order': True") != std::string::npos)
    throw FormatError("npy: fortran order not supported");

  auto sp = header.find("'shape':");
  auto lp = header.find('(', sp);
  auto rp = header.find(')', lp);
  if (sp == std::string::npos || lp == std::string::npos || rp == std::string::npos)
    throw FormatError("npy: cannot parse shape");
  NpyArray arr;
  std::string dims = header.substr(lp + 1, rp - lp - 1);
  std::stringstream ss(dims);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    tok = trim(tok);
    if (!tok.empty()) arr.shape.push_back(std::stol(tok));
  }
  long total = 1;
  for (long d : arr.shape) total *= d;
  arr.data.resize(total);
  if (f8) {
    in.read(reinterpret_cast<char*>(arr.data.data()), total * 8);
  } else {
    std::vector<float> tmp(total);
    in.read(reinterpret_cast<char*>(tmp.data()), total * 4);
    std::copy(tmp.begin(), tmp.end(), arr.data.begin());
  }
  if (!in) throw FormatError("npy: truncated data");
  return arr;
}

std::vector<RawSequence> read_nrtsi_npy(const fs::path& npy_path, const DatasetSpec& spec,
                                        const std::string& unit) {
  NpyArray arr = read_npy(npy_path);
  if (arr.shape.size() != 3 || arr.shape[2] != 2L * spec.agents)
    throw SchemaError("nrtsi: expected shape (N, T, 2K) with K=" + std::to_string(spec.agents));
  double to_m = 1.0;
  if (unit == "yd")
    to_m = 0.9144;
  else if (unit != "m")
    throw ConfigError("nrtsi: unit must be 'yd' or 'm'");

  const long N = arr.shape[0], T = arr.shape[1], C = arr.shape[2];
  std::vector<RawSequence> out;
  out.reserve(N);
  for (long n = 0; n < N; ++n) {
    RawSequence seq;
    seq.sequence_id = npy_path.stem().string() + ":" + std::to_string(n);
    for (long t = 0; t < T; ++t) {
      RawFrame fr;
      for (int k = 0; k < spec.agents; ++k) {
        const double x = arr.data[(n * T + t) * C + 2 * k] * to_m;
        const double y = arr.data[(n * T + t) * C + 2 * k + 1] * to_m;
        fr.agents["P" + std::to_string(k)] = Eigen::RowVector2d(x, y);
      }
      seq.frames[t] = std::move(fr);
    }
    out.push_back(std::move(seq));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Manifests

void atomic_write(const fs::path& path, const std::string& text) {
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp.string());
    out << text;
  }
  fs::rename(tmp, path);
}

std::uint64_t file_fnv64(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::uint64_t h = 0xcbf29ce484222325ULL;
  char buf[1 << 16];
  while (in) {
    in.read(buf, sizeof(buf));
    h = fnv1a(buf, static_cast<std::size_t>(in.gcount()), h);
  }
  return h;
}

void write_manifest(const fs::path& artifact_path, const std::string& command_line,
                    const std::string& resolved_config, std::uint64_t seed,
                    const std::vector<ManifestInput>& inputs) {
  nlohmann::json j;
  j["command"] = command_line;
  j["config"] = resolved_config;
  j["seed"] = seed;
  j["tool_version"] = kToolVersion;
  const auto now = std::chrono::system_clock::now();
  const auto t = std::chrono::system_clock::to_time_t(now);
  char ts[64];
  std::strftime(ts, sizeof(ts), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  j["timestamp"] = ts;
  j["inputs"] = nlohmann::json::array();
  for (const auto& i : inputs) {
    char hex[32];
    std::snprintf(hex, sizeof(hex), "%016llx", static_cast<unsigned long long>(i.fnv64));
    j["inputs"].push_back({{"path", i.path}, {"fnv64", hex}});
  }
  fs::path mpath = artifact_path;
  mpath += ".manifest.json";
  atomic_write(mpath, j.dump(2) + "\n");
}

}  // namespace midas
