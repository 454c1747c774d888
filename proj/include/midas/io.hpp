#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "midas/dataset.hpp"
#include "midas/masking.hpp"
#include "midas/types.hpp"

namespace midas {

// Canonical trajectory CSV: header `sequence_id,frame_idx,agent_id,x,y`,
// meters, frame_idx 0-based at the target rate. Ball rows use agent_id=BALL.
std::vector<RawSequence> read_canonical_csv(const std::filesystem::path& path);
void write_canonical_csv(const std::filesystem::path& path,
                         const std::vector<TrajectoryWindow>& windows);

// Mask CSV: `sequence_id,frame_idx,agent_id,observed`.
void write_mask_csv(const std::filesystem::path& path, const std::vector<TrajectoryWindow>& windows,
                    const std::vector<MaskMatrix>& masks);
std::map<std::string, MaskMatrix> read_mask_csv(const std::filesystem::path& path,
                                                const std::vector<TrajectoryWindow>& windows);

// Ensemble-weight dump: `sequence_id,frame_idx,agent_id,li,lf,lb` on missing
// frames.
struct WeightDumpRow {
  std::string sequence_id;
  int frame_idx;
  std::string agent_id;
  double li, lf, lb;
};
void write_weights_csv(const std::filesystem::path& path, const std::vector<WeightDumpRow>& rows);

// Format adapters. Each one converts a raw source into canonical sequences at
// the target rate; `midas preprocess` then writes the canonical CSV.
//
// Metrica sample data: one wide CSV per team (three header rows, normalized
// coordinates). Coordinates are scaled onto a 105 x 68 pitch.
std::vector<RawSequence> read_metrica(const std::filesystem::path& home_csv,
                                      const std::filesystem::path& away_csv,
                                      const DatasetSpec& spec);

// SportVU event JSON: {"events":[{"moments":[[q, unix_ms, clock, shot, null,
// [[team, player, x, y, z], ...]], ...]}]}. Court coordinates in feet.
std::vector<RawSequence> read_sportvu(const std::filesystem::path& json_path,
                                      const DatasetSpec& spec);

// NRTSI-style preprocessed arrays: a .npy tensor of shape (N, T, 2K) holding
// per-frame agent coordinates, row-major. Values in yards unless unit says
// otherwise ("m", "yd").
std::vector<RawSequence> read_nrtsi_npy(const std::filesystem::path& npy_path,
                                        const DatasetSpec& spec, const std::string& unit = "yd");

// Minimal .npy reader (little-endian f4/f8, C order).
struct NpyArray {
  std::vector<long> shape;
  std::vector<double> data;  // row-major
};
NpyArray read_npy(const std::filesystem::path& path);

// Writes `text` to `path` atomically (temp file + rename).
void atomic_write(const std::filesystem::path& path, const std::string& text);

// Run manifest written beside every produced artifact.
struct ManifestInput {
  std::string path;
  std::uint64_t fnv64 = 0;
};
void write_manifest(const std::filesystem::path& artifact_path, const std::string& command_line,
                    const std::string& resolved_config, std::uint64_t seed,
                    const std::vector<ManifestInput>& inputs);

std::uint64_t file_fnv64(const std::filesystem::path& path);

inline constexpr const char* kToolVersion = "0.1.0";

}  // namespace midas
