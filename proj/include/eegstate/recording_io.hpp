#pragma once

#include "eegstate/signal.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace eegstate {

/// Binary recording container:
///   "EEGR" | u32 version | u32 header bytes | JSON header | float32 LE payload
/// The header carries channels, rate, unit, state, dataset, rows, cols and
/// optionally coords, label and subject. Payload is row-major C x T.
inline constexpr std::uint32_t kRecordingVersion = 1;

void write_recording(const std::filesystem::path& path, const Recording& rec);
Recording read_recording(const std::filesystem::path& path);

/// Imports a delimited text table: the first row holds channel names, each
/// following row one time sample. Metadata comes from the arguments.
Recording import_delimited(const std::filesystem::path& path, double rate, Unit unit,
                           BrainState state, const std::string& dataset, char delim = ',');

/// One line per recording in a directory manifest (manifest.tsv):
///   file  state  dataset  label  split  subject
struct ManifestEntry {
  std::string file;
  BrainState state = BrainState::others;
  std::string dataset;
  int label = -1;
  std::string split = "train";
  std::string subject = "-";
};

void write_manifest(const std::filesystem::path& path, const std::vector<ManifestEntry>& entries);
std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path);

/// Reads every recording of a manifest, segments, scales and drops rejected
/// windows. Rejection counts per reason are added to `rejected` when given.
struct LoadedCorpus {
  std::vector<Segment> segments;
  std::vector<std::string> splits;  // per segment
  int rejected_amplitude = 0;
  int rejected_non_finite = 0;
};

LoadedCorpus load_corpus(const std::filesystem::path& manifest, double window_s,
                         const UniversalTemplate& tmpl = UniversalTemplate::builtin());

}  // namespace eegstate
