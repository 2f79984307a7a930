#pragma once

#include "eegstate/core.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace eegstate {

inline constexpr int kTemplateChannels = 60;
inline constexpr int kTemplateRegions = 24;
inline constexpr double kDefaultMatchThreshold = 0.25;

/// Fixed reference montage: 60 electrodes on the unit sphere grouped into
/// 24 hemisphere-split regions, plus per-state channel importance priors.
class UniversalTemplate {
 public:
  /// Tables compiled in from data/*.tsv.
  static const UniversalTemplate& builtin();

  /// Reads the template table, region order and one prior table per state
  /// (prior_<state>.tsv) from the given files/directory.
  static UniversalTemplate load(const std::filesystem::path& template_tsv,
                                const std::filesystem::path& regions_tsv,
                                const std::filesystem::path& prior_dir);

  static UniversalTemplate parse(std::string_view template_tsv, std::string_view regions_tsv,
                                 const std::array<std::string, kNumStates>& prior_tsv);

  int num_channels() const { return static_cast<int>(channel_names_.size()); }
  int num_regions() const { return static_cast<int>(region_names_.size()); }

  const std::vector<std::string>& channel_names() const { return channel_names_; }
  const std::vector<std::string>& region_names() const { return region_names_; }
  const Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>& coords() const { return coords_; }
  int region_of(int channel) const { return region_of_[channel]; }
  const IndexList& region_of() const { return region_of_; }
  const Vector& prior(BrainState s) const { return priors_[static_cast<int>(s)]; }

  /// Case-insensitive lookup; nullopt when the label is not on the template.
  std::optional<int> index_of(std::string_view name) const;

 private:
  void validate() const;

  std::vector<std::string> channel_names_;
  Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor> coords_;
  IndexList region_of_;
  std::vector<std::string> region_names_;
  std::array<Vector, kNumStates> priors_;
};

/// Placement of one recording's channels on the universal template.
///
/// Positions 0..C-1 refer to the kept input channels in their original
/// order; `kept` maps them back to positions in the raw channel list.
struct MontageMap {
  IndexList template_indices;             // I_ch, length C, no duplicates
  IndexList region_labels;                // I_r, per kept channel
  IndexList unique_regions;               // R_uniq, ascending
  std::vector<IndexList> region_members;  // C_j, ordered by template index
  IndexList kept;                         // raw input position of each kept channel
  std::vector<std::string> channel_names; // kept channel names
  std::vector<std::string> dropped;

  int num_channels() const { return static_cast<int>(template_indices.size()); }
  int num_regions() const { return static_cast<int>(unique_regions.size()); }

  /// Kept positions sorted by template index.
  IndexList canonical_order() const;

  /// Row selection of a raw recording onto the kept channels.
  Matrix select_rows(const Matrix& raw) const;

  bool operator==(const MontageMap&) const = default;
};

using Coords3 = Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>;

/// Exact (case-insensitive) label match first, then nearest template site by
/// chord distance on the unit sphere when coordinates are supplied. On a
/// template collision the closer channel keeps the site.
MontageMap resolve_montage(const std::vector<std::string>& channel_names,
                           const std::optional<Coords3>& coords = std::nullopt,
                           const UniversalTemplate& tmpl = UniversalTemplate::builtin(),
                           double threshold = kDefaultMatchThreshold);

/// Prior weights of `state` gathered onto the montage's channel order.
Vector state_prior(BrainState state, const MontageMap& map,
                   const UniversalTemplate& tmpl = UniversalTemplate::builtin());

/// Row j is the mean of the feature rows of region R_uniq[j].
Matrix region_reduce(const MontageMap& map, const Matrix& features);

}  // namespace eegstate
