#include "eegstate/montage.hpp"

#include "builtin_tables.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

namespace eegstate {

namespace {

std::string upper(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return out;
}

// Non-comment, non-blank rows split on whitespace.
std::vector<std::vector<std::string>> read_rows(std::string_view text) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    std::istringstream ls(line);
    std::vector<std::string> cells;
    std::string cell;
    while (ls >> cell) cells.push_back(cell);
    rows.push_back(std::move(cells));
  }
  return rows;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p);
  if (!in) throw ValidationError("cannot open table " + p.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

double parse_double(const std::string& s, std::string_view what) {
  try {
    size_t used = 0;
    double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ValidationError("bad number '" + s + "' in " + std::string(what));
  }
}

}  // namespace

const UniversalTemplate& UniversalTemplate::builtin() {
  static const UniversalTemplate tmpl = parse(
      builtin::kTemplateTsv, builtin::kRegionsTsv,
      {builtin::kPriorAffectTsv, builtin::kPriorMotorTsv, builtin::kPriorOthersTsv});
  return tmpl;
}

UniversalTemplate UniversalTemplate::load(const std::filesystem::path& template_tsv,
                                          const std::filesystem::path& regions_tsv,
                                          const std::filesystem::path& prior_dir) {
  std::array<std::string, kNumStates> priors;
  for (BrainState s : kAllStates) {
    priors[static_cast<int>(s)] =
        slurp(prior_dir / ("prior_" + std::string(to_string(s)) + ".tsv"));
  }
  return parse(slurp(template_tsv), slurp(regions_tsv), priors);
}

UniversalTemplate UniversalTemplate::parse(std::string_view template_tsv,
                                           std::string_view regions_tsv,
                                           const std::array<std::string, kNumStates>& prior_tsv) {
  UniversalTemplate t;

  std::map<std::string, int> region_index;
  for (const auto& row : read_rows(regions_tsv)) {
    if (row.size() != 2) throw ValidationError("region table rows need: index name");
    int idx = static_cast<int>(parse_double(row[0], "region table"));
    if (idx != static_cast<int>(t.region_names_.size()))
      throw ValidationError("region table indices must be 0..N-1 in order");
    region_index[row[1]] = idx;
    t.region_names_.push_back(row[1]);
  }

  auto rows = read_rows(template_tsv);
  t.coords_.resize(static_cast<Eigen::Index>(rows.size()), 3);
  for (size_t i = 0; i < rows.size(); ++i) {
    const auto& row = rows[i];
    if (row.size() != 5) throw ValidationError("template rows need: name x y z region");
    t.channel_names_.push_back(upper(row[0]));
    for (int k = 0; k < 3; ++k)
      t.coords_(static_cast<Eigen::Index>(i), k) = parse_double(row[1 + k], "template table");
    auto it = region_index.find(row[4]);
    if (it == region_index.end()) throw ValidationError("template names unknown region " + row[4]);
    t.region_of_.push_back(it->second);
  }

  for (BrainState s : kAllStates) {
    Vector w = Vector::Constant(t.num_channels(), -1.0);
    for (const auto& row : read_rows(prior_tsv[static_cast<int>(s)])) {
      if (row.size() != 2) throw ValidationError("prior rows need: name weight");
      auto idx = t.index_of(row[0]);
      if (!idx) throw ValidationError("prior table names unknown channel " + row[0]);
      w[*idx] = parse_double(row[1], "prior table");
    }
    t.priors_[static_cast<int>(s)] = std::move(w);
  }

  t.validate();
  return t;
}

void UniversalTemplate::validate() const {
  if (num_channels() != kTemplateChannels)
    throw ValidationError("template must list exactly 60 channels, got " +
                          std::to_string(num_channels()));
  if (num_regions() != kTemplateRegions)
    throw ValidationError("template must define exactly 24 regions");
  std::vector<int> count(kTemplateRegions, 0);
  for (int r : region_of_) ++count[r];
  for (int r = 0; r < kTemplateRegions; ++r)
    if (count[r] == 0) throw ValidationError("region " + region_names_[r] + " has no channels");
  for (int i = 0; i < num_channels(); ++i)
    for (int j = i + 1; j < num_channels(); ++j)
      if (channel_names_[i] == channel_names_[j])
        throw ValidationError("duplicate template channel " + channel_names_[i]);
  for (const auto& w : priors_)
    for (double v : w)
      if (!(v >= 0.0 && v <= 1.0))
        throw ValidationError("every prior entry must lie in [0,1] and every channel needs one");
}

std::optional<int> UniversalTemplate::index_of(std::string_view name) const {
  const std::string key = upper(name);
  for (int i = 0; i < num_channels(); ++i)
    if (channel_names_[i] == key) return i;
  return std::nullopt;
}

IndexList MontageMap::canonical_order() const {
  IndexList order(template_indices.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](int a, int b) { return template_indices[a] < template_indices[b]; });
  return order;
}

Matrix MontageMap::select_rows(const Matrix& raw) const {
  Matrix out(num_channels(), raw.cols());
  for (int c = 0; c < num_channels(); ++c) {
    if (kept[c] >= raw.rows()) throw ShapeError("recording has fewer rows than the montage");
    out.row(c) = raw.row(kept[c]);
  }
  return out;
}

MontageMap resolve_montage(const std::vector<std::string>& channel_names,
                           const std::optional<Coords3>& coords, const UniversalTemplate& tmpl,
                           double threshold) {
  if (channel_names.empty()) throw ValidationError("resolve_montage: no channel names");
  if (coords && coords->rows() != static_cast<Eigen::Index>(channel_names.size()))
    throw ValidationError("resolve_montage: coordinate count differs from channel count");
  {
    std::vector<std::string> keys;
    for (const auto& n : channel_names) keys.push_back(upper(n));
    std::sort(keys.begin(), keys.end());
    auto dup = std::adjacent_find(keys.begin(), keys.end());
    if (dup != keys.end()) throw ValidationError("duplicate channel name " + *dup);
  }

  struct Candidate {
    int input;
    int site;
    double dist;
  };
  std::vector<Candidate> candidates;
  const int n = static_cast<int>(channel_names.size());
  for (int i = 0; i < n; ++i) {
    if (auto idx = tmpl.index_of(channel_names[i])) {
      candidates.push_back({i, *idx, 0.0});
      continue;
    }
    if (!coords) continue;
    Eigen::RowVector3d p = coords->row(i);
    double norm = p.norm();
    if (!(norm > 0.0) || !std::isfinite(norm)) continue;
    p /= norm;
    int best = -1;
    double best_d = 0.0;
    for (int s = 0; s < tmpl.num_channels(); ++s) {
      double d = (tmpl.coords().row(s) - p).norm();
      if (best < 0 || d < best_d) {
        best = s;
        best_d = d;
      }
    }
    if (best_d <= threshold) candidates.push_back({i, best, best_d});
  }

  std::stable_sort(candidates.begin(), candidates.end(), [](const Candidate& a, const Candidate& b) {
    return a.dist < b.dist || (a.dist == b.dist && a.input < b.input);
  });
  std::vector<int> site_of(n, -1);
  std::vector<bool> taken(tmpl.num_channels(), false);
  for (const auto& c : candidates) {
    if (taken[c.site]) continue;
    taken[c.site] = true;
    site_of[c.input] = c.site;
  }

  MontageMap map;
  for (int i = 0; i < n; ++i) {
    if (site_of[i] < 0) {
      map.dropped.push_back(channel_names[i]);
      continue;
    }
    map.kept.push_back(i);
    map.channel_names.push_back(channel_names[i]);
    map.template_indices.push_back(site_of[i]);
    map.region_labels.push_back(tmpl.region_of(site_of[i]));
  }
  if (map.kept.empty()) throw EmptyMontageError("no channel could be mapped onto the template");

  map.unique_regions = map.region_labels;
  std::sort(map.unique_regions.begin(), map.unique_regions.end());
  map.unique_regions.erase(std::unique(map.unique_regions.begin(), map.unique_regions.end()),
                           map.unique_regions.end());
  map.region_members.assign(map.unique_regions.size(), {});
  for (int pos : map.canonical_order()) {
    auto it = std::lower_bound(map.unique_regions.begin(), map.unique_regions.end(),
                               map.region_labels[pos]);
    map.region_members[static_cast<size_t>(it - map.unique_regions.begin())].push_back(pos);
  }
  return map;
}

Vector state_prior(BrainState state, const MontageMap& map, const UniversalTemplate& tmpl) {
  const int s = static_cast<int>(state);
  if (s < 0 || s >= kNumStates) throw ValidationError("state_prior: unknown state");
  const Vector& w = tmpl.prior(state);
  Vector out(map.num_channels());
  for (int c = 0; c < map.num_channels(); ++c) out[c] = w[map.template_indices[c]];
  return out;
}

Matrix region_reduce(const MontageMap& map, const Matrix& features) {
  if (features.rows() != map.num_channels())
    throw ShapeError("region_reduce: expected " + std::to_string(map.num_channels()) +
                     " rows, got " + std::to_string(features.rows()));
  Matrix out = Matrix::Zero(map.num_regions(), features.cols());
  for (int j = 0; j < map.num_regions(); ++j) {
    const auto& members = map.region_members[j];
    for (int c : members) out.row(j) += features.row(c);
    out.row(j) /= static_cast<double>(members.size());
  }
  return out;
}

}  // namespace eegstate
