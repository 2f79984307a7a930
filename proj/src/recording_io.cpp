#include "eegstate/recording_io.hpp"

#include <nlohmann/json.hpp>

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace eegstate {

using nlohmann::json;

static_assert(std::endian::native == std::endian::little, "container I/O assumes little endian");

namespace {

constexpr char kMagic[4] = {'E', 'E', 'G', 'R'};

template <typename T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw ValidationError("recording container truncated");
  return v;
}

std::vector<std::string> split(const std::string& line, char delim) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ls(line);
  while (std::getline(ls, cell, delim)) {
    auto a = cell.find_first_not_of(" \t\r");
    auto b = cell.find_last_not_of(" \t\r");
    out.push_back(a == std::string::npos ? std::string() : cell.substr(a, b - a + 1));
  }
  return out;
}

}  // namespace

void write_recording(const std::filesystem::path& path, const Recording& rec) {
  if (rec.data.rows() != static_cast<Eigen::Index>(rec.channels.size()))
    throw ShapeError("write_recording: channel list and data rows differ");
  json h;
  h["channels"] = rec.channels;
  h["rate"] = rec.rate;
  h["unit"] = std::string(to_string(rec.unit));
  h["state"] = std::string(to_string(rec.state));
  h["dataset"] = rec.dataset;
  h["rows"] = rec.data.rows();
  h["cols"] = rec.data.cols();
  h["label"] = rec.label;
  h["subject"] = rec.subject;
  if (rec.coords) {
    json c = json::array();
    for (Eigen::Index i = 0; i < rec.coords->rows(); ++i)
      c.push_back({(*rec.coords)(i, 0), (*rec.coords)(i, 1), (*rec.coords)(i, 2)});
    h["coords"] = c;
  }
  const std::string header = h.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(kMagic, 4);
  put<std::uint32_t>(out, kRecordingVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(header.size()));
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> f = rec.data.cast<float>();
  out.write(reinterpret_cast<const char*>(f.data()),
            static_cast<std::streamsize>(f.size() * sizeof(float)));
  if (!out) throw std::runtime_error("short write to " + path.string());
}

Recording read_recording(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open recording " + path.string());
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0)
    throw ValidationError(path.string() + " is not a recording container");
  const auto version = get<std::uint32_t>(in);
  if (version != kRecordingVersion)
    throw ValidationError("unsupported recording version " + std::to_string(version));
  const auto len = get<std::uint32_t>(in);
  std::string header(len, '\0');
  in.read(header.data(), len);
  if (!in) throw ValidationError("recording header truncated");
  json h;
  try {
    h = json::parse(header);
  } catch (const json::exception& e) {
    throw ValidationError(std::string("recording header: ") + e.what());
  }

  Recording rec;
  try {
    rec.channels = h.at("channels").get<std::vector<std::string>>();
    rec.rate = h.at("rate").get<double>();
    rec.unit = parse_unit(h.at("unit").get<std::string>());
    rec.state = parse_state(h.at("state").get<std::string>());
    rec.dataset = h.at("dataset").get<std::string>();
    rec.label = h.value("label", -1);
    rec.subject = h.value("subject", std::string());
    const auto rows = h.at("rows").get<Eigen::Index>();
    const auto cols = h.at("cols").get<Eigen::Index>();
    if (rows != static_cast<Eigen::Index>(rec.channels.size()))
      throw ValidationError("recording header: rows differ from channel count");
    if (h.contains("coords")) {
      Coords3 c(rows, 3);
      const auto& arr = h.at("coords");
      if (static_cast<Eigen::Index>(arr.size()) != rows)
        throw ValidationError("recording header: one coordinate triple per channel");
      for (Eigen::Index i = 0; i < rows; ++i)
        for (int k = 0; k < 3; ++k) c(i, k) = arr.at(i).at(k).get<double>();
      rec.coords = c;
    }
    Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> f(rows, cols);
    in.read(reinterpret_cast<char*>(f.data()), static_cast<std::streamsize>(f.size() * sizeof(float)));
    if (!in) throw ValidationError("recording payload truncated");
    rec.data = f.cast<double>();
  } catch (const json::exception& e) {
    throw ValidationError(std::string("recording header: ") + e.what());
  }
  return rec;
}

Recording import_delimited(const std::filesystem::path& path, double rate, Unit unit,
                           BrainState state, const std::string& dataset, char delim) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw ValidationError(path.string() + " is empty");
  Recording rec;
  rec.channels = split(line, delim);
  rec.rate = rate;
  rec.unit = unit;
  rec.state = state;
  rec.dataset = dataset;
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    auto cells = split(line, delim);
    if (cells.size() != rec.channels.size())
      throw ValidationError(path.string() + ": ragged row " + std::to_string(rows.size() + 2));
    std::vector<double> v;
    for (auto& c : cells) v.push_back(std::stod(c));
    rows.push_back(std::move(v));
  }
  rec.data.resize(static_cast<Eigen::Index>(rec.channels.size()),
                  static_cast<Eigen::Index>(rows.size()));
  for (size_t t = 0; t < rows.size(); ++t)
    for (size_t c = 0; c < rec.channels.size(); ++c)
      rec.data(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(t)) = rows[t][c];
  return rec;
}

void write_manifest(const std::filesystem::path& path, const std::vector<ManifestEntry>& entries) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "# file\tstate\tdataset\tlabel\tsplit\tsubject\n";
  for (const auto& e : entries)
    out << e.file << '\t' << to_string(e.state) << '\t' << e.dataset << '\t' << e.label << '\t'
        << e.split << '\t' << (e.subject.empty() ? "-" : e.subject) << '\n';
}

std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open manifest " + path.string());
  std::vector<ManifestEntry> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    auto cells = split(line, '\t');
    if (cells.size() < 3)
      throw ValidationError(path.string() + ":" + std::to_string(lineno) +
                            ": need at least file, state, dataset");
    ManifestEntry e;
    e.file = cells[0];
    e.state = parse_state(cells[1]);
    e.dataset = cells[2];
    if (cells.size() > 3) e.label = std::stoi(cells[3]);
    if (cells.size() > 4) e.split = cells[4];
    if (cells.size() > 5) e.subject = cells[5];
    out.push_back(std::move(e));
  }
  return out;
}

LoadedCorpus load_corpus(const std::filesystem::path& manifest, double window_s,
                         const UniversalTemplate& tmpl) {
  LoadedCorpus corpus;
  const auto dir = manifest.parent_path();
  // Recordings with identical channel layouts share one montage object.
  std::vector<std::pair<std::vector<std::string>, std::shared_ptr<const MontageMap>>> cache;
  for (const auto& e : read_manifest(manifest)) {
    Recording rec = read_recording(dir / e.file);
    rec.state = e.state;
    rec.dataset = e.dataset;
    if (e.label >= 0) rec.label = e.label;
    if (e.subject != "-") rec.subject = e.subject;
    auto segs = segment(rec, window_s, tmpl);
    if (segs.empty()) continue;
    auto hit = std::find_if(cache.begin(), cache.end(),
                            [&](const auto& p) { return p.first == rec.channels && !rec.coords; });
    for (auto& s : segs) {
      if (hit != cache.end()) s.montage = hit->second;
      auto scaled = scale_and_reject(s);
      if (scaled.reason == RejectReason::amplitude) ++corpus.rejected_amplitude;
      if (scaled.reason == RejectReason::non_finite) ++corpus.rejected_non_finite;
      if (!scaled.segment) continue;
      corpus.segments.push_back(std::move(*scaled.segment));
      corpus.splits.push_back(e.split);
    }
    if (hit == cache.end() && !rec.coords) cache.emplace_back(rec.channels, segs.front().montage);
  }
  return corpus;
}

}  // namespace eegstate
