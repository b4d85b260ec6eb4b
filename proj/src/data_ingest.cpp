#include "cellprog/data_ingest.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>

#include <fmt/format.h>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "cellprog/csv.hpp"
#include "cellprog/error.hpp"

namespace cellprog {

namespace {

const std::vector<std::string> kTelemetryHeader{"t_s", "current_a", "voltage_v", "temp_c"};
const std::vector<std::string> kReferenceHeader{"t_start_s", "t_end_s", "capacity_ah"};

std::span<const Sample> samples_in(const std::vector<Sample>& samples, double from, double to) {
  const auto by_time = [](const Sample& s, double t) { return s.t < t; };
  const auto lo = std::lower_bound(samples.begin(), samples.end(), from, by_time);
  const auto hi = std::lower_bound(lo, samples.end(), to, by_time);
  return {lo, hi};
}

}  // namespace

double coulomb_count(std::span<const Sample> series) {
  if (series.size() < 2) {
    throw Error(ErrorKind::MalformedReference,
                fmt::format("coulomb counting needs >= 2 samples, got {}", series.size()));
  }
  double ampere_seconds = 0.0;
  for (std::size_t k = 1; k < series.size(); ++k) {
    const double dt = series[k].t - series[k - 1].t;
    if (!(dt > 0.0)) {
      throw Error(ErrorKind::Ordering,
                  fmt::format("sample times not strictly increasing at index {} (t={})", k,
                              series[k].t));
    }
    ampere_seconds += 0.5 * (std::abs(series[k].current) + std::abs(series[k - 1].current)) * dt;
  }
  return ampere_seconds / 3600.0;
}

std::vector<LoadPattern> segment_load_patterns(const CellRecord& record,
                                               const SegmentOptions& options) {
  const auto& refs = record.references;
  if (refs.size() < 2) {
    throw Error(ErrorKind::InsufficientReferences,
                fmt::format("cell {}: need >= 2 reference events, got {}", record.cell_id,
                            refs.size()));
  }
  std::vector<LoadPattern> patterns;
  patterns.reserve(refs.size() - 1);
  for (std::size_t k = 0; k + 1 < refs.size(); ++k) {
    LoadPattern p;
    p.cell_id = record.cell_id;
    p.index = static_cast<int>(k) + 1;
    p.t_start = options.include_reference_samples ? refs[k].t_start : refs[k].t_end;
    p.t_end = refs[k + 1].t_start;
    if (!(p.t_end > p.t_start)) {
      throw Error(ErrorKind::Ordering,
                  fmt::format("cell {}: load pattern {} has non-positive duration", record.cell_id,
                              p.index));
    }
    const auto window = samples_in(record.samples, p.t_start, p.t_end);
    p.series.assign(window.begin(), window.end());
    p.q_start = refs[k].capacity;
    p.q_end = refs[k + 1].capacity;
    patterns.push_back(std::move(p));
  }
  return patterns;
}

int parse_cell_number(const std::string& cell_id) {
  std::size_t end = cell_id.size();
  while (end > 0 && !std::isdigit(static_cast<unsigned char>(cell_id[end - 1]))) --end;
  std::size_t begin = end;
  while (begin > 0 && std::isdigit(static_cast<unsigned char>(cell_id[begin - 1]))) --begin;
  if (begin == end || end != cell_id.size()) {
    throw Error(ErrorKind::IdParse, fmt::format("cell id '{}' has no integer suffix", cell_id));
  }
  return std::stoi(cell_id.substr(begin, end - begin));
}

TrainTestSplit split_train_test(std::vector<CellRecord> records) {
  TrainTestSplit split;
  for (auto& r : records) {
    if (parse_cell_number(r.cell_id) % 2 == 0) {
      split.train.push_back(std::move(r));
    } else {
      split.test.push_back(std::move(r));
    }
  }
  if (split.test.empty()) spdlog::warn("train/test split: no odd-numbered cells, test set is empty");
  if (split.train.empty()) spdlog::warn("train/test split: no even-numbered cells, train set is empty");
  return split;
}

std::vector<std::string> validate_record(const CellRecord& record) {
  std::vector<std::string> problems;
  const auto& s = record.samples;
  for (std::size_t k = 0; k < s.size(); ++k) {
    if (!std::isfinite(s[k].t) || !std::isfinite(s[k].current) || !std::isfinite(s[k].voltage) ||
        !std::isfinite(s[k].temperature)) {
      problems.push_back(fmt::format("sample {} has a non-finite value", k));
      break;
    }
  }
  for (std::size_t k = 1; k < s.size(); ++k) {
    if (!(s[k].t > s[k - 1].t)) {
      problems.push_back(fmt::format("sample times not strictly increasing at index {} ({} -> {})",
                                     k, s[k - 1].t, s[k].t));
      break;
    }
  }
  const auto& refs = record.references;
  if (refs.size() < 2) {
    problems.push_back(fmt::format("need >= 2 reference events, got {}", refs.size()));
  }
  for (std::size_t k = 0; k < refs.size(); ++k) {
    const auto& r = refs[k];
    if (!(r.t_end >= r.t_start)) {
      problems.push_back(fmt::format("reference {} ends before it starts", k));
    }
    if (!std::isfinite(r.capacity) || !(r.capacity > 0.0)) {
      problems.push_back(fmt::format("reference {} capacity {} is not finite and positive", k,
                                     r.capacity));
    }
    if (k > 0 && !(r.t_start > refs[k - 1].t_end)) {
      problems.push_back(fmt::format(
          "load pattern {} has non-positive duration (reference {} starts at {} before {} ends at "
          "{})",
          k, k, r.t_start, k - 1, refs[k - 1].t_end));
    }
  }
  return problems;
}

void require_valid(const CellRecord& record) {
  const auto problems = validate_record(record);
  if (problems.empty()) return;
  std::string msg = fmt::format("cell {} is invalid:", record.cell_id);
  for (const auto& p : problems) msg += "\n  - " + p;
  throw Error(ErrorKind::InvalidRecord, msg);
}

// --- files -----------------------------------------------------------------

std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, fmt::format("cannot open manifest '{}'", path.string()));
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::Parse, fmt::format("{}: {}", path.string(), e.what()));
  }
  const auto& cells = doc.is_object() ? doc.at("cells") : doc;
  if (!cells.is_array()) {
    throw Error(ErrorKind::Parse, fmt::format("{}: manifest must list cells", path.string()));
  }
  const auto base = path.parent_path();
  const auto resolve = [&](const std::string& p) {
    std::filesystem::path fp(p);
    return fp.is_absolute() ? fp : base / fp;
  };
  std::vector<ManifestEntry> entries;
  std::set<std::string> seen;
  for (const auto& c : cells) {
    try {
      ManifestEntry e;
      e.cell_id = c.at("cell_id").is_string() ? c.at("cell_id").get<std::string>()
                                              : std::to_string(c.at("cell_id").get<long long>());
      e.telemetry_path = resolve(c.at("telemetry_path").get<std::string>());
      e.reference_path = resolve(c.at("reference_path").get<std::string>());
      if (c.contains("group")) {
        e.group = c.at("group").is_string() ? c.at("group").get<std::string>()
                                            : std::to_string(c.at("group").get<long long>());
      }
      if (!seen.insert(e.cell_id).second) {
        throw Error(ErrorKind::Parse, fmt::format("duplicate cell id '{}'", e.cell_id));
      }
      entries.push_back(std::move(e));
    } catch (const nlohmann::json::exception& ex) {
      throw Error(ErrorKind::Parse, fmt::format("{}: {}", path.string(), ex.what()));
    }
  }
  return entries;
}

void write_manifest(const std::filesystem::path& path, const std::vector<ManifestEntry>& entries) {
  nlohmann::json cells = nlohmann::json::array();
  for (const auto& e : entries) {
    cells.push_back({{"cell_id", e.cell_id},
                     {"telemetry_path", e.telemetry_path.string()},
                     {"reference_path", e.reference_path.string()},
                     {"group", e.group}});
  }
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::Io, fmt::format("cannot write '{}'", path.string()));
  out << nlohmann::json{{"cells", cells}}.dump(2) << '\n';
}

std::vector<Sample> read_telemetry_csv(const std::filesystem::path& path) {
  const auto table = csv::read(path, kTelemetryHeader);
  std::vector<Sample> samples;
  samples.reserve(table.rows.size());
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    samples.push_back(
        {table.number(r, 0), table.number(r, 1), table.number(r, 2), table.number(r, 3)});
  }
  return samples;
}

void write_telemetry_csv(const std::filesystem::path& path, std::span<const Sample> samples) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::Io, fmt::format("cannot write '{}'", path.string()));
  out << "t_s,current_a,voltage_v,temp_c\n";
  for (const auto& s : samples) {
    out << fmt::format("{},{},{},{}\n", s.t, s.current, s.voltage, s.temperature);
  }
}

std::vector<RawReference> read_reference_csv(const std::filesystem::path& path) {
  const auto table = csv::read(path, kReferenceHeader);
  std::vector<RawReference> refs;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    refs.push_back({table.number(r, 0), table.number(r, 1), table.maybe_number(r, 2)});
  }
  return refs;
}

void write_reference_csv(const std::filesystem::path& path,
                         std::span<const RawReference> references) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::Io, fmt::format("cannot write '{}'", path.string()));
  out << "t_start_s,t_end_s,capacity_ah\n";
  for (const auto& r : references) {
    out << fmt::format("{},{},{}\n", r.t_start, r.t_end,
                       r.capacity ? csv::format(*r.capacity) : std::string());
  }
}

LoadedCell load_cell(const ManifestEntry& entry) {
  LoadedCell loaded;
  auto& rec = loaded.record;
  rec.cell_id = entry.cell_id;
  rec.group = entry.group;
  rec.samples = read_telemetry_csv(entry.telemetry_path);
  for (const auto& raw : read_reference_csv(entry.reference_path)) {
    ReferenceEvent ev{raw.t_start, raw.t_end, std::numeric_limits<double>::quiet_NaN()};
    if (raw.capacity) {
      ev.capacity = *raw.capacity;
    } else {
      // Window is closed at both ends so the charge curve's end sample counts.
      const auto by_time = [](const Sample& s, double t) { return s.t < t; };
      const auto lo = std::lower_bound(rec.samples.begin(), rec.samples.end(), raw.t_start, by_time);
      auto hi = lo;
      while (hi != rec.samples.end() && hi->t <= raw.t_end) ++hi;
      try {
        ev.capacity = coulomb_count(std::span<const Sample>(lo, hi));
        loaded.warnings.push_back(fmt::format(
            "cell {}: reference [{}, {}] has no capacity; coulomb-counted {} Ah from telemetry",
            rec.cell_id, raw.t_start, raw.t_end, ev.capacity));
      } catch (const Error& e) {
        loaded.warnings.push_back(fmt::format(
            "cell {}: reference [{}, {}] has no capacity and coulomb counting failed: {}",
            rec.cell_id, raw.t_start, raw.t_end, e.what()));
      }
    }
    rec.references.push_back(ev);
  }
  for (const auto& w : loaded.warnings) spdlog::warn("{}", w);
  return loaded;
}

std::vector<CellRecord> load_dataset(const std::filesystem::path& manifest_path) {
  std::vector<CellRecord> cells;
  for (const auto& entry : read_manifest(manifest_path)) {
    auto loaded = load_cell(entry);
    require_valid(loaded.record);
    cells.push_back(std::move(loaded.record));
  }
  return cells;
}

}  // namespace cellprog
