#include "cellprog/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include <fmt/format.h>

#include "cellprog/error.hpp"

namespace cellprog {

namespace {

// Usage regime of one group: typical pattern length and current levels.
struct Regime {
  double mean_hours;
  double current_lo;
  double current_hi;
  double rest_fraction;
  double ambient;
};

Regime regime_for(int group) {
  static const Regime table[] = {
      {4.0, 0.5, 1.5, 0.4, 24.0},
      {6.0, 1.0, 2.5, 0.3, 24.0},
      {7.0, 1.2, 3.0, 0.25, 40.0},
      {8.0, 1.5, 3.2, 0.2, 40.0},
  };
  return table[group % 4];
}

double voltage_model(double current, double soc) {
  return 3.4 + 0.7 * soc + 0.08 * current;
}

}  // namespace

double synthetic_fade(double duration, double q_thru, bool nonlinear) {
  const double hours = duration / 3600.0;
  if (!nonlinear) return -(0.001 * q_thru + 0.0008 * hours);
  // Fade peaks at intermediate throughput per pattern.
  const double u = (q_thru - 9.0) / 3.0;
  return -(0.025 * std::exp(-u * u) + 0.0008 * hours);
}

std::vector<CellRecord> generate_synthetic(const SyntheticOptions& options) {
  if (options.n_cells < 1 || options.n_groups < 1 || options.patterns_per_cell < 1 ||
      !(options.sample_interval > 0.0) || !(options.reference_duration > options.sample_interval) ||
      !(options.noise_sd >= 0.0) || !(options.initial_capacity > 0.0)) {
    throw Error(ErrorKind::InvalidConfig, "invalid synthetic dataset options");
  }
  std::mt19937_64 rng(options.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);

  std::vector<CellRecord> cells;
  for (int c = 0; c < options.n_cells; ++c) {
    const int number = c + 1;
    // Consecutive ids share a group so every group has an even and an odd cell.
    const int group = (c / 2) % options.n_groups;
    const auto regime = regime_for(group);
    CellRecord cell;
    cell.cell_id = fmt::format("cell_{:02}", number);
    cell.group = fmt::format("group_{}", group + 1);

    const double dt = options.sample_interval;
    double t = 0.0;
    double q = options.initial_capacity * (1.0 + 0.01 * gauss(rng));
    double temperature = regime.ambient;

    const auto emit = [&](double current, double soc) {
      temperature += 0.05 * (regime.ambient + 2.0 * std::abs(current) - temperature);
      cell.samples.push_back(
          {t, current, voltage_model(current, soc), temperature + 0.1 * gauss(rng)});
      t += dt;
    };
    const auto reference = [&]() {
      ReferenceEvent ref;
      ref.t_start = t;
      const double current = -q * 3600.0 / options.reference_duration;
      const auto steps = static_cast<int>(std::round(options.reference_duration / dt));
      for (int s = 0; s < steps; ++s) emit(current, 1.0 - static_cast<double>(s) / steps);
      ref.t_end = t;
      ref.capacity = q;
      cell.references.push_back(ref);
    };

    reference();
    for (int p = 0; p < options.patterns_per_cell; ++p) {
      const double pattern_start = cell.references.back().t_end;
      const double hours = regime.mean_hours * (0.6 + 0.8 * unit(rng));
      const auto steps = std::max(2, static_cast<int>(std::round(hours * 3600.0 / dt)));
      std::vector<Sample> series;
      double soc = 1.0;
      int remaining = 0;
      double current = 0.0;
      for (int s = 0; s < steps; ++s) {
        if (remaining == 0) {
          remaining = 3 + static_cast<int>(unit(rng) * 12.0);
          if (unit(rng) < regime.rest_fraction) {
            current = 0.0;
          } else {
            const double magnitude =
                regime.current_lo + (regime.current_hi - regime.current_lo) * unit(rng);
            current = soc > 0.3 ? -magnitude : magnitude;
          }
        }
        --remaining;
        const auto before = cell.samples.size();
        emit(current, soc);
        series.push_back(cell.samples[before]);
        soc = std::clamp(soc + current * dt / 3600.0 / std::max(q, 0.1), 0.0, 1.0);
      }
      // The next reference starts right after the last usage sample, so the
      // pattern window covers [pattern_start, t).
      const double q_thru = coulomb_count(series);
      const double duration = t - pattern_start;
      q += synthetic_fade(duration, q_thru, options.nonlinear) + options.noise_sd * gauss(rng);
      reference();
    }
    cells.push_back(std::move(cell));
  }
  return cells;
}

std::filesystem::path write_synthetic(const std::filesystem::path& dir,
                                      const SyntheticOptions& options) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(ErrorKind::Io, fmt::format("cannot create '{}': {}", dir.string(), ec.message()));
  const auto cells = generate_synthetic(options);
  std::vector<ManifestEntry> entries;
  for (const auto& cell : cells) {
    ManifestEntry e;
    e.cell_id = cell.cell_id;
    e.group = cell.group;
    e.telemetry_path = cell.cell_id + "_telemetry.csv";
    e.reference_path = cell.cell_id + "_references.csv";
    write_telemetry_csv(dir / e.telemetry_path, cell.samples);
    std::vector<RawReference> refs;
    for (const auto& r : cell.references) refs.push_back({r.t_start, r.t_end, r.capacity});
    write_reference_csv(dir / e.reference_path, refs);
    entries.push_back(std::move(e));
  }
  const auto manifest = dir / "manifest.json";
  write_manifest(manifest, entries);
  return manifest;
}

}  // namespace cellprog
