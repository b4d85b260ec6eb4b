#include "cellprog/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <map>
#include <mutex>
#include <set>
#include <thread>

#include <fmt/format.h>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "cellprog/csv.hpp"
#include "cellprog/error.hpp"
#include "cellprog/features.hpp"

namespace cellprog {

namespace {

namespace fs = std::filesystem;

// All artifact writes funnel through one writer so concurrent workers never
// interleave on the file system.
class SerialWriter {
 public:
  void write(const fs::path& path, const std::string& content) {
    std::lock_guard lock(mutex_);
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorKind::Io, fmt::format("cannot write '{}'", path.string()));
    out << content;
    if (!out) throw Error(ErrorKind::Io, fmt::format("write failed for '{}'", path.string()));
  }

  template <typename F>
  void with_lock(F&& f) {
    std::lock_guard lock(mutex_);
    f();
  }

 private:
  std::mutex mutex_;
};

// Runs job(i) for i in [0, n) on up to `threads` workers. Failures are
// rethrown for the lowest failing index so errors do not depend on timing.
template <typename Job>
void parallel_for(std::size_t n, int threads, Job job) {
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  const auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        job(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const auto count = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(threads, 1)));
  if (count <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < count; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

std::string dump(const nlohmann::json& j) { return j.dump(2) + "\n"; }

Error with_context(const Error& e, const std::string& context) {
  return Error(e.kind(), fmt::format("{}: {}", context, e.what()));
}

}  // namespace

void ExperimentConfig::validate() const {
  if (models.empty()) throw Error(ErrorKind::InvalidConfig, "experiment has no model configs");
  std::set<std::string> names;
  for (const auto& m : models) {
    if (!names.insert(m.name).second) {
      throw Error(ErrorKind::InvalidConfig, fmt::format("duplicate model name '{}'", m.name));
    }
    m.features.validate();
    m.boost.validate();
  }
  if (train_cells.empty() != test_cells.empty()) {
    throw Error(ErrorKind::InvalidConfig, "train_cells and test_cells must be given together");
  }
  const std::set<std::string> train(train_cells.begin(), train_cells.end());
  for (const auto& id : test_cells) {
    if (train.count(id)) {
      throw Error(ErrorKind::InvalidConfig, fmt::format("cell '{}' is in both train and test", id));
    }
  }
  if (threads < 1) throw Error(ErrorKind::InvalidConfig, "threads must be >= 1");
}

void to_json(nlohmann::json& j, const ExperimentConfig& c) {
  j = {{"manifest", c.manifest.generic_string()},
       {"models", c.models},
       {"train_cells", c.train_cells},
       {"test_cells", c.test_cells},
       {"output_dir", c.output_dir.generic_string()},
       {"threads", c.threads}};
  j["seed"] = c.seed ? nlohmann::json(*c.seed) : nlohmann::json(nullptr);
}

ExperimentConfig experiment_from_json(const nlohmann::json& j, const fs::path& base_dir) {
  try {
    ExperimentConfig c;
    const auto resolve = [&](const std::string& p) {
      fs::path path(p);
      return path.is_relative() && !base_dir.empty() ? base_dir / path : path;
    };
    if (j.contains("manifest")) c.manifest = resolve(j.at("manifest").get<std::string>());
    if (j.contains("output_dir")) c.output_dir = resolve(j.at("output_dir").get<std::string>());
    if (j.contains("models")) {
      c.models.clear();
      for (const auto& m : j.at("models")) {
        // A bare preset number or name is shorthand for {"preset": ...}.
        if (m.is_object()) {
          c.models.push_back(m.get<ModelConfig>());
        } else {
          c.models.push_back(nlohmann::json{{"preset", m}}.get<ModelConfig>());
        }
      }
    }
    if (j.contains("train_cells")) c.train_cells = j.at("train_cells").get<std::vector<std::string>>();
    if (j.contains("test_cells")) c.test_cells = j.at("test_cells").get<std::vector<std::string>>();
    if (j.contains("seed") && !j.at("seed").is_null()) c.seed = j.at("seed").get<std::uint64_t>();
    c.threads = j.value("threads", c.threads);
    c.validate();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::InvalidConfig, fmt::format("invalid experiment config: {}", e.what()));
  }
}

TrainTestSplit split_cells(std::vector<CellRecord> cells, const ExperimentConfig& config) {
  if (config.train_cells.empty()) return split_train_test(std::move(cells));
  TrainTestSplit split;
  const std::set<std::string> train(config.train_cells.begin(), config.train_cells.end());
  const std::set<std::string> test(config.test_cells.begin(), config.test_cells.end());
  std::set<std::string> seen;
  for (auto& c : cells) {
    seen.insert(c.cell_id);
    if (train.count(c.cell_id)) {
      split.train.push_back(std::move(c));
    } else if (test.count(c.cell_id)) {
      split.test.push_back(std::move(c));
    }
  }
  for (const auto* list : {&config.train_cells, &config.test_cells}) {
    for (const auto& id : *list) {
      if (!seen.count(id)) {
        throw Error(ErrorKind::InvalidConfig, fmt::format("split names unknown cell '{}'", id));
      }
    }
  }
  return split;
}

int effective_threads(int requested) {
  int n = std::max(requested, 1);
  if (const char* env = std::getenv("CELLPROG_THREADS")) {
    const std::string_view text(env);
    int cap = 0;
    const auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), cap);
    if (ec != std::errc() || end != text.data() + text.size() || cap < 1) {
      throw Error(ErrorKind::InvalidConfig, fmt::format("CELLPROG_THREADS='{}' is not a positive integer", env));
    }
    n = std::min(n, cap);
  }
  return n;
}

std::vector<ModelResult> run_models(const std::vector<ModelConfig>& models,
                                    const TrainTestSplit& split, int threads,
                                    std::vector<TransitionModel>* trained) {
  if (split.train.empty()) throw Error(ErrorKind::EmptyDataset, "no training cells");
  if (split.test.empty()) throw Error(ErrorKind::EmptyDataset, "no test cells");
  std::vector<ModelResult> results(models.size());
  std::vector<std::optional<TransitionModel>> fitted(models.size());
  parallel_for(models.size(), threads, [&](std::size_t i) {
    const auto& config = models[i];
    try {
      spdlog::info("training {} on {} cells", config.name, split.train.size());
      auto model = TransitionModel::train(split.train, config);
      ModelResult r;
      r.config = config;
      for (const auto& cell : split.test) {
        try {
          r.forecasts.push_back(forecast_cell(model, cell));
        } catch (const Error& e) {
          throw with_context(e, fmt::format("cell {}", cell.cell_id));
        }
      }
      r.report = evaluate(r.forecasts);
      results[i] = std::move(r);
      fitted[i] = std::move(model);
    } catch (const Error& e) {
      throw with_context(e, fmt::format("model {}", config.name));
    }
  });
  if (trained) {
    trained->clear();
    for (auto& m : fitted) trained->push_back(std::move(*m));
  }
  return results;
}

std::vector<ModelResult> run_experiment(const ExperimentConfig& config) {
  config.validate();
  auto models = config.models;
  if (config.seed) {
    for (auto& m : models) {
      m.gp.seed = *config.seed;
      m.boost.seed = *config.seed;
    }
  }
  const auto split = split_cells(load_dataset(config.manifest), config);
  const int threads = effective_threads(config.threads);
  std::vector<TransitionModel> trained;
  auto results = run_models(models, split, threads, &trained);

  SerialWriter writer;
  const auto& out = config.output_dir;
  std::vector<TableRow> rows;
  parallel_for(results.size(), threads, [&](std::size_t i) {
    const auto& r = results[i];
    nlohmann::json report = r.report;
    report["model"] = r.config.name;
    report["config"] = r.config;
    writer.write(out / "reports" / (r.config.name + ".json"), dump(report));
    writer.write(out / "models" / (r.config.name + ".json"), dump(trained[i].to_json()));
    for (const auto& f : r.forecasts) {
      const auto path = out / "forecasts" / r.config.name / (f.cell_id + ".csv");
      writer.with_lock([&] {
        std::error_code ec;
        fs::create_directories(path.parent_path(), ec);
        write_forecast_csv(path, f);
      });
    }
  });
  for (const auto& r : results) {
    auto row = r.config.describe();
    row.report = r.report;
    rows.push_back(std::move(row));
  }
  writer.write(out / "table.txt", render_table(rows));
  return results;
}

namespace {

void append_histogram(std::string& out, const std::string& name, const std::vector<double>& values,
                      int bins) {
  if (values.empty()) return;
  const auto [lo_it, hi_it] = std::minmax_element(values.begin(), values.end());
  double lo = *lo_it;
  double hi = *hi_it;
  if (hi <= lo) hi = lo + 1.0;
  std::vector<long> counts(static_cast<std::size_t>(bins), 0);
  const double width = (hi - lo) / bins;
  for (double v : values) {
    auto b = static_cast<int>((v - lo) / width);
    counts[static_cast<std::size_t>(std::clamp(b, 0, bins - 1))]++;
  }
  for (int b = 0; b < bins; ++b) {
    const double count = static_cast<double>(counts[static_cast<std::size_t>(b)]);
    out += name + "," +
           csv::join({lo + b * width, lo + (b + 1) * width, count,
                      count / (static_cast<double>(values.size()) * width)}) +
           "\n";
  }
}

std::vector<fs::path> sorted_entries(const fs::path& dir, bool directories) {
  std::vector<fs::path> out;
  if (!fs::is_directory(dir)) return out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (directories ? e.is_directory() : (e.is_regular_file() && e.path().extension() == ".csv")) {
      out.push_back(e.path());
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

std::vector<fs::path> write_plot_data(const std::optional<fs::path>& manifest,
                                      const std::optional<fs::path>& results,
                                      const fs::path& out_dir) {
  if (!manifest && !results) {
    throw Error(ErrorKind::InvalidConfig, "plot-data needs a manifest or a results directory");
  }
  SerialWriter writer;
  std::vector<fs::path> written;
  const auto emit = [&](const std::string& name, const std::string& content) {
    const auto path = out_dir / name;
    writer.write(path, content);
    written.push_back(path);
  };

  if (manifest) {
    auto cells = load_dataset(*manifest);
    if (cells.empty()) throw Error(ErrorKind::EmptyOutput, "manifest lists no cells");
    std::stable_sort(cells.begin(), cells.end(), [](const CellRecord& a, const CellRecord& b) {
      return a.group < b.group;
    });
    std::vector<double> dts, qthrus, currents, voltages, temps;
    std::string patterns = "cell_id,group,pattern,dt_s,q_thru_ah,dq_ah\n";
    std::string capacity = "group,cell_id,reference,t_days,capacity_ah\n";
    for (const auto& cell : cells) {
      for (const auto& s : cell.samples) {
        currents.push_back(s.current);
        voltages.push_back(s.voltage);
        temps.push_back(s.temperature);
      }
      for (std::size_t k = 0; k < cell.references.size(); ++k) {
        const auto& r = cell.references[k];
        capacity += fmt::format("{},{},{},{}\n", cell.group, cell.cell_id, k + 1,
                                csv::join({r.t_end / 86400.0, r.capacity}));
      }
      for (const auto& p : segment_load_patterns(cell)) {
        const double q_thru = p.series.size() >= 2 ? coulomb_count(p.series) : 0.0;
        dts.push_back(p.duration());
        qthrus.push_back(q_thru);
        patterns += fmt::format("{},{},{},{}\n", cell.cell_id, cell.group, p.index,
                                csv::join({p.duration(), q_thru, p.delta_q()}));
      }
    }
    std::string hist = "parameter,bin_lower,bin_upper,count,density\n";
    append_histogram(hist, "dt_s", dts, 40);
    append_histogram(hist, "q_thru_ah", qthrus, 40);
    append_histogram(hist, "current_a", currents, 40);
    append_histogram(hist, "voltage_v", voltages, 40);
    append_histogram(hist, "temp_c", temps, 40);
    emit("input_histograms.csv", hist);
    emit("pattern_inputs.csv", patterns);
    emit("capacity_series.csv", capacity);
  }

  if (results) {
    std::string scatter = "model,cell_id,t_days,dq_true_ah,dq_pred_ah,dq_2sigma_ah\n";
    std::string traj = "model,cell_id,t_days,q_true_ah,q_pred_ah,q_lower_ah,q_upper_ah\n";
    long rows = 0;
    for (const auto& model_dir : sorted_entries(*results / "forecasts", true)) {
      const auto model = model_dir.filename().string();
      for (const auto& file : sorted_entries(model_dir, false)) {
        const auto cell = file.stem().string();
        const auto f = read_forecast_csv(file, cell);
        for (Eigen::Index k = 0; k < f.dq_mean.size(); ++k) {
          const double t_days = f.t_end(k) / 86400.0;
          scatter += fmt::format("{},{},{}\n", model, cell,
                                 csv::join({t_days, f.dq_true(k), f.dq_mean(k), 2.0 * f.dq_sigma(k)}));
          traj += fmt::format("{},{},{}\n", model, cell,
                              csv::join({t_days, f.q_true(k), f.q_mean(k),
                                         f.q_mean(k) - 2.0 * f.q_sigma(k),
                                         f.q_mean(k) + 2.0 * f.q_sigma(k)}));
          ++rows;
        }
      }
    }
    if (rows == 0) {
      throw Error(ErrorKind::EmptyOutput,
                  fmt::format("no forecast rows under '{}'", (*results / "forecasts").string()));
    }
    emit("dq_scatter.csv", scatter);
    emit("trajectories.csv", traj);
  }
  return written;
}

}  // namespace cellprog
