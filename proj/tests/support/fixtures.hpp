#pragma once

#include <cstdlib>
#include <filesystem>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include <doctest.h>

#include "cellprog/data_ingest.hpp"
#include "cellprog/error.hpp"

#define CHECK_THROWS_KIND(expr, expected_kind)                       \
  do {                                                               \
    bool thrown_ = false;                                            \
    try {                                                            \
      (void)(expr);                                                  \
    } catch (const cellprog::Error& e_) {                            \
      thrown_ = true;                                                \
      CHECK_MESSAGE(e_.kind() == (expected_kind), e_.what());        \
    }                                                                \
    CHECK_MESSAGE(thrown_, "expected a cellprog::Error");            \
  } while (false)

namespace fixtures {

class TempDir {
 public:
  TempDir() {
    std::string tmpl = (std::filesystem::temp_directory_path() / "cellprog_test_XXXXXX").string();
    if (!mkdtemp(tmpl.data())) throw std::runtime_error("mkdtemp failed");
    path_ = tmpl;
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

using Profile = std::function<cellprog::Sample(double t)>;

inline cellprog::Sample constant_sample(double t, double current = -1.0) {
  return {t, current, 3.7, 25.0};
}

/// Cell with instantaneous references at `ref_times` and samples every `dt`
/// seconds across the whole span, drawn from `profile`.
inline cellprog::CellRecord make_cell(const std::string& id, const std::vector<double>& ref_times,
                                      const std::vector<double>& capacities, double dt = 60.0,
                                      Profile profile = nullptr) {
  cellprog::CellRecord cell;
  cell.cell_id = id;
  cell.group = "g";
  for (std::size_t k = 0; k < ref_times.size(); ++k) {
    cell.references.push_back({ref_times[k], ref_times[k], capacities[k]});
  }
  const double end = ref_times.empty() ? 0.0 : ref_times.back();
  for (double t = 0.0; t < end; t += dt) {
    cell.samples.push_back(profile ? profile(t) : constant_sample(t));
  }
  return cell;
}

}  // namespace fixtures
