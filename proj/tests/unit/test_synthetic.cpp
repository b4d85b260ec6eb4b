#include <fstream>
#include <set>
#include <sstream>

#include <doctest.h>

#include "cellprog/features.hpp"
#include "cellprog/synthetic.hpp"
#include "fixtures.hpp"

using namespace cellprog;

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("generated cells are valid and balanced across groups") {
  const auto cells = generate_synthetic();
  REQUIRE(cells.size() == 8);
  for (const auto& c : cells) {
    CHECK(validate_record(c).empty());
    CHECK(c.references.size() == 31);
  }
  const auto split = split_train_test(cells);
  CHECK(split.train.size() == 4);
  CHECK(split.test.size() == 4);
  std::set<std::string> train_groups, test_groups;
  for (const auto& c : split.train) train_groups.insert(c.group);
  for (const auto& c : split.test) test_groups.insert(c.group);
  CHECK(train_groups.size() == 4);
  CHECK(train_groups == test_groups);
}

TEST_CASE("generation is deterministic in the seed") {
  SyntheticOptions o;
  o.n_cells = 2;
  o.patterns_per_cell = 5;
  const auto a = generate_synthetic(o);
  const auto b = generate_synthetic(o);
  CHECK(a[1].samples.back().voltage == b[1].samples.back().voltage);
  CHECK(a[1].references.back().capacity == b[1].references.back().capacity);
  o.seed = 1;
  CHECK(generate_synthetic(o)[1].references.back().capacity != a[1].references.back().capacity);
}

TEST_CASE("capacity changes follow the fade law up to noise") {
  SyntheticOptions o;
  o.noise_sd = 0.0;
  for (bool nonlinear : {false, true}) {
    o.nonlinear = nonlinear;
    const auto cells = generate_synthetic(o);
    for (const auto& p : segment_load_patterns(cells[0])) {
      const double expected = synthetic_fade(p.duration(), coulomb_count(p.series), nonlinear);
      CHECK(p.delta_q() == doctest::Approx(expected).epsilon(1e-6));
    }
  }
  CHECK(synthetic_fade(3600.0, 0.0, false) == doctest::Approx(-0.0008));
  CHECK(synthetic_fade(0.0, 10.0, false) == doctest::Approx(-0.01));
  // The nonlinear fade is not monotone in throughput.
  CHECK(synthetic_fade(0.0, 9.0, true) < synthetic_fade(0.0, 3.0, true));
  CHECK(synthetic_fade(0.0, 9.0, true) < synthetic_fade(0.0, 15.0, true));
}

TEST_CASE("written datasets load back and are byte-identical on rerun") {
  fixtures::TempDir a, b;
  SyntheticOptions o;
  o.n_cells = 2;
  o.patterns_per_cell = 4;
  const auto ma = write_synthetic(a.path(), o);
  write_synthetic(b.path(), o);
  const auto loaded = load_dataset(ma);
  REQUIRE(loaded.size() == 2);
  const auto direct = generate_synthetic(o);
  CHECK(loaded[0].references.size() == direct[0].references.size());
  CHECK(loaded[0].references.back().capacity == doctest::Approx(direct[0].references.back().capacity).epsilon(1e-12));
  for (const auto& e : std::filesystem::recursive_directory_iterator(a.path())) {
    if (!e.is_regular_file()) continue;
    const auto rel = std::filesystem::relative(e.path(), a.path());
    CHECK_MESSAGE(slurp(e.path()) == slurp(b.path() / rel), rel.string());
  }
}
