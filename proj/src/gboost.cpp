#include "cellprog/gboost.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "cellprog/error.hpp"

namespace cellprog {

namespace {

struct SplitChoice {
  int feature = -1;
  double threshold = 0.0;
  double gain = 0.0;
};

class TreeBuilder {
 public:
  TreeBuilder(const Eigen::MatrixXd& X, const Eigen::VectorXd& gradient,
              const Eigen::VectorXd& residual, const BoostConfig& config, double tau)
      : X_(X), g_(gradient), r_(residual), config_(config), tau_(tau) {}

  RegressionTree build(std::vector<Eigen::Index> rows) {
    RegressionTree tree;
    tree.nodes.emplace_back();
    grow(tree, 0, std::move(rows), 0);
    return tree;
  }

 private:
  SplitChoice best_split(const std::vector<Eigen::Index>& rows) const {
    SplitChoice best;
    const auto n = rows.size();
    const auto min_leaf = static_cast<std::size_t>(config_.min_samples_leaf);
    if (n < 2 * min_leaf) return best;
    double total = 0.0;
    for (auto i : rows) total += g_(i);
    const double parent = total * total / static_cast<double>(n);

    std::vector<Eigen::Index> order = rows;
    for (Eigen::Index f = 0; f < X_.cols(); ++f) {
      std::stable_sort(order.begin(), order.end(),
                       [&](Eigen::Index a, Eigen::Index b) { return X_(a, f) < X_(b, f); });
      double left = 0.0;
      for (std::size_t k = 0; k + 1 < n; ++k) {
        left += g_(order[k]);
        const std::size_t n_left = k + 1;
        if (n_left < min_leaf || n - n_left < min_leaf) continue;
        const double lo = X_(order[k], f);
        const double hi = X_(order[k + 1], f);
        if (!(hi > lo)) continue;
        const double right = total - left;
        const double gain = left * left / static_cast<double>(n_left) +
                            right * right / static_cast<double>(n - n_left) - parent;
        if (gain > best.gain + 1e-12) {
          best.feature = static_cast<int>(f);
          best.threshold = lo + 0.5 * (hi - lo);
          if (!(best.threshold < hi)) best.threshold = lo;
          best.gain = gain;
        }
      }
    }
    return best;
  }

  void grow(RegressionTree& tree, std::size_t node, std::vector<Eigen::Index> rows, int depth) {
    const SplitChoice split =
        depth < config_.max_depth ? best_split(rows) : SplitChoice{};
    if (split.feature < 0) {
      std::vector<double> res;
      res.reserve(rows.size());
      for (auto i : rows) res.push_back(r_(i));
      tree.nodes[node].value = quantile_of(std::move(res), tau_);
      return;
    }
    std::vector<Eigen::Index> left_rows, right_rows;
    for (auto i : rows) {
      (X_(i, split.feature) <= split.threshold ? left_rows : right_rows).push_back(i);
    }
    rows.clear();
    rows.shrink_to_fit();
    const int left = static_cast<int>(tree.nodes.size());
    tree.nodes.emplace_back();
    const int right = static_cast<int>(tree.nodes.size());
    tree.nodes.emplace_back();
    tree.nodes[node].feature = split.feature;
    tree.nodes[node].threshold = split.threshold;
    tree.nodes[node].left = left;
    tree.nodes[node].right = right;
    grow(tree, static_cast<std::size_t>(left), std::move(left_rows), depth + 1);
    grow(tree, static_cast<std::size_t>(right), std::move(right_rows), depth + 1);
  }

  const Eigen::MatrixXd& X_;
  const Eigen::VectorXd& g_;
  const Eigen::VectorXd& r_;
  const BoostConfig& config_;
  double tau_;
};

QuantileBooster boost_one(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                          const BoostConfig& config, double tau, std::uint64_t seed) {
  QuantileBooster b;
  b.tau = tau;
  b.init = quantile_of(std::vector<double>(y.data(), y.data() + y.size()), tau);
  Eigen::VectorXd F = Eigen::VectorXd::Constant(y.size(), b.init);
  b.train_loss.push_back(pinball_loss(y, F, tau));

  std::mt19937_64 rng(seed);
  std::vector<Eigen::Index> all(static_cast<std::size_t>(y.size()));
  std::iota(all.begin(), all.end(), Eigen::Index{0});
  const auto n_sub = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::lround(config.subsample * static_cast<double>(all.size()))));

  Eigen::VectorXd gradient(y.size());
  Eigen::VectorXd residual(y.size());
  for (int stage = 0; stage < config.n_stages; ++stage) {
    residual = y - F;
    for (Eigen::Index i = 0; i < y.size(); ++i) gradient(i) = residual(i) < 0.0 ? tau - 1.0 : tau;

    std::vector<Eigen::Index> rows = all;
    if (n_sub < rows.size()) {
      std::shuffle(rows.begin(), rows.end(), rng);
      rows.resize(n_sub);
      std::sort(rows.begin(), rows.end());
    }
    TreeBuilder builder(X, gradient, residual, config, tau);
    RegressionTree tree = builder.build(std::move(rows));
    for (auto& node : tree.nodes) {
      if (node.is_leaf()) node.value *= config.learning_rate;
    }
    for (Eigen::Index i = 0; i < y.size(); ++i) F(i) += tree.predict(X.row(i));
    b.trees.push_back(std::move(tree));
    b.train_loss.push_back(pinball_loss(y, F, tau));
  }
  return b;
}

nlohmann::json tree_to_json(const RegressionTree& t) {
  nlohmann::json nodes = nlohmann::json::array();
  for (const auto& n : t.nodes) {
    if (n.is_leaf()) {
      nodes.push_back({{"value", n.value}});
    } else {
      nodes.push_back(
          {{"feature", n.feature}, {"threshold", n.threshold}, {"left", n.left}, {"right", n.right}});
    }
  }
  return nodes;
}

RegressionTree tree_from_json(const nlohmann::json& j, int input_dim) {
  RegressionTree t;
  for (const auto& n : j) {
    TreeNode node;
    if (n.contains("feature")) {
      node.feature = n.at("feature").get<int>();
      node.threshold = n.at("threshold").get<double>();
      node.left = n.at("left").get<int>();
      node.right = n.at("right").get<int>();
    } else {
      node.value = n.at("value").get<double>();
    }
    t.nodes.push_back(node);
  }
  const int size = static_cast<int>(t.nodes.size());
  for (const auto& n : t.nodes) {
    if (!n.is_leaf() && (n.feature >= input_dim || n.left <= 0 || n.right <= 0 || n.left >= size ||
                         n.right >= size)) {
      throw Error(ErrorKind::Parse, "tree node references an invalid child or feature");
    }
  }
  if (t.nodes.empty()) throw Error(ErrorKind::Parse, "empty tree");
  return t;
}

}  // namespace

void BoostConfig::validate() const {
  if (n_stages < 0) throw Error(ErrorKind::InvalidConfig, "n_stages must be >= 0");
  if (!(learning_rate > 0.0 && learning_rate <= 1.0)) {
    throw Error(ErrorKind::InvalidConfig, "learning_rate must lie in (0, 1]");
  }
  if (max_depth < 0) throw Error(ErrorKind::InvalidConfig, "max_depth must be >= 0");
  if (min_samples_leaf < 1) throw Error(ErrorKind::InvalidConfig, "min_samples_leaf must be >= 1");
  if (!(subsample > 0.0 && subsample <= 1.0)) {
    throw Error(ErrorKind::InvalidConfig, "subsample must lie in (0, 1]");
  }
  bool has_median = false;
  for (std::size_t k = 0; k < quantiles.size(); ++k) {
    if (!(quantiles[k] > 0.0 && quantiles[k] < 1.0)) {
      throw Error(ErrorKind::InvalidConfig, fmt::format("quantile {} outside (0, 1)", quantiles[k]));
    }
    if (k > 0 && !(quantiles[k] > quantiles[k - 1])) {
      throw Error(ErrorKind::InvalidConfig, "quantiles must be strictly increasing");
    }
    has_median = has_median || quantiles[k] == 0.5;
  }
  if (!has_median) throw Error(ErrorKind::InvalidConfig, "quantiles must include 0.5");
}

void to_json(nlohmann::json& j, const BoostConfig& c) {
  j = {{"n_stages", c.n_stages},   {"learning_rate", c.learning_rate},
       {"max_depth", c.max_depth}, {"min_samples_leaf", c.min_samples_leaf},
       {"quantiles", c.quantiles}, {"subsample", c.subsample},
       {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, BoostConfig& c) {
  BoostConfig b;
  b.n_stages = j.value("n_stages", b.n_stages);
  b.learning_rate = j.value("learning_rate", b.learning_rate);
  b.max_depth = j.value("max_depth", b.max_depth);
  b.min_samples_leaf = j.value("min_samples_leaf", b.min_samples_leaf);
  b.quantiles = j.value("quantiles", b.quantiles);
  b.subsample = j.value("subsample", b.subsample);
  b.seed = j.value("seed", b.seed);
  b.validate();
  c = std::move(b);
}

double RegressionTree::predict(const Eigen::Ref<const Eigen::RowVectorXd, 0, Eigen::InnerStride<>>& x) const {
  std::size_t node = 0;
  while (!nodes[node].is_leaf()) {
    const auto& n = nodes[node];
    node = static_cast<std::size_t>(x(n.feature) <= n.threshold ? n.left : n.right);
  }
  return nodes[node].value;
}

Eigen::VectorXd QuantileBooster::predict(const Eigen::MatrixXd& X) const {
  Eigen::VectorXd out = Eigen::VectorXd::Constant(X.rows(), init);
  for (const auto& t : trees) {
    for (Eigen::Index i = 0; i < X.rows(); ++i) out(i) += t.predict(X.row(i));
  }
  return out;
}

Eigen::MatrixXd QuantileEnsemble::predict_quantiles(const Eigen::MatrixXd& X) const {
  if (X.cols() != input_dim) {
    throw Error(ErrorKind::DimensionMismatch,
                fmt::format("inputs have {} columns, ensemble expects {}", X.cols(), input_dim));
  }
  Eigen::MatrixXd Q(X.rows(), static_cast<Eigen::Index>(boosters.size()));
  for (std::size_t q = 0; q < boosters.size(); ++q) {
    Q.col(static_cast<Eigen::Index>(q)) = boosters[q].predict(X);
  }
  return Q;
}

const QuantileBooster& QuantileEnsemble::booster(double tau) const {
  for (const auto& b : boosters) {
    if (std::abs(b.tau - tau) < 1e-5) return b;
  }
  throw Error(ErrorKind::InvalidConfig, fmt::format("ensemble has no quantile {}", tau));
}

nlohmann::json QuantileEnsemble::to_json() const {
  nlohmann::json bs = nlohmann::json::array();
  for (const auto& b : boosters) {
    nlohmann::json trees = nlohmann::json::array();
    for (const auto& t : b.trees) trees.push_back(tree_to_json(t));
    bs.push_back({{"tau", b.tau}, {"init", b.init}, {"trees", trees}, {"train_loss", b.train_loss}});
  }
  return {{"format", "cellprog.gboost"}, {"config", config}, {"input_dim", input_dim},
          {"boosters", bs}};
}

QuantileEnsemble QuantileEnsemble::from_json(const nlohmann::json& doc) {
  try {
    if (doc.value("format", "") != "cellprog.gboost") {
      throw Error(ErrorKind::Parse, "not a serialized gradient-boosting ensemble");
    }
    QuantileEnsemble e;
    e.config = doc.at("config").get<BoostConfig>();
    e.input_dim = doc.at("input_dim").get<int>();
    for (const auto& jb : doc.at("boosters")) {
      QuantileBooster b;
      b.tau = jb.at("tau").get<double>();
      b.init = jb.at("init").get<double>();
      for (const auto& jt : jb.at("trees")) b.trees.push_back(tree_from_json(jt, e.input_dim));
      b.train_loss = jb.value("train_loss", std::vector<double>{});
      e.boosters.push_back(std::move(b));
    }
    if (e.boosters.size() != e.config.quantiles.size()) {
      throw Error(ErrorKind::Parse, "booster count does not match configured quantiles");
    }
    return e;
  } catch (const nlohmann::json::exception& ex) {
    throw Error(ErrorKind::Parse, fmt::format("invalid ensemble document: {}", ex.what()));
  }
}

double pinball_loss(const Eigen::VectorXd& y, const Eigen::VectorXd& pred, double tau) {
  if (y.size() != pred.size()) throw Error(ErrorKind::LengthMismatch, "pinball loss length mismatch");
  if (y.size() == 0) throw Error(ErrorKind::EmptyInput, "pinball loss of empty input");
  double total = 0.0;
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    const double u = y(i) - pred(i);
    total += u >= 0.0 ? tau * u : (tau - 1.0) * u;
  }
  return total / static_cast<double>(y.size());
}

double quantile_of(std::vector<double> values, double tau) {
  if (values.empty()) throw Error(ErrorKind::EmptyInput, "quantile of empty sample");
  const auto n = values.size();
  const double pos = std::ceil(tau * static_cast<double>(n)) - 1.0;
  const auto k = static_cast<std::size_t>(std::clamp(pos, 0.0, static_cast<double>(n - 1)));
  std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(k), values.end());
  return values[k];
}

QuantileEnsemble fit_quantile(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                              const BoostConfig& config) {
  config.validate();
  if (X.rows() != y.size()) {
    throw Error(ErrorKind::DimensionMismatch,
                fmt::format("X has {} rows but y has {} entries", X.rows(), y.size()));
  }
  if (y.size() < config.min_samples_leaf || y.size() == 0) {
    throw Error(ErrorKind::EmptyInput,
                fmt::format("gradient boosting needs >= {} rows, got {}",
                            std::max(1, config.min_samples_leaf), y.size()));
  }
  if (!X.allFinite() || !y.allFinite()) {
    throw Error(ErrorKind::InvalidConfig, "gradient boosting data must be finite");
  }
  QuantileEnsemble e;
  e.config = config;
  e.input_dim = static_cast<int>(X.cols());
  for (std::size_t q = 0; q < config.quantiles.size(); ++q) {
    e.boosters.push_back(boost_one(X, y, config, config.quantiles[q], config.seed + q));
  }
  return e;
}

IntervalPrediction predict_interval(const QuantileEnsemble& ensemble, const Eigen::MatrixXd& X,
                                    double sigma_level) {
  if (!(sigma_level > 0.0)) throw Error(ErrorKind::InvalidConfig, "sigma_level must be > 0");
  const double tail = 0.5 * std::erfc(sigma_level / std::sqrt(2.0));
  const auto find = [&](double tau) {
    for (std::size_t q = 0; q < ensemble.boosters.size(); ++q) {
      if (std::abs(ensemble.boosters[q].tau - tau) < 1e-5) return static_cast<Eigen::Index>(q);
    }
    throw Error(ErrorKind::InvalidConfig,
                fmt::format("ensemble lacks quantile {:.5f} needed for a {}-sigma interval", tau,
                            sigma_level));
  };
  const Eigen::Index lo = find(tail);
  const Eigen::Index mid = find(0.5);
  const Eigen::Index hi = find(1.0 - tail);

  Eigen::MatrixXd Q = ensemble.predict_quantiles(X);
  IntervalPrediction p;
  const auto n = X.rows();
  p.mean.resize(n);
  p.lower.resize(n);
  p.upper.resize(n);
  p.sigma.resize(n);
  p.raw_lower.resize(n);
  p.raw_upper.resize(n);
  p.crossed.assign(static_cast<std::size_t>(n), false);
  std::vector<double> row(static_cast<std::size_t>(Q.cols()));
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index q = 0; q < Q.cols(); ++q) row[static_cast<std::size_t>(q)] = Q(i, q);
    if (!std::is_sorted(row.begin(), row.end())) {
      std::sort(row.begin(), row.end());
      p.crossed[static_cast<std::size_t>(i)] = true;
      ++p.crossings;
    }
    for (Eigen::Index q = 0; q < Q.cols(); ++q) Q(i, q) = row[static_cast<std::size_t>(q)];
    p.mean(i) = Q(i, mid);
    p.raw_lower(i) = Q(i, lo);
    p.raw_upper(i) = Q(i, hi);
    p.sigma(i) = (p.raw_upper(i) - p.raw_lower(i)) / (2.0 * sigma_level);
    p.lower(i) = p.mean(i) - sigma_level * p.sigma(i);
    p.upper(i) = p.mean(i) + sigma_level * p.sigma(i);
  }
  return p;
}

}  // namespace cellprog
