#include "ccml/models.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace ccml {

Eigen::VectorXd RegressionModel::predict(const Eigen::Ref<const Eigen::MatrixXd>& X) const {
  Eigen::VectorXd out(X.rows());
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    out[i] = predict_row(X.row(i));
  }
  return out;
}

namespace {

struct SplitCandidate {
  double gain = -std::numeric_limits<double>::infinity();
  int feature = -1;
  double threshold = 0.0;
  bool valid() const { return feature >= 0; }
};

}  // namespace

RandomForest::Tree RandomForest::grow_tree(const Eigen::MatrixXd& X,
                                           const Eigen::VectorXd& y,
                                           std::vector<int>& rows,
                                           const ForestParams& params,
                                           SplitRng rng) {
  Tree t;
  const int d = static_cast<int>(X.cols());
  int n_feat = d;
  if (params.feature_fraction < 1.0) {
    n_feat = std::max(1, static_cast<int>(std::ceil(params.feature_fraction * d)));
  }
  std::vector<int> all_features(static_cast<std::size_t>(d));
  std::iota(all_features.begin(), all_features.end(), 0);

  struct Work {
    int node;
    int begin;
    int end;  // half-open range into rows
    int depth;
  };
  std::vector<Work> stack;

  auto add_node = [&t]() {
    t.feature.push_back(-1);
    t.threshold.push_back(0.0);
    t.left.push_back(-1);
    t.right.push_back(-1);
    t.value.push_back(0.0);
    return static_cast<int>(t.feature.size()) - 1;
  };

  std::vector<std::pair<double, double>> scratch;  // (x, y) within a node
  stack.push_back({add_node(), 0, static_cast<int>(rows.size()), 0});

  while (!stack.empty()) {
    const Work w = stack.back();
    stack.pop_back();
    const int n = w.end - w.begin;

    double sum = 0.0;
    for (int r = w.begin; r < w.end; ++r) sum += y[rows[static_cast<std::size_t>(r)]];
    const double mean = sum / n;

    bool make_leaf = n < params.min_samples_split ||
                     (params.max_depth > 0 && w.depth >= params.max_depth);
    if (!make_leaf) {
      bool pure = true;
      const double first = y[rows[static_cast<std::size_t>(w.begin)]];
      for (int r = w.begin + 1; r < w.end; ++r) {
        if (y[rows[static_cast<std::size_t>(r)]] != first) {
          pure = false;
          break;
        }
      }
      make_leaf = pure;
    }

    SplitCandidate best;
    if (!make_leaf) {
      // Feature subset for this node; kept in ascending order so that the
      // lowest-index rule applies among equal gains.
      std::vector<int> features = all_features;
      if (n_feat < d) {
        for (int i = 0; i < n_feat; ++i) {
          const int j = i + rng.uniform_int(d - i);
          std::swap(features[static_cast<std::size_t>(i)], features[static_cast<std::size_t>(j)]);
        }
        features.resize(static_cast<std::size_t>(n_feat));
        std::sort(features.begin(), features.end());
      }

      for (int f : features) {
        scratch.clear();
        for (int r = w.begin; r < w.end; ++r) {
          const int row = rows[static_cast<std::size_t>(r)];
          scratch.emplace_back(X(row, f), y[row]);
        }
        std::sort(scratch.begin(), scratch.end());

        double left_sum = 0.0;
        for (int k = 1; k < n; ++k) {
          left_sum += scratch[static_cast<std::size_t>(k - 1)].second;
          if (scratch[static_cast<std::size_t>(k)].first ==
              scratch[static_cast<std::size_t>(k - 1)].first) {
            continue;
          }
          if (k < params.min_samples_leaf || n - k < params.min_samples_leaf) {
            continue;
          }
          const double right_sum = sum - left_sum;
          const double gain = left_sum * left_sum / k + right_sum * right_sum / (n - k);
          if (gain > best.gain) {
            best.gain = gain;
            best.feature = f;
            best.threshold = 0.5 * (scratch[static_cast<std::size_t>(k - 1)].first +
                                    scratch[static_cast<std::size_t>(k)].first);
          }
        }
      }
      // Reject splits with no variance reduction (all-equal x already skip).
      if (best.valid() && best.gain <= sum * sum / n) best.feature = -1;
      make_leaf = !best.valid();
    }

    if (make_leaf) {
      t.value[static_cast<std::size_t>(w.node)] = mean;
      continue;
    }

    // Partition rows in place on the chosen threshold.
    int mid = w.begin;
    for (int r = w.begin; r < w.end; ++r) {
      const int row = rows[static_cast<std::size_t>(r)];
      if (X(row, best.feature) <= best.threshold) {
        std::swap(rows[static_cast<std::size_t>(r)], rows[static_cast<std::size_t>(mid)]);
        ++mid;
      }
    }
    const int left = add_node();
    const int right = add_node();
    t.feature[static_cast<std::size_t>(w.node)] = best.feature;
    t.threshold[static_cast<std::size_t>(w.node)] = best.threshold;
    t.left[static_cast<std::size_t>(w.node)] = left;
    t.right[static_cast<std::size_t>(w.node)] = right;
    stack.push_back({right, mid, w.end, w.depth + 1});
    stack.push_back({left, w.begin, mid, w.depth + 1});
  }
  return t;
}

RandomForest::RandomForest(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                           const ForestParams& params, std::uint64_t seed)
    : params_(params), n_features_(X.cols()) {
  if (X.rows() != y.size()) {
    throw std::invalid_argument("RandomForest: X rows != y size");
  }
  if (X.rows() < params.min_samples_split) {
    throw std::invalid_argument("RandomForest: fewer rows than min_samples_split");
  }
  if (params.n_trees < 1) {
    throw std::invalid_argument("RandomForest: n_trees must be >= 1");
  }
  if (!(params.feature_fraction > 0.0 && params.feature_fraction <= 1.0)) {
    throw std::invalid_argument("RandomForest: feature_fraction outside (0,1]");
  }
  const int n = static_cast<int>(X.rows());
  SplitRng root(seed);
  trees_.reserve(static_cast<std::size_t>(params.n_trees));
  if (params.bootstrap) inbag_.resize(static_cast<std::size_t>(params.n_trees));
  for (int ti = 0; ti < params.n_trees; ++ti) {
    SplitRng tree_rng = root.stream(static_cast<std::uint64_t>(ti));
    std::vector<int> rows(static_cast<std::size_t>(n));
    if (params.bootstrap) {
      auto& flags = inbag_[static_cast<std::size_t>(ti)];
      flags.assign(static_cast<std::size_t>(n), 0);
      for (int i = 0; i < n; ++i) {
        const int pick = tree_rng.uniform_int(n);
        rows[static_cast<std::size_t>(i)] = pick;
        flags[static_cast<std::size_t>(pick)] = 1;
      }
    } else {
      std::iota(rows.begin(), rows.end(), 0);
    }
    trees_.push_back(grow_tree(X, y, rows, params, tree_rng.stream("splits")));
  }
}

double RandomForest::traverse(const Tree& t,
                              const Eigen::Ref<const Eigen::RowVectorXd>& x) {
  int node = 0;
  while (t.feature[static_cast<std::size_t>(node)] >= 0) {
    const auto i = static_cast<std::size_t>(node);
    node = x[t.feature[i]] <= t.threshold[i] ? t.left[i] : t.right[i];
  }
  return t.value[static_cast<std::size_t>(node)];
}

double RandomForest::predict_row(const Eigen::Ref<const Eigen::RowVectorXd>& x) const {
  double sum = 0.0;
  for (const auto& t : trees_) sum += traverse(t, x);
  return sum / static_cast<double>(trees_.size());
}

double RandomForest::tree_predict(int tree,
                                  const Eigen::Ref<const Eigen::RowVectorXd>& x) const {
  return traverse(trees_[static_cast<std::size_t>(tree)], x);
}

Eigen::VectorXd RandomForest::oob_predictions(
    const Eigen::Ref<const Eigen::MatrixXd>& X_train) const {
  if (!has_oob()) {
    throw std::logic_error("RandomForest: OOB predictions need bootstrap=true");
  }
  Eigen::VectorXd out(X_train.rows());
  for (Eigen::Index i = 0; i < X_train.rows(); ++i) {
    double sum = 0.0;
    int count = 0;
    for (std::size_t ti = 0; ti < trees_.size(); ++ti) {
      if (!inbag_[ti][static_cast<std::size_t>(i)]) {
        sum += traverse(trees_[ti], X_train.row(i));
        ++count;
      }
    }
    out[i] = count > 0 ? sum / count : predict_row(X_train.row(i));
  }
  return out;
}

KnnRegressor::KnnRegressor(Eigen::MatrixXd X, Eigen::VectorXd y, int k)
    : X_(std::move(X)), y_(std::move(y)), k_(k) {
  if (X_.rows() != y_.size()) {
    throw std::invalid_argument("KnnRegressor: X rows != y size");
  }
  if (k_ < 1 || k_ > X_.rows()) {
    throw std::invalid_argument("KnnRegressor: k outside [1, n]");
  }
}

double KnnRegressor::predict_row(const Eigen::Ref<const Eigen::RowVectorXd>& x) const {
  std::vector<std::pair<double, int>> dist(static_cast<std::size_t>(X_.rows()));
  for (Eigen::Index i = 0; i < X_.rows(); ++i) {
    dist[static_cast<std::size_t>(i)] = {(X_.row(i) - x).squaredNorm(),
                                         static_cast<int>(i)};
  }
  std::nth_element(dist.begin(), dist.begin() + (k_ - 1), dist.end());
  std::sort(dist.begin(), dist.begin() + k_);
  double sum = 0.0;
  for (int i = 0; i < k_; ++i) sum += y_[dist[static_cast<std::size_t>(i)].second];
  return sum / k_;
}

std::shared_ptr<RegressionModel> fit_regressor(const Eigen::MatrixXd& X,
                                               const Eigen::VectorXd& y,
                                               const RegressorSpec& spec) {
  switch (spec.kind) {
    case RegressorSpec::Kind::RandomForest:
      return std::make_shared<RandomForest>(X, y, spec.forest, spec.seed);
    case RegressorSpec::Kind::Knn:
      return std::make_shared<KnnRegressor>(X, y, spec.knn_k);
  }
  throw std::logic_error("fit_regressor: unknown kind");
}

}  // namespace ccml
