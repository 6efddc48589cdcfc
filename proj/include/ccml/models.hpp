#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <memory>
#include <vector>

#include "ccml/rng.hpp"

namespace ccml {

class RegressionModel {
 public:
  virtual ~RegressionModel() = default;
  virtual double predict_row(const Eigen::Ref<const Eigen::RowVectorXd>& x) const = 0;
  virtual Eigen::Index n_features() const = 0;

  Eigen::VectorXd predict(const Eigen::Ref<const Eigen::MatrixXd>& X) const;
};

struct ForestParams {
  int n_trees = 100;
  int max_depth = 0;  // 0 = unlimited
  int min_samples_leaf = 1;
  int min_samples_split = 2;
  double feature_fraction = 1.0;
  bool bootstrap = true;
};

struct RegressorSpec {
  enum class Kind { RandomForest, Knn };

  Kind kind = Kind::RandomForest;
  ForestParams forest;
  int knn_k = 5;
  std::uint64_t seed = 0;

  static RegressorSpec random_forest(ForestParams params = {}, std::uint64_t seed = 0) {
    RegressorSpec s;
    s.kind = Kind::RandomForest;
    s.forest = params;
    s.seed = seed;
    return s;
  }
  static RegressorSpec knn(int k, std::uint64_t seed = 0) {
    RegressorSpec s;
    s.kind = Kind::Knn;
    s.knn_k = k;
    s.seed = seed;
    return s;
  }
  RegressorSpec with_seed(std::uint64_t s) const {
    RegressorSpec copy = *this;
    copy.seed = s;
    return copy;
  }
};

// CART regression forest: variance-reduction splits, midpoint thresholds
// between sorted unique values, ties broken by lowest feature index then
// lowest threshold. Deterministic given (data, seed) regardless of platform
// thread count (trees are seeded individually and grown sequentially).
class RandomForest : public RegressionModel {
 public:
  RandomForest(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
               const ForestParams& params, std::uint64_t seed);

  double predict_row(const Eigen::Ref<const Eigen::RowVectorXd>& x) const override;
  Eigen::Index n_features() const override { return n_features_; }

  bool has_oob() const { return params_.bootstrap; }
  // Per-row mean over trees whose bootstrap sample excluded the row; the
  // training matrix must be the one the forest was fitted on. Rows that are
  // in-bag everywhere (vanishingly rare at 100 trees) fall back to the full
  // forest prediction.
  Eigen::VectorXd oob_predictions(const Eigen::Ref<const Eigen::MatrixXd>& X_train) const;

  int n_trees() const { return static_cast<int>(trees_.size()); }
  double tree_predict(int tree, const Eigen::Ref<const Eigen::RowVectorXd>& x) const;

 private:
  struct Tree {
    std::vector<int> feature;  // -1 marks a leaf
    std::vector<double> threshold;
    std::vector<int> left;
    std::vector<int> right;
    std::vector<double> value;  // leaf mean
  };

  static Tree grow_tree(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                        std::vector<int>& rows, const ForestParams& params,
                        SplitRng rng);
  static double traverse(const Tree& t, const Eigen::Ref<const Eigen::RowVectorXd>& x);

  std::vector<Tree> trees_;
  std::vector<std::vector<char>> inbag_;  // per tree, per training row
  ForestParams params_;
  Eigen::Index n_features_ = 0;
};

// Mean of the k nearest training targets (Euclidean distance, ties broken by
// lowest row index).
class KnnRegressor : public RegressionModel {
 public:
  KnnRegressor(Eigen::MatrixXd X, Eigen::VectorXd y, int k);

  double predict_row(const Eigen::Ref<const Eigen::RowVectorXd>& x) const override;
  Eigen::Index n_features() const override { return X_.cols(); }

 private:
  Eigen::MatrixXd X_;
  Eigen::VectorXd y_;
  int k_;
};

// Throws std::invalid_argument on dimension mismatch or too few rows.
std::shared_ptr<RegressionModel> fit_regressor(const Eigen::MatrixXd& X,
                                               const Eigen::VectorXd& y,
                                               const RegressorSpec& spec);

}  // namespace ccml
