#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "json.hpp"

namespace apt {

using FeatureMatrix = std::vector<std::vector<double>>;

struct GbdtParams {
  int rounds = 50;
  int max_depth = 3;
  double learning_rate = 0.3;
  double reg_lambda = 1.0;
  double gamma = 0.0;
  double min_child_weight = 1.0;
  double base_score = 0.5;
  std::uint64_t seed = 42;
};

/// Binary gradient-boosted trees with logistic loss and exact greedy splits.
class GbdtClassifier {
 public:
  /// Labels are 0/1. A single-class target yields an untrainable model that
  /// predicts that class.
  static GbdtClassifier train(const FeatureMatrix& x, std::span<const int> y, const GbdtParams& params = {});

  bool trainable() const { return trainable_; }
  double predict_margin(std::span<const double> row) const;
  double predict_proba(std::span<const double> row) const;
  int predict(std::span<const double> row) const;
  std::size_t tree_count() const { return trees_.size(); }

  nlohmann::ordered_json to_json() const;

 private:
  struct Node {
    int feature = -1;  // -1 for leaves
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    double value = 0.0;
  };
  using Tree = std::vector<Node>;

  static double eval_tree(const Tree& tree, std::span<const double> row);

  bool trainable_ = false;
  int constant_class_ = 0;
  double base_margin_ = 0.0;
  std::vector<Tree> trees_;
  friend class TreeBuilder;
};

/// Fold index per row; each class is shuffled with `seed` and dealt round-robin.
std::vector<int> stratified_folds(std::span<const int> y, int k, std::uint64_t seed);

enum class CvScore { f1, accuracy };

struct CvResult {
  int folds = 0;
  std::vector<double> fold_scores;
  double mean = 0.0;
};

/// Stratified k-fold score of the positive class. Undefined fold F1 counts as 0.
CvResult cross_validate(const FeatureMatrix& x, std::span<const int> y, int k, const GbdtParams& params,
                        std::uint64_t fold_seed, CvScore score = CvScore::f1);

/// 2TP / (2TP + FP + FN); 0 when undefined.
double binary_f1(std::span<const int> truth, std::span<const int> predicted);

}  // namespace apt
