#include "apt/gbdt.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "apt/common.hpp"

namespace apt {

namespace {

double sigmoid(double m) { return 1.0 / (1.0 + std::exp(-m)); }

}  // namespace

class TreeBuilder {
 public:
  TreeBuilder(const FeatureMatrix& x, const std::vector<double>& g, const std::vector<double>& h,
              const GbdtParams& p)
      : x_(x), g_(g), h_(h), p_(p) {}

  GbdtClassifier::Tree build() {
    std::vector<std::size_t> rows(x_.size());
    std::iota(rows.begin(), rows.end(), 0);
    grow(rows, 0);
    return std::move(tree_);
  }

 private:
  double leaf_weight(double G, double H) const { return -G / (H + p_.reg_lambda); }
  double score(double G, double H) const { return G * G / (H + p_.reg_lambda); }

  int grow(std::vector<std::size_t>& rows, int depth) {
    double G = 0.0;
    double H = 0.0;
    for (auto r : rows) {
      G += g_[r];
      H += h_[r];
    }
    const int index = static_cast<int>(tree_.size());
    tree_.push_back({});
    tree_[index].value = p_.learning_rate * leaf_weight(G, H);
    if (depth >= p_.max_depth || rows.size() < 2) return index;

    const std::size_t n_features = x_.empty() ? 0 : x_.front().size();
    double best_gain = 0.0;
    int best_feature = -1;
    double best_threshold = 0.0;
    std::vector<std::size_t> order(rows);
    for (std::size_t f = 0; f < n_features; ++f) {
      std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (x_[a][f] != x_[b][f]) return x_[a][f] < x_[b][f];
        return a < b;
      });
      double GL = 0.0;
      double HL = 0.0;
      for (std::size_t i = 0; i + 1 < order.size(); ++i) {
        GL += g_[order[i]];
        HL += h_[order[i]];
        const double v = x_[order[i]][f];
        const double next = x_[order[i + 1]][f];
        if (v == next) continue;
        const double GR = G - GL;
        const double HR = H - HL;
        if (HL < p_.min_child_weight || HR < p_.min_child_weight) continue;
        const double gain = 0.5 * (score(GL, HL) + score(GR, HR) - score(G, H)) - p_.gamma;
        if (gain > best_gain) {
          best_gain = gain;
          best_feature = static_cast<int>(f);
          best_threshold = v + (next - v) / 2.0;
        }
      }
    }
    if (best_feature < 0) return index;

    std::vector<std::size_t> left;
    std::vector<std::size_t> right;
    for (auto r : rows) {
      (x_[r][static_cast<std::size_t>(best_feature)] < best_threshold ? left : right).push_back(r);
    }
    tree_[index].feature = best_feature;
    tree_[index].threshold = best_threshold;
    const int l = grow(left, depth + 1);
    const int r = grow(right, depth + 1);
    tree_[index].left = l;
    tree_[index].right = r;
    return index;
  }

  const FeatureMatrix& x_;
  const std::vector<double>& g_;
  const std::vector<double>& h_;
  const GbdtParams& p_;
  GbdtClassifier::Tree tree_;
};

GbdtClassifier GbdtClassifier::train(const FeatureMatrix& x, std::span<const int> y, const GbdtParams& params) {
  if (x.size() != y.size()) throw DataError("feature rows and labels differ in count");
  if (x.empty()) throw DataError("cannot train on zero examples");
  const std::size_t width = x.front().size();
  for (const auto& row : x) {
    if (row.size() != width) throw DataError("feature rows differ in length");
    for (double v : row) {
      if (!std::isfinite(v)) throw DataError("non-finite feature value");
    }
  }
  if (params.rounds < 1 || params.max_depth < 1 || !(params.learning_rate > 0.0) || params.reg_lambda < 0.0 ||
      !(params.base_score > 0.0 && params.base_score < 1.0)) {
    throw UsageError("invalid GBDT hyperparameters");
  }

  GbdtClassifier model;
  std::size_t positives = 0;
  for (int v : y) {
    if (v != 0 && v != 1) throw DataError("binary labels must be 0 or 1");
    positives += static_cast<std::size_t>(v);
  }
  if (positives == 0 || positives == y.size()) {
    model.trainable_ = false;
    model.constant_class_ = positives == 0 ? 0 : 1;
    return model;
  }

  model.trainable_ = true;
  model.base_margin_ = std::log(params.base_score / (1.0 - params.base_score));
  std::vector<double> margin(x.size(), model.base_margin_);
  std::vector<double> g(x.size());
  std::vector<double> h(x.size());
  for (int round = 0; round < params.rounds; ++round) {
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double p = sigmoid(margin[i]);
      g[i] = p - static_cast<double>(y[i]);
      h[i] = std::max(p * (1.0 - p), 1e-16);
    }
    TreeBuilder builder(x, g, h, params);
    auto tree = builder.build();
    for (std::size_t i = 0; i < x.size(); ++i) margin[i] += eval_tree(tree, x[i]);
    model.trees_.push_back(std::move(tree));
  }
  return model;
}

double GbdtClassifier::eval_tree(const Tree& tree, std::span<const double> row) {
  int i = 0;
  while (tree[static_cast<std::size_t>(i)].feature >= 0) {
    const auto& n = tree[static_cast<std::size_t>(i)];
    i = row[static_cast<std::size_t>(n.feature)] < n.threshold ? n.left : n.right;
  }
  return tree[static_cast<std::size_t>(i)].value;
}

double GbdtClassifier::predict_margin(std::span<const double> row) const {
  if (!trainable_) return constant_class_ ? INFINITY : -INFINITY;
  double m = base_margin_;
  for (const auto& t : trees_) m += eval_tree(t, row);
  return m;
}

double GbdtClassifier::predict_proba(std::span<const double> row) const {
  if (!trainable_) return static_cast<double>(constant_class_);
  return sigmoid(predict_margin(row));
}

int GbdtClassifier::predict(std::span<const double> row) const {
  if (!trainable_) return constant_class_;
  return predict_margin(row) > 0.0 ? 1 : 0;
}

nlohmann::ordered_json GbdtClassifier::to_json() const {
  nlohmann::ordered_json j;
  j["trainable"] = trainable_;
  if (!trainable_) {
    j["constant_class"] = constant_class_;
    return j;
  }
  j["base_margin"] = base_margin_;
  j["trees"] = nlohmann::ordered_json::array();
  for (const auto& t : trees_) {
    nlohmann::ordered_json nodes = nlohmann::ordered_json::array();
    for (const auto& n : t) {
      if (n.feature < 0) {
        nodes.push_back({{"leaf", n.value}});
      } else {
        nodes.push_back({{"feature", n.feature}, {"threshold", n.threshold}, {"left", n.left}, {"right", n.right}});
      }
    }
    j["trees"].push_back(std::move(nodes));
  }
  return j;
}

std::vector<int> stratified_folds(std::span<const int> y, int k, std::uint64_t seed) {
  if (k < 2) throw UsageError("cross-validation needs at least 2 folds");
  std::vector<int> fold(y.size(), 0);
  std::mt19937_64 rng(seed);
  std::size_t dealt = 0;
  for (int cls : {0, 1}) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < y.size(); ++i) {
      if (y[i] == cls) members.push_back(i);
    }
    seeded_shuffle(members, rng);
    for (auto i : members) fold[i] = static_cast<int>(dealt++ % static_cast<std::size_t>(k));
  }
  return fold;
}

double binary_f1(std::span<const int> truth, std::span<const int> predicted) {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (predicted[i] == 1 && truth[i] == 1) ++tp;
    if (predicted[i] == 1 && truth[i] == 0) ++fp;
    if (predicted[i] == 0 && truth[i] == 1) ++fn;
  }
  const std::size_t denom = 2 * tp + fp + fn;
  return denom == 0 ? 0.0 : 2.0 * static_cast<double>(tp) / static_cast<double>(denom);
}

CvResult cross_validate(const FeatureMatrix& x, std::span<const int> y, int k, const GbdtParams& params,
                        std::uint64_t fold_seed, CvScore score) {
  if (x.size() != y.size()) throw DataError("feature rows and labels differ in count");
  const auto fold = stratified_folds(y, k, fold_seed);
  CvResult result;
  result.folds = k;
  for (int f = 0; f < k; ++f) {
    FeatureMatrix train_x;
    std::vector<int> train_y;
    std::vector<std::size_t> test_rows;
    for (std::size_t i = 0; i < x.size(); ++i) {
      if (fold[i] == f) {
        test_rows.push_back(i);
      } else {
        train_x.push_back(x[i]);
        train_y.push_back(y[i]);
      }
    }
    if (test_rows.empty() || train_x.empty()) {
      result.fold_scores.push_back(0.0);
      continue;
    }
    const auto model = GbdtClassifier::train(train_x, train_y, params);
    std::vector<int> truth;
    std::vector<int> pred;
    for (auto i : test_rows) {
      truth.push_back(y[i]);
      pred.push_back(model.predict(x[i]));
    }
    double s = 0.0;
    if (score == CvScore::f1) {
      s = binary_f1(truth, pred);
    } else {
      std::size_t hit = 0;
      for (std::size_t i = 0; i < truth.size(); ++i) hit += truth[i] == pred[i];
      s = static_cast<double>(hit) / static_cast<double>(truth.size());
    }
    result.fold_scores.push_back(s);
  }
  result.mean = std::accumulate(result.fold_scores.begin(), result.fold_scores.end(), 0.0) /
                static_cast<double>(result.fold_scores.size());
  return result;
}

}  // namespace apt
