#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "heatlens/table.hpp"

namespace heatlens {

struct FitConfig {
    int n_estimators = 500;
    double learning_rate = 0.05;
    int max_depth = 2;
    double subsample = 1.0;      // per-tree row fraction, (0, 1]
    double lambda = 1.0;         // L2 penalty on leaf values
    double gamma = 0.0;          // minimum gain to accept a split
    double min_child_weight = 1.0;
    uint64_t seed = 0;

    void validate() const;
};

// Flat tree storage; nodes[0] is the root. split_feature -1 marks a leaf.
struct TreeNode {
    int split_feature = -1;
    double threshold = 0.0;
    int left = -1, right = -1;
    double leaf_value = 0.0;
    double split_gain = 0.0;
    double cover = 0.0; // summed instance weights reaching the node
};

struct Tree {
    std::vector<TreeNode> nodes;
};

struct BoostedModel {
    double base_score = 0.0;
    double learning_rate = 0.05;
    std::vector<std::string> feature_names;
    std::vector<Tree> trees;
    FitConfig config;
};

// Rows a tree never saw during its iteration. A row's out-of-bag prediction
// accumulates only trees that held the row out, scaled by the inverse of the
// held-out fraction so it stays calibrated; trees that trained on the row
// never touch it, which keeps the estimate free of in-sample leakage.
// predictions snapshot that accumulator through the current iteration, and
// rmse is unweighted over the held-out rows (NaN when nothing was held out).
struct OobIteration {
    std::vector<size_t> held_out;
    std::vector<double> predictions;
    double rmse = 0.0;
};

struct OobRecord {
    std::vector<OobIteration> iterations;
    std::vector<size_t> rows;        // rows held out at least once
    std::vector<double> predictions; // final accumulator value per such row
};

struct FitResult {
    BoostedModel model;
    OobRecord oob; // empty when subsample == 1
    std::vector<double> train_loss; // weighted squared loss after each tree
    std::vector<double> fitted;     // in-sample prediction after the last tree
};

using Matrix = std::vector<std::vector<double>>; // row-major, [n][p]

// Weighted squared-error gradient boosting with exact greedy splits over
// midpoint thresholds. base_score is the weighted mean of y. Rows with zero
// weight never train a tree and never enter the subsample pool. Gain ties
// break toward the lower feature index, then the lower threshold.
FitResult fit_boosted(const Matrix& x, const std::vector<double>& y,
                      const std::vector<double>& sample_weights,
                      const std::vector<std::string>& feature_names,
                      const FitConfig& config, int threads = 0);

// Routing rule at every internal node: value < threshold goes left.
double predict_one(const BoostedModel& m, const std::vector<double>& x);
std::vector<double> predict(const BoostedModel& m, const Matrix& x, int threads = 0);

// Column lookup by feature name; throws listing every missing feature.
std::vector<double> predict_table(const BoostedModel& m, const FeatureTable& t,
                                  int threads = 0);

// Total split gain per feature, aligned with feature_names.
std::vector<double> gain_importance(const BoostedModel& m);

// R-squared of the out-of-bag predictions over every row that was held out
// at least once. NaN when the record is empty.
double oob_r2(const OobRecord& oob, const std::vector<double>& y);

// JSON on disk; every prediction-relevant double is stored as a decimal
// string with 17 significant digits, so load(save(m)) predicts bit-equal.
void save_model(const BoostedModel& m, const std::string& path);
BoostedModel load_model(const std::string& path);

struct FoldMetrics {
    double r2 = 0.0, mae = 0.0, rmse = 0.0;
};

struct NestedCvResult {
    FitConfig best;
    size_t best_grid_index = 0;
    std::vector<size_t> fold_winner; // grid index chosen by each outer fold
    std::vector<FoldMetrics> outer;  // outer-test metrics per fold
    double r2_mean = 0.0, r2_sd = 0.0;
    double mae_mean = 0.0, mae_sd = 0.0;
    double rmse_mean = 0.0, rmse_sd = 0.0;
};

// Outer folds estimate generalization; each outer-train split runs an inner
// grid search by mean RMSE. The reported config is the most frequent
// winner, ties broken by the lower mean inner RMSE.
NestedCvResult nested_cv(const Matrix& x, const std::vector<double>& y,
                         const std::vector<std::string>& feature_names,
                         const std::vector<FitConfig>& grid, int outer_folds,
                         int inner_folds, uint64_t seed, int threads = 0);

} // namespace heatlens
