#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "heatlens/boosting.hpp"
#include "heatlens/gwboost.hpp"
#include "heatlens/table.hpp"

namespace heatlens {

// Additive per-row attribution: for every row,
//   base_value[row] + sum over features of values[row][f] == model prediction
// to within 1e-9. Values carry the target's units.
struct ShapMatrix {
    std::vector<std::string> feature_names;
    std::vector<std::vector<double>> values; // [n][feature_names.size()]
    std::vector<double> base_value;          // [n], same for every row
};

// Exact attribution over the ensemble's own structure: expectations condition
// along each root-to-leaf path, using the stored training covers as branch
// probabilities where a feature is not pinned. base_value folds in the base
// score, the learning rate, and each tree's cover-weighted mean leaf value.
// Throws when a tree carries no cover statistics (cover <= 0 anywhere).
ShapMatrix tree_shap(const BoostedModel& m, const Matrix& x, int threads = 0);

// From-definition Shapley attribution of the coalition value
//   v(S) = mean prediction over background rows with the features in S
//          pinned to x,
// enumerating all subsets. Exponential in feature count; throws for p > 12.
// Agrees with tree_shap only where background averaging and path
// conditioning coincide: single trees or disjoint per-tree feature supports,
// with the training rows as background.
std::vector<double> brute_shapley(const BoostedModel& m, const std::vector<double>& x,
                                  const Matrix& background);

struct ShapSummaryRow {
    std::string feature;
    double mean_abs = 0.0;
};

// Mean |value| per feature over all rows, descending; equal means fall back
// to feature-name order.
std::vector<ShapSummaryRow> shap_summary(const ShapMatrix& s);

struct ZoneImportance {
    int64_t zone_id = 0;
    std::string primary_gain_feature; // top total split gain in the local model
    std::string primary_shap_feature; // top |value| at the zone's own row
    std::vector<double> mean_abs_shap; // |value| per feature, set order
    double signed_shap = 0.0;          // value of the requested feature
};

struct LocalImportance {
    std::vector<std::string> feature_names;
    std::string signed_feature;
    std::vector<ZoneImportance> zones; // one per local model, set order
};

// Attribution per zone from that zone's own local model, evaluated at the
// zone's own feature row (matched by zone id). Feature ties inside a zone
// fall back to name order. Throws when a zone in the set has no row in t or
// when signed_feature is not one of the model features.
LocalImportance local_importance_maps(const LocalModelSet& set, const FeatureTable& t,
                                      const std::string& signed_feature, int threads = 0);

// feature,mean_abs_shap rows in summary order.
void write_shap_summary(const std::vector<ShapSummaryRow>& rows, const std::string& path);

// Columns <feature>,phi_<feature>,<color_feature>; one row per sample, for
// dependence plots colored by a second feature. All vectors must match in
// length.
void write_shap_dependence(const std::string& feature, const std::vector<double>& x,
                           const std::vector<double>& phi, const std::string& color_feature,
                           const std::vector<double>& color, const std::string& path);

// zone_id,primary_gain_feature,primary_shap_feature,mean_abs_<f>...,shap_<signed>.
void write_local_primary(const LocalImportance& li, const std::string& path);

} // namespace heatlens
