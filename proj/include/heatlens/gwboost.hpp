#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "heatlens/boosting.hpp"
#include "heatlens/gwr.hpp"
#include "heatlens/spatial_stats.hpp"
#include "heatlens/weights.hpp"

namespace heatlens {

// One boosted model per zone, trained on that zone's k nearest zones
// (self included) with bi-square kernel weights passed as sample weights.
struct LocalModel {
    int64_t zone_id = 0;
    double bandwidth = 0.0;        // distance to the k-th nearest zone
    std::vector<size_t> neighbors; // training rows, ascending table index
    std::vector<double> weights;   // length n, exactly 0 outside the neighborhood
    BoostedModel model;
    OobRecord oob;                 // held-out indices refer into `neighbors`
    double prediction = 0.0;       // the model's value at its own zone
    double residual = 0.0;         // y - prediction
    double std_residual = 0.0;     // residual / sd of all residuals
    double local_r2 = 0.0;         // kernel-weighted goodness of fit
};

struct LocalModelSet {
    std::vector<std::string> feature_names;
    KernelSpec kernel;
    FitConfig config;
    bool uniform_weights = false;
    std::vector<double> targets; // training response, for pooled OOB scoring
    std::vector<LocalModel> locals;

    size_t index_of(int64_t zone_id) const;
};

// Fits one model per zone. Kernel must be adaptive with k in [10, n]; each
// local seed is a substream of config.seed keyed by zone_id, so results do
// not depend on scheduling. uniform_weights replaces the kernel with weight 1
// on every row and reuses config.seed directly, which makes every local
// model identical to the global fit (a stationarity diagnostic).
LocalModelSet gw_fit(const FeatureTable& t, const std::string& y_col,
                     const std::vector<std::string>& x_cols, const KernelSpec& kernel,
                     const FitConfig& config, bool uniform_weights = false,
                     int threads = 0);

struct LooResult {
    std::vector<int> candidates; // echoed in input order
    std::vector<double> rmse;    // NaN where the candidate was skipped
    int best_k = 0;
    size_t best_index = 0;
};

// Leave-one-out bandwidth selection: for each candidate k and each zone,
// fit on the k nearest other zones and predict the held-out zone. Best is
// the lowest RMSE; ties go to the smaller k. Candidates with k >= n are
// skipped with a warning on stderr.
LooResult loo_bandwidth(const FeatureTable& t, const std::string& y_col,
                        const std::vector<std::string>& x_cols,
                        const std::vector<int>& candidates, const FitConfig& config,
                        int threads = 0);

// Pools every local model's final-iteration held-out predictions and scores
// them against the training response. Requires subsample < 1 everywhere.
FoldMetrics global_oob(const LocalModelSet& set);

// Global Moran's I of the standardized residuals under the given weights.
MoranResult residual_moran(const LocalModelSet& set, const SpatialWeights& w,
                           int permutations, uint64_t seed, int threads = 0);

// Writes <dir>/local_r2.csv, <dir>/std_residuals.csv, and one
// <dir>/models/zone_<id>.json per local model.
void write_local_diagnostics(const LocalModelSet& set, const std::string& dir);

// Header: k,rmse. Skipped candidates appear with an empty rmse field.
void write_bandwidth_trace(const LooResult& r, const std::string& path);

} // namespace heatlens
