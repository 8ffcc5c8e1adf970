#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "heatlens/table.hpp"

namespace heatlens {

// Bi-square kernel over centroid distances. Fixed mode uses one bandwidth
// in meters; adaptive mode sets each location's bandwidth to the distance
// of its k-th nearest point (self included, so k must exceed p + 1).
struct KernelSpec {
    enum class Mode { Fixed, Adaptive };
    Mode mode = Mode::Fixed;
    double bandwidth = 0.0;
    int k = 0;

    static KernelSpec fixed(double bandwidth);
    static KernelSpec adaptive(int k);
};

// (1 - (d/b)^2)^2 inside the bandwidth, exactly 0 at and beyond it.
double bisquare_weight(double d, double b);

struct GwrFit {
    std::vector<std::string> predictor_names;
    std::vector<int64_t> zone_ids;
    std::vector<std::vector<double>> beta; // [n][p+1], intercept first, raw units
    std::vector<double> fitted;
    std::vector<double> residuals;
    std::vector<std::vector<double>> hat_rows; // [n][n]
    std::vector<double> hat_diag;
    std::vector<double> local_r2;
    std::vector<double> bandwidth; // per-location b_i actually used
    double trace_s = 0.0;
    double rss = 0.0;
    double aicc = 0.0;
};

// Local weighted least squares at every zone centroid. Predictors are
// standardized internally for conditioning; reported coefficients are in
// the original units. The intercept column is added here, so x_cols must
// not contain a constant column.
GwrFit gwr_fit(const FeatureTable& t, const std::string& y_col,
               const std::vector<std::string>& x_cols, const KernelSpec& kernel,
               int threads = 0);

struct BandwidthSearch {
    KernelSpec best;
    std::vector<double> aicc; // per candidate, +inf where the fit is invalid
    size_t best_index = 0;
};

// Evaluates every candidate kernel and keeps the lowest AICc. Exact ties
// go to the wider kernel. Throws if no candidate yields a valid fit.
BandwidthSearch gwr_bandwidth_search(const FeatureTable& t, const std::string& y_col,
                                     const std::vector<std::string>& x_cols,
                                     const std::vector<KernelSpec>& candidates,
                                     int threads = 0);

// Header: zone_id,beta_intercept,beta_<name>...,local_r2
void write_gwr_csv(const GwrFit& fit, const std::string& path);

} // namespace heatlens
