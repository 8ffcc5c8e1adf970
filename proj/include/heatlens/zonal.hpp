#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "heatlens/grid.hpp"
#include "heatlens/table.hpp"

namespace heatlens {

struct ZoneStat {
    double mean = std::numeric_limits<double>::quiet_NaN();
    double sd = std::numeric_limits<double>::quiet_NaN(); // sample sd, NaN when count < 2
    int64_t count = 0;
};

// Aggregates `values` over the integer zones of `zone_raster`, excluding
// cells where any mask is 1. Every zone id present in the raster gets an
// entry; zones with no remaining cells keep count 0 and missing stats.
std::map<int64_t, ZoneStat> zonal_stats(const Grid& values, const Grid& zone_raster,
                                        const std::vector<const Grid*>& masks = {});

// 1 where building height is positive (cells to exclude from street-level
// aggregation), 0 elsewhere; nodata passes through.
Grid rooftop_mask(const Grid& building_height);

// 1 where the land-cover grid equals `cls`, 0 elsewhere; nodata passes through.
Grid class_mask(const Grid& landcover, int cls);

// Per-row |z(a) - z(b)| with z-scores over the rows carrying both columns
// (population sd). Rows missing either column yield NaN.
std::vector<double> standardized_mismatch(const FeatureTable& t,
                                          const std::string& col_a = "LST_mean",
                                          const std::string& col_b = "UTCI_mean");

// Tercile bins per target, 1..3 with boundary ties going to the lower bin;
// {0,0} marks rows missing either value.
struct BivariateClass {
    int a_bin = 0;
    int b_bin = 0;
    int code() const { return a_bin > 0 && b_bin > 0 ? 10 * a_bin + b_bin : 0; }
};
std::vector<BivariateClass> bivariate_class(const FeatureTable& t,
                                            const std::string& col_a = "LST_mean",
                                            const std::string& col_b = "UTCI_mean");
std::string bivariate_label(const BivariateClass& c);

struct BinStat {
    double x_lo = 0.0, x_hi = 0.0;
    double median = std::numeric_limits<double>::quiet_NaN();
    double q25 = std::numeric_limits<double>::quiet_NaN();
    double q75 = std::numeric_limits<double>::quiet_NaN();
    int64_t count = 0;
};

// Equal-width bins over the x range; non-finite pairs are dropped first;
// empty bins stay in the output with count 0.
std::vector<BinStat> binned_median_iqr(const std::vector<double>& x,
                                       const std::vector<double>& y, int n_bins);

// Tricube-weighted local linear smoother with bisquare robustness passes.
// Returns fitted values aligned with the input order.
std::vector<double> lowess(const std::vector<double>& x, const std::vector<double>& y,
                           double frac = 0.5, int iterations = 2);

} // namespace heatlens
