#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "heatlens/error.hpp"

namespace heatlens {

// Linear interpolation between order statistics (the type-7 rule), used for
// every quantile in the toolkit. `sorted` must be ascending and non-empty.
inline double quantile_sorted(const std::vector<double>& sorted, double p) {
    if (sorted.empty()) throw ValidationError("quantile: empty input");
    if (!(p >= 0.0 && p <= 1.0)) throw ValidationError("quantile: p must lie in [0,1]");
    const double h = (double(sorted.size()) - 1.0) * p;
    const size_t lo = size_t(std::floor(h));
    const size_t hi = std::min(lo + 1, sorted.size() - 1);
    const double frac = h - double(lo);
    return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

inline double quantile(std::vector<double> values, double p) {
    std::sort(values.begin(), values.end());
    return quantile_sorted(values, p);
}

inline double median(std::vector<double> values) { return quantile(std::move(values), 0.5); }

} // namespace heatlens
