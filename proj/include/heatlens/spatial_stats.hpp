#pragma once

#include <cstdint>
#include <limits>
#include <vector>

#include "heatlens/weights.hpp"

namespace heatlens {

struct MoranResult {
    double moran_i = 0.0;
    double expected_i = 0.0; // -1/(n-1) under the null
    double p_value = std::numeric_limits<double>::quiet_NaN();
};

// Global autocorrelation with a two-sided permutation test. Permutation k
// relabels the values with a shuffle drawn from substream k, so the result
// is bit-identical for any thread count. permutations = 0 skips the test
// and leaves p_value NaN.
MoranResult global_moran(const std::vector<double>& x, const SpatialWeights& w,
                         int permutations, uint64_t seed, int threads = 0);

enum class LisaCategory { HighHigh, LowLow, HighLow, LowHigh, NotSignificant };

// "HH", "LL", "HL", "LH", or "not_significant".
const char* lisa_category_name(LisaCategory c);

struct LisaRow {
    double local_i = 0.0;
    double p_value = std::numeric_limits<double>::quiet_NaN();
    LisaCategory category = LisaCategory::NotSignificant;
};

// Local Moran with conditional permutation: zone i keeps its own deviation
// fixed and redraws its neighbors from the remaining zones, using substream
// i. Zones with permutation p <= alpha are classified by the signs of their
// deviation and spatial lag; everything else is not_significant.
std::vector<LisaRow> lisa(const std::vector<double>& x, const SpatialWeights& w,
                          int permutations, uint64_t seed, double alpha,
                          int threads = 0);

} // namespace heatlens
