#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "heatlens/grid.hpp"

namespace heatlens {

enum class WeightScheme { Queen, Rook, QueenNnHybrid };

// Accepts "queen", "rook", or "queen_nn_hybrid".
WeightScheme parse_weight_scheme(const std::string& name);

// Sparse neighbor structure over zones ordered by ascending zone id.
// Rows never contain self links, and link weights are strictly positive.
struct SpatialWeights {
    size_t n = 0;
    std::vector<int64_t> ids;
    std::vector<std::vector<std::pair<size_t, double>>> rows;
    bool row_standardized = false;
    double s0 = 0.0;

    size_t index_of(int64_t zone_id) const; // throws if absent

    // Weighted sum of z over row i's neighbors.
    double lag(const std::vector<double>& z, size_t i) const;

    void validate() const;
};

// Contiguity from exact shared ring vertices (queen) or shared ring edges
// (rook). queen_nn_hybrid starts from queen and adds a mirrored link from
// every neighborless zone to the zone with the nearest centroid. With
// row_standardize, each nonempty row is scaled to sum to 1.
SpatialWeights build_weights(const ZoneSet& zs, WeightScheme scheme,
                             bool row_standardize);

} // namespace heatlens
