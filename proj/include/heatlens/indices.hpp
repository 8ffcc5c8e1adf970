#pragma once

#include <string>
#include <vector>

#include "heatlens/grid.hpp"

namespace heatlens {

// Named co-registered reflectance bands. Band values must lie in [0,1];
// all grids must share one geometry.
struct BandStack {
    std::vector<std::pair<std::string, Grid>> bands;

    const Grid& get(const std::string& name) const;
    bool has(const std::string& name) const;
    void add(const std::string& name, Grid g);
    void validate() const;
};

// Loads bands from a JSON manifest {"bands": {"rho_red": "path.asc", ...}};
// relative paths resolve against the manifest directory.
BandStack read_bands(const std::string& manifest_path);

// (a - b) / (a + b); zero denominator or missing input yields nodata.
Grid normalized_difference(const Grid& a, const Grid& b);

// NDVI = (nir - red) / (nir + red)
Grid compute_ndvi(const BandStack& s);
// NDBI = (swir1 - nir) / (swir1 + nir)
Grid compute_ndbi(const BandStack& s);
// Shortwave broadband albedo, six-band weighted sum.
Grid compute_albedo(const BandStack& s);
// Tasseled-cap wetness, six-band weighted sum.
Grid compute_wetness(const BandStack& s);

} // namespace heatlens
