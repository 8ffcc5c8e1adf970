#pragma once

#include <cstdint>
#include <vector>

#include "heatlens/grid.hpp"

namespace heatlens {

// Sky view factor settings. Horizon search walks each azimuth ray outward
// in cell_size steps with bilinear height sampling; sector sky content is
// cos^2 of the horizon angle, the closed form of the cosine-weighted
// annulus stack above the horizon. Terrain outside the raster extent is
// treated as open sky.
struct SvfOptions {
    int n_directions = 360;
    double max_radius_m = 150.0;
    double observer_height_m = 1.1;
    double transmissivity = 0.03; // canopy shortwave transmission fraction
    // Radial samples per cell_size of ray length. 1 walks cell-by-cell but
    // steps over interior bilinear maxima on diagonal rays and overstates
    // sky by up to ~0.03 beside tall edges; 2 keeps the hemisphere-oracle
    // gap well inside 0.02.
    int radial_substeps = 2;
};

struct SvfResult {
    Grid svf_build;    // buildings + ground only
    Grid svf_buildveg; // vegetation treated as opaque
    Grid svf;          // tau * build + (1 - tau) * buildveg
};

// dsm carries ground+building heights; cdsm carries canopy height above the
// dsm (0 where none, values >= 0). Cells missing in either input are nodata
// in all outputs; missing cells never block a ray.
SvfResult compute_svf(const Grid& dsm, const Grid& cdsm, const SvfOptions& opt,
                      int threads = 0);

// Building/canopy form summarized over zone raster cells. Heights are in
// meters; *_mean and *_sd run over cells with positive height (sd is the
// sample estimate, NaN below two cells). Densities are fractions of the
// zone's cells; FAR counts max(1, lround(height/floor_height)) storeys on
// each building cell.
struct ZoneMorphometrics {
    int64_t zone_id = 0;
    int64_t cells = 0;
    double bh_mean = 0.0, bh_sd = 0.0, bd = 0.0, far = 0.0;
    double ch_mean = 0.0, ch_sd = 0.0, cd = 0.0;
};

std::vector<ZoneMorphometrics> zone_morphometrics(const Grid& building_height,
                                                  const Grid& canopy_height,
                                                  const Grid& zones,
                                                  double floor_height_m = 3.0);

} // namespace heatlens
