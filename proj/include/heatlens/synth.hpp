#pragma once

#include <cstdint>
#include <string>

namespace heatlens {

// Parameters for the generated benchmark city. The raster is size x size
// cells; zones are square tiles of zone_cells per side and must divide the
// raster evenly. size must be at least 64.
struct SynthSpec {
    uint64_t seed = 0;
    int size = 128;
    double cell_size_m = 2.0;
    int zone_cells = 16;
};

// Paths of the files a generation run writes (all inside the target
// directory). config is a ready-to-run pipeline configuration whose
// parameters are scaled to the city size.
struct SynthBundle {
    std::string dir;
    std::string dsm;
    std::string cdsm;
    std::string landcover;
    std::string bands;
    std::string lst;
    std::string zones;
    std::string meteo;
    std::string socio;
    std::string config;
};

// Writes a deterministic synthetic city into dir (created if absent):
//
//   dsm.asc        surface height above ground (m); rectangular building
//                  blocks of varying height on a street grid, ground at 0
//   cdsm.asc       canopy height above the surface (m); tree blobs in parks
//                  and along streets
//   landcover.asc  classes 1 paved, 2 building, 3 grass, 4 tree, 5 water
//   band_*.asc     six reflectance bands drawn from per-class spectra plus
//                  noise, listed in bands.json
//   lst.asc        surface temperature (C) as a documented function of
//                  cover: base 29, plus per-class offsets that differ
//                  between the west and east halves (west cools strongly
//                  with vegetation, east heats strongly with built cover),
//                  plus N(0, 0.4) noise
//   zones.geojson  square zones, ids 1..k row-major from the south-west
//   meteo.csv      24 hourly samples of a clear tropical day (UTC)
//   socio.csv      per-zone PopD, RD, IntD, RNC derived from built fraction
//   run.toml       pipeline configuration referencing the files above
//
// The same spec always produces byte-identical files. The west half carries
// tall, tree-lined blocks (deep canyons, low SVF); the east half carries low
// sparse blocks, so street-level SVF separates the regimes.
SynthBundle make_synthetic_city(const SynthSpec& spec, const std::string& dir);

}  // namespace heatlens
