#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "heatlens/error.hpp"

namespace heatlens {

// Single-band raster. origin is the lower-left corner of the lower-left
// cell; cell (col,row) has its center at origin + (col+0.5, row+0.5)*cell.
// values is row-major with row 0 as the southernmost row. Cells equal to
// nodata (exact float compare) are missing; all other values must be finite.
struct Grid {
    int width = 0;
    int height = 0;
    double origin_x = 0.0;
    double origin_y = 0.0;
    double cell_size = 1.0;
    float nodata = -9999.0f;
    std::vector<float> values;

    static Grid filled(int w, int h, double ox, double oy, double cs,
                       float v, float nd = -9999.0f);

    float& at(int col, int row) { return values[size_t(row) * width + col]; }
    float at(int col, int row) const { return values[size_t(row) * width + col]; }
    bool in_bounds(int col, int row) const {
        return col >= 0 && col < width && row >= 0 && row < height;
    }
    bool is_nodata(float v) const { return v == nodata; }
    bool is_nodata_at(int col, int row) const { return at(col, row) == nodata; }

    double cell_x(int col) const { return origin_x + (col + 0.5) * cell_size; }
    double cell_y(int row) const { return origin_y + (row + 0.5) * cell_size; }

    bool same_geometry(const Grid& o, double tol = 1e-9) const;
    void require_same_geometry(const Grid& o, const std::string& what) const;

    // Bilinear interpolation between the four surrounding cell centers at
    // world coordinates (x, y). Coordinates are clamped to the center
    // lattice; returns nodata if any support cell is missing.
    float sample_bilinear(double x, double y) const;
};

enum class GridFormat { esri_ascii, raw_f32 };

// Format chosen by extension: .asc reads/writes ESRI ASCII grids, .f32
// reads/writes little-endian float32 bodies with a <path>.json sidecar
// describing geometry. ASCII values are written with 9 significant digits,
// which round-trips float32 exactly.
Grid read_grid(const std::string& path);
void write_grid(const Grid& g, const std::string& path);

// One planning zone: polygon rings in world coordinates. rings[0] is the
// outer ring; any further rings are holes (even-odd rule). Multi-part zones
// simply carry several outer rings; containment is even-odd across all rings.
struct Zone {
    int64_t id = 0;
    std::vector<std::vector<std::pair<double, double>>> rings;
};

struct ZoneSet {
    std::vector<Zone> zones;
    const Zone* find(int64_t id) const;
};

// GeoJSON FeatureCollection of Polygon/MultiPolygon features, each carrying
// an integer `zone_id` property. Ids must be unique and positive.
ZoneSet read_zones(const std::string& path);
void write_zones(const ZoneSet& zs, const std::string& path);

// Even-odd containment with half-open boundaries: points on a zone's top or
// right edges fall outside, so grids of edge-sharing zones partition cleanly.
bool zone_contains(const Zone& z, double x, double y);

std::pair<double, double> zone_centroid(const Zone& z);

// Burns zone ids into a raster with the given template geometry. Cell
// centers are tested against zones in ascending id order and the first
// containing zone wins, so overlaps resolve to the lowest id. Cells in no
// zone are nodata.
Grid rasterize_zones(const ZoneSet& zs, const Grid& geom);

// Exact Euclidean distance (meters, center-to-center) from every cell to
// the nearest cell where mask != 0. Mask cells get 0. Errors if the mask
// has no set cells. Nodata mask cells are treated as unset.
Grid distance_to_mask(const Grid& mask);

// Resamples src onto the template geometry by bilinear interpolation at the
// template's cell centers. Centers outside the source center lattice clamp
// to its edge. Output cells touching any nodata support cell are nodata.
Grid resample_bilinear(const Grid& src, const Grid& geom);

} // namespace heatlens
