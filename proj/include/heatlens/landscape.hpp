#pragma once

#include <vector>

#include "heatlens/grid.hpp"

namespace heatlens {

// Patch structure of a categorical grid. Class values must be non-negative
// integers stored in the float grid; nodata cells belong to no patch.
// Patch membership uses 8- or 4-connectivity; cell adjacency for edge and
// contagion counts is always orthogonal.
struct Patch {
    int class_id = 0;
    int64_t cells = 0;      // area in cells
    int64_t edges = 0;      // perimeter in cell edges (boundary and nodata count)
    double contig = 0.0;    // per-patch contiguity in [0,1]
};

struct PatchLabels {
    std::vector<int32_t> labels; // -1 outside any patch, else patch index
    std::vector<Patch> patches;
};

PatchLabels label_patches(const Grid& classes, int connectivity = 8);

struct ClassMetrics {
    int class_id = 0;
    int64_t cells = 0;
    int n_patches = 0;
    double pland = 0.0;     // percent of landscape area
    double pd = 0.0;        // patches per 100 ha
    double lsi = 0.0;       // 0.25 * class edge / sqrt(landscape area)
    double cohesion = 0.0;  // percent
    double pafrac = 0.0;    // NaN when undefined (< 2 patches or no spread)
    double contig_am = 0.0; // area-weighted mean contiguity
};

struct LandscapeMetrics {
    double total_area_m2 = 0.0;
    int64_t total_cells = 0;
    int n_classes = 0;
    int n_patches = 0;
    double pd = 0.0;        // all-class patch density, patches per 100 ha
    double contag = 0.0;    // percent; defined as 100 for a single class
    double shdi = 0.0;
    double shei = 0.0;      // SHDI / ln(classes); 0 for a single class
    std::vector<ClassMetrics> classes; // ascending class id
};

// All-cell landscape analysis. Errors if the grid has no classified cells
// or a non-integer class value. connectivity must be 4 or 8.
LandscapeMetrics landscape_metrics(const Grid& classes, int connectivity = 8);

// Copy of `classes` keeping only cells where zones == zone_id, everything
// else nodata; feeds per-zone landscape analysis.
Grid mask_to_zone(const Grid& classes, const Grid& zones, int64_t zone_id);

} // namespace heatlens
