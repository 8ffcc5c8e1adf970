#include "heatlens/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <vector>

#include "heatlens/error.hpp"
#include "heatlens/grid.hpp"
#include "heatlens/rng.hpp"
#include "heatlens/solar.hpp"

namespace heatlens {

namespace {

// Per-block stream labels; block streams are keyed by block index so layout
// draws never depend on traversal order.
enum StreamLabel : uint64_t {
    kBlocks = 1,
    kCanopy = 2,
    kBands = 3,
    kLst = 4,
    kSocio = 5,
    kTrees = 6,
};

constexpr int kPeriod = 16;  // block pitch in cells: 4 street, 1 verge, 10 building, 1 verge

enum Cover : int { kPaved = 1, kBuilding = 2, kGrass = 3, kTree = 4, kWater = 5 };

struct BlockPlan {
    bool water = false;
    bool park = false;
    double height = 0.0;  // building height in meters, 0 for parks and water
};

std::string join(const std::string& dir, const std::string& name) {
    return (std::filesystem::path(dir) / name).string();
}

void append_row(std::string& out, const char* fmt, ...) {
    char buf[256];
    va_list args;
    va_start(args, fmt);
    vsnprintf(buf, sizeof buf, fmt, args);
    va_end(args);
    out += buf;
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ValidationError("cannot write " + path);
    out << text;
}

}  // namespace

SynthBundle make_synthetic_city(const SynthSpec& spec, const std::string& dir) {
    if (spec.size < 64) throw ValidationError("synthetic city size must be at least 64 cells");
    if (spec.zone_cells < 8) throw ValidationError("zone_cells must be at least 8");
    if (spec.size % spec.zone_cells != 0)
        throw ValidationError("size must be a multiple of zone_cells");
    if (spec.size / spec.zone_cells < 4)
        throw ValidationError("city needs at least 4 zones per side");
    if (!(spec.cell_size_m > 0.0)) throw ValidationError("cell_size_m must be positive");

    std::filesystem::create_directories(dir);
    const int n = spec.size;
    const double cs = spec.cell_size_m;
    const int blocks = (n + kPeriod - 1) / kPeriod;

    Rng root(spec.seed);

    // Block layout: one water block in the south-east corner, parks on a
    // diagonal pattern, buildings elsewhere. The west half is tall, the east
    // half low; a sparse set of towers adds height variance.
    std::vector<BlockPlan> plan(size_t(blocks) * blocks);
    {
        Rng rng = root.substream(kBlocks);
        for (int by = 0; by < blocks; ++by) {
            for (int bx = 0; bx < blocks; ++bx) {
                BlockPlan& b = plan[size_t(by) * blocks + bx];
                const double u = rng.uniform(0.0, 1.0);
                if (bx == blocks - 1 && by == 0) {
                    b.water = true;
                } else if ((bx + by) % 5 == 0) {
                    b.park = true;
                } else {
                    const bool west = (bx * kPeriod + kPeriod / 2) < n / 2;
                    b.height = west ? 10.0 + 22.0 * u : 4.0 + 8.0 * u;
                    if ((bx * 7 + by * 3) % 11 == 0) b.height *= 1.6;
                }
            }
        }
    }

    Grid dsm = Grid::filled(n, n, 0.0, 0.0, cs, 0.0f);
    Grid cdsm = Grid::filled(n, n, 0.0, 0.0, cs, 0.0f);
    Grid cover = Grid::filled(n, n, 0.0, 0.0, cs, float(kPaved));

    for (int row = 0; row < n; ++row) {
        for (int col = 0; col < n; ++col) {
            const BlockPlan& b = plan[size_t(row / kPeriod) * blocks + col / kPeriod];
            const int ox = col % kPeriod;
            const int oy = row % kPeriod;
            const bool street = ox < 2 || ox > 13 || oy < 2 || oy > 13;
            if (street) continue;
            if (b.water) {
                cover.at(col, row) = float(kWater);
            } else if (b.park) {
                cover.at(col, row) = float(kGrass);
            } else if (ox >= 3 && ox <= 12 && oy >= 3 && oy <= 12) {
                dsm.at(col, row) = float(b.height);
                cover.at(col, row) = float(kBuilding);
            } else {
                cover.at(col, row) = float(kGrass);
            }
        }
    }

    // Canopy blobs: three per park plus street trees, denser in the west.
    // Crowns only land on paved or grass cells.
    {
        Rng rng = root.substream(kCanopy);
        auto stamp = [&](int ccol, int crow, double radius, double height) {
            const int r = int(std::ceil(radius));
            for (int dr = -r; dr <= r; ++dr) {
                for (int dc = -r; dc <= r; ++dc) {
                    const int col = ccol + dc;
                    const int row = crow + dr;
                    if (!cdsm.in_bounds(col, row)) continue;
                    const double d2 = double(dc) * dc + double(dr) * dr;
                    if (d2 > radius * radius) continue;
                    const int c = int(cover.at(col, row));
                    if (c == kBuilding || c == kWater) continue;
                    const float h = float(height * (1.0 - 0.5 * d2 / (radius * radius)));
                    cdsm.at(col, row) = std::max(cdsm.at(col, row), h);
                    cover.at(col, row) = float(kTree);
                }
            }
        };
        for (int by = 0; by < blocks; ++by) {
            for (int bx = 0; bx < blocks; ++bx) {
                const BlockPlan& b = plan[size_t(by) * blocks + bx];
                if (b.water) continue;
                if (b.park) {
                    for (int i = 0; i < 3; ++i) {
                        const int ox = 3 + int(rng.below(10));
                        const int oy = 3 + int(rng.below(10));
                        stamp(bx * kPeriod + ox, by * kPeriod + oy, 2.0 + 2.0 * rng.uniform(0.0, 1.0),
                              5.0 + 4.0 * rng.uniform(0.0, 1.0));
                    }
                    continue;
                }
                const bool west = (bx * kPeriod + kPeriod / 2) < n / 2;
                const int trees = west ? 3 : 1;
                for (int i = 0; i < trees; ++i) {
                    for (int attempt = 0; attempt < 8; ++attempt) {
                        const int col = bx * kPeriod + int(rng.below(kPeriod));
                        const int row = by * kPeriod + int(rng.below(kPeriod));
                        if (!cover.in_bounds(col, row)) continue;
                        const int c = int(cover.at(col, row));
                        if (c != kPaved && c != kGrass) continue;
                        stamp(col, row, 1.5 + 1.5 * rng.uniform(0.0, 1.0), 4.0 + 4.0 * rng.uniform(0.0, 1.0));
                        break;
                    }
                }
            }
        }
    }

    // Reflectance bands: per-class spectra plus clamped Gaussian noise, so
    // NDVI/NDBI/albedo/wetness all correlate with the cover map.
    const char* band_names[6] = {"blue", "green", "red", "nir", "swir1", "swir2"};
    const double spectra[6][6] = {
        {0.0, 0.0, 0.0, 0.0, 0.0, 0.0},        // unused (classes start at 1)
        {0.10, 0.12, 0.14, 0.18, 0.22, 0.20},  // paved
        {0.16, 0.18, 0.20, 0.24, 0.30, 0.28},  // building
        {0.05, 0.09, 0.07, 0.42, 0.22, 0.12},  // grass
        {0.03, 0.06, 0.05, 0.48, 0.18, 0.09},  // tree
    };
    const double water_spectrum[6] = {0.06, 0.05, 0.04, 0.02, 0.01, 0.01};

    std::vector<Grid> bands;
    {
        Rng rng = root.substream(kBands);
        for (int bi = 0; bi < 6; ++bi) bands.push_back(Grid::filled(n, n, 0.0, 0.0, cs, 0.0f));
        for (int row = 0; row < n; ++row) {
            for (int col = 0; col < n; ++col) {
                const int c = int(cover.at(col, row));
                const double* base = c == kWater ? water_spectrum : spectra[c];
                for (int bi = 0; bi < 6; ++bi) {
                    const double v = base[bi] + 0.012 * rng.normal();
                    bands[size_t(bi)].at(col, row) = float(std::clamp(v, 0.01, 0.95));
                }
            }
        }
    }

    // Surface temperature: cover-class offsets that differ between the west
    // and east halves (documented in the header), plus Gaussian noise.
    Grid lst = Grid::filled(n, n, 0.0, 0.0, cs, 0.0f);
    {
        Rng rng = root.substream(kLst);
        const double west_offset[6] = {0.0, 4.0, 5.0, -1.0, -5.0, -3.0};
        const double east_offset[6] = {0.0, 7.0, 9.0, -0.5, -1.0, -3.0};
        for (int row = 0; row < n; ++row) {
            for (int col = 0; col < n; ++col) {
                const int c = int(cover.at(col, row));
                const double* offs = col < n / 2 ? west_offset : east_offset;
                lst.at(col, row) = float(29.0 + offs[c] + 0.4 * rng.normal());
            }
        }
    }

    SynthBundle out;
    out.dir = dir;
    out.dsm = join(dir, "dsm.asc");
    out.cdsm = join(dir, "cdsm.asc");
    out.landcover = join(dir, "landcover.asc");
    out.bands = join(dir, "bands.json");
    out.lst = join(dir, "lst.asc");
    out.zones = join(dir, "zones.geojson");
    out.meteo = join(dir, "meteo.csv");
    out.socio = join(dir, "socio.csv");
    out.config = join(dir, "run.toml");

    write_grid(dsm, out.dsm);
    write_grid(cdsm, out.cdsm);
    write_grid(cover, out.landcover);
    write_grid(lst, out.lst);

    std::string manifest = "{\n  \"bands\": {\n";
    for (int bi = 0; bi < 6; ++bi) {
        const std::string name = std::string("band_") + band_names[bi] + ".asc";
        write_grid(bands[size_t(bi)], join(dir, name));
        manifest += std::string("    \"rho_") + band_names[bi] + "\": \"" + name + "\"";
        manifest += bi + 1 < 6 ? ",\n" : "\n";
    }
    manifest += "  }\n}\n";
    write_text(out.bands, manifest);

    // Square zones, ids 1..k row-major from the south-west corner.
    const int zper = n / spec.zone_cells;
    ZoneSet zs;
    for (int zy = 0; zy < zper; ++zy) {
        for (int zx = 0; zx < zper; ++zx) {
            Zone z;
            z.id = int64_t(zy) * zper + zx + 1;
            const double x0 = zx * spec.zone_cells * cs;
            const double y0 = zy * spec.zone_cells * cs;
            const double x1 = x0 + spec.zone_cells * cs;
            const double y1 = y0 + spec.zone_cells * cs;
            z.rings = {{{x0, y0}, {x1, y0}, {x1, y1}, {x0, y1}, {x0, y0}}};
            zs.zones.push_back(z);
        }
    }
    write_zones(zs, out.zones);

    // One clear tropical day at 14N 0E; irradiance follows solar altitude so
    // ghi = dni * sin(alt) + dhi holds by construction.
    {
        std::string csv = "timestamp,ta,rh,wind10,ghi,dni,dhi\n";
        for (int h = 0; h < 24; ++h) {
            const SunPosition sun =
                solar_position(14.0, 0.0, UtcTime{2023, 7, 15, double(h)});
            const double sa = std::max(0.0, std::sin(sun.altitude_deg * M_PI / 180.0));
            const double ta = 26.0 + 7.0 * std::pow(sa, 0.7);
            const double rh = 72.0 - 30.0 * sa;
            const double wind = 1.2 + 1.6 * sa + 0.3 * std::sin(2.0 * M_PI * h / 24.0);
            const double dni = sa > 0.0 ? 830.0 * std::pow(sa, 0.55) : 0.0;
            const double dhi = sa > 0.0 ? 105.0 * std::pow(sa, 0.45) : 0.0;
            const double ghi = dni * sa + dhi;
            append_row(csv, "2023-07-15T%02d:00:00Z,%.2f,%.2f,%.2f,%.1f,%.1f,%.1f\n", h, ta,
                       rh, wind, ghi, dni, dhi);
        }
        write_text(out.meteo, csv);
    }

    // Socio-economic covariates per zone, driven by built fraction.
    {
        Rng rng = root.substream(kSocio);
        std::string csv = "zone_id,PopD,RD,IntD,RNC\n";
        for (const Zone& z : zs.zones) {
            const auto [cx0, cy0] = zone_centroid(z);
            const int col0 = int(cx0 / cs) - spec.zone_cells / 2;
            const int row0 = int(cy0 / cs) - spec.zone_cells / 2;
            int built = 0;
            for (int r = 0; r < spec.zone_cells; ++r)
                for (int c = 0; c < spec.zone_cells; ++c)
                    if (int(cover.at(col0 + c, row0 + r)) == kBuilding) ++built;
            const double bf = double(built) / (double(spec.zone_cells) * spec.zone_cells);
            const double popd = std::max(50.0, 2000.0 + 14000.0 * bf + 1500.0 * rng.normal());
            const double rd = std::max(0.1, 3.0 + 14.0 * bf + 0.5 * rng.normal());
            const double intd = std::max(1.0, 15.0 + 120.0 * bf + 4.0 * rng.normal());
            const double rnc = std::clamp(0.15 + 0.65 * bf + 0.05 * rng.normal(), 0.0, 1.0);
            append_row(csv, "%lld,%.6g,%.6g,%.6g,%.6g\n", static_cast<long long>(z.id), popd,
                       rd, intd, rnc);
        }
        write_text(out.socio, csv);
    }

    // Ready-to-run configuration with parameters scaled to the city size.
    {
        const int nz = zper * zper;
        std::string cands;
        for (int k : {10, 12, 16, 24}) {
            if (k > nz - 2) continue;
            if (!cands.empty()) cands += ", ";
            cands += std::to_string(k);
        }
        std::string toml;
        toml += "[inputs]\n";
        toml += "dsm = \"dsm.asc\"\ncdsm = \"cdsm.asc\"\nlandcover = \"landcover.asc\"\n";
        toml += "bands = \"bands.json\"\nlst = \"lst.asc\"\nzones = \"zones.geojson\"\n";
        toml += "meteo = \"meteo.csv\"\nsocio = \"socio.csv\"\n\n";
        toml += "[site]\nlatitude = 14.0\nlongitude = 0.0\n\n";
        toml += "[params]\nseed = " + std::to_string(spec.seed) + "\nutci_hour = 11\n";
        toml += "weights = \"queen_nn_hybrid\"\npermutations = 99\nalpha = 0.05\n\n";
        toml += "[svf]\n";
        toml += std::string("n_directions = ") + (n <= 96 ? "36" : "60") + "\n";
        append_row(toml, "max_radius_m = %.1f\n", 30.0 * cs);
        toml += "observer_height_m = 1.1\ntransmissivity = 0.03\nradial_substeps = 2\n\n";
        toml += "[gw]\n";
        toml += "features = [\"SVF_mean\", \"NDVI_mean\", \"NDBI_mean\", \"ALB_mean\", "
                "\"BH_mean\", \"BD\"]\n";
        toml += "kernel_candidates = [" + cands + "]\n";
        toml += "target = \"UTCI_mean\"\nsigned_feature = \"SVF_mean\"\n";
        toml += "color_feature = \"ALB_mean\"\nn_knots = 8\n\n";
        toml += "[fit]\nn_estimators = 120\nlearning_rate = 0.1\nsubsample = 0.8\n";
        toml += "depths = [1, 2]\nmin_child_weight = 2.0\n\n";
        toml += "[output]\ndir = \"out\"\n";
        write_text(out.config, toml);
    }

    return out;
}

}  // namespace heatlens
