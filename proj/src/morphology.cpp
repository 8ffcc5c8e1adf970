#include "heatlens/morphology.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include "heatlens/parallel.hpp"
#include "heatlens/sampler.hpp"

namespace heatlens {

SvfResult compute_svf(const Grid& dsm, const Grid& cdsm, const SvfOptions& opt,
                      int threads) {
    dsm.require_same_geometry(cdsm, "dsm vs cdsm");
    if (opt.n_directions < 4) throw ValidationError("svf: need at least 4 directions");
    if (!(opt.max_radius_m > 0)) throw ValidationError("svf: radius must be positive");
    if (opt.transmissivity < 0.0 || opt.transmissivity > 1.0)
        throw ValidationError("svf: transmissivity must lie in [0,1]");
    for (float v : cdsm.values)
        if (!cdsm.is_nodata(v) && v < 0.0f)
            throw ValidationError("svf: canopy heights must be non-negative");

    // Vegetated surface = dsm + canopy depth.
    Grid veg = dsm;
    for (size_t i = 0; i < veg.values.size(); ++i) {
        float d = dsm.values[i], c = cdsm.values[i];
        veg.values[i] = (dsm.is_nodata(d) || cdsm.is_nodata(c)) ? veg.nodata : d + c;
    }

    if (opt.radial_substeps < 1)
        throw ValidationError("svf: radial_substeps must be at least 1");

    const int n_dir = opt.n_directions;
    std::vector<double> cos_t(n_dir), sin_t(n_dir);
    for (int k = 0; k < n_dir; ++k) {
        double theta = (k + 0.5) * 2.0 * M_PI / n_dir; // sector centers
        cos_t[k] = std::cos(theta);
        sin_t[k] = std::sin(theta);
    }
    const double step = dsm.cell_size / opt.radial_substeps;
    const int n_steps = std::max(1, int(std::floor(opt.max_radius_m / step)));

    SvfResult res{
        Grid::filled(dsm.width, dsm.height, dsm.origin_x, dsm.origin_y, dsm.cell_size,
                     dsm.nodata, dsm.nodata),
        Grid::filled(dsm.width, dsm.height, dsm.origin_x, dsm.origin_y, dsm.cell_size,
                     dsm.nodata, dsm.nodata),
        Grid::filled(dsm.width, dsm.height, dsm.origin_x, dsm.origin_y, dsm.cell_size,
                     dsm.nodata, dsm.nodata)};

    DualSampler surf(dsm, veg);
    const double tau = opt.transmissivity;

    parallel_for(size_t(dsm.height), 4, [&](size_t rb, size_t re) {
        for (size_t r = rb; r < re; ++r) {
            for (int c = 0; c < dsm.width; ++c) {
                float d0 = dsm.at(c, int(r));
                float c0 = cdsm.at(c, int(r));
                if (dsm.is_nodata(d0) || cdsm.is_nodata(c0)) continue;
                const double x0 = dsm.cell_x(c), y0 = dsm.cell_y(int(r));
                const double z0 = double(d0) + opt.observer_height_m;
                double acc_build = 0.0, acc_veg = 0.0;
                for (int k = 0; k < n_dir; ++k) {
                    double max_tb = 0.0, max_tv = 0.0; // horizon tangents, clamped >= 0
                    for (int j = 1; j <= n_steps; ++j) {
                        double dist = j * step;
                        double x = x0 + dist * cos_t[k];
                        double y = y0 + dist * sin_t[k];
                        if (!surf.inside(x, y)) break; // open sky beyond the raster
                        double hb, hv;
                        if (!surf.sample(x, y, hb, hv)) continue;
                        double inv = 1.0 / dist;
                        max_tb = std::max(max_tb, (hb - z0) * inv);
                        max_tv = std::max(max_tv, (hv - z0) * inv);
                    }
                    // cos^2(atan(t)) = 1 / (1 + t^2)
                    acc_build += 1.0 / (1.0 + max_tb * max_tb);
                    acc_veg += 1.0 / (1.0 + max_tv * max_tv);
                }
                double svf_b = acc_build / n_dir;
                double svf_v = acc_veg / n_dir;
                res.svf_build.at(c, int(r)) = float(svf_b);
                res.svf_buildveg.at(c, int(r)) = float(svf_v);
                res.svf.at(c, int(r)) = float(tau * svf_b + (1.0 - tau) * svf_v);
            }
        }
    }, threads);
    return res;
}

namespace {

struct Welford {
    int64_t n = 0;
    double mean = 0.0, m2 = 0.0;
    void add(double x) {
        ++n;
        double d = x - mean;
        mean += d / double(n);
        m2 += d * (x - mean);
    }
    double sd() const {
        if (n < 2) return std::numeric_limits<double>::quiet_NaN();
        return std::sqrt(m2 / double(n - 1));
    }
};

} // namespace

std::vector<ZoneMorphometrics> zone_morphometrics(const Grid& building_height,
                                                  const Grid& canopy_height,
                                                  const Grid& zones,
                                                  double floor_height_m) {
    building_height.require_same_geometry(zones, "building heights vs zones");
    canopy_height.require_same_geometry(zones, "canopy heights vs zones");
    if (!(floor_height_m > 0)) throw ValidationError("floor height must be positive");

    struct Acc {
        int64_t cells = 0, build = 0, can = 0, floors = 0;
        Welford bh, ch;
    };
    std::map<int64_t, Acc> acc;
    for (int r = 0; r < zones.height; ++r)
        for (int c = 0; c < zones.width; ++c) {
            float z = zones.at(c, r);
            if (zones.is_nodata(z)) continue;
            Acc& a = acc[int64_t(z)];
            a.cells += 1;
            float bh = building_height.at(c, r);
            if (!building_height.is_nodata(bh) && bh > 0.0f) {
                a.build += 1;
                a.bh.add(double(bh));
                a.floors += std::max<int64_t>(1, std::lround(double(bh) / floor_height_m));
            }
            float ch = canopy_height.at(c, r);
            if (!canopy_height.is_nodata(ch) && ch > 0.0f) {
                a.can += 1;
                a.ch.add(double(ch));
            }
        }
    if (acc.empty()) throw ValidationError("zone raster has no zone cells");

    std::vector<ZoneMorphometrics> out;
    const double nan = std::numeric_limits<double>::quiet_NaN();
    for (const auto& [id, a] : acc) {
        ZoneMorphometrics z;
        z.zone_id = id;
        z.cells = a.cells;
        z.bd = double(a.build) / double(a.cells);
        z.cd = double(a.can) / double(a.cells);
        z.far = double(a.floors) / double(a.cells);
        z.bh_mean = a.build > 0 ? a.bh.mean : nan;
        z.bh_sd = a.bh.sd();
        z.ch_mean = a.can > 0 ? a.ch.mean : nan;
        z.ch_sd = a.ch.sd();
        out.push_back(z);
    }
    return out;
}

} // namespace heatlens
