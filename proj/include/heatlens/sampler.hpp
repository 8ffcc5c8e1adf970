#pragma once

#include <algorithm>

#include "heatlens/grid.hpp"

namespace heatlens {

// Samples two co-registered height surfaces with one set of bilinear
// weights. Returns false when the point leaves the raster extent or any
// support cell is missing; such samples never block a ray.
struct DualSampler {
    const Grid& a;
    const Grid& b;
    double x1, y1; // extent upper corner

    DualSampler(const Grid& ga, const Grid& gb)
        : a(ga), b(gb),
          x1(ga.origin_x + ga.width * ga.cell_size),
          y1(ga.origin_y + ga.height * ga.cell_size) {}

    bool inside(double x, double y) const {
        return x >= a.origin_x && x <= x1 && y >= a.origin_y && y <= y1;
    }

    bool sample(double x, double y, double& ha, double& hb) const {
        double gx = (x - a.origin_x) / a.cell_size - 0.5;
        double gy = (y - a.origin_y) / a.cell_size - 0.5;
        gx = std::clamp(gx, 0.0, double(a.width - 1));
        gy = std::clamp(gy, 0.0, double(a.height - 1));
        int i0 = int(gx), j0 = int(gy);
        int i1 = std::min(i0 + 1, a.width - 1);
        int j1 = std::min(j0 + 1, a.height - 1);
        double fx = gx - i0, fy = gy - j0;
        float a00 = a.at(i0, j0), a10 = a.at(i1, j0), a01 = a.at(i0, j1), a11 = a.at(i1, j1);
        float b00 = b.at(i0, j0), b10 = b.at(i1, j0), b01 = b.at(i0, j1), b11 = b.at(i1, j1);
        if (a.is_nodata(a00) || a.is_nodata(a10) || a.is_nodata(a01) || a.is_nodata(a11) ||
            b.is_nodata(b00) || b.is_nodata(b10) || b.is_nodata(b01) || b.is_nodata(b11))
            return false;
        double w00 = (1 - fx) * (1 - fy), w10 = fx * (1 - fy);
        double w01 = (1 - fx) * fy, w11 = fx * fy;
        ha = w00 * a00 + w10 * a10 + w01 * a01 + w11 * a11;
        hb = w00 * b00 + w10 * b10 + w01 * b01 + w11 * b11;
        return true;
    }
};

} // namespace heatlens
