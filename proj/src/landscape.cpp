#include "heatlens/landscape.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

namespace heatlens {

namespace {

int class_of(const Grid& g, int c, int r) {
    float v = g.at(c, r);
    if (g.is_nodata(v)) return -1;
    double rounded = std::nearbyint(double(v));
    if (std::fabs(double(v) - rounded) > 1e-6 || rounded < 0.0 || rounded > 2147483646.0)
        throw ValidationError("class grid holds a non-integer or negative value");
    return int(rounded);
}

struct UnionFind {
    std::vector<int32_t> parent;
    explicit UnionFind(size_t n) : parent(n) {
        std::iota(parent.begin(), parent.end(), 0);
    }
    int32_t find(int32_t i) {
        while (parent[i] != i) {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        return i;
    }
    void unite(int32_t a, int32_t b) {
        a = find(a);
        b = find(b);
        if (a != b) parent[std::max(a, b)] = std::min(a, b);
    }
};

} // namespace

PatchLabels label_patches(const Grid& classes, int connectivity) {
    if (connectivity != 4 && connectivity != 8)
        throw ValidationError("connectivity must be 4 or 8");
    const int w = classes.width, h = classes.height;
    std::vector<int> cls(size_t(w) * h, -1);
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c)
            cls[size_t(r) * w + c] = class_of(classes, c, r);

    UnionFind uf(size_t(w) * h);
    auto idx = [&](int c, int r) { return size_t(r) * w + c; };
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c) {
            int me = cls[idx(c, r)];
            if (me < 0) continue;
            // Link to already-visited neighbors: W, and the row below (SW, S, SE).
            if (c > 0 && cls[idx(c - 1, r)] == me) uf.unite(int32_t(idx(c, r)), int32_t(idx(c - 1, r)));
            if (r > 0) {
                if (cls[idx(c, r - 1)] == me) uf.unite(int32_t(idx(c, r)), int32_t(idx(c, r - 1)));
                if (connectivity == 8) {
                    if (c > 0 && cls[idx(c - 1, r - 1)] == me)
                        uf.unite(int32_t(idx(c, r)), int32_t(idx(c - 1, r - 1)));
                    if (c + 1 < w && cls[idx(c + 1, r - 1)] == me)
                        uf.unite(int32_t(idx(c, r)), int32_t(idx(c + 1, r - 1)));
                }
            }
        }

    PatchLabels out;
    out.labels.assign(size_t(w) * h, -1);
    std::vector<int32_t> root_to_patch(size_t(w) * h, -1);
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c) {
            size_t i = idx(c, r);
            if (cls[i] < 0) continue;
            int32_t root = uf.find(int32_t(i));
            if (root_to_patch[root] < 0) {
                root_to_patch[root] = int32_t(out.patches.size());
                Patch p;
                p.class_id = cls[i];
                out.patches.push_back(p);
            }
            out.labels[i] = root_to_patch[root];
        }

    // Per-patch area, orthogonal-edge perimeter, and contiguity template sums.
    std::vector<double> tmpl_sum(out.patches.size(), 0.0);
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c) {
            int32_t p = out.labels[idx(c, r)];
            if (p < 0) continue;
            Patch& patch = out.patches[p];
            patch.cells += 1;
            static const int DX4[4] = {1, -1, 0, 0};
            static const int DY4[4] = {0, 0, 1, -1};
            double t = 1.0; // the template's center weight
            for (int d = 0; d < 4; ++d) {
                int nc = c + DX4[d], nr = r + DY4[d];
                bool same = classes.in_bounds(nc, nr) && out.labels[idx(nc, nr)] == p;
                if (!same) patch.edges += 1;
                if (same) t += 2.0;
            }
            static const int DXD[4] = {1, 1, -1, -1};
            static const int DYD[4] = {1, -1, 1, -1};
            for (int d = 0; d < 4; ++d) {
                int nc = c + DXD[d], nr = r + DYD[d];
                if (classes.in_bounds(nc, nr) && out.labels[idx(nc, nr)] == p) t += 1.0;
            }
            tmpl_sum[p] += t;
        }
    for (size_t p = 0; p < out.patches.size(); ++p)
        out.patches[p].contig =
            (tmpl_sum[p] / double(out.patches[p].cells) - 1.0) / 12.0;
    return out;
}

LandscapeMetrics landscape_metrics(const Grid& classes, int connectivity) {
    PatchLabels pl = label_patches(classes, connectivity);
    if (pl.patches.empty()) throw ValidationError("landscape has no classified cells");
    const double cs = classes.cell_size;
    const int w = classes.width, h = classes.height;

    LandscapeMetrics m;
    m.total_cells = 0;
    for (int32_t l : pl.labels)
        if (l >= 0) ++m.total_cells;
    m.total_area_m2 = double(m.total_cells) * cs * cs;
    m.n_patches = int(pl.patches.size());
    m.pd = double(m.n_patches) / m.total_area_m2 * 1e6;

    std::map<int, ClassMetrics> per_class;
    std::map<int, std::vector<const Patch*>> class_patches;
    for (const Patch& p : pl.patches) {
        ClassMetrics& cm = per_class[p.class_id];
        cm.class_id = p.class_id;
        cm.cells += p.cells;
        cm.n_patches += 1;
        class_patches[p.class_id].push_back(&p);
    }
    m.n_classes = int(per_class.size());

    for (auto& [cid, cm] : per_class) {
        double a_i = double(cm.cells) * cs * cs;
        cm.pland = 100.0 * a_i / m.total_area_m2;
        cm.pd = double(cm.n_patches) / m.total_area_m2 * 1e6;

        int64_t edge_cells = 0;        // class edge in cell-edge counts
        double sum_p = 0.0;            // cohesion sums in cell units
        double sum_p_sqrt_a = 0.0;
        double aw_contig = 0.0;
        // Perimeter-area regression accumulators (log meters).
        double sx = 0, sy = 0, sxx = 0, sxy = 0;
        for (const Patch* p : class_patches[cid]) {
            edge_cells += p->edges;
            sum_p += double(p->edges);
            sum_p_sqrt_a += double(p->edges) * std::sqrt(double(p->cells));
            aw_contig += p->contig * double(p->cells);
            double lx = std::log(double(p->edges) * cs);
            double ly = std::log(double(p->cells) * cs * cs);
            sx += lx; sy += ly; sxx += lx * lx; sxy += lx * ly;
        }
        cm.lsi = 0.25 * double(edge_cells) * cs / std::sqrt(m.total_area_m2);
        double z = double(m.total_cells);
        cm.cohesion = (z > 1.0)
            ? (1.0 - sum_p / sum_p_sqrt_a) / (1.0 - 1.0 / std::sqrt(z)) * 100.0
            : 0.0;
        cm.contig_am = aw_contig / double(cm.cells);
        double n = double(cm.n_patches);
        double var_x = n * sxx - sx * sx;
        if (cm.n_patches >= 2 && var_x > 1e-12) {
            double slope = (n * sxy - sx * sy) / var_x;
            cm.pafrac = (std::fabs(slope) > 1e-12)
                ? 2.0 / slope
                : std::numeric_limits<double>::quiet_NaN();
        } else {
            cm.pafrac = std::numeric_limits<double>::quiet_NaN();
        }
    }

    // Contagion over the ordered 4-neighbor adjacency counts.
    std::map<int, std::map<int, int64_t>> gik;
    std::map<int, int64_t> gi_tot;
    auto idx = [&](int c, int r) { return size_t(r) * w + c; };
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c) {
            int32_t l = pl.labels[idx(c, r)];
            if (l < 0) continue;
            int ci = pl.patches[l].class_id;
            static const int DX[4] = {1, -1, 0, 0};
            static const int DY[4] = {0, 0, 1, -1};
            for (int d = 0; d < 4; ++d) {
                int nc = c + DX[d], nr = r + DY[d];
                if (!classes.in_bounds(nc, nr)) continue;
                int32_t nl = pl.labels[idx(nc, nr)];
                if (nl < 0) continue;
                int ck = pl.patches[nl].class_id;
                gik[ci][ck] += 1;
                gi_tot[ci] += 1;
            }
        }
    if (m.n_classes == 1) {
        m.contag = 100.0;
    } else {
        double acc = 0.0;
        for (auto& [ci, cm] : per_class) {
            if (gi_tot[ci] == 0) continue;
            double p_i = double(cm.cells) / double(m.total_cells);
            for (auto& [ck, cnt] : gik[ci]) {
                double pik = p_i * double(cnt) / double(gi_tot[ci]);
                if (pik > 0.0) acc += pik * std::log(pik);
            }
        }
        m.contag = (1.0 + acc / (2.0 * std::log(double(m.n_classes)))) * 100.0;
    }

    for (auto& [cid, cm] : per_class) {
        double p_i = double(cm.cells) / double(m.total_cells);
        m.shdi -= p_i * std::log(p_i);
    }
    m.shei = (m.n_classes > 1) ? m.shdi / std::log(double(m.n_classes)) : 0.0;

    for (auto& [cid, cm] : per_class) m.classes.push_back(cm);
    return m;
}

Grid mask_to_zone(const Grid& classes, const Grid& zones, int64_t zone_id) {
    classes.require_same_geometry(zones, "class grid vs zone raster");
    Grid out = classes;
    for (size_t i = 0; i < out.values.size(); ++i) {
        float z = zones.values[i];
        if (zones.is_nodata(z) || int64_t(z) != zone_id) out.values[i] = out.nodata;
    }
    return out;
}

} // namespace heatlens
