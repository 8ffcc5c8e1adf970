#include "oracles.hpp"

#include <cmath>
#include <stdexcept>

#include "heatlens/boosting.hpp"
#include "heatlens/rng.hpp"

namespace oracle {

using heatlens::Grid;

std::vector<double> brute_distance(const Grid& mask) {
    std::vector<std::pair<int, int>> set;
    for (int r = 0; r < mask.height; ++r)
        for (int c = 0; c < mask.width; ++c) {
            float v = mask.at(c, r);
            if (!mask.is_nodata(v) && v != 0.0f) set.emplace_back(c, r);
        }
    std::vector<double> out(size_t(mask.width) * mask.height, 0.0);
    for (int r = 0; r < mask.height; ++r)
        for (int c = 0; c < mask.width; ++c) {
            double best = 1e300;
            for (auto [sc, sr] : set) {
                double dx = double(c - sc), dy = double(r - sr);
                best = std::min(best, dx * dx + dy * dy);
            }
            out[size_t(r) * mask.width + c] = std::sqrt(best) * mask.cell_size;
        }
    return out;
}

double mc_svf(const Grid& surface, int col, int row, double observer_height,
              double max_radius, int n_rays, uint64_t seed, double step_frac) {
    heatlens::Rng rng(seed, 0x5f5eull);
    const double x0 = surface.cell_x(col), y0 = surface.cell_y(row);
    const double z0 = double(surface.at(col, row)) + observer_height;
    const double step = step_frac * surface.cell_size;
    const double ex0 = surface.origin_x, ey0 = surface.origin_y;
    const double ex1 = surface.origin_x + surface.width * surface.cell_size;
    const double ey1 = surface.origin_y + surface.height * surface.cell_size;
    double zmax = -1e300;
    for (float v : surface.values)
        if (!surface.is_nodata(v)) zmax = std::max(zmax, double(v));

    int escaped = 0;
    for (int i = 0; i < n_rays; ++i) {
        double theta = rng.uniform(0.0, 2.0 * M_PI);
        double elev = std::asin(std::sqrt(rng.next_double())); // cosine-weighted
        double ct = std::cos(theta), st = std::sin(theta), tt = std::tan(elev);
        bool blocked = false;
        for (double t = step; t <= max_radius; t += step) {
            double x = x0 + t * ct, y = y0 + t * st;
            if (x < ex0 || x > ex1 || y < ey0 || y > ey1) break;
            double zray = z0 + t * tt;
            if (zray > zmax) break;
            float hs = surface.sample_bilinear(x, y);
            if (surface.is_nodata(hs)) continue;
            if (double(hs) > zray) { blocked = true; break; }
        }
        if (!blocked) ++escaped;
    }
    return double(escaped) / double(n_rays);
}

namespace {

// Flood fill collecting one patch's cell list; diag toggles 8-connectivity.
void flood(const std::vector<int>& cls, int w, int h, int c0, int r0,
           std::vector<int>& patch_of, int pid, bool diag) {
    std::vector<std::pair<int, int>> stack{{c0, r0}};
    int target = cls[r0 * w + c0];
    patch_of[r0 * w + c0] = pid;
    while (!stack.empty()) {
        auto [c, r] = stack.back();
        stack.pop_back();
        for (int dr = -1; dr <= 1; ++dr)
            for (int dc = -1; dc <= 1; ++dc) {
                if (dc == 0 && dr == 0) continue;
                if (!diag && dc != 0 && dr != 0) continue;
                int nc = c + dc, nr = r + dr;
                if (nc < 0 || nc >= w || nr < 0 || nr >= h) continue;
                int i = nr * w + nc;
                if (cls[i] == target && patch_of[i] < 0) {
                    patch_of[i] = pid;
                    stack.emplace_back(nc, nr);
                }
            }
    }
}

} // namespace

BruteLandscape brute_landscape(const Grid& g) {
    const int w = g.width, h = g.height;
    const double cs = g.cell_size;
    std::vector<int> cls(size_t(w) * h, -1);
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c)
            if (!g.is_nodata(g.at(c, r))) cls[r * w + c] = int(std::lround(g.at(c, r)));

    std::vector<int> patch_of(size_t(w) * h, -1);
    int n_patches = 0;
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c)
            if (cls[r * w + c] >= 0 && patch_of[r * w + c] < 0)
                flood(cls, w, h, c, r, patch_of, n_patches++, true);

    int total = 0;
    std::map<int, int> class_cells;
    for (int i = 0; i < w * h; ++i)
        if (cls[i] >= 0) {
            ++total;
            ++class_cells[cls[i]];
        }
    double A = total * cs * cs;
    int m_classes = int(class_cells.size());

    // Per-patch tallies straight from definitions.
    std::vector<int> p_cells(n_patches, 0), p_class(n_patches, -1);
    std::vector<int> p_edges(n_patches, 0);
    std::vector<double> p_contig(n_patches, 0.0);
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c) {
            int p = patch_of[r * w + c];
            if (p < 0) continue;
            p_class[p] = cls[r * w + c];
            ++p_cells[p];
            int same_orth = 0, same_diag = 0;
            for (int d = 0; d < 4; ++d) {
                int nc = c + (d == 0) - (d == 1);
                int nr = r + (d == 2) - (d == 3);
                bool in = nc >= 0 && nc < w && nr >= 0 && nr < h;
                if (in && patch_of[nr * w + nc] == p) ++same_orth;
                else ++p_edges[p];
            }
            for (int dc = -1; dc <= 1; dc += 2)
                for (int dr = -1; dr <= 1; dr += 2) {
                    int nc = c + dc, nr = r + dr;
                    if (nc >= 0 && nc < w && nr >= 0 && nr < h &&
                        patch_of[nr * w + nc] == p)
                        ++same_diag;
                }
            p_contig[p] += (1.0 + 2.0 * same_orth + 1.0 * same_diag);
        }

    BruteLandscape out;
    std::map<int, std::vector<int>> by_class;
    for (int p = 0; p < n_patches; ++p) by_class[p_class[p]].push_back(p);

    for (auto& [cid, plist] : by_class) {
        double a_i = class_cells[cid] * cs * cs;
        out.pland[cid] = 100.0 * a_i / A;
        out.pd[cid] = double(plist.size()) / A * 1e6;
        double edge_m = 0.0, sp = 0.0, spa = 0.0, contig_aw = 0.0;
        for (int p : plist) {
            edge_m += p_edges[p] * cs;
            sp += p_edges[p];
            spa += p_edges[p] * std::sqrt(double(p_cells[p]));
            double contig = (p_contig[p] / p_cells[p] - 1.0) / 12.0;
            contig_aw += contig * p_cells[p];
        }
        out.lsi[cid] = 0.25 * edge_m / std::sqrt(A);
        out.cohesion[cid] =
            total > 1 ? (1.0 - sp / spa) / (1.0 - 1.0 / std::sqrt(double(total))) * 100.0
                      : 0.0;
        out.contig_am[cid] = contig_aw / class_cells[cid];
    }

    if (m_classes == 1) {
        out.contag = 100.0;
    } else {
        double acc = 0.0;
        for (auto& [ci, ni] : class_cells) {
            double gtot = 0.0;
            std::map<int, double> gk;
            for (int r = 0; r < h; ++r)
                for (int c = 0; c < w; ++c) {
                    if (cls[r * w + c] != ci) continue;
                    const int DX[4] = {1, -1, 0, 0}, DY[4] = {0, 0, 1, -1};
                    for (int d = 0; d < 4; ++d) {
                        int nc = c + DX[d], nr = r + DY[d];
                        if (nc < 0 || nc >= w || nr < 0 || nr >= h) continue;
                        if (cls[nr * w + nc] < 0) continue;
                        gk[cls[nr * w + nc]] += 1.0;
                        gtot += 1.0;
                    }
                }
            if (gtot == 0.0) continue;
            for (auto& [ck, cnt] : gk) {
                double pik = (double(ni) / total) * (cnt / gtot);
                if (pik > 0) acc += pik * std::log(pik);
            }
        }
        out.contag = (1.0 + acc / (2.0 * std::log(double(m_classes)))) * 100.0;
    }

    for (auto& [cid, ni] : class_cells) {
        double p = double(ni) / total;
        out.shdi -= p * std::log(p);
    }
    out.shei = m_classes > 1 ? out.shdi / std::log(double(m_classes)) : 0.0;
    return out;
}

double utci_reference(double ta_c, double tmrt_c, double wind_ms, double rh_pct) {
    auto clampv = [](double v, double lo, double hi) { return v < lo ? lo : (v > hi ? hi : v); };
    const double ta = clampv(ta_c, -50.0, 50.0);
    const double d = clampv(tmrt_c - ta_c, -30.0, 70.0);
    const double va = clampv(wind_ms, 0.5, 17.0);
    const double e_hpa =
        clampv(6.1094 * std::exp(17.625 * ta / (ta + 243.04)) * rh_pct / 100.0, 0.0, 50.0);
    const double pa = e_hpa / 10.0;

    double acc = 0.0;
#include "utci_reference_terms.inc"
    return ta + acc;
}

void noaa_solar(int year, int month, int day, double hour_utc,
                double lat_deg, double lon_deg,
                double& elev_deg, double& azim_deg) {
    const double DEG = 3.14159265358979323846 / 180.0;
    const double jd = 367.0 * year - std::floor(7.0 * (year + std::floor((month + 9) / 12.0)) / 4.0) +
                      std::floor(275.0 * month / 9.0) + day + 1721013.5 + hour_utc / 24.0;
    const double T = (jd - 2451545.0) / 36525.0;

    const double L0 = std::fmod(280.46646 + 36000.76983 * T + 0.0003032 * T * T, 360.0);
    const double M = 357.52911 + 35999.05029 * T - 0.0001537 * T * T;
    const double e = 0.016708634 - 0.000042037 * T - 0.0000001267 * T * T;
    const double Mr = M * DEG;
    const double C = std::sin(Mr) * (1.914602 - 0.004817 * T - 0.000014 * T * T) +
                     std::sin(2 * Mr) * (0.019993 - 0.000101 * T) + std::sin(3 * Mr) * 0.000289;
    const double true_long = L0 + C;
    const double omega = (125.04 - 1934.136 * T) * DEG;
    const double app_long = true_long - 0.00569 - 0.00478 * std::sin(omega);
    const double eps0 = 23.0 + (26.0 + 21.448 / 60.0) / 60.0 -
                        (46.8150 * T + 0.00059 * T * T - 0.001813 * T * T * T) / 3600.0;
    const double eps = (eps0 + 0.00256 * std::cos(omega)) * DEG;

    const double decl = std::asin(std::sin(eps) * std::sin(app_long * DEG));

    double y = std::tan(eps / 2.0);
    y *= y;
    const double eqtime_min =
        4.0 / DEG *
        (y * std::sin(2.0 * L0 * DEG) - 2.0 * e * std::sin(Mr) + 4.0 * e * y * std::sin(Mr) * std::cos(2.0 * L0 * DEG) -
         0.5 * y * y * std::sin(4.0 * L0 * DEG) - 1.25 * e * e * std::sin(2.0 * Mr));

    const double tst_min = std::fmod(hour_utc * 60.0 + eqtime_min + 4.0 * lon_deg + 1440.0 * 4.0, 1440.0);
    double ha_deg = tst_min / 4.0 - 180.0;
    if (ha_deg < -180.0) ha_deg += 360.0;
    const double ha = ha_deg * DEG;

    const double lat = lat_deg * DEG;
    const double cos_zen = std::sin(lat) * std::sin(decl) + std::cos(lat) * std::cos(decl) * std::cos(ha);
    const double zen = std::acos(std::max(-1.0, std::min(1.0, cos_zen)));
    elev_deg = 90.0 - zen / DEG;

    double az;
    const double sin_zen = std::sin(zen);
    if (std::abs(sin_zen) < 1e-12) {
        az = 0.0;
    } else {
        double cos_az = (std::sin(lat) * std::cos(zen) - std::sin(decl)) / (std::cos(lat) * sin_zen);
        cos_az = std::max(-1.0, std::min(1.0, cos_az));
        az = std::acos(cos_az) / DEG;
        if (ha_deg > 0.0)
            az = std::fmod(az + 180.0, 360.0);
        else
            az = std::fmod(540.0 - az, 360.0);
    }
    azim_deg = az;
}

namespace {

// Expected ensemble output when only the features in `subset` are pinned to
// x: splits on pinned features follow x, all other splits average the two
// children weighted by training cover.
double cover_expectation(const heatlens::Tree& t, int node, const std::vector<double>& x,
                         unsigned subset) {
    const heatlens::TreeNode& n = t.nodes[size_t(node)];
    if (n.split_feature < 0) return n.leaf_value;
    if ((subset >> n.split_feature) & 1u) {
        const int next = x[size_t(n.split_feature)] < n.threshold ? n.left : n.right;
        return cover_expectation(t, next, x, subset);
    }
    return (t.nodes[size_t(n.left)].cover * cover_expectation(t, n.left, x, subset) +
            t.nodes[size_t(n.right)].cover * cover_expectation(t, n.right, x, subset)) /
           n.cover;
}

} // namespace

std::vector<double> subset_shapley_cover(const void* model_ptr,
                                         const std::vector<double>& x) {
    const auto& m = *static_cast<const heatlens::BoostedModel*>(model_ptr);
    const size_t p = m.feature_names.size();
    if (p > 15) throw std::runtime_error("subset_shapley_cover: too many features");

    const size_t subsets = size_t(1) << p;
    std::vector<double> v(subsets, 0.0);
    for (size_t s = 0; s < subsets; ++s) {
        double acc = m.base_score;
        for (const auto& t : m.trees)
            acc += m.learning_rate * cover_expectation(t, 0, x, unsigned(s));
        v[s] = acc;
    }

    std::vector<double> fact(p + 1, 1.0);
    for (size_t i = 1; i <= p; ++i) fact[i] = fact[i - 1] * double(i);
    std::vector<double> phi(p, 0.0);
    for (size_t s = 0; s < subsets; ++s) {
        size_t members = 0;
        for (size_t f = 0; f < p; ++f) members += (s >> f) & 1u;
        if (members == p) continue;
        const double w = fact[members] * fact[p - members - 1] / fact[p];
        for (size_t f = 0; f < p; ++f) {
            if ((s >> f) & 1u) continue;
            phi[f] += w * (v[s | (size_t(1) << f)] - v[s]);
        }
    }
    return phi;
}

double naive_moran(const std::vector<double>& x,
                   const std::vector<std::vector<double>>& w) {
    const size_t n = x.size();
    double mean = 0.0;
    for (double v : x) mean += v;
    mean /= double(n);

    double s0 = 0.0, num = 0.0, den = 0.0;
    for (size_t i = 0; i < n; ++i) {
        den += (x[i] - mean) * (x[i] - mean);
        for (size_t j = 0; j < n; ++j) {
            s0 += w[i][j];
            num += w[i][j] * (x[i] - mean) * (x[j] - mean);
        }
    }
    return double(n) / s0 * num / den;
}

} // namespace oracle
