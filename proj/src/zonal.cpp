#include "heatlens/zonal.hpp"

#include <algorithm>
#include <cmath>

#include "heatlens/stats_util.hpp"

namespace heatlens {

namespace {

int64_t zone_id_of(float v, const Grid& zones) {
    const double r = std::nearbyint(double(v));
    if (std::abs(double(v) - r) > 1e-6 || r < 1.0)
        throw ValidationError("zonal: zone raster must hold positive integer ids");
    (void)zones;
    return int64_t(r);
}

struct Acc {
    int64_t n = 0;
    double mean = 0.0, m2 = 0.0;
    void add(double v) {
        ++n;
        const double d = v - mean;
        mean += d / double(n);
        m2 += d * (v - mean);
    }
};

} // namespace

std::map<int64_t, ZoneStat> zonal_stats(const Grid& values, const Grid& zone_raster,
                                        const std::vector<const Grid*>& masks) {
    values.require_same_geometry(zone_raster, "values vs zone raster");
    for (const Grid* m : masks) {
        if (!m) throw ValidationError("zonal: null mask");
        values.require_same_geometry(*m, "values vs mask");
        for (float v : m->values)
            if (!m->is_nodata(v) && v != 0.0f && v != 1.0f)
                throw ValidationError("zonal: mask values must be 0 or 1");
    }

    std::map<int64_t, Acc> acc;
    for (size_t i = 0; i < values.values.size(); ++i) {
        const float z = zone_raster.values[i];
        if (zone_raster.is_nodata(z)) continue;
        const int64_t id = zone_id_of(z, zone_raster);
        Acc& a = acc[id]; // zone appears even if every cell is masked
        const float v = values.values[i];
        if (values.is_nodata(v)) continue;
        bool masked = false;
        for (const Grid* m : masks) {
            const float mv = m->values[i];
            if (!m->is_nodata(mv) && mv != 0.0f) {
                masked = true;
                break;
            }
        }
        if (!masked) a.add(double(v));
    }

    std::map<int64_t, ZoneStat> out;
    for (const auto& [id, a] : acc) {
        ZoneStat s;
        s.count = a.n;
        if (a.n >= 1) s.mean = a.mean;
        if (a.n >= 2) s.sd = std::sqrt(a.m2 / double(a.n - 1));
        out[id] = s;
    }
    return out;
}

Grid rooftop_mask(const Grid& building_height) {
    Grid out = building_height;
    for (size_t i = 0; i < out.values.size(); ++i) {
        const float v = building_height.values[i];
        if (building_height.is_nodata(v)) continue;
        out.values[i] = v > 0.0f ? 1.0f : 0.0f;
    }
    return out;
}

Grid class_mask(const Grid& landcover, int cls) {
    Grid out = landcover;
    for (size_t i = 0; i < out.values.size(); ++i) {
        const float v = landcover.values[i];
        if (landcover.is_nodata(v)) continue;
        out.values[i] = std::nearbyint(double(v)) == double(cls) ? 1.0f : 0.0f;
    }
    return out;
}

std::vector<double> standardized_mismatch(const FeatureTable& t, const std::string& col_a,
                                          const std::string& col_b) {
    const std::vector<double> a = t.column(col_a);
    const std::vector<double> b = t.column(col_b);

    std::vector<size_t> rows;
    for (size_t i = 0; i < t.n(); ++i)
        if (!FeatureTable::is_missing(a[i]) && !FeatureTable::is_missing(b[i])) rows.push_back(i);
    if (rows.size() < 2)
        throw ValidationError("mismatch: need at least 2 zones with both targets");

    auto zparams = [&](const std::vector<double>& v, const std::string& name) {
        double mean = 0.0;
        for (size_t i : rows) mean += v[i];
        mean /= double(rows.size());
        double var = 0.0;
        for (size_t i : rows) var += (v[i] - mean) * (v[i] - mean);
        var /= double(rows.size()); // population variance
        if (var <= 0.0) throw ValidationError("mismatch: degenerate target " + name);
        return std::pair<double, double>(mean, std::sqrt(var));
    };
    const auto [ma, sa] = zparams(a, col_a);
    const auto [mb, sb] = zparams(b, col_b);

    std::vector<double> out(t.n(), FeatureTable::missing());
    for (size_t i : rows) out[i] = std::abs((a[i] - ma) / sa - (b[i] - mb) / sb);
    return out;
}

namespace {

// Tercile cut points over the non-missing values; bin by v <= q (ties fall
// to the lower bin).
std::pair<double, double> tercile_cuts(const std::vector<double>& v, const std::string& name) {
    std::vector<double> vals;
    for (double x : v)
        if (!FeatureTable::is_missing(x)) vals.push_back(x);
    std::sort(vals.begin(), vals.end());
    size_t distinct = vals.empty() ? 0 : 1;
    for (size_t i = 1; i < vals.size(); ++i)
        if (vals[i] != vals[i - 1]) ++distinct;
    if (distinct < 3)
        throw ValidationError("bivariate: need at least 3 distinct values in " + name);
    return {quantile_sorted(vals, 1.0 / 3.0), quantile_sorted(vals, 2.0 / 3.0)};
}

int tercile_bin(double v, const std::pair<double, double>& cuts) {
    if (v <= cuts.first) return 1;
    if (v <= cuts.second) return 2;
    return 3;
}

} // namespace

std::vector<BivariateClass> bivariate_class(const FeatureTable& t, const std::string& col_a,
                                            const std::string& col_b) {
    const std::vector<double> a = t.column(col_a);
    const std::vector<double> b = t.column(col_b);
    const auto cuts_a = tercile_cuts(a, col_a);
    const auto cuts_b = tercile_cuts(b, col_b);

    std::vector<BivariateClass> out(t.n());
    for (size_t i = 0; i < t.n(); ++i) {
        if (FeatureTable::is_missing(a[i]) || FeatureTable::is_missing(b[i])) continue;
        out[i].a_bin = tercile_bin(a[i], cuts_a);
        out[i].b_bin = tercile_bin(b[i], cuts_b);
    }
    return out;
}

std::string bivariate_label(const BivariateClass& c) {
    static const char* level[4] = {"?", "low", "mid", "high"};
    if (c.a_bin < 1 || c.a_bin > 3 || c.b_bin < 1 || c.b_bin > 3) return "missing";
    std::string s = std::string(level[c.a_bin]) + " LST, " + level[c.b_bin] + " UTCI";
    if (c.a_bin == 3 && c.b_bin == 3) s += " (compounding thermal risk)";
    return s;
}

std::vector<BinStat> binned_median_iqr(const std::vector<double>& x,
                                       const std::vector<double>& y, int n_bins) {
    if (x.size() != y.size())
        throw ValidationError("binned stats: x and y lengths differ");
    if (n_bins < 1) throw ValidationError("binned stats: need at least 1 bin");
    std::vector<std::pair<double, double>> pts;
    for (size_t i = 0; i < x.size(); ++i)
        if (std::isfinite(x[i]) && std::isfinite(y[i])) pts.push_back({x[i], y[i]});
    if (pts.empty()) throw ValidationError("binned stats: no finite points");

    double xmin = pts[0].first, xmax = pts[0].first;
    for (const auto& p : pts) {
        xmin = std::min(xmin, p.first);
        xmax = std::max(xmax, p.first);
    }
    const double width = (xmax - xmin) / double(n_bins);

    std::vector<std::vector<double>> per_bin(static_cast<size_t>(n_bins));
    for (const auto& p : pts) {
        int idx = width > 0.0 ? int((p.first - xmin) / width) : 0;
        idx = std::clamp(idx, 0, n_bins - 1);
        per_bin[size_t(idx)].push_back(p.second);
    }

    std::vector<BinStat> out(static_cast<size_t>(n_bins));
    for (int b = 0; b < n_bins; ++b) {
        BinStat& s = out[size_t(b)];
        s.x_lo = xmin + width * b;
        s.x_hi = b + 1 == n_bins ? xmax : xmin + width * (b + 1);
        auto& ys = per_bin[size_t(b)];
        s.count = int64_t(ys.size());
        if (ys.empty()) continue;
        std::sort(ys.begin(), ys.end());
        s.median = quantile_sorted(ys, 0.5);
        s.q25 = quantile_sorted(ys, 0.25);
        s.q75 = quantile_sorted(ys, 0.75);
    }
    return out;
}

std::vector<double> lowess(const std::vector<double>& x, const std::vector<double>& y,
                           double frac, int iterations) {
    const size_t n = x.size();
    if (y.size() != n) throw ValidationError("lowess: x and y lengths differ");
    if (n < 3) throw ValidationError("lowess: need at least 3 points");
    if (!(frac > 0.0 && frac <= 1.0)) throw ValidationError("lowess: frac must lie in (0,1]");
    if (iterations < 0) throw ValidationError("lowess: iterations must be non-negative");
    for (size_t i = 0; i < n; ++i)
        if (!std::isfinite(x[i]) || !std::isfinite(y[i]))
            throw ValidationError("lowess: inputs must be finite");
    const size_t r = size_t(std::ceil(frac * double(n)));
    if (r < 2) throw ValidationError("lowess: frac too small, window needs 2 points");

    std::vector<size_t> order(n);
    for (size_t i = 0; i < n; ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(),
                     [&](size_t i, size_t j) { return x[i] < x[j]; });
    std::vector<double> xs(n), ys(n);
    for (size_t i = 0; i < n; ++i) {
        xs[i] = x[order[i]];
        ys[i] = y[order[i]];
    }

    std::vector<double> fit(n, 0.0), robust(n, 1.0);
    for (int pass = 0; pass <= iterations; ++pass) {
        for (size_t i = 0; i < n; ++i) {
            // Slide the window of the r nearest x-neighbors.
            size_t lo = i >= r ? i - r + 1 : 0;
            size_t hi = std::min(lo + r, n); // [lo, hi)
            while (hi < n && xs[hi] - xs[i] < xs[i] - xs[lo]) {
                ++lo;
                ++hi;
            }
            const double h = std::max(xs[i] - xs[lo], xs[hi - 1] - xs[i]);
            // Local linear fit in u = x - x_i; the fitted value is the
            // intercept at u = 0.
            double sw = 0, su = 0, sy = 0, suu = 0, suy = 0;
            for (size_t j = lo; j < hi; ++j) {
                double w = robust[j];
                const double u = xs[j] - xs[i];
                if (h > 0.0) {
                    const double d = std::abs(u) / h;
                    if (d >= 1.0) {
                        w = 0.0;
                    } else {
                        const double t = 1.0 - d * d * d;
                        w *= t * t * t; // tricube
                    }
                }
                sw += w;
                su += w * u;
                sy += w * ys[j];
                suu += w * u * u;
                suy += w * u * ys[j];
            }
            if (sw <= 0.0) { // all weights robust-zeroed: fall back to the window mean
                double s = 0.0;
                for (size_t j = lo; j < hi; ++j) s += ys[j];
                fit[i] = s / double(hi - lo);
                continue;
            }
            const double denom = sw * suu - su * su;
            if (denom <= 1e-12 * sw * suu || suu <= 0.0) {
                fit[i] = sy / sw;
            } else {
                const double b = (sw * suy - su * sy) / denom;
                fit[i] = (sy - b * su) / sw;
            }
        }
        if (pass == iterations) break;
        std::vector<double> abs_res(n);
        for (size_t i = 0; i < n; ++i) abs_res[i] = std::abs(ys[i] - fit[i]);
        const double s = median(abs_res);
        if (s <= 0.0) break; // perfect fit: nothing left to damp
        for (size_t i = 0; i < n; ++i) {
            const double u = (ys[i] - fit[i]) / (6.0 * s);
            const double uu = u * u;
            robust[i] = uu >= 1.0 ? 0.0 : (1.0 - uu) * (1.0 - uu); // bisquare
        }
    }

    std::vector<double> out(n);
    for (size_t i = 0; i < n; ++i) out[order[i]] = fit[i];
    return out;
}

} // namespace heatlens
