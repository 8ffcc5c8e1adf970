#include "heatlens/spatial_stats.hpp"

#include <algorithm>
#include <cmath>

#include "heatlens/error.hpp"
#include "heatlens/parallel.hpp"
#include "heatlens/rng.hpp"

namespace heatlens {

namespace {

struct Centered {
    std::vector<double> z;
    double m2 = 0.0; // population variance
};

Centered center(const std::vector<double>& x, const SpatialWeights& w) {
    w.validate();
    if (x.size() != w.n)
        throw ValidationError("moran: value count does not match weights");
    if (w.n < 3) throw ValidationError("moran: need at least 3 zones");
    if (!(w.s0 > 0.0)) throw ValidationError("moran: weights carry no links");
    double mean = 0.0;
    for (double v : x) {
        if (!std::isfinite(v)) throw ValidationError("moran: non-finite value");
        mean += v;
    }
    mean /= double(x.size());
    Centered c;
    c.z.resize(x.size());
    for (size_t i = 0; i < x.size(); ++i) {
        c.z[i] = x[i] - mean;
        c.m2 += c.z[i] * c.z[i];
    }
    c.m2 /= double(x.size());
    if (!(c.m2 > 0.0)) throw ValidationError("moran: zero variance");
    return c;
}

double moran_stat(const std::vector<double>& z, const SpatialWeights& w, double m2) {
    double num = 0.0;
    for (size_t i = 0; i < w.n; ++i) num += z[i] * w.lag(z, i);
    return num / (w.s0 * m2);
}

} // namespace

MoranResult global_moran(const std::vector<double>& x, const SpatialWeights& w,
                         int permutations, uint64_t seed, int threads) {
    if (permutations < 0) throw ValidationError("moran: negative permutation count");
    const Centered c = center(x, w);

    MoranResult out;
    out.moran_i = moran_stat(c.z, w, c.m2);
    out.expected_i = -1.0 / (double(w.n) - 1.0);
    if (permutations == 0) return out;

    std::vector<double> perm_i(static_cast<size_t>(permutations));
    parallel_for(size_t(permutations), 16, [&](size_t b, size_t e) {
        std::vector<double> zp;
        for (size_t k = b; k < e; ++k) {
            Rng rng = Rng(seed).substream(k);
            zp = c.z;
            rng.shuffle(zp);
            perm_i[k] = moran_stat(zp, w, c.m2);
        }
    }, threads);

    size_t hits = 0;
    const double ref = std::abs(out.moran_i);
    for (double v : perm_i)
        if (std::abs(v) >= ref) ++hits;
    out.p_value = double(hits + 1) / double(permutations + 1);
    return out;
}

const char* lisa_category_name(LisaCategory c) {
    switch (c) {
        case LisaCategory::HighHigh: return "HH";
        case LisaCategory::LowLow: return "LL";
        case LisaCategory::HighLow: return "HL";
        case LisaCategory::LowHigh: return "LH";
        case LisaCategory::NotSignificant: return "not_significant";
    }
    return "not_significant";
}

std::vector<LisaRow> lisa(const std::vector<double>& x, const SpatialWeights& w,
                          int permutations, uint64_t seed, double alpha,
                          int threads) {
    if (permutations < 0) throw ValidationError("lisa: negative permutation count");
    if (!(alpha >= 0.0 && alpha <= 1.0))
        throw ValidationError("lisa: alpha must lie in [0, 1]");
    const Centered c = center(x, w);
    const size_t n = w.n;

    std::vector<LisaRow> out(n);
    parallel_for(n, 4, [&](size_t b, size_t e) {
        std::vector<double> others(n - 1);
        for (size_t i = b; i < e; ++i) {
            const double lag_obs = w.lag(c.z, i);
            LisaRow& row = out[i];
            row.local_i = c.z[i] * lag_obs / c.m2;

            if (permutations > 0) {
                const size_t deg = w.rows[i].size();
                size_t m = 0;
                for (size_t j = 0; j < n; ++j)
                    if (j != i) others[m++] = c.z[j];
                Rng rng = Rng(seed).substream(i);
                size_t hits = 0;
                const double ref = std::abs(row.local_i);
                for (int k = 0; k < permutations; ++k) {
                    double lag_p = 0.0;
                    for (size_t t = 0; t < deg; ++t) {
                        const size_t pick = t + size_t(rng.below(n - 1 - t));
                        std::swap(others[t], others[pick]);
                        lag_p += w.rows[i][t].second * others[t];
                    }
                    if (std::abs(c.z[i] * lag_p / c.m2) >= ref) ++hits;
                }
                row.p_value = double(hits + 1) / double(permutations + 1);
            }

            const bool significant = permutations > 0 && row.p_value <= alpha;
            if (significant && c.z[i] != 0.0 && lag_obs != 0.0) {
                if (c.z[i] > 0.0)
                    row.category = lag_obs > 0.0 ? LisaCategory::HighHigh
                                                 : LisaCategory::HighLow;
                else
                    row.category = lag_obs > 0.0 ? LisaCategory::LowHigh
                                                 : LisaCategory::LowLow;
            } else {
                row.category = LisaCategory::NotSignificant;
            }
        }
    }, threads);
    return out;
}

} // namespace heatlens
