#include "heatlens/gwboost.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>

#include "heatlens/error.hpp"
#include "heatlens/parallel.hpp"
#include "heatlens/rng.hpp"

namespace heatlens {

namespace {

struct GwData {
    std::vector<int64_t> ids;
    std::vector<double> cx, cy, y;
    Matrix x;
    std::vector<std::string> names;
};

GwData extract(const FeatureTable& t, const std::string& y_col,
               const std::vector<std::string>& x_cols, const char* op) {
    t.validate();
    if (x_cols.empty())
        throw ValidationError(std::string(op) + ": no feature columns given");
    const size_t yc = t.column_index(y_col);
    std::vector<size_t> xc;
    for (const auto& name : x_cols) xc.push_back(t.column_index(name));

    GwData d;
    d.ids = t.zone_ids;
    d.cx = t.cx;
    d.cy = t.cy;
    d.names = x_cols;
    const size_t n = t.rows.size();
    d.y.resize(n);
    d.x.assign(n, std::vector<double>(x_cols.size()));
    for (size_t i = 0; i < n; ++i) {
        const double yv = t.rows[i][yc];
        if (FeatureTable::is_missing(yv) || !std::isfinite(yv))
            throw ValidationError(std::string(op) + ": missing response for zone " +
                                  std::to_string(t.zone_ids[i]));
        d.y[i] = yv;
        for (size_t k = 0; k < xc.size(); ++k) {
            const double v = t.rows[i][xc[k]];
            if (FeatureTable::is_missing(v) || !std::isfinite(v))
                throw ValidationError(std::string(op) + ": missing feature " + x_cols[k] +
                                      " for zone " + std::to_string(t.zone_ids[i]));
            d.x[i][k] = v;
        }
    }
    return d;
}

// Neighbor order is (distance, index), so ties at the bandwidth are stable.
std::vector<size_t> by_distance(const std::vector<double>& d) {
    std::vector<size_t> order(d.size());
    for (size_t j = 0; j < d.size(); ++j) order[j] = j;
    std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
        return d[a] != d[b] ? d[a] < d[b] : a < b;
    });
    return order;
}

std::vector<double> distances_from(const GwData& d, size_t i) {
    std::vector<double> out(d.ids.size());
    for (size_t j = 0; j < out.size(); ++j)
        out[j] = std::hypot(d.cx[j] - d.cx[i], d.cy[j] - d.cy[i]);
    return out;
}

uint64_t zone_seed(uint64_t base, int64_t zone_id) {
    unsigned char buf[16];
    std::memcpy(buf, &base, 8);
    std::memcpy(buf + 8, &zone_id, 8);
    return fnv1a64(buf, sizeof buf);
}

FoldMetrics pooled_metrics(const std::vector<double>& y_true,
                           const std::vector<double>& y_pred) {
    FoldMetrics m;
    const size_t n = y_true.size();
    double mean = 0.0;
    for (double v : y_true) mean += v;
    mean /= double(n);
    double rss = 0.0, tss = 0.0, abs_sum = 0.0;
    for (size_t i = 0; i < n; ++i) {
        const double e = y_pred[i] - y_true[i];
        rss += e * e;
        abs_sum += std::abs(e);
        tss += (y_true[i] - mean) * (y_true[i] - mean);
    }
    m.rmse = std::sqrt(rss / double(n));
    m.mae = abs_sum / double(n);
    m.r2 = tss > 0.0 ? 1.0 - rss / tss : std::numeric_limits<double>::quiet_NaN();
    return m;
}

} // namespace

size_t LocalModelSet::index_of(int64_t zone_id) const {
    for (size_t i = 0; i < locals.size(); ++i)
        if (locals[i].zone_id == zone_id) return i;
    throw ValidationError("local model set: unknown zone id " + std::to_string(zone_id));
}

LocalModelSet gw_fit(const FeatureTable& t, const std::string& y_col,
                     const std::vector<std::string>& x_cols, const KernelSpec& kernel,
                     const FitConfig& config, bool uniform_weights, int threads) {
    GwData d = extract(t, y_col, x_cols, "gw_fit");
    const size_t n = d.ids.size();
    config.validate();
    if (n < 2) throw ValidationError("gw_fit: need at least 2 zones");
    if (!uniform_weights) {
        if (kernel.mode != KernelSpec::Mode::Adaptive)
            throw ValidationError("gw_fit: kernel must be adaptive (k nearest zones)");
        if (kernel.k < 10)
            throw ValidationError("gw_fit: k must be at least 10");
        if (size_t(kernel.k) > n)
            throw ValidationError("gw_fit: k exceeds the number of zones");
    }

    LocalModelSet set;
    set.feature_names = d.names;
    set.kernel = kernel;
    set.config = config;
    set.uniform_weights = uniform_weights;
    set.targets = d.y;
    set.locals.assign(n, LocalModel{});

    std::vector<std::string> failures(n);
    parallel_for(n, 1, [&](size_t begin, size_t end) {
        for (size_t i = begin; i < end; ++i) {
            LocalModel& lm = set.locals[i];
            lm.zone_id = d.ids[i];
            lm.weights.assign(n, 0.0);
            FitConfig cfg = config;
            std::vector<double> w_sub;
            if (uniform_weights) {
                lm.bandwidth = std::numeric_limits<double>::infinity();
                lm.neighbors.resize(n);
                for (size_t j = 0; j < n; ++j) lm.neighbors[j] = j;
                lm.weights.assign(n, 1.0);
                w_sub.assign(n, 1.0);
            } else {
                const std::vector<double> dist = distances_from(d, i);
                const std::vector<size_t> order = by_distance(dist);
                lm.bandwidth = dist[order[size_t(kernel.k) - 1]];
                if (!(lm.bandwidth > 0.0)) {
                    failures[i] = "gw_fit: all kernel weights are zero at zone " +
                                  std::to_string(d.ids[i]) +
                                  " (the k nearest zones are coincident), increase k";
                    continue;
                }
                lm.neighbors.assign(order.begin(), order.begin() + kernel.k);
                std::sort(lm.neighbors.begin(), lm.neighbors.end());
                w_sub.resize(lm.neighbors.size());
                for (size_t j = 0; j < lm.neighbors.size(); ++j) {
                    w_sub[j] = bisquare_weight(dist[lm.neighbors[j]], lm.bandwidth);
                    lm.weights[lm.neighbors[j]] = w_sub[j];
                }
                cfg.seed = zone_seed(config.seed, d.ids[i]);
            }

            Matrix x_sub;
            std::vector<double> y_sub;
            for (size_t j : lm.neighbors) {
                x_sub.push_back(d.x[j]);
                y_sub.push_back(d.y[j]);
            }
            try {
                FitResult fr = fit_boosted(x_sub, y_sub, w_sub, d.names, cfg, 1);
                lm.model = std::move(fr.model);
                lm.oob = std::move(fr.oob);
                lm.prediction = predict_one(lm.model, d.x[i]);
                double wsum = 0.0, wmean = 0.0;
                for (size_t j = 0; j < y_sub.size(); ++j) {
                    wsum += w_sub[j];
                    wmean += w_sub[j] * y_sub[j];
                }
                wmean /= wsum;
                double rss = 0.0, tss = 0.0;
                for (size_t j = 0; j < y_sub.size(); ++j) {
                    const double e = y_sub[j] - fr.fitted[j];
                    rss += w_sub[j] * e * e;
                    tss += w_sub[j] * (y_sub[j] - wmean) * (y_sub[j] - wmean);
                }
                lm.local_r2 = tss > 0.0 ? 1.0 - rss / tss
                                        : std::numeric_limits<double>::quiet_NaN();
            } catch (const ValidationError& e) {
                failures[i] = "gw_fit at zone " + std::to_string(d.ids[i]) + ": " +
                              e.what();
            }
        }
    }, threads);
    for (const auto& f : failures)
        if (!f.empty()) throw ValidationError(f);

    double mean_r = 0.0;
    for (size_t i = 0; i < n; ++i) {
        set.locals[i].residual = d.y[i] - set.locals[i].prediction;
        mean_r += set.locals[i].residual;
    }
    mean_r /= double(n);
    double var = 0.0;
    for (const auto& lm : set.locals)
        var += (lm.residual - mean_r) * (lm.residual - mean_r);
    const double sd = std::sqrt(var / double(n));
    for (auto& lm : set.locals)
        lm.std_residual = sd > 0.0 ? lm.residual / sd
                                   : std::numeric_limits<double>::quiet_NaN();
    return set;
}

LooResult loo_bandwidth(const FeatureTable& t, const std::string& y_col,
                        const std::vector<std::string>& x_cols,
                        const std::vector<int>& candidates, const FitConfig& config,
                        int threads) {
    GwData d = extract(t, y_col, x_cols, "loo_bandwidth");
    const size_t n = d.ids.size();
    config.validate();
    if (candidates.empty()) throw ValidationError("loo_bandwidth: no candidates given");
    for (int k : candidates)
        if (k < 10) throw ValidationError("loo_bandwidth: k must be at least 10");
    if (n < 12) throw ValidationError("loo_bandwidth: need at least 12 zones");

    // Distance-sorted other rows, computed once and shared by all candidates.
    std::vector<std::vector<size_t>> order(n);
    std::vector<std::vector<double>> dist(n);
    parallel_for(n, 8, [&](size_t begin, size_t end) {
        for (size_t i = begin; i < end; ++i) {
            dist[i] = distances_from(d, i);
            order[i] = by_distance(dist[i]);
            order[i].erase(std::find(order[i].begin(), order[i].end(), i));
        }
    }, threads);

    LooResult out;
    out.candidates = candidates;
    out.rmse.assign(candidates.size(), std::numeric_limits<double>::quiet_NaN());
    bool any = false;
    for (size_t c = 0; c < candidates.size(); ++c) {
        const size_t k = size_t(candidates[c]);
        if (k >= n) {
            std::fprintf(stderr,
                         "loo_bandwidth: skipping k=%d, needs k < n = %zu zones\n",
                         candidates[c], n);
            continue;
        }
        std::vector<double> pred(n);
        std::vector<std::string> failures(n);
        parallel_for(n, 1, [&](size_t begin, size_t end) {
            for (size_t i = begin; i < end; ++i) {
                const double b = dist[i][order[i][k - 1]];
                if (!(b > 0.0)) {
                    failures[i] = "loo_bandwidth: all kernel weights are zero at zone " +
                                  std::to_string(d.ids[i]) + " with k=" +
                                  std::to_string(k) + " (coincident zones)";
                    continue;
                }
                Matrix x_sub;
                std::vector<double> y_sub, w_sub;
                for (size_t j = 0; j < k; ++j) {
                    const size_t r = order[i][j];
                    x_sub.push_back(d.x[r]);
                    y_sub.push_back(d.y[r]);
                    w_sub.push_back(bisquare_weight(dist[i][r], b));
                }
                FitConfig cfg = config;
                cfg.seed = zone_seed(config.seed, d.ids[i]);
                try {
                    FitResult fr = fit_boosted(x_sub, y_sub, w_sub, d.names, cfg, 1);
                    pred[i] = predict_one(fr.model, d.x[i]);
                } catch (const ValidationError& e) {
                    failures[i] = "loo_bandwidth at zone " + std::to_string(d.ids[i]) +
                                  ": " + e.what();
                }
            }
        }, threads);
        for (const auto& f : failures)
            if (!f.empty()) throw ValidationError(f);
        double rss = 0.0;
        for (size_t i = 0; i < n; ++i)
            rss += (pred[i] - d.y[i]) * (pred[i] - d.y[i]);
        out.rmse[c] = std::sqrt(rss / double(n));
        any = true;
    }
    if (!any)
        throw ValidationError("loo_bandwidth: every candidate was skipped (k >= n)");

    size_t best = candidates.size();
    for (size_t c = 0; c < candidates.size(); ++c) {
        if (std::isnan(out.rmse[c])) continue;
        if (best == candidates.size() || out.rmse[c] < out.rmse[best] ||
            (out.rmse[c] == out.rmse[best] && candidates[c] < candidates[best]))
            best = c;
    }
    out.best_index = best;
    out.best_k = candidates[best];
    return out;
}

FoldMetrics global_oob(const LocalModelSet& set) {
    std::vector<double> y_true, y_pred;
    for (const auto& lm : set.locals) {
        if (lm.oob.iterations.empty())
            throw ValidationError("global_oob: no OOB instances for zone " +
                                  std::to_string(lm.zone_id) +
                                  ", fit with subsample < 1");
        for (size_t j = 0; j < lm.oob.rows.size(); ++j) {
            y_true.push_back(set.targets[lm.neighbors[lm.oob.rows[j]]]);
            y_pred.push_back(lm.oob.predictions[j]);
        }
    }
    if (y_true.empty())
        throw ValidationError("global_oob: no OOB instances, fit with subsample < 1");
    return pooled_metrics(y_true, y_pred);
}

MoranResult residual_moran(const LocalModelSet& set, const SpatialWeights& w,
                           int permutations, uint64_t seed, int threads) {
    std::vector<double> r(w.n);
    for (size_t i = 0; i < w.n; ++i)
        r[i] = set.locals[set.index_of(w.ids[i])].std_residual;
    return global_moran(r, w, permutations, seed, threads);
}

void write_local_diagnostics(const LocalModelSet& set, const std::string& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(fs::path(dir) / "models");

    std::ofstream r2(fs::path(dir) / "local_r2.csv");
    std::ofstream sr(fs::path(dir) / "std_residuals.csv");
    if (!r2 || !sr)
        throw ValidationError("cannot write diagnostics under " + dir);
    r2 << "zone_id,local_r2\n";
    sr << "zone_id,std_residual\n";
    char buf[64];
    for (const auto& lm : set.locals) {
        std::snprintf(buf, sizeof buf, "%.10g", lm.local_r2);
        r2 << lm.zone_id << "," << buf << "\n";
        std::snprintf(buf, sizeof buf, "%.10g", lm.std_residual);
        sr << lm.zone_id << "," << buf << "\n";
        save_model(lm.model, (fs::path(dir) / "models" /
                              ("zone_" + std::to_string(lm.zone_id) + ".json"))
                                 .string());
    }
}

void write_bandwidth_trace(const LooResult& r, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw ValidationError("cannot write " + path);
    f << "k,rmse\n";
    char buf[64];
    for (size_t c = 0; c < r.candidates.size(); ++c) {
        if (std::isnan(r.rmse[c])) {
            f << r.candidates[c] << ",\n";
        } else {
            std::snprintf(buf, sizeof buf, "%.10g", r.rmse[c]);
            f << r.candidates[c] << "," << buf << "\n";
        }
    }
}

} // namespace heatlens
