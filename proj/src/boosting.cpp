#include "heatlens/boosting.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <map>

#include <json.hpp>

#include "heatlens/error.hpp"
#include "heatlens/parallel.hpp"
#include "heatlens/rng.hpp"

namespace heatlens {

void FitConfig::validate() const {
    if (n_estimators < 1) throw ValidationError("fit: n_estimators must be at least 1");
    if (!(learning_rate > 0.0 && learning_rate <= 1.0))
        throw ValidationError("fit: learning_rate must lie in (0, 1]");
    if (max_depth < 1) throw ValidationError("fit: max_depth must be at least 1");
    if (!(subsample > 0.0 && subsample <= 1.0))
        throw ValidationError("fit: subsample must lie in (0, 1]");
    if (!(lambda >= 0.0)) throw ValidationError("fit: lambda must be non-negative");
    if (!(gamma >= 0.0)) throw ValidationError("fit: gamma must be non-negative");
    if (!(min_child_weight >= 0.0))
        throw ValidationError("fit: min_child_weight must be non-negative");
}

namespace {

struct SplitCand {
    bool valid = false;
    double gain = 0.0;
    double threshold = 0.0;
};

// Splits that induce the same row partition through different features have
// mathematically equal gains, but summation order perturbs them by a few ulps.
// Treating near-equal gains as ties keeps the choice (lower feature index,
// lower threshold) stable under reorderings such as duplicate-row vs weight-2.
bool beats(double gain, double incumbent) {
    return gain * (1.0 - 1e-10) > incumbent;
}

struct TreeBuilder {
    const Matrix& x;
    const std::vector<double>& grad;
    const std::vector<double>& w;
    const FitConfig& cfg;
    int threads;
    Tree tree;

    double leaf_value(double g, double h) const { return -g / (h + cfg.lambda); }

    int build(std::vector<size_t> rows, int depth) {
        double g = 0.0, h = 0.0;
        for (size_t r : rows) {
            g += w[r] * grad[r];
            h += w[r];
        }
        const int me = int(tree.nodes.size());
        tree.nodes.push_back(TreeNode{});
        tree.nodes[size_t(me)].cover = h;
        tree.nodes[size_t(me)].leaf_value = leaf_value(g, h);
        if (depth >= cfg.max_depth || rows.size() < 2) return me;

        const size_t p = x[rows[0]].size();
        std::vector<SplitCand> cand(p);
        const double parent_score = g * g / (h + cfg.lambda);
        parallel_for(p, 1, [&](size_t fb, size_t fe) {
            std::vector<std::pair<double, size_t>> vals;
            for (size_t f = fb; f < fe; ++f) {
                vals.clear();
                for (size_t r : rows) vals.push_back({x[r][f], r});
                std::sort(vals.begin(), vals.end());
                double gl = 0.0, hl = 0.0;
                SplitCand best;
                for (size_t k = 0; k + 1 < vals.size(); ++k) {
                    gl += w[vals[k].second] * grad[vals[k].second];
                    hl += w[vals[k].second];
                    if (vals[k + 1].first <= vals[k].first) continue;
                    const double gr = g - gl, hr = h - hl;
                    if (hl < cfg.min_child_weight || hr < cfg.min_child_weight) continue;
                    const double gain =
                        0.5 * (gl * gl / (hl + cfg.lambda) + gr * gr / (hr + cfg.lambda) -
                               parent_score) -
                        cfg.gamma;
                    if (beats(gain, best.gain)) {
                        best.valid = true;
                        best.gain = gain;
                        best.threshold = 0.5 * (vals[k].first + vals[k + 1].first);
                    }
                }
                cand[f] = best;
            }
        }, threads);

        size_t best_f = p;
        double best_gain = 0.0;
        for (size_t f = 0; f < p; ++f)
            if (cand[f].valid && beats(cand[f].gain, best_gain)) {
                best_gain = cand[f].gain;
                best_f = f;
            }
        if (best_f == p) return me;

        std::vector<size_t> left, right;
        for (size_t r : rows)
            (x[r][best_f] < cand[best_f].threshold ? left : right).push_back(r);
        rows.clear();
        rows.shrink_to_fit();

        tree.nodes[size_t(me)].split_feature = int(best_f);
        tree.nodes[size_t(me)].threshold = cand[best_f].threshold;
        tree.nodes[size_t(me)].split_gain = best_gain;
        tree.nodes[size_t(me)].leaf_value = 0.0;
        const int l = build(std::move(left), depth + 1);
        const int r = build(std::move(right), depth + 1);
        tree.nodes[size_t(me)].left = l;
        tree.nodes[size_t(me)].right = r;
        return me;
    }
};

double route(const Tree& tree, const double* x) {
    int node = 0;
    while (tree.nodes[size_t(node)].split_feature >= 0) {
        const TreeNode& nd = tree.nodes[size_t(node)];
        node = x[size_t(nd.split_feature)] < nd.threshold ? nd.left : nd.right;
    }
    return tree.nodes[size_t(node)].leaf_value;
}

void validate_matrix(const Matrix& x, const std::vector<double>& y, size_t p) {
    if (x.size() != y.size()) throw ValidationError("fit: row count mismatch");
    for (size_t i = 0; i < x.size(); ++i) {
        if (x[i].size() != p)
            throw ValidationError("fit: row " + std::to_string(i) +
                                  " has the wrong feature count");
        for (double v : x[i])
            if (!std::isfinite(v))
                throw ValidationError("fit: non-finite feature value in row " +
                                      std::to_string(i));
        if (!std::isfinite(y[i]))
            throw ValidationError("fit: non-finite target in row " + std::to_string(i));
    }
}

} // namespace

FitResult fit_boosted(const Matrix& x, const std::vector<double>& y,
                      const std::vector<double>& sample_weights,
                      const std::vector<std::string>& feature_names,
                      const FitConfig& config, int threads) {
    config.validate();
    const size_t n = x.size();
    if (n < 2) throw ValidationError("fit: need at least 2 rows");
    validate_matrix(x, y, feature_names.size());

    std::vector<double> w = sample_weights;
    if (w.empty()) w.assign(n, 1.0);
    if (w.size() != n) throw ValidationError("fit: sample_weights length mismatch");
    double wsum = 0.0;
    for (double v : w) {
        if (!(v >= 0.0) || !std::isfinite(v))
            throw ValidationError("fit: sample weights must be finite and non-negative");
        wsum += v;
    }
    if (!(wsum > 0.0)) throw ValidationError("fit: sample weights sum to zero");

    FitResult out;
    out.model.feature_names = feature_names;
    out.model.learning_rate = config.learning_rate;
    out.model.config = config;

    double base = 0.0;
    for (size_t i = 0; i < n; ++i) base += w[i] * y[i];
    base /= wsum;
    out.model.base_score = base;

    std::vector<size_t> pool;
    for (size_t i = 0; i < n; ++i)
        if (w[i] > 0.0) pool.push_back(i);

    std::vector<double> yhat(n, base), grad(n, 0.0);
    const bool record_oob = config.subsample < 1.0;
    std::vector<size_t> sampled;

    // Per-row sum of leaf values from trees that held the row out. Scaling by
    // pool/(pool - m) undoes the expected shortfall of skipped iterations.
    std::vector<double> oob_sum(n, 0.0);
    std::vector<int> oob_hits(n, 0);
    double oob_scale = 1.0;

    for (int t = 0; t < config.n_estimators; ++t) {
        if (record_oob) {
            const size_t m = std::max<size_t>(
                1, size_t(config.subsample * double(pool.size())));
            oob_scale = m < pool.size()
                            ? double(pool.size()) / double(pool.size() - m)
                            : 1.0;
            Rng rng = Rng(config.seed).substream(uint64_t(t));
            auto picks = rng.sample_without_replacement(pool.size(), m);
            std::sort(picks.begin(), picks.end());
            sampled.clear();
            for (size_t pi : picks) sampled.push_back(pool[pi]);
        } else {
            sampled = pool;
        }

        for (size_t r : sampled) grad[r] = yhat[r] - y[r];

        TreeBuilder builder{x, grad, w, config, threads, Tree{}};
        builder.build(sampled, 0);
        out.model.trees.push_back(std::move(builder.tree));
        const Tree& tree = out.model.trees.back();

        for (size_t i = 0; i < n; ++i)
            yhat[i] += config.learning_rate * route(tree, x[i].data());

        double loss = 0.0;
        for (size_t i = 0; i < n; ++i)
            loss += w[i] * (yhat[i] - y[i]) * (yhat[i] - y[i]);
        out.train_loss.push_back(loss);

        if (record_oob) {
            OobIteration it;
            size_t si = 0;
            for (size_t pi = 0; pi < pool.size(); ++pi) {
                const size_t r = pool[pi];
                if (si < sampled.size() && sampled[si] == r) {
                    ++si;
                    continue;
                }
                oob_sum[r] += route(tree, x[r].data());
                ++oob_hits[r];
                it.held_out.push_back(r);
                it.predictions.push_back(base + config.learning_rate * oob_scale *
                                                    oob_sum[r]);
            }
            if (it.held_out.empty()) {
                it.rmse = std::numeric_limits<double>::quiet_NaN();
            } else {
                double se = 0.0;
                for (size_t k = 0; k < it.held_out.size(); ++k) {
                    const double e = it.predictions[k] - y[it.held_out[k]];
                    se += e * e;
                }
                it.rmse = std::sqrt(se / double(it.held_out.size()));
            }
            out.oob.iterations.push_back(std::move(it));
        }
    }
    if (record_oob) {
        for (size_t r : pool)
            if (oob_hits[r] > 0) {
                out.oob.rows.push_back(r);
                out.oob.predictions.push_back(base + config.learning_rate * oob_scale *
                                                         oob_sum[r]);
            }
    }
    out.fitted = yhat;
    return out;
}

double predict_one(const BoostedModel& m, const std::vector<double>& x) {
    if (x.size() != m.feature_names.size())
        throw ValidationError("predict: feature count mismatch");
    double acc = 0.0;
    for (const Tree& t : m.trees) acc += route(t, x.data());
    return m.base_score + m.learning_rate * acc;
}

std::vector<double> predict(const BoostedModel& m, const Matrix& x, int threads) {
    const size_t p = m.feature_names.size();
    for (size_t i = 0; i < x.size(); ++i) {
        if (x[i].size() != p)
            throw ValidationError("predict: row " + std::to_string(i) +
                                  " has the wrong feature count");
        for (double v : x[i])
            if (!std::isfinite(v))
                throw ValidationError("predict: non-finite feature value in row " +
                                      std::to_string(i));
    }
    std::vector<double> out(x.size());
    parallel_for(x.size(), 256, [&](size_t b, size_t e) {
        for (size_t i = b; i < e; ++i) {
            double acc = 0.0;
            for (const Tree& t : m.trees) acc += route(t, x[i].data());
            out[i] = m.base_score + m.learning_rate * acc;
        }
    }, threads);
    return out;
}

std::vector<double> predict_table(const BoostedModel& m, const FeatureTable& t,
                                  int threads) {
    std::vector<size_t> cols;
    std::string missing;
    for (const auto& name : m.feature_names) {
        const int c = t.find_column(name);
        if (c < 0) {
            if (!missing.empty()) missing += ", ";
            missing += name;
        } else {
            cols.push_back(size_t(c));
        }
    }
    if (!missing.empty())
        throw ValidationError("predict: missing features: " + missing);
    Matrix x(t.n(), std::vector<double>(cols.size()));
    for (size_t i = 0; i < t.n(); ++i)
        for (size_t k = 0; k < cols.size(); ++k) x[i][k] = t.rows[i][cols[k]];
    return predict(m, x, threads);
}

std::vector<double> gain_importance(const BoostedModel& m) {
    std::vector<double> imp(m.feature_names.size(), 0.0);
    for (const Tree& t : m.trees)
        for (const TreeNode& nd : t.nodes)
            if (nd.split_feature >= 0) imp[size_t(nd.split_feature)] += nd.split_gain;
    return imp;
}

double oob_r2(const OobRecord& oob, const std::vector<double>& y) {
    if (oob.rows.empty()) return std::numeric_limits<double>::quiet_NaN();
    double mean = 0.0;
    for (size_t r : oob.rows) mean += y[r];
    mean /= double(oob.rows.size());
    double rss = 0.0, tss = 0.0;
    for (size_t k = 0; k < oob.rows.size(); ++k) {
        const double yv = y[oob.rows[k]];
        rss += (yv - oob.predictions[k]) * (yv - oob.predictions[k]);
        tss += (yv - mean) * (yv - mean);
    }
    if (!(tss > 0.0)) return std::numeric_limits<double>::quiet_NaN();
    return 1.0 - rss / tss;
}

namespace {

std::string d2s(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

double s2d(const nlohmann::json& j, const char* what) {
    if (!j.is_string()) throw ValidationError(std::string("model: ") + what +
                                              " must be a decimal string");
    const std::string& s = j.get_ref<const std::string&>();
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (end == s.c_str() || *end != '\0')
        throw ValidationError(std::string("model: unparseable number for ") + what);
    return v;
}

} // namespace

void save_model(const BoostedModel& m, const std::string& path) {
    nlohmann::json j;
    j["format"] = "heatlens-boosted-model";
    j["version"] = 1;
    j["base_score"] = d2s(m.base_score);
    j["learning_rate"] = d2s(m.learning_rate);
    j["feature_names"] = m.feature_names;
    j["config"] = {{"n_estimators", m.config.n_estimators},
                   {"learning_rate", d2s(m.config.learning_rate)},
                   {"max_depth", m.config.max_depth},
                   {"subsample", d2s(m.config.subsample)},
                   {"lambda", d2s(m.config.lambda)},
                   {"gamma", d2s(m.config.gamma)},
                   {"min_child_weight", d2s(m.config.min_child_weight)},
                   {"seed", m.config.seed}};
    nlohmann::json trees = nlohmann::json::array();
    for (const Tree& t : m.trees) {
        nlohmann::json nodes = nlohmann::json::array();
        for (const TreeNode& nd : t.nodes)
            nodes.push_back({nd.split_feature, d2s(nd.threshold), nd.left, nd.right,
                             d2s(nd.leaf_value), d2s(nd.split_gain), d2s(nd.cover)});
        trees.push_back({{"nodes", nodes}});
    }
    j["trees"] = std::move(trees);

    std::ofstream f(path);
    if (!f) throw ValidationError("cannot open for writing: " + path);
    f << j.dump(1) << '\n';
    if (!f) throw ValidationError("write failed: " + path);
}

BoostedModel load_model(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ValidationError("cannot open: " + path);
    nlohmann::json j;
    try {
        f >> j;
    } catch (const std::exception& e) {
        throw ValidationError("model: invalid JSON in " + path + ": " + e.what());
    }
    if (j.value("format", "") != "heatlens-boosted-model" || j.value("version", 0) != 1)
        throw ValidationError("model: unrecognized format in " + path);

    BoostedModel m;
    m.base_score = s2d(j.at("base_score"), "base_score");
    m.learning_rate = s2d(j.at("learning_rate"), "learning_rate");
    m.feature_names = j.at("feature_names").get<std::vector<std::string>>();
    const auto& c = j.at("config");
    m.config.n_estimators = c.at("n_estimators").get<int>();
    m.config.learning_rate = s2d(c.at("learning_rate"), "config.learning_rate");
    m.config.max_depth = c.at("max_depth").get<int>();
    m.config.subsample = s2d(c.at("subsample"), "config.subsample");
    m.config.lambda = s2d(c.at("lambda"), "config.lambda");
    m.config.gamma = s2d(c.at("gamma"), "config.gamma");
    m.config.min_child_weight = s2d(c.at("min_child_weight"), "config.min_child_weight");
    m.config.seed = c.at("seed").get<uint64_t>();

    for (const auto& jt : j.at("trees")) {
        Tree t;
        for (const auto& jn : jt.at("nodes")) {
            if (!jn.is_array() || jn.size() != 7)
                throw ValidationError("model: malformed node record");
            TreeNode nd;
            nd.split_feature = jn[0].get<int>();
            nd.threshold = s2d(jn[1], "threshold");
            nd.left = jn[2].get<int>();
            nd.right = jn[3].get<int>();
            nd.leaf_value = s2d(jn[4], "leaf_value");
            nd.split_gain = s2d(jn[5], "split_gain");
            nd.cover = s2d(jn[6], "cover");
            t.nodes.push_back(nd);
        }
        const int sz = int(t.nodes.size());
        for (const TreeNode& nd : t.nodes) {
            const bool leaf = nd.split_feature < 0;
            if (leaf && (nd.left >= 0 || nd.right >= 0))
                throw ValidationError("model: leaf with children");
            if (!leaf && (nd.left < 0 || nd.left >= sz || nd.right < 0 || nd.right >= sz))
                throw ValidationError("model: child reference out of range");
            if (!leaf && nd.split_feature >= int(m.feature_names.size()))
                throw ValidationError("model: split feature out of range");
        }
        m.trees.push_back(std::move(t));
    }
    return m;
}

namespace {

std::vector<std::vector<size_t>> make_folds(const std::vector<size_t>& idx, int folds) {
    std::vector<std::vector<size_t>> out(static_cast<size_t>(folds));
    const size_t n = idx.size();
    size_t at = 0;
    for (int f = 0; f < folds; ++f) {
        size_t len = n / size_t(folds) + (size_t(f) < n % size_t(folds) ? 1 : 0);
        for (size_t k = 0; k < len; ++k) out[size_t(f)].push_back(idx[at++]);
    }
    return out;
}

FoldMetrics score(const std::vector<double>& y_true, const std::vector<double>& y_pred) {
    FoldMetrics m;
    const size_t n = y_true.size();
    double mean = 0.0;
    for (double v : y_true) mean += v / double(n);
    double rss = 0.0, tss = 0.0, abs_sum = 0.0;
    for (size_t i = 0; i < n; ++i) {
        const double e = y_true[i] - y_pred[i];
        rss += e * e;
        abs_sum += std::abs(e);
        tss += (y_true[i] - mean) * (y_true[i] - mean);
    }
    m.rmse = std::sqrt(rss / double(n));
    m.mae = abs_sum / double(n);
    m.r2 = tss > 0.0 ? 1.0 - rss / tss : std::numeric_limits<double>::quiet_NaN();
    return m;
}

void gather(const Matrix& x, const std::vector<double>& y,
            const std::vector<size_t>& rows, Matrix& xs, std::vector<double>& ys) {
    xs.clear();
    ys.clear();
    for (size_t r : rows) {
        xs.push_back(x[r]);
        ys.push_back(y[r]);
    }
}

void mean_sd(const std::vector<double>& v, double& mean, double& sd) {
    const size_t n = v.size();
    mean = 0.0;
    for (double x : v) mean += x / double(n);
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    sd = n > 1 ? std::sqrt(ss / double(n - 1)) : std::numeric_limits<double>::quiet_NaN();
}

} // namespace

NestedCvResult nested_cv(const Matrix& x, const std::vector<double>& y,
                         const std::vector<std::string>& feature_names,
                         const std::vector<FitConfig>& grid, int outer_folds,
                         int inner_folds, uint64_t seed, int threads) {
    if (grid.empty()) throw ValidationError("nested cv: empty hyperparameter grid");
    if (outer_folds < 2 || inner_folds < 2)
        throw ValidationError("nested cv: need at least 2 folds at both levels");
    const size_t n = x.size();
    if (n < size_t(outer_folds) * 2)
        throw ValidationError("nested cv: need at least 2 rows per outer fold");
    validate_matrix(x, y, feature_names.size());
    for (const FitConfig& c : grid) c.validate();

    std::vector<size_t> idx(n);
    for (size_t i = 0; i < n; ++i) idx[i] = i;
    Rng outer_rng = Rng(seed).substream(0);
    outer_rng.shuffle(idx);
    const auto outer = make_folds(idx, outer_folds);

    NestedCvResult res;
    std::vector<std::vector<double>> inner_rmse(size_t(outer_folds),
                                                std::vector<double>(grid.size(), 0.0));
    const std::vector<double> no_weights;

    Matrix xtr, xte, xi_tr, xi_va;
    std::vector<double> ytr, yte, yi_tr, yi_va;
    for (int f = 0; f < outer_folds; ++f) {
        std::vector<size_t> train_rows;
        for (int g = 0; g < outer_folds; ++g)
            if (g != f)
                train_rows.insert(train_rows.end(), outer[size_t(g)].begin(),
                                  outer[size_t(g)].end());

        std::vector<size_t> shuffled = train_rows;
        Rng inner_rng = Rng(seed).substream(1 + uint64_t(f));
        inner_rng.shuffle(shuffled);
        const auto inner = make_folds(shuffled, inner_folds);

        size_t winner = 0;
        double winner_rmse = std::numeric_limits<double>::infinity();
        for (size_t c = 0; c < grid.size(); ++c) {
            double rmse_sum = 0.0;
            for (int g = 0; g < inner_folds; ++g) {
                std::vector<size_t> it;
                for (int h = 0; h < inner_folds; ++h)
                    if (h != g)
                        it.insert(it.end(), inner[size_t(h)].begin(),
                                  inner[size_t(h)].end());
                gather(x, y, it, xi_tr, yi_tr);
                gather(x, y, inner[size_t(g)], xi_va, yi_va);
                FitResult fr = fit_boosted(xi_tr, yi_tr, no_weights, feature_names,
                                           grid[c], threads);
                rmse_sum += score(yi_va, predict(fr.model, xi_va, threads)).rmse;
            }
            const double rmse = rmse_sum / double(inner_folds);
            inner_rmse[size_t(f)][c] = rmse;
            if (rmse < winner_rmse) {
                winner_rmse = rmse;
                winner = c;
            }
        }
        res.fold_winner.push_back(winner);

        gather(x, y, train_rows, xtr, ytr);
        gather(x, y, outer[size_t(f)], xte, yte);
        FitResult fr = fit_boosted(xtr, ytr, no_weights, feature_names, grid[winner],
                                   threads);
        res.outer.push_back(score(yte, predict(fr.model, xte, threads)));
    }

    // Most frequent winner; ties resolved by the lower mean inner RMSE.
    std::vector<int> wins(grid.size(), 0);
    for (size_t w : res.fold_winner) ++wins[w];
    const int top = *std::max_element(wins.begin(), wins.end());
    size_t best = grid.size();
    double best_rmse = std::numeric_limits<double>::infinity();
    for (size_t c = 0; c < grid.size(); ++c) {
        if (wins[c] != top) continue;
        double mean = 0.0;
        for (int f = 0; f < outer_folds; ++f) mean += inner_rmse[size_t(f)][c];
        mean /= double(outer_folds);
        if (mean < best_rmse) {
            best_rmse = mean;
            best = c;
        }
    }
    res.best_grid_index = best;
    res.best = grid[best];

    std::vector<double> r2s, maes, rmses;
    for (const FoldMetrics& m : res.outer) {
        r2s.push_back(m.r2);
        maes.push_back(m.mae);
        rmses.push_back(m.rmse);
    }
    mean_sd(r2s, res.r2_mean, res.r2_sd);
    mean_sd(maes, res.mae_mean, res.mae_sd);
    mean_sd(rmses, res.rmse_mean, res.rmse_sd);
    return res;
}

} // namespace heatlens
