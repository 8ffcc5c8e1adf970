#include "heatlens/shap.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <unordered_map>

#include "heatlens/error.hpp"
#include "heatlens/parallel.hpp"

namespace heatlens {

namespace {

// One entry of the unique-feature path: the share of subsets that send the
// row down this branch when the feature is excluded (zero_fraction) or
// included (one_fraction), and the running permutation-weight coefficient.
struct PathElement {
    int feature = -1;
    double zero_fraction = 0.0;
    double one_fraction = 0.0;
    double weight = 0.0;
};

void extend_path(PathElement* path, int depth, double zero, double one, int feature) {
    path[depth] = {feature, zero, one, depth == 0 ? 1.0 : 0.0};
    for (int i = depth - 1; i >= 0; --i) {
        path[i + 1].weight += one * path[i].weight * double(i + 1) / double(depth + 1);
        path[i].weight = zero * path[i].weight * double(depth - i) / double(depth + 1);
    }
}

void unwind_path(PathElement* path, int depth, int index) {
    const double one = path[index].one_fraction;
    const double zero = path[index].zero_fraction;
    double next = path[depth].weight;
    for (int i = depth - 1; i >= 0; --i) {
        if (one != 0.0) {
            const double kept = path[i].weight;
            path[i].weight = next * double(depth + 1) / (double(i + 1) * one);
            next = kept - path[i].weight * zero * double(depth - i) / double(depth + 1);
        } else {
            path[i].weight = path[i].weight * double(depth + 1) / (zero * double(depth - i));
        }
    }
    for (int i = index; i < depth; ++i) {
        path[i].feature = path[i + 1].feature;
        path[i].zero_fraction = path[i + 1].zero_fraction;
        path[i].one_fraction = path[i + 1].one_fraction;
    }
}

// Sum of the path weights with element `index` unwound, without mutating.
double unwound_sum(const PathElement* path, int depth, int index) {
    const double one = path[index].one_fraction;
    const double zero = path[index].zero_fraction;
    double total = 0.0;
    if (one != 0.0) {
        double next = path[depth].weight;
        for (int i = depth - 1; i >= 0; --i) {
            const double part = next / (double(i + 1) * one);
            total += part;
            next = path[i].weight - part * zero * double(depth - i);
        }
    } else {
        for (int i = depth - 1; i >= 0; --i)
            total += path[i].weight / (zero * double(depth - i));
    }
    return total * double(depth + 1);
}

// Walks every root-to-leaf path once, keeping one entry per unique feature
// split on so far. Each new level copies the parent path forward in the
// arena, so siblings never see each other's edits.
void shap_recurse(const Tree& tree, const double* x, double* phi, int node_index,
                  int depth, PathElement* parent_path, double parent_zero,
                  double parent_one, int parent_feature) {
    PathElement* path = parent_path + depth + 1;
    std::copy(parent_path, parent_path + depth + 1, path);
    extend_path(path, depth, parent_zero, parent_one, parent_feature);

    const TreeNode& node = tree.nodes[size_t(node_index)];
    if (node.split_feature < 0) {
        for (int i = 1; i <= depth; ++i) {
            const PathElement& el = path[i];
            phi[el.feature] +=
                unwound_sum(path, depth, i) * (el.one_fraction - el.zero_fraction) * node.leaf_value;
        }
        return;
    }

    const int hot = x[node.split_feature] < node.threshold ? node.left : node.right;
    const int cold = hot == node.left ? node.right : node.left;
    const double hot_zero = tree.nodes[size_t(hot)].cover / node.cover;
    const double cold_zero = tree.nodes[size_t(cold)].cover / node.cover;

    // A repeated split on one feature folds into a single path entry.
    double in_zero = 1.0, in_one = 1.0;
    int k = 0;
    while (k <= depth && path[k].feature != node.split_feature) ++k;
    if (k <= depth) {
        in_zero = path[k].zero_fraction;
        in_one = path[k].one_fraction;
        unwind_path(path, depth, k);
        --depth;
    }

    shap_recurse(tree, x, phi, hot, depth + 1, path, hot_zero * in_zero, in_one,
                 node.split_feature);
    shap_recurse(tree, x, phi, cold, depth + 1, path, cold_zero * in_zero, 0.0,
                 node.split_feature);
}

// Validates covers on the way down; returns the deepest node level.
int inspect_tree(const Tree& t, int node, int level) {
    const TreeNode& n = t.nodes[size_t(node)];
    if (!(n.cover > 0.0))
        throw ValidationError(
            "tree_shap: model carries no cover statistics, refit before explaining");
    if (n.split_feature < 0) return level;
    return std::max(inspect_tree(t, n.left, level + 1), inspect_tree(t, n.right, level + 1));
}

double cover_mean(const Tree& t, int node) {
    const TreeNode& n = t.nodes[size_t(node)];
    if (n.split_feature < 0) return n.leaf_value;
    return (t.nodes[size_t(n.left)].cover * cover_mean(t, n.left) +
            t.nodes[size_t(n.right)].cover * cover_mean(t, n.right)) /
           n.cover;
}

} // namespace

ShapMatrix tree_shap(const BoostedModel& m, const Matrix& x, int threads) {
    const size_t p = m.feature_names.size();
    for (const auto& row : x)
        if (row.size() != p)
            throw ValidationError("tree_shap: row width does not match the feature count");

    int max_depth = 0;
    for (const Tree& t : m.trees) max_depth = std::max(max_depth, inspect_tree(t, 0, 0));
    // Same accumulation shape as prediction: raw tree means first, the
    // learning rate and base score folded in once at the end.
    double mean_acc = 0.0;
    for (const Tree& t : m.trees) mean_acc += cover_mean(t, 0);
    const double base = m.base_score + m.learning_rate * mean_acc;

    ShapMatrix out;
    out.feature_names = m.feature_names;
    out.base_value.assign(x.size(), base);
    out.values.assign(x.size(), std::vector<double>(p, 0.0));

    const size_t arena_len = size_t(max_depth + 2) * size_t(max_depth + 3) / 2;
    parallel_for(x.size(), 4, [&](size_t b, size_t e) {
        std::vector<PathElement> arena(arena_len);
        std::vector<double> phi(p, 0.0);
        for (size_t r = b; r < e; ++r) {
            std::fill(phi.begin(), phi.end(), 0.0);
            for (const Tree& t : m.trees)
                shap_recurse(t, x[r].data(), phi.data(), 0, 0, arena.data(), 1.0, 1.0, -1);
            for (size_t f = 0; f < p; ++f) out.values[r][f] = m.learning_rate * phi[f];
        }
    }, threads);
    return out;
}

std::vector<double> brute_shapley(const BoostedModel& m, const std::vector<double>& x,
                                  const Matrix& background) {
    const size_t p = m.feature_names.size();
    if (p > 12)
        throw ValidationError("brute_shapley: more than 12 features, use tree_shap instead");
    if (x.size() != p)
        throw ValidationError("brute_shapley: row width does not match the feature count");
    if (background.empty()) throw ValidationError("brute_shapley: background is empty");
    for (const auto& row : background)
        if (row.size() != p)
            throw ValidationError("brute_shapley: background width does not match the feature count");

    const size_t subsets = size_t(1) << p;
    std::vector<double> v(subsets, 0.0);
    std::vector<double> probe(p, 0.0);
    for (size_t s = 0; s < subsets; ++s) {
        double acc = 0.0;
        for (const auto& b : background) {
            for (size_t f = 0; f < p; ++f) probe[f] = (s >> f) & 1u ? x[f] : b[f];
            acc += predict_one(m, probe);
        }
        v[s] = acc / double(background.size());
    }

    std::vector<double> fact(p + 1, 1.0);
    for (size_t i = 1; i <= p; ++i) fact[i] = fact[i - 1] * double(i);
    std::vector<double> phi(p, 0.0);
    for (size_t s = 0; s < subsets; ++s) {
        const size_t members = size_t(std::popcount(s));
        if (members == p) continue;
        const double w = fact[members] * fact[p - members - 1] / fact[p];
        for (size_t f = 0; f < p; ++f) {
            if ((s >> f) & 1u) continue;
            phi[f] += w * (v[s | (size_t(1) << f)] - v[s]);
        }
    }
    return phi;
}

std::vector<ShapSummaryRow> shap_summary(const ShapMatrix& s) {
    const size_t p = s.feature_names.size();
    std::vector<ShapSummaryRow> rows(p);
    for (size_t f = 0; f < p; ++f) rows[f].feature = s.feature_names[f];
    if (!s.values.empty()) {
        for (const auto& row : s.values)
            for (size_t f = 0; f < p; ++f) rows[f].mean_abs += std::abs(row[f]);
        for (auto& r : rows) r.mean_abs /= double(s.values.size());
    }
    std::sort(rows.begin(), rows.end(), [](const ShapSummaryRow& a, const ShapSummaryRow& b) {
        if (a.mean_abs != b.mean_abs) return a.mean_abs > b.mean_abs;
        return a.feature < b.feature;
    });
    return rows;
}

LocalImportance local_importance_maps(const LocalModelSet& set, const FeatureTable& t,
                                      const std::string& signed_feature, int threads) {
    const std::vector<std::string>& names = set.feature_names;
    size_t signed_idx = names.size();
    for (size_t f = 0; f < names.size(); ++f)
        if (names[f] == signed_feature) signed_idx = std::min(signed_idx, f);
    if (signed_idx == names.size())
        throw ValidationError("local_importance_maps: '" + signed_feature +
                              "' is not a model feature");

    std::vector<size_t> cols(names.size());
    for (size_t f = 0; f < names.size(); ++f) cols[f] = t.column_index(names[f]);
    std::unordered_map<int64_t, size_t> row_of;
    row_of.reserve(t.n());
    for (size_t r = 0; r < t.n(); ++r) row_of.emplace(t.zone_ids[r], r);

    // Descending by score; equal scores resolve to the smaller feature name.
    auto top_feature = [&](const std::vector<double>& score) {
        size_t best = 0;
        for (size_t f = 1; f < score.size(); ++f)
            if (score[f] > score[best] ||
                (score[f] == score[best] && names[f] < names[best]))
                best = f;
        return names[best];
    };

    LocalImportance out;
    out.feature_names = names;
    out.signed_feature = signed_feature;
    out.zones.assign(set.locals.size(), ZoneImportance{});

    std::vector<std::string> failures(set.locals.size());
    parallel_for(set.locals.size(), 1, [&](size_t b, size_t e) {
        for (size_t i = b; i < e; ++i) {
            const LocalModel& lm = set.locals[i];
            try {
                auto it = row_of.find(lm.zone_id);
                if (it == row_of.end())
                    throw ValidationError("local_importance_maps: zone " +
                                          std::to_string(lm.zone_id) +
                                          " has no feature row");
                std::vector<double> row(names.size(), 0.0);
                for (size_t f = 0; f < names.size(); ++f) {
                    row[f] = t.rows[it->second][cols[f]];
                    if (!std::isfinite(row[f]))
                        throw ValidationError("local_importance_maps: non-finite value for zone " +
                                              std::to_string(lm.zone_id));
                }
                const ShapMatrix sm = tree_shap(lm.model, {row}, 1);
                ZoneImportance& zi = out.zones[i];
                zi.zone_id = lm.zone_id;
                zi.mean_abs_shap.assign(names.size(), 0.0);
                for (size_t f = 0; f < names.size(); ++f)
                    zi.mean_abs_shap[f] = std::abs(sm.values[0][f]);
                zi.signed_shap = sm.values[0][signed_idx];
                zi.primary_shap_feature = top_feature(zi.mean_abs_shap);
                zi.primary_gain_feature = top_feature(gain_importance(lm.model));
            } catch (const std::exception& ex) {
                if (failures[i].empty()) failures[i] = ex.what();
            }
        }
    }, threads);
    for (const std::string& f : failures)
        if (!f.empty()) throw ValidationError(f);
    return out;
}

void write_shap_summary(const std::vector<ShapSummaryRow>& rows, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ValidationError("cannot write " + path);
    out << "feature,mean_abs_shap\n";
    char buf[64];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof buf, "%.10g", r.mean_abs);
        out << r.feature << "," << buf << "\n";
    }
}

void write_shap_dependence(const std::string& feature, const std::vector<double>& x,
                           const std::vector<double>& phi, const std::string& color_feature,
                           const std::vector<double>& color, const std::string& path) {
    if (x.size() != phi.size() || x.size() != color.size())
        throw ValidationError("write_shap_dependence: column lengths differ");
    std::ofstream out(path);
    if (!out) throw ValidationError("cannot write " + path);
    out << feature << ",phi_" << feature << "," << color_feature << "\n";
    char a[64], b[64], c[64];
    for (size_t i = 0; i < x.size(); ++i) {
        std::snprintf(a, sizeof a, "%.10g", x[i]);
        std::snprintf(b, sizeof b, "%.10g", phi[i]);
        std::snprintf(c, sizeof c, "%.10g", color[i]);
        out << a << "," << b << "," << c << "\n";
    }
}

void write_local_primary(const LocalImportance& li, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ValidationError("cannot write " + path);
    out << "zone_id,primary_gain_feature,primary_shap_feature";
    for (const auto& name : li.feature_names) out << ",mean_abs_" << name;
    out << ",shap_" << li.signed_feature << "\n";
    char buf[64];
    for (const auto& z : li.zones) {
        out << z.zone_id << "," << z.primary_gain_feature << "," << z.primary_shap_feature;
        for (double v : z.mean_abs_shap) {
            std::snprintf(buf, sizeof buf, "%.10g", v);
            out << "," << buf;
        }
        std::snprintf(buf, sizeof buf, "%.10g", z.signed_shap);
        out << "," << buf << "\n";
    }
}

} // namespace heatlens
