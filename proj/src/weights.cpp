#include "heatlens/weights.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <set>

#include "heatlens/error.hpp"

namespace heatlens {

WeightScheme parse_weight_scheme(const std::string& name) {
    if (name == "queen") return WeightScheme::Queen;
    if (name == "rook") return WeightScheme::Rook;
    if (name == "queen_nn_hybrid") return WeightScheme::QueenNnHybrid;
    throw ValidationError("unknown weight scheme: " + name);
}

size_t SpatialWeights::index_of(int64_t zone_id) const {
    auto it = std::lower_bound(ids.begin(), ids.end(), zone_id);
    if (it == ids.end() || *it != zone_id)
        throw ValidationError("zone id not in weights: " + std::to_string(zone_id));
    return size_t(it - ids.begin());
}

double SpatialWeights::lag(const std::vector<double>& z, size_t i) const {
    if (i >= n || z.size() != n) throw ValidationError("weights: lag index out of range");
    double s = 0.0;
    for (const auto& [j, wij] : rows[i]) s += wij * z[j];
    return s;
}

void SpatialWeights::validate() const {
    if (ids.size() != n || rows.size() != n)
        throw ValidationError("weights: inconsistent sizes");
    for (size_t i = 0; i < n; ++i) {
        double sum = 0.0;
        for (const auto& [j, wij] : rows[i]) {
            if (j == i) throw ValidationError("weights: self link");
            if (j >= n) throw ValidationError("weights: link out of range");
            if (!(wij > 0.0)) throw ValidationError("weights: non-positive link weight");
            sum += wij;
        }
        if (row_standardized && !rows[i].empty() && std::abs(sum - 1.0) > 1e-12)
            throw ValidationError("weights: standardized row does not sum to 1");
    }
}

namespace {

using Vertex = std::pair<double, double>;

// Ring vertices without the closing duplicate.
size_t open_size(const std::vector<Vertex>& ring) {
    size_t m = ring.size();
    if (m >= 2 && ring.front() == ring.back()) --m;
    return m;
}

void note_owner(std::map<std::pair<Vertex, Vertex>, std::vector<size_t>>& reg,
                const Vertex& a, const Vertex& b, size_t zone) {
    auto key = a < b ? std::make_pair(a, b) : std::make_pair(b, a);
    auto& owners = reg[key];
    if (owners.empty() || owners.back() != zone) owners.push_back(zone);
}

} // namespace

SpatialWeights build_weights(const ZoneSet& zs, WeightScheme scheme,
                             bool row_standardize) {
    const size_t n = zs.zones.size();
    if (n < 2) throw ValidationError("weights: need at least 2 zones");

    std::vector<size_t> order(n);
    for (size_t i = 0; i < n; ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
        return zs.zones[a].id < zs.zones[b].id;
    });
    for (size_t i = 1; i < n; ++i)
        if (zs.zones[order[i]].id == zs.zones[order[i - 1]].id)
            throw ValidationError("weights: duplicate zone id " +
                                  std::to_string(zs.zones[order[i]].id));

    // Shared-feature registry: key -> zones that carry it. Queen matches on
    // single vertices, rook on whole edges; both use exact coordinates, so
    // adjacent zones must be digitized with identical boundary vertices.
    std::map<std::pair<Vertex, Vertex>, std::vector<size_t>> reg;
    for (size_t s = 0; s < n; ++s) {
        const Zone& z = zs.zones[order[s]];
        if (z.rings.empty()) throw ValidationError("weights: zone without rings");
        for (const auto& ring : z.rings) {
            const size_t m = open_size(ring);
            if (m < 3) throw ValidationError("weights: degenerate ring");
            for (size_t k = 0; k < m; ++k) {
                if (scheme == WeightScheme::Rook)
                    note_owner(reg, ring[k], ring[(k + 1) % m], s);
                else
                    note_owner(reg, ring[k], ring[k], s);
            }
        }
    }

    std::vector<std::set<size_t>> adj(n);
    size_t links = 0;
    for (const auto& [key, owners] : reg) {
        for (size_t a = 0; a < owners.size(); ++a)
            for (size_t b = a + 1; b < owners.size(); ++b) {
                if (owners[a] == owners[b]) continue;
                if (adj[owners[a]].insert(owners[b]).second) ++links;
                adj[owners[b]].insert(owners[a]);
            }
    }

    if (scheme == WeightScheme::QueenNnHybrid) {
        std::vector<Vertex> cen(n);
        for (size_t s = 0; s < n; ++s) cen[s] = zone_centroid(zs.zones[order[s]]);
        for (size_t s = 0; s < n; ++s) {
            if (!adj[s].empty()) continue;
            size_t best = n;
            double best_d2 = std::numeric_limits<double>::infinity();
            for (size_t t = 0; t < n; ++t) {
                if (t == s) continue;
                const double dx = cen[t].first - cen[s].first;
                const double dy = cen[t].second - cen[s].second;
                const double d2 = dx * dx + dy * dy;
                if (d2 < best_d2) {
                    best_d2 = d2;
                    best = t;
                }
            }
            adj[s].insert(best);
            adj[best].insert(s);
            ++links;
        }
    } else if (links == 0) {
        throw ValidationError("disconnected weights: zones share no boundary features");
    }

    SpatialWeights w;
    w.n = n;
    w.row_standardized = row_standardize;
    w.ids.resize(n);
    w.rows.resize(n);
    for (size_t s = 0; s < n; ++s) {
        w.ids[s] = zs.zones[order[s]].id;
        for (size_t t : adj[s]) w.rows[s].push_back({t, 1.0});
        if (row_standardize && !w.rows[s].empty()) {
            const double inv = 1.0 / double(w.rows[s].size());
            for (auto& link : w.rows[s]) link.second = inv;
        }
        for (const auto& link : w.rows[s]) w.s0 += link.second;
    }
    w.validate();
    return w;
}

} // namespace heatlens
