#include "heatlens/indices.hpp"

#include <filesystem>
#include <fstream>

#include <json.hpp>

namespace heatlens {

namespace {

const char* const SIX_BANDS[6] = {"rho_blue", "rho_green", "rho_red",
                                  "rho_nir", "rho_swir1", "rho_swir2"};

} // namespace

const Grid& BandStack::get(const std::string& name) const {
    for (const auto& [n, g] : bands)
        if (n == name) return g;
    throw ValidationError("missing band: " + name);
}

bool BandStack::has(const std::string& name) const {
    for (const auto& [n, g] : bands)
        if (n == name) return true;
    return false;
}

void BandStack::add(const std::string& name, Grid g) {
    if (has(name)) throw ValidationError("duplicate band: " + name);
    bands.emplace_back(name, std::move(g));
}

void BandStack::validate() const {
    if (bands.empty()) throw ValidationError("empty band stack");
    const Grid& first = bands.front().second;
    for (const auto& [name, g] : bands) {
        first.require_same_geometry(g, "band " + name);
        for (float v : g.values) {
            if (g.is_nodata(v)) continue;
            if (v < 0.0f || v > 1.0f)
                throw ValidationError("band " + name + ": reflectance outside [0,1]");
        }
    }
}

BandStack read_bands(const std::string& manifest_path) {
    std::ifstream in(manifest_path);
    if (!in) throw ValidationError("cannot open band manifest: " + manifest_path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        throw ValidationError("bad band manifest " + manifest_path + ": " + e.what());
    }
    if (!j.contains("bands") || !j["bands"].is_object())
        throw ValidationError("band manifest missing 'bands' object: " + manifest_path);
    std::filesystem::path base = std::filesystem::path(manifest_path).parent_path();
    BandStack s;
    for (const auto& [name, rel] : j["bands"].items()) {
        std::filesystem::path p(rel.get<std::string>());
        if (p.is_relative()) p = base / p;
        s.add(name, read_grid(p.string()));
    }
    s.validate();
    return s;
}

Grid normalized_difference(const Grid& a, const Grid& b) {
    a.require_same_geometry(b, "normalized difference");
    Grid out = Grid::filled(a.width, a.height, a.origin_x, a.origin_y,
                            a.cell_size, a.nodata, a.nodata);
    for (size_t i = 0; i < out.values.size(); ++i) {
        float av = a.values[i], bv = b.values[i];
        if (a.is_nodata(av) || b.is_nodata(bv)) continue;
        double den = double(av) + double(bv);
        if (den == 0.0) continue;
        out.values[i] = float((double(av) - double(bv)) / den);
    }
    return out;
}

Grid compute_ndvi(const BandStack& s) {
    return normalized_difference(s.get("rho_nir"), s.get("rho_red"));
}

Grid compute_ndbi(const BandStack& s) {
    return normalized_difference(s.get("rho_swir1"), s.get("rho_nir"));
}

namespace {

Grid weighted_sum(const BandStack& s, const double w[6], double offset) {
    const Grid* g[6];
    for (int b = 0; b < 6; ++b) g[b] = &s.get(SIX_BANDS[b]);
    const Grid& first = *g[0];
    Grid out = Grid::filled(first.width, first.height, first.origin_x,
                            first.origin_y, first.cell_size, first.nodata,
                            first.nodata);
    for (size_t i = 0; i < out.values.size(); ++i) {
        double acc = offset;
        bool ok = true;
        for (int b = 0; b < 6; ++b) {
            float v = g[b]->values[i];
            if (g[b]->is_nodata(v)) { ok = false; break; }
            acc += w[b] * double(v);
        }
        if (ok) out.values[i] = float(acc);
    }
    return out;
}

} // namespace

Grid compute_albedo(const BandStack& s) {
    static const double W[6] = {0.2453, 0.0508, 0.1804, 0.3081, 0.1332, 0.0521};
    return weighted_sum(s, W, 0.0011);
}

Grid compute_wetness(const BandStack& s) {
    static const double W[6] = {0.1511, 0.1972, 0.3283, 0.3407, -0.7117, -0.4559};
    return weighted_sum(s, W, 0.0);
}

} // namespace heatlens
