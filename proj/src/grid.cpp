#include "heatlens/grid.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "heatlens/parallel.hpp"

namespace heatlens {

using nlohmann::json;

static_assert(std::endian::native == std::endian::little,
              "raw_f32 bodies are little-endian; big-endian hosts are unsupported");

Grid Grid::filled(int w, int h, double ox, double oy, double cs, float v, float nd) {
    if (w <= 0 || h <= 0) throw ValidationError("grid: dimensions must be positive");
    if (!(cs > 0.0)) throw ValidationError("grid: cell size must be positive");
    Grid g;
    g.width = w;
    g.height = h;
    g.origin_x = ox;
    g.origin_y = oy;
    g.cell_size = cs;
    g.nodata = nd;
    g.values.assign(size_t(w) * h, v);
    return g;
}

bool Grid::same_geometry(const Grid& o, double tol) const {
    return width == o.width && height == o.height &&
           std::fabs(origin_x - o.origin_x) <= tol &&
           std::fabs(origin_y - o.origin_y) <= tol &&
           std::fabs(cell_size - o.cell_size) <= tol;
}

void Grid::require_same_geometry(const Grid& o, const std::string& what) const {
    if (!same_geometry(o))
        throw ValidationError("grid geometry mismatch: " + what);
}

float Grid::sample_bilinear(double x, double y) const {
    double gx = (x - origin_x) / cell_size - 0.5;
    double gy = (y - origin_y) / cell_size - 0.5;
    gx = std::clamp(gx, 0.0, double(width - 1));
    gy = std::clamp(gy, 0.0, double(height - 1));
    int i0 = int(gx), j0 = int(gy);
    int i1 = std::min(i0 + 1, width - 1);
    int j1 = std::min(j0 + 1, height - 1);
    double fx = gx - i0, fy = gy - j0;
    float v00 = at(i0, j0), v10 = at(i1, j0), v01 = at(i0, j1), v11 = at(i1, j1);
    if (is_nodata(v00) || is_nodata(v10) || is_nodata(v01) || is_nodata(v11))
        return nodata;
    double top = double(v01) * (1.0 - fx) + double(v11) * fx;
    double bot = double(v00) * (1.0 - fx) + double(v10) * fx;
    return float(bot * (1.0 - fy) + top * fy);
}

namespace {

void validate_finite(const Grid& g, const std::string& path) {
    for (float v : g.values) {
        if (v == g.nodata) continue;
        if (!std::isfinite(v))
            throw ValidationError("non-finite value in grid: " + path);
    }
}

std::string lower(std::string s) {
    for (char& c : s) c = char(std::tolower(static_cast<unsigned char>(c)));
    return s;
}

bool ends_with(const std::string& s, const std::string& suf) {
    return s.size() >= suf.size() && s.compare(s.size() - suf.size(), suf.size(), suf) == 0;
}

Grid read_esri_ascii(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open grid: " + path);
    Grid g;
    int ncols = -1, nrows = -1;
    double xll = 0, yll = 0, cs = 0;
    float nodata = -9999.0f;
    bool have_nodata = false;
    // Header: key/value lines until the first purely numeric token.
    for (;;) {
        std::streampos mark = in.tellg();
        std::string key;
        if (!(in >> key)) throw ValidationError("truncated grid header: " + path);
        std::string k = lower(key);
        if (k == "ncols") { if (!(in >> ncols)) throw ValidationError("bad ncols: " + path); }
        else if (k == "nrows") { if (!(in >> nrows)) throw ValidationError("bad nrows: " + path); }
        else if (k == "xllcorner") { if (!(in >> xll)) throw ValidationError("bad xllcorner: " + path); }
        else if (k == "yllcorner") { if (!(in >> yll)) throw ValidationError("bad yllcorner: " + path); }
        else if (k == "cellsize") { if (!(in >> cs)) throw ValidationError("bad cellsize: " + path); }
        else if (k == "nodata_value") {
            if (!(in >> nodata)) throw ValidationError("bad nodata_value: " + path);
            have_nodata = true;
        } else {
            in.seekg(mark);
            break;
        }
    }
    (void)have_nodata;
    if (ncols <= 0 || nrows <= 0) throw ValidationError("grid dimensions must be positive: " + path);
    if (!(cs > 0.0)) throw ValidationError("cellsize must be positive: " + path);
    g = Grid::filled(ncols, nrows, xll, yll, cs, nodata, nodata);
    // Body rows run north to south; row 0 in memory is the south row.
    for (int r = nrows - 1; r >= 0; --r) {
        for (int c = 0; c < ncols; ++c) {
            std::string tok;
            if (!(in >> tok)) throw ValidationError("truncated grid body: " + path);
            char* end = nullptr;
            float v = std::strtof(tok.c_str(), &end);
            if (end == tok.c_str() || *end != '\0')
                throw ValidationError("bad grid value '" + tok + "' in " + path);
            g.at(c, r) = v;
        }
    }
    validate_finite(g, path);
    return g;
}

void write_esri_ascii(const Grid& g, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ValidationError("cannot write grid: " + path);
    char buf[64];
    auto fmt_d = [&](double v) {
        std::snprintf(buf, sizeof buf, "%.17g", v);
        return std::string(buf);
    };
    out << "ncols " << g.width << "\n"
        << "nrows " << g.height << "\n"
        << "xllcorner " << fmt_d(g.origin_x) << "\n"
        << "yllcorner " << fmt_d(g.origin_y) << "\n"
        << "cellsize " << fmt_d(g.cell_size) << "\n"
        << "NODATA_value " << [&]{ std::snprintf(buf, sizeof buf, "%.9g", double(g.nodata)); return std::string(buf); }() << "\n";
    for (int r = g.height - 1; r >= 0; --r) {
        for (int c = 0; c < g.width; ++c) {
            std::snprintf(buf, sizeof buf, "%.9g", double(g.at(c, r)));
            out << buf << (c + 1 == g.width ? "" : " ");
        }
        out << "\n";
    }
    if (!out) throw ValidationError("write failed: " + path);
}

Grid read_raw_f32(const std::string& path) {
    std::ifstream meta(path + ".json");
    if (!meta) throw ValidationError("missing sidecar: " + path + ".json");
    json j;
    try {
        meta >> j;
    } catch (const std::exception& e) {
        throw ValidationError("bad sidecar " + path + ".json: " + e.what());
    }
    for (const char* k : {"width", "height", "origin_x", "origin_y", "cell_size", "nodata"})
        if (!j.contains(k)) throw ValidationError(std::string("sidecar missing field '") + k + "': " + path);
    Grid g = Grid::filled(j["width"].get<int>(), j["height"].get<int>(),
                          j["origin_x"].get<double>(), j["origin_y"].get<double>(),
                          j["cell_size"].get<double>(), 0.0f,
                          j["nodata"].get<float>());
    std::ifstream body(path, std::ios::binary);
    if (!body) throw ValidationError("cannot open grid: " + path);
    body.read(reinterpret_cast<char*>(g.values.data()),
              std::streamsize(g.values.size() * sizeof(float)));
    if (size_t(body.gcount()) != g.values.size() * sizeof(float))
        throw ValidationError("raw body size mismatch: " + path);
    char extra;
    if (body.read(&extra, 1))
        throw ValidationError("raw body size mismatch: " + path);
    validate_finite(g, path);
    return g;
}

void write_raw_f32(const Grid& g, const std::string& path) {
    {
        std::ofstream body(path, std::ios::binary);
        if (!body) throw ValidationError("cannot write grid: " + path);
        body.write(reinterpret_cast<const char*>(g.values.data()),
                   std::streamsize(g.values.size() * sizeof(float)));
        if (!body) throw ValidationError("write failed: " + path);
    }
    json j;
    j["format"] = "raw_f32";
    j["width"] = g.width;
    j["height"] = g.height;
    j["origin_x"] = g.origin_x;
    j["origin_y"] = g.origin_y;
    j["cell_size"] = g.cell_size;
    j["nodata"] = g.nodata;
    j["row_order"] = "south_to_north";
    std::ofstream meta(path + ".json");
    if (!meta) throw ValidationError("cannot write sidecar: " + path + ".json");
    meta << j.dump(2) << "\n";
}

} // namespace

Grid read_grid(const std::string& path) {
    std::string p = lower(path);
    if (ends_with(p, ".asc")) return read_esri_ascii(path);
    if (ends_with(p, ".f32")) return read_raw_f32(path);
    throw ValidationError("unknown grid format (want .asc or .f32): " + path);
}

void write_grid(const Grid& g, const std::string& path) {
    if (g.width <= 0 || g.height <= 0 || g.values.size() != size_t(g.width) * g.height)
        throw ValidationError("grid: inconsistent dimensions");
    std::string p = lower(path);
    if (ends_with(p, ".asc")) { write_esri_ascii(g, path); return; }
    if (ends_with(p, ".f32")) { write_raw_f32(g, path); return; }
    throw ValidationError("unknown grid format (want .asc or .f32): " + path);
}

const Zone* ZoneSet::find(int64_t id) const {
    for (const Zone& z : zones)
        if (z.id == id) return &z;
    return nullptr;
}

namespace {

std::vector<std::pair<double, double>> parse_ring(const json& ring, const std::string& path) {
    if (!ring.is_array() || ring.size() < 4)
        throw ValidationError("ring with fewer than 4 positions in " + path);
    std::vector<std::pair<double, double>> out;
    out.reserve(ring.size());
    for (const auto& pt : ring) {
        if (!pt.is_array() || pt.size() < 2)
            throw ValidationError("bad coordinate in " + path);
        out.emplace_back(pt[0].get<double>(), pt[1].get<double>());
    }
    if (out.front() != out.back())
        throw ValidationError("unclosed ring in " + path);
    out.pop_back();
    if (out.size() < 3) throw ValidationError("degenerate ring in " + path);
    return out;
}

} // namespace

ZoneSet read_zones(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open zones: " + path);
    json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        throw ValidationError("bad GeoJSON " + path + ": " + e.what());
    }
    if (j.value("type", "") != "FeatureCollection")
        throw ValidationError("zones must be a FeatureCollection: " + path);
    ZoneSet zs;
    for (const auto& f : j.value("features", json::array())) {
        Zone z;
        const auto& props = f.value("properties", json::object());
        if (!props.contains("zone_id") || !props["zone_id"].is_number_integer())
            throw ValidationError("feature without integer zone_id in " + path);
        z.id = props["zone_id"].get<int64_t>();
        if (z.id <= 0) throw ValidationError("zone_id must be positive in " + path);
        const auto& geom = f.value("geometry", json::object());
        std::string gtype = geom.value("type", "");
        const auto& coords = geom.value("coordinates", json::array());
        if (gtype == "Polygon") {
            for (const auto& ring : coords) z.rings.push_back(parse_ring(ring, path));
        } else if (gtype == "MultiPolygon") {
            for (const auto& poly : coords)
                for (const auto& ring : poly) z.rings.push_back(parse_ring(ring, path));
        } else {
            throw ValidationError("unsupported geometry '" + gtype + "' in " + path);
        }
        if (z.rings.empty()) throw ValidationError("zone without rings in " + path);
        zs.zones.push_back(std::move(z));
    }
    if (zs.zones.empty()) throw ValidationError("no zones in " + path);
    std::sort(zs.zones.begin(), zs.zones.end(),
              [](const Zone& a, const Zone& b) { return a.id < b.id; });
    for (size_t i = 1; i < zs.zones.size(); ++i)
        if (zs.zones[i].id == zs.zones[i - 1].id)
            throw ValidationError("duplicate zone_id " + std::to_string(zs.zones[i].id) + " in " + path);
    return zs;
}

void write_zones(const ZoneSet& zs, const std::string& path) {
    json features = json::array();
    for (const Zone& z : zs.zones) {
        json rings = json::array();
        for (const auto& ring : z.rings) {
            json r = json::array();
            for (const auto& [x, y] : ring) r.push_back({x, y});
            r.push_back({ring.front().first, ring.front().second});
            rings.push_back(std::move(r));
        }
        features.push_back({{"type", "Feature"},
                            {"properties", {{"zone_id", z.id}}},
                            {"geometry", {{"type", "Polygon"}, {"coordinates", rings}}}});
    }
    json j = {{"type", "FeatureCollection"}, {"features", features}};
    std::ofstream out(path);
    if (!out) throw ValidationError("cannot write zones: " + path);
    out << j.dump(2) << "\n";
}

bool zone_contains(const Zone& z, double x, double y) {
    bool inside = false;
    for (const auto& ring : z.rings) {
        size_t n = ring.size();
        for (size_t i = 0, j = n - 1; i < n; j = i++) {
            double yi = ring[i].second, yj = ring[j].second;
            if ((yi > y) != (yj > y)) {
                double xint = (ring[j].first - ring[i].first) * (y - yi) / (yj - yi) +
                              ring[i].first;
                if (x < xint) inside = !inside;
            }
        }
    }
    return inside;
}

std::pair<double, double> zone_centroid(const Zone& z) {
    // Signed shoelace accumulation; holes and outers cancel appropriately
    // as long as ring orientations are consistent. Degenerate total area
    // falls back to the vertex mean.
    double a = 0.0, cx = 0.0, cy = 0.0;
    for (const auto& ring : z.rings) {
        size_t n = ring.size();
        for (size_t i = 0, j = n - 1; i < n; j = i++) {
            double cross = ring[j].first * ring[i].second - ring[i].first * ring[j].second;
            a += cross;
            cx += (ring[j].first + ring[i].first) * cross;
            cy += (ring[j].second + ring[i].second) * cross;
        }
    }
    if (std::fabs(a) < 1e-12) {
        double sx = 0, sy = 0;
        size_t n = 0;
        for (const auto& ring : z.rings)
            for (const auto& [x, y] : ring) { sx += x; sy += y; ++n; }
        return {sx / double(n), sy / double(n)};
    }
    return {cx / (3.0 * a), cy / (3.0 * a)};
}

Grid rasterize_zones(const ZoneSet& zs, const Grid& geom) {
    if (zs.zones.empty()) throw ValidationError("rasterize: empty zone set");
    Grid out = Grid::filled(geom.width, geom.height, geom.origin_x, geom.origin_y,
                            geom.cell_size, geom.nodata, geom.nodata);
    struct Box { double x0, y0, x1, y1; };
    std::vector<Box> boxes;
    boxes.reserve(zs.zones.size());
    for (const Zone& z : zs.zones) {
        Box b{1e300, 1e300, -1e300, -1e300};
        for (const auto& ring : z.rings)
            for (const auto& [x, y] : ring) {
                b.x0 = std::min(b.x0, x);
                b.y0 = std::min(b.y0, y);
                b.x1 = std::max(b.x1, x);
                b.y1 = std::max(b.y1, y);
            }
        boxes.push_back(b);
    }
    parallel_for(size_t(geom.height), 8, [&](size_t rb, size_t re) {
        for (size_t r = rb; r < re; ++r) {
            double y = geom.cell_y(int(r));
            for (int c = 0; c < geom.width; ++c) {
                double x = geom.cell_x(c);
                for (size_t zi = 0; zi < zs.zones.size(); ++zi) {
                    const Box& b = boxes[zi];
                    if (x < b.x0 || x > b.x1 || y < b.y0 || y > b.y1) continue;
                    if (zone_contains(zs.zones[zi], x, y)) {
                        out.at(c, int(r)) = float(zs.zones[zi].id);
                        break;
                    }
                }
            }
        }
    });
    return out;
}

namespace {

constexpr double DT_INF = 1e30;

// 1D squared-distance transform over a sampled function (Felzenszwalb &
// Huttenlocher lower-envelope-of-parabolas scan).
void dt1d(const std::vector<double>& f, std::vector<double>& d,
          std::vector<int>& v, std::vector<double>& zbuf) {
    int n = int(f.size());
    int k = 0;
    v[0] = 0;
    zbuf[0] = -DT_INF;
    zbuf[1] = DT_INF;
    for (int q = 1; q < n; ++q) {
        double s;
        for (;;) {
            int p = v[k];
            s = ((f[q] + double(q) * q) - (f[p] + double(p) * p)) / (2.0 * q - 2.0 * p);
            if (s <= zbuf[k] && k > 0) { --k; } else break;
        }
        ++k;
        v[k] = q;
        zbuf[k] = s;
        zbuf[k + 1] = DT_INF;
    }
    k = 0;
    for (int q = 0; q < n; ++q) {
        while (zbuf[k + 1] < q) ++k;
        int p = v[k];
        d[q] = double(q - p) * (q - p) + f[p];
    }
}

} // namespace

Grid distance_to_mask(const Grid& mask) {
    size_t set_cells = 0;
    for (float m : mask.values)
        if (!mask.is_nodata(m) && m != 0.0f) ++set_cells;
    if (set_cells == 0) throw ValidationError("distance: mask has no set cells");

    int w = mask.width, h = mask.height;
    std::vector<double> sq(size_t(w) * h);
    // Column pass: squared distance to nearest set cell within each column.
    parallel_for(size_t(w), 16, [&](size_t cb, size_t ce) {
        std::vector<double> f(h), d(h), zbuf(size_t(h) + 1);
        std::vector<int> v(h);
        for (size_t c = cb; c < ce; ++c) {
            for (int r = 0; r < h; ++r) {
                float m = mask.at(int(c), r);
                f[r] = (!mask.is_nodata(m) && m != 0.0f) ? 0.0 : DT_INF;
            }
            dt1d(f, d, v, zbuf);
            for (int r = 0; r < h; ++r) sq[size_t(r) * w + c] = d[r];
        }
    });
    // Row pass over the column results.
    Grid out = Grid::filled(w, h, mask.origin_x, mask.origin_y, mask.cell_size, 0.0f);
    parallel_for(size_t(h), 16, [&](size_t rb, size_t re) {
        std::vector<double> f(w), d(w), zbuf(size_t(w) + 1);
        std::vector<int> v(w);
        for (size_t r = rb; r < re; ++r) {
            for (int c = 0; c < w; ++c) f[c] = sq[r * w + c];
            dt1d(f, d, v, zbuf);
            for (int c = 0; c < w; ++c)
                out.at(c, int(r)) = float(std::sqrt(d[c]) * mask.cell_size);
        }
    });
    return out;
}

Grid resample_bilinear(const Grid& src, const Grid& geom) {
    Grid out = Grid::filled(geom.width, geom.height, geom.origin_x, geom.origin_y,
                            geom.cell_size, src.nodata, src.nodata);
    parallel_for(size_t(geom.height), 16, [&](size_t rb, size_t re) {
        for (size_t r = rb; r < re; ++r) {
            double y = geom.cell_y(int(r));
            for (int c = 0; c < geom.width; ++c)
                out.at(c, int(r)) = src.sample_bilinear(geom.cell_x(c), y);
        }
    });
    return out;
}

} // namespace heatlens
