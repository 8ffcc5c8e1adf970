#include "heatlens/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "heatlens/boosting.hpp"
#include "heatlens/error.hpp"
#include "heatlens/gam.hpp"
#include "heatlens/grid.hpp"
#include "heatlens/gwboost.hpp"
#include "heatlens/gwr.hpp"
#include "heatlens/indices.hpp"
#include "heatlens/landscape.hpp"
#include "heatlens/microclimate.hpp"
#include "heatlens/rng.hpp"
#include "heatlens/shap.hpp"
#include "heatlens/solar.hpp"
#include "heatlens/spatial_stats.hpp"
#include "heatlens/table.hpp"
#include "heatlens/tomlite.hpp"
#include "heatlens/zonal.hpp"

namespace heatlens {

const char* const kVersion = "1.0.0";

namespace fs = std::filesystem;

namespace {

std::string num(double v) {
    if (!std::isfinite(v)) return "";
    char b[40];
    snprintf(b, sizeof b, "%.10g", v);
    return b;
}

void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ValidationError("cannot write " + path);
    out << text;
}

std::string file_hash_hex(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot read " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    const std::string s = buf.str();
    char b[20];
    snprintf(b, sizeof b, "%016llx",
             static_cast<unsigned long long>(fnv1a64(s.data(), s.size())));
    return b;
}

// Every stochastic stage derives its own stream from the run seed, so no
// stage's draws depend on what another stage consumed.
uint64_t stage_seed(uint64_t seed, const std::string& label) {
    return splitmix64(seed ^ fnv1a64(label.data(), label.size()));
}

// Files written so far plus input hashes, for the manifest and for marking
// outputs .partial when a stage aborts.
struct RunLog {
    fs::path out;
    fs::path config_dir;
    std::vector<std::string> written;          // out-relative paths
    std::map<std::string, std::string> inputs; // bundle-relative -> hash

    std::string rel_input(const std::string& abs) const {
        std::error_code ec;
        const fs::path r = fs::relative(abs, config_dir, ec);
        if (ec || r.empty()) return abs;
        return r.generic_string();
    }
    void note_input(const std::string& abs) { inputs[rel_input(abs)] = file_hash_hex(abs); }
    std::string path(const std::string& rel) const { return (out / rel).string(); }
    void reg(const std::string& rel) { written.push_back(rel); }
};

}  // namespace

PipelineConfig validate_config(const std::string& path) {
    const TomlTable toml = read_toml(path);

    static const char* const kKnown[] = {
        "inputs.dsm",        "inputs.cdsm",         "inputs.landcover",
        "inputs.bands",      "inputs.lst",          "inputs.zones",
        "inputs.meteo",      "inputs.socio",        "site.latitude",
        "site.longitude",    "params.seed",         "params.utci_hour",
        "params.weights",    "params.permutations", "params.alpha",
        "svf.n_directions",  "svf.max_radius_m",    "svf.observer_height_m",
        "svf.transmissivity","svf.radial_substeps", "gw.features",
        "gw.kernel_candidates", "gw.target",        "gw.signed_feature",
        "gw.color_feature",  "gw.n_knots",          "fit.n_estimators",
        "fit.learning_rate", "fit.subsample",       "fit.depths",
        "fit.min_child_weight", "output.dir",
    };
    static const std::set<std::string> known(std::begin(kKnown), std::end(kKnown));
    for (const auto& [key, value] : toml.values) {
        if (!known.count(key)) throw ValidationError("unknown key: " + key);
    }

    PipelineConfig c;
    const fs::path abs = fs::absolute(path).lexically_normal();
    c.config_path = abs.string();
    const fs::path base = abs.parent_path();

    const auto resolve = [&](const std::string& rel) {
        fs::path p(rel);
        if (p.is_relative()) p = base / p;
        return p.lexically_normal().string();
    };
    const auto input = [&](const char* key, std::string PipelineConfig::*field) {
        const std::string full = std::string("inputs.") + key;
        const std::string p = resolve(toml.get_string(full));
        if (!fs::exists(p)) throw ValidationError(full + ": file does not exist: " + p);
        c.*field = p;
    };
    input("dsm", &PipelineConfig::dsm);
    input("cdsm", &PipelineConfig::cdsm);
    input("landcover", &PipelineConfig::landcover);
    input("bands", &PipelineConfig::bands);
    input("lst", &PipelineConfig::lst);
    input("zones", &PipelineConfig::zones);
    input("meteo", &PipelineConfig::meteo);
    input("socio", &PipelineConfig::socio);

    const auto opt_int = [&](const char* key, int64_t lo, int64_t hi, int dflt) {
        if (!toml.has(key)) return dflt;
        const int64_t v = toml.get_int(key);
        if (v < lo || v > hi) {
            throw ValidationError(std::string(key) + " must lie in [" + std::to_string(lo) +
                                  ", " + std::to_string(hi) + "]");
        }
        return int(v);
    };
    const auto opt_double = [&](const char* key, double lo, double hi, double dflt) {
        if (!toml.has(key)) return dflt;
        const double v = toml.get_double(key);
        if (!(v >= lo && v <= hi)) {
            throw ValidationError(std::string(key) + " must lie in [" + num(lo) + ", " +
                                  num(hi) + "]");
        }
        return v;
    };

    c.latitude = opt_double("site.latitude", -90.0, 90.0, c.latitude);
    c.longitude = opt_double("site.longitude", -180.0, 180.0, c.longitude);

    const int64_t seed = toml.get_int("params.seed");  // "missing key: seed" when absent
    if (seed < 0) throw ValidationError("params.seed must be non-negative");
    c.seed = uint64_t(seed);

    c.utci_hour = opt_int("params.utci_hour", 0, 23, c.utci_hour);
    if (toml.has("params.weights"))
        c.weights = parse_weight_scheme(toml.get_string("params.weights"));
    c.permutations = opt_int("params.permutations", 0, 10000000, c.permutations);
    c.alpha = opt_double("params.alpha", 1e-9, 1.0, c.alpha);
    if (c.alpha >= 1.0) throw ValidationError("params.alpha must lie in (0, 1)");

    c.svf.n_directions = opt_int("svf.n_directions", 4, 14400, c.svf.n_directions);
    c.svf.max_radius_m = opt_double("svf.max_radius_m", 1e-6, 1e9, c.svf.max_radius_m);
    c.svf.observer_height_m =
        opt_double("svf.observer_height_m", 0.0, 1e4, c.svf.observer_height_m);
    c.svf.transmissivity = opt_double("svf.transmissivity", 0.0, 1.0, c.svf.transmissivity);
    c.svf.radial_substeps = opt_int("svf.radial_substeps", 1, 16, c.svf.radial_substeps);

    if (toml.has("gw.features")) c.features = toml.get_strings("gw.features");
    if (c.features.empty()) throw ValidationError("gw.features must list at least one column");
    {
        std::set<std::string> seen;
        for (const std::string& f : c.features) {
            if (f.empty()) throw ValidationError("gw.features contains an empty name");
            if (!seen.insert(f).second)
                throw ValidationError("gw.features lists '" + f + "' twice");
        }
    }
    if (toml.has("gw.kernel_candidates")) {
        c.kernel_candidates.clear();
        for (int64_t k : toml.get_ints("gw.kernel_candidates")) {
            if (k < 2 || k > 1000000)
                throw ValidationError("gw.kernel_candidates entries must lie in [2, 1000000]");
            c.kernel_candidates.push_back(int(k));
        }
    }
    if (c.kernel_candidates.empty())
        throw ValidationError("gw.kernel_candidates must list at least one neighbour count");
    if (toml.has("gw.target")) c.target = toml.get_string("gw.target");
    if (std::count(c.features.begin(), c.features.end(), c.target))
        throw ValidationError("gw.target must not appear in gw.features");
    if (toml.has("gw.signed_feature")) c.signed_feature = toml.get_string("gw.signed_feature");
    if (!std::count(c.features.begin(), c.features.end(), c.signed_feature))
        throw ValidationError("gw.signed_feature must appear in gw.features");
    if (toml.has("gw.color_feature")) c.color_feature = toml.get_string("gw.color_feature");
    if (!std::count(c.features.begin(), c.features.end(), c.color_feature))
        throw ValidationError("gw.color_feature must appear in gw.features");
    c.n_knots = opt_int("gw.n_knots", 2, 64, c.n_knots);

    c.n_estimators = opt_int("fit.n_estimators", 1, 100000, c.n_estimators);
    c.learning_rate = opt_double("fit.learning_rate", 1e-9, 1.0, c.learning_rate);
    c.subsample = opt_double("fit.subsample", 1e-9, 1.0, c.subsample);
    if (toml.has("fit.depths")) {
        c.depths.clear();
        for (int64_t d : toml.get_ints("fit.depths")) {
            if (d < 1 || d > 32)
                throw ValidationError("fit.depths entries must lie in [1, 32]");
            c.depths.push_back(int(d));
        }
    }
    if (c.depths.empty()) throw ValidationError("fit.depths must list at least one depth");
    c.min_child_weight = opt_double("fit.min_child_weight", 0.0, 1e9, c.min_child_weight);

    c.out_dir = resolve(toml.has("output.dir") ? toml.get_string("output.dir") : c.out_dir);
    return c;
}

void run_pipeline(const PipelineConfig& cfg, int threads) {
    const fs::path out(cfg.out_dir);
    fs::create_directories(out / "grids");

    RunLog run;
    run.out = out;
    run.config_dir =
        cfg.config_path.empty() ? fs::current_path() : fs::path(cfg.config_path).parent_path();

    // State shared between stages.
    Grid dsm, cdsm, landcover, lst, zone_raster, street, albedo, utci_mean;
    BandStack bands;
    ZoneSet zs;
    std::vector<MeteoSample> meteo;
    FeatureTable t;
    SvfResult sv;
    FeatureTable m;
    Matrix x;
    std::vector<double> y;
    std::vector<double> global_residuals;
    NestedCvResult ncv;
    FitResult global;
    LocalModelSet lms;
    ShapMatrix sm;
    std::vector<std::pair<std::string, double>> metrics;

    // Zonal mean of a grid, aligned with the table's zone order.
    const auto stat_col = [&](const Grid& g, const std::vector<const Grid*>& masks) {
        const auto stats = zonal_stats(g, zone_raster, masks);
        std::vector<double> v(t.n(), FeatureTable::missing());
        for (size_t i = 0; i < t.n(); ++i) {
            const auto it = stats.find(t.zone_ids[i]);
            if (it != stats.end()) v[i] = it->second.mean;
        }
        return v;
    };

    std::string stage = "setup";
    try {
        stage = "features";
        {
            dsm = read_grid(cfg.dsm);
            run.note_input(cfg.dsm);
            cdsm = read_grid(cfg.cdsm);
            run.note_input(cfg.cdsm);
            landcover = read_grid(cfg.landcover);
            run.note_input(cfg.landcover);
            lst = read_grid(cfg.lst);
            run.note_input(cfg.lst);
            bands = read_bands(cfg.bands);
            run.note_input(cfg.bands);
            {
                std::ifstream in(cfg.bands, std::ios::binary);
                nlohmann::json j;
                in >> j;
                const fs::path bdir = fs::path(cfg.bands).parent_path();
                for (const auto& [name, rel] : j.at("bands").items()) {
                    fs::path p(rel.get<std::string>());
                    if (p.is_relative()) p = bdir / p;
                    run.note_input(p.lexically_normal().string());
                }
            }
            zs = read_zones(cfg.zones);
            run.note_input(cfg.zones);
            meteo = read_meteo_csv(cfg.meteo);
            run.note_input(cfg.meteo);
            const Csv socio = read_csv(cfg.socio);
            run.note_input(cfg.socio);

            zone_raster = rasterize_zones(zs, dsm);
            street = rooftop_mask(dsm);

            const Grid ndvi = compute_ndvi(bands);
            const Grid ndbi = compute_ndbi(bands);
            albedo = compute_albedo(bands);
            const Grid wet = compute_wetness(bands);
            write_grid(ndvi, run.path("grids/ndvi.asc"));
            run.reg("grids/ndvi.asc");
            write_grid(ndbi, run.path("grids/ndbi.asc"));
            run.reg("grids/ndbi.asc");
            write_grid(albedo, run.path("grids/albedo.asc"));
            run.reg("grids/albedo.asc");
            write_grid(wet, run.path("grids/wetness.asc"));
            run.reg("grids/wetness.asc");

            for (const Zone& z : zs.zones) {
                t.zone_ids.push_back(z.id);
                const auto [cx, cy] = zone_centroid(z);
                t.cx.push_back(cx);
                t.cy.push_back(cy);
            }
            t.rows.assign(t.zone_ids.size(), {});

            t.add_column("LST_mean", stat_col(lst, {}));
            t.add_column("NDVI_mean", stat_col(ndvi, {}));
            t.add_column("NDBI_mean", stat_col(ndbi, {}));
            t.add_column("ALB_mean", stat_col(albedo, {}));
            t.add_column("WET_mean", stat_col(wet, {}));

            const auto morph = zone_morphometrics(dsm, cdsm, zone_raster);
            std::map<int64_t, const ZoneMorphometrics*> by_id;
            for (const auto& zm : morph) by_id[zm.zone_id] = &zm;
            // Height means are undefined over zero built (or canopy) cells;
            // at zone scale that reads as height 0, keeping unbuilt zones in
            // the model table.
            const auto morph_col = [&](double ZoneMorphometrics::*field) {
                std::vector<double> v(t.n(), FeatureTable::missing());
                for (size_t i = 0; i < t.n(); ++i) {
                    const auto it = by_id.find(t.zone_ids[i]);
                    if (it == by_id.end()) continue;
                    const double raw = it->second->*field;
                    v[i] = std::isnan(raw) ? 0.0 : raw;
                }
                return v;
            };
            t.add_column("BH_mean", morph_col(&ZoneMorphometrics::bh_mean));
            t.add_column("BH_sd", morph_col(&ZoneMorphometrics::bh_sd));
            t.add_column("BD", morph_col(&ZoneMorphometrics::bd));
            t.add_column("FAR", morph_col(&ZoneMorphometrics::far));
            t.add_column("CH_mean", morph_col(&ZoneMorphometrics::ch_mean));
            t.add_column("CD", morph_col(&ZoneMorphometrics::cd));

            std::vector<double> veg(t.n(), FeatureTable::missing());
            std::vector<double> shdi(t.n(), FeatureTable::missing());
            std::vector<double> contag(t.n(), FeatureTable::missing());
            std::vector<double> pd(t.n(), FeatureTable::missing());
            for (size_t i = 0; i < t.n(); ++i) {
                try {
                    const Grid zg = mask_to_zone(landcover, zone_raster, t.zone_ids[i]);
                    const LandscapeMetrics lm = landscape_metrics(zg, 8);
                    double v = 0.0;
                    for (const auto& cls : lm.classes) {
                        if (cls.class_id == 3 || cls.class_id == 4) v += cls.pland;
                    }
                    veg[i] = v;
                    shdi[i] = lm.shdi;
                    contag[i] = lm.contag;
                    pd[i] = lm.pd;
                } catch (const ValidationError&) {
                    // zones without classified cells keep missing values
                }
            }
            t.add_column("VEG_PLAND", veg);
            t.add_column("SHDI", shdi);
            t.add_column("CONTAG", contag);
            t.add_column("PD", pd);

            const Grid wmask = class_mask(landcover, 5);
            const bool any_water =
                std::any_of(wmask.values.begin(), wmask.values.end(),
                            [&](float v) { return v == 1.0f; });
            if (any_water) t.add_column("D2W_mean", stat_col(distance_to_mask(wmask), {}));

            if (socio.header.empty() || socio.header[0] != "zone_id")
                throw ValidationError("socio csv must have zone_id as its first column");
            std::map<int64_t, size_t> socio_row;
            for (size_t r = 0; r < socio.rows.size(); ++r) {
                try {
                    socio_row[std::stoll(socio.rows[r][0])] = r;
                } catch (const std::exception&) {
                    throw ValidationError("socio csv: bad zone_id '" + socio.rows[r][0] + "'");
                }
            }
            for (size_t col = 1; col < socio.header.size(); ++col) {
                std::vector<double> v(t.n(), FeatureTable::missing());
                for (size_t i = 0; i < t.n(); ++i) {
                    const auto it = socio_row.find(t.zone_ids[i]);
                    if (it == socio_row.end()) continue;
                    const std::string& cell = socio.rows[it->second][col];
                    if (cell.empty()) continue;
                    try {
                        v[i] = std::stod(cell);
                    } catch (const std::exception&) {
                        throw ValidationError("socio csv: cannot parse '" + cell +
                                              "' in column " + socio.header[col]);
                    }
                }
                t.add_column(socio.header[col], v);
            }
        }

        stage = "svf";
        {
            sv = compute_svf(dsm, cdsm, cfg.svf, threads);
            write_grid(sv.svf, run.path("grids/svf.asc"));
            run.reg("grids/svf.asc");
            write_grid(sv.svf_build, run.path("grids/svf_build.asc"));
            run.reg("grids/svf_build.asc");
            t.add_column("SVF_mean", stat_col(sv.svf, {&street}));
        }

        stage = "utci";
        {
            const UtciTable tab = load_utci_table();
            std::vector<const MeteoSample*> sel;
            for (const MeteoSample& s : meteo) {
                if (int(std::floor(s.time.hour)) == cfg.utci_hour) sel.push_back(&s);
            }
            if (sel.empty()) {
                throw ValidationError("no meteo samples at hour " +
                                      std::to_string(cfg.utci_hour));
            }
            const size_t n_cells = dsm.values.size();
            std::vector<double> tmrt_acc(n_cells, 0.0), utci_acc(n_cells, 0.0);
            std::vector<char> missing(n_cells, 0);
            for (const MeteoSample* s : sel) {
                const SunPosition sun = solar_position(cfg.latitude, cfg.longitude, s->time);
                const Grid shadow = cast_shadows(dsm, &cdsm, sun.azimuth_deg,
                                                 sun.altitude_deg, cfg.svf.transmissivity,
                                                 threads);
                const RadiationField rad =
                    directional_fluxes(dsm, &cdsm, sv.svf, shadow, albedo, *s, sun);
                const Grid tm = mean_radiant_temperature(rad);
                const UtciGrids ug =
                    utci_from_tmrt(tab, tm, s->ta_c, s->wind10_ms, s->rh_pct, threads);
                for (size_t i = 0; i < n_cells; ++i) {
                    if (tm.is_nodata(tm.values[i]) || ug.utci.is_nodata(ug.utci.values[i])) {
                        missing[i] = 1;
                    } else {
                        tmrt_acc[i] += tm.values[i];
                        utci_acc[i] += ug.utci.values[i];
                    }
                }
            }
            Grid tmrt_mean = dsm;
            utci_mean = dsm;
            for (size_t i = 0; i < n_cells; ++i) {
                if (missing[i]) {
                    tmrt_mean.values[i] = tmrt_mean.nodata;
                    utci_mean.values[i] = utci_mean.nodata;
                } else {
                    tmrt_mean.values[i] = float(tmrt_acc[i] / double(sel.size()));
                    utci_mean.values[i] = float(utci_acc[i] / double(sel.size()));
                }
            }
            write_grid(tmrt_mean, run.path("grids/tmrt.asc"));
            run.reg("grids/tmrt.asc");
            write_grid(utci_mean, run.path("grids/utci.asc"));
            run.reg("grids/utci.asc");
            t.add_column("UTCI_mean", stat_col(utci_mean, {&street}));
        }

        stage = "zonal";
        {
            t.add_column("z_mismatch", standardized_mismatch(t));
            const auto biv = bivariate_class(t);
            write_table(t, run.path("features.csv"));
            run.reg("features.csv");

            std::string csv =
                "zone_id,centroid_x,centroid_y,LST_mean,UTCI_mean,z_mismatch,"
                "bivariate_code,bivariate_label\n";
            const auto lst_col = t.column("LST_mean");
            const auto utci_col = t.column("UTCI_mean");
            const auto z_col = t.column("z_mismatch");
            for (size_t i = 0; i < t.n(); ++i) {
                csv += std::to_string(t.zone_ids[i]) + "," + num(t.cx[i]) + "," +
                       num(t.cy[i]) + "," + num(lst_col[i]) + "," + num(utci_col[i]) + "," +
                       num(z_col[i]) + "," + std::to_string(biv[i].code()) + "," +
                       bivariate_label(biv[i]) + "\n";
            }
            write_text_file(run.path("zonal.csv"), csv);
            run.reg("zonal.csv");
        }

        stage = "moran";
        {
            const std::vector<std::string> vars = {"LST_mean", "UTCI_mean", "z_mismatch"};
            std::vector<size_t> keep;
            for (size_t i = 0; i < t.n(); ++i) {
                bool ok = true;
                for (const auto& v : vars) {
                    if (FeatureTable::is_missing(t.rows[i][t.column_index(v)])) ok = false;
                }
                if (ok) keep.push_back(i);
            }
            if (keep.size() < 4)
                throw ValidationError("fewer than 4 zones have complete LST/UTCI data");
            ZoneSet sub;
            for (size_t i : keep) sub.zones.push_back(zs.zones[i]);
            const SpatialWeights w = build_weights(sub, cfg.weights, true);

            std::string csv = "variable,moran_i,expected_i,p_value\n";
            std::vector<double> zvals;
            for (const auto& v : vars) {
                std::vector<double> vals;
                const size_t ci = t.column_index(v);
                for (size_t i : keep) vals.push_back(t.rows[i][ci]);
                if (v == "z_mismatch") zvals = vals;
                const MoranResult r = global_moran(vals, w, cfg.permutations,
                                                   stage_seed(cfg.seed, "moran." + v),
                                                   threads);
                csv += v + "," + num(r.moran_i) + "," + num(r.expected_i) + "," +
                       num(r.p_value) + "\n";
            }
            write_text_file(run.path("moran.csv"), csv);
            run.reg("moran.csv");

            const auto rows = lisa(zvals, w, cfg.permutations, stage_seed(cfg.seed, "lisa"),
                                   cfg.alpha, threads);
            std::string lcsv = "zone_id,local_i,p_value,category\n";
            for (size_t i = 0; i < rows.size(); ++i) {
                lcsv += std::to_string(sub.zones[i].id) + "," + num(rows[i].local_i) + "," +
                        num(rows[i].p_value) + "," + lisa_category_name(rows[i].category) +
                        "\n";
            }
            write_text_file(run.path("lisa.csv"), lcsv);
            run.reg("lisa.csv");
        }

        stage = "gwr";
        {
            std::vector<std::string> cols = cfg.features;
            cols.push_back(cfg.target);
            m = t.drop_missing(cols).select(cols);
            if (m.n() < cfg.features.size() + 3)
                throw ValidationError("too few complete zones for modelling");

            std::vector<KernelSpec> specs;
            std::vector<int> ks;
            for (int k : cfg.kernel_candidates) {
                if (k >= int(cfg.features.size()) + 2 && k <= int(m.n())) {
                    specs.push_back(KernelSpec::adaptive(k));
                    ks.push_back(k);
                }
            }
            if (specs.empty())
                throw ValidationError(
                    "no kernel candidate satisfies p + 2 <= k <= n for the local regression");
            const BandwidthSearch search =
                gwr_bandwidth_search(m, cfg.target, cfg.features, specs, threads);
            const GwrFit fit = gwr_fit(m, cfg.target, cfg.features, search.best, threads);
            write_gwr_csv(fit, run.path("gwr.csv"));
            run.reg("gwr.csv");

            std::string csv = "k,aicc\n";
            for (size_t i = 0; i < ks.size(); ++i)
                csv += std::to_string(ks[i]) + "," + num(search.aicc[i]) + "\n";
            write_text_file(run.path("gwr_bandwidth.csv"), csv);
            run.reg("gwr_bandwidth.csv");

            double r2sum = 0.0;
            for (double v : fit.local_r2) r2sum += v;
            metrics.emplace_back("gwr_k", double(ks[search.best_index]));
            metrics.emplace_back("gwr_aicc", search.aicc[search.best_index]);
            metrics.emplace_back("gwr_mean_local_r2",
                                 fit.local_r2.empty() ? 0.0 : r2sum / fit.local_r2.size());
        }

        stage = "fit";
        {
            x.assign(m.n(), {});
            y.assign(m.n(), 0.0);
            std::vector<size_t> fidx;
            for (const auto& f : cfg.features) fidx.push_back(m.column_index(f));
            const size_t ti = m.column_index(cfg.target);
            for (size_t i = 0; i < m.n(); ++i) {
                for (size_t j : fidx) x[i].push_back(m.rows[i][j]);
                y[i] = m.rows[i][ti];
            }

            std::vector<FitConfig> grid;
            for (int d : cfg.depths) {
                FitConfig fc;
                fc.n_estimators = cfg.n_estimators;
                fc.learning_rate = cfg.learning_rate;
                fc.max_depth = d;
                fc.subsample = cfg.subsample;
                fc.min_child_weight = cfg.min_child_weight;
                fc.seed = stage_seed(cfg.seed, "fit");
                grid.push_back(fc);
            }
            ncv = nested_cv(x, y, cfg.features, grid, 5, 3, stage_seed(cfg.seed, "cv"),
                            threads);

            std::string csv =
                "grid_index,max_depth,n_estimators,learning_rate,subsample,"
                "min_child_weight,outer_wins,selected\n";
            for (size_t g = 0; g < grid.size(); ++g) {
                const size_t wins =
                    size_t(std::count(ncv.fold_winner.begin(), ncv.fold_winner.end(), g));
                csv += std::to_string(g) + "," + std::to_string(grid[g].max_depth) + "," +
                       std::to_string(grid[g].n_estimators) + "," +
                       num(grid[g].learning_rate) + "," + num(grid[g].subsample) + "," +
                       num(grid[g].min_child_weight) + "," + std::to_string(wins) + "," +
                       (g == ncv.best_grid_index ? "1" : "0") + "\n";
            }
            write_text_file(run.path("nested_cv.csv"), csv);
            run.reg("nested_cv.csv");

            global = fit_boosted(x, y, {}, cfg.features, ncv.best, threads);
            save_model(global.model, run.path("global_model.json"));
            run.reg("global_model.json");

            global_residuals.assign(m.n(), 0.0);
            double rss = 0.0;
            for (size_t i = 0; i < m.n(); ++i) {
                global_residuals[i] = y[i] - global.fitted[i];
                rss += global_residuals[i] * global_residuals[i];
            }
            metrics.emplace_back("nested_r2_mean", ncv.r2_mean);
            metrics.emplace_back("nested_r2_sd", ncv.r2_sd);
            metrics.emplace_back("nested_mae_mean", ncv.mae_mean);
            metrics.emplace_back("nested_rmse_mean", ncv.rmse_mean);
            metrics.emplace_back("nested_rmse_sd", ncv.rmse_sd);
            metrics.emplace_back("global_train_rmse", std::sqrt(rss / double(m.n())));
            if (ncv.best.subsample < 1.0)
                metrics.emplace_back("global_oob_r2", oob_r2(global.oob, y));
        }

        stage = "gwfit";
        {
            std::vector<int> cands;
            for (int k : cfg.kernel_candidates) {
                if (k >= 10 && k < int(m.n())) cands.push_back(k);
            }
            if (cands.empty())
                throw ValidationError(
                    "no kernel candidate lies in [10, n-1] for the local boosted models");
            const LooResult loo =
                loo_bandwidth(m, cfg.target, cfg.features, cands, ncv.best, threads);
            write_bandwidth_trace(loo, run.path("bandwidth_trace.csv"));
            run.reg("bandwidth_trace.csv");

            lms = gw_fit(m, cfg.target, cfg.features, KernelSpec::adaptive(loo.best_k),
                         ncv.best, false, threads);
            fs::remove_all(out / "gw");
            write_local_diagnostics(lms, (out / "gw").string());
            for (const auto& entry : fs::recursive_directory_iterator(out / "gw")) {
                if (entry.is_regular_file())
                    run.reg(fs::relative(entry.path(), out).generic_string());
            }

            std::map<int64_t, const Zone*> zone_by_id;
            for (const Zone& z : zs.zones) zone_by_id[z.id] = &z;
            ZoneSet subm;
            for (int64_t id : m.zone_ids) subm.zones.push_back(*zone_by_id.at(id));
            const SpatialWeights wm = build_weights(subm, cfg.weights, true);

            const MoranResult rg =
                global_moran(global_residuals, wm, cfg.permutations,
                             stage_seed(cfg.seed, "moran.global_residuals"), threads);
            const MoranResult rl =
                residual_moran(lms, wm, cfg.permutations,
                               stage_seed(cfg.seed, "moran.gw_residuals"), threads);

            double lr2 = 0.0;
            for (const LocalModel& lm : lms.locals) lr2 += lm.local_r2;
            metrics.emplace_back("gw_k", double(loo.best_k));
            metrics.emplace_back("gw_mean_local_r2",
                                 lms.locals.empty() ? 0.0 : lr2 / double(lms.locals.size()));
            metrics.emplace_back("global_residual_moran_i", rg.moran_i);
            metrics.emplace_back("global_residual_moran_p", rg.p_value);
            metrics.emplace_back("gw_residual_moran_i", rl.moran_i);
            metrics.emplace_back("gw_residual_moran_p", rl.p_value);
            if (ncv.best.subsample < 1.0) {
                const FoldMetrics fm = global_oob(lms);
                metrics.emplace_back("gw_oob_r2", fm.r2);
                metrics.emplace_back("gw_oob_mae", fm.mae);
                metrics.emplace_back("gw_oob_rmse", fm.rmse);
            }

            std::string csv = "metric,value\n";
            for (const auto& [name, value] : metrics) csv += name + "," + num(value) + "\n";
            write_text_file(run.path("metrics.csv"), csv);
            run.reg("metrics.csv");
        }

        stage = "shap";
        {
            sm = tree_shap(global.model, x, threads);
            write_shap_summary(shap_summary(sm), run.path("shap_summary.csv"));
            run.reg("shap_summary.csv");

            const size_t si =
                size_t(std::find(cfg.features.begin(), cfg.features.end(), cfg.signed_feature) -
                       cfg.features.begin());
            const size_t ci =
                size_t(std::find(cfg.features.begin(), cfg.features.end(), cfg.color_feature) -
                       cfg.features.begin());
            std::vector<double> xs(m.n()), phi(m.n()), cv(m.n());
            for (size_t i = 0; i < m.n(); ++i) {
                xs[i] = x[i][si];
                phi[i] = sm.values[i][si];
                cv[i] = x[i][ci];
            }
            const std::string dep = "shap_dependence_" + cfg.signed_feature + ".csv";
            write_shap_dependence(cfg.signed_feature, xs, phi, cfg.color_feature, cv,
                                  run.path(dep));
            run.reg(dep);

            const LocalImportance li =
                local_importance_maps(lms, m, cfg.signed_feature, threads);
            write_local_primary(li, run.path("local_primary.csv"));
            run.reg("local_primary.csv");
        }

        stage = "gam";
        {
            std::vector<TransitionRow> rows;
            for (size_t j = 0; j < cfg.features.size(); ++j) {
                std::vector<double> xs(m.n()), phi(m.n());
                for (size_t i = 0; i < m.n(); ++i) {
                    xs[i] = x[i][j];
                    phi[i] = sm.values[i][j];
                }
                TransitionRow row;
                row.feature = cfg.features[j];
                try {
                    const GamFit gf = gam_fit(xs, phi, cfg.n_knots, Smoothing::gcv());
                    row.x = transition_point(gf);
                } catch (const ValidationError&) {
                    // constant features carry no crossing
                }
                rows.push_back(row);
            }
            write_transition_points(rows, run.path("transition_points.csv"));
            run.reg("transition_points.csv");
        }

        stage = "manifest";
        {
            std::sort(run.written.begin(), run.written.end());
            run.written.erase(std::unique(run.written.begin(), run.written.end()),
                              run.written.end());

            nlohmann::ordered_json j;
            j["format"] = 1;
            j["tool"] = {{"name", "heatlens"}, {"version", kVersion}};
            j["seed"] = cfg.seed;
            j["config"] = nlohmann::ordered_json::object();
            if (!cfg.config_path.empty() && fs::exists(cfg.config_path)) {
                j["config"][fs::path(cfg.config_path).filename().string()] =
                    file_hash_hex(cfg.config_path);
            }
            j["inputs"] = nlohmann::ordered_json::object();
            for (const auto& [rel, hash] : run.inputs) j["inputs"][rel] = hash;
            j["outputs"] = nlohmann::ordered_json::object();
            for (const std::string& rel : run.written)
                j["outputs"][rel] = file_hash_hex(run.path(rel));
            write_text_file(run.path("manifest.json"), j.dump(2) + "\n");
        }
    } catch (const std::exception& e) {
        for (const std::string& rel : run.written) {
            const fs::path p = out / rel;
            std::error_code ec;
            if (fs::exists(p, ec)) fs::rename(p, fs::path(p.string() + ".partial"), ec);
        }
        throw std::runtime_error("pipeline stage " + stage + " failed: " + e.what());
    }
}

}  // namespace heatlens
