#include "heatlens/microclimate.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "heatlens/parallel.hpp"
#include "heatlens/rng.hpp"
#include "heatlens/sampler.hpp"
#include "heatlens/table.hpp"

namespace heatlens {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kDegToRad = kPi / 180.0;
constexpr double kSigma = 5.67e-8;
constexpr double kZeroC = 273.15;

// Expected FNV-1a-64 digest of the shipped coefficient table.
constexpr uint64_t kUtciTableDigest = 0xdfba2f408e0594ccull;

double parse_field(const std::string& s, const char* name, size_t row) {
    try {
        size_t pos = 0;
        double v = std::stod(s, &pos);
        while (pos < s.size() && std::isspace(static_cast<unsigned char>(s[pos]))) ++pos;
        if (pos != s.size()) throw std::invalid_argument("trailing");
        return v;
    } catch (const std::exception&) {
        throw ValidationError("meteo csv row " + std::to_string(row) + ": bad " +
                              std::string(name) + " value \"" + s + "\"");
    }
}

} // namespace

void validate_meteo(const MeteoSample& m) {
    auto finite = [&](double v, const char* name) {
        if (!std::isfinite(v))
            throw ValidationError("meteo sample " + m.timestamp + ": " + name + " is not finite");
    };
    finite(m.ta_c, "ta");
    finite(m.rh_pct, "rh");
    finite(m.wind10_ms, "wind10");
    finite(m.ghi_wm2, "ghi");
    finite(m.dni_wm2, "dni");
    finite(m.dhi_wm2, "dhi");
    if (m.rh_pct < 0.0 || m.rh_pct > 100.0)
        throw ValidationError("meteo sample " + m.timestamp + ": rh must lie in [0,100]");
    if (m.wind10_ms < 0.0)
        throw ValidationError("meteo sample " + m.timestamp + ": wind10 must be non-negative");
    if (m.ghi_wm2 < 0.0 || m.dni_wm2 < 0.0 || m.dhi_wm2 < 0.0)
        throw ValidationError("meteo sample " + m.timestamp + ": irradiances must be non-negative");
}

std::vector<MeteoSample> read_meteo_csv(const std::string& path) {
    Csv csv = read_csv(path);
    const char* expected[7] = {"timestamp", "ta", "rh", "wind10", "ghi", "dni", "dhi"};
    if (csv.header.size() != 7)
        throw ValidationError(path + ": meteo csv needs header timestamp,ta,rh,wind10,ghi,dni,dhi");
    for (int i = 0; i < 7; ++i)
        if (csv.header[size_t(i)] != expected[i])
            throw ValidationError(path + ": meteo csv column " + std::to_string(i + 1) +
                                  " must be \"" + expected[i] + "\", got \"" +
                                  csv.header[size_t(i)] + "\"");
    std::vector<MeteoSample> out;
    out.reserve(csv.rows.size());
    for (size_t r = 0; r < csv.rows.size(); ++r) {
        const auto& row = csv.rows[r];
        MeteoSample m;
        m.timestamp = row[0];
        m.time = parse_utc_timestamp(row[0]);
        m.ta_c = parse_field(row[1], "ta", r + 2);
        m.rh_pct = parse_field(row[2], "rh", r + 2);
        m.wind10_ms = parse_field(row[3], "wind10", r + 2);
        m.ghi_wm2 = parse_field(row[4], "ghi", r + 2);
        m.dni_wm2 = parse_field(row[5], "dni", r + 2);
        m.dhi_wm2 = parse_field(row[6], "dhi", r + 2);
        validate_meteo(m);
        out.push_back(std::move(m));
    }
    return out;
}

std::array<double, 6> standing_view_factors() {
    return {0.22, 0.22, 0.22, 0.22, 0.06, 0.06};
}

Grid cast_shadows(const Grid& dsm, const Grid* cdsm, double azimuth_deg,
                  double altitude_deg, double transmissivity, int threads) {
    if (transmissivity < 0.0 || transmissivity > 1.0)
        throw ValidationError("shadows: transmissivity must lie in [0,1]");
    if (!std::isfinite(azimuth_deg) || !std::isfinite(altitude_deg))
        throw ValidationError("shadows: sun angles must be finite");
    const bool has_canopy = cdsm != nullptr;
    if (has_canopy) {
        dsm.require_same_geometry(*cdsm, "dsm vs cdsm");
        for (float v : cdsm->values)
            if (!cdsm->is_nodata(v) && v < 0.0f)
                throw ValidationError("shadows: canopy heights must be non-negative");
    }

    Grid out = Grid::filled(dsm.width, dsm.height, dsm.origin_x, dsm.origin_y,
                            dsm.cell_size, dsm.nodata, dsm.nodata);

    if (altitude_deg <= 0.0) { // night: no beam reaches any cell
        for (size_t i = 0; i < out.values.size(); ++i)
            if (!dsm.is_nodata(dsm.values[i])) out.values[i] = 0.0f;
        return out;
    }

    Grid veg = dsm;
    if (has_canopy) {
        for (size_t i = 0; i < veg.values.size(); ++i) {
            float d = dsm.values[i], c = cdsm->values[i];
            veg.values[i] = (dsm.is_nodata(d) || cdsm->is_nodata(c)) ? veg.nodata : d + c;
        }
    }

    double zmax = -1e30;
    bool any = false;
    for (size_t i = 0; i < veg.values.size(); ++i) {
        if (!veg.is_nodata(veg.values[i])) {
            zmax = std::max(zmax, double(veg.values[i]));
            any = true;
        }
    }
    if (!any) return out;

    const double tan_alt = std::tan(altitude_deg * kDegToRad);
    const double dx = std::sin(azimuth_deg * kDegToRad);
    const double dy = std::cos(azimuth_deg * kDegToRad);
    const double step = dsm.cell_size / 2.0;
    const double diag = std::hypot(dsm.width * dsm.cell_size, dsm.height * dsm.cell_size);
    DualSampler surf(dsm, veg);

    parallel_for(size_t(dsm.height), 4, [&](size_t rb, size_t re) {
        for (size_t r = rb; r < re; ++r) {
            for (int c = 0; c < dsm.width; ++c) {
                float z0f = dsm.at(c, int(r));
                if (dsm.is_nodata(z0f)) continue;
                const double z0 = z0f;
                const double x0 = dsm.cell_x(c), y0 = dsm.cell_y(int(r));
                double t_lim = (zmax - z0) / tan_alt;
                t_lim = std::min(t_lim, diag);
                double trans = 1.0;
                bool canopy_hit = false;
                for (double t = step; t <= t_lim + 1e-9; t += step) {
                    const double x = x0 + dx * t, y = y0 + dy * t;
                    if (!surf.inside(x, y)) break; // open horizon beyond the raster
                    double hb, hv;
                    if (!surf.sample(x, y, hb, hv)) continue;
                    const double z_ray = z0 + tan_alt * t;
                    if (hb > z_ray + 1e-6) {
                        trans = 0.0;
                        break;
                    }
                    if (has_canopy && hv > z_ray + 1e-6) canopy_hit = true;
                }
                if (trans > 0.0 && canopy_hit) trans = transmissivity;
                out.at(c, int(r)) = float(trans);
            }
        }
    }, threads);
    return out;
}

double vapor_pressure_hpa(double ta_c, double rh_pct) {
    return 6.1094 * std::exp(17.625 * ta_c / (ta_c + 243.04)) * rh_pct / 100.0;
}

double sky_emissivity(double ta_c, double rh_pct) {
    const double e_hpa = vapor_pressure_hpa(ta_c, rh_pct);
    const double ta_k = ta_c + kZeroC;
    const double eps = 1.24 * std::pow(std::max(e_hpa, 0.0) / ta_k, 1.0 / 7.0);
    return std::clamp(eps, 0.0, 1.0);
}

RadiationField directional_fluxes(const Grid& dsm, const Grid* cdsm,
                                  const Grid& svf, const Grid& shadow,
                                  const Grid& surface_albedo,
                                  const MeteoSample& met, const SunPosition& sun) {
    dsm.require_same_geometry(svf, "dsm vs svf");
    dsm.require_same_geometry(shadow, "dsm vs shadow");
    dsm.require_same_geometry(surface_albedo, "dsm vs albedo");
    if (cdsm) dsm.require_same_geometry(*cdsm, "dsm vs cdsm");
    validate_meteo(met);
    auto check01 = [](const Grid& g, const char* name) {
        for (float v : g.values)
            if (!g.is_nodata(v) && (v < 0.0f || v > 1.0f))
                throw ValidationError(std::string("fluxes: ") + name + " values must lie in [0,1]");
    };
    check01(svf, "svf");
    check01(shadow, "shadow");
    check01(surface_albedo, "albedo");

    const bool day = sun.altitude_deg > 0.0;
    const double sin_alt = std::sin(sun.altitude_deg * kDegToRad);
    const double cos_alt = std::cos(sun.altitude_deg * kDegToRad);
    const double az = sun.azimuth_deg * kDegToRad;
    const double facing[4] = {0.0, kPi, kPi / 2.0, 3.0 * kPi / 2.0}; // N, S, E, W

    const double ta_k = met.ta_c + kZeroC;
    const double l_iso = kSigma * ta_k * ta_k * ta_k * ta_k;
    const double eps_sky = sky_emissivity(met.ta_c, met.rh_pct);

    RadiationField rad;
    rad.view_factors = standing_view_factors();
    for (int i = 0; i < 6; ++i) {
        rad.shortwave[size_t(i)] = Grid::filled(svf.width, svf.height, svf.origin_x, svf.origin_y,
                                                svf.cell_size, svf.nodata, svf.nodata);
        rad.longwave[size_t(i)] = rad.shortwave[size_t(i)];
    }

    for (size_t i = 0; i < svf.values.size(); ++i) {
        const float s_f = svf.values[i], sh_f = shadow.values[i], alb_f = surface_albedo.values[i];
        if (svf.is_nodata(s_f) || shadow.is_nodata(sh_f) || surface_albedo.is_nodata(alb_f))
            continue;
        const double s = s_f, sh = sh_f, alb = alb_f;

        double k_down = 0.0, k_lat[4] = {0, 0, 0, 0};
        if (day) {
            k_down = sh * met.dni_wm2 * sin_alt + met.dhi_wm2 * s;
            const double beam_lat = sh * met.dni_wm2 * cos_alt;
            const double diffuse_lat = 0.5 * met.dhi_wm2 * (1.0 - s);
            for (int d = 0; d < 4; ++d)
                k_lat[d] = beam_lat * std::max(0.0, std::cos(az - facing[d])) + diffuse_lat;
        }
        const double k_up = alb * k_down;

        const double l_up = l_iso; // surfaces radiate at air temperature
        const double l_down = eps_sky * l_iso * s + l_iso * (1.0 - s);
        const double l_lat = 0.5 * (l_up + l_down);

        rad.shortwave[DirN].values[i] = float(k_lat[0]);
        rad.shortwave[DirS].values[i] = float(k_lat[1]);
        rad.shortwave[DirE].values[i] = float(k_lat[2]);
        rad.shortwave[DirW].values[i] = float(k_lat[3]);
        rad.shortwave[DirUp].values[i] = float(k_down);
        rad.shortwave[DirDown].values[i] = float(k_up);
        for (int d = 0; d < 4; ++d) rad.longwave[size_t(d)].values[i] = float(l_lat);
        rad.longwave[DirUp].values[i] = float(l_down);
        rad.longwave[DirDown].values[i] = float(l_up);
    }
    return rad;
}

double mean_radiant_temperature_scalar(const std::array<double, 6>& shortwave,
                                       const std::array<double, 6>& longwave,
                                       const std::array<double, 6>& view_factors,
                                       const BodyConstants& body) {
    double ksum = 0.0, lsum = 0.0;
    for (int d = 0; d < 6; ++d) {
        ksum += view_factors[size_t(d)] * shortwave[size_t(d)];
        lsum += view_factors[size_t(d)] * longwave[size_t(d)];
    }
    const double r_str = body.shortwave_absorption * ksum + body.emissivity * lsum;
    if (r_str <= 0.0) return -kZeroC;
    return std::pow(r_str / (body.emissivity * body.stefan_boltzmann), 0.25) - kZeroC;
}

Grid mean_radiant_temperature(const RadiationField& rad, const BodyConstants& body) {
    double fsum = 0.0;
    for (double f : rad.view_factors) {
        if (f < 0.0) throw ValidationError("tmrt: view factors must be non-negative");
        fsum += f;
    }
    if (std::abs(fsum - 1.0) > 1e-9)
        throw ValidationError("tmrt: view factors must sum to 1");
    const Grid& ref = rad.shortwave[0];
    for (int i = 0; i < 6; ++i) {
        ref.require_same_geometry(rad.shortwave[size_t(i)], "radiation grids");
        ref.require_same_geometry(rad.longwave[size_t(i)], "radiation grids");
    }
    for (int i = 0; i < 6; ++i) {
        for (float v : rad.shortwave[size_t(i)].values)
            if (!ref.is_nodata(v) && v < 0.0f)
                throw ValidationError("tmrt: shortwave fluxes must be non-negative");
        for (float v : rad.longwave[size_t(i)].values)
            if (!ref.is_nodata(v) && v < 0.0f)
                throw ValidationError("tmrt: longwave fluxes must be non-negative");
    }

    Grid out = Grid::filled(ref.width, ref.height, ref.origin_x, ref.origin_y,
                            ref.cell_size, ref.nodata, ref.nodata);
    const double denom = body.emissivity * body.stefan_boltzmann;
    for (size_t i = 0; i < out.values.size(); ++i) {
        double ksum = 0.0, lsum = 0.0;
        bool missing = false;
        for (int d = 0; d < 6; ++d) {
            const float k = rad.shortwave[size_t(d)].values[i];
            const float l = rad.longwave[size_t(d)].values[i];
            if (ref.is_nodata(k) || ref.is_nodata(l)) {
                missing = true;
                break;
            }
            ksum += rad.view_factors[size_t(d)] * k;
            lsum += rad.view_factors[size_t(d)] * l;
        }
        if (missing) continue;
        const double r_str = body.shortwave_absorption * ksum + body.emissivity * lsum;
        out.values[i] = r_str <= 0.0 ? float(-kZeroC)
                                     : float(std::pow(r_str / denom, 0.25) - kZeroC);
    }
    return out;
}

std::string default_utci_table_path() {
    if (const char* env = std::getenv("HEATLENS_UTCI_POLY"); env && *env) return env;
#ifdef HEATLENS_DATA_DIR
    {
        std::string p = std::string(HEATLENS_DATA_DIR) + "/utci_poly.txt";
        if (std::filesystem::exists(p)) return p;
    }
#endif
    return "data/utci_poly.txt";
}

UtciTable load_utci_table(const std::string& path) {
    const std::string p = path.empty() ? default_utci_table_path() : path;
    std::ifstream in(p, std::ios::binary);
    if (!in)
        throw ValidationError("utci coefficients: cannot open " + p);
    std::ostringstream buf;
    buf << in.rdbuf();
    const std::string content = buf.str();
    const uint64_t digest = fnv1a64(content.data(), content.size());
    if (digest != kUtciTableDigest) {
        char got[32];
        std::snprintf(got, sizeof got, "%016llx", static_cast<unsigned long long>(digest));
        throw ValidationError("utci coefficients: checksum mismatch for " + p +
                              " (fnv1a64 " + got + "), file corrupt or stale");
    }

    UtciTable tab;
    std::istringstream lines(content);
    std::string line;
    std::set<std::array<int, 4>> seen;
    size_t lineno = 0;
    while (std::getline(lines, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::istringstream ls(line);
        UtciTable::Term t;
        if (!(ls >> t.ta >> t.va >> t.dt >> t.pa >> t.coeff))
            throw ValidationError("utci coefficients: malformed line " + std::to_string(lineno));
        if (t.ta < 0 || t.va < 0 || t.dt < 0 || t.pa < 0 || t.ta + t.va + t.dt + t.pa > 6)
            throw ValidationError("utci coefficients: exponents out of range on line " +
                                  std::to_string(lineno));
        if (!seen.insert({t.ta, t.va, t.dt, t.pa}).second)
            throw ValidationError("utci coefficients: duplicate term on line " + std::to_string(lineno));
        tab.terms.push_back(t);
    }
    if (tab.terms.size() != 210)
        throw ValidationError("utci coefficients: expected 210 terms, got " +
                              std::to_string(tab.terms.size()));
    return tab;
}

UtciValue utci_scalar(const UtciTable& tab, double ta_c, double tmrt_c,
                      double wind10_ms, double rh_pct) {
    if (!std::isfinite(ta_c) || !std::isfinite(tmrt_c) || !std::isfinite(wind10_ms) ||
        !std::isfinite(rh_pct))
        throw ValidationError("utci: inputs must be finite");
    if (rh_pct < 0.0 || rh_pct > 100.0)
        throw ValidationError("utci: rh must lie in [0,100]");

    UtciValue out;
    auto clampf = [&out](double v, double lo, double hi) {
        if (v < lo) {
            out.clamped = true;
            return lo;
        }
        if (v > hi) {
            out.clamped = true;
            return hi;
        }
        return v;
    };
    const double ta = clampf(ta_c, -50.0, 50.0);
    const double d = clampf(tmrt_c - ta_c, -30.0, 70.0);
    const double va = clampf(wind10_ms, 0.5, 17.0);
    const double pa = clampf(vapor_pressure_hpa(ta, rh_pct), 0.0, 50.0) / 10.0; // kPa

    double tp[7], vp[7], dp[7], pp[7];
    tp[0] = vp[0] = dp[0] = pp[0] = 1.0;
    for (int k = 1; k < 7; ++k) {
        tp[k] = tp[k - 1] * ta;
        vp[k] = vp[k - 1] * va;
        dp[k] = dp[k - 1] * d;
        pp[k] = pp[k - 1] * pa;
    }
    double acc = 0.0;
    for (const auto& t : tab.terms)
        acc += t.coeff * tp[t.ta] * vp[t.va] * dp[t.dt] * pp[t.pa];
    out.celsius = ta + acc;
    return out;
}

UtciGrids utci_from_tmrt(const UtciTable& tab, const Grid& tmrt, double ta_c,
                         double wind10_ms, double rh_pct, int threads) {
    UtciGrids out{Grid::filled(tmrt.width, tmrt.height, tmrt.origin_x, tmrt.origin_y,
                               tmrt.cell_size, tmrt.nodata, tmrt.nodata),
                  Grid::filled(tmrt.width, tmrt.height, tmrt.origin_x, tmrt.origin_y,
                               tmrt.cell_size, tmrt.nodata, tmrt.nodata)};
    parallel_for(tmrt.values.size(), 4096, [&](size_t b, size_t e) {
        for (size_t i = b; i < e; ++i) {
            const float t = tmrt.values[i];
            if (tmrt.is_nodata(t)) continue;
            UtciValue v = utci_scalar(tab, ta_c, double(t), wind10_ms, rh_pct);
            out.utci.values[i] = float(v.celsius);
            out.clamped.values[i] = v.clamped ? 1.0f : 0.0f;
        }
    }, threads);
    return out;
}

UtciCategory utci_category(double u) {
    if (!std::isfinite(u)) throw ValidationError("utci_category: value must be finite");
    if (u < -40.0) return UtciCategory::extreme_cold;
    if (u < -27.0) return UtciCategory::very_strong_cold;
    if (u < -13.0) return UtciCategory::strong_cold;
    if (u < 0.0) return UtciCategory::moderate_cold;
    if (u < 9.0) return UtciCategory::slight_cold;
    if (u < 26.0) return UtciCategory::no_thermal_stress;
    if (u < 32.0) return UtciCategory::moderate_heat;
    if (u < 38.0) return UtciCategory::strong_heat;
    if (u < 46.0) return UtciCategory::very_strong_heat;
    return UtciCategory::extreme_heat;
}

const char* utci_category_name(UtciCategory c) {
    switch (c) {
        case UtciCategory::extreme_cold: return "extreme cold stress";
        case UtciCategory::very_strong_cold: return "very strong cold stress";
        case UtciCategory::strong_cold: return "strong cold stress";
        case UtciCategory::moderate_cold: return "moderate cold stress";
        case UtciCategory::slight_cold: return "slight cold stress";
        case UtciCategory::no_thermal_stress: return "no thermal stress";
        case UtciCategory::moderate_heat: return "moderate heat stress";
        case UtciCategory::strong_heat: return "strong heat stress";
        case UtciCategory::very_strong_heat: return "very strong heat stress";
        case UtciCategory::extreme_heat: return "extreme heat stress";
    }
    return "unknown";
}

} // namespace heatlens
