#pragma once

#include <array>
#include <string>
#include <vector>

#include "heatlens/grid.hpp"
#include "heatlens/solar.hpp"

namespace heatlens {

struct MeteoSample {
    std::string timestamp; // original text, UTC
    UtcTime time;
    double ta_c = 20.0;     // air temperature
    double rh_pct = 50.0;   // relative humidity
    double wind10_ms = 1.0; // wind speed at 10 m
    double ghi_wm2 = 0.0;   // global horizontal irradiance
    double dni_wm2 = 0.0;   // direct normal irradiance
    double dhi_wm2 = 0.0;   // diffuse horizontal irradiance
};

void validate_meteo(const MeteoSample& m);

// CSV with header: timestamp,ta,rh,wind10,ghi,dni,dhi
std::vector<MeteoSample> read_meteo_csv(const std::string& path);

struct BodyConstants {
    double shortwave_absorption = 0.7; // standing person
    double emissivity = 0.97;
    double stefan_boltzmann = 5.67e-8; // W m^-2 K^-4
};

// Direction index layout shared by RadiationField arrays.
enum Direction { DirN = 0, DirS = 1, DirE = 2, DirW = 3, DirUp = 4, DirDown = 5 };

// Standing-person view factors: 0.22 for the four cardinal directions,
// 0.06 for up and down; sums to 1.
std::array<double, 6> standing_view_factors();

struct RadiationField {
    std::array<Grid, 6> shortwave; // K_i, W/m^2
    std::array<Grid, 6> longwave;  // L_i, W/m^2
    std::array<double, 6> view_factors{};
};

// Beam transmission in [0,1]: 1 unobstructed, 0 behind a building,
// transmissivity where only canopy intersects the sun ray. Rays are marched
// upslope along the solar azimuth with bilinear surface sampling at
// half-cell steps. A sun at or below the horizon yields zero transmission
// everywhere (night). cdsm may be null.
Grid cast_shadows(const Grid& dsm, const Grid* cdsm, double azimuth_deg,
                  double altitude_deg, double transmissivity = 0.03,
                  int threads = 0);

// Magnus over water; e in hPa.
double vapor_pressure_hpa(double ta_c, double rh_pct);

// Brutsaert clear-sky emissivity, clamped to [0,1].
double sky_emissivity(double ta_c, double rh_pct);

// Simplified six-directional closure: beam split by incidence, diffuse by
// sky view, laterals see half the reflected diffuse share, surfaces radiate
// at air temperature. dsm/cdsm only fix the common geometry. A sun at or
// below the horizon zeroes all shortwave components.
RadiationField directional_fluxes(const Grid& dsm, const Grid* cdsm,
                                  const Grid& svf, const Grid& shadow,
                                  const Grid& surface_albedo,
                                  const MeteoSample& met, const SunPosition& sun);

// R = zeta_k sum(K_i F_i) + eps_p sum(L_i F_i); T = (R/(eps_p sigma))^(1/4).
// Cells with R <= 0 map to -273.15.
Grid mean_radiant_temperature(const RadiationField& rad,
                              const BodyConstants& body = BodyConstants());

// Same formula on one set of directional fluxes, all in double.
double mean_radiant_temperature_scalar(const std::array<double, 6>& shortwave,
                                       const std::array<double, 6>& longwave,
                                       const std::array<double, 6>& view_factors,
                                       const BodyConstants& body = BodyConstants());

// 210-term operational polynomial, loaded from a checksummed text table
// (one "ta_pow va_pow dtmrt_pow pa_pow coefficient" line per term).
struct UtciTable {
    struct Term {
        int ta = 0, va = 0, dt = 0, pa = 0;
        double coeff = 0.0;
    };
    std::vector<Term> terms;
};

std::string default_utci_table_path();
UtciTable load_utci_table(const std::string& path = std::string());

// Inputs are clamped to the published validity box (Ta in [-50,50],
// Tmrt-Ta in [-30,70], wind in [0.5,17], vapor pressure <= 50 hPa);
// `clamped` reports whether any clamp fired.
struct UtciValue {
    double celsius = 0.0;
    bool clamped = false;
};
UtciValue utci_scalar(const UtciTable& tab, double ta_c, double tmrt_c,
                      double wind10_ms, double rh_pct);

struct UtciGrids {
    Grid utci;
    Grid clamped; // 1 where any input clamp fired
};
UtciGrids utci_from_tmrt(const UtciTable& tab, const Grid& tmrt, double ta_c,
                         double wind10_ms, double rh_pct, int threads = 0);

// Left-closed stress bands on the standard assessment scale.
enum class UtciCategory {
    extreme_cold,
    very_strong_cold,
    strong_cold,
    moderate_cold,
    slight_cold,
    no_thermal_stress,
    moderate_heat,
    strong_heat,
    very_strong_heat,
    extreme_heat,
};
UtciCategory utci_category(double utci_c);
const char* utci_category_name(UtciCategory c);

} // namespace heatlens
