#pragma once

#include <string>

#include "heatlens/error.hpp"

namespace heatlens {

// Geometric sun position (no atmospheric refraction). Azimuth is measured
// clockwise from north; altitude is elevation above the horizon. Uses the
// Astronomical Almanac low-precision ephemeris, good to well under 0.5
// degrees for 1950-2050.
struct SunPosition {
    double altitude_deg = 0.0;
    double azimuth_deg = 0.0;
};

struct UtcTime {
    int year = 2000;
    int month = 1; // 1..12
    int day = 1;   // 1..31
    double hour = 0.0; // fractional hours [0, 24)
};

// Days from J2000.0 (2000-01-01 12:00 UT), Gregorian calendar.
double days_from_j2000(const UtcTime& t);

SunPosition solar_position(double lat_deg, double lon_deg, const UtcTime& t);

// "YYYY-MM-DDTHH:MM[:SS]" with optional trailing 'Z' or a space separator.
UtcTime parse_utc_timestamp(const std::string& s);

} // namespace heatlens
