#include "heatlens/solar.hpp"

#include <cctype>
#include <cmath>
#include <cstdio>

namespace heatlens {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kDegToRad = kPi / 180.0;
constexpr double kRadToDeg = 180.0 / kPi;

double wrap360(double deg) {
    deg = std::fmod(deg, 360.0);
    if (deg < 0.0) deg += 360.0;
    return deg;
}

bool is_leap(int y) {
    return (y % 4 == 0 && y % 100 != 0) || y % 400 == 0;
}

int days_in_month(int y, int m) {
    static const int d[12] = {31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
    if (m == 2 && is_leap(y)) return 29;
    return d[m - 1];
}

} // namespace

double days_from_j2000(const UtcTime& t) {
    // Fliegel-Van Flandern style integer Julian date, valid for the
    // Gregorian calendar.
    const int y = t.year;
    const int m = t.month;
    const int d = t.day;
    const double jd = 367.0 * y - std::floor(7.0 * (y + std::floor((m + 9) / 12.0)) / 4.0) +
                      std::floor(275.0 * m / 9.0) + d + 1721013.5 + t.hour / 24.0;
    return jd - 2451545.0;
}

SunPosition solar_position(double lat_deg, double lon_deg, const UtcTime& t) {
    if (!(lat_deg >= -90.0 && lat_deg <= 90.0))
        throw ValidationError("solar_position: latitude must be in [-90, 90]");
    if (!(lon_deg >= -360.0 && lon_deg <= 360.0))
        throw ValidationError("solar_position: longitude must be in [-360, 360]");
    if (t.month < 1 || t.month > 12)
        throw ValidationError("solar_position: month out of range");
    if (t.day < 1 || t.day > days_in_month(t.year, t.month))
        throw ValidationError("solar_position: day out of range");
    if (!(t.hour >= 0.0 && t.hour < 24.0))
        throw ValidationError("solar_position: hour must be in [0, 24)");

    const double n = days_from_j2000(t);

    // Mean longitude, mean anomaly, ecliptic longitude (degrees).
    const double L = wrap360(280.460 + 0.9856474 * n);
    const double g = (357.528 + 0.9856003 * n) * kDegToRad;
    const double lambda = (L + 1.915 * std::sin(g) + 0.020 * std::sin(2.0 * g)) * kDegToRad;
    const double eps = (23.439 - 4.0e-7 * n) * kDegToRad;

    const double sin_dec = std::sin(eps) * std::sin(lambda);
    const double dec = std::asin(sin_dec);
    const double ra = std::atan2(std::cos(eps) * std::sin(lambda), std::cos(lambda));

    // Greenwich mean sidereal time in hours, then local hour angle.
    const double ut_hours = t.hour;
    const double gmst = std::fmod(6.697375 + 0.0657098242 * (n - ut_hours / 24.0) + 1.00273790935 * ut_hours, 24.0);
    const double lmst_deg = wrap360(gmst * 15.0 + lon_deg);
    double ha = lmst_deg - ra * kRadToDeg;
    ha = std::fmod(ha, 360.0);
    if (ha > 180.0) ha -= 360.0;
    if (ha < -180.0) ha += 360.0;
    const double ha_rad = ha * kDegToRad;

    const double lat = lat_deg * kDegToRad;
    const double sin_el = std::sin(dec) * std::sin(lat) + std::cos(dec) * std::cos(lat) * std::cos(ha_rad);
    const double el = std::asin(std::max(-1.0, std::min(1.0, sin_el)));
    const double az = std::atan2(-std::cos(dec) * std::sin(ha_rad),
                                 std::sin(dec) * std::cos(lat) - std::cos(dec) * std::sin(lat) * std::cos(ha_rad));

    SunPosition p;
    p.altitude_deg = el * kRadToDeg;
    p.azimuth_deg = wrap360(az * kRadToDeg);
    return p;
}

UtcTime parse_utc_timestamp(const std::string& s) {
    int y = 0, mo = 0, d = 0, h = 0, mi = 0;
    double sec = 0.0;
    int consumed = 0;
    int got = std::sscanf(s.c_str(), "%d-%d-%d%*1[T ]%d:%d%n", &y, &mo, &d, &h, &mi, &consumed);
    if (got != 5)
        throw ValidationError("timestamp: expected YYYY-MM-DDTHH:MM[:SS], got \"" + s + "\"");
    std::string rest = s.substr(static_cast<size_t>(consumed));
    if (!rest.empty() && rest[0] == ':') {
        size_t pos = 1;
        size_t start = pos;
        while (pos < rest.size() && (std::isdigit(static_cast<unsigned char>(rest[pos])) || rest[pos] == '.')) ++pos;
        if (pos == start)
            throw ValidationError("timestamp: malformed seconds in \"" + s + "\"");
        sec = std::stod(rest.substr(start, pos - start));
        rest = rest.substr(pos);
    }
    if (!rest.empty() && rest != "Z")
        throw ValidationError("timestamp: unexpected trailing \"" + rest + "\" in \"" + s + "\"");
    if (mo < 1 || mo > 12)
        throw ValidationError("timestamp: month out of range in \"" + s + "\"");
    if (d < 1 || d > days_in_month(y, mo))
        throw ValidationError("timestamp: day out of range in \"" + s + "\"");
    if (h < 0 || h > 23 || mi < 0 || mi > 59 || sec < 0.0 || sec >= 60.0)
        throw ValidationError("timestamp: time of day out of range in \"" + s + "\"");
    UtcTime t;
    t.year = y;
    t.month = mo;
    t.day = d;
    t.hour = h + mi / 60.0 + sec / 3600.0;
    return t;
}

} // namespace heatlens
