#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "heatlens/indices.hpp"

using namespace heatlens;

namespace {

Grid uniform_band(float v) {
    return Grid::filled(3, 2, 0, 0, 1.0, v);
}

BandStack six_bands(float v) {
    BandStack s;
    for (const char* n : {"rho_blue", "rho_green", "rho_red", "rho_nir",
                          "rho_swir1", "rho_swir2"})
        s.add(n, uniform_band(v));
    return s;
}

} // namespace

TEST_CASE("ndvi and ndbi follow the normalized-difference definition") {
    BandStack s;
    s.add("rho_red", uniform_band(0.2f));
    s.add("rho_nir", uniform_band(0.8f));
    s.add("rho_swir1", uniform_band(0.5f));
    Grid ndvi = compute_ndvi(s);
    CHECK(ndvi.at(0, 0) == doctest::Approx(0.6).epsilon(1e-6));
    Grid ndbi = compute_ndbi(s);
    CHECK(ndbi.at(0, 0) == doctest::Approx((0.5 - 0.8) / (0.5 + 0.8)).epsilon(1e-6));

    // Zero denominator yields nodata, not a crash or inf.
    BandStack z;
    z.add("rho_red", uniform_band(0.0f));
    z.add("rho_nir", uniform_band(0.0f));
    Grid nd = compute_ndvi(z);
    CHECK(nd.is_nodata(nd.at(0, 0)));
}

TEST_CASE("albedo and wetness weighted sums hit frozen all-ones values") {
    Grid alb = compute_albedo(six_bands(1.0f));
    CHECK(alb.at(0, 0) == doctest::Approx(0.9710).epsilon(1e-6));
    Grid wet = compute_wetness(six_bands(1.0f));
    CHECK(wet.at(0, 0) == doctest::Approx(-0.1503).epsilon(1e-5));
    Grid alb0 = compute_albedo(six_bands(0.0f));
    CHECK(alb0.at(0, 0) == doctest::Approx(0.0011).epsilon(1e-6));
}

TEST_CASE("band stack validation names the offender") {
    BandStack s = six_bands(0.5f);
    CHECK_THROWS_WITH_AS(s.get("rho_thermal"), doctest::Contains("rho_thermal"),
                         ValidationError);

    BandStack bad = six_bands(0.5f);
    bad.bands[2].second.at(1, 1) = 1.5f;
    CHECK_THROWS_WITH_AS(bad.validate(), doctest::Contains("rho_red"), ValidationError);

    BandStack mixed = six_bands(0.5f);
    mixed.bands[0].second = Grid::filled(4, 2, 0, 0, 1.0, 0.5f);
    CHECK_THROWS_AS(mixed.validate(), ValidationError);

    BandStack partial;
    partial.add("rho_red", uniform_band(0.1f));
    CHECK_THROWS_WITH_AS(compute_albedo(partial), doctest::Contains("rho_blue"),
                         ValidationError);
}

TEST_CASE("nodata propagates through every index") {
    BandStack s = six_bands(0.25f);
    for (auto& [n, g] : s.bands) g.at(0, 0) = g.nodata;
    Grid alb = compute_albedo(s);
    CHECK(alb.is_nodata(alb.at(0, 0)));
    CHECK_FALSE(alb.is_nodata(alb.at(1, 0)));
    Grid wet = compute_wetness(s);
    CHECK(wet.is_nodata(wet.at(0, 0)));
    Grid ndvi = compute_ndvi(s);
    CHECK(ndvi.is_nodata(ndvi.at(0, 0)));
}

TEST_CASE("band manifest loads grids relative to its own directory") {
    auto dir = std::filesystem::temp_directory_path() / "heatlens_tests" / "bands";
    std::filesystem::create_directories(dir);
    write_grid(uniform_band(0.3f), (dir / "red.asc").string());
    write_grid(uniform_band(0.6f), (dir / "nir.asc").string());
    {
        std::ofstream f(dir / "bands.json");
        f << "{\"bands\":{\"rho_red\":\"red.asc\",\"rho_nir\":\"nir.asc\"}}";
    }
    BandStack s = read_bands((dir / "bands.json").string());
    CHECK(s.has("rho_red"));
    Grid ndvi = compute_ndvi(s);
    CHECK(ndvi.at(0, 0) == doctest::Approx((0.6 - 0.3) / 0.9).epsilon(1e-6));
}
