#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>

#include "heatlens/gam.hpp"
#include "heatlens/error.hpp"
#include "heatlens/rng.hpp"

using namespace heatlens;

namespace {

std::vector<double> uniform_xs(Rng& rng, size_t n, double lo, double hi) {
    std::vector<double> x(n, 0.0);
    for (auto& v : x) v = rng.uniform(lo, hi);
    return x;
}

double max_curve_gap(const GamFit& fit, const std::vector<double>& probes,
                     const std::function<double(double)>& truth) {
    double worst = 0.0;
    for (double u : probes) worst = std::max(worst, std::abs(fit.evaluate(u) - truth(u)));
    return worst;
}

std::vector<double> grid_points(double lo, double hi, int steps) {
    std::vector<double> g;
    for (int i = 0; i <= steps; ++i) g.push_back(lo + (hi - lo) * double(i) / double(steps));
    return g;
}

std::string slurp(const std::string& path) {
    std::ifstream in(path);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

} // namespace

TEST_CASE("linear signals pass through the roughness penalty untouched") {
    Rng rng(2u, 0u);
    std::vector<double> x = uniform_xs(rng, 150, 0.0, 1.0);
    std::vector<double> phi(x.size(), 0.0);
    for (size_t i = 0; i < x.size(); ++i) phi[i] = 2.5 * x[i] - 1.0;

    GamFit fit = gam_fit(x, phi, 8, Smoothing::gcv());
    CHECK(fit.penalty_order == 2);
    CHECK(std::isfinite(fit.lambda));
    CHECK(fit.lambda >= 0.0);
    CHECK(fit.coef.size() == fit.knots.size() + 2);

    auto line = [](double u) { return 2.5 * u - 1.0; };
    CHECK(max_curve_gap(fit, grid_points(fit.knots.front(), fit.knots.back(), 400), line) <=
          1e-6);
}

TEST_CASE("constant signals give a constant curve") {
    Rng rng(4u, 0u);
    std::vector<double> x = uniform_xs(rng, 60, -2.0, 3.0);
    std::vector<double> phi(x.size(), 0.7);

    GamFit fit = gam_fit(x, phi, 6, Smoothing::gcv());
    auto flat = [](double) { return 0.7; };
    CHECK(max_curve_gap(fit, grid_points(-2.0, 3.0, 200), flat) <= 1e-9);
}

TEST_CASE("curves inside the spline space are matched exactly when unpenalized") {
    Rng rng(6u, 0u);
    std::vector<double> x = uniform_xs(rng, 100, -1.0, 2.0);
    std::vector<double> phi(x.size(), 0.0);
    for (size_t i = 0; i < x.size(); ++i) phi[i] = x[i] * x[i] * x[i] - x[i];

    GamFit fit = gam_fit(x, phi, 6, Smoothing::fixed(0.0));
    auto cubic = [](double u) { return u * u * u - u; };
    CHECK(max_curve_gap(fit, grid_points(fit.knots.front(), fit.knots.back(), 400), cubic) <=
          1e-6);

    CHECK(fit.evaluate(fit.knots.front() - 5.0) == fit.evaluate(fit.knots.front()));
    CHECK(fit.evaluate(fit.knots.back() + 5.0) == fit.evaluate(fit.knots.back()));
    CHECK(fit.lambda == 0.0);
}

TEST_CASE("a noisy step smooths to a monotone transition") {
    Rng rng(7u, 0u);
    std::vector<double> x = uniform_xs(rng, 200, 0.0, 1.0);
    std::vector<double> phi(x.size(), 0.0);
    for (size_t i = 0; i < x.size(); ++i)
        phi[i] = (x[i] > 0.5 ? 1.0 : -1.0) + 0.2 * rng.normal();

    GamFit fit = gam_fit(x, phi, 8, Smoothing::gcv());
    CHECK(std::isfinite(fit.lambda));
    CHECK(fit.lambda > 0.0);

    // Shoulder under- and overshoot is inherent to unconstrained splines, so
    // monotonicity is asserted through the jump itself.
    std::vector<double> band = grid_points(0.44, 0.60, 60);
    for (size_t i = 0; i + 1 < band.size(); ++i)
        CHECK(fit.evaluate(band[i + 1]) >= fit.evaluate(band[i]) - 1e-9);
    CHECK(fit.evaluate(0.15) < 0.0);
    CHECK(fit.evaluate(0.85) > 0.0);
}

TEST_CASE("the transition point is the first sign change") {
    std::vector<double> x, phi;
    for (int i = 0; i <= 120; ++i) {
        x.push_back(double(i) / 120.0);
        phi.push_back(x.back() - 0.51);
    }
    GamFit fit = gam_fit(x, phi, 6, Smoothing::gcv());
    auto cross = transition_point(fit);
    REQUIRE(cross.has_value());
    CHECK(std::abs(*cross - 0.51) <= 1e-3);

    for (size_t i = 0; i < phi.size(); ++i) phi[i] = -1.0 - x[i];
    CHECK(!transition_point(gam_fit(x, phi, 6, Smoothing::gcv())).has_value());

    // Two crossings; the earlier one wins.
    for (size_t i = 0; i < phi.size(); ++i) phi[i] = (x[i] - 0.35) * (x[i] - 0.7);
    auto first = transition_point(gam_fit(x, phi, 6, Smoothing::fixed(0.0)));
    REQUIRE(first.has_value());
    CHECK(std::abs(*first - 0.35) <= 1e-3);
}

TEST_CASE("noisy crossings are recovered within a narrow band across seeds") {
    for (uint32_t s = 0; s < 100; ++s) {
        Rng rng(5000u + s, 0u);
        std::vector<double> x = uniform_xs(rng, 150, 0.0, 1.0);
        std::vector<double> phi(x.size(), 0.0);
        for (size_t i = 0; i < x.size(); ++i) {
            const double g =
                x[i] <= 0.6 ? -0.25 : -0.25 + (0.25 / 0.21) * (x[i] - 0.6);
            phi[i] = g + 0.05 * rng.normal();
        }
        auto cross = transition_point(gam_fit(x, phi, 8, Smoothing::gcv()));
        REQUIRE(cross.has_value());
        CHECK(*cross >= 0.78);
        CHECK(*cross <= 0.84);
    }
}

TEST_CASE("positive rescaling of phi keeps the transition point") {
    Rng rng(5042u, 0u);
    std::vector<double> x = uniform_xs(rng, 150, 0.0, 1.0);
    std::vector<double> phi(x.size(), 0.0);
    for (size_t i = 0; i < x.size(); ++i) {
        const double g = x[i] <= 0.6 ? -0.25 : -0.25 + (0.25 / 0.21) * (x[i] - 0.6);
        phi[i] = g + 0.05 * rng.normal();
    }
    std::vector<double> scaled = phi;
    for (double& v : scaled) v *= 37.5;

    GamFit a = gam_fit(x, phi, 8, Smoothing::gcv());
    GamFit b = gam_fit(x, scaled, 8, Smoothing::gcv());
    CHECK(a.lambda == b.lambda);

    auto ca = transition_point(a), cb = transition_point(b);
    REQUIRE(ca.has_value());
    REQUIRE(cb.has_value());
    CHECK(std::abs(*ca - *cb) <= 1e-5);
}

TEST_CASE("gam input validation") {
    std::vector<double> flat(20, 3.0), phi(20, 1.0);
    CHECK_THROWS_WITH_AS(gam_fit(flat, phi, 4, Smoothing::gcv()),
                         doctest::Contains("degenerate"), const ValidationError&);

    std::vector<double> x(9, 0.0);
    for (size_t i = 0; i < x.size(); ++i) x[i] = double(i);
    CHECK_THROWS_WITH_AS(gam_fit(x, std::vector<double>(9, 0.0), 6, Smoothing::gcv()),
                         doctest::Contains("points"), const ValidationError&);
    CHECK_THROWS_WITH_AS(gam_fit(x, std::vector<double>(8, 0.0), 4, Smoothing::gcv()),
                         doctest::Contains("length"), const ValidationError&);
    CHECK_THROWS_WITH_AS(gam_fit(x, std::vector<double>(9, 0.0), 1, Smoothing::gcv()),
                         doctest::Contains("n_knots"), const ValidationError&);

    std::vector<double> bad(12, 0.5);
    for (size_t i = 0; i < bad.size(); ++i) bad[i] = double(i);
    std::vector<double> nanphi(12, 0.0);
    nanphi[5] = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_WITH_AS(gam_fit(bad, nanphi, 4, Smoothing::gcv()),
                         doctest::Contains("non-finite"), const ValidationError&);
    CHECK_THROWS_WITH_AS(gam_fit(bad, std::vector<double>(12, 0.0), 4, Smoothing::fixed(-1.0)),
                         doctest::Contains("non-negative"), const ValidationError&);

    // Heavy ties collapse duplicate quantile knots instead of failing.
    std::vector<double> tied(60, 0.0), tphi(60, 0.0);
    for (size_t i = 30; i < 60; ++i) tied[i] = double(i - 29) / 30.0;
    for (size_t i = 0; i < 60; ++i) tphi[i] = tied[i];
    GamFit fit = gam_fit(tied, tphi, 6, Smoothing::gcv());
    CHECK(fit.knots.size() >= 2);
    CHECK(std::isfinite(fit.evaluate(0.5)));
}

TEST_CASE("transition file writes optional crossings") {
    namespace fs = std::filesystem;
    const std::string path = (fs::temp_directory_path() / "heatlens_transitions.csv").string();
    write_transition_points({{"svf", 0.51}, {"dem", std::nullopt}}, path);
    CHECK(slurp(path) == "feature,transition_x\nsvf,0.51\ndem,\n");
    fs::remove(path);
}
