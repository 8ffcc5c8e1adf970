#pragma once

#include <optional>
#include <string>
#include <vector>

namespace heatlens {

// Smoothing strength: a fixed lambda >= 0, or generalized cross-validation
// over a fixed logarithmic grid (10^-8 .. 10^8, half-decade steps).
struct Smoothing {
    enum class Mode { Fixed, Gcv };
    Mode mode = Mode::Gcv;
    double value = 1.0;

    static Smoothing fixed(double lambda);
    static Smoothing gcv();
};

// Penalized cubic B-spline curve. Knots are distinct quantiles of x spanning
// its full range, so the curve is C2 everywhere inside it; the penalty is
// the second divided difference of the coefficients over the Greville
// abscissae, which vanishes exactly on linear functions for any knot layout.
struct GamFit {
    std::vector<double> knots; // distinct, ascending, knots.front()/back() = data range
    std::vector<double> coef;  // clamped cubic basis, knots.size() + 2 entries
    int penalty_order = 2;
    double lambda = 0.0;

    // Inputs outside the knot range evaluate at the nearest endpoint.
    double evaluate(double x) const;
};

// Least squares of phi on the spline basis plus lambda times the squared
// coefficient roughness. Needs at least n_knots + 4 points and at least two
// distinct x values; n_knots >= 2.
GamFit gam_fit(const std::vector<double>& x, const std::vector<double>& phi, int n_knots,
               const Smoothing& lambda);

// Smallest x in the knot range where the curve changes sign, located by
// bisection to 1e-6 of the range; empty when the sign never changes.
std::optional<double> transition_point(const GamFit& fit);

struct TransitionRow {
    std::string feature;
    std::optional<double> x;
};

// feature,transition_x rows; the field is empty when there is no crossing.
void write_transition_points(const std::vector<TransitionRow>& rows, const std::string& path);

} // namespace heatlens
