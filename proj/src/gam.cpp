#include "heatlens/gam.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

#include "heatlens/error.hpp"
#include "heatlens/stats_util.hpp"

namespace heatlens {

Smoothing Smoothing::fixed(double lambda) {
    Smoothing s;
    s.mode = Mode::Fixed;
    s.value = lambda;
    return s;
}

Smoothing Smoothing::gcv() {
    Smoothing s;
    s.mode = Mode::Gcv;
    return s;
}

namespace {

// Clamped cubic knot vector: both end knots carry multiplicity four, so the
// basis interpolates the range endpoints and every interior knot is simple.
std::vector<double> clamped_knots(const std::vector<double>& knots) {
    std::vector<double> t;
    t.reserve(knots.size() + 6);
    for (int i = 0; i < 3; ++i) t.push_back(knots.front());
    t.insert(t.end(), knots.begin(), knots.end());
    for (int i = 0; i < 3; ++i) t.push_back(knots.back());
    return t;
}

int find_span(const std::vector<double>& t, int basis, double u) {
    if (u >= t[size_t(basis)]) return basis - 1;
    if (u <= t[3]) return 3;
    auto it = std::upper_bound(t.begin() + 3, t.begin() + basis + 1, u);
    return int(it - t.begin()) - 1;
}

// Nonzero cubic basis values at u: out[r] = B_{span-3+r}(u).
void basis_funs(const std::vector<double>& t, int span, double u, double out[4]) {
    double left[4] = {0, 0, 0, 0}, right[4] = {0, 0, 0, 0};
    out[0] = 1.0;
    for (int j = 1; j <= 3; ++j) {
        left[j] = u - t[size_t(span + 1 - j)];
        right[j] = t[size_t(span + j)] - u;
        double saved = 0.0;
        for (int r = 0; r < j; ++r) {
            const double tmp = out[r] / (right[r + 1] + left[j - r]);
            out[r] = saved + right[r + 1] * tmp;
            saved = left[j - r] * tmp;
        }
        out[j] = saved;
    }
}

} // namespace

double GamFit::evaluate(double x) const {
    const std::vector<double> t = clamped_knots(knots);
    const int basis = int(coef.size());
    const double u = std::clamp(x, knots.front(), knots.back());
    const int span = find_span(t, basis, u);
    double n[4];
    basis_funs(t, span, u, n);
    double acc = 0.0;
    for (int r = 0; r < 4; ++r) acc += n[r] * coef[size_t(span - 3 + r)];
    return acc;
}

GamFit gam_fit(const std::vector<double>& x, const std::vector<double>& phi, int n_knots,
               const Smoothing& lambda) {
    if (x.size() != phi.size()) throw ValidationError("gam_fit: x and phi lengths differ");
    if (n_knots < 2) throw ValidationError("gam_fit: n_knots must be at least 2");
    if (x.size() < size_t(n_knots) + 4)
        throw ValidationError("gam_fit: needs at least n_knots + 4 points");
    for (size_t i = 0; i < x.size(); ++i)
        if (!std::isfinite(x[i]) || !std::isfinite(phi[i]))
            throw ValidationError("gam_fit: non-finite input");
    if (lambda.mode == Smoothing::Mode::Fixed &&
        !(std::isfinite(lambda.value) && lambda.value >= 0.0))
        throw ValidationError("gam_fit: lambda must be non-negative");

    std::vector<double> sorted = x;
    std::sort(sorted.begin(), sorted.end());
    std::vector<double> knots;
    for (int j = 0; j < n_knots; ++j)
        knots.push_back(quantile_sorted(sorted, double(j) / double(n_knots - 1)));
    knots.erase(std::unique(knots.begin(), knots.end()), knots.end());
    if (knots.size() < 2)
        throw ValidationError("gam_fit: x is degenerate (all values equal)");

    const std::vector<double> t = clamped_knots(knots);
    const int basis = int(knots.size()) + 2;
    const int n = int(x.size());

    Eigen::MatrixXd design = Eigen::MatrixXd::Zero(n, basis);
    for (int i = 0; i < n; ++i) {
        const double u = std::clamp(x[size_t(i)], knots.front(), knots.back());
        const int span = find_span(t, basis, u);
        double nb[4];
        basis_funs(t, span, u, nb);
        for (int r = 0; r < 4; ++r) design(i, span - 3 + r) = nb[r];
    }

    // Greville abscissae; second divided differences over them are zero for
    // any coefficient vector that represents a straight line.
    std::vector<double> greville(size_t(basis), 0.0);
    for (int j = 0; j < basis; ++j)
        greville[size_t(j)] = (t[size_t(j + 1)] + t[size_t(j + 2)] + t[size_t(j + 3)]) / 3.0;
    Eigen::MatrixXd rough = Eigen::MatrixXd::Zero(basis - 2, basis);
    for (int j = 0; j + 2 < basis; ++j) {
        const double a = 1.0 / (greville[size_t(j + 1)] - greville[size_t(j)]);
        const double b = 1.0 / (greville[size_t(j + 2)] - greville[size_t(j + 1)]);
        rough(j, j) = a;
        rough(j, j + 1) = -(a + b);
        rough(j, j + 2) = b;
    }

    Eigen::VectorXd target(n);
    for (int i = 0; i < n; ++i) target(i) = phi[size_t(i)];
    const Eigen::MatrixXd gram = design.transpose() * design;
    const Eigen::MatrixXd penalty = rough.transpose() * rough;
    const Eigen::VectorXd moment = design.transpose() * target;

    auto solve_at = [&](double lam, Eigen::VectorXd& coef, double& gcv) {
        const Eigen::MatrixXd a = gram + lam * penalty;
        const auto ldlt = a.ldlt();
        coef = ldlt.solve(moment);
        const double rss = (target - design * coef).squaredNorm();
        const double edf = ldlt.solve(gram).trace();
        const double slack = double(n) - edf;
        gcv = slack > 1e-12 ? double(n) * rss / (slack * slack)
                            : std::numeric_limits<double>::infinity();
    };

    double chosen = lambda.value;
    Eigen::VectorXd coef;
    double gcv = 0.0;
    if (lambda.mode == Smoothing::Mode::Gcv) {
        double best = std::numeric_limits<double>::infinity();
        for (int step = -16; step <= 16; ++step) {
            const double lam = std::pow(10.0, 0.5 * double(step));
            Eigen::VectorXd c;
            double score = 0.0;
            solve_at(lam, c, score);
            if (score < best) {
                best = score;
                chosen = lam;
                coef = c;
            }
        }
        if (!std::isfinite(best)) throw ValidationError("gam_fit: cross-validation failed");
    } else {
        solve_at(chosen, coef, gcv);
    }

    GamFit fit;
    fit.knots = knots;
    fit.coef.assign(coef.data(), coef.data() + basis);
    fit.lambda = chosen;
    return fit;
}

std::optional<double> transition_point(const GamFit& fit) {
    const double lo = fit.knots.front(), hi = fit.knots.back();
    const double range = hi - lo;
    if (!(range > 0.0)) return std::nullopt;
    const double tol = 1e-6 * range;

    const int steps = 2048;
    auto sign_of = [](double v) { return v > 0.0 ? 1 : v < 0.0 ? -1 : 0; };

    int last_sign = 0;
    double last_x = lo;
    for (int i = 0; i <= steps; ++i) {
        const double u = lo + range * double(i) / double(steps);
        const int s = sign_of(fit.evaluate(u));
        if (s == 0) continue;
        if (last_sign != 0 && s != last_sign) {
            double a = last_x, b = u;
            double fa = fit.evaluate(a);
            while (b - a > tol) {
                const double mid = 0.5 * (a + b);
                const double fm = fit.evaluate(mid);
                if (fm == 0.0) return mid;
                if (sign_of(fm) == sign_of(fa)) {
                    a = mid;
                    fa = fm;
                } else {
                    b = mid;
                }
            }
            return 0.5 * (a + b);
        }
        last_sign = s;
        last_x = u;
    }
    return std::nullopt;
}

void write_transition_points(const std::vector<TransitionRow>& rows, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ValidationError("cannot write " + path);
    out << "feature,transition_x\n";
    char buf[64];
    for (const auto& r : rows) {
        out << r.feature << ",";
        if (r.x) {
            std::snprintf(buf, sizeof buf, "%.10g", *r.x);
            out << buf;
        }
        out << "\n";
    }
}

} // namespace heatlens
