#include "heatlens/gwr.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

#include "heatlens/error.hpp"
#include "heatlens/parallel.hpp"

namespace heatlens {

KernelSpec KernelSpec::fixed(double bandwidth) {
    KernelSpec k;
    k.mode = Mode::Fixed;
    k.bandwidth = bandwidth;
    return k;
}

KernelSpec KernelSpec::adaptive(int k) {
    KernelSpec s;
    s.mode = Mode::Adaptive;
    s.k = k;
    return s;
}

double bisquare_weight(double d, double b) {
    if (!(d >= 0.0)) throw ValidationError("bisquare: negative distance");
    if (!(b > 0.0)) throw ValidationError("bisquare: bandwidth must be positive");
    if (d > b) return 0.0;
    const double u = d / b;
    const double t = 1.0 - u * u;
    return t * t;
}

namespace {

struct Design {
    size_t n = 0, p = 0;
    Eigen::MatrixXd x; // [n][p+1] standardized, intercept first
    Eigen::VectorXd y;
    std::vector<double> mu, sigma;
    std::vector<double> cx, cy;
};

Design build_design(const FeatureTable& t, const std::string& y_col,
                    const std::vector<std::string>& x_cols) {
    t.validate();
    Design d;
    d.n = t.n();
    d.p = x_cols.size();
    if (d.n <= d.p + 2)
        throw ValidationError("gwr: need more than p + 2 rows");

    const size_t yc = t.column_index(y_col);
    std::vector<size_t> xc;
    for (const auto& name : x_cols) xc.push_back(t.column_index(name));

    d.x.resize(Eigen::Index(d.n), Eigen::Index(d.p + 1));
    d.y.resize(Eigen::Index(d.n));
    d.cx = t.cx;
    d.cy = t.cy;
    for (size_t i = 0; i < d.n; ++i) {
        const double yv = t.rows[i][yc];
        if (FeatureTable::is_missing(yv) || !std::isfinite(yv))
            throw ValidationError("gwr: missing response for zone " +
                                  std::to_string(t.zone_ids[i]));
        d.y[Eigen::Index(i)] = yv;
        d.x(Eigen::Index(i), 0) = 1.0;
        for (size_t k = 0; k < d.p; ++k) {
            const double v = t.rows[i][xc[k]];
            if (FeatureTable::is_missing(v) || !std::isfinite(v))
                throw ValidationError("gwr: missing predictor " + x_cols[k] +
                                      " for zone " + std::to_string(t.zone_ids[i]));
            d.x(Eigen::Index(i), Eigen::Index(k + 1)) = v;
        }
    }

    d.mu.assign(d.p, 0.0);
    d.sigma.assign(d.p, 0.0);
    for (size_t k = 0; k < d.p; ++k) {
        double m = 0.0;
        for (size_t i = 0; i < d.n; ++i) m += d.x(Eigen::Index(i), Eigen::Index(k + 1));
        m /= double(d.n);
        double v = 0.0;
        for (size_t i = 0; i < d.n; ++i) {
            const double e = d.x(Eigen::Index(i), Eigen::Index(k + 1)) - m;
            v += e * e;
        }
        v /= double(d.n);
        if (!(v > 0.0))
            throw ValidationError("gwr: constant predictor column " + x_cols[k]);
        d.mu[k] = m;
        d.sigma[k] = std::sqrt(v);
        for (size_t i = 0; i < d.n; ++i)
            d.x(Eigen::Index(i), Eigen::Index(k + 1)) =
                (d.x(Eigen::Index(i), Eigen::Index(k + 1)) - m) / d.sigma[k];
    }
    return d;
}

void validate_kernel(const KernelSpec& kernel, size_t n, size_t p) {
    if (kernel.mode == KernelSpec::Mode::Fixed) {
        if (!(kernel.bandwidth > 0.0))
            throw ValidationError("gwr: fixed bandwidth must be positive");
    } else {
        if (kernel.k < int(p) + 2)
            throw ValidationError("gwr: adaptive k must be at least p + 2");
        if (size_t(kernel.k) > n)
            throw ValidationError("gwr: adaptive k exceeds the row count");
    }
}

} // namespace

GwrFit gwr_fit(const FeatureTable& t, const std::string& y_col,
               const std::vector<std::string>& x_cols, const KernelSpec& kernel,
               int threads) {
    const Design d = build_design(t, y_col, x_cols);
    validate_kernel(kernel, d.n, d.p);
    const size_t n = d.n, q = d.p + 1;

    GwrFit fit;
    fit.predictor_names = x_cols;
    fit.zone_ids = t.zone_ids;
    fit.beta.assign(n, std::vector<double>(q, 0.0));
    fit.fitted.assign(n, 0.0);
    fit.residuals.assign(n, 0.0);
    fit.hat_rows.assign(n, std::vector<double>(n, 0.0));
    fit.hat_diag.assign(n, 0.0);
    fit.local_r2.assign(n, 0.0);
    fit.bandwidth.assign(n, 0.0);

    std::vector<std::string> failures(n);
    parallel_for(n, 2, [&](size_t lo, size_t hi) {
        std::vector<double> dist(n), w(n), sorted;
        for (size_t i = lo; i < hi; ++i) {
            for (size_t j = 0; j < n; ++j) {
                const double dx = d.cx[j] - d.cx[i];
                const double dy = d.cy[j] - d.cy[i];
                dist[j] = std::sqrt(dx * dx + dy * dy);
            }
            double b = kernel.bandwidth;
            if (kernel.mode == KernelSpec::Mode::Adaptive) {
                sorted = dist;
                std::nth_element(sorted.begin(), sorted.begin() + (kernel.k - 1),
                                 sorted.end());
                b = sorted[size_t(kernel.k - 1)];
                if (!(b > 0.0)) {
                    failures[i] = "gwr: zero adaptive bandwidth at zone " +
                                  std::to_string(t.zone_ids[i]) +
                                  ", increase the bandwidth";
                    continue;
                }
            }
            fit.bandwidth[i] = b;

            double wsum = 0.0;
            for (size_t j = 0; j < n; ++j) {
                w[j] = bisquare_weight(dist[j], b);
                wsum += w[j];
            }

            Eigen::MatrixXd a = Eigen::MatrixXd::Zero(Eigen::Index(q), Eigen::Index(q));
            Eigen::VectorXd rhs = Eigen::VectorXd::Zero(Eigen::Index(q));
            for (size_t j = 0; j < n; ++j) {
                if (w[j] == 0.0) continue;
                const auto xj = d.x.row(Eigen::Index(j)).transpose();
                a.noalias() += w[j] * xj * xj.transpose();
                rhs.noalias() += w[j] * d.y[Eigen::Index(j)] * xj;
            }

            Eigen::FullPivLU<Eigen::MatrixXd> lu(a);
            if (!lu.isInvertible()) {
                failures[i] = "gwr: singular weighted fit at zone " +
                              std::to_string(t.zone_ids[i]) +
                              ", increase the bandwidth";
                continue;
            }
            const Eigen::VectorXd beta_s = lu.solve(rhs);
            const Eigen::VectorXd v = lu.solve(d.x.row(Eigen::Index(i)).transpose());

            for (size_t j = 0; j < n; ++j) {
                const double s = w[j] == 0.0
                                     ? 0.0
                                     : w[j] * d.x.row(Eigen::Index(j)).dot(v);
                fit.hat_rows[i][j] = s;
            }
            fit.hat_diag[i] = fit.hat_rows[i][i];

            const double yhat = d.x.row(Eigen::Index(i)).dot(beta_s);
            fit.fitted[i] = yhat;
            fit.residuals[i] = d.y[Eigen::Index(i)] - yhat;

            double ybar = 0.0;
            for (size_t j = 0; j < n; ++j) ybar += w[j] * d.y[Eigen::Index(j)];
            ybar /= wsum;
            double rss_w = 0.0, tss_w = 0.0;
            for (size_t j = 0; j < n; ++j) {
                if (w[j] == 0.0) continue;
                const double pj = d.x.row(Eigen::Index(j)).dot(beta_s);
                rss_w += w[j] * (d.y[Eigen::Index(j)] - pj) *
                         (d.y[Eigen::Index(j)] - pj);
                tss_w += w[j] * (d.y[Eigen::Index(j)] - ybar) *
                         (d.y[Eigen::Index(j)] - ybar);
            }
            fit.local_r2[i] = tss_w > 0.0
                                  ? 1.0 - rss_w / tss_w
                                  : std::numeric_limits<double>::quiet_NaN();

            // Back to raw predictor units.
            double b0 = beta_s[0];
            for (size_t k = 0; k < d.p; ++k) {
                const double bk = beta_s[Eigen::Index(k + 1)] / d.sigma[k];
                fit.beta[i][k + 1] = bk;
                b0 -= bk * d.mu[k];
            }
            fit.beta[i][0] = b0;
        }
    }, threads);

    for (size_t i = 0; i < n; ++i)
        if (!failures[i].empty()) throw ValidationError(failures[i]);

    fit.trace_s = 0.0;
    fit.rss = 0.0;
    for (size_t i = 0; i < n; ++i) {
        fit.trace_s += fit.hat_diag[i];
        fit.rss += fit.residuals[i] * fit.residuals[i];
    }
    const double dn = double(n);
    const double denom = dn - 2.0 - fit.trace_s;
    if (denom > 0.0) {
        const double sigma2 = fit.rss / dn;
        fit.aicc = dn * std::log(sigma2) + dn * std::log(2.0 * M_PI) +
                   dn * (dn + fit.trace_s) / denom;
    } else {
        fit.aicc = std::numeric_limits<double>::infinity();
    }
    return fit;
}

namespace {

// Tie order: a wider kernel smooths more, so prefer it on equal AICc.
bool wider(const KernelSpec& a, const KernelSpec& b) {
    if (a.mode != b.mode) return false;
    if (a.mode == KernelSpec::Mode::Fixed) return a.bandwidth > b.bandwidth;
    return a.k > b.k;
}

} // namespace

BandwidthSearch gwr_bandwidth_search(const FeatureTable& t, const std::string& y_col,
                                     const std::vector<std::string>& x_cols,
                                     const std::vector<KernelSpec>& candidates,
                                     int threads) {
    if (candidates.empty())
        throw ValidationError("bandwidth search: no candidates");
    BandwidthSearch out;
    out.aicc.assign(candidates.size(), std::numeric_limits<double>::infinity());
    bool any = false;
    for (size_t c = 0; c < candidates.size(); ++c) {
        try {
            out.aicc[c] = gwr_fit(t, y_col, x_cols, candidates[c], threads).aicc;
        } catch (const ValidationError&) {
            continue;
        }
        if (std::isnan(out.aicc[c]))
            out.aicc[c] = std::numeric_limits<double>::infinity();
        if (out.aicc[c] == std::numeric_limits<double>::infinity()) continue;
        if (!any || out.aicc[c] < out.aicc[out.best_index] ||
            (out.aicc[c] == out.aicc[out.best_index] &&
             wider(candidates[c], candidates[out.best_index]))) {
            out.best_index = c;
            out.best = candidates[c];
            any = true;
        }
    }
    if (!any)
        throw ValidationError("bandwidth search: every candidate failed or was singular");
    return out;
}

void write_gwr_csv(const GwrFit& fit, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw ValidationError("cannot open for writing: " + path);
    f << "zone_id,beta_intercept";
    for (const auto& name : fit.predictor_names) f << ",beta_" << name;
    f << ",local_r2\n";
    char buf[64];
    for (size_t i = 0; i < fit.zone_ids.size(); ++i) {
        f << fit.zone_ids[i];
        for (double b : fit.beta[i]) {
            std::snprintf(buf, sizeof buf, "%.10g", b);
            f << ',' << buf;
        }
        std::snprintf(buf, sizeof buf, "%.10g", fit.local_r2[i]);
        f << ',' << buf << '\n';
    }
    if (!f) throw ValidationError("write failed: " + path);
}

} // namespace heatlens
