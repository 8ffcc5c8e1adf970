#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "heatlens/gwboost.hpp"
#include "heatlens/rng.hpp"

using namespace heatlens;

namespace {

// Unit squares in a rows x cols block starting at (x0, 0), ids from id0.
ZoneSet block(size_t rows, size_t cols, double x0, int64_t id0) {
    ZoneSet zs;
    for (size_t r = 0; r < rows; ++r)
        for (size_t c = 0; c < cols; ++c) {
            Zone z;
            z.id = id0 + int64_t(r * cols + c);
            const double x = x0 + double(c), y = double(r);
            z.rings = {{{x, y}, {x + 1.0, y}, {x + 1.0, y + 1.0}, {x, y + 1.0}, {x, y}}};
            zs.zones.push_back(z);
        }
    return zs;
}

FeatureTable table_for(const ZoneSet& zs, const std::vector<double>& x0,
                       const std::vector<double>& y) {
    FeatureTable t;
    t.columns = {"x0", "target"};
    for (size_t i = 0; i < zs.zones.size(); ++i) {
        t.zone_ids.push_back(zs.zones[i].id);
        auto c = zone_centroid(zs.zones[i]);
        t.cx.push_back(c.first);
        t.cy.push_back(c.second);
        t.rows.push_back({x0[i], y[i]});
    }
    return t;
}

// West block (ids 1..20) follows 3*x0, east block (ids 21..40) follows -3*x0.
struct TwoRegime {
    ZoneSet zs;
    FeatureTable t;
    std::vector<double> x0, y;
};

TwoRegime two_regime() {
    TwoRegime d;
    d.zs = block(2, 10, 0.0, 1);
    ZoneSet east = block(2, 10, 100.0, 21);
    d.zs.zones.insert(d.zs.zones.end(), east.zones.begin(), east.zones.end());
    Rng rng(42u, 0u);
    for (size_t i = 0; i < 40; ++i) d.x0.push_back(rng.uniform(0.0, 10.0));
    for (size_t i = 0; i < 40; ++i) {
        const double f = i < 20 ? 3.0 * d.x0[i] : -3.0 * d.x0[i];
        d.y.push_back(f + 0.05 * rng.normal());
    }
    d.t = table_for(d.zs, d.x0, d.y);
    return d;
}

FitConfig gw_config(int trees, double lr, int depth) {
    FitConfig c;
    c.n_estimators = trees;
    c.learning_rate = lr;
    c.max_depth = depth;
    c.subsample = 1.0;
    c.seed = 31;
    return c;
}

// Continuous 4x20 strip whose left and right halves follow opposite slopes;
// no spatial gap, so wide kernels mix the regimes.
TwoRegime seam() {
    TwoRegime d;
    d.zs = block(4, 20, 0.0, 1);
    Rng rng(21u, 0u);
    for (size_t i = 0; i < 80; ++i) d.x0.push_back(rng.uniform(0.0, 10.0));
    for (size_t i = 0; i < 80; ++i) {
        const double f = (i % 20) < 10 ? 3.0 * d.x0[i] : -3.0 * d.x0[i];
        d.y.push_back(f + 0.05 * rng.normal());
    }
    d.t = table_for(d.zs, d.x0, d.y);
    return d;
}

double plain_r2(const std::vector<double>& y, const std::vector<double>& f, size_t b,
                size_t e) {
    double mean = 0.0;
    for (size_t i = b; i < e; ++i) mean += y[i];
    mean /= double(e - b);
    double rss = 0.0, tss = 0.0;
    for (size_t i = b; i < e; ++i) {
        rss += (y[i] - f[i]) * (y[i] - f[i]);
        tss += (y[i] - mean) * (y[i] - mean);
    }
    return 1.0 - rss / tss;
}

Matrix features_of(const TwoRegime& d) {
    Matrix x;
    for (double v : d.x0) x.push_back({v});
    return x;
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream f(p);
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

} // namespace

TEST_CASE("uniform weights reproduce the global model at every location") {
    TwoRegime d = two_regime();
    FitConfig c = gw_config(40, 0.2, 2);
    c.subsample = 0.8;

    LocalModelSet set = gw_fit(d.t, "target", {"x0"}, KernelSpec::adaptive(18), c, true);
    FitResult global = fit_boosted(features_of(d), d.y, {}, {"x0"}, c);

    REQUIRE(set.locals.size() == 40);
    auto gp = predict(global.model, features_of(d));
    for (const auto& lm : set.locals) {
        auto lp = predict(lm.model, features_of(d));
        for (size_t i = 0; i < lp.size(); ++i) CHECK(std::abs(lp[i] - gp[i]) < 1e-12);
        CHECK(lm.neighbors.size() == 40);
        CHECK(lm.weights == std::vector<double>(40, 1.0));
    }
    CHECK(set.locals[7].prediction == gp[7]);
}

TEST_CASE("kernel weights have compact support over the k nearest zones") {
    TwoRegime d = two_regime();
    LocalModelSet set =
        gw_fit(d.t, "target", {"x0"}, KernelSpec::adaptive(18), gw_config(20, 0.3, 2));

    for (size_t i = 0; i < set.locals.size(); ++i) {
        const LocalModel& lm = set.locals[i];
        CHECK(lm.weights[i] == 1.0); // self sits at distance zero
        CHECK(lm.bandwidth > 0.0);
        size_t positive = 0;
        for (size_t j = 0; j < 40; ++j) {
            const double dist = std::hypot(d.t.cx[j] - d.t.cx[i], d.t.cy[j] - d.t.cy[i]);
            if (dist >= lm.bandwidth) CHECK(lm.weights[j] == 0.0);
            if (lm.weights[j] > 0.0) ++positive;
        }
        CHECK(positive <= 17); // the k-th neighbor lands exactly on the bandwidth
        CHECK(std::is_sorted(lm.neighbors.begin(), lm.neighbors.end()));
        CHECK(lm.neighbors.size() == 18);
        // Neighborhoods never cross the 90-unit gap between the regimes.
        for (size_t j : lm.neighbors) CHECK((i < 20) == (j < 20));
    }
}

TEST_CASE("local models outperform the global model under non-stationarity") {
    TwoRegime d = two_regime();
    FitConfig c = gw_config(80, 0.3, 2);
    c.min_child_weight = 2.0; // keeps the global model from memorizing rows
    LocalModelSet set = gw_fit(d.t, "target", {"x0"}, KernelSpec::adaptive(18), c);
    FitResult global = fit_boosted(features_of(d), d.y, {}, {"x0"}, c);

    const double gw_west = plain_r2(d.y, global.fitted, 0, 20);
    const double gw_east = plain_r2(d.y, global.fitted, 20, 40);
    double min_west = 1.0, min_east = 1.0;
    for (size_t i = 0; i < 40; ++i) {
        CHECK(set.locals[i].local_r2 <= 1.0);
        (i < 20 ? min_west : min_east) =
            std::min(i < 20 ? min_west : min_east, set.locals[i].local_r2);
    }
    CHECK(min_west > gw_west);
    CHECK(min_east > gw_east);

    // Counting zones above a rising threshold can only shrink the set.
    auto above = [&](double thr) {
        size_t c2 = 0;
        for (const auto& lm : set.locals)
            if (lm.local_r2 > thr) ++c2;
        return c2;
    };
    CHECK(above(0.0) >= above(0.5));
    CHECK(above(0.5) >= above(0.9));

    // Residual autocorrelation drops relative to the global model.
    SpatialWeights w = build_weights(d.zs, WeightScheme::Rook, true);
    MoranResult gw_m = residual_moran(set, w, 0, 1u);
    std::vector<double> gres(40);
    double mean = 0.0;
    for (size_t i = 0; i < 40; ++i) {
        gres[i] = d.y[i] - global.fitted[i];
        mean += gres[i];
    }
    mean /= 40.0;
    double var = 0.0;
    for (double r : gres) var += (r - mean) * (r - mean);
    for (double& r : gres) r = (r - mean) / std::sqrt(var / 40.0);
    MoranResult global_m = global_moran(gres, w, 0, 1u);
    CHECK(std::abs(gw_m.moran_i) < std::abs(global_m.moran_i));
}

TEST_CASE("same training set with different weights still differs by location") {
    TwoRegime d = two_regime();
    LocalModelSet set =
        gw_fit(d.t, "target", {"x0"}, KernelSpec::adaptive(40), gw_config(30, 0.3, 2));
    for (const auto& lm : set.locals) CHECK(lm.neighbors.size() == 40);
    const double probe = predict_one(set.locals[0].model, {5.0});
    const double far_side = predict_one(set.locals[39].model, {5.0});
    CHECK(probe != far_side);
    CHECK(probe > 0.0);    // west regime slope +3
    CHECK(far_side < 0.0); // east regime slope -3
}

TEST_CASE("gw_fit is reproducible across runs and thread counts") {
    TwoRegime d = two_regime();
    FitConfig c = gw_config(25, 0.3, 2);
    c.subsample = 0.8;
    LocalModelSet a = gw_fit(d.t, "target", {"x0"}, KernelSpec::adaptive(14), c, false, 1);
    LocalModelSet b = gw_fit(d.t, "target", {"x0"}, KernelSpec::adaptive(14), c, false, 4);
    for (size_t i = 0; i < a.locals.size(); ++i) {
        CHECK(a.locals[i].prediction == b.locals[i].prediction);
        CHECK(a.locals[i].local_r2 == b.locals[i].local_r2);
        CHECK(a.locals[i].std_residual == b.locals[i].std_residual);
        CHECK(a.locals[i].bandwidth == b.locals[i].bandwidth);
    }
    CHECK(a.index_of(21) == 20);
    CHECK_THROWS_AS(a.index_of(999), ValidationError);
}

TEST_CASE("gw_fit validation") {
    TwoRegime d = two_regime();
    FitConfig c = gw_config(10, 0.3, 2);
    CHECK_THROWS_WITH_AS(gw_fit(d.t, "target", {"x0"}, KernelSpec::fixed(5.0), c),
                         doctest::Contains("adaptive"), ValidationError);
    CHECK_THROWS_WITH_AS(gw_fit(d.t, "target", {"x0"}, KernelSpec::adaptive(5), c),
                         doctest::Contains("at least 10"), ValidationError);
    CHECK_THROWS_WITH_AS(gw_fit(d.t, "target", {"x0"}, KernelSpec::adaptive(41), c),
                         doctest::Contains("exceeds"), ValidationError);
    CHECK_THROWS_WITH_AS(gw_fit(d.t, "target", {}, KernelSpec::adaptive(18), c),
                         doctest::Contains("no feature columns"), ValidationError);

    FeatureTable bad = d.t;
    bad.rows[4][0] = FeatureTable::missing();
    CHECK_THROWS_WITH_AS(gw_fit(bad, "target", {"x0"}, KernelSpec::adaptive(18), c),
                         doctest::Contains("zone 5"), ValidationError);

    // All zones stacked on one point: the k-th neighbor sits at distance 0.
    FeatureTable stacked = d.t;
    for (size_t i = 0; i < stacked.cx.size(); ++i) {
        stacked.cx[i] = 1.0;
        stacked.cy[i] = 2.0;
    }
    CHECK_THROWS_WITH_AS(gw_fit(stacked, "target", {"x0"}, KernelSpec::adaptive(18), c),
                         doctest::Contains("coincident"), ValidationError);
}

TEST_CASE("leave-one-out bandwidth selection") {
    // Stationary field: the largest candidate wins.
    ZoneSet zs = block(3, 10, 0.0, 1);
    Rng rng(11u, 0u);
    std::vector<double> x0, y;
    for (size_t i = 0; i < 30; ++i) x0.push_back(rng.uniform(0.0, 10.0));
    for (size_t i = 0; i < 30; ++i) y.push_back(2.0 * x0[i] + 0.2 * rng.normal());
    FeatureTable t = table_for(zs, x0, y);
    FitConfig c = gw_config(60, 0.3, 2);
    c.min_child_weight = 2.0;

    LooResult stat = loo_bandwidth(t, "target", {"x0"}, {10, 29}, c);
    CHECK(stat.best_k == 29);
    CHECK(stat.rmse[1] < stat.rmse[0]);

    // Non-stationary field: a within-regime k beats the widest one.
    TwoRegime d = seam();
    LooResult split = loo_bandwidth(d.t, "target", {"x0"}, {25, 79}, gw_config(60, 0.3, 2));
    CHECK(split.best_k == 25);
    CHECK(split.best_k < 79);

    LooResult single = loo_bandwidth(t, "target", {"x0"}, {15}, c);
    CHECK(single.best_k == 15);
    CHECK(single.best_index == 0);
    CHECK(std::isfinite(single.rmse[0]));

    // Oversized candidates are skipped but stay in the trace.
    LooResult skipped = loo_bandwidth(t, "target", {"x0"}, {60, 15}, c);
    CHECK(std::isnan(skipped.rmse[0]));
    CHECK(skipped.best_k == 15);
    CHECK(skipped.best_index == 1);

    CHECK_THROWS_WITH_AS(loo_bandwidth(t, "target", {"x0"}, {60, 61}, c),
                         doctest::Contains("skipped"), ValidationError);
    CHECK_THROWS_WITH_AS(loo_bandwidth(t, "target", {"x0"}, {}, c),
                         doctest::Contains("candidates"), ValidationError);
    CHECK_THROWS_WITH_AS(loo_bandwidth(t, "target", {"x0"}, {5, 20}, c),
                         doctest::Contains("at least 10"), ValidationError);
}

TEST_CASE("pooled held-out metrics") {
    ZoneSet zs = block(6, 10, 0.0, 1);
    Rng rng(7u, 0u);
    std::vector<double> x0, y;
    for (size_t i = 0; i < 60; ++i) x0.push_back(rng.uniform(0.0, 10.0));
    for (size_t i = 0; i < 60; ++i) y.push_back(x0[i] > 5.0 ? 10.0 : 0.0);
    FeatureTable t = table_for(zs, x0, y);

    // Small steps keep the held-out accumulator tight around the ensemble.
    FitConfig c = gw_config(500, 0.02, 2);
    c.subsample = 0.6;
    LocalModelSet set = gw_fit(t, "target", {"x0"}, KernelSpec::adaptive(40), c);
    FoldMetrics m = global_oob(set);
    CHECK(m.r2 >= 0.95);
    CHECK(m.rmse < 2.0);
    CHECK(m.mae <= m.rmse);

    // Shuffled labels leave nothing to learn out of bag.
    std::vector<double> ys = y;
    Rng shuffler(99u, 0u);
    shuffler.shuffle(ys);
    FeatureTable ts = table_for(zs, x0, ys);
    FoldMetrics ms = global_oob(gw_fit(ts, "target", {"x0"}, KernelSpec::adaptive(40), c));
    CHECK(ms.r2 <= 0.1);

    FitConfig full = c;
    full.subsample = 1.0;
    LocalModelSet nosub = gw_fit(t, "target", {"x0"}, KernelSpec::adaptive(40), full);
    CHECK_THROWS_WITH_AS(global_oob(nosub), doctest::Contains("no OOB instances"),
                         ValidationError);
}

TEST_CASE("residual autocorrelation statistics") {
    ZoneSet zs = block(6, 5, 0.0, 1);
    SpatialWeights w = build_weights(zs, WeightScheme::Queen, true);

    LocalModelSet set;
    set.targets.assign(30, 0.0);
    set.locals.assign(30, LocalModel{});
    for (size_t i = 0; i < 30; ++i) set.locals[i].zone_id = zs.zones[i].id;

    // White-noise residuals stay insignificant for most seeds.
    int calm = 0;
    for (int s = 0; s < 100; ++s) {
        Rng noise(5000u + uint64_t(s), 3u);
        for (auto& lm : set.locals) lm.std_residual = noise.normal();
        MoranResult m = residual_moran(set, w, 199, 71u);
        if (m.p_value > 0.05) ++calm;
    }
    CHECK(calm >= 90);

    // A split-field residual pattern is flagged.
    for (size_t i = 0; i < 30; ++i)
        set.locals[i].std_residual = i < 15 ? 1.0 : -1.0;
    MoranResult hot = residual_moran(set, w, 999, 5u);
    CHECK(hot.moran_i > 0.5);
    CHECK(hot.p_value <= 0.05);

    // Every weights row must resolve to a fitted zone.
    set.locals[3].zone_id = 999;
    CHECK_THROWS_AS(residual_moran(set, w, 99, 1u), ValidationError);
}

TEST_CASE("diagnostic exports") {
    namespace fs = std::filesystem;
    TwoRegime d = two_regime();
    FitConfig c = gw_config(10, 0.3, 1);
    LocalModelSet set = gw_fit(d.t, "target", {"x0"}, KernelSpec::adaptive(12), c);

    const fs::path dir = "gwboost_diag";
    fs::remove_all(dir);
    write_local_diagnostics(set, dir.string());
    const std::string r2 = slurp(dir / "local_r2.csv");
    const std::string sr = slurp(dir / "std_residuals.csv");
    CHECK(r2.rfind("zone_id,local_r2\n", 0) == 0);
    CHECK(sr.rfind("zone_id,std_residual\n", 0) == 0);
    CHECK(std::count(r2.begin(), r2.end(), '\n') == 41);
    size_t models = 0;
    for (auto& e : fs::directory_iterator(dir / "models")) {
        (void)e;
        ++models;
    }
    CHECK(models == 40);
    BoostedModel m = load_model((dir / "models" / "zone_7.json").string());
    auto direct = predict_one(set.locals[set.index_of(7)].model, {4.0});
    CHECK(predict_one(m, {4.0}) == direct);
    fs::remove_all(dir);

    ZoneSet zs = block(3, 10, 0.0, 1);
    Rng rng(12u, 0u);
    std::vector<double> x0, y;
    for (size_t i = 0; i < 30; ++i) x0.push_back(rng.uniform(0.0, 10.0));
    for (size_t i = 0; i < 30; ++i) y.push_back(x0[i] + 0.1 * rng.normal());
    FeatureTable t = table_for(zs, x0, y);
    FitConfig lc = gw_config(20, 0.3, 1);
    lc.min_child_weight = 2.0;
    LooResult loo = loo_bandwidth(t, "target", {"x0"}, {60, 15}, lc);
    write_bandwidth_trace(loo, "trace.csv");
    const std::string trace = slurp("trace.csv");
    CHECK(trace.rfind("k,rmse\n", 0) == 0);
    CHECK(trace.find("60,\n") != std::string::npos);
    CHECK(trace.find("15,") != std::string::npos);
    fs::remove("trace.csv");
}
