#include <doctest.h>

#include <cmath>
#include <cstring>

#include "heatlens/rng.hpp"
#include "heatlens/spatial_stats.hpp"
#include "heatlens/weights.hpp"
#include "oracles.hpp"

using namespace heatlens;

namespace {

Zone square(int64_t id, double x, double y, double side = 1.0) {
    Zone z;
    z.id = id;
    z.rings = {{{x, y},
                {x + side, y},
                {x + side, y + side},
                {x, y + side},
                {x, y}}};
    return z;
}

// rows x cols unit squares, ids row-major from 1. Shared boundaries use
// identical vertex coordinates, so contiguity matching is exact.
ZoneSet lattice(int rows, int cols) {
    ZoneSet zs;
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c)
            zs.zones.push_back(square(int64_t(r) * cols + c + 1, double(c), double(r)));
    return zs;
}

std::vector<std::vector<double>> dense(const SpatialWeights& w) {
    std::vector<std::vector<double>> m(w.n, std::vector<double>(w.n, 0.0));
    for (size_t i = 0; i < w.n; ++i)
        for (const auto& [j, wij] : w.rows[i]) m[i][j] = wij;
    return m;
}

} // namespace

TEST_CASE("contiguity weights on a 2x2 block of squares") {
    ZoneSet zs = lattice(2, 2);

    SpatialWeights rook = build_weights(zs, WeightScheme::Rook, false);
    REQUIRE(rook.n == 4);
    for (size_t i = 0; i < 4; ++i) CHECK(rook.rows[i].size() == 2);
    CHECK(rook.s0 == doctest::Approx(8.0));
    CHECK(rook.ids == std::vector<int64_t>{1, 2, 3, 4});

    SpatialWeights queen = build_weights(zs, WeightScheme::Queen, false);
    for (size_t i = 0; i < 4; ++i) CHECK(queen.rows[i].size() == 3);
    CHECK(queen.s0 == doctest::Approx(12.0));

    // Binary structure is symmetric.
    auto dq = dense(queen);
    for (size_t i = 0; i < 4; ++i)
        for (size_t j = 0; j < 4; ++j) CHECK(dq[i][j] == dq[j][i]);

    // Row standardization: every nonempty row sums to 1.
    SpatialWeights std_q = build_weights(zs, WeightScheme::Queen, true);
    for (size_t i = 0; i < 4; ++i) {
        double s = 0.0;
        for (const auto& [j, wij] : std_q.rows[i]) s += wij;
        CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
    }
    CHECK(std_q.s0 == doctest::Approx(4.0));

    CHECK(std_q.index_of(3) == 2);
    CHECK_THROWS_AS(std_q.index_of(99), ValidationError);
}

TEST_CASE("offshore island handling") {
    ZoneSet zs;
    zs.zones.push_back(square(1, 0.0, 0.0));
    zs.zones.push_back(square(2, 1.0, 0.0));
    zs.zones.push_back(square(3, 10.0, 10.0));

    SpatialWeights queen = build_weights(zs, WeightScheme::Queen, false);
    CHECK(queen.rows[2].empty());

    // Hybrid links the island to its nearest centroid and mirrors the link.
    SpatialWeights hy = build_weights(zs, WeightScheme::QueenNnHybrid, true);
    REQUIRE(hy.rows[2].size() == 1);
    CHECK(hy.rows[2][0].first == 1); // zone 2 sits closer than zone 1
    CHECK(hy.rows[2][0].second == doctest::Approx(1.0));
    bool mirrored = false;
    for (const auto& [j, wij] : hy.rows[1])
        if (j == 2) {
            mirrored = true;
            CHECK(wij == doctest::Approx(0.5));
        }
    CHECK(mirrored);

    // Fully disjoint zones without the nn fix cannot form weights.
    ZoneSet apart;
    apart.zones.push_back(square(1, 0.0, 0.0));
    apart.zones.push_back(square(2, 5.0, 0.0));
    apart.zones.push_back(square(3, 0.0, 5.0));
    CHECK_THROWS_WITH_AS(build_weights(apart, WeightScheme::Rook, true),
                         doctest::Contains("disconnected weights"), ValidationError);
    SpatialWeights fixed = build_weights(apart, WeightScheme::QueenNnHybrid, false);
    for (size_t i = 0; i < 3; ++i) CHECK(!fixed.rows[i].empty());

    ZoneSet tiny;
    tiny.zones.push_back(square(1, 0.0, 0.0));
    CHECK_THROWS_AS(build_weights(tiny, WeightScheme::Queen, false), ValidationError);

    ZoneSet dup;
    dup.zones.push_back(square(7, 0.0, 0.0));
    dup.zones.push_back(square(7, 1.0, 0.0));
    CHECK_THROWS_AS(build_weights(dup, WeightScheme::Queen, false), ValidationError);

    CHECK(parse_weight_scheme("queen_nn_hybrid") == WeightScheme::QueenNnHybrid);
    CHECK_THROWS_AS(parse_weight_scheme("bishop"), ValidationError);
}

TEST_CASE("global autocorrelation anchors on the 4x4 lattice") {
    ZoneSet zs = lattice(4, 4);
    SpatialWeights w = build_weights(zs, WeightScheme::Rook, true);

    // Checkerboard: every neighbor carries the opposite value.
    std::vector<double> check_x(16), half_x(16);
    for (int r = 0; r < 4; ++r)
        for (int c = 0; c < 4; ++c) {
            check_x[size_t(r * 4 + c)] = (r + c) % 2 ? 1.0 : 0.0;
            half_x[size_t(r * 4 + c)] = c < 2 ? 1.0 : 0.0;
        }

    MoranResult mc = global_moran(check_x, w, 999, 42u);
    CHECK(std::abs(mc.moran_i - (-1.0)) < 1e-12);
    CHECK(mc.expected_i == doctest::Approx(-1.0 / 15.0));
    CHECK(mc.p_value <= 0.05);
    CHECK(mc.moran_i == doctest::Approx(oracle::naive_moran(check_x, dense(w))).epsilon(1e-12));

    MoranResult mh = global_moran(half_x, w, 999, 42u);
    CHECK(std::abs(mh.moran_i - 17.0 / 24.0) < 1e-12);
    CHECK(mh.p_value <= 0.05);
    CHECK(mh.moran_i == doctest::Approx(oracle::naive_moran(half_x, dense(w))).epsilon(1e-12));
}

TEST_CASE("global autocorrelation matches the direct double sum") {
    ZoneSet zs = lattice(5, 6);
    Rng rng(2026u, 4u);
    std::vector<double> x(30);
    for (auto& v : x) v = rng.uniform(-3.0, 9.0);

    for (bool standardize : {false, true}) {
        SpatialWeights w = build_weights(zs, WeightScheme::Queen, standardize);
        MoranResult m = global_moran(x, w, 0, 1u);
        CHECK(m.moran_i == doctest::Approx(oracle::naive_moran(x, dense(w))).epsilon(1e-12));
        CHECK(std::isnan(m.p_value));
    }
}

TEST_CASE("global autocorrelation is affine invariant") {
    ZoneSet zs = lattice(4, 4);
    SpatialWeights w = build_weights(zs, WeightScheme::Queen, true);
    Rng rng(77u, 1u);
    std::vector<double> x(16), y(16);
    for (size_t i = 0; i < 16; ++i) {
        x[i] = rng.normal();
        y[i] = 3.0 * x[i] + 7.0;
    }
    MoranResult mx = global_moran(x, w, 99, 5u);
    MoranResult my = global_moran(y, w, 99, 5u);
    CHECK(std::abs(mx.moran_i - my.moran_i) < 1e-12);
}

TEST_CASE("permutation p values are calibrated under the null") {
    ZoneSet zs = lattice(4, 4);
    SpatialWeights w = build_weights(zs, WeightScheme::Rook, true);
    int calm = 0;
    for (int s = 0; s < 100; ++s) {
        Rng rng(9000u + uint64_t(s), 2u);
        std::vector<double> x(16);
        for (auto& v : x) v = rng.normal();
        MoranResult m = global_moran(x, w, 199, uint64_t(s));
        if (m.p_value > 0.05) ++calm;
    }
    CHECK(calm >= 90);
}

TEST_CASE("permutation results are reproducible across runs and threads") {
    ZoneSet zs = lattice(5, 5);
    SpatialWeights w = build_weights(zs, WeightScheme::Queen, true);
    Rng rng(11u, 6u);
    std::vector<double> x(25);
    for (auto& v : x) v = rng.uniform(0.0, 1.0);

    MoranResult a = global_moran(x, w, 199, 42u, 1);
    MoranResult b = global_moran(x, w, 199, 42u, 4);
    MoranResult c = global_moran(x, w, 199, 42u, 4);
    CHECK(std::memcmp(&a.p_value, &b.p_value, sizeof(double)) == 0);
    CHECK(std::memcmp(&b.p_value, &c.p_value, sizeof(double)) == 0);
    CHECK(a.moran_i == b.moran_i);

    auto la = lisa(x, w, 199, 42u, 0.05, 1);
    auto lb = lisa(x, w, 199, 42u, 0.05, 4);
    REQUIRE(la.size() == lb.size());
    for (size_t i = 0; i < la.size(); ++i) {
        CHECK(std::memcmp(&la[i].local_i, &lb[i].local_i, sizeof(double)) == 0);
        CHECK(std::memcmp(&la[i].p_value, &lb[i].p_value, sizeof(double)) == 0);
        CHECK(la[i].category == lb[i].category);
    }
}

TEST_CASE("local components sum to n times the global statistic") {
    ZoneSet zs = lattice(4, 4);
    SpatialWeights w = build_weights(zs, WeightScheme::Queen, true);
    Rng rng(303u, 9u);
    std::vector<double> x(16);
    for (auto& v : x) v = rng.uniform(-5.0, 5.0);

    MoranResult m = global_moran(x, w, 0, 1u);
    auto rows = lisa(x, w, 0, 1u, 0.05);
    double sum = 0.0;
    for (const auto& r : rows) sum += r.local_i;
    CHECK(sum == doctest::Approx(16.0 * m.moran_i).epsilon(1e-9));
}

TEST_CASE("cluster and outlier classification") {
    // Solid 3x3 high block: its interior zone is a significant HH cluster.
    ZoneSet zs = lattice(8, 8);
    SpatialWeights w = build_weights(zs, WeightScheme::Queen, true);
    std::vector<double> x(64, 0.0);
    for (int r = 1; r <= 3; ++r)
        for (int c = 1; c <= 3; ++c) x[size_t(r * 8 + c)] = 10.0;
    auto rows = lisa(x, w, 999, 7u, 0.05);
    const size_t centre = 2 * 8 + 2;
    CHECK(rows[centre].p_value <= 0.05);
    CHECK(rows[centre].category == LisaCategory::HighHigh);
    CHECK(rows[centre].local_i > 0.0);

    // Spike inside the low half of a split field: significant HL outlier.
    ZoneSet zs6 = lattice(6, 6);
    SpatialWeights w6 = build_weights(zs6, WeightScheme::Queen, true);
    std::vector<double> y(36, 0.0);
    for (int r = 0; r < 6; ++r)
        for (int c = 0; c < 3; ++c) y[size_t(r * 6 + c)] = 8.0;
    const size_t spike = 2 * 6 + 4;
    y[spike] = 16.0;
    auto rows6 = lisa(y, w6, 999, 11u, 0.05);
    CHECK(rows6[spike].p_value <= 0.05);
    CHECK(rows6[spike].category == LisaCategory::HighLow);
    CHECK(rows6[spike].local_i < 0.0);

    // alpha = 0 can never be met: pseudo p is at least 1/(permutations+1).
    auto none = lisa(y, w6, 999, 11u, 0.0);
    for (const auto& r : none) CHECK(r.category == LisaCategory::NotSignificant);

    CHECK(std::string(lisa_category_name(LisaCategory::HighHigh)) == "HH");
    CHECK(std::string(lisa_category_name(LisaCategory::LowLow)) == "LL");
    CHECK(std::string(lisa_category_name(LisaCategory::HighLow)) == "HL");
    CHECK(std::string(lisa_category_name(LisaCategory::LowHigh)) == "LH");
    CHECK(std::string(lisa_category_name(LisaCategory::NotSignificant)) ==
          "not_significant");
}

TEST_CASE("autocorrelation input validation") {
    ZoneSet zs = lattice(2, 2);
    SpatialWeights w = build_weights(zs, WeightScheme::Queen, true);

    std::vector<double> flat(4, 5.0);
    CHECK_THROWS_WITH_AS(global_moran(flat, w, 99, 1u),
                         doctest::Contains("zero variance"), ValidationError);
    CHECK_THROWS_AS(lisa(flat, w, 99, 1u, 0.05), ValidationError);

    std::vector<double> wrong(3, 1.0);
    CHECK_THROWS_AS(global_moran(wrong, w, 99, 1u), ValidationError);

    std::vector<double> bad = {1.0, 2.0, NAN, 4.0};
    CHECK_THROWS_AS(global_moran(bad, w, 99, 1u), ValidationError);

    std::vector<double> ok = {1.0, 2.0, 3.0, 4.0};
    CHECK_THROWS_AS(global_moran(ok, w, -1, 1u), ValidationError);
    CHECK_THROWS_AS(lisa(ok, w, 99, 1u, 1.5), ValidationError);
}
