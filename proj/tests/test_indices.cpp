#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "rsii/indices.hpp"

using namespace rsii;

namespace {

std::vector<LocalFrame> z_frames(std::size_t n) {
    return std::vector<LocalFrame>(n, LocalFrame{{0, 0, 1}, {1, 0, 0}, {0, 1, 0}});
}

SurfaceField make_field(const char* name, const char* unit, std::vector<double> values) {
    SurfaceField f(name, unit, values.size());
    f.values = std::move(values);
    return f;
}

}  // namespace

TEST_CASE("displacement decomposition") {
    auto frames = z_frames(3);

    SUBCASE("parallel to the normal") {
        auto d = normal_displacement({{0, 0, 0.8}, {0, 0, -0.5}, {0, 0, 0}}, frames);
        CHECK(d.normal_mm.values[0] == doctest::Approx(0.8));
        CHECK(d.normal_mm.values[1] == doctest::Approx(-0.5));
        CHECK(d.tangential_mm.values[0] == doctest::Approx(0.0));
    }
    SUBCASE("orthogonal to the normal") {
        auto d = normal_displacement({{0.6, 0.0, 0.0}, {0, 0.3, 0}, {0.3, 0.4, 0.0}},
                                     frames);
        for (double v : d.normal_mm.values) CHECK(v == doctest::Approx(0.0));
        CHECK(d.tangential_mm.values[2] == doctest::Approx(0.5));
    }
    SUBCASE("count mismatch throws") {
        CHECK_THROWS_AS(normal_displacement({{0, 0, 0}}, frames), std::runtime_error);
    }
}

TEST_CASE("circumferential strain") {
    SUBCASE("zero displacement gives zero strain") {
        auto un = make_field("normal_displacement", "mm", {0.0, 0.0});
        auto strain = circumferential_strain(un, {25.0, 30.0});
        CHECK(strain.values[0] == 0.0);
        CHECK(strain.values[1] == 0.0);
    }
    SUBCASE("hand example: 0.75 mm over 25 mm is 3 percent") {
        auto un = make_field("normal_displacement", "mm", {0.75});
        auto strain = circumferential_strain(un, {25.0});
        CHECK(strain.values[0] == doctest::Approx(0.03).epsilon(1e-12));
    }
    SUBCASE("non-positive radius throws") {
        auto un = make_field("normal_displacement", "mm", {0.5});
        CHECK_THROWS_AS(circumferential_strain(un, {0.0}), std::runtime_error);
    }
    SUBCASE("near-flat vertices are masked") {
        auto un = make_field("normal_displacement", "mm", {0.5, 0.5});
        std::vector<uint8_t> flat{0, 1};
        auto strain = circumferential_strain(un, {25.0, 25.0}, &flat);
        CHECK(strain.valid[0] == 1);
        CHECK(strain.valid[1] == 0);
    }
}

TEST_CASE("structural integrity index") {
    SUBCASE("zero strain gives zero SII") {
        auto sii = structural_integrity_index(make_field("strain_circ", "1", {0.0}),
                                              make_field("tension", "N/m", {325.0}));
        CHECK(sii.values[0] == 0.0);
    }
    SUBCASE("hand example: 3 percent over 325 N/m") {
        auto sii = structural_integrity_index(make_field("strain_circ", "1", {0.03}),
                                              make_field("tension", "N/m", {325.0}));
        // 9.23e-5 m/N = 0.0923 mm/N
        CHECK(sii.values[0] * 1e3 == doctest::Approx(0.0923).epsilon(1e-3));
    }
    SUBCASE("sign follows the strain") {
        auto sii = structural_integrity_index(
            make_field("strain_circ", "1", {0.02, -0.02}),
            make_field("tension", "N/m", {300.0, 300.0}));
        CHECK(sii.values[0] > 0.0);
        CHECK(sii.values[1] < 0.0);
    }
    SUBCASE("non-positive tension masks the vertex") {
        auto sii = structural_integrity_index(
            make_field("strain_circ", "1", {0.02, 0.02}),
            make_field("tension", "N/m", {300.0, -5.0}));
        CHECK(sii.valid[0] == 1);
        CHECK(sii.valid[1] == 0);
    }
}

TEST_CASE("relative SII") {
    SUBCASE("uniform SII maps to RSII = 1") {
        auto rsii = relative_sii(make_field("sii", "m/N", {2e-4, 2e-4, 2e-4}));
        for (double v : rsii.values) CHECK(v == doctest::Approx(1.0).epsilon(1e-12));
    }
    SUBCASE("hand example (1,-1,2,-2)e-4") {
        auto rsii = relative_sii(make_field("sii", "m/N", {1e-4, -1e-4, 2e-4, -2e-4}));
        CHECK(rsii.values[0] == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
        CHECK(rsii.values[1] == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
        CHECK(rsii.values[2] == doctest::Approx(4.0 / 3.0).epsilon(1e-12));
        CHECK(rsii.values[3] == doctest::Approx(4.0 / 3.0).epsilon(1e-12));
    }
    SUBCASE("mean of RSII is exactly 1") {
        std::mt19937 rng(5);
        std::uniform_real_distribution<double> dist(-3e-4, 3e-4);
        std::vector<double> values(1000);
        for (auto& v : values) v = dist(rng);
        auto rsii = relative_sii(make_field("sii", "m/N", std::move(values)));
        double mean = 0.0;
        for (double v : rsii.values) mean += v;
        mean /= rsii.values.size();
        CHECK(std::abs(mean - 1.0) <= 1e-12);
        for (double v : rsii.values) CHECK(v >= 0.0);
    }
    SUBCASE("all-zero SII throws") {
        CHECK_THROWS_AS(relative_sii(make_field("sii", "m/N", {0.0, 0.0})),
                        std::runtime_error);
    }
    SUBCASE("signed variant reproduces the printed form") {
        RsiiOptions opts;
        opts.signed_variant = true;
        auto rsii = relative_sii(make_field("sii", "m/N", {3e-4, 1e-4}), opts);
        CHECK(rsii.values[0] == doctest::Approx(1.5));
        CHECK(rsii.values[1] == doctest::Approx(0.5));
    }
}

TEST_CASE("percentile convention") {
    SUBCASE("1..100 gives 99.01 at the 99th percentile") {
        std::vector<double> values(100);
        for (int i = 0; i < 100; ++i) values[i] = i + 1.0;
        std::vector<uint8_t> valid(100, 1);
        CHECK(percentile_abs(values, valid, 99.0) == doctest::Approx(99.01).epsilon(1e-12));
    }
    SUBCASE("constant field returns its magnitude") {
        std::vector<double> values(10, -4.2);
        std::vector<uint8_t> valid(10, 1);
        CHECK(percentile_abs(values, valid, 99.0) == doctest::Approx(4.2));
    }
    SUBCASE("permutation invariant and positively homogeneous") {
        std::mt19937 rng(6);
        std::uniform_real_distribution<double> dist(-10.0, 10.0);
        std::vector<double> values(257);
        for (auto& v : values) v = dist(rng);
        std::vector<uint8_t> valid(values.size(), 1);
        double base = percentile_abs(values, valid, 99.0);

        std::vector<double> shuffled = values;
        std::shuffle(shuffled.begin(), shuffled.end(), rng);
        CHECK(percentile_abs(shuffled, valid, 99.0) == doctest::Approx(base).epsilon(1e-15));

        std::vector<double> scaled = values;
        for (auto& v : scaled) v *= 3.5;
        CHECK(percentile_abs(scaled, valid, 99.0) ==
              doctest::Approx(3.5 * base).epsilon(1e-12));
    }
    SUBCASE("masked vertices do not contribute") {
        std::vector<double> values{1.0, 2.0, 1000.0};
        std::vector<uint8_t> valid{1, 1, 0};
        CHECK(percentile_abs(values, valid, 99.0) <= 2.0);
    }
}

TEST_CASE("field stats and report") {
    auto tension = make_field("tension_max_principal", "N/m", {300.0, 310.0, 320.0, 330.0});
    auto strain = make_field("strain_circ", "1", {0.03, 0.031, 0.029, 0.030});
    auto sii = structural_integrity_index(strain, tension);
    auto rsii = relative_sii(sii);
    PercentileReport r = percentile_report(tension, strain, sii, rsii);
    CHECK(r.total_vertices == 4);
    CHECK(r.tension.mean == doctest::Approx(315.0));
    CHECK(r.strain.p99_abs > 0.030);
    CHECK(r.rsii.masked == 0);
    CHECK_FALSE(r.degenerate_rsii);
}
