#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <fstream>
#include <random>

#include "rsii/volume.hpp"
#include "test_util.hpp"

using namespace rsii;
namespace fs = std::filesystem;

namespace {

VoxelGrid random_grid(std::array<int, 3> dims, std::array<double, 3> spacing,
                      uint32_t seed) {
    VoxelGrid g(dims, spacing, {0, 0, 0});
    std::mt19937 rng(seed);
    std::uniform_real_distribution<float> dist(-100.0f, 300.0f);
    for (auto& v : g.data) v = dist(rng);
    return g;
}

}  // namespace

TEST_CASE("hand-written header with all-zero raw loads as zeros") {
    auto dir = test_util::fresh_dir("mhd_zero");
    {
        std::ofstream h(dir / "zero.mhd");
        h << "NDims = 3\nDimSize = 4 4 4\nElementSpacing = 1 1 1\n"
          << "ElementType = MET_FLOAT\nElementDataFile = zero.raw\n";
        std::ofstream r(dir / "zero.raw", std::ios::binary);
        std::vector<float> zeros(64, 0.0f);
        r.write(reinterpret_cast<const char*>(zeros.data()), 64 * sizeof(float));
    }
    VoxelGrid g = load_volume((dir / "zero.mhd").string());
    CHECK(g.dims == std::array<int, 3>{4, 4, 4});
    CHECK(g.spacing == std::array<double, 3>{1, 1, 1});
    CHECK(g.data.size() == 64);
    for (float v : g.data) CHECK(v == 0.0f);
}

TEST_CASE("save/load round-trips bit-exactly") {
    auto dir = test_util::fresh_dir("mhd_roundtrip");

    SUBCASE("clinical-like dims and spacing") {
        VoxelGrid g = random_grid({72, 61, 83}, {1.18, 1.18, 1.00}, 7);
        g.origin = {-12.5, 3.25, 99.0};
        save_volume(g, (dir / "a.mhd").string());
        VoxelGrid r = load_volume((dir / "a.mhd").string());
        CHECK(r.dims == g.dims);
        CHECK(r.spacing == g.spacing);
        CHECK(r.origin == g.origin);
        CHECK(r.data == g.data);
    }
    SUBCASE("anisotropic spacing stays exact") {
        VoxelGrid g = random_grid({8, 8, 8}, {0.63, 0.63, 1.50}, 8);
        save_volume(g, (dir / "b.mhd").string());
        VoxelGrid r = load_volume((dir / "b.mhd").string());
        CHECK(r.spacing == std::array<double, 3>{0.63, 0.63, 1.50});
        CHECK(r.data == g.data);
    }
}

TEST_CASE("label volume with an invalid code is rejected") {
    auto dir = test_util::fresh_dir("mhd_badlabel");
    VoxelGrid g({4, 4, 4}, {1, 1, 1}, {0, 0, 0});
    g.data[13] = 3.0f;
    save_volume(g, (dir / "bad.mhd").string(), ElementType::UInt8);
    CHECK_THROWS_WITH_AS(load_labels((dir / "bad.mhd").string()),
                         doctest::Contains("invalid label code"), std::runtime_error);
}

TEST_CASE("writing into a missing directory fails") {
    VoxelGrid g({4, 4, 4}, {1, 1, 1}, {0, 0, 0});
    CHECK_THROWS_AS(save_volume(g, "/nonexistent_dir_xyz/out.mhd"), std::runtime_error);
}

TEST_CASE("missing and malformed headers are rejected") {
    auto dir = test_util::fresh_dir("mhd_bad");
    CHECK_THROWS_AS(load_volume((dir / "missing.mhd").string()), std::runtime_error);
    {
        std::ofstream h(dir / "broken.mhd");
        h << "DimSize 4 4 4\n";  // no '='
    }
    CHECK_THROWS_AS(load_volume((dir / "broken.mhd").string()), std::runtime_error);
    {
        std::ofstream h(dir / "nonascii.mhd");
        h << "NDims = 3\nDimSize = 4 4 4\nElement\xC3\xA9Type = MET_FLOAT\n";
    }
    CHECK_THROWS_WITH_AS(load_volume((dir / "nonascii.mhd").string()),
                         doctest::Contains("non-ASCII"), std::runtime_error);
}

TEST_CASE("unknown header keys are tolerated") {
    auto dir = test_util::fresh_dir("mhd_unknown");
    VoxelGrid g = random_grid({4, 4, 4}, {1, 1, 1}, 3);
    save_volume(g, (dir / "u.mhd").string());
    // append an unknown key
    {
        std::ofstream h(dir / "u.mhd", std::ios::app);
        h << "SomeVendorKey = 42\n";
    }
    VoxelGrid r = load_volume((dir / "u.mhd").string());
    CHECK(r.data == g.data);
}

TEST_CASE("trilinear sampling") {
    VoxelGrid g({4, 4, 4}, {2.0, 2.0, 2.0}, {1.0, -3.0, 0.5});

    SUBCASE("voxel center returns the stored value") {
        g.at(2, 1, 3) = 42.5f;
        auto p = g.voxel_center(2, 1, 3);
        CHECK(sample_trilinear(g, p) == doctest::Approx(42.5).epsilon(1e-12));
    }
    SUBCASE("midpoint between 0 and 1 along x gives 0.5") {
        g.at(1, 1, 1) = 0.0f;
        g.at(2, 1, 1) = 1.0f;
        auto p = g.voxel_center(1, 1, 1);
        p[0] += 0.5 * g.spacing[0];
        CHECK(sample_trilinear(g, p) == doctest::Approx(0.5).epsilon(1e-12));
    }
    SUBCASE("reproduces a linear ramp at interior points") {
        for (int k = 0; k < 4; ++k)
            for (int j = 0; j < 4; ++j)
                for (int i = 0; i < 4; ++i)
                    g.at(i, j, k) = static_cast<float>(g.voxel_center(i, j, k)[0]);
        std::mt19937 rng(11);
        std::uniform_real_distribution<double> t(0.05, 0.95);
        for (int trial = 0; trial < 50; ++trial) {
            std::array<double, 3> p{g.origin[0] + t(rng) * 6.0, g.origin[1] + t(rng) * 6.0,
                                    g.origin[2] + t(rng) * 6.0};
            CHECK(sample_trilinear(g, p) == doctest::Approx(p[0]).epsilon(1e-5));
        }
    }
    SUBCASE("affine field is reproduced to 1e-5 relative") {
        auto f = [](double x, double y, double z) { return 2.0 * x - 0.5 * y + 3.0 * z + 7.0; };
        for (int k = 0; k < 4; ++k)
            for (int j = 0; j < 4; ++j)
                for (int i = 0; i < 4; ++i) {
                    auto c = g.voxel_center(i, j, k);
                    g.at(i, j, k) = static_cast<float>(f(c[0], c[1], c[2]));
                }
        std::mt19937 rng(12);
        std::uniform_real_distribution<double> t(0.05, 0.95);
        for (int trial = 0; trial < 50; ++trial) {
            std::array<double, 3> p{g.origin[0] + t(rng) * 6.0, g.origin[1] + t(rng) * 6.0,
                                    g.origin[2] + t(rng) * 6.0};
            double expect = f(p[0], p[1], p[2]);
            CHECK(sample_trilinear(g, p) ==
                  doctest::Approx(expect).epsilon(1e-5));
        }
    }
    SUBCASE("out-of-bounds points clamp to the edge") {
        g.at(0, 0, 0) = 5.0f;
        CHECK(sample_trilinear(g, {-100.0, -100.0, -100.0}) == doctest::Approx(5.0));
    }
}

TEST_CASE("voxel center convention: origin + index * spacing") {
    VoxelGrid g({3, 3, 3}, {0.5, 1.0, 2.0}, {10.0, 20.0, 30.0});
    auto c = g.voxel_center(1, 2, 1);
    CHECK(c[0] == doctest::Approx(10.5));
    CHECK(c[1] == doctest::Approx(22.0));
    CHECK(c[2] == doctest::Approx(32.0));
}

TEST_CASE("lumen enclosure flood fill") {
    VoxelGrid g({5, 5, 5}, {1, 1, 1}, {0, 0, 0});
    LabelMap m;

    SUBCASE("enclosed lumen passes") {
        // lumen at center, wall shell around it
        for (int k = 1; k < 4; ++k)
            for (int j = 1; j < 4; ++j)
                for (int i = 1; i < 4; ++i) g.at(i, j, k) = 1.0f;
        g.at(2, 2, 2) = 2.0f;
        m.grid = g;
        CHECK(lumen_enclosed_by_wall(m));
    }
    SUBCASE("leaky wall fails") {
        for (int k = 1; k < 4; ++k)
            for (int j = 1; j < 4; ++j)
                for (int i = 1; i < 4; ++i) g.at(i, j, k) = 1.0f;
        g.at(2, 2, 2) = 2.0f;
        g.at(2, 2, 3) = 0.0f;  // hole to the outside
        g.at(2, 2, 4) = 0.0f;
        m.grid = g;
        CHECK_FALSE(lumen_enclosed_by_wall(m));
    }
}

TEST_CASE("grid invariants are enforced") {
    CHECK_THROWS_AS(VoxelGrid({1, 4, 4}, {1, 1, 1}, {0, 0, 0}), std::runtime_error);
    CHECK_THROWS_AS(VoxelGrid({4, 4, 4}, {0.0, 1, 1}, {0, 0, 0}), std::runtime_error);
}
