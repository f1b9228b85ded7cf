#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "rsii/phantom.hpp"
#include "rsii/registration.hpp"
#include "test_util.hpp"

using namespace rsii;

TEST_CASE("zero inflation gives identical frames and a zero field") {
    PhantomCase c = make_cylinder_phantom(25.0, 1.5, 60.0, 2.0, 0.0);
    CHECK(c.fixed_image.data == c.moving_image.data);  // bitwise
    for (std::size_t v = 0; v < c.truth_displacement.size(); ++v) {
        CHECK(c.truth_displacement.ux[v] == 0.0f);
        CHECK(c.truth_displacement.uy[v] == 0.0f);
        CHECK(c.truth_displacement.uz[v] == 0.0f);
    }
}

TEST_CASE("cylinder analytic values follow the Laplace law") {
    PhantomCase c = make_cylinder_phantom(25.0, 1.5, 60.0, 2.0, 0.03);
    REQUIRE(c.analytic.tension_per_pressure_m.has_value());
    // t = p R: 13 kPa * 25 mm = 325 N/m = 0.325 N/mm
    CHECK(*c.analytic.tension_per_pressure_m * 13e3 ==
          doctest::Approx(325.0).epsilon(1e-12));
    CHECK(c.analytic.strain_circ == doctest::Approx(0.03));
}

TEST_CASE("sphere analytic tension is half the cylinder value") {
    PhantomCase c = make_sphere_phantom(25.0, 1.5, 2.0, 0.03);
    REQUIRE(c.analytic.tension_per_pressure_m.has_value());
    CHECK(*c.analytic.tension_per_pressure_m * 13e3 ==
          doctest::Approx(162.5).epsilon(1e-12));
}

TEST_CASE("warping the moving frame by the truth field reproduces the fixed frame") {
    SUBCASE("cylinder") {
        PhantomCase c = make_cylinder_phantom(25.0, 3.0, 60.0, 1.5, 0.05);
        VoxelGrid warped = warp(c.moving_image, c.truth_displacement);
        // contrast between lumen and outside is 300
        CHECK(test_util::rms(warped.data, c.fixed_image.data) < 0.01 * 300.0);
    }
    SUBCASE("sphere") {
        PhantomCase c = make_sphere_phantom(20.0, 3.0, 1.5, 0.05);
        VoxelGrid warped = warp(c.moving_image, c.truth_displacement);
        CHECK(test_util::rms(warped.data, c.fixed_image.data) < 0.01 * 300.0);
    }
}

TEST_CASE("labels segment the fixed geometry and enclose the lumen") {
    PhantomCase c = make_cylinder_phantom(25.0, 3.0, 60.0, 1.5, 0.03);
    CHECK(lumen_enclosed_by_wall(c.labels));
    // wall voxels sit where the unsmoothed fixed intensity says wall
    const VoxelGrid& g = c.labels.grid;
    int wall = 0, lumen = 0;
    for (float v : g.data) {
        wall += v == 1.0f;
        lumen += v == 2.0f;
    }
    CHECK(wall > 0);
    CHECK(lumen > 0);

    PhantomCase s = make_sphere_phantom(20.0, 3.0, 1.5, 0.03);
    CHECK(lumen_enclosed_by_wall(s.labels));
}

TEST_CASE("fusiform with zero bulge degenerates to the cylinder") {
    PhantomCase f = make_fusiform_phantom(12.0, 0.0, 10.0, 60.0, 1.5, 0.03);
    PhantomCase c = make_cylinder_phantom(12.0, 1.5, 60.0, 1.5, 0.03);
    REQUIRE(f.fixed_image.data.size() == c.fixed_image.data.size());
    for (std::size_t v = 0; v < f.fixed_image.data.size(); ++v) {
        CHECK(std::abs(f.fixed_image.data[v] - c.fixed_image.data[v]) <= 1e-6f);
        CHECK(std::abs(f.moving_image.data[v] - c.moving_image.data[v]) <= 1e-6f);
        CHECK(f.labels.grid.data[v] == c.labels.grid.data[v]);
        CHECK(std::abs(f.truth_displacement.ux[v] - c.truth_displacement.ux[v]) <= 1e-6f);
    }
}

TEST_CASE("fusiform bulge reaches the requested maximum diameter") {
    // base 12 + bulge 18 -> 30 mm max lumen radius, 60 mm max diameter
    PhantomCase f = make_fusiform_phantom(12.0, 18.0, 15.0, 95.0, 1.5, 0.03);
    const VoxelGrid& g = f.labels.grid;
    double max_r = 0.0;
    for (int k = 0; k < g.dims[2]; ++k)
        for (int j = 0; j < g.dims[1]; ++j)
            for (int i = 0; i < g.dims[0]; ++i)
                if (g.at(i, j, k) == 2.0f) {
                    auto p = g.voxel_center(i, j, k);
                    max_r = std::max(max_r, std::hypot(p[0], p[1]));
                }
    CHECK(max_r == doctest::Approx(30.0).epsilon(0.05));
}

TEST_CASE("phantom parameter violations are rejected") {
    CHECK_THROWS_AS(make_cylinder_phantom(2.0, 1.5, 60.0, 1.0, 0.03), std::runtime_error);
    CHECK_THROWS_AS(make_cylinder_phantom(25.0, 1.5, 60.0, 1.0, 0.5), std::runtime_error);
    CHECK_THROWS_AS(make_cylinder_phantom(25.0, 1.5, 2.0, 1.0, 0.03), std::runtime_error);
    CHECK_THROWS_AS(make_fusiform_phantom(12.0, 30.0, 10.0, 60.0, 1.0, 0.03),
                    std::runtime_error);
    CHECK_THROWS_AS(make_sphere_phantom(25.0, 1.5, -1.0, 0.03), std::runtime_error);
}

TEST_CASE("phantom case serialization writes the full artifact set") {
    auto dir = test_util::fresh_dir("phantom_save");
    PhantomCase c = make_cylinder_phantom(25.0, 3.0, 40.0, 2.0, 0.03);
    save_phantom_case(c, dir.string());
    for (const char* name : {"fixed.mhd", "moving.mhd", "labels.mhd", "truth_x.mhd",
                             "truth_y.mhd", "truth_z.mhd", "analytic.json"})
        CHECK(std::filesystem::exists(dir / name));

    VoxelGrid fixed = load_volume((dir / "fixed.mhd").string());
    CHECK(fixed.data == c.fixed_image.data);
    DisplacementField truth = load_field((dir / "truth").string());
    CHECK(truth.ux == c.truth_displacement.ux);
}
