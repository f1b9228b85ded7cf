#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "rsii/phantom.hpp"
#include "rsii/registration.hpp"
#include "test_util.hpp"

using namespace rsii;

namespace {

VoxelGrid smooth_random_image(std::array<int, 3> dims, uint32_t seed) {
    VoxelGrid g(dims, {1.0, 1.0, 1.0}, {0, 0, 0});
    std::mt19937 rng(seed);
    std::uniform_real_distribution<float> dist(0.0f, 200.0f);
    for (auto& v : g.data) v = dist(rng);
    return gaussian_smooth_voxels(g, 1.0);
}

DisplacementField small_random_field(const VoxelGrid& like, uint32_t seed,
                                     double amplitude) {
    DisplacementField f(like);
    std::mt19937 rng(seed);
    std::uniform_real_distribution<float> dist(-amplitude, amplitude);
    for (std::size_t v = 0; v < f.size(); ++v) {
        f.ux[v] = dist(rng);
        f.uy[v] = dist(rng);
        f.uz[v] = dist(rng);
    }
    return f;
}

// smoothed-TV total energy matching the gradient surrogate (eps = 1e-6)
double surrogate_energy(const VoxelGrid& fixed, const VoxelGrid& moving,
                        const DisplacementField& field, double lambda) {
    RegistrationEnergy base = registration_energy(fixed, moving, field, 0.0);
    const double eps = 1e-6;
    double tv = 0.0;
    auto diff = [&](const std::vector<float>& c, int i, int j, int k, int d) {
        int idx3[3] = {i, j, k};
        if (idx3[d] >= field.dims[d] - 1) return 0.0;
        std::size_t idx = field.index(i, j, k);
        std::size_t step = d == 0 ? 1
                           : (d == 1 ? static_cast<std::size_t>(field.dims[0])
                                     : static_cast<std::size_t>(field.dims[0]) *
                                           field.dims[1]);
        return (double(c[idx + step]) - double(c[idx])) / field.spacing[d];
    };
    for (int k = 0; k < field.dims[2]; ++k)
        for (int j = 0; j < field.dims[1]; ++j)
            for (int i = 0; i < field.dims[0]; ++i) {
                double s = eps * eps;
                for (int d = 0; d < 3; ++d) {
                    double gx = diff(field.ux, i, j, k, d);
                    double gy = diff(field.uy, i, j, k, d);
                    double gz = diff(field.uz, i, j, k, d);
                    s += gx * gx + gy * gy + gz * gz;
                }
                tv += std::sqrt(s);
            }
    double vol = field.spacing[0] * field.spacing[1] * field.spacing[2];
    return base.data_term + lambda * tv * vol;
}

}  // namespace

TEST_CASE("identical images with a zero field have zero energy and gradient") {
    VoxelGrid img = smooth_random_image({10, 10, 10}, 3);
    DisplacementField zero(img);
    auto [energy, gradient] = registration_energy_and_gradient(img, img, zero, 5.0);
    CHECK(energy.total == 0.0);
    for (std::size_t v = 0; v < gradient.size(); ++v) {
        CHECK(gradient.ux[v] == 0.0f);
        CHECK(gradient.uy[v] == 0.0f);
        CHECK(gradient.uz[v] == 0.0f);
    }
}

TEST_CASE("TV term vanishes for constant fields and ignores global shifts") {
    VoxelGrid fixed = smooth_random_image({9, 9, 9}, 4);
    VoxelGrid moving = smooth_random_image({9, 9, 9}, 5);
    DisplacementField constant(fixed);
    std::fill(constant.ux.begin(), constant.ux.end(), 0.7f);
    std::fill(constant.uy.begin(), constant.uy.end(), -1.3f);
    std::fill(constant.uz.begin(), constant.uz.end(), 0.2f);
    RegistrationEnergy e = registration_energy(fixed, moving, constant, 123.0);
    CHECK(e.tv_term == 0.0);

    DisplacementField field = small_random_field(fixed, 6, 0.4);
    RegistrationEnergy base = registration_energy(fixed, moving, field, 1.0);
    DisplacementField shifted = field;
    for (auto& v : shifted.ux) v += 2.5f;
    RegistrationEnergy moved = registration_energy(fixed, moving, shifted, 1.0);
    CHECK(moved.tv_term == doctest::Approx(base.tv_term).epsilon(1e-6));
}

TEST_CASE("data-term gradient matches central finite differences on 8^3") {
    VoxelGrid fixed = smooth_random_image({8, 8, 8}, 11);
    VoxelGrid moving = smooth_random_image({8, 8, 8}, 12);
    DisplacementField field = small_random_field(fixed, 13, 0.3);

    auto [energy, gradient] = registration_energy_and_gradient(fixed, moving, field, 0.0);

    double max_rel = 0.0;
    const double h = 1e-3;
    std::mt19937 rng(14);
    std::uniform_int_distribution<std::size_t> pick(0, field.size() - 1);
    for (int trial = 0; trial < 200; ++trial) {
        std::size_t idx = pick(rng);
        int comp = trial % 3;
        auto& arr = comp == 0 ? field.ux : (comp == 1 ? field.uy : field.uz);
        float saved = arr[idx];

        arr[idx] = static_cast<float>(saved + h);
        double ep = registration_energy(fixed, moving, field, 0.0).total;
        double up = arr[idx];
        arr[idx] = static_cast<float>(saved - h);
        double em = registration_energy(fixed, moving, field, 0.0).total;
        double um = arr[idx];
        arr[idx] = saved;

        double fd = (ep - em) / (up - um);
        const auto& grad_arr =
            comp == 0 ? gradient.ux : (comp == 1 ? gradient.uy : gradient.uz);
        double an = grad_arr[idx];
        if (std::abs(fd) < 1e-8 && std::abs(an) < 1e-8) continue;
        max_rel = std::max(max_rel,
                           std::abs(fd - an) / std::max({std::abs(fd), std::abs(an)}));
    }
    CHECK(max_rel <= 1e-4);
}

TEST_CASE("full surrogate gradient (data + smoothed TV) passes finite differences") {
    VoxelGrid fixed = smooth_random_image({8, 8, 8}, 21);
    VoxelGrid moving = smooth_random_image({8, 8, 8}, 22);
    DisplacementField field = small_random_field(fixed, 23, 0.3);
    const double lambda = 50.0;

    auto [energy, gradient] =
        registration_energy_and_gradient(fixed, moving, field, lambda);

    double max_rel = 0.0;
    const double h = 1e-4;
    std::mt19937 rng(24);
    std::uniform_int_distribution<std::size_t> pick(0, field.size() - 1);
    for (int trial = 0; trial < 100; ++trial) {
        std::size_t idx = pick(rng);
        int comp = trial % 3;
        auto& arr = comp == 0 ? field.ux : (comp == 1 ? field.uy : field.uz);
        float saved = arr[idx];

        arr[idx] = static_cast<float>(saved + h);
        double ep = surrogate_energy(fixed, moving, field, lambda);
        double up = arr[idx];
        arr[idx] = static_cast<float>(saved - h);
        double em = surrogate_energy(fixed, moving, field, lambda);
        double um = arr[idx];
        arr[idx] = saved;

        double fd = (ep - em) / (up - um);
        const auto& grad_arr =
            comp == 0 ? gradient.ux : (comp == 1 ? gradient.uy : gradient.uz);
        double an = grad_arr[idx];
        if (std::abs(fd) < 1e-6 && std::abs(an) < 1e-6) continue;
        max_rel = std::max(max_rel,
                           std::abs(fd - an) / std::max({std::abs(fd), std::abs(an)}));
    }
    CHECK(max_rel <= 2e-3);  // float gradient storage limits the agreement
}

TEST_CASE("geometry mismatch is rejected") {
    VoxelGrid fixed = smooth_random_image({8, 8, 8}, 31);
    VoxelGrid moving = smooth_random_image({8, 8, 8}, 32);
    VoxelGrid other = smooth_random_image({9, 8, 8}, 33);
    DisplacementField field(other);
    CHECK_THROWS_AS(registration_energy_and_gradient(fixed, moving, field, 1.0),
                    std::runtime_error);
}

TEST_CASE("self-registration stays at rest") {
    VoxelGrid img = smooth_random_image({16, 16, 16}, 41);
    RegConfig cfg;
    cfg.pyramid_levels = 2;
    cfg.iterations_per_level = 10;
    DisplacementField field = register_images(img, img, cfg);
    double rms = 0.0;
    for (std::size_t v = 0; v < field.size(); ++v)
        rms += field.ux[v] * field.ux[v] + field.uy[v] * field.uy[v] +
               field.uz[v] * field.uz[v];
    rms = std::sqrt(rms / field.size());
    CHECK(rms <= 0.05);  // voxels are 1 mm here
}

TEST_CASE("warp basics") {
    VoxelGrid img({10, 10, 10}, {1, 1, 1}, {0, 0, 0});
    for (int k = 0; k < 10; ++k)
        for (int j = 0; j < 10; ++j)
            for (int i = 0; i < 10; ++i) img.at(i, j, k) = static_cast<float>(i);

    SUBCASE("zero field is the identity") {
        DisplacementField zero(img);
        VoxelGrid w = warp(img, zero);
        for (std::size_t v = 0; v < w.data.size(); ++v)
            CHECK(std::abs(w.data[v] - img.data[v]) <= 1e-6f);
    }
    SUBCASE("constant shift on a ramp adds the shift") {
        DisplacementField f(img);
        std::fill(f.ux.begin(), f.ux.end(), 1.5f);
        VoxelGrid w = warp(img, f);
        for (int k = 0; k < 10; ++k)
            for (int j = 0; j < 10; ++j)
                for (int i = 1; i < 8; ++i)
                    CHECK(w.at(i, j, k) == doctest::Approx(i + 1.5).epsilon(1e-6));
    }
}

TEST_CASE("known translation is recovered on the phantom") {
    PhantomCase c = make_cylinder_phantom(25.0, 3.0, 55.0, 1.5, 0.0);
    const VoxelGrid& fixed = c.fixed_image;

    // moving(y) = fixed(y + T): the registration truth is u = -T
    const Eigen::Vector3d T(2.0, 0.0, 0.0);
    DisplacementField shift(fixed);
    std::fill(shift.ux.begin(), shift.ux.end(), static_cast<float>(T.x()));
    VoxelGrid moving = warp(fixed, shift);

    RegConfig cfg;  // defaults
    ConvergenceLog log;
    DisplacementField field = register_images(fixed, moving, cfg, &log);

    // median over the high-gradient wall band
    VoxelGrid smooth = gaussian_smooth_voxels(fixed, 1.0);
    std::vector<double> ex, ey, ez;
    for (int k = 2; k < fixed.dims[2] - 2; ++k)
        for (int j = 2; j < fixed.dims[1] - 2; ++j)
            for (int i = 2; i < fixed.dims[0] - 2; ++i) {
                double gx = smooth.at(i + 1, j, k) - smooth.at(i - 1, j, k);
                double gy = smooth.at(i, j + 1, k) - smooth.at(i, j - 1, k);
                double gz = smooth.at(i, j, k + 1) - smooth.at(i, j, k - 1);
                if (std::sqrt(gx * gx + gy * gy + gz * gz) < 30.0) continue;
                std::size_t idx = fixed.index(i, j, k);
                ex.push_back(field.ux[idx]);
                ey.push_back(field.uy[idx]);
                ez.push_back(field.uz[idx]);
            }
    REQUIRE(ex.size() > 100);
    CHECK(std::abs(test_util::median(ex) - (-2.0)) <= 0.25);
    CHECK(std::abs(test_util::median(ey)) <= 0.25);
    CHECK(std::abs(test_util::median(ez)) <= 0.25);

    // energy is non-increasing at every level
    for (const auto& level : log.levels)
        for (std::size_t e = 1; e < level.energies.size(); ++e)
            CHECK(level.energies[e] <= level.energies[e - 1] + 1e-9);

    // warping the moving image back restores most of the mismatch
    VoxelGrid rewarped = warp(moving, field);
    double before = test_util::rms(moving.data, fixed.data);
    double after = test_util::rms(rewarped.data, fixed.data);
    CHECK(after <= 0.20 * before);
}

TEST_CASE("registration is deterministic") {
    PhantomCase c = make_cylinder_phantom(25.0, 3.0, 40.0, 2.0, 0.03);
    RegConfig cfg;
    cfg.pyramid_levels = 2;
    cfg.iterations_per_level = 8;
    DisplacementField a = register_images(c.fixed_image, c.moving_image, cfg);
    DisplacementField b = register_images(c.fixed_image, c.moving_image, cfg);
    CHECK(a.ux == b.ux);
    CHECK(a.uy == b.uy);
    CHECK(a.uz == b.uz);
}

TEST_CASE("invalid inputs are rejected") {
    VoxelGrid a = smooth_random_image({8, 8, 8}, 51);
    VoxelGrid b = a;
    b.origin = {1000.0, 0.0, 0.0};  // disjoint extents
    RegConfig cfg;
    CHECK_THROWS_WITH_AS(register_images(a, b, cfg), doctest::Contains("overlap"),
                         std::runtime_error);

    VoxelGrid nan_img = a;
    nan_img.data[5] = std::numeric_limits<float>::quiet_NaN();
    CHECK_THROWS_AS(register_images(a, nan_img, cfg), std::runtime_error);
}
