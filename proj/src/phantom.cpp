#include "rsii/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <stdexcept>

#include <json.hpp>

namespace rsii {

namespace {

constexpr double kLumenIntensity = 300.0;
constexpr double kWallIntensity = 100.0;
// fraction of total length ramped down to zero at each fixed end
constexpr double kEndRampFraction = 0.15;

// Gaussian-blurred step: 0 well below the interface, 1 well above.
inline double edge(double signed_distance, double sigma) {
    return 0.5 * (1.0 + std::erf(signed_distance / (sigma * std::sqrt(2.0))));
}

// Radial intensity profile for lumen radius a and wall [a, a+w].
inline double intensity_profile(double r, double a, double w, double sigma) {
    return kLumenIntensity -
           (kLumenIntensity - kWallIntensity) * edge(r - a, sigma) -
           kWallIntensity * edge(r - a - w, sigma);
}

// Symmetric grid: odd voxel count so the axis passes through voxel centers.
VoxelGrid centered_grid(double half_x, double half_y, double half_z, double spacing) {
    auto axis_count = [&](double half) {
        return 2 * static_cast<int>(std::ceil(half / spacing)) + 1;
    };
    std::array<int, 3> dims{axis_count(half_x), axis_count(half_y), axis_count(half_z)};
    std::array<double, 3> origin{-(dims[0] - 1) / 2.0 * spacing,
                                 -(dims[1] - 1) / 2.0 * spacing,
                                 -(dims[2] - 1) / 2.0 * spacing};
    return VoxelGrid(dims, {spacing, spacing, spacing}, origin);
}

void check_common(double radius, double wall, double spacing, double inflation) {
    if (spacing <= 0.0 || radius <= 0.0 || wall <= 0.0)
        throw std::runtime_error("phantom: degenerate dimensions");
    if (radius <= 2.0 * wall)
        throw std::runtime_error("phantom: radius must exceed 2 * wall_thickness");
    if (inflation < 0.0 || inflation > 0.2)
        throw std::runtime_error("phantom: inflation must be in [0, 0.2]");
    if (wall < 2.0 * spacing)
        std::cerr << "warning: wall thickness " << wall << " mm is under-resolved at "
                  << spacing << " mm spacing\n";
}

// Shared generator for axisymmetric tubes (cylinder: constant profile,
// fusiform: bulged profile). The diastolic frame is the systolic one scaled
// in-plane by 1 - inflation*decay(z); the truth field is exactly that map.
PhantomCase make_tube(const std::function<double(double)>& lumen_radius,
                      double max_radius, double wall, double length, double spacing,
                      double inflation, double sigma) {
    const double pad = 5.0 + 3.0 * sigma;
    PhantomCase c;
    c.fixed_image = centered_grid(max_radius + wall + pad, max_radius + wall + pad,
                                  length / 2.0, spacing);
    c.moving_image = c.fixed_image;
    c.labels.grid = c.fixed_image;
    c.truth_displacement = DisplacementField(c.fixed_image);

    const VoxelGrid& g = c.fixed_image;
    const double z_end = -g.origin[2];  // grid is symmetric about z = 0
    const double ramp = kEndRampFraction * (2.0 * z_end);
    auto decay = [&](double z) {
        double d = (z_end - std::abs(z)) / ramp;
        return std::clamp(d, 0.0, 1.0);
    };

    for (int k = 0; k < g.dims[2]; ++k) {
        const double z = g.origin[2] + k * g.spacing[2];
        const double a = lumen_radius(z);
        const double delta = inflation * decay(z);
        const double scale = 1.0 - delta;
        const bool cap_slice = (k == 0 || k == g.dims[2] - 1);
        for (int j = 0; j < g.dims[1]; ++j) {
            const double y = g.origin[1] + j * g.spacing[1];
            for (int i = 0; i < g.dims[0]; ++i) {
                const double x = g.origin[0] + i * g.spacing[0];
                const double r = std::hypot(x, y);
                const std::size_t idx = g.index(i, j, k);

                c.fixed_image.data[idx] =
                    static_cast<float>(intensity_profile(r, a, wall, sigma));
                c.moving_image.data[idx] =
                    static_cast<float>(intensity_profile(r / scale, a, wall, sigma));

                uint8_t code = kLabelBackground;
                if (r < a)
                    code = kLabelLumen;
                else if (r <= a + wall)
                    code = kLabelWall;
                // one-voxel cap keeps the lumen enclosed where the tube
                // meets the grid boundary
                if (cap_slice && code == kLabelLumen) code = kLabelWall;
                c.labels.grid.data[idx] = static_cast<float>(code);

                c.truth_displacement.ux[idx] = static_cast<float>(-delta * x);
                c.truth_displacement.uy[idx] = static_cast<float>(-delta * y);
                c.truth_displacement.uz[idx] = 0.0f;
            }
        }
    }
    c.analytic.strain_circ = inflation;
    return c;
}

}  // namespace

PhantomCase make_cylinder_phantom(double radius, double wall, double length,
                                  double spacing, double inflation, double sigma) {
    check_common(radius, wall, spacing, inflation);
    if (length <= 4.0 * spacing)
        throw std::runtime_error("phantom: degenerate length");
    PhantomCase c = make_tube([=](double) { return radius; }, radius, wall, length,
                              spacing, inflation, sigma);
    c.analytic.tension_per_pressure_m = radius * 1e-3;  // Laplace: t = p R
    c.analytic.reference_radius_mm = radius;
    return c;
}

PhantomCase make_fusiform_phantom(double base_radius, double bulge_amplitude,
                                  double bulge_sigma, double length, double spacing,
                                  double inflation, double sigma) {
    const double wall = 1.5;  // fusiform keeps the nominal wall
    check_common(base_radius, wall, spacing, inflation);
    if (length <= 4.0 * spacing)
        throw std::runtime_error("phantom: degenerate length");
    if (bulge_amplitude < 0.0 || bulge_sigma <= 0.0)
        throw std::runtime_error("phantom: degenerate bulge parameters");
    if (base_radius + bulge_amplitude > length / 3.0)
        throw std::runtime_error("phantom: bulge too large for the tube length");
    auto profile = [=](double z) {
        return base_radius + bulge_amplitude * std::exp(-z * z / (2.0 * bulge_sigma * bulge_sigma));
    };
    PhantomCase c = make_tube(profile, base_radius + bulge_amplitude, wall, length,
                              spacing, inflation, sigma);
    c.analytic.reference_radius_mm = base_radius;
    return c;
}

PhantomCase make_sphere_phantom(double radius, double wall, double spacing,
                                double inflation, double sigma) {
    check_common(radius, wall, spacing, inflation);
    const double pad = 5.0 + 3.0 * sigma;
    const double half = radius + wall + pad;

    PhantomCase c;
    c.fixed_image = centered_grid(half, half, half, spacing);
    c.moving_image = c.fixed_image;
    c.labels.grid = c.fixed_image;
    c.truth_displacement = DisplacementField(c.fixed_image);

    const VoxelGrid& g = c.fixed_image;
    const double scale = 1.0 - inflation;
    for (int k = 0; k < g.dims[2]; ++k) {
        const double z = g.origin[2] + k * g.spacing[2];
        for (int j = 0; j < g.dims[1]; ++j) {
            const double y = g.origin[1] + j * g.spacing[1];
            for (int i = 0; i < g.dims[0]; ++i) {
                const double x = g.origin[0] + i * g.spacing[0];
                const double rho = std::sqrt(x * x + y * y + z * z);
                const std::size_t idx = g.index(i, j, k);

                c.fixed_image.data[idx] =
                    static_cast<float>(intensity_profile(rho, radius, wall, sigma));
                c.moving_image.data[idx] =
                    static_cast<float>(intensity_profile(rho / scale, radius, wall, sigma));

                uint8_t code = kLabelBackground;
                if (rho < radius)
                    code = kLabelLumen;
                else if (rho <= radius + wall)
                    code = kLabelWall;
                c.labels.grid.data[idx] = static_cast<float>(code);

                c.truth_displacement.ux[idx] = static_cast<float>(-inflation * x);
                c.truth_displacement.uy[idx] = static_cast<float>(-inflation * y);
                c.truth_displacement.uz[idx] = static_cast<float>(-inflation * z);
            }
        }
    }
    c.analytic.tension_per_pressure_m = radius * 1e-3 / 2.0;  // Laplace: t = p R / 2
    c.analytic.strain_circ = inflation;
    c.analytic.reference_radius_mm = radius;
    return c;
}

void save_phantom_case(const PhantomCase& c, const std::string& dir) {
    std::filesystem::create_directories(dir);
    save_volume(c.fixed_image, dir + "/fixed.mhd");
    save_volume(c.moving_image, dir + "/moving.mhd");
    save_labels(c.labels, dir + "/labels.mhd");
    save_field(c.truth_displacement, dir + "/truth");

    nlohmann::ordered_json manifest;
    if (c.analytic.tension_per_pressure_m)
        manifest["tension_per_pressure_m"] = *c.analytic.tension_per_pressure_m;
    else
        manifest["tension_per_pressure_m"] = nullptr;
    manifest["strain_circ"] = c.analytic.strain_circ;
    manifest["reference_radius_mm"] = c.analytic.reference_radius_mm;
    std::ofstream out(dir + "/analytic.json");
    out << manifest.dump(2) << "\n";
}

}  // namespace rsii
