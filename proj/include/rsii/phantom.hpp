#pragma once

#include <optional>
#include <string>

#include "rsii/field.hpp"
#include "rsii/volume.hpp"

namespace rsii {

/// Closed-form values attached to a synthetic case. Tension is expressed per
/// unit pressure so the (downstream) pressure choice stays out of the phantom:
/// tension [N/m] = pressure [Pa] * tension_per_pressure_m [m].
struct AnalyticInfo {
    std::optional<double> tension_per_pressure_m;
    double strain_circ = 0.0;        // dimensionless, peak (plateau) value
    double reference_radius_mm = 0.0;  // lumen radius of the generated body
};

/// Synthetic systolic/diastolic frame pair with exact ground truth.
/// fixed_image is the systolic (inflated) frame, moving_image the diastolic
/// one; truth_displacement maps fixed-frame points onto moving-frame points,
/// so warp(moving, truth) reproduces fixed up to interpolation error.
struct PhantomCase {
    VoxelGrid fixed_image;
    VoxelGrid moving_image;
    LabelMap labels;  // segments the fixed geometry
    DisplacementField truth_displacement;
    AnalyticInfo analytic;
};

/// Tube along z with lumen radius `radius`, wall spanning
/// [radius, radius + wall_thickness]. Intensities 300 (lumen) / 100 (wall) /
/// 0 (outside) with interfaces blurred by a Gaussian edge profile of width
/// smoothing_sigma. The diastolic frame is the systolic one contracted
/// radially by `inflation`, held constant over the middle of the tube and
/// ramped linearly to zero near the fixed z-ends, so the circumferential
/// strain of the plateau equals `inflation` exactly.
PhantomCase make_cylinder_phantom(double radius_mm, double wall_thickness_mm,
                                  double length_mm, double spacing_mm,
                                  double inflation, double smoothing_sigma_mm = 1.0);

/// Spherical shell, lumen radius `radius`; contraction is uniform (no decay,
/// the solver fixes polar caps instead of end rings).
PhantomCase make_sphere_phantom(double radius_mm, double wall_thickness_mm,
                                double spacing_mm, double inflation,
                                double smoothing_sigma_mm = 1.0);

/// Axisymmetric bulged tube: lumen radius profile
/// R(z) = base_radius + bulge_amplitude * exp(-z^2 / (2 bulge_sigma^2)).
/// No closed-form tension; used for convergence and invariance checks.
PhantomCase make_fusiform_phantom(double base_radius_mm, double bulge_amplitude_mm,
                                  double bulge_sigma_mm, double length_mm,
                                  double spacing_mm, double inflation,
                                  double smoothing_sigma_mm = 1.0);

/// Writes fixed/moving/labels volumes, the truth field and a JSON manifest of
/// the analytic values into dir (created if missing).
void save_phantom_case(const PhantomCase& c, const std::string& dir);

}  // namespace rsii
