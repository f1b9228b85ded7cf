#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "rsii/field.hpp"
#include "rsii/volume.hpp"

namespace rsii {

/// Parameters of the TV-regularized registration.
struct RegConfig {
    double lambda_tv = 400.0;       // TV weight (intensity^2 scale)
    int pyramid_levels = 3;         // coarse-to-fine resolutions
    int iterations_per_level = 30;  // ADMM outer iterations cap
    double admm_penalty = 1.3e5;    // quadratic splitting penalty
    double convergence_tol = 1e-4;  // relative energy decrease threshold
    uint32_t seed = 0;              // recorded with outputs; solver is deterministic

    void validate() const;
};

struct RegistrationEnergy {
    double total = 0.0;
    double data_term = 0.0;  // sum (fixed - moving(x+u))^2 * voxel volume
    double tv_term = 0.0;    // lambda * isotropic TV of u (all 9 derivatives
                             // under one root, forward differences, Neumann)
};

/// Energy of a candidate field plus its gradient. The returned gradient is
/// exact for the data term; the TV part uses the eps = 1e-6 smoothed root so
/// the result is a plain differentiable surrogate (the ADMM solver handles
/// the nonsmooth term by splitting instead).
struct EnergyAndGradient {
    RegistrationEnergy energy;
    DisplacementField gradient;  // dE/du per voxel, same geometry as the field
};
EnergyAndGradient registration_energy_and_gradient(const VoxelGrid& fixed,
                                                   const VoxelGrid& moving,
                                                   const DisplacementField& field,
                                                   double lambda_tv);

RegistrationEnergy registration_energy(const VoxelGrid& fixed, const VoxelGrid& moving,
                                       const DisplacementField& field, double lambda_tv);

/// Energy trace of the accepted ADMM iterates, one entry per pyramid level.
struct ConvergenceLog {
    struct Level {
        std::array<int, 3> dims{};
        std::vector<double> energies;
        int safeguard_rejections = 0;
    };
    std::vector<Level> levels;
};

/// Multiresolution registration: coarse-to-fine pyramid (factor 2, Gaussian
/// prefilter), each level solved by ADMM splitting -- gradient descent with
/// backtracking on the data+penalty subproblem, closed-form group shrinkage
/// on the 9-component derivative stack, scaled dual update. Iterates that
/// would raise the energy are rejected and the penalty grows, which keeps
/// the accepted energy non-increasing.
DisplacementField register_images(const VoxelGrid& fixed, const VoxelGrid& moving,
                                  const RegConfig& config,
                                  ConvergenceLog* log = nullptr);

/// output(x) = moving sampled at x + u(x).
VoxelGrid warp(const VoxelGrid& moving, const DisplacementField& field);

}  // namespace rsii
