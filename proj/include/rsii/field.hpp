#pragma once

#include <array>
#include <string>
#include <vector>

#include "rsii/volume.hpp"

namespace rsii {

/// Dense per-voxel displacement, same geometry as the fixed image.
/// Meaning: moving-space point = fixed-space point + vector (mm).
struct DisplacementField {
    std::array<int, 3> dims{0, 0, 0};
    std::array<double, 3> spacing{1.0, 1.0, 1.0};
    std::array<double, 3> origin{0.0, 0.0, 0.0};
    std::vector<float> ux, uy, uz;

    DisplacementField() = default;
    explicit DisplacementField(const VoxelGrid& geometry_like);

    std::size_t size() const { return ux.size(); }
    std::size_t index(int i, int j, int k) const {
        return (static_cast<std::size_t>(k) * dims[1] + j) * dims[0] + i;
    }
    std::array<double, 3> vector_at(std::size_t idx) const {
        return {ux[idx], uy[idx], uz[idx]};
    }

    bool matches_geometry(const VoxelGrid& grid, double tol = 1e-9) const;
    /// Throws if any component is non-finite.
    void validate_finite() const;

    /// Component of the scalar view shared with VoxelGrid-backed helpers.
    VoxelGrid component_grid(int axis) const;
};

/// Trilinear interpolation of the field at a physical point, edge-clamped.
std::array<double, 3> sample_field(const DisplacementField& field,
                                   const std::array<double, 3>& point_mm);

/// The field is stored as three scalar MetaImage volumes with suffixes
/// _x.mhd, _y.mhd, _z.mhd appended to the prefix.
void save_field(const DisplacementField& field, const std::string& path_prefix);
DisplacementField load_field(const std::string& path_prefix);

}  // namespace rsii
