#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace rsii {

/// Dense scalar 3D image with physical spacing and origin.
///
/// Conventions (fixed project-wide):
///  - data is stored x-fastest: index(i,j,k) = (k*ny + j)*nx + i
///  - the physical coordinate of voxel (i,j,k) is its CENTER,
///    origin + (i,j,k) * spacing, in mm
struct VoxelGrid {
    std::array<int, 3> dims{0, 0, 0};
    std::array<double, 3> spacing{1.0, 1.0, 1.0};  // mm per voxel
    std::array<double, 3> origin{0.0, 0.0, 0.0};   // mm, center of voxel (0,0,0)
    std::vector<float> data;

    VoxelGrid() = default;
    VoxelGrid(std::array<int, 3> d, std::array<double, 3> sp, std::array<double, 3> org);

    std::size_t size() const { return data.size(); }
    std::size_t index(int i, int j, int k) const {
        return (static_cast<std::size_t>(k) * dims[1] + j) * dims[0] + i;
    }
    float at(int i, int j, int k) const { return data[index(i, j, k)]; }
    float& at(int i, int j, int k) { return data[index(i, j, k)]; }

    std::array<double, 3> voxel_center(int i, int j, int k) const {
        return {origin[0] + i * spacing[0], origin[1] + j * spacing[1],
                origin[2] + k * spacing[2]};
    }
    double voxel_volume() const { return spacing[0] * spacing[1] * spacing[2]; }

    /// Physical bounding box of voxel centers: [origin, origin + (dims-1)*spacing].
    std::array<double, 3> extent_max() const {
        return {origin[0] + (dims[0] - 1) * spacing[0],
                origin[1] + (dims[1] - 1) * spacing[1],
                origin[2] + (dims[2] - 1) * spacing[2]};
    }

    bool same_geometry(const VoxelGrid& other, double tol = 1e-9) const;

    /// Throws if dims < 2 per axis, spacing <= 0, or data length mismatch.
    void validate() const;
};

/// Segmentation codes: 0 = background, 1 = wall, 2 = lumen.
struct LabelMap {
    VoxelGrid grid;

    uint8_t label_at(int i, int j, int k) const {
        return static_cast<uint8_t>(grid.at(i, j, k));
    }
};

inline constexpr uint8_t kLabelBackground = 0;
inline constexpr uint8_t kLabelWall = 1;
inline constexpr uint8_t kLabelLumen = 2;

enum class ElementType { Float32, UInt8 };

/// Reads a MetaImage (.mhd + raw) volume. Supported subset: NDims 3,
/// MET_FLOAT or MET_UCHAR, little-endian raw in a separate file.
/// Unknown header keys are ignored with a warning on stderr.
VoxelGrid load_volume(const std::string& path);

/// Reads a volume and validates it as a label map: every value must be
/// exactly 0, 1 or 2, and the lumen must be enclosed by the wall.
LabelMap load_labels(const std::string& path);

/// Writes header + raw pair. load_volume(save_volume(g)) == g bit-exactly.
void save_volume(const VoxelGrid& grid, const std::string& path,
                 ElementType type = ElementType::Float32);
void save_labels(const LabelMap& labels, const std::string& path);

/// Flood fill from the grid boundary through non-wall voxels; the label map
/// is valid when the fill never reaches the lumen.
bool lumen_enclosed_by_wall(const LabelMap& labels);

/// Trilinear interpolation at a physical point (mm). Out-of-bounds points
/// clamp to the nearest edge, so this is total.
double sample_trilinear(const VoxelGrid& grid, const std::array<double, 3>& point_mm);

/// Value plus d(value)/d(point) in intensity per mm. The gradient is the
/// exact derivative of the trilinear interpolant (piecewise constant per
/// cell along each axis); it is zero in clamped directions.
struct SampleGrad {
    double value;
    std::array<double, 3> grad;
};
SampleGrad sample_trilinear_grad(const VoxelGrid& grid,
                                 const std::array<double, 3>& point_mm);

/// Separable Gaussian smoothing, sigma given in voxels, clamped (Neumann)
/// boundaries. Kernel radius 3*sigma. sigma <= 0 returns a copy.
VoxelGrid gaussian_smooth_voxels(const VoxelGrid& grid, double sigma_voxels);

/// Decimate by 2 after a sigma = 1 voxel Gaussian prefilter. Keeps even
/// indices, so the origin is unchanged and spacing doubles.
VoxelGrid downsample_by_two(const VoxelGrid& grid);

}  // namespace rsii
