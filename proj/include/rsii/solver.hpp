#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "rsii/geometry.hpp"

namespace rsii {

/// Isotropic linear-elastic material. The stiff default keeps the loaded
/// geometry effectively frozen; recovered tension is insensitive to both
/// constants (checked by the invariance tests).
struct Material {
    double youngs_modulus_pa = 100e9;
    double poisson_ratio = 0.3;

    void validate() const;
};

/// Layered tetrahedral wall volume produced by inward extrusion of a
/// triangulated outer surface.
///
/// Node layout: skin s in [0, layers] holds node s*V + v for surface vertex
/// v, skin 0 being the surface itself and skin `layers` the lumen-side skin.
/// inner_faces are wound so their normals point INTO the lumen; the pressure
/// load acts along the opposite direction (inflating the wall).
struct WallMesh {
    std::vector<Eigen::Vector3d> nodes;  // mm
    std::vector<std::array<int, 4>> tets;
    std::vector<std::vector<int>> node_columns;  // per vertex, outer -> inner
    std::vector<std::array<int, 3>> inner_faces;
    std::vector<int> fixed_nodes;
    std::vector<uint8_t> tet_region;  // 0 = wall, 1 = ilt
    /// Tets of the prism stacks incident to each surface vertex (all layers
    /// of the triangles touching the vertex); used for the through-thickness
    /// stress average.
    std::vector<std::vector<int>> column_tets;
    double thickness_mm = 0.0;
    int layers = 0;

    double tet_volume_mm3(int tet) const;
};

/// Extrudes each vertex inward along -normal in `layers` equal steps and
/// splits every prism into 3 tets with a smallest-node diagonal rule, so
/// neighbouring prisms conform. Fixed nodes come from the end rings (all
/// skins), or from 10-degree polar caps when the surface is closed.
/// Throws when the offset inverts tets (thickness too large for the local
/// curvature).
WallMesh build_wall_mesh(const TriangleSurface& surface, double thickness_mm,
                         int layers);

struct StressField {
    std::vector<Eigen::Matrix3d> element_stress;  // Pa, per tet
    std::vector<Eigen::Matrix3d> column_stress;   // Pa, per surface vertex
};

struct ElasticitySolution {
    std::vector<Eigen::Vector3d> nodal_displacement_mm;
    StressField stress;
    // global equilibrium bookkeeping (N)
    Eigen::Vector3d total_reaction{0, 0, 0};
    Eigen::Vector3d total_load{0, 0, 0};
    double load_magnitude = 0.0;  // pressure * inner area
};

/// Small-strain linear elasticity with 4-node tets and element-constant
/// stress; pressure enters as consistent nodal loads on the inner faces.
/// The reduced SPD system is solved by a sparse direct factorization with
/// one refinement pass when the relative residual exceeds 1e-9.
ElasticitySolution solve_elasticity(const WallMesh& mesh, double pressure_pa,
                                    const Material& wall,
                                    const std::optional<Material>& ilt = std::nullopt);

/// Through-thickness (volume-weighted) average of the element stresses in
/// each vertex's prism stack; the post-processing form of the uniform-stress
/// residual correction.
StressField uniform_stress_average(const WallMesh& mesh, const StressField& stress);

/// Per-vertex scalar overlay on a surface.
struct SurfaceField {
    std::string name;
    std::string unit;  // "N/m" | "1" | "m/N" | "mm"
    std::vector<double> values;
    std::vector<uint8_t> valid;  // 0 = masked

    SurfaceField() = default;
    SurfaceField(std::string n, std::string u, std::size_t count)
        : name(std::move(n)), unit(std::move(u)), values(count, 0.0), valid(count, 1) {}
};

struct TensionFields {
    SurfaceField max_principal;     // N/m
    SurfaceField circumferential;   // N/m, masked near the axis poles
};

/// Projects the averaged column stress onto each vertex tangent plane and
/// multiplies by the thickness: T = h * (t_i . sigma . t_j). Reports the max
/// principal in-plane tension and, when an axis is given, the component
/// along axis x normal (the circumferential direction).
TensionFields wall_tension(const WallMesh& mesh, const StressField& averaged,
                           const TriangleSurface& surface,
                           const std::optional<Eigen::Vector3d>& axis = std::nullopt);

}  // namespace rsii
