#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <vector>

#include "rsii/field.hpp"
#include "rsii/volume.hpp"

namespace rsii {

/// Orthonormal right-handed frame attached to a surface vertex.
struct LocalFrame {
    Eigen::Vector3d normal{0, 0, 1};    // unit, outward
    Eigen::Vector3d tangent1{1, 0, 0};  // unit, in tangent plane
    Eigen::Vector3d tangent2{0, 1, 0};  // normal x tangent1 ... tangent2 = n x t1
};

/// Closed or tube-like triangulated surface in physical mm, triangles wound
/// counterclockwise seen from outside. end_rings[0] holds the boundary loop
/// at the low-z end, end_rings[1] the high-z one; both empty for closed
/// surfaces.
struct TriangleSurface {
    std::vector<Eigen::Vector3d> vertices;
    std::vector<std::array<int, 3>> triangles;
    std::vector<LocalFrame> frames;             // filled by local_frames
    std::vector<double> curvature_radius_mm;    // filled by estimate_curvature
    std::vector<uint8_t> curvature_near_flat;   // 1 where the sphere fit degenerated
    std::array<std::vector<int>, 2> end_rings;

    int vertex_count() const { return static_cast<int>(vertices.size()); }
    int triangle_count() const { return static_cast<int>(triangles.size()); }
    bool has_frames() const { return frames.size() == vertices.size(); }

    double mean_edge_length() const;
    /// Area-weighted vertex normals from triangle orientation (outward).
    std::vector<Eigen::Vector3d> triangle_vertex_normals() const;
    /// V - E + F; 2 for a topological sphere.
    int euler_characteristic() const;
};

/// Marching-cubes surface of the region with label >= label_code (the lumen
/// is enclosed by the wall, so code 1 yields the outer wall surface and code
/// 2 the lumen surface). The indicator volume is presmoothed with a
/// sigma = 1 voxel Gaussian and contoured at `iso`. Vertices shared between
/// cells are welded exactly via lattice-edge identity; boundary loops at the
/// two extreme z slabs become end rings.
TriangleSurface extract_surface(const LabelMap& labels, int label_code,
                                double iso = 0.5);

/// Per-vertex PCA frames from the k nearest vertices. Normal is the smallest
/// covariance eigenvector, oriented outward against the triangle normals;
/// tangent1 follows the largest eigenvector projected to the tangent plane.
void local_frames(TriangleSurface& surface, int neighborhood_k = 12);

struct MlesacConfig {
    int trials = 200;
    double inlier_tol_mm = 0.3;
    uint32_t seed = 0;
};

/// Robust local sphere fit: MLESAC over 4-point circumspheres scored with a
/// truncated quadratic, then least-squares refinement on the inliers.
/// Returns the fitted radius clamped to
/// [0.5 * neighborhood_radius, 100 * neighborhood_radius]; near_flat is set
/// when the neighborhood is (close to) planar and the clamp engaged.
double curvature_radius_at(const TriangleSurface& surface, int vertex,
                           double neighborhood_radius_mm, const MlesacConfig& cfg,
                           bool* near_flat = nullptr);

/// Runs curvature_radius_at on every vertex. neighborhood_radius <= 0 picks
/// the default 4 x mean edge length.
void estimate_curvature(TriangleSurface& surface, double neighborhood_radius_mm,
                        const MlesacConfig& cfg);

/// Trilinear field samples at the vertex positions. Vertices outside the
/// field extent are clamped and flagged.
std::vector<std::array<double, 3>> interpolate_at_vertices(
    const DisplacementField& field, const TriangleSurface& surface,
    std::vector<uint8_t>* clamped_flags = nullptr);

}  // namespace rsii
