#pragma once

#include <array>
#include <vector>

#include "rsii/solver.hpp"

namespace rsii {

/// Decomposition of per-vertex displacement into the local frame: signed
/// normal component (positive = outward) and tangential magnitude.
struct DisplacementDecomposition {
    SurfaceField normal_mm;      // signed
    SurfaceField tangential_mm;  // magnitude, diagnostic
};
DisplacementDecomposition normal_displacement(
    const std::vector<std::array<double, 3>>& vertex_vectors_mm,
    const std::vector<LocalFrame>& frames);

/// strain = u_n / R per vertex (signed, negative = compressive). Vertices
/// with a near-flat curvature flag are masked rather than divided by the
/// clamp value.
SurfaceField circumferential_strain(const SurfaceField& normal_disp_mm,
                                    const std::vector<double>& radius_mm,
                                    const std::vector<uint8_t>* near_flat = nullptr);

/// SII = strain / tension, m/N, signed by the strain. Vertices with
/// non-positive tension are masked.
SurfaceField structural_integrity_index(const SurfaceField& strain,
                                        const SurfaceField& tension);

struct RsiiOptions {
    bool signed_variant = false;      // SII/mean(SII) instead of |SII|/mean|SII|
    bool area_weighted_mean = false;  // weight the mean by vertex area
};

/// RSII = |SII| / mean(|SII|) over unmasked vertices (vertex-uniform mean by
/// default). Throws when the mean vanishes. `surface` is only needed for the
/// area-weighted variant.
SurfaceField relative_sii(const SurfaceField& sii, const RsiiOptions& options = {},
                          const TriangleSurface* surface = nullptr);

/// Linear-interpolation quantile of |values| over unmasked vertices:
/// rank = pct/100 * (n - 1) between order statistics.
double percentile_abs(const std::vector<double>& values,
                      const std::vector<uint8_t>& valid, double pct);

struct FieldStats {
    double p99_abs = 0.0;  // 99th percentile of |value|
    double mean = 0.0;
    double stddev = 0.0;  // population
    int masked = 0;
};
FieldStats field_stats(const SurfaceField& field);

/// Per-case report in SI units; converted to the clinical units at the JSON
/// boundary.
struct PercentileReport {
    FieldStats tension;  // N/m
    FieldStats strain;   // dimensionless
    FieldStats sii;      // m/N
    FieldStats rsii;     // dimensionless
    int total_vertices = 0;
    bool degenerate_rsii = false;
};
PercentileReport percentile_report(const SurfaceField& tension,
                                   const SurfaceField& strain, const SurfaceField& sii,
                                   const SurfaceField& rsii);

/// All per-vertex index fields over one surface.
struct IndexBundle {
    SurfaceField normal_disp;  // mm
    SurfaceField tangential;   // mm
    SurfaceField strain;       // 1
    SurfaceField sii;          // m/N
    SurfaceField rsii;         // 1
    PercentileReport report;
};

/// Threshold below which the strain field counts as degenerate (no real
/// deformation signal; RSII is then noise over noise).
inline constexpr double kDegenerateStrainP99 = 1e-3;

/// strain -> SII -> RSII -> report, with the degenerate-RSII flag raised when
/// the 99th-percentile |strain| falls under kDegenerateStrainP99.
IndexBundle compute_indices(const std::vector<std::array<double, 3>>& wall_disp_mm,
                            const TriangleSurface& surface,
                            const SurfaceField& tension,
                            const RsiiOptions& options = {});

}  // namespace rsii
