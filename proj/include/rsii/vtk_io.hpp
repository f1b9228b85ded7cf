#pragma once

#include <string>
#include <vector>

#include "rsii/geometry.hpp"
#include "rsii/solver.hpp"

namespace rsii {

/// Legacy ASCII PolyData writer: POINTS, POLYGONS, then POINT_DATA with
/// NORMALS (when frames are present), one SCALARS block per field, and a
/// FIELD block holding the remaining surface state (tangents, curvature,
/// end-ring membership, masks) so a written surface reloads losslessly.
/// Numbers are printed with 17 significant digits, which round-trips doubles
/// exactly.
void export_vtk(const TriangleSurface& surface, const std::vector<SurfaceField>& fields,
                const std::string& path);

struct LoadedSurface {
    TriangleSurface surface;
    std::vector<SurfaceField> fields;
};

/// Reads the subset written by export_vtk.
LoadedSurface load_surface_vtk(const std::string& path);

}  // namespace rsii
