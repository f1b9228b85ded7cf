#include "rsii/field.hpp"

#include <cmath>
#include <stdexcept>

namespace rsii {

DisplacementField::DisplacementField(const VoxelGrid& g)
    : dims(g.dims), spacing(g.spacing), origin(g.origin) {
    ux.assign(g.size(), 0.0f);
    uy.assign(g.size(), 0.0f);
    uz.assign(g.size(), 0.0f);
}

bool DisplacementField::matches_geometry(const VoxelGrid& grid, double tol) const {
    if (dims != grid.dims) return false;
    for (int a = 0; a < 3; ++a) {
        if (std::abs(spacing[a] - grid.spacing[a]) > tol) return false;
        if (std::abs(origin[a] - grid.origin[a]) > tol) return false;
    }
    return true;
}

void DisplacementField::validate_finite() const {
    for (std::size_t v = 0; v < ux.size(); ++v) {
        if (!std::isfinite(ux[v]) || !std::isfinite(uy[v]) || !std::isfinite(uz[v]))
            throw std::runtime_error("displacement field contains non-finite values");
    }
}

VoxelGrid DisplacementField::component_grid(int axis) const {
    VoxelGrid g;
    g.dims = dims;
    g.spacing = spacing;
    g.origin = origin;
    g.data = axis == 0 ? ux : (axis == 1 ? uy : uz);
    return g;
}

std::array<double, 3> sample_field(const DisplacementField& field,
                                   const std::array<double, 3>& p) {
    int i0[3], i1[3];
    double f[3];
    for (int a = 0; a < 3; ++a) {
        double c = (p[a] - field.origin[a]) / field.spacing[a];
        if (c <= 0.0) {
            i0[a] = i1[a] = 0;
            f[a] = 0.0;
        } else if (c >= field.dims[a] - 1) {
            i0[a] = i1[a] = field.dims[a] - 1;
            f[a] = 0.0;
        } else {
            i0[a] = static_cast<int>(c);
            i1[a] = i0[a] + 1;
            f[a] = c - i0[a];
        }
    }
    std::array<double, 3> out{0.0, 0.0, 0.0};
    for (int d = 0; d < 2; ++d)
        for (int b = 0; b < 2; ++b)
            for (int a = 0; a < 2; ++a) {
                double w = (a ? f[0] : 1 - f[0]) * (b ? f[1] : 1 - f[1]) *
                           (d ? f[2] : 1 - f[2]);
                if (w == 0.0) continue;
                std::size_t idx = field.index(a ? i1[0] : i0[0], b ? i1[1] : i0[1],
                                              d ? i1[2] : i0[2]);
                out[0] += w * field.ux[idx];
                out[1] += w * field.uy[idx];
                out[2] += w * field.uz[idx];
            }
    return out;
}

void save_field(const DisplacementField& field, const std::string& prefix) {
    field.validate_finite();
    for (int axis = 0; axis < 3; ++axis) {
        const char* suffix = axis == 0 ? "_x.mhd" : (axis == 1 ? "_y.mhd" : "_z.mhd");
        save_volume(field.component_grid(axis), prefix + suffix);
    }
}

DisplacementField load_field(const std::string& prefix) {
    VoxelGrid x = load_volume(prefix + "_x.mhd");
    VoxelGrid y = load_volume(prefix + "_y.mhd");
    VoxelGrid z = load_volume(prefix + "_z.mhd");
    if (!x.same_geometry(y) || !x.same_geometry(z))
        throw std::runtime_error("field components disagree on geometry: " + prefix);
    DisplacementField f;
    f.dims = x.dims;
    f.spacing = x.spacing;
    f.origin = x.origin;
    f.ux = std::move(x.data);
    f.uy = std::move(y.data);
    f.uz = std::move(z.data);
    f.validate_finite();
    return f;
}

}  // namespace rsii
