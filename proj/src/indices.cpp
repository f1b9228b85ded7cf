#include "rsii/indices.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace rsii {

DisplacementDecomposition normal_displacement(
    const std::vector<std::array<double, 3>>& vectors,
    const std::vector<LocalFrame>& frames) {
    if (vectors.size() != frames.size())
        throw std::runtime_error("normal_displacement: vector/frame count mismatch");
    const std::size_t n = vectors.size();
    DisplacementDecomposition out{SurfaceField("normal_displacement", "mm", n),
                                  SurfaceField("tangential_displacement", "mm", n)};
    for (std::size_t v = 0; v < n; ++v) {
        Eigen::Vector3d u(vectors[v][0], vectors[v][1], vectors[v][2]);
        double un = u.dot(frames[v].normal);
        out.normal_mm.values[v] = un;
        out.tangential_mm.values[v] = (u - un * frames[v].normal).norm();
    }
    return out;
}

SurfaceField circumferential_strain(const SurfaceField& un,
                                    const std::vector<double>& radius_mm,
                                    const std::vector<uint8_t>* near_flat) {
    if (radius_mm.size() != un.values.size())
        throw std::runtime_error("circumferential_strain: radius count mismatch");
    SurfaceField strain("strain_circ", "1", un.values.size());
    for (std::size_t v = 0; v < un.values.size(); ++v) {
        bool flat = near_flat && (*near_flat)[v];
        if (!(radius_mm[v] > 0.0))
            throw std::runtime_error("circumferential_strain: non-positive radius");
        if (flat || !un.valid[v]) {
            strain.valid[v] = 0;
            continue;
        }
        strain.values[v] = un.values[v] / radius_mm[v];  // both in mm
    }
    return strain;
}

SurfaceField structural_integrity_index(const SurfaceField& strain,
                                        const SurfaceField& tension) {
    if (strain.values.size() != tension.values.size())
        throw std::runtime_error("structural_integrity_index: field size mismatch");
    SurfaceField sii("sii", "m/N", strain.values.size());
    for (std::size_t v = 0; v < strain.values.size(); ++v) {
        if (!strain.valid[v] || !tension.valid[v] || !(tension.values[v] > 0.0)) {
            sii.valid[v] = 0;
            continue;
        }
        sii.values[v] = strain.values[v] / tension.values[v];
    }
    return sii;
}

SurfaceField relative_sii(const SurfaceField& sii, const RsiiOptions& options,
                          const TriangleSurface* surface) {
    std::vector<double> weight(sii.values.size(), 1.0);
    if (options.area_weighted_mean) {
        if (!surface || surface->vertices.size() != sii.values.size())
            throw std::runtime_error("relative_sii: surface required for area weighting");
        std::fill(weight.begin(), weight.end(), 0.0);
        for (const auto& t : surface->triangles) {
            double area = 0.5 *
                          (surface->vertices[t[1]] - surface->vertices[t[0]])
                              .cross(surface->vertices[t[2]] - surface->vertices[t[0]])
                              .norm();
            for (int e = 0; e < 3; ++e) weight[t[e]] += area / 3.0;
        }
    }

    double acc = 0.0, wsum = 0.0;
    for (std::size_t v = 0; v < sii.values.size(); ++v) {
        if (!sii.valid[v]) continue;
        double x = options.signed_variant ? sii.values[v] : std::abs(sii.values[v]);
        acc += weight[v] * x;
        wsum += weight[v];
    }
    if (wsum <= 0.0) throw std::runtime_error("relative_sii: no unmasked vertices");
    const double mean = acc / wsum;
    if (mean == 0.0) throw std::runtime_error("relative_sii: mean(|SII|) is zero");

    SurfaceField rsii("rsii", "1", sii.values.size());
    for (std::size_t v = 0; v < sii.values.size(); ++v) {
        if (!sii.valid[v]) {
            rsii.valid[v] = 0;
            continue;
        }
        double x = options.signed_variant ? sii.values[v] : std::abs(sii.values[v]);
        rsii.values[v] = x / mean;
    }
    return rsii;
}

double percentile_abs(const std::vector<double>& values,
                      const std::vector<uint8_t>& valid, double pct) {
    std::vector<double> mags;
    mags.reserve(values.size());
    for (std::size_t v = 0; v < values.size(); ++v)
        if (valid.empty() || valid[v]) mags.push_back(std::abs(values[v]));
    if (mags.empty()) throw std::runtime_error("percentile: empty field");
    std::sort(mags.begin(), mags.end());
    const double rank = pct / 100.0 * (static_cast<double>(mags.size()) - 1.0);
    const std::size_t lo = static_cast<std::size_t>(rank);
    if (lo + 1 >= mags.size()) return mags.back();
    const double f = rank - static_cast<double>(lo);
    return mags[lo] + f * (mags[lo + 1] - mags[lo]);
}

FieldStats field_stats(const SurfaceField& field) {
    FieldStats s;
    double acc = 0.0;
    int n = 0;
    for (std::size_t v = 0; v < field.values.size(); ++v) {
        if (!field.valid[v]) {
            ++s.masked;
            continue;
        }
        acc += field.values[v];
        ++n;
    }
    if (n == 0) return s;  // fully masked field reports zeros plus the count
    s.mean = acc / n;
    double var = 0.0;
    for (std::size_t v = 0; v < field.values.size(); ++v)
        if (field.valid[v]) var += (field.values[v] - s.mean) * (field.values[v] - s.mean);
    s.stddev = std::sqrt(var / n);
    s.p99_abs = percentile_abs(field.values, field.valid, 99.0);
    return s;
}

PercentileReport percentile_report(const SurfaceField& tension,
                                   const SurfaceField& strain, const SurfaceField& sii,
                                   const SurfaceField& rsii) {
    PercentileReport r;
    r.tension = field_stats(tension);
    r.strain = field_stats(strain);
    r.sii = field_stats(sii);
    r.rsii = field_stats(rsii);
    r.total_vertices = static_cast<int>(tension.values.size());
    return r;
}

IndexBundle compute_indices(const std::vector<std::array<double, 3>>& wall_disp_mm,
                            const TriangleSurface& surface, const SurfaceField& tension,
                            const RsiiOptions& options) {
    if (!surface.has_frames())
        throw std::runtime_error("compute_indices: surface frames not populated");
    if (surface.curvature_radius_mm.size() != surface.vertices.size())
        throw std::runtime_error("compute_indices: curvature not estimated");

    IndexBundle b;
    auto decomp = normal_displacement(wall_disp_mm, surface.frames);
    b.normal_disp = std::move(decomp.normal_mm);
    b.tangential = std::move(decomp.tangential_mm);
    b.strain = circumferential_strain(b.normal_disp, surface.curvature_radius_mm,
                                      surface.curvature_near_flat.empty()
                                          ? nullptr
                                          : &surface.curvature_near_flat);
    b.sii = structural_integrity_index(b.strain, tension);

    const double strain_p99 = percentile_abs(b.strain.values, b.strain.valid, 99.0);
    bool degenerate = strain_p99 < kDegenerateStrainP99;
    if (!degenerate) {
        b.rsii = relative_sii(b.sii, options, &surface);
    } else {
        // noise-level deformation: RSII would be noise/noise, report it masked
        b.rsii = SurfaceField("rsii", "1", b.sii.values.size());
        std::fill(b.rsii.valid.begin(), b.rsii.valid.end(), 0);
    }
    b.report = percentile_report(tension, b.strain, b.sii, b.rsii);
    b.report.degenerate_rsii = degenerate;
    return b;
}

}  // namespace rsii
