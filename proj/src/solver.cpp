#include "rsii/solver.hpp"

#include <Eigen/Sparse>
#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>
#include <stdexcept>

namespace rsii {

void Material::validate() const {
    if (!(youngs_modulus_pa > 0.0))
        throw std::runtime_error("Material: Young's modulus must be positive");
    if (poisson_ratio < 0.0 || poisson_ratio >= 0.5)
        throw std::runtime_error("Material: Poisson ratio must lie in [0, 0.5)");
}

double WallMesh::tet_volume_mm3(int t) const {
    const auto& tt = tets[t];
    return (nodes[tt[1]] - nodes[tt[0]])
               .cross(nodes[tt[2]] - nodes[tt[0]])
               .dot(nodes[tt[3]] - nodes[tt[0]]) / 6.0;
}

// ---------------------------------------------------------------------------
// Mesh construction
// ---------------------------------------------------------------------------

namespace {

// Splits a positively oriented prism (bottom 0,1,2 / top 3,4,5) into 3 tets
// with diagonals anchored at the globally smallest node, so the two prisms
// sharing any quad face pick the same diagonal.
void split_prism(const std::array<int, 6>& prism, std::vector<std::array<int, 4>>& tets) {
    std::array<int, 6> p = prism;
    int arg = 0;
    for (int i = 1; i < 6; ++i)
        if (p[i] < p[arg]) arg = i;
    if (arg >= 3) {
        // flip top/bottom (orientation-preserving reflection)
        p = {p[3], p[5], p[4], p[0], p[2], p[1]};
        arg = arg == 3 ? 0 : (arg == 5 ? 1 : 2);
    }
    for (int r = 0; r < arg; ++r) p = {p[1], p[2], p[0], p[4], p[5], p[3]};

    if (std::min(p[1], p[5]) < std::min(p[2], p[4])) {
        tets.push_back({p[0], p[1], p[2], p[5]});
        tets.push_back({p[0], p[1], p[5], p[4]});
        tets.push_back({p[0], p[4], p[5], p[3]});
    } else {
        tets.push_back({p[0], p[1], p[2], p[4]});
        tets.push_back({p[0], p[4], p[2], p[5]});
        tets.push_back({p[0], p[4], p[5], p[3]});
    }
}

}  // namespace

WallMesh build_wall_mesh(const TriangleSurface& surface, double thickness_mm, int layers) {
    if (layers < 2) throw std::runtime_error("build_wall_mesh: layers must be >= 2");
    if (!(thickness_mm > 0.0))
        throw std::runtime_error("build_wall_mesh: thickness must be positive");
    if (!surface.has_frames())
        throw std::runtime_error("build_wall_mesh: surface frames not populated");

    const int nv = surface.vertex_count();
    WallMesh mesh;
    mesh.thickness_mm = thickness_mm;
    mesh.layers = layers;

    mesh.nodes.resize(static_cast<std::size_t>(nv) * (layers + 1));
    for (int s = 0; s <= layers; ++s) {
        const double depth = thickness_mm * s / layers;
        for (int v = 0; v < nv; ++v)
            mesh.nodes[static_cast<std::size_t>(s) * nv + v] =
                surface.vertices[v] - depth * surface.frames[v].normal;
    }

    mesh.node_columns.resize(nv);
    for (int v = 0; v < nv; ++v) {
        mesh.node_columns[v].resize(layers + 1);
        for (int s = 0; s <= layers; ++s) mesh.node_columns[v][s] = s * nv + v;
    }

    mesh.column_tets.resize(nv);
    for (const auto& tri : surface.triangles) {
        for (int l = 0; l < layers; ++l) {
            // bottom = outer skin wound clockwise so the prism is positive
            // when extruded inward
            std::array<int, 6> prism = {l * nv + tri[0],       l * nv + tri[2],
                                        l * nv + tri[1],       (l + 1) * nv + tri[0],
                                        (l + 1) * nv + tri[2], (l + 1) * nv + tri[1]};
            std::size_t first = mesh.tets.size();
            split_prism(prism, mesh.tets);
            for (std::size_t t = first; t < mesh.tets.size(); ++t)
                for (int e = 0; e < 3; ++e)
                    mesh.column_tets[tri[e]].push_back(static_cast<int>(t));
        }
        // lumen-side face, wound towards the lumen
        mesh.inner_faces.push_back(
            {layers * nv + tri[0], layers * nv + tri[2], layers * nv + tri[1]});
    }
    mesh.tet_region.assign(mesh.tets.size(), 0);

    std::vector<int> bad_vertices;
    for (std::size_t t = 0; t < mesh.tets.size(); ++t) {
        if (mesh.tet_volume_mm3(static_cast<int>(t)) <= 0.0) {
            bad_vertices.push_back(mesh.tets[t][0] % nv);
            if (bad_vertices.size() >= 8) break;
        }
    }
    if (!bad_vertices.empty()) {
        std::ostringstream msg;
        msg << "build_wall_mesh: inward offset inverts tets near vertices";
        for (int v : bad_vertices) msg << " " << v;
        throw std::runtime_error(msg.str());
    }

    // Fixed supports: end-ring columns, or 10-degree polar caps on closed
    // surfaces.
    std::vector<uint8_t> fixed_vertex(nv, 0);
    const bool open_ends =
        !surface.end_rings[0].empty() || !surface.end_rings[1].empty();
    if (open_ends) {
        for (const auto& ring : surface.end_rings)
            for (int v : ring) fixed_vertex[v] = 1;
    } else {
        Eigen::Vector3d centroid = Eigen::Vector3d::Zero();
        for (const auto& v : surface.vertices) centroid += v;
        centroid /= nv;
        const double cap = 10.0 * std::numbers::pi / 180.0;
        for (int v = 0; v < nv; ++v) {
            Eigen::Vector3d d = (surface.vertices[v] - centroid).normalized();
            double polar = std::acos(std::clamp(d.z(), -1.0, 1.0));
            if (polar <= cap || polar >= std::numbers::pi - cap) fixed_vertex[v] = 1;
        }
    }
    for (int v = 0; v < nv; ++v)
        if (fixed_vertex[v])
            for (int s = 0; s <= layers; ++s) mesh.fixed_nodes.push_back(s * nv + v);
    if (mesh.fixed_nodes.empty())
        throw std::runtime_error("build_wall_mesh: no fixed nodes found");
    return mesh;
}

// ---------------------------------------------------------------------------
// Linear elasticity
// ---------------------------------------------------------------------------

namespace {

using Matrix6d = Eigen::Matrix<double, 6, 6>;
using BMatrix = Eigen::Matrix<double, 6, 12>;

Matrix6d isotropic_stiffness(const Material& m) {
    const double e = m.youngs_modulus_pa, nu = m.poisson_ratio;
    const double lambda = e * nu / ((1 + nu) * (1 - 2 * nu));
    const double mu = e / (2 * (1 + nu));
    Matrix6d d = Matrix6d::Zero();
    for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 3; ++j) d(i, j) = lambda;
        d(i, i) = lambda + 2 * mu;
        d(3 + i, 3 + i) = mu;
    }
    return d;
}

// Constant B matrix of a linear tet with node positions in meters.
// Voigt order: xx, yy, zz, xy, yz, zx (engineering shear).
double tet_b_matrix(const Eigen::Vector3d p[4], BMatrix& b) {
    Eigen::Matrix3d jac;
    jac.col(0) = p[1] - p[0];
    jac.col(1) = p[2] - p[0];
    jac.col(2) = p[3] - p[0];
    const double det = jac.determinant();
    Eigen::Matrix3d inv_t = jac.inverse().transpose();

    Eigen::Vector3d grad[4];
    grad[1] = inv_t.col(0);
    grad[2] = inv_t.col(1);
    grad[3] = inv_t.col(2);
    grad[0] = -(grad[1] + grad[2] + grad[3]);

    b.setZero();
    for (int n = 0; n < 4; ++n) {
        const double gx = grad[n].x(), gy = grad[n].y(), gz = grad[n].z();
        b(0, 3 * n + 0) = gx;
        b(1, 3 * n + 1) = gy;
        b(2, 3 * n + 2) = gz;
        b(3, 3 * n + 0) = gy;
        b(3, 3 * n + 1) = gx;
        b(4, 3 * n + 1) = gz;
        b(4, 3 * n + 2) = gy;
        b(5, 3 * n + 0) = gz;
        b(5, 3 * n + 2) = gx;
    }
    return det / 6.0;  // volume (m^3)
}

}  // namespace

ElasticitySolution solve_elasticity(const WallMesh& mesh, double pressure_pa,
                                    const Material& wall,
                                    const std::optional<Material>& ilt) {
    if (!(pressure_pa >= 0.0))
        throw std::runtime_error("solve_elasticity: pressure must be >= 0");
    wall.validate();
    if (ilt) ilt->validate();
    if (mesh.fixed_nodes.empty())
        throw std::runtime_error("solve_elasticity: no fixed nodes");

    const int n_nodes = static_cast<int>(mesh.nodes.size());
    std::vector<uint8_t> is_fixed(n_nodes, 0);
    for (int n : mesh.fixed_nodes) is_fixed[n] = 1;
    std::vector<int> free_index(n_nodes, -1);
    int n_free = 0;
    for (int n = 0; n < n_nodes; ++n)
        if (!is_fixed[n]) free_index[n] = n_free++;

    const Matrix6d d_wall = isotropic_stiffness(wall);
    const Matrix6d d_ilt = ilt ? isotropic_stiffness(*ilt) : d_wall;

    // nodal loads (N): pressure on the lumen-side skin, pushing against the
    // stored face normal (which points into the lumen)
    std::vector<Eigen::Vector3d> force(n_nodes, Eigen::Vector3d::Zero());
    ElasticitySolution sol;
    for (const auto& f : mesh.inner_faces) {
        Eigen::Vector3d a = mesh.nodes[f[0]] * 1e-3;
        Eigen::Vector3d b = mesh.nodes[f[1]] * 1e-3;
        Eigen::Vector3d c = mesh.nodes[f[2]] * 1e-3;
        Eigen::Vector3d area_vec = 0.5 * (b - a).cross(c - a);
        Eigen::Vector3d face_force = -pressure_pa * area_vec;
        for (int e = 0; e < 3; ++e) force[f[e]] += face_force / 3.0;
        sol.total_load += face_force;
        sol.load_magnitude += pressure_pa * area_vec.norm();
    }

    // assembly (reduced system, fixed dofs eliminated)
    std::vector<Eigen::Triplet<double>> triplets;
    triplets.reserve(mesh.tets.size() * 78);
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(3 * n_free);
    for (int n = 0; n < n_nodes; ++n)
        if (free_index[n] >= 0)
            for (int c = 0; c < 3; ++c) rhs[3 * free_index[n] + c] = force[n][c];

    BMatrix b;
    for (std::size_t t = 0; t < mesh.tets.size(); ++t) {
        const auto& tt = mesh.tets[t];
        Eigen::Vector3d p[4];
        for (int n = 0; n < 4; ++n) p[n] = mesh.nodes[tt[n]] * 1e-3;
        const double vol = tet_b_matrix(p, b);
        if (vol <= 0.0)
            throw std::runtime_error("solve_elasticity: inverted tet " + std::to_string(t));
        const Matrix6d& d = mesh.tet_region[t] ? d_ilt : d_wall;
        Eigen::Matrix<double, 12, 12> ke = vol * b.transpose() * d * b;

        for (int r = 0; r < 4; ++r) {
            int rn = free_index[tt[r]];
            if (rn < 0) continue;
            for (int c = 0; c < 4; ++c) {
                int cn = free_index[tt[c]];
                if (cn < 0) continue;
                for (int rc = 0; rc < 3; ++rc)
                    for (int cc = 0; cc < 3; ++cc)
                        triplets.emplace_back(3 * rn + rc, 3 * cn + cc,
                                              ke(3 * r + rc, 3 * c + cc));
            }
        }
    }

    Eigen::SparseMatrix<double> k(3 * n_free, 3 * n_free);
    k.setFromTriplets(triplets.begin(), triplets.end());
    triplets.clear();
    triplets.shrink_to_fit();

    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt(k);
    if (ldlt.info() != Eigen::Success)
        throw std::runtime_error("solve_elasticity: factorization failed (singular system?)");
    Eigen::VectorXd u = ldlt.solve(rhs);
    double rhs_norm = rhs.norm();
    if (rhs_norm > 0.0 && (k * u - rhs).norm() / rhs_norm > 1e-9)
        u += ldlt.solve(rhs - k * u);
    if (rhs_norm > 0.0 && (k * u - rhs).norm() / rhs_norm > 1e-9)
        throw std::runtime_error("solve_elasticity: solve did not reach 1e-9 residual");

    // expand to all nodes (meters)
    std::vector<Eigen::Vector3d> u_full(n_nodes, Eigen::Vector3d::Zero());
    for (int n = 0; n < n_nodes; ++n)
        if (free_index[n] >= 0)
            u_full[n] = Eigen::Vector3d(u[3 * free_index[n]], u[3 * free_index[n] + 1],
                                        u[3 * free_index[n] + 2]);

    // element stresses and matrix-free reactions r = K_full u - f
    sol.stress.element_stress.resize(mesh.tets.size());
    std::vector<Eigen::Vector3d> residual(n_nodes, Eigen::Vector3d::Zero());
    Eigen::Matrix<double, 12, 1> ue;
    for (std::size_t t = 0; t < mesh.tets.size(); ++t) {
        const auto& tt = mesh.tets[t];
        Eigen::Vector3d p[4];
        for (int n = 0; n < 4; ++n) p[n] = mesh.nodes[tt[n]] * 1e-3;
        const double vol = tet_b_matrix(p, b);
        const Matrix6d& d = mesh.tet_region[t] ? d_ilt : d_wall;
        for (int n = 0; n < 4; ++n) ue.segment<3>(3 * n) = u_full[tt[n]];

        Eigen::Matrix<double, 6, 1> strain = b * ue;
        Eigen::Matrix<double, 6, 1> sv = d * strain;
        Eigen::Matrix3d& sigma = sol.stress.element_stress[t];
        sigma << sv[0], sv[3], sv[5],
                 sv[3], sv[1], sv[4],
                 sv[5], sv[4], sv[2];

        Eigen::Matrix<double, 12, 1> fe = vol * (b.transpose() * sv);
        for (int n = 0; n < 4; ++n) residual[tt[n]] += fe.segment<3>(3 * n);
    }
    for (int n = 0; n < n_nodes; ++n) residual[n] -= force[n];
    for (int n : mesh.fixed_nodes) sol.total_reaction += residual[n];

    sol.nodal_displacement_mm.resize(n_nodes);
    for (int n = 0; n < n_nodes; ++n) sol.nodal_displacement_mm[n] = u_full[n] * 1e3;
    return sol;
}

StressField uniform_stress_average(const WallMesh& mesh, const StressField& stress) {
    if (stress.element_stress.size() != mesh.tets.size())
        throw std::runtime_error("uniform_stress_average: missing element stresses");
    StressField out;
    out.element_stress = stress.element_stress;
    out.column_stress.assign(mesh.node_columns.size(), Eigen::Matrix3d::Zero());
    for (std::size_t v = 0; v < mesh.column_tets.size(); ++v) {
        const auto& stack = mesh.column_tets[v];
        if (stack.empty())
            throw std::runtime_error("uniform_stress_average: vertex without prism stack");
        double total = 0.0;
        Eigen::Matrix3d acc = Eigen::Matrix3d::Zero();
        for (int t : stack) {
            double vol = mesh.tet_volume_mm3(t);
            acc += vol * stress.element_stress[t];
            total += vol;
        }
        out.column_stress[v] = acc / total;
    }
    return out;
}

TensionFields wall_tension(const WallMesh& mesh, const StressField& averaged,
                           const TriangleSurface& surface,
                           const std::optional<Eigen::Vector3d>& axis) {
    if (averaged.column_stress.size() != surface.vertices.size())
        throw std::runtime_error("wall_tension: column stresses not available");
    if (!surface.has_frames())
        throw std::runtime_error("wall_tension: surface frames not populated");

    const double h = mesh.thickness_mm * 1e-3;  // meters
    const std::size_t nv = surface.vertices.size();
    TensionFields out{SurfaceField("tension_max_principal", "N/m", nv),
                      SurfaceField("tension_circumferential", "N/m", nv)};

    for (std::size_t v = 0; v < nv; ++v) {
        const LocalFrame& fr = surface.frames[v];
        const Eigen::Matrix3d& s = averaged.column_stress[v];

        const double s11 = fr.tangent1.dot(s * fr.tangent1);
        const double s22 = fr.tangent2.dot(s * fr.tangent2);
        const double s12 = fr.tangent1.dot(s * fr.tangent2);
        const double mean = 0.5 * (s11 + s22);
        const double dev = std::sqrt(0.25 * (s11 - s22) * (s11 - s22) + s12 * s12);
        out.max_principal.values[v] = h * (mean + dev);

        if (axis) {
            Eigen::Vector3d circ = axis->cross(fr.normal);
            double len = circ.norm();
            if (len < 1e-6) {
                out.circumferential.values[v] = 0.0;
                out.circumferential.valid[v] = 0;
            } else {
                circ /= len;
                out.circumferential.values[v] = h * circ.dot(s * circ);
            }
        } else {
            // without an axis, report the tangent1 component
            out.circumferential.values[v] = h * s11;
        }
    }
    return out;
}

}  // namespace rsii
