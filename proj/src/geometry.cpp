#include "rsii/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <random>
#include <stdexcept>
#include <unordered_map>

namespace rsii {

namespace detail {
extern const uint16_t kMcEdgeTable[256];
extern const int8_t kMcTriTable[256][16];
}  // namespace detail

// ---------------------------------------------------------------------------
// TriangleSurface helpers
// ---------------------------------------------------------------------------

double TriangleSurface::mean_edge_length() const {
    double total = 0.0;
    std::size_t count = 0;
    for (const auto& t : triangles) {
        for (int e = 0; e < 3; ++e) {
            total += (vertices[t[e]] - vertices[t[(e + 1) % 3]]).norm();
            ++count;
        }
    }
    return count ? total / static_cast<double>(count) : 0.0;
}

std::vector<Eigen::Vector3d> TriangleSurface::triangle_vertex_normals() const {
    std::vector<Eigen::Vector3d> normals(vertices.size(), Eigen::Vector3d::Zero());
    for (const auto& t : triangles) {
        Eigen::Vector3d n = (vertices[t[1]] - vertices[t[0]])
                                .cross(vertices[t[2]] - vertices[t[0]]);
        for (int e = 0; e < 3; ++e) normals[t[e]] += n;  // area weighting
    }
    for (auto& n : normals) {
        double len = n.norm();
        if (len > 0.0) n /= len;
    }
    return normals;
}

int TriangleSurface::euler_characteristic() const {
    std::map<std::pair<int, int>, int> edges;
    for (const auto& t : triangles)
        for (int e = 0; e < 3; ++e) {
            int a = t[e], b = t[(e + 1) % 3];
            edges[{std::min(a, b), std::max(a, b)}]++;
        }
    return vertex_count() - static_cast<int>(edges.size()) + triangle_count();
}

// ---------------------------------------------------------------------------
// Marching cubes
// ---------------------------------------------------------------------------

namespace {

// Corner offsets in the table convention (second axis plays Bourke's "up").
constexpr int kCorner[8][3] = {{0, 0, 0}, {1, 0, 0}, {1, 0, 1}, {0, 0, 1},
                               {0, 1, 0}, {1, 1, 0}, {1, 1, 1}, {0, 1, 1}};

// For each of the 12 cell edges: the owning corner and the lattice axis, so
// shared edges get one canonical id (and therefore one welded vertex).
struct EdgeSlot {
    int corner;  // corner at the low end of the lattice edge
    int axis;
};
constexpr EdgeSlot kEdgeSlot[12] = {
    {0, 0}, {1, 2}, {3, 0}, {0, 2}, {4, 0}, {5, 2},
    {7, 0}, {4, 2}, {0, 1}, {1, 1}, {2, 1}, {3, 1},
};

}  // namespace

TriangleSurface extract_surface(const LabelMap& labels, int label_code, double iso) {
    const VoxelGrid& lg = labels.grid;
    if (label_code < 1 || label_code > 2)
        throw std::runtime_error("extract_surface: label code must be 1 or 2");

    // Indicator of the region enclosed by the requested code (labels nest:
    // lumen inside wall), then sigma = 1 voxel presmoothing.
    VoxelGrid indicator = lg;
    bool any = false;
    for (std::size_t v = 0; v < lg.data.size(); ++v) {
        bool inside = static_cast<int>(lg.data[v]) >= label_code;
        indicator.data[v] = inside ? 1.0f : 0.0f;
        any = any || inside;
    }
    if (!any) throw std::runtime_error("extract_surface: empty label region");
    indicator = gaussian_smooth_voxels(indicator, 1.0);

    const int nx = lg.dims[0], ny = lg.dims[1], nz = lg.dims[2];
    auto lattice_edge_id = [&](int i, int j, int k, int axis) {
        return (static_cast<uint64_t>(k) * ny + j) * nx * 3 + static_cast<uint64_t>(i) * 3 +
               static_cast<uint64_t>(axis);
    };

    TriangleSurface surf;
    std::unordered_map<uint64_t, int> edge_vertex;
    edge_vertex.reserve(1 << 16);

    auto vertex_on_edge = [&](int i, int j, int k, int axis) {
        uint64_t id = lattice_edge_id(i, j, k, axis);
        auto it = edge_vertex.find(id);
        if (it != edge_vertex.end()) return it->second;
        int i2 = i + (axis == 0), j2 = j + (axis == 1), k2 = k + (axis == 2);
        double va = indicator.at(i, j, k);
        double vb = indicator.at(i2, j2, k2);
        double t = (iso - va) / (vb - va);
        // keep intersections off the lattice corners so no degenerate
        // triangles or duplicate positions are produced
        t = std::clamp(t, 0.01, 0.99);
        auto pa = lg.voxel_center(i, j, k);
        auto pb = lg.voxel_center(i2, j2, k2);
        Eigen::Vector3d p(pa[0] + t * (pb[0] - pa[0]), pa[1] + t * (pb[1] - pa[1]),
                          pa[2] + t * (pb[2] - pa[2]));
        int idx = surf.vertex_count();
        surf.vertices.push_back(p);
        edge_vertex.emplace(id, idx);
        return idx;
    };

    double corner_val[8];
    for (int k = 0; k < nz - 1; ++k)
        for (int j = 0; j < ny - 1; ++j)
            for (int i = 0; i < nx - 1; ++i) {
                int cube = 0;
                for (int c = 0; c < 8; ++c) {
                    corner_val[c] = indicator.at(i + kCorner[c][0], j + kCorner[c][1],
                                                 k + kCorner[c][2]);
                    if (corner_val[c] < iso) cube |= 1 << c;
                }
                if (detail::kMcEdgeTable[cube] == 0) continue;

                int edge_vtx[12];
                for (int e = 0; e < 12; ++e) {
                    if (!(detail::kMcEdgeTable[cube] & (1 << e))) continue;
                    const EdgeSlot& s = kEdgeSlot[e];
                    edge_vtx[e] = vertex_on_edge(i + kCorner[s.corner][0],
                                                 j + kCorner[s.corner][1],
                                                 k + kCorner[s.corner][2], s.axis);
                }
                for (int n = 0; detail::kMcTriTable[cube][n] != -1; n += 3) {
                    int a = edge_vtx[detail::kMcTriTable[cube][n]];
                    int b = edge_vtx[detail::kMcTriTable[cube][n + 1]];
                    int c = edge_vtx[detail::kMcTriTable[cube][n + 2]];
                    if (a == b || b == c || a == c) continue;
                    surf.triangles.push_back({a, b, c});
                }
            }

    if (surf.triangles.empty())
        throw std::runtime_error("extract_surface: no surface at the requested iso level");

    // Orient outward: flip everything if the flux of the position field
    // through the surface comes out negative.
    Eigen::Vector3d centroid = Eigen::Vector3d::Zero();
    for (const auto& v : surf.vertices) centroid += v;
    centroid /= surf.vertex_count();
    double flux = 0.0;
    for (const auto& t : surf.triangles) {
        Eigen::Vector3d n = (surf.vertices[t[1]] - surf.vertices[t[0]])
                                .cross(surf.vertices[t[2]] - surf.vertices[t[0]]);
        Eigen::Vector3d mid =
            (surf.vertices[t[0]] + surf.vertices[t[1]] + surf.vertices[t[2]]) / 3.0;
        flux += n.dot(mid - centroid);
    }
    if (flux < 0.0)
        for (auto& t : surf.triangles) std::swap(t[1], t[2]);

    // Manifold check and boundary loops.
    std::map<std::pair<int, int>, int> edge_count;
    for (const auto& t : surf.triangles)
        for (int e = 0; e < 3; ++e) {
            int a = t[e], b = t[(e + 1) % 3];
            edge_count[{std::min(a, b), std::max(a, b)}]++;
        }
    std::vector<std::pair<int, int>> boundary;
    for (const auto& [edge, count] : edge_count) {
        if (count > 2)
            throw std::runtime_error("extract_surface: non-manifold edge after welding");
        if (count == 1) boundary.push_back(edge);
    }

    if (!boundary.empty()) {
        double zmin = std::numeric_limits<double>::max();
        double zmax = std::numeric_limits<double>::lowest();
        for (const auto& v : surf.vertices) {
            zmin = std::min(zmin, v.z());
            zmax = std::max(zmax, v.z());
        }
        const double slab = 2.0 * (*std::max_element(lg.spacing.begin(), lg.spacing.end()));
        for (const auto& [a, b] : boundary) {
            for (int v : {a, b}) {
                double z = surf.vertices[v].z();
                if (z <= zmin + slab)
                    surf.end_rings[0].push_back(v);
                else if (z >= zmax - slab)
                    surf.end_rings[1].push_back(v);
            }
        }
        for (auto& ring : surf.end_rings) {
            std::sort(ring.begin(), ring.end());
            ring.erase(std::unique(ring.begin(), ring.end()), ring.end());
        }
    }
    return surf;
}

// ---------------------------------------------------------------------------
// Spatial hash for neighbor queries
// ---------------------------------------------------------------------------

namespace {

class PointGrid {
public:
    PointGrid(const std::vector<Eigen::Vector3d>& points, double cell_size)
        : points_(points), cell_(std::max(cell_size, 1e-9)) {
        min_ = Eigen::Vector3d::Constant(std::numeric_limits<double>::max());
        Eigen::Vector3d max = Eigen::Vector3d::Constant(std::numeric_limits<double>::lowest());
        for (const auto& p : points) {
            min_ = min_.cwiseMin(p);
            max = max.cwiseMax(p);
        }
        for (int a = 0; a < 3; ++a)
            dims_[a] = std::max(
                1, static_cast<int>(std::floor((max[a] - min_[a]) / cell_)) + 1);
        cells_.resize(static_cast<std::size_t>(dims_[0]) * dims_[1] * dims_[2]);
        for (int i = 0; i < static_cast<int>(points.size()); ++i)
            cells_[cell_index(cell_of(points[i]))].push_back(i);
    }

    std::vector<int> radius_query(const Eigen::Vector3d& p, double radius) const {
        std::vector<int> out;
        auto lo = cell_of(p - Eigen::Vector3d::Constant(radius));
        auto hi = cell_of(p + Eigen::Vector3d::Constant(radius));
        const double r2 = radius * radius;
        for (int ck = lo[2]; ck <= hi[2]; ++ck)
            for (int cj = lo[1]; cj <= hi[1]; ++cj)
                for (int ci = lo[0]; ci <= hi[0]; ++ci)
                    for (int idx : cells_[cell_index({ci, cj, ck})])
                        if ((points_[idx] - p).squaredNorm() <= r2) out.push_back(idx);
        std::sort(out.begin(), out.end());
        return out;
    }

    std::vector<int> knn(const Eigen::Vector3d& p, int k) const {
        std::vector<std::pair<double, int>> cand;
        double radius = cell_;
        for (int attempt = 0; attempt < 64; ++attempt) {
            auto idx = radius_query(p, radius);
            if (static_cast<int>(idx.size()) >= k) {
                cand.clear();
                for (int i : idx) cand.push_back({(points_[i] - p).squaredNorm(), i});
                std::sort(cand.begin(), cand.end());
                // all k found within the queried ball -> exact
                if (cand[k - 1].first <= radius * radius) break;
            }
            radius *= 2.0;
        }
        std::vector<int> out;
        for (int i = 0; i < k && i < static_cast<int>(cand.size()); ++i)
            out.push_back(cand[i].second);
        return out;
    }

private:
    std::array<int, 3> cell_of(const Eigen::Vector3d& p) const {
        std::array<int, 3> c;
        for (int a = 0; a < 3; ++a)
            c[a] = std::clamp(static_cast<int>(std::floor((p[a] - min_[a]) / cell_)), 0,
                              dims_[a] - 1);
        return c;
    }
    std::size_t cell_index(const std::array<int, 3>& c) const {
        return (static_cast<std::size_t>(c[2]) * dims_[1] + c[1]) * dims_[0] + c[0];
    }

    const std::vector<Eigen::Vector3d>& points_;
    double cell_;
    Eigen::Vector3d min_;
    std::array<int, 3> dims_{1, 1, 1};
    std::vector<std::vector<int>> cells_;
};

}  // namespace

// ---------------------------------------------------------------------------
// Local frames
// ---------------------------------------------------------------------------

void local_frames(TriangleSurface& surface, int neighborhood_k) {
    if (neighborhood_k < 6)
        throw std::runtime_error("local_frames: neighborhood_k must be >= 6");
    if (surface.vertex_count() < neighborhood_k)
        throw std::runtime_error("local_frames: not enough vertices");

    const double cell = std::max(surface.mean_edge_length(), 1e-6);
    PointGrid grid(surface.vertices, 1.5 * cell);
    const auto mesh_normals = surface.triangle_vertex_normals();

    Eigen::Vector3d centroid = Eigen::Vector3d::Zero();
    for (const auto& v : surface.vertices) centroid += v;
    centroid /= surface.vertex_count();

    surface.frames.assign(surface.vertices.size(), LocalFrame{});
    for (int v = 0; v < surface.vertex_count(); ++v) {
        auto nn = grid.knn(surface.vertices[v], neighborhood_k);
        Eigen::Vector3d mean = Eigen::Vector3d::Zero();
        for (int i : nn) mean += surface.vertices[i];
        mean /= static_cast<double>(nn.size());
        Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
        for (int i : nn) {
            Eigen::Vector3d d = surface.vertices[i] - mean;
            cov += d * d.transpose();
        }
        Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(cov);
        const auto& evals = eig.eigenvalues();  // ascending
        if (evals[1] <= 1e-12 * std::max(evals[2], 1e-300))
            throw std::runtime_error("local_frames: degenerate neighborhood at vertex " +
                                     std::to_string(v));

        Eigen::Vector3d n = eig.eigenvectors().col(0);
        Eigen::Vector3d ref = mesh_normals[v];
        if (ref.squaredNorm() < 1e-12) ref = surface.vertices[v] - centroid;
        if (n.dot(ref) < 0.0) n = -n;
        n.normalize();

        Eigen::Vector3d t1 = eig.eigenvectors().col(2);
        t1 -= t1.dot(n) * n;
        if (t1.squaredNorm() < 1e-12) {
            t1 = eig.eigenvectors().col(1);
            t1 -= t1.dot(n) * n;
        }
        t1.normalize();
        surface.frames[v] = LocalFrame{n, t1, n.cross(t1)};
    }
}

// ---------------------------------------------------------------------------
// Curvature via MLESAC sphere fitting
// ---------------------------------------------------------------------------

namespace {

struct SphereModel {
    Eigen::Vector3d center;
    double radius = 0.0;
};

bool circumsphere(const Eigen::Vector3d& p0, const Eigen::Vector3d& p1,
                  const Eigen::Vector3d& p2, const Eigen::Vector3d& p3,
                  SphereModel& out) {
    Eigen::Matrix3d a;
    Eigen::Vector3d b;
    a.row(0) = 2.0 * (p1 - p0).transpose();
    a.row(1) = 2.0 * (p2 - p0).transpose();
    a.row(2) = 2.0 * (p3 - p0).transpose();
    b << p1.squaredNorm() - p0.squaredNorm(), p2.squaredNorm() - p0.squaredNorm(),
        p3.squaredNorm() - p0.squaredNorm();
    double det = a.determinant();
    double scale = a.cwiseAbs().maxCoeff();
    if (std::abs(det) < 1e-12 * scale * scale * scale) return false;
    out.center = a.partialPivLu().solve(b);
    out.radius = (p0 - out.center).norm();
    return true;
}

// smallest height of any sample over the plane of the other three; quadruples
// flatter than the inlier tolerance carry no usable curvature
double min_height(const Eigen::Vector3d p[4]) {
    double hmin = std::numeric_limits<double>::max();
    for (int i = 0; i < 4; ++i) {
        const Eigen::Vector3d& a = p[(i + 1) % 4];
        const Eigen::Vector3d& b = p[(i + 2) % 4];
        const Eigen::Vector3d& c = p[(i + 3) % 4];
        Eigen::Vector3d n = (b - a).cross(c - a);
        double len = n.norm();
        if (len < 1e-12) return 0.0;
        hmin = std::min(hmin, std::abs((p[i] - a).dot(n) / len));
    }
    return hmin;
}

// Algebraic least-squares sphere through a point set.
bool ls_sphere(const std::vector<Eigen::Vector3d>& pts, SphereModel& out) {
    const int n = static_cast<int>(pts.size());
    if (n < 4) return false;
    Eigen::MatrixXd m(n, 4);
    Eigen::VectorXd rhs(n);
    for (int i = 0; i < n; ++i) {
        m(i, 0) = 2.0 * pts[i].x();
        m(i, 1) = 2.0 * pts[i].y();
        m(i, 2) = 2.0 * pts[i].z();
        m(i, 3) = 1.0;
        rhs(i) = pts[i].squaredNorm();
    }
    Eigen::Vector4d sol = (m.transpose() * m).ldlt().solve(m.transpose() * rhs);
    out.center = sol.head<3>();
    double r2 = sol[3] + out.center.squaredNorm();
    if (!(r2 > 0.0) || !std::isfinite(r2)) return false;
    out.radius = std::sqrt(r2);
    return true;
}

double truncated_loss(const std::vector<Eigen::Vector3d>& pts, const SphereModel& m,
                      double tol) {
    double acc = 0.0;
    for (const auto& p : pts) {
        double res = (p - m.center).norm() - m.radius;
        acc += std::min(res * res, tol * tol);
    }
    return acc;
}

int count_inliers(const std::vector<Eigen::Vector3d>& pts, const SphereModel& m,
                  double tol) {
    int n = 0;
    for (const auto& p : pts)
        if (std::abs((p - m.center).norm() - m.radius) < tol) ++n;
    return n;
}

}  // namespace

namespace {

double curvature_with_grid(const TriangleSurface& surface, int vertex,
                           double neighborhood_radius_mm, const MlesacConfig& cfg,
                           const PointGrid& grid, bool* near_flat) {
    const double nr = neighborhood_radius_mm;
    if (!(nr > 0.0)) throw std::runtime_error("curvature: neighborhood radius must be > 0");
    auto nbr_idx = grid.radius_query(surface.vertices[vertex], nr);
    if (static_cast<int>(nbr_idx.size()) < 10)
        throw std::runtime_error("curvature: fewer than 10 neighbors at vertex " +
                                 std::to_string(vertex));
    // cap the sample set so dense meshes stay affordable; stride keeps the
    // selection deterministic and rigid-motion invariant
    constexpr int kMaxSamples = 96;
    std::vector<Eigen::Vector3d> pts;
    if (static_cast<int>(nbr_idx.size()) > kMaxSamples) {
        const std::size_t stride = (nbr_idx.size() + kMaxSamples - 1) / kMaxSamples;
        for (std::size_t i = 0; i < nbr_idx.size(); i += stride)
            pts.push_back(surface.vertices[nbr_idx[i]]);
    } else {
        pts.reserve(nbr_idx.size());
        for (int i : nbr_idx) pts.push_back(surface.vertices[i]);
    }

    const double lo = 0.5 * nr, hi = 100.0 * nr;
    const double tol = cfg.inlier_tol_mm;
    const int n = static_cast<int>(pts.size());

    // per-vertex stream so a standalone call matches the whole-surface sweep
    std::mt19937 rng(cfg.seed ^ (0x9e3779b9u * static_cast<uint32_t>(vertex + 1)));
    std::uniform_int_distribution<int> pick(0, n - 1);

    // proposals: 4-point circumspheres, rejecting quadruples flatter than the
    // tolerance (they only encode noise); relax the height cut when the whole
    // patch is flatter than that
    std::vector<std::pair<double, SphereModel>> candidates;
    double h_min = 1.5 * tol;
    for (int attempt = 0; attempt < 4; ++attempt) {
        for (int trial = 0; trial < cfg.trials; ++trial) {
            int a = pick(rng), b = pick(rng), c = pick(rng), d = pick(rng);
            if (a == b || a == c || a == d || b == c || b == d || c == d) continue;
            Eigen::Vector3d quad[4] = {pts[a], pts[b], pts[c], pts[d]};
            if (min_height(quad) < h_min) continue;
            SphereModel m;
            if (!circumsphere(quad[0], quad[1], quad[2], quad[3], m)) continue;
            if (m.radius < lo || m.radius > hi) continue;
            candidates.emplace_back(truncated_loss(pts, m, tol), m);
        }
        if (static_cast<int>(candidates.size()) >= std::max(10, cfg.trials / 20)) break;
        h_min *= 0.5;
    }

    bool flat = candidates.empty();
    double radius = hi;
    if (!flat) {
        std::stable_sort(candidates.begin(), candidates.end(),
                         [](const auto& x, const auto& y) { return x.first < y.first; });

        // locally optimize the strongest few: refit on inliers while the
        // truncated score keeps improving
        bool found = false;
        double best_score = std::numeric_limits<double>::max();
        for (std::size_t k = 0; k < candidates.size() && k < 5; ++k) {
            SphereModel m = candidates[k].second;
            double score = candidates[k].first;
            for (int round = 0; round < 3; ++round) {
                std::vector<Eigen::Vector3d> inliers;
                for (const auto& p : pts)
                    if (std::abs((p - m.center).norm() - m.radius) < tol)
                        inliers.push_back(p);
                SphereModel refined;
                if (inliers.size() < 4 || !ls_sphere(inliers, refined)) break;
                double refined_score = truncated_loss(pts, refined, tol);
                if (refined_score < score) {
                    m = refined;
                    score = refined_score;
                } else {
                    break;
                }
            }
            if (count_inliers(pts, m, tol) < static_cast<int>(0.4 * n)) continue;
            if (score < best_score) {
                best_score = score;
                radius = m.radius;
                found = true;
            }
        }
        flat = !found;
        if (!found) radius = hi;
    }

    if (radius >= hi) {
        radius = hi;
        flat = true;
    }
    radius = std::max(radius, lo);
    if (near_flat) *near_flat = flat;
    return radius;
}

}  // namespace

double curvature_radius_at(const TriangleSurface& surface, int vertex,
                           double neighborhood_radius_mm, const MlesacConfig& cfg,
                           bool* near_flat) {
    PointGrid grid(surface.vertices, std::max(surface.mean_edge_length() * 2.0, 1e-6));
    return curvature_with_grid(surface, vertex, neighborhood_radius_mm, cfg, grid,
                               near_flat);
}

void estimate_curvature(TriangleSurface& surface, double neighborhood_radius_mm,
                        const MlesacConfig& cfg) {
    double nr = neighborhood_radius_mm > 0.0 ? neighborhood_radius_mm
                                             : 4.0 * surface.mean_edge_length();
    PointGrid grid(surface.vertices, std::max(surface.mean_edge_length() * 2.0, 1e-6));
    surface.curvature_radius_mm.assign(surface.vertices.size(), 0.0);
    surface.curvature_near_flat.assign(surface.vertices.size(), 0);
    for (int v = 0; v < surface.vertex_count(); ++v) {
        bool flat = false;
        surface.curvature_radius_mm[v] =
            curvature_with_grid(surface, v, nr, cfg, grid, &flat);
        surface.curvature_near_flat[v] = flat ? 1 : 0;
    }
}

// ---------------------------------------------------------------------------
// Field interpolation at vertices
// ---------------------------------------------------------------------------

std::vector<std::array<double, 3>> interpolate_at_vertices(
    const DisplacementField& field, const TriangleSurface& surface,
    std::vector<uint8_t>* clamped_flags) {
    std::vector<std::array<double, 3>> out(surface.vertices.size());
    if (clamped_flags) clamped_flags->assign(surface.vertices.size(), 0);
    for (int v = 0; v < surface.vertex_count(); ++v) {
        const Eigen::Vector3d& p = surface.vertices[v];
        std::array<double, 3> q{p.x(), p.y(), p.z()};
        if (clamped_flags) {
            for (int a = 0; a < 3; ++a) {
                double lo = field.origin[a];
                double hi = field.origin[a] + (field.dims[a] - 1) * field.spacing[a];
                if (q[a] < lo || q[a] > hi) (*clamped_flags)[v] = 1;
            }
        }
        out[v] = sample_field(field, q);
    }
    return out;
}

}  // namespace rsii
