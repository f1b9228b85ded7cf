#include "rsii/registration.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace rsii {

void RegConfig::validate() const {
    if (lambda_tv < 0.0) throw std::runtime_error("RegConfig: lambda_tv must be >= 0");
    if (pyramid_levels < 1) throw std::runtime_error("RegConfig: pyramid_levels must be >= 1");
    if (iterations_per_level < 1)
        throw std::runtime_error("RegConfig: iterations_per_level must be >= 1");
    if (!(admm_penalty > 0.0)) throw std::runtime_error("RegConfig: admm_penalty must be > 0");
    if (!(convergence_tol > 0.0))
        throw std::runtime_error("RegConfig: convergence_tol must be > 0");
}

namespace {

constexpr double kTvEps = 1e-6;   // smoothing of the differentiable TV surrogate
constexpr int kInnerSteps = 6;    // gradient descent steps per u-subproblem

using Field3 = std::array<std::vector<double>, 3>;
using Stack9 = std::array<std::vector<double>, 9>;

struct Geom {
    std::array<int, 3> dims;
    std::array<double, 3> spacing;
    std::array<double, 3> origin;
    std::size_t n;
    double vol;

    static Geom of(const VoxelGrid& g) {
        return {g.dims, g.spacing, g.origin,
                g.size(), g.voxel_volume()};
    }
};

// Double-precision trilinear sampler over a float volume, edge-clamped, with
// the exact interpolant derivative (zero in clamped directions).
struct MovingSampler {
    const float* data;
    int nx, ny, nz;
    double ox, oy, oz, sx, sy, sz;

    explicit MovingSampler(const VoxelGrid& m)
        : data(m.data.data()), nx(m.dims[0]), ny(m.dims[1]), nz(m.dims[2]),
          ox(m.origin[0]), oy(m.origin[1]), oz(m.origin[2]),
          sx(m.spacing[0]), sy(m.spacing[1]), sz(m.spacing[2]) {}

    inline void axis(double p, double o, double s, int n, int& i0, int& i1,
                     double& f, double& df) const {
        double c = (p - o) / s;
        if (c <= 0.0) {
            i0 = i1 = 0;
            f = 0.0;
            df = 0.0;
        } else if (c >= n - 1) {
            i0 = i1 = n - 1;
            f = 0.0;
            df = 0.0;
        } else {
            i0 = static_cast<int>(c);
            i1 = i0 + 1;
            f = c - i0;
            df = 1.0 / s;
        }
    }

    inline void sample(double px, double py, double pz, double& value, double& gx,
                       double& gy, double& gz) const {
        int x0, x1, y0, y1, z0, z1;
        double fx, fy, fz, dfx, dfy, dfz;
        axis(px, ox, sx, nx, x0, x1, fx, dfx);
        axis(py, oy, sy, ny, y0, y1, fy, dfy);
        axis(pz, oz, sz, nz, z0, z1, fz, dfz);

        const std::size_t sxy = static_cast<std::size_t>(nx) * ny;
        auto at = [&](int i, int j, int k) {
            return static_cast<double>(data[k * sxy + static_cast<std::size_t>(j) * nx + i]);
        };
        double c00 = at(x0, y0, z0) * (1 - fx) + at(x1, y0, z0) * fx;
        double c10 = at(x0, y1, z0) * (1 - fx) + at(x1, y1, z0) * fx;
        double c01 = at(x0, y0, z1) * (1 - fx) + at(x1, y0, z1) * fx;
        double c11 = at(x0, y1, z1) * (1 - fx) + at(x1, y1, z1) * fx;
        double dx00 = at(x1, y0, z0) - at(x0, y0, z0);
        double dx10 = at(x1, y1, z0) - at(x0, y1, z0);
        double dx01 = at(x1, y0, z1) - at(x0, y0, z1);
        double dx11 = at(x1, y1, z1) - at(x0, y1, z1);

        double c0 = c00 * (1 - fy) + c10 * fy;
        double c1 = c01 * (1 - fy) + c11 * fy;
        value = c0 * (1 - fz) + c1 * fz;
        gx = ((dx00 * (1 - fy) + dx10 * fy) * (1 - fz) +
              (dx01 * (1 - fy) + dx11 * fy) * fz) * dfx;
        gy = ((c10 - c00) * (1 - fz) + (c11 - c01) * fz) * dfy;
        gz = (c1 - c0) * dfz;
    }
};

inline std::size_t flat(const Geom& g, int i, int j, int k) {
    return (static_cast<std::size_t>(k) * g.dims[1] + j) * g.dims[0] + i;
}

// Forward difference of component c along axis d, Neumann (zero) at the far
// boundary. idx must match (i,j,k).
inline double fwd_diff(const Geom& g, const std::vector<double>& uc, std::size_t idx,
                       int i, int j, int k, int d) {
    const int pos[3] = {i, j, k};
    if (pos[d] >= g.dims[d] - 1) return 0.0;
    const std::size_t step[3] = {1, static_cast<std::size_t>(g.dims[0]),
                                 static_cast<std::size_t>(g.dims[0]) * g.dims[1]};
    return (uc[idx + step[d]] - uc[idx]) / g.spacing[d];
}

double data_energy(const Geom& g, const VoxelGrid& fixed, const MovingSampler& mov,
                   const Field3& u) {
    double acc = 0.0;
    std::size_t idx = 0;
    for (int k = 0; k < g.dims[2]; ++k) {
        double pz = g.origin[2] + k * g.spacing[2];
        for (int j = 0; j < g.dims[1]; ++j) {
            double py = g.origin[1] + j * g.spacing[1];
            for (int i = 0; i < g.dims[0]; ++i, ++idx) {
                double px = g.origin[0] + i * g.spacing[0];
                double value, gx, gy, gz;
                mov.sample(px + u[0][idx], py + u[1][idx], pz + u[2][idx], value, gx,
                           gy, gz);
                double r = value - fixed.data[idx];
                acc += r * r;
            }
        }
    }
    return acc * g.vol;
}

// Data term energy and gradient in one pass. Returns the energy.
double data_energy_gradient(const Geom& g, const VoxelGrid& fixed,
                            const MovingSampler& mov, const Field3& u, Field3& grad) {
    double acc = 0.0;
    std::size_t idx = 0;
    for (int k = 0; k < g.dims[2]; ++k) {
        double pz = g.origin[2] + k * g.spacing[2];
        for (int j = 0; j < g.dims[1]; ++j) {
            double py = g.origin[1] + j * g.spacing[1];
            for (int i = 0; i < g.dims[0]; ++i, ++idx) {
                double px = g.origin[0] + i * g.spacing[0];
                double value, gx, gy, gz;
                mov.sample(px + u[0][idx], py + u[1][idx], pz + u[2][idx], value, gx,
                           gy, gz);
                double r = value - fixed.data[idx];
                acc += r * r;
                grad[0][idx] = 2.0 * r * gx * g.vol;
                grad[1][idx] = 2.0 * r * gy * g.vol;
                grad[2][idx] = 2.0 * r * gz * g.vol;
            }
        }
    }
    return acc * g.vol;
}

double tv_energy(const Geom& g, const Field3& u) {
    double acc = 0.0;
    std::size_t idx = 0;
    for (int k = 0; k < g.dims[2]; ++k)
        for (int j = 0; j < g.dims[1]; ++j)
            for (int i = 0; i < g.dims[0]; ++i, ++idx) {
                double s = 0.0;
                for (int c = 0; c < 3; ++c)
                    for (int d = 0; d < 3; ++d) {
                        double gg = fwd_diff(g, u[c], idx, i, j, k, d);
                        s += gg * gg;
                    }
                acc += std::sqrt(s);
            }
    return acc * g.vol;
}

// lambda * d/du of sum_x vol * sqrt(eps^2 + |Gu|^2), accumulated into grad.
void tv_smoothed_gradient_accum(const Geom& g, const Field3& u, double lambda,
                                Field3& grad) {
    // w = Gu / sqrt(eps^2 + |Gu|^2) per voxel, then grad += lambda*vol*G^T w.
    Stack9 w;
    for (auto& comp : w) comp.assign(g.n, 0.0);
    std::size_t idx = 0;
    for (int k = 0; k < g.dims[2]; ++k)
        for (int j = 0; j < g.dims[1]; ++j)
            for (int i = 0; i < g.dims[0]; ++i, ++idx) {
                double gg[9];
                double s = kTvEps * kTvEps;
                for (int c = 0; c < 3; ++c)
                    for (int d = 0; d < 3; ++d) {
                        gg[c * 3 + d] = fwd_diff(g, u[c], idx, i, j, k, d);
                        s += gg[c * 3 + d] * gg[c * 3 + d];
                    }
                double inv = 1.0 / std::sqrt(s);
                for (int cd = 0; cd < 9; ++cd) w[cd][idx] = gg[cd] * inv;
            }

    const std::size_t step[3] = {1, static_cast<std::size_t>(g.dims[0]),
                                 static_cast<std::size_t>(g.dims[0]) * g.dims[1]};
    idx = 0;
    for (int k = 0; k < g.dims[2]; ++k)
        for (int j = 0; j < g.dims[1]; ++j)
            for (int i = 0; i < g.dims[0]; ++i, ++idx) {
                const int pos[3] = {i, j, k};
                for (int c = 0; c < 3; ++c) {
                    double acc = 0.0;
                    for (int d = 0; d < 3; ++d) {
                        double wm = pos[d] > 0 ? w[c * 3 + d][idx - step[d]] : 0.0;
                        double wp = pos[d] < g.dims[d] - 1 ? w[c * 3 + d][idx] : 0.0;
                        acc += (wm - wp) / g.spacing[d];
                    }
                    grad[c][idx] += lambda * g.vol * acc;
                }
            }
}

// (rho/2) * sum vol * |Gu - z + y|^2 and, optionally, its gradient wrt u
// accumulated into grad.
double quad_energy_gradient(const Geom& g, const Field3& u, const Stack9& z,
                            const Stack9& y, double rho, Field3* grad) {
    auto w_val = [&](int c, int d, std::size_t idx, int i, int j, int k) {
        return fwd_diff(g, u[c], idx, i, j, k, d) - z[c * 3 + d][idx] + y[c * 3 + d][idx];
    };
    double acc = 0.0;
    std::size_t idx = 0;
    for (int k = 0; k < g.dims[2]; ++k)
        for (int j = 0; j < g.dims[1]; ++j)
            for (int i = 0; i < g.dims[0]; ++i, ++idx)
                for (int c = 0; c < 3; ++c)
                    for (int d = 0; d < 3; ++d) {
                        double w = w_val(c, d, idx, i, j, k);
                        acc += w * w;
                    }
    if (grad) {
        const std::size_t step[3] = {1, static_cast<std::size_t>(g.dims[0]),
                                     static_cast<std::size_t>(g.dims[0]) * g.dims[1]};
        idx = 0;
        for (int k = 0; k < g.dims[2]; ++k)
            for (int j = 0; j < g.dims[1]; ++j)
                for (int i = 0; i < g.dims[0]; ++i, ++idx) {
                    const int pos[3] = {i, j, k};
                    for (int c = 0; c < 3; ++c) {
                        double a = 0.0;
                        for (int d = 0; d < 3; ++d) {
                            double wm = 0.0, wp = 0.0;
                            if (pos[d] > 0) {
                                std::size_t q = idx - step[d];
                                int qi = i - (d == 0), qj = j - (d == 1), qk = k - (d == 2);
                                wm = w_val(c, d, q, qi, qj, qk);
                            }
                            if (pos[d] < g.dims[d] - 1) wp = w_val(c, d, idx, i, j, k);
                            a += (wm - wp) / g.spacing[d];
                        }
                        (*grad)[c][idx] += rho * g.vol * a;
                    }
                }
    }
    return 0.5 * rho * acc * g.vol;
}

// Group shrinkage of v = Gu + y over the 9-vector per voxel, then the dual
// update y += Gu - z.
void update_z_and_dual(const Geom& g, const Field3& u, Stack9& z, Stack9& y,
                       double kappa) {
    std::size_t idx = 0;
    for (int k = 0; k < g.dims[2]; ++k)
        for (int j = 0; j < g.dims[1]; ++j)
            for (int i = 0; i < g.dims[0]; ++i, ++idx) {
                double gu[9], v[9];
                double norm2 = 0.0;
                for (int c = 0; c < 3; ++c)
                    for (int d = 0; d < 3; ++d) {
                        int cd = c * 3 + d;
                        gu[cd] = fwd_diff(g, u[c], idx, i, j, k, d);
                        v[cd] = gu[cd] + y[cd][idx];
                        norm2 += v[cd] * v[cd];
                    }
                double norm = std::sqrt(norm2);
                double scale = norm > kappa ? 1.0 - kappa / norm : 0.0;
                for (int cd = 0; cd < 9; ++cd) {
                    double znew = scale * v[cd];
                    z[cd][idx] = znew;
                    y[cd][idx] += gu[cd] - znew;
                }
            }
}

void check_finite(const VoxelGrid& g, const char* name) {
    for (float v : g.data)
        if (!std::isfinite(v))
            throw std::runtime_error(std::string("registration: NaN/Inf in ") + name);
}

// Exhaustive integer-voxel translation search; a uniform shift costs no TV,
// so it is the right coarse-level initializer and resolves the aperture
// ambiguity for global motion.
void translation_init(const VoxelGrid& fixed, const VoxelGrid& moving, Field3& u) {
    const Geom g = Geom::of(fixed);
    const MovingSampler mov(moving);
    constexpr int kRange = 4;

    // interior-only SSD so border clamping cannot reward large shifts
    auto ssd_at = [&](double ux, double uy, double uz) {
        double acc = 0.0;
        for (int k = kRange; k < g.dims[2] - kRange; ++k) {
            double pz = g.origin[2] + k * g.spacing[2] + uz;
            for (int j = kRange; j < g.dims[1] - kRange; ++j) {
                double py = g.origin[1] + j * g.spacing[1] + uy;
                for (int i = kRange; i < g.dims[0] - kRange; ++i) {
                    double value, gx, gy, gzz;
                    mov.sample(g.origin[0] + i * g.spacing[0] + ux, py, pz, value, gx,
                               gy, gzz);
                    double r = value -
                               fixed.data[g.dims[0] *
                                              (static_cast<std::size_t>(k) * g.dims[1] + j) +
                                          i];
                    acc += r * r;
                }
            }
        }
        return acc;
    };

    // integer-voxel grid search, ties to the smallest displacement
    double best = std::numeric_limits<double>::max();
    double best_norm2 = 0.0;
    std::array<double, 3> shift{0, 0, 0};
    for (int sz = -kRange; sz <= kRange; ++sz)
        for (int sy = -kRange; sy <= kRange; ++sy)
            for (int sx = -kRange; sx <= kRange; ++sx) {
                const double ux = sx * g.spacing[0], uy = sy * g.spacing[1],
                             uz = sz * g.spacing[2];
                double acc = ssd_at(ux, uy, uz);
                double norm2 = ux * ux + uy * uy + uz * uz;
                bool better = acc < best * (1.0 - 1e-9) ||
                              (acc <= best * (1.0 + 1e-9) && norm2 < best_norm2);
                if (better) {
                    best = acc;
                    best_norm2 = norm2;
                    shift = {ux, uy, uz};
                }
            }

    // per-axis parabolic refinement for the sub-voxel part
    for (int pass = 0; pass < 2; ++pass) {
        for (int axis = 0; axis < 3; ++axis) {
            const double delta = g.spacing[axis] / (pass + 1);
            std::array<double, 3> lo = shift, hi = shift;
            lo[axis] -= delta;
            hi[axis] += delta;
            double f0 = ssd_at(lo[0], lo[1], lo[2]);
            double f1 = ssd_at(shift[0], shift[1], shift[2]);
            double f2 = ssd_at(hi[0], hi[1], hi[2]);
            double denom = f0 - 2.0 * f1 + f2;
            if (denom > 0.0) {
                double step = 0.5 * (f0 - f2) / denom * delta;
                shift[axis] += std::clamp(step, -delta, delta);
            }
        }
    }

    for (int c = 0; c < 3; ++c) std::fill(u[c].begin(), u[c].end(), shift[c]);
}

void solve_level(const VoxelGrid& fixed, const VoxelGrid& moving, Field3& u,
                 const RegConfig& cfg, ConvergenceLog::Level* trace) {
    const Geom g = Geom::of(fixed);
    const MovingSampler mov(moving);

    // anchor the splitting at the incoming field: z = Gu, y = 0
    Stack9 z, y;
    for (auto& comp : z) comp.assign(g.n, 0.0);
    for (auto& comp : y) comp.assign(g.n, 0.0);
    auto anchor_split = [&]() {
        std::size_t idx = 0;
        for (int k = 0; k < g.dims[2]; ++k)
            for (int j = 0; j < g.dims[1]; ++j)
                for (int i = 0; i < g.dims[0]; ++i, ++idx)
                    for (int c = 0; c < 3; ++c)
                        for (int d = 0; d < 3; ++d) {
                            z[c * 3 + d][idx] = fwd_diff(g, u[c], idx, i, j, k, d);
                            y[c * 3 + d][idx] = 0.0;
                        }
    };
    anchor_split();

    double rho = cfg.admm_penalty;
    const double rho_cap = cfg.admm_penalty * 1048576.0;

    auto exact_energy = [&](const Field3& uu) {
        return data_energy(g, fixed, mov, uu) + cfg.lambda_tv * tv_energy(g, uu);
    };

    double e_prev = exact_energy(u);
    if (trace) trace->energies.push_back(e_prev);

    // conservative Lipschitz-style initial step
    const double gsq = 4.0 / (g.spacing[0] * g.spacing[0]) +
                       4.0 / (g.spacing[1] * g.spacing[1]) +
                       4.0 / (g.spacing[2] * g.spacing[2]);
    double alpha = 1.0 / (g.vol * (2.0 * 500.0 * 500.0 / 1.0 + rho * gsq));

    Field3 grad, u_try, u_backup;
    Stack9 z_backup, y_backup;
    for (auto& comp : grad) comp.assign(g.n, 0.0);

    for (int iter = 0; iter < cfg.iterations_per_level; ++iter) {
        u_backup = u;
        z_backup = z;
        y_backup = y;

        for (int inner = 0; inner < kInnerSteps; ++inner) {
            for (auto& comp : grad) std::fill(comp.begin(), comp.end(), 0.0);
            double f_cur = data_energy_gradient(g, fixed, mov, u, grad);
            f_cur += quad_energy_gradient(g, u, z, y, rho, &grad);

            double gnorm2 = 0.0;
            for (int c = 0; c < 3; ++c)
                for (double v : grad[c]) gnorm2 += v * v;
            if (gnorm2 <= 0.0) break;

            alpha *= 2.0;
            bool stepped = false;
            for (int bt = 0; bt < 24; ++bt) {
                u_try = u;
                for (int c = 0; c < 3; ++c)
                    for (std::size_t v = 0; v < g.n; ++v)
                        u_try[c][v] -= alpha * grad[c][v];
                double f_try = data_energy(g, fixed, mov, u_try) +
                               quad_energy_gradient(g, u_try, z, y, rho, nullptr);
                if (f_try <= f_cur - 1e-4 * alpha * gnorm2) {
                    u.swap(u_try);
                    stepped = true;
                    break;
                }
                alpha *= 0.5;
            }
            if (!stepped) break;
        }

        update_z_and_dual(g, u, z, y, cfg.lambda_tv / rho);

        double e = exact_energy(u);
        if (e <= e_prev) {
            if (trace) trace->energies.push_back(e);
            double rel = (e_prev - e) / std::max(std::abs(e_prev), 1e-30);
            e_prev = e;
            if (rel < cfg.convergence_tol) break;
        } else {
            // reject the iterate, keep the energy monotone, damp the
            // splitting and re-anchor the duals at the accepted point
            u = u_backup;
            z = z_backup;
            y = y_backup;
            rho *= 2.0;
            anchor_split();
            if (trace) trace->safeguard_rejections++;
            if (rho > rho_cap) break;
        }
    }
}

double sample_component(const Geom& g, const std::vector<double>& comp, double px,
                        double py, double pz) {
    int i0[3], i1[3];
    double f[3];
    const double p[3] = {px, py, pz};
    for (int a = 0; a < 3; ++a) {
        double c = (p[a] - g.origin[a]) / g.spacing[a];
        if (c <= 0.0) {
            i0[a] = i1[a] = 0;
            f[a] = 0.0;
        } else if (c >= g.dims[a] - 1) {
            i0[a] = i1[a] = g.dims[a] - 1;
            f[a] = 0.0;
        } else {
            i0[a] = static_cast<int>(c);
            i1[a] = i0[a] + 1;
            f[a] = c - i0[a];
        }
    }
    double acc = 0.0;
    for (int dz = 0; dz < 2; ++dz)
        for (int dy = 0; dy < 2; ++dy)
            for (int dx = 0; dx < 2; ++dx) {
                double w = (dx ? f[0] : 1 - f[0]) * (dy ? f[1] : 1 - f[1]) *
                           (dz ? f[2] : 1 - f[2]);
                if (w == 0.0) continue;
                acc += w * comp[flat(g, dx ? i1[0] : i0[0], dy ? i1[1] : i0[1],
                                     dz ? i1[2] : i0[2])];
            }
    return acc;
}

}  // namespace

RegistrationEnergy registration_energy(const VoxelGrid& fixed, const VoxelGrid& moving,
                                       const DisplacementField& field, double lambda_tv) {
    if (!field.matches_geometry(fixed))
        throw std::runtime_error("registration_energy: field/fixed geometry mismatch");
    const Geom g = Geom::of(fixed);
    Field3 u;
    for (int c = 0; c < 3; ++c) {
        const auto& src = c == 0 ? field.ux : (c == 1 ? field.uy : field.uz);
        u[c].assign(src.begin(), src.end());
    }
    RegistrationEnergy e;
    e.data_term = data_energy(g, fixed, MovingSampler(moving), u);
    e.tv_term = lambda_tv * tv_energy(g, u);
    e.total = e.data_term + e.tv_term;
    return e;
}

EnergyAndGradient registration_energy_and_gradient(const VoxelGrid& fixed,
                                                   const VoxelGrid& moving,
                                                   const DisplacementField& field,
                                                   double lambda_tv) {
    if (!field.matches_geometry(fixed))
        throw std::runtime_error("registration_energy_and_gradient: geometry mismatch");
    const Geom g = Geom::of(fixed);
    Field3 u, grad;
    for (int c = 0; c < 3; ++c) {
        const auto& src = c == 0 ? field.ux : (c == 1 ? field.uy : field.uz);
        u[c].assign(src.begin(), src.end());
        grad[c].assign(g.n, 0.0);
    }

    EnergyAndGradient out;
    out.energy.data_term = data_energy_gradient(g, fixed, MovingSampler(moving), u, grad);
    out.energy.tv_term = lambda_tv * tv_energy(g, u);
    out.energy.total = out.energy.data_term + out.energy.tv_term;
    if (lambda_tv > 0.0) tv_smoothed_gradient_accum(g, u, lambda_tv, grad);

    out.gradient = DisplacementField(fixed);
    for (std::size_t v = 0; v < g.n; ++v) {
        out.gradient.ux[v] = static_cast<float>(grad[0][v]);
        out.gradient.uy[v] = static_cast<float>(grad[1][v]);
        out.gradient.uz[v] = static_cast<float>(grad[2][v]);
    }
    return out;
}

DisplacementField register_images(const VoxelGrid& fixed, const VoxelGrid& moving,
                                  const RegConfig& cfg, ConvergenceLog* log) {
    cfg.validate();
    fixed.validate();
    moving.validate();
    check_finite(fixed, "fixed image");
    check_finite(moving, "moving image");
    for (int a = 0; a < 3; ++a) {
        double lo = std::max(fixed.origin[a], moving.origin[a]);
        double hi = std::min(fixed.extent_max()[a], moving.extent_max()[a]);
        if (hi <= lo)
            throw std::runtime_error("register: images have non-overlapping extents");
    }

    // coarse-to-fine pyramids; both images restricted in lockstep
    std::vector<VoxelGrid> fpyr{fixed}, mpyr{moving};
    for (int l = 1; l < cfg.pyramid_levels; ++l) {
        const VoxelGrid& pf = fpyr.back();
        const VoxelGrid& pm = mpyr.back();
        int fmin = std::min({(pf.dims[0] + 1) / 2, (pf.dims[1] + 1) / 2,
                             (pf.dims[2] + 1) / 2});
        int mmin = std::min({(pm.dims[0] + 1) / 2, (pm.dims[1] + 1) / 2,
                             (pm.dims[2] + 1) / 2});
        if (fmin < 8 || mmin < 8) break;
        fpyr.push_back(downsample_by_two(pf));
        mpyr.push_back(downsample_by_two(pm));
    }

    Field3 u;
    if (log) log->levels.clear();
    for (int l = static_cast<int>(fpyr.size()) - 1; l >= 0; --l) {
        const Geom g = Geom::of(fpyr[l]);
        if (l == static_cast<int>(fpyr.size()) - 1) {
            for (auto& comp : u) comp.assign(g.n, 0.0);
            translation_init(fpyr[l], mpyr[l], u);
        } else {
            const Geom gc = Geom::of(fpyr[l + 1]);
            Field3 fine;
            for (auto& comp : fine) comp.assign(g.n, 0.0);
            std::size_t idx = 0;
            for (int k = 0; k < g.dims[2]; ++k)
                for (int j = 0; j < g.dims[1]; ++j)
                    for (int i = 0; i < g.dims[0]; ++i, ++idx) {
                        double px = g.origin[0] + i * g.spacing[0];
                        double py = g.origin[1] + j * g.spacing[1];
                        double pz = g.origin[2] + k * g.spacing[2];
                        for (int c = 0; c < 3; ++c)
                            fine[c][idx] = sample_component(gc, u[c], px, py, pz);
                    }
            u.swap(fine);
        }

        ConvergenceLog::Level* trace = nullptr;
        if (log) {
            log->levels.emplace_back();
            log->levels.back().dims = fpyr[l].dims;
            trace = &log->levels.back();
        }
        solve_level(fpyr[l], mpyr[l], u, cfg, trace);
    }

    DisplacementField out(fixed);
    for (std::size_t v = 0; v < out.size(); ++v) {
        out.ux[v] = static_cast<float>(u[0][v]);
        out.uy[v] = static_cast<float>(u[1][v]);
        out.uz[v] = static_cast<float>(u[2][v]);
    }
    return out;
}

VoxelGrid warp(const VoxelGrid& moving, const DisplacementField& field) {
    field.validate_finite();
    VoxelGrid out;
    out.dims = field.dims;
    out.spacing = field.spacing;
    out.origin = field.origin;
    out.data.resize(field.size());

    const MovingSampler mov(moving);
    std::size_t idx = 0;
    for (int k = 0; k < field.dims[2]; ++k) {
        double pz = field.origin[2] + k * field.spacing[2];
        for (int j = 0; j < field.dims[1]; ++j) {
            double py = field.origin[1] + j * field.spacing[1];
            for (int i = 0; i < field.dims[0]; ++i, ++idx) {
                double px = field.origin[0] + i * field.spacing[0];
                double value, gx, gy, gz;
                mov.sample(px + field.ux[idx], py + field.uy[idx], pz + field.uz[idx],
                           value, gx, gy, gz);
                out.data[idx] = static_cast<float>(value);
            }
        }
    }
    return out;
}

}  // namespace rsii
