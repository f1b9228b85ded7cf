// rsii command line: phantom generation, surface extraction, registration,
// tension recovery, index maps, and the full pipeline.

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "rsii/pipeline.hpp"
#include "rsii/vtk_io.hpp"

using namespace rsii;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfigError = 2;
constexpr int kExitStageFailure = 3;

// inputs / parameters that fail before any computation -> exit code 2
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// every subcommand accepts --config; explicit flags override its values
template <typename T>
void fold(CLI::Option* opt, T& flag_value, const T& config_value) {
    if (opt->count() == 0) flag_value = config_value;
}

PhantomCase generate(const PhantomSpec& spec) {
    if (spec.kind == "cylinder")
        return make_cylinder_phantom(spec.radius_mm, spec.wall_thickness_mm,
                                     spec.length_mm, spec.spacing_mm, spec.inflation,
                                     spec.smoothing_sigma_mm);
    if (spec.kind == "sphere")
        return make_sphere_phantom(spec.radius_mm, spec.wall_thickness_mm,
                                   spec.spacing_mm, spec.inflation,
                                   spec.smoothing_sigma_mm);
    if (spec.kind == "fusiform")
        return make_fusiform_phantom(spec.base_radius_mm, spec.bulge_amplitude_mm,
                                     spec.bulge_sigma_mm, spec.length_mm, spec.spacing_mm,
                                     spec.inflation, spec.smoothing_sigma_mm);
    throw ConfigError("unknown phantom kind '" + spec.kind + "'");
}

void write_convergence_log(const ConvergenceLog& log, uint32_t seed,
                           const std::string& path) {
    nlohmann::ordered_json trace;
    trace["seed"] = seed;
    trace["levels"] = nlohmann::ordered_json::array();
    for (const auto& level : log.levels)
        trace["levels"].push_back({{"dims", level.dims},
                                   {"energies", level.energies},
                                   {"safeguard_rejections", level.safeguard_rejections}});
    std::ofstream out(path);
    out << trace.dump(2) << "\n";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"per-vertex wall tension, strain and structural integrity maps"};
    app.require_subcommand(1);

    // ---- phantom ----
    auto* phantom_cmd = app.add_subcommand("phantom", "generate a synthetic test case");
    std::string phantom_config;
    PhantomSpec spec;
    std::string phantom_out = "phantom_out";
    phantom_cmd->add_option("--config", phantom_config, "pipeline config JSON");
    auto* o_kind = phantom_cmd->add_option("--kind", spec.kind, "cylinder | sphere | fusiform");
    auto* o_radius = phantom_cmd->add_option("--radius", spec.radius_mm, "lumen radius (mm)");
    auto* o_wall = phantom_cmd->add_option("--wall", spec.wall_thickness_mm, "wall (mm)");
    auto* o_length = phantom_cmd->add_option("--length", spec.length_mm, "length (mm)");
    auto* o_spacing = phantom_cmd->add_option("--spacing", spec.spacing_mm, "spacing (mm)");
    auto* o_inflation =
        phantom_cmd->add_option("--inflation", spec.inflation, "radial strain [0, 0.2]");
    auto* o_sigma = phantom_cmd->add_option("--sigma", spec.smoothing_sigma_mm, "blur (mm)");
    auto* o_base = phantom_cmd->add_option("--base-radius", spec.base_radius_mm, "fusiform");
    auto* o_bulge = phantom_cmd->add_option("--bulge", spec.bulge_amplitude_mm, "fusiform");
    auto* o_bsigma =
        phantom_cmd->add_option("--bulge-sigma", spec.bulge_sigma_mm, "fusiform");
    phantom_cmd->add_option("--out", phantom_out, "output directory");

    // ---- surface ----
    auto* surface_cmd = app.add_subcommand("surface", "label map -> wall surface VTK");
    std::string surface_config, labels_in, surface_out = "surface.vtk";
    GeometryConfig geom;
    surface_cmd->add_option("--config", surface_config, "pipeline config JSON");
    surface_cmd->add_option("--labels", labels_in, "label map (.mhd)")->required();
    auto* o_label = surface_cmd->add_option("--label", geom.surface_label, "1 wall, 2 lumen");
    auto* o_k = surface_cmd->add_option("--k", geom.neighborhood_k, "k-NN for frames");
    auto* o_nr = surface_cmd->add_option("--radius", geom.neighborhood_radius_mm,
                                         "curvature neighborhood (mm, 0 = auto)");
    auto* o_trials = surface_cmd->add_option("--trials", geom.mlesac.trials, "MLESAC trials");
    auto* o_tol =
        surface_cmd->add_option("--inlier-tol", geom.mlesac.inlier_tol_mm, "MLESAC tol (mm)");
    auto* o_mseed = surface_cmd->add_option("--seed", geom.mlesac.seed, "MLESAC seed");
    surface_cmd->add_option("--out", surface_out, "output VTK path");

    // ---- register ----
    auto* register_cmd = app.add_subcommand("register", "estimate the displacement field");
    std::string reg_config, fixed_in, moving_in, field_out = "field", log_out;
    RegConfig reg;
    register_cmd->add_option("--config", reg_config, "pipeline config JSON");
    register_cmd->add_option("--fixed", fixed_in, "fixed (systolic) image")->required();
    register_cmd->add_option("--moving", moving_in, "moving (diastolic) image")->required();
    auto* o_lambda = register_cmd->add_option("--lambda-tv", reg.lambda_tv, "TV weight");
    auto* o_levels = register_cmd->add_option("--levels", reg.pyramid_levels, "pyramid levels");
    auto* o_iters =
        register_cmd->add_option("--iters", reg.iterations_per_level, "iterations/level");
    auto* o_penalty = register_cmd->add_option("--penalty", reg.admm_penalty, "ADMM penalty");
    auto* o_rtol = register_cmd->add_option("--tol", reg.convergence_tol, "energy tolerance");
    auto* o_rseed = register_cmd->add_option("--seed", reg.seed, "seed recorded with the run");
    register_cmd->add_option("--out", field_out, "output prefix (3 .mhd volumes)");
    register_cmd->add_option("--log", log_out, "convergence JSON path");

    // ---- tension ----
    auto* tension_cmd = app.add_subcommand("tension", "FE wall tension from a surface");
    std::string tension_config, tension_surface, tension_out = "tension.vtk", summary_out;
    double pressure_kpa = 13.0, thickness = 1.5, youngs_gpa = 100.0, poisson = 0.3;
    int layers = 2;
    bool ilt = false;
    tension_cmd->add_option("--config", tension_config, "pipeline config JSON");
    tension_cmd->add_option("--surface", tension_surface, "surface VTK")->required();
    auto* o_pressure =
        tension_cmd->add_option("--pressure-kpa", pressure_kpa, "lumen pressure (kPa)");
    auto* o_thickness =
        tension_cmd->add_option("--thickness", thickness, "assumed thickness (mm)");
    auto* o_layers = tension_cmd->add_option("--layers", layers, "layers (>= 2)");
    auto* o_youngs = tension_cmd->add_option("--youngs-gpa", youngs_gpa, "E (GPa)");
    auto* o_poisson = tension_cmd->add_option("--poisson", poisson, "Poisson ratio");
    auto* o_ilt = tension_cmd->add_flag("--ilt", ilt, "compliant ILT region (E/20)");
    tension_cmd->add_option("--out", tension_out, "output VTK path");
    tension_cmd->add_option("--summary", summary_out, "summary JSON path");

    // ---- indices ----
    auto* indices_cmd = app.add_subcommand("indices", "strain, SII and RSII maps");
    std::string idx_config, idx_surface, idx_tension, idx_field, idx_out = "indices.vtk",
                            report_out;
    bool signed_rsii = false, area_weighted = false;
    indices_cmd->add_option("--config", idx_config, "pipeline config JSON");
    indices_cmd->add_option("--surface", idx_surface, "surface VTK (frames + curvature)")
        ->required();
    indices_cmd->add_option("--tension", idx_tension, "tension VTK")->required();
    indices_cmd->add_option("--field", idx_field, "displacement field prefix")->required();
    auto* o_signed =
        indices_cmd->add_flag("--signed-rsii", signed_rsii, "signed-mean variant");
    auto* o_area =
        indices_cmd->add_flag("--area-weighted", area_weighted, "area-weighted SII mean");
    indices_cmd->add_option("--out", idx_out, "output VTK path");
    indices_cmd->add_option("--report", report_out, "report JSON path");

    // ---- run ----
    auto* run_cmd = app.add_subcommand("run", "full pipeline from a JSON config");
    std::string run_config, from_stage = "input", run_out_override;
    run_cmd->add_option("--config", run_config, "pipeline config JSON")->required();
    run_cmd->add_option("--from", from_stage,
                        "resume stage: input|surface|register|tension|indices");
    run_cmd->add_option("--out", run_out_override, "override output directory");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*phantom_cmd) {
            if (!phantom_config.empty()) {
                PipelineConfig c = PipelineConfig::load(phantom_config);
                if (c.phantom) {
                    fold(o_kind, spec.kind, c.phantom->kind);
                    fold(o_radius, spec.radius_mm, c.phantom->radius_mm);
                    fold(o_wall, spec.wall_thickness_mm, c.phantom->wall_thickness_mm);
                    fold(o_length, spec.length_mm, c.phantom->length_mm);
                    fold(o_spacing, spec.spacing_mm, c.phantom->spacing_mm);
                    fold(o_inflation, spec.inflation, c.phantom->inflation);
                    fold(o_sigma, spec.smoothing_sigma_mm, c.phantom->smoothing_sigma_mm);
                    fold(o_base, spec.base_radius_mm, c.phantom->base_radius_mm);
                    fold(o_bulge, spec.bulge_amplitude_mm, c.phantom->bulge_amplitude_mm);
                    fold(o_bsigma, spec.bulge_sigma_mm, c.phantom->bulge_sigma_mm);
                }
            }
            PhantomCase c;
            try {
                c = generate(spec);
            } catch (const ConfigError&) {
                throw;
            } catch (const std::exception& e) {
                throw ConfigError(e.what());  // parameter violations
            }
            save_phantom_case(c, phantom_out);
            std::cout << "phantom '" << spec.kind << "' written to " << phantom_out << "\n";
            return kExitOk;
        }

        if (*surface_cmd) {
            if (!surface_config.empty()) {
                PipelineConfig c = PipelineConfig::load(surface_config);
                fold(o_label, geom.surface_label, c.geometry.surface_label);
                fold(o_k, geom.neighborhood_k, c.geometry.neighborhood_k);
                fold(o_nr, geom.neighborhood_radius_mm, c.geometry.neighborhood_radius_mm);
                fold(o_trials, geom.mlesac.trials, c.geometry.mlesac.trials);
                fold(o_tol, geom.mlesac.inlier_tol_mm, c.geometry.mlesac.inlier_tol_mm);
                fold(o_mseed, geom.mlesac.seed, c.geometry.mlesac.seed);
            }
            LabelMap labels;
            try {
                labels = load_labels(labels_in);
            } catch (const std::exception& e) {
                throw ConfigError(e.what());
            }
            TriangleSurface surface = extract_surface(labels, geom.surface_label);
            local_frames(surface, geom.neighborhood_k);
            estimate_curvature(surface, geom.neighborhood_radius_mm, geom.mlesac);
            export_vtk(surface, {}, surface_out);
            std::cout << "surface: " << surface.vertex_count() << " vertices, "
                      << surface.triangle_count() << " triangles -> " << surface_out << "\n";
            return kExitOk;
        }

        if (*register_cmd) {
            if (!reg_config.empty()) {
                PipelineConfig c = PipelineConfig::load(reg_config);
                fold(o_lambda, reg.lambda_tv, c.registration.lambda_tv);
                fold(o_levels, reg.pyramid_levels, c.registration.pyramid_levels);
                fold(o_iters, reg.iterations_per_level, c.registration.iterations_per_level);
                fold(o_penalty, reg.admm_penalty, c.registration.admm_penalty);
                fold(o_rtol, reg.convergence_tol, c.registration.convergence_tol);
                fold(o_rseed, reg.seed, c.registration.seed);
            }
            VoxelGrid fixed, moving;
            try {
                fixed = load_volume(fixed_in);
                moving = load_volume(moving_in);
                reg.validate();
            } catch (const std::exception& e) {
                throw ConfigError(e.what());
            }
            ConvergenceLog log;
            DisplacementField field = register_images(fixed, moving, reg, &log);
            save_field(field, field_out);
            if (!log_out.empty()) write_convergence_log(log, reg.seed, log_out);
            std::cout << "field written to " << field_out << "_{x,y,z}.mhd\n";
            return kExitOk;
        }

        if (*tension_cmd) {
            if (!tension_config.empty()) {
                PipelineConfig c = PipelineConfig::load(tension_config);
                fold(o_pressure, pressure_kpa, c.pressure_kpa);
                fold(o_thickness, thickness, c.wall_thickness_mm);
                fold(o_layers, layers, c.layers);
                fold(o_youngs, youngs_gpa, c.youngs_modulus_gpa);
                fold(o_poisson, poisson, c.poisson_ratio);
                fold(o_ilt, ilt, c.ilt_enabled);
            }
            TriangleSurface surface;
            try {
                surface = load_surface_vtk(tension_surface).surface;
            } catch (const std::exception& e) {
                throw ConfigError(e.what());
            }
            WallMesh mesh = build_wall_mesh(surface, thickness, layers);
            Material wall{youngs_gpa * 1e9, poisson};
            std::optional<Material> ilt_mat;
            if (ilt) ilt_mat = Material{wall.youngs_modulus_pa / 20.0, wall.poisson_ratio};
            ElasticitySolution sol = solve_elasticity(mesh, pressure_kpa * 1e3, wall, ilt_mat);
            StressField averaged = uniform_stress_average(mesh, sol.stress);
            TensionFields tension =
                wall_tension(mesh, averaged, surface, Eigen::Vector3d(0, 0, 1));
            export_vtk(surface, {tension.max_principal, tension.circumferential},
                       tension_out);
            double p99 = percentile_abs(tension.max_principal.values,
                                        tension.max_principal.valid, 99.0);
            if (!summary_out.empty()) {
                nlohmann::ordered_json summary;
                summary["tension_p99_n_per_mm"] = p99 * 1e-3;
                summary["nodes"] = mesh.nodes.size();
                summary["tets"] = mesh.tets.size();
                std::ofstream out(summary_out);
                out << summary.dump(2) << "\n";
            }
            std::cout << "99th percentile tension: " << p99 * 1e-3 << " N/mm -> "
                      << tension_out << "\n";
            return kExitOk;
        }

        if (*indices_cmd) {
            if (!idx_config.empty()) {
                PipelineConfig c = PipelineConfig::load(idx_config);
                fold(o_signed, signed_rsii, c.rsii.signed_variant);
                fold(o_area, area_weighted, c.rsii.area_weighted_mean);
            }
            TriangleSurface surface;
            LoadedSurface tension_loaded;
            DisplacementField field;
            try {
                surface = load_surface_vtk(idx_surface).surface;
                tension_loaded = load_surface_vtk(idx_tension);
                field = load_field(idx_field);
            } catch (const std::exception& e) {
                throw ConfigError(e.what());
            }
            const SurfaceField* tension_max = nullptr;
            for (const auto& f : tension_loaded.fields)
                if (f.name == "tension_max_principal") tension_max = &f;
            if (!tension_max)
                throw ConfigError("tension VTK lacks tension_max_principal");
            auto vectors = interpolate_at_vertices(field, surface);
            for (auto& v : vectors)
                for (double& c : v) c = -c;  // wall motion opposes the mapping
            RsiiOptions opts{signed_rsii, area_weighted};
            IndexBundle bundle = compute_indices(vectors, surface, *tension_max, opts);
            export_vtk(surface,
                       {*tension_max, bundle.strain, bundle.sii, bundle.rsii,
                        bundle.normal_disp, bundle.tangential},
                       idx_out);
            if (!report_out.empty()) export_report_json(bundle.report, "", report_out);
            std::cout << "indices written to " << idx_out
                      << (bundle.report.degenerate_rsii ? " (degenerate RSII)" : "") << "\n";
            return kExitOk;
        }

        if (*run_cmd) {
            PipelineConfig config;
            Stage from;
            try {
                config = PipelineConfig::load(run_config);
                if (!run_out_override.empty()) config.output_dir = run_out_override;
                from = stage_from_name(from_stage);
                config.validate();
            } catch (const std::exception& e) {
                throw ConfigError(e.what());
            }
            PercentileReport report = run_pipeline(config, from);
            std::cout << "pipeline finished: t_o = " << report.tension.p99_abs * 1e-3
                      << " N/mm, eps_o = " << report.strain.p99_abs * 1e2
                      << " %, RSII_o = " << report.rsii.p99_abs
                      << (report.degenerate_rsii ? " (degenerate RSII)" : "") << "\n";
            return kExitOk;
        }
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfigError;
    } catch (const StageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitStageFailure;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitStageFailure;
    }
    return kExitOk;
}
