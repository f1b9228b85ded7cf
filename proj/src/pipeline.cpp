#include "rsii/pipeline.hpp"

#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "rsii/vtk_io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace rsii {

// ---------------------------------------------------------------------------
// Config
// ---------------------------------------------------------------------------

void PipelineConfig::validate() const {
    bool have_files = !fixed_path.empty() || !moving_path.empty() || !labels_path.empty();
    if (phantom && have_files)
        throw std::runtime_error("config: give either a phantom spec or image paths, not both");
    if (!phantom) {
        if (fixed_path.empty() || moving_path.empty() || labels_path.empty())
            throw std::runtime_error("config: fixed, moving and labels paths are required");
        for (const std::string& p : {fixed_path, moving_path, labels_path})
            if (!fs::exists(p)) throw std::runtime_error("config: missing input file " + p);
    } else {
        const auto& ph = *phantom;
        if (ph.kind != "cylinder" && ph.kind != "sphere" && ph.kind != "fusiform")
            throw std::runtime_error("config: unknown phantom kind '" + ph.kind + "'");
    }
    if (!(pressure_kpa > 0.0)) throw std::runtime_error("config: pressure must be positive");
    if (!(wall_thickness_mm > 0.0))
        throw std::runtime_error("config: wall thickness must be positive");
    if (layers < 2) throw std::runtime_error("config: layers must be >= 2");
    if (!(youngs_modulus_gpa > 0.0))
        throw std::runtime_error("config: Young's modulus must be positive");
    if (poisson_ratio < 0.0 || poisson_ratio >= 0.5)
        throw std::runtime_error("config: Poisson ratio must lie in [0, 0.5)");
    if (geometry.surface_label != 1 && geometry.surface_label != 2)
        throw std::runtime_error("config: surface label must be 1 or 2");
    if (output_dir.empty()) throw std::runtime_error("config: output_dir is required");
    registration.validate();
}

PipelineConfig PipelineConfig::from_json(const json& j) {
    PipelineConfig c;
    if (j.contains("input")) {
        const json& in = j.at("input");
        if (in.contains("phantom")) {
            const json& p = in.at("phantom");
            PhantomSpec s;
            s.kind = p.value("kind", s.kind);
            s.radius_mm = p.value("radius_mm", s.radius_mm);
            s.wall_thickness_mm = p.value("wall_thickness_mm", s.wall_thickness_mm);
            s.length_mm = p.value("length_mm", s.length_mm);
            s.spacing_mm = p.value("spacing_mm", s.spacing_mm);
            s.inflation = p.value("inflation", s.inflation);
            s.smoothing_sigma_mm = p.value("smoothing_sigma_mm", s.smoothing_sigma_mm);
            s.base_radius_mm = p.value("base_radius_mm", s.base_radius_mm);
            s.bulge_amplitude_mm = p.value("bulge_amplitude_mm", s.bulge_amplitude_mm);
            s.bulge_sigma_mm = p.value("bulge_sigma_mm", s.bulge_sigma_mm);
            c.phantom = s;
        } else {
            c.fixed_path = in.value("fixed", "");
            c.moving_path = in.value("moving", "");
            c.labels_path = in.value("labels", "");
        }
    }
    c.pressure_kpa = j.value("pressure_kpa", c.pressure_kpa);
    c.wall_thickness_mm = j.value("wall_thickness_mm", c.wall_thickness_mm);
    c.layers = j.value("layers", c.layers);
    if (j.contains("registration")) {
        const json& r = j.at("registration");
        c.registration.lambda_tv = r.value("lambda_tv", c.registration.lambda_tv);
        c.registration.pyramid_levels =
            r.value("pyramid_levels", c.registration.pyramid_levels);
        c.registration.iterations_per_level =
            r.value("iterations_per_level", c.registration.iterations_per_level);
        c.registration.admm_penalty = r.value("admm_penalty", c.registration.admm_penalty);
        c.registration.convergence_tol =
            r.value("convergence_tol", c.registration.convergence_tol);
        c.registration.seed = r.value("seed", c.registration.seed);
    }
    if (j.contains("geometry")) {
        const json& g = j.at("geometry");
        c.geometry.neighborhood_k = g.value("neighborhood_k", c.geometry.neighborhood_k);
        c.geometry.neighborhood_radius_mm =
            g.value("neighborhood_radius_mm", c.geometry.neighborhood_radius_mm);
        c.geometry.surface_label = g.value("surface_label", c.geometry.surface_label);
        if (g.contains("mlesac")) {
            const json& m = g.at("mlesac");
            c.geometry.mlesac.trials = m.value("trials", c.geometry.mlesac.trials);
            c.geometry.mlesac.inlier_tol_mm =
                m.value("inlier_tol_mm", c.geometry.mlesac.inlier_tol_mm);
            c.geometry.mlesac.seed = m.value("seed", c.geometry.mlesac.seed);
        }
    }
    if (j.contains("material")) {
        const json& m = j.at("material");
        c.youngs_modulus_gpa = m.value("youngs_modulus_gpa", c.youngs_modulus_gpa);
        c.poisson_ratio = m.value("poisson_ratio", c.poisson_ratio);
        c.ilt_enabled = m.value("ilt_enabled", c.ilt_enabled);
    }
    if (j.contains("indices")) {
        const json& i = j.at("indices");
        c.rsii.signed_variant = i.value("signed_rsii", c.rsii.signed_variant);
        c.rsii.area_weighted_mean = i.value("area_weighted_mean", c.rsii.area_weighted_mean);
    }
    if (j.contains("circumferential_axis")) {
        if (j.at("circumferential_axis").is_null()) {
            c.circumferential_axis.reset();
        } else {
            auto a = j.at("circumferential_axis").get<std::array<double, 3>>();
            c.circumferential_axis = a;
        }
    }
    c.output_dir = j.value("output_dir", c.output_dir);
    return c;
}

ordered_json PipelineConfig::to_json() const {
    ordered_json j;
    if (phantom) {
        j["input"]["phantom"] = {{"kind", phantom->kind},
                                 {"radius_mm", phantom->radius_mm},
                                 {"wall_thickness_mm", phantom->wall_thickness_mm},
                                 {"length_mm", phantom->length_mm},
                                 {"spacing_mm", phantom->spacing_mm},
                                 {"inflation", phantom->inflation},
                                 {"smoothing_sigma_mm", phantom->smoothing_sigma_mm},
                                 {"base_radius_mm", phantom->base_radius_mm},
                                 {"bulge_amplitude_mm", phantom->bulge_amplitude_mm},
                                 {"bulge_sigma_mm", phantom->bulge_sigma_mm}};
    } else {
        j["input"] = {{"fixed", fixed_path}, {"moving", moving_path}, {"labels", labels_path}};
    }
    j["pressure_kpa"] = pressure_kpa;
    j["wall_thickness_mm"] = wall_thickness_mm;
    j["layers"] = layers;
    j["registration"] = {{"lambda_tv", registration.lambda_tv},
                         {"pyramid_levels", registration.pyramid_levels},
                         {"iterations_per_level", registration.iterations_per_level},
                         {"admm_penalty", registration.admm_penalty},
                         {"convergence_tol", registration.convergence_tol},
                         {"seed", registration.seed}};
    j["geometry"] = {{"neighborhood_k", geometry.neighborhood_k},
                     {"neighborhood_radius_mm", geometry.neighborhood_radius_mm},
                     {"surface_label", geometry.surface_label},
                     {"mlesac",
                      {{"trials", geometry.mlesac.trials},
                       {"inlier_tol_mm", geometry.mlesac.inlier_tol_mm},
                       {"seed", geometry.mlesac.seed}}}};
    j["material"] = {{"youngs_modulus_gpa", youngs_modulus_gpa},
                     {"poisson_ratio", poisson_ratio},
                     {"ilt_enabled", ilt_enabled}};
    j["indices"] = {{"signed_rsii", rsii.signed_variant},
                    {"area_weighted_mean", rsii.area_weighted_mean}};
    if (circumferential_axis)
        j["circumferential_axis"] = *circumferential_axis;
    else
        j["circumferential_axis"] = nullptr;
    j["output_dir"] = output_dir;
    return j;
}

PipelineConfig PipelineConfig::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("config: cannot open " + path);
    json j = json::parse(in);
    return from_json(j);
}

std::string config_hash(const PipelineConfig& config) {
    const std::string dump = config.to_json().dump();
    uint64_t h = 1469598103934665603ull;  // FNV-1a
    for (unsigned char c : dump) {
        h ^= c;
        h *= 1099511628211ull;
    }
    char buf[20];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

Stage stage_from_name(const std::string& name) {
    if (name == "input" || name == "phantom" || name == "load") return Stage::Input;
    if (name == "surface") return Stage::Surface;
    if (name == "register") return Stage::Register;
    if (name == "tension") return Stage::Tension;
    if (name == "indices") return Stage::Indices;
    throw std::runtime_error("unknown stage '" + name + "'");
}

// ---------------------------------------------------------------------------
// Pipeline
// ---------------------------------------------------------------------------

namespace {

struct LockFile {
    fs::path path;
    explicit LockFile(const fs::path& dir) : path(dir / ".lock") {
        if (fs::exists(path))
            throw std::runtime_error(
                "output directory is locked by another run (remove " + path.string() +
                " if that run is gone)");
        std::ofstream out(path);
        out << "locked\n";
    }
    ~LockFile() {
        std::error_code ec;
        fs::remove(path, ec);
    }
};

PhantomCase generate_phantom(const PhantomSpec& s) {
    if (s.kind == "cylinder")
        return make_cylinder_phantom(s.radius_mm, s.wall_thickness_mm, s.length_mm,
                                     s.spacing_mm, s.inflation, s.smoothing_sigma_mm);
    if (s.kind == "sphere")
        return make_sphere_phantom(s.radius_mm, s.wall_thickness_mm, s.spacing_mm,
                                   s.inflation, s.smoothing_sigma_mm);
    return make_fusiform_phantom(s.base_radius_mm, s.bulge_amplitude_mm, s.bulge_sigma_mm,
                                 s.length_mm, s.spacing_mm, s.inflation,
                                 s.smoothing_sigma_mm);
}

void write_json(const ordered_json& j, const fs::path& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << j.dump(2) << "\n";
}

}  // namespace

void export_report_json(const PercentileReport& report, const std::string& hash,
                        const std::string& path) {
    auto block = [](const FieldStats& s, double scale, const char* unit) {
        return ordered_json{{"p99", s.p99_abs * scale},
                            {"mean", s.mean * scale},
                            {"stddev", s.stddev * scale},
                            {"unit", unit}};
    };
    ordered_json j;
    j["tension"] = block(report.tension, 1e-3, "N/mm");
    j["strain"] = block(report.strain, 1e2, "%");
    j["sii"] = block(report.sii, 1e3, "mm/N");
    j["rsii"] = block(report.rsii, 1.0, "1");
    j["masked_vertices"] = {{"tension", report.tension.masked},
                            {"strain", report.strain.masked},
                            {"sii", report.sii.masked},
                            {"rsii", report.rsii.masked}};
    j["total_vertices"] = report.total_vertices;
    j["degenerate_rsii"] = report.degenerate_rsii;
    j["config_hash"] = hash;
    write_json(j, path);
}

PercentileReport run_pipeline(const PipelineConfig& config, Stage from) {
    config.validate();
    const fs::path out_dir(config.output_dir);
    fs::create_directories(out_dir);
    LockFile lock(out_dir);
    const std::string hash = config_hash(config);

    // --- stage: input --------------------------------------------------
    const fs::path input_dir = out_dir / "input";
    if (from <= Stage::Input) {
        try {
            fs::create_directories(input_dir);
            if (config.phantom) {
                PhantomCase c = generate_phantom(*config.phantom);
                save_phantom_case(c, input_dir.string());
            } else {
                save_volume(load_volume(config.fixed_path), (input_dir / "fixed.mhd").string());
                save_volume(load_volume(config.moving_path),
                            (input_dir / "moving.mhd").string());
                save_labels(load_labels(config.labels_path),
                            (input_dir / "labels.mhd").string());
            }
        } catch (const std::exception& e) {
            throw StageError("input", e.what());
        }
    }

    // --- stage: surface -------------------------------------------------
    const fs::path surface_path = out_dir / "surface" / "surface.vtk";
    if (from <= Stage::Surface) {
        try {
            fs::create_directories(out_dir / "surface");
            LabelMap labels = load_labels((input_dir / "labels.mhd").string());
            TriangleSurface surface =
                extract_surface(labels, config.geometry.surface_label);
            local_frames(surface, config.geometry.neighborhood_k);
            estimate_curvature(surface, config.geometry.neighborhood_radius_mm,
                               config.geometry.mlesac);
            export_vtk(surface, {}, surface_path.string());
        } catch (const std::exception& e) {
            throw StageError("surface", e.what());
        }
    }

    // --- stage: register --------------------------------------------------
    const fs::path reg_dir = out_dir / "register";
    if (from <= Stage::Register) {
        try {
            fs::create_directories(reg_dir);
            VoxelGrid fixed = load_volume((input_dir / "fixed.mhd").string());
            VoxelGrid moving = load_volume((input_dir / "moving.mhd").string());
            ConvergenceLog log;
            DisplacementField field =
                register_images(fixed, moving, config.registration, &log);
            save_field(field, (reg_dir / "field").string());

            ordered_json trace;
            trace["seed"] = config.registration.seed;
            trace["levels"] = ordered_json::array();
            for (const auto& level : log.levels)
                trace["levels"].push_back({{"dims", level.dims},
                                           {"energies", level.energies},
                                           {"safeguard_rejections",
                                            level.safeguard_rejections}});
            write_json(trace, reg_dir / "convergence.json");
        } catch (const std::exception& e) {
            throw StageError("register", e.what());
        }
    }

    // --- stage: tension -----------------------------------------------------
    const fs::path tension_path = out_dir / "tension" / "tension.vtk";
    if (from <= Stage::Tension) {
        try {
            fs::create_directories(out_dir / "tension");
            TriangleSurface surface = load_surface_vtk(surface_path.string()).surface;
            WallMesh mesh = build_wall_mesh(surface, config.wall_thickness_mm, config.layers);
            Material wall{config.youngs_modulus_gpa * 1e9, config.poisson_ratio};
            std::optional<Material> ilt;
            if (config.ilt_enabled)
                ilt = Material{wall.youngs_modulus_pa / 20.0, wall.poisson_ratio};
            ElasticitySolution sol =
                solve_elasticity(mesh, config.pressure_kpa * 1e3, wall, ilt);
            StressField averaged = uniform_stress_average(mesh, sol.stress);
            std::optional<Eigen::Vector3d> axis;
            if (config.circumferential_axis)
                axis = Eigen::Vector3d((*config.circumferential_axis)[0],
                                       (*config.circumferential_axis)[1],
                                       (*config.circumferential_axis)[2]);
            TensionFields tension = wall_tension(mesh, averaged, surface, axis);
            export_vtk(surface, {tension.max_principal, tension.circumferential},
                       tension_path.string());

            ordered_json summary;
            summary["tension_p99_n_per_mm"] =
                percentile_abs(tension.max_principal.values, tension.max_principal.valid,
                               99.0) * 1e-3;
            summary["equilibrium"] = {
                {"total_load_n", {sol.total_load.x(), sol.total_load.y(), sol.total_load.z()}},
                {"total_reaction_n",
                 {sol.total_reaction.x(), sol.total_reaction.y(), sol.total_reaction.z()}},
                {"load_magnitude_n", sol.load_magnitude},
                {"relative_imbalance",
                 (sol.total_load + sol.total_reaction).norm() /
                     std::max(sol.load_magnitude, 1e-30)}};
            summary["nodes"] = mesh.nodes.size();
            summary["tets"] = mesh.tets.size();
            write_json(summary, out_dir / "tension" / "summary.json");
        } catch (const std::exception& e) {
            throw StageError("tension", e.what());
        }
    }

    // --- stage: indices -----------------------------------------------------
    PercentileReport report;
    if (from <= Stage::Indices) {
        try {
            fs::create_directories(out_dir / "indices");
            LoadedSurface tension_loaded = load_surface_vtk(tension_path.string());
            TriangleSurface& surface = tension_loaded.surface;
            const SurfaceField* tension_max = nullptr;
            const SurfaceField* tension_circ = nullptr;
            for (const auto& f : tension_loaded.fields) {
                if (f.name == "tension_max_principal") tension_max = &f;
                if (f.name == "tension_circumferential") tension_circ = &f;
            }
            if (!tension_max)
                throw std::runtime_error("tension artifact lacks tension_max_principal");

            DisplacementField field = load_field((reg_dir / "field").string());
            std::vector<uint8_t> clamped;
            auto reg_vectors = interpolate_at_vertices(field, surface, &clamped);
            int clamped_count = 0;
            for (uint8_t c : clamped) clamped_count += c;
            // registration maps fixed (systolic) onto moving (diastolic);
            // the physical wall motion is the reverse
            for (auto& v : reg_vectors)
                for (double& c : v) c = -c;

            IndexBundle bundle =
                compute_indices(reg_vectors, surface, *tension_max, config.rsii);
            report = bundle.report;

            std::vector<SurfaceField> fields{*tension_max};
            if (tension_circ) fields.push_back(*tension_circ);
            fields.push_back(bundle.strain);
            fields.push_back(bundle.sii);
            fields.push_back(bundle.rsii);
            fields.push_back(bundle.normal_disp);
            fields.push_back(bundle.tangential);
            export_vtk(surface, fields, (out_dir / "indices" / "indices.vtk").string());
            export_report_json(report, hash, (out_dir / "indices" / "report.json").string());
            if (clamped_count > 0)
                std::cerr << "warning: " << clamped_count
                          << " vertices outside the field extent were edge-clamped\n";
        } catch (const StageError&) {
            throw;
        } catch (const std::exception& e) {
            throw StageError("indices", e.what());
        }
    }

    // --- manifest ----------------------------------------------------------
    ordered_json manifest;
    manifest["tool"] = "rsii";
    manifest["version"] = "0.1.0";
    manifest["config_hash"] = hash;
    manifest["config"] = config.to_json();
    manifest["seeds"] = {{"registration", config.registration.seed},
                         {"mlesac", config.geometry.mlesac.seed}};
    manifest["stages"] = {"input", "surface", "register", "tension", "indices"};
    manifest["resumed_from"] = static_cast<int>(from);
    manifest["timestamp"] = static_cast<long long>(::time(nullptr));
    write_json(manifest, out_dir / "manifest.json");
    return report;
}

}  // namespace rsii
