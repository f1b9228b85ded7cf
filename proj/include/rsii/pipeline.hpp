#pragma once

#include <optional>
#include <string>

#include <json.hpp>

#include "rsii/geometry.hpp"
#include "rsii/indices.hpp"
#include "rsii/phantom.hpp"
#include "rsii/registration.hpp"
#include "rsii/solver.hpp"

namespace rsii {

/// Synthetic input description (alternative to image file paths).
struct PhantomSpec {
    std::string kind = "cylinder";  // cylinder | sphere | fusiform
    double radius_mm = 25.0;
    double wall_thickness_mm = 1.5;
    double length_mm = 90.0;
    double spacing_mm = 1.0;
    double inflation = 0.03;
    double smoothing_sigma_mm = 1.0;
    // fusiform only
    double base_radius_mm = 12.0;
    double bulge_amplitude_mm = 10.0;
    double bulge_sigma_mm = 12.0;
};

struct GeometryConfig {
    int neighborhood_k = 12;
    double neighborhood_radius_mm = 0.0;  // <= 0: 4 x mean edge length
    MlesacConfig mlesac{200, 0.3, 77};
    int surface_label = 1;  // 1 = outer wall, 2 = lumen
};

struct PipelineConfig {
    // exactly one input source: a phantom spec or the three image paths
    std::optional<PhantomSpec> phantom;
    std::string fixed_path, moving_path, labels_path;

    double pressure_kpa = 13.0;
    double wall_thickness_mm = 1.5;
    int layers = 2;

    RegConfig registration;
    GeometryConfig geometry;

    double youngs_modulus_gpa = 100.0;
    double poisson_ratio = 0.3;
    bool ilt_enabled = false;  // optional second region at E/20

    RsiiOptions rsii;
    std::optional<std::array<double, 3>> circumferential_axis =
        std::array<double, 3>{0.0, 0.0, 1.0};

    std::string output_dir = "out";

    void validate() const;
    static PipelineConfig from_json(const nlohmann::json& j);
    nlohmann::ordered_json to_json() const;
    static PipelineConfig load(const std::string& path);
};

/// Stable 64-bit hash of the canonical config JSON.
std::string config_hash(const PipelineConfig& config);

enum class Stage { Input = 0, Surface = 1, Register = 2, Tension = 3, Indices = 4 };
Stage stage_from_name(const std::string& name);

/// Runs input -> surface -> register -> tension -> indices, writing each
/// stage's artifacts under the output directory and reloading them as the
/// next stage's input (which is what makes --from resumption exact). Returns
/// the final report. Throws StageError with the failing stage name.
struct StageError : std::runtime_error {
    std::string stage;
    StageError(std::string stage_name, const std::string& what)
        : std::runtime_error("stage '" + stage_name + "' failed: " + what),
          stage(std::move(stage_name)) {}
};

PercentileReport run_pipeline(const PipelineConfig& config, Stage from = Stage::Input);

/// Report JSON with the clinical units of the tabulated quantities
/// (N/mm, %, mm/N, dimensionless); masked vertices appear as counts.
void export_report_json(const PercentileReport& report, const std::string& hash,
                        const std::string& path);

}  // namespace rsii
