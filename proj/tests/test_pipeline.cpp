#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <fstream>
#include <sstream>

#include "rsii/pipeline.hpp"
#include "rsii/vtk_io.hpp"
#include "test_util.hpp"

using namespace rsii;
namespace fs = std::filesystem;

namespace {

TriangleSurface unit_tetrahedron() {
    TriangleSurface s;
    s.vertices = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {0, 0, 1}};
    s.triangles = {{0, 2, 1}, {0, 1, 3}, {0, 3, 2}, {1, 2, 3}};
    return s;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

PipelineConfig small_cylinder_config(const fs::path& out, double inflation) {
    PipelineConfig c;
    PhantomSpec spec;
    spec.kind = "cylinder";
    spec.radius_mm = 20.0;
    spec.wall_thickness_mm = 3.0;
    spec.length_mm = 40.0;
    spec.spacing_mm = 2.0;
    spec.inflation = inflation;
    c.phantom = spec;
    c.wall_thickness_mm = 3.0;
    c.registration.pyramid_levels = 2;
    c.registration.iterations_per_level = 12;
    c.output_dir = out.string();
    return c;
}

}  // namespace

TEST_CASE("VTK writer golden file: unit tetrahedron with a constant field") {
    auto dir = test_util::fresh_dir("vtk_golden");
    TriangleSurface s = unit_tetrahedron();
    SurfaceField f("demo", "1", 4);
    std::fill(f.values.begin(), f.values.end(), 2.5);
    export_vtk(s, {f}, (dir / "tet.vtk").string());

    const std::string expected =
        "# vtk DataFile Version 3.0\n"
        "wall surface map\n"
        "ASCII\n"
        "DATASET POLYDATA\n"
        "POINTS 4 double\n"
        "0 0 0\n"
        "1 0 0\n"
        "0 1 0\n"
        "0 0 1\n"
        "POLYGONS 4 16\n"
        "3 0 2 1\n"
        "3 0 1 3\n"
        "3 0 3 2\n"
        "3 1 2 3\n"
        "POINT_DATA 4\n"
        "SCALARS demo double 1\n"
        "LOOKUP_TABLE default\n"
        "2.5\n2.5\n2.5\n2.5\n";
    CHECK(slurp(dir / "tet.vtk") == expected);
}

TEST_CASE("VTK export/load round-trip preserves everything") {
    auto dir = test_util::fresh_dir("vtk_roundtrip");
    TriangleSurface s = test_util::make_icosphere(12.5, 2);
    local_frames(s, 10);
    estimate_curvature(s, 4.0 * s.mean_edge_length(), MlesacConfig{100, 0.3, 3});
    SurfaceField f("tension_max_principal", "N/m", s.vertices.size());
    for (std::size_t v = 0; v < f.values.size(); ++v)
        f.values[v] = 100.0 + 0.123456789012345 * static_cast<double>(v);
    f.valid[7] = 0;

    export_vtk(s, {f}, (dir / "s.vtk").string());
    LoadedSurface loaded = load_surface_vtk((dir / "s.vtk").string());

    REQUIRE(loaded.surface.vertices.size() == s.vertices.size());
    for (std::size_t v = 0; v < s.vertices.size(); ++v) {
        CHECK((loaded.surface.vertices[v] - s.vertices[v]).norm() == 0.0);
        CHECK((loaded.surface.frames[v].normal - s.frames[v].normal).norm() == 0.0);
        CHECK((loaded.surface.frames[v].tangent1 - s.frames[v].tangent1).norm() == 0.0);
        CHECK(loaded.surface.curvature_radius_mm[v] == s.curvature_radius_mm[v]);
    }
    CHECK(loaded.surface.triangles == s.triangles);
    REQUIRE(loaded.fields.size() == 1);
    CHECK(loaded.fields[0].name == "tension_max_principal");
    CHECK(loaded.fields[0].unit == "N/m");
    CHECK(loaded.fields[0].values == f.values);
    CHECK(loaded.fields[0].valid == f.valid);
}

TEST_CASE("exported vertex count equals POINT_DATA count") {
    auto dir = test_util::fresh_dir("vtk_counts");
    TriangleSurface s = test_util::make_icosphere(5.0, 1);
    export_vtk(s, {}, (dir / "s.vtk").string());
    std::string text = slurp(dir / "s.vtk");
    std::ostringstream points, point_data;
    points << "POINTS " << s.vertices.size() << " double";
    point_data << "POINT_DATA " << s.vertices.size();
    CHECK(text.find(points.str()) != std::string::npos);
    CHECK(text.find(point_data.str()) != std::string::npos);
}

TEST_CASE("report JSON carries the clinical units and no NaNs") {
    auto dir = test_util::fresh_dir("report_json");
    PercentileReport r;
    r.tension = {325.0, 320.0, 5.0, 0};
    r.strain = {0.03, 0.029, 0.001, 2};
    r.sii = {9.23e-5, 9.0e-5, 4e-6, 2};
    r.rsii = {1.8, 1.0, 0.2, 2};
    r.total_vertices = 1234;
    export_report_json(r, "deadbeef", (dir / "report.json").string());

    std::ifstream in(dir / "report.json");
    nlohmann::json j = nlohmann::json::parse(in);
    CHECK(j["tension"]["unit"] == "N/mm");
    CHECK(j["strain"]["unit"] == "%");
    CHECK(j["sii"]["unit"] == "mm/N");
    CHECK(j["rsii"]["unit"] == "1");
    CHECK(j["tension"]["p99"].get<double>() == doctest::Approx(0.325));
    CHECK(j["strain"]["p99"].get<double>() == doctest::Approx(3.0));
    CHECK(j["sii"]["p99"].get<double>() == doctest::Approx(0.0923));
    CHECK(j["masked_vertices"]["sii"] == 2);
    CHECK(j["config_hash"] == "deadbeef");
    // NaN-free by construction: dump would emit null for NaN
    CHECK(slurp(dir / "report.json").find("null") == std::string::npos);
}

TEST_CASE("config JSON round-trip preserves the hash") {
    PipelineConfig c = small_cylinder_config("out_dir", 0.03);
    c.registration.lambda_tv = 123.0;
    c.rsii.signed_variant = true;
    PipelineConfig again = PipelineConfig::from_json(c.to_json());
    CHECK(config_hash(c) == config_hash(again));
    CHECK(again.registration.lambda_tv == 123.0);
    CHECK(again.rsii.signed_variant);
}

TEST_CASE("pipeline aborts with the failing stage name") {
    auto dir = test_util::fresh_dir("pipeline_abort");
    PipelineConfig c;
    c.fixed_path = (dir / "missing_fixed.mhd").string();
    c.moving_path = (dir / "missing_moving.mhd").string();
    c.labels_path = (dir / "missing_labels.mhd").string();
    c.output_dir = (dir / "out").string();
    CHECK_THROWS_AS(c.validate(), std::runtime_error);  // missing files

    // valid config but artifacts absent for a resumed stage
    PipelineConfig c2 = small_cylinder_config(dir / "out2", 0.0);
    try {
        run_pipeline(c2, Stage::Tension);  // nothing to resume from
        FAIL("expected a stage error");
    } catch (const StageError& e) {
        CHECK(e.stage == "tension");
    }
}

TEST_CASE("zero-inflation pipeline completes with the degenerate RSII flag") {
    auto dir = test_util::fresh_dir("pipeline_zero");
    PipelineConfig c = small_cylinder_config(dir / "out", 0.0);
    PercentileReport report = run_pipeline(c);
    CHECK(report.degenerate_rsii);
    CHECK(report.strain.p99_abs < 1e-3);

    std::ifstream in(fs::path(c.output_dir) / "indices" / "report.json");
    nlohmann::json j = nlohmann::json::parse(in);
    CHECK(j["degenerate_rsii"] == true);
}

TEST_CASE("resume reproduces downstream artifacts bitwise") {
    auto dir = test_util::fresh_dir("pipeline_resume");
    PipelineConfig c = small_cylinder_config(dir / "out", 0.05);
    run_pipeline(c);

    auto tension_before = slurp(fs::path(c.output_dir) / "tension" / "tension.vtk");
    auto indices_before = slurp(fs::path(c.output_dir) / "indices" / "indices.vtk");
    auto report_before = slurp(fs::path(c.output_dir) / "indices" / "report.json");

    run_pipeline(c, Stage::Tension);
    CHECK(slurp(fs::path(c.output_dir) / "tension" / "tension.vtk") == tension_before);
    CHECK(slurp(fs::path(c.output_dir) / "indices" / "indices.vtk") == indices_before);
    CHECK(slurp(fs::path(c.output_dir) / "indices" / "report.json") == report_before);

    run_pipeline(c, Stage::Indices);
    CHECK(slurp(fs::path(c.output_dir) / "indices" / "indices.vtk") == indices_before);
}

TEST_CASE("the output directory lock blocks concurrent runs") {
    auto dir = test_util::fresh_dir("pipeline_lock");
    PipelineConfig c = small_cylinder_config(dir / "out", 0.0);
    fs::create_directories(c.output_dir);
    std::ofstream lock(fs::path(c.output_dir) / ".lock");
    lock << "held\n";
    lock.close();
    CHECK_THROWS_WITH_AS(run_pipeline(c), doctest::Contains("locked"), std::runtime_error);
}
