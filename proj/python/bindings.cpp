#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "rsii/indices.hpp"
#include "rsii/pipeline.hpp"
#include "rsii/vtk_io.hpp"

namespace py = pybind11;
using namespace rsii;

namespace {

py::array_t<float> grid_to_array(const VoxelGrid& g) {
    py::array_t<float> arr({g.dims[2], g.dims[1], g.dims[0]});
    std::copy(g.data.begin(), g.data.end(), arr.mutable_data());
    return arr;
}

VoxelGrid grid_from_array(py::array_t<float, py::array::c_style | py::array::forcecast> arr,
                          std::array<double, 3> spacing, std::array<double, 3> origin) {
    if (arr.ndim() != 3) throw std::runtime_error("expected a 3D array (z, y, x)");
    VoxelGrid g;
    g.dims = {static_cast<int>(arr.shape(2)), static_cast<int>(arr.shape(1)),
              static_cast<int>(arr.shape(0))};
    g.spacing = spacing;
    g.origin = origin;
    g.data.assign(arr.data(), arr.data() + arr.size());
    g.validate();
    return g;
}

py::array_t<double> vertices_array(const TriangleSurface& s) {
    py::array_t<double> arr({static_cast<py::ssize_t>(s.vertices.size()),
                             static_cast<py::ssize_t>(3)});
    auto r = arr.mutable_unchecked<2>();
    for (py::ssize_t v = 0; v < r.shape(0); ++v)
        for (int c = 0; c < 3; ++c) r(v, c) = s.vertices[v][c];
    return arr;
}

py::array_t<int> triangles_array(const TriangleSurface& s) {
    py::array_t<int> arr({static_cast<py::ssize_t>(s.triangles.size()),
                          static_cast<py::ssize_t>(3)});
    auto r = arr.mutable_unchecked<2>();
    for (py::ssize_t t = 0; t < r.shape(0); ++t)
        for (int c = 0; c < 3; ++c) r(t, c) = s.triangles[t][c];
    return arr;
}

py::array_t<double> normals_array(const TriangleSurface& s) {
    py::array_t<double> arr({static_cast<py::ssize_t>(s.frames.size()),
                             static_cast<py::ssize_t>(3)});
    auto r = arr.mutable_unchecked<2>();
    for (py::ssize_t v = 0; v < r.shape(0); ++v)
        for (int c = 0; c < 3; ++c) r(v, c) = s.frames[v].normal[c];
    return arr;
}

py::dict report_to_dict(const PercentileReport& r) {
    auto stats = [](const FieldStats& s) {
        py::dict d;
        d["p99_abs"] = s.p99_abs;
        d["mean"] = s.mean;
        d["stddev"] = s.stddev;
        d["masked"] = s.masked;
        return d;
    };
    py::dict d;
    d["tension"] = stats(r.tension);
    d["strain"] = stats(r.strain);
    d["sii"] = stats(r.sii);
    d["rsii"] = stats(r.rsii);
    d["total_vertices"] = r.total_vertices;
    d["degenerate_rsii"] = r.degenerate_rsii;
    return d;
}

}  // namespace

PYBIND11_MODULE(_rsii, m) {
    m.doc() = "wall tension, circumferential strain and structural integrity maps";

    py::class_<VoxelGrid>(m, "VoxelGrid")
        .def(py::init(&grid_from_array), py::arg("array"), py::arg("spacing"),
             py::arg("origin"))
        .def_readonly("dims", &VoxelGrid::dims)
        .def_readonly("spacing", &VoxelGrid::spacing)
        .def_readonly("origin", &VoxelGrid::origin)
        .def_property_readonly("array", &grid_to_array)
        .def("voxel_volume", &VoxelGrid::voxel_volume);

    py::class_<LabelMap>(m, "LabelMap")
        .def_readonly("grid", &LabelMap::grid);

    py::class_<DisplacementField>(m, "DisplacementField")
        .def_readonly("dims", &DisplacementField::dims)
        .def_readonly("spacing", &DisplacementField::spacing)
        .def_readonly("origin", &DisplacementField::origin)
        .def_property_readonly("x", [](const DisplacementField& f) {
            return grid_to_array(f.component_grid(0));
        })
        .def_property_readonly("y", [](const DisplacementField& f) {
            return grid_to_array(f.component_grid(1));
        })
        .def_property_readonly("z", [](const DisplacementField& f) {
            return grid_to_array(f.component_grid(2));
        });

    m.def("load_volume", &load_volume, py::arg("path"));
    m.def("save_volume",
          [](const VoxelGrid& g, const std::string& path) { save_volume(g, path); },
          py::arg("grid"), py::arg("path"));
    m.def("load_labels", &load_labels, py::arg("path"));
    m.def("save_labels", &save_labels, py::arg("labels"), py::arg("path"));
    m.def("sample_trilinear", &sample_trilinear, py::arg("grid"), py::arg("point_mm"));
    m.def("save_field", &save_field, py::arg("field"), py::arg("prefix"));
    m.def("load_field", &load_field, py::arg("prefix"));

    py::class_<AnalyticInfo>(m, "AnalyticInfo")
        .def_readonly("tension_per_pressure_m", &AnalyticInfo::tension_per_pressure_m)
        .def_readonly("strain_circ", &AnalyticInfo::strain_circ)
        .def_readonly("reference_radius_mm", &AnalyticInfo::reference_radius_mm);

    py::class_<PhantomCase>(m, "PhantomCase")
        .def_readonly("fixed_image", &PhantomCase::fixed_image)
        .def_readonly("moving_image", &PhantomCase::moving_image)
        .def_readonly("labels", &PhantomCase::labels)
        .def_readonly("truth_displacement", &PhantomCase::truth_displacement)
        .def_readonly("analytic", &PhantomCase::analytic);

    m.def("make_cylinder_phantom", &make_cylinder_phantom, py::arg("radius_mm"),
          py::arg("wall_thickness_mm"), py::arg("length_mm"), py::arg("spacing_mm"),
          py::arg("inflation"), py::arg("smoothing_sigma_mm") = 1.0);
    m.def("make_sphere_phantom", &make_sphere_phantom, py::arg("radius_mm"),
          py::arg("wall_thickness_mm"), py::arg("spacing_mm"), py::arg("inflation"),
          py::arg("smoothing_sigma_mm") = 1.0);
    m.def("make_fusiform_phantom", &make_fusiform_phantom, py::arg("base_radius_mm"),
          py::arg("bulge_amplitude_mm"), py::arg("bulge_sigma_mm"), py::arg("length_mm"),
          py::arg("spacing_mm"), py::arg("inflation"), py::arg("smoothing_sigma_mm") = 1.0);
    m.def("save_phantom_case", &save_phantom_case, py::arg("case"), py::arg("dir"));

    py::class_<RegConfig>(m, "RegConfig")
        .def(py::init<>())
        .def_readwrite("lambda_tv", &RegConfig::lambda_tv)
        .def_readwrite("pyramid_levels", &RegConfig::pyramid_levels)
        .def_readwrite("iterations_per_level", &RegConfig::iterations_per_level)
        .def_readwrite("admm_penalty", &RegConfig::admm_penalty)
        .def_readwrite("convergence_tol", &RegConfig::convergence_tol)
        .def_readwrite("seed", &RegConfig::seed);

    m.def("register_images",
          [](const VoxelGrid& fixed, const VoxelGrid& moving, const RegConfig& cfg) {
              ConvergenceLog log;
              DisplacementField f = register_images(fixed, moving, cfg, &log);
              py::list levels;
              for (const auto& level : log.levels) {
                  py::dict d;
                  d["dims"] = level.dims;
                  d["energies"] = level.energies;
                  d["safeguard_rejections"] = level.safeguard_rejections;
                  levels.append(d);
              }
              return py::make_tuple(f, levels);
          },
          py::arg("fixed"), py::arg("moving"), py::arg("config") = RegConfig{});
    m.def("registration_energy",
          [](const VoxelGrid& fixed, const VoxelGrid& moving, const DisplacementField& f,
             double lambda_tv) {
              RegistrationEnergy e = registration_energy(fixed, moving, f, lambda_tv);
              py::dict d;
              d["total"] = e.total;
              d["data_term"] = e.data_term;
              d["tv_term"] = e.tv_term;
              return d;
          },
          py::arg("fixed"), py::arg("moving"), py::arg("field"), py::arg("lambda_tv"));
    m.def("warp", &warp, py::arg("moving"), py::arg("field"));

    py::class_<TriangleSurface>(m, "TriangleSurface")
        .def_property_readonly("vertices", &vertices_array)
        .def_property_readonly("triangles", &triangles_array)
        .def_property_readonly("normals", &normals_array)
        .def_readonly("curvature_radius_mm", &TriangleSurface::curvature_radius_mm)
        .def_readonly("end_rings", &TriangleSurface::end_rings)
        .def("euler_characteristic", &TriangleSurface::euler_characteristic)
        .def("mean_edge_length", &TriangleSurface::mean_edge_length);

    py::class_<MlesacConfig>(m, "MlesacConfig")
        .def(py::init<>())
        .def_readwrite("trials", &MlesacConfig::trials)
        .def_readwrite("inlier_tol_mm", &MlesacConfig::inlier_tol_mm)
        .def_readwrite("seed", &MlesacConfig::seed);

    m.def("extract_surface", &extract_surface, py::arg("labels"), py::arg("label_code"),
          py::arg("iso") = 0.5);
    m.def("local_frames", &local_frames, py::arg("surface"),
          py::arg("neighborhood_k") = 12);
    m.def("estimate_curvature", &estimate_curvature, py::arg("surface"),
          py::arg("neighborhood_radius_mm") = 0.0, py::arg("config") = MlesacConfig{});
    m.def("curvature_radius_at",
          [](const TriangleSurface& s, int vertex, double radius, const MlesacConfig& cfg) {
              bool flat = false;
              double r = curvature_radius_at(s, vertex, radius, cfg, &flat);
              return py::make_tuple(r, flat);
          },
          py::arg("surface"), py::arg("vertex"), py::arg("neighborhood_radius_mm"),
          py::arg("config") = MlesacConfig{});
    m.def("interpolate_at_vertices",
          [](const DisplacementField& f, const TriangleSurface& s) {
              auto v = interpolate_at_vertices(f, s);
              py::array_t<double> arr({static_cast<py::ssize_t>(v.size()),
                                       static_cast<py::ssize_t>(3)});
              auto r = arr.mutable_unchecked<2>();
              for (py::ssize_t i = 0; i < r.shape(0); ++i)
                  for (int c = 0; c < 3; ++c) r(i, c) = v[i][c];
              return arr;
          },
          py::arg("field"), py::arg("surface"));

    py::class_<Material>(m, "Material")
        .def(py::init<>())
        .def_readwrite("youngs_modulus_pa", &Material::youngs_modulus_pa)
        .def_readwrite("poisson_ratio", &Material::poisson_ratio);

    py::class_<WallMesh>(m, "WallMesh")
        .def_property_readonly("node_count",
                               [](const WallMesh& w) { return w.nodes.size(); })
        .def_property_readonly("tet_count", [](const WallMesh& w) { return w.tets.size(); })
        .def_readonly("thickness_mm", &WallMesh::thickness_mm)
        .def_readonly("layers", &WallMesh::layers);

    py::class_<StressField>(m, "StressField");

    py::class_<ElasticitySolution>(m, "ElasticitySolution")
        .def_readonly("stress", &ElasticitySolution::stress)
        .def_property_readonly("equilibrium_imbalance", [](const ElasticitySolution& s) {
            return (s.total_load + s.total_reaction).norm() /
                   std::max(s.load_magnitude, 1e-30);
        });

    py::class_<SurfaceField>(m, "SurfaceField")
        .def_readonly("name", &SurfaceField::name)
        .def_readonly("unit", &SurfaceField::unit)
        .def_readonly("values", &SurfaceField::values)
        .def_readonly("valid", &SurfaceField::valid);

    py::class_<TensionFields>(m, "TensionFields")
        .def_readonly("max_principal", &TensionFields::max_principal)
        .def_readonly("circumferential", &TensionFields::circumferential);

    m.def("build_wall_mesh", &build_wall_mesh, py::arg("surface"), py::arg("thickness_mm"),
          py::arg("layers"));
    m.def("solve_elasticity", &solve_elasticity, py::arg("mesh"), py::arg("pressure_pa"),
          py::arg("wall"), py::arg("ilt") = std::nullopt);
    m.def("uniform_stress_average", &uniform_stress_average, py::arg("mesh"),
          py::arg("stress"));
    m.def("wall_tension", &wall_tension, py::arg("mesh"), py::arg("averaged"),
          py::arg("surface"), py::arg("axis") = std::nullopt);

    py::class_<RsiiOptions>(m, "RsiiOptions")
        .def(py::init<>())
        .def_readwrite("signed_variant", &RsiiOptions::signed_variant)
        .def_readwrite("area_weighted_mean", &RsiiOptions::area_weighted_mean);

    py::class_<IndexBundle>(m, "IndexBundle")
        .def_readonly("normal_disp", &IndexBundle::normal_disp)
        .def_readonly("strain", &IndexBundle::strain)
        .def_readonly("sii", &IndexBundle::sii)
        .def_readonly("rsii", &IndexBundle::rsii)
        .def_property_readonly("report",
                               [](const IndexBundle& b) { return report_to_dict(b.report); });

    m.def("relative_sii",
          [](const SurfaceField& sii, const RsiiOptions& opts) {
              return relative_sii(sii, opts, nullptr);
          },
          py::arg("sii"), py::arg("options") = RsiiOptions{});
    m.def("percentile_abs", &percentile_abs, py::arg("values"), py::arg("valid"),
          py::arg("pct"));
    m.def("compute_indices",
          [](py::array_t<double, py::array::c_style | py::array::forcecast> disp,
             const TriangleSurface& surface, const SurfaceField& tension,
             const RsiiOptions& opts) {
              auto r = disp.unchecked<2>();
              std::vector<std::array<double, 3>> vectors(r.shape(0));
              for (py::ssize_t i = 0; i < r.shape(0); ++i)
                  vectors[i] = {r(i, 0), r(i, 1), r(i, 2)};
              return compute_indices(vectors, surface, tension, opts);
          },
          py::arg("wall_disp_mm"), py::arg("surface"), py::arg("tension"),
          py::arg("options") = RsiiOptions{});

    m.def("export_vtk", &export_vtk, py::arg("surface"), py::arg("fields"),
          py::arg("path"));
    m.def("load_surface_vtk",
          [](const std::string& path) {
              LoadedSurface ls = load_surface_vtk(path);
              return py::make_tuple(ls.surface, ls.fields);
          },
          py::arg("path"));

    m.def("run_pipeline",
          [](const std::string& config_json_path, const std::string& from_stage) {
              PipelineConfig config = PipelineConfig::load(config_json_path);
              PercentileReport r = run_pipeline(config, stage_from_name(from_stage));
              return report_to_dict(r);
          },
          py::arg("config_path"), py::arg("from_stage") = "input");

    m.attr("__version__") = "0.1.0";
}
