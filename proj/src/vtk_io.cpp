#include "rsii/vtk_io.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace rsii {

namespace {

// shortest exact representation of a double
std::string fmt(double x) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    return buf;
}

}  // namespace

void export_vtk(const TriangleSurface& surface, const std::vector<SurfaceField>& fields,
                const std::string& path) {
    const std::size_t nv = surface.vertices.size();
    for (const auto& f : fields)
        if (f.values.size() != nv)
            throw std::runtime_error("export_vtk: field '" + f.name +
                                     "' does not match the surface");

    std::ofstream out(path);
    if (!out) throw std::runtime_error("export_vtk: cannot write " + path);

    out << "# vtk DataFile Version 3.0\n";
    out << "wall surface map\n";
    out << "ASCII\n";
    out << "DATASET POLYDATA\n";
    out << "POINTS " << nv << " double\n";
    for (const auto& v : surface.vertices)
        out << fmt(v.x()) << " " << fmt(v.y()) << " " << fmt(v.z()) << "\n";

    out << "POLYGONS " << surface.triangles.size() << " " << surface.triangles.size() * 4
        << "\n";
    for (const auto& t : surface.triangles)
        out << "3 " << t[0] << " " << t[1] << " " << t[2] << "\n";

    out << "POINT_DATA " << nv << "\n";
    if (surface.has_frames()) {
        out << "NORMALS normals double\n";
        for (const auto& f : surface.frames)
            out << fmt(f.normal.x()) << " " << fmt(f.normal.y()) << " "
                << fmt(f.normal.z()) << "\n";
    }

    for (const auto& f : fields) {
        out << "SCALARS " << f.name << " double 1\n";
        out << "LOOKUP_TABLE default\n";
        for (double v : f.values) out << fmt(v) << "\n";
    }

    // remaining state as FIELD arrays so the surface reloads losslessly
    auto has_mask = [](const SurfaceField& f) {
        for (uint8_t m : f.valid)
            if (!m) return true;
        return false;
    };
    int extra = 0;
    if (surface.has_frames()) extra += 2;
    if (surface.curvature_radius_mm.size() == nv) extra += 2;
    if (!surface.end_rings[0].empty() || !surface.end_rings[1].empty()) extra += 1;
    for (const auto& f : fields)
        if (has_mask(f)) ++extra;

    if (extra > 0) {
        out << "FIELD surface_state " << extra << "\n";
        if (surface.has_frames()) {
            out << "tangent1 3 " << nv << " double\n";
            for (const auto& f : surface.frames)
                out << fmt(f.tangent1.x()) << " " << fmt(f.tangent1.y()) << " "
                    << fmt(f.tangent1.z()) << "\n";
            out << "tangent2 3 " << nv << " double\n";
            for (const auto& f : surface.frames)
                out << fmt(f.tangent2.x()) << " " << fmt(f.tangent2.y()) << " "
                    << fmt(f.tangent2.z()) << "\n";
        }
        if (surface.curvature_radius_mm.size() == nv) {
            out << "curvature_radius 1 " << nv << " double\n";
            for (double r : surface.curvature_radius_mm) out << fmt(r) << "\n";
            out << "curvature_near_flat 1 " << nv << " int\n";
            for (uint8_t f : surface.curvature_near_flat) out << int(f) << "\n";
        }
        if (!surface.end_rings[0].empty() || !surface.end_rings[1].empty()) {
            std::vector<int> ring(nv, -1);
            for (int v : surface.end_rings[0]) ring[v] = 0;
            for (int v : surface.end_rings[1]) ring[v] = 1;
            out << "end_ring 1 " << nv << " int\n";
            for (int r : ring) out << r << "\n";
        }
        for (const auto& f : fields) {
            if (!has_mask(f)) continue;
            out << "valid_" << f.name << " 1 " << nv << " int\n";
            for (uint8_t m : f.valid) out << int(m) << "\n";
        }
    }
    if (!out) throw std::runtime_error("export_vtk: write failed for " + path);
}

namespace {

// the project's field names imply their units
std::string unit_for(const std::string& name) {
    if (name.rfind("tension", 0) == 0) return "N/m";
    if (name == "sii") return "m/N";
    if (name.find("displacement") != std::string::npos) return "mm";
    return "1";
}

}  // namespace

LoadedSurface load_surface_vtk(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_surface_vtk: cannot open " + path);

    LoadedSurface out;
    TriangleSurface& s = out.surface;

    std::string line;
    std::getline(in, line);  // version comment
    std::getline(in, line);  // title
    std::getline(in, line);  // ASCII
    std::getline(in, line);  // DATASET
    if (line.find("POLYDATA") == std::string::npos)
        throw std::runtime_error("load_surface_vtk: not a PolyData file: " + path);

    std::size_t nv = 0;
    std::string token;
    while (in >> token) {
        if (token == "POINTS") {
            std::string type;
            in >> nv >> type;
            s.vertices.resize(nv);
            for (auto& v : s.vertices) in >> v.x() >> v.y() >> v.z();
        } else if (token == "POLYGONS") {
            std::size_t n, total;
            in >> n >> total;
            s.triangles.resize(n);
            for (auto& t : s.triangles) {
                int count;
                in >> count >> t[0] >> t[1] >> t[2];
                if (count != 3)
                    throw std::runtime_error("load_surface_vtk: non-triangle polygon");
            }
        } else if (token == "POINT_DATA") {
            std::size_t n;
            in >> n;
            if (n != nv) throw std::runtime_error("load_surface_vtk: POINT_DATA mismatch");
        } else if (token == "NORMALS") {
            std::string name, type;
            in >> name >> type;
            s.frames.resize(nv);
            for (auto& f : s.frames) in >> f.normal.x() >> f.normal.y() >> f.normal.z();
        } else if (token == "SCALARS") {
            std::string name, type;
            int comps;
            in >> name >> type >> comps;
            std::string lut, lut_name;
            in >> lut >> lut_name;  // LOOKUP_TABLE default
            SurfaceField f(name, unit_for(name), nv);
            for (auto& v : f.values) in >> v;
            out.fields.push_back(std::move(f));
        } else if (token == "FIELD") {
            std::string name;
            int arrays;
            in >> name >> arrays;
            for (int a = 0; a < arrays; ++a) {
                std::string aname, atype;
                std::size_t comps, count;
                in >> aname >> comps >> count >> atype;
                std::vector<double> data(comps * count);
                for (auto& v : data) in >> v;

                if (aname == "tangent1" || aname == "tangent2") {
                    if (s.frames.size() != nv) s.frames.resize(nv);
                    for (std::size_t v = 0; v < count; ++v) {
                        Eigen::Vector3d t(data[3 * v], data[3 * v + 1], data[3 * v + 2]);
                        (aname == "tangent1" ? s.frames[v].tangent1
                                             : s.frames[v].tangent2) = t;
                    }
                } else if (aname == "curvature_radius") {
                    s.curvature_radius_mm.assign(data.begin(), data.end());
                    if (s.curvature_near_flat.size() != nv)
                        s.curvature_near_flat.assign(nv, 0);
                } else if (aname == "curvature_near_flat") {
                    s.curvature_near_flat.resize(nv);
                    for (std::size_t v = 0; v < count; ++v)
                        s.curvature_near_flat[v] = data[v] != 0.0;
                } else if (aname == "end_ring") {
                    for (std::size_t v = 0; v < count; ++v) {
                        if (data[v] == 0.0) s.end_rings[0].push_back(static_cast<int>(v));
                        if (data[v] == 1.0) s.end_rings[1].push_back(static_cast<int>(v));
                    }
                } else if (aname.rfind("valid_", 0) == 0) {
                    for (auto& f : out.fields)
                        if (f.name == aname.substr(6))
                            for (std::size_t v = 0; v < count; ++v)
                                f.valid[v] = data[v] != 0.0;
                }
                // unknown arrays are read and dropped
            }
        }
    }
    if (s.vertices.empty())
        throw std::runtime_error("load_surface_vtk: no POINTS in " + path);
    return out;
}

}  // namespace rsii
