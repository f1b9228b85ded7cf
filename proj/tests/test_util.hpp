#pragma once

// shared fixtures for the test suites

#include <Eigen/Dense>
#include <cmath>
#include <filesystem>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "rsii/geometry.hpp"

namespace test_util {

inline std::filesystem::path fresh_dir(const std::string& tag) {
    auto dir = std::filesystem::temp_directory_path() /
               ("rsii_test_" + tag + "_" + std::to_string(::getpid()));
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

// Icosphere: exact-radius sphere triangulation, `subdivisions` quadruples the
// face count each time.
inline rsii::TriangleSurface make_icosphere(double radius, int subdivisions,
                                            const Eigen::Vector3d& center = {0, 0, 0}) {
    using Eigen::Vector3d;
    const double phi = (1.0 + std::sqrt(5.0)) / 2.0;
    std::vector<Vector3d> verts = {
        {-1, phi, 0}, {1, phi, 0},  {-1, -phi, 0}, {1, -phi, 0},
        {0, -1, phi}, {0, 1, phi},  {0, -1, -phi}, {0, 1, -phi},
        {phi, 0, -1}, {phi, 0, 1},  {-phi, 0, -1}, {-phi, 0, 1}};
    std::vector<std::array<int, 3>> faces = {
        {0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11},
        {1, 5, 9},  {5, 11, 4}, {11, 10, 2}, {10, 7, 6}, {7, 1, 8},
        {3, 9, 4},  {3, 4, 2},  {3, 2, 6},   {3, 6, 8},  {3, 8, 9},
        {4, 9, 5},  {2, 4, 11}, {6, 2, 10},  {8, 6, 7},  {9, 8, 1}};
    for (auto& v : verts) v.normalize();

    for (int s = 0; s < subdivisions; ++s) {
        std::map<std::pair<int, int>, int> midpoint;
        auto mid = [&](int a, int b) {
            auto key = std::minmax(a, b);
            auto it = midpoint.find(key);
            if (it != midpoint.end()) return it->second;
            Vector3d m = (verts[a] + verts[b]).normalized();
            verts.push_back(m);
            int idx = static_cast<int>(verts.size()) - 1;
            midpoint[key] = idx;
            return idx;
        };
        std::vector<std::array<int, 3>> next;
        for (const auto& f : faces) {
            int ab = mid(f[0], f[1]), bc = mid(f[1], f[2]), ca = mid(f[2], f[0]);
            next.push_back({f[0], ab, ca});
            next.push_back({f[1], bc, ab});
            next.push_back({f[2], ca, bc});
            next.push_back({ab, bc, ca});
        }
        faces = next;
    }

    rsii::TriangleSurface s;
    for (const auto& v : verts) s.vertices.push_back(center + radius * v);
    s.triangles = faces;
    return s;
}

// Structured open tube along z (exact cylinder samples).
inline rsii::TriangleSurface make_tube(double radius, double length, int n_around,
                                       int n_along) {
    rsii::TriangleSurface s;
    for (int i = 0; i < n_along; ++i) {
        double z = -length / 2 + length * i / (n_along - 1);
        for (int j = 0; j < n_around; ++j) {
            double a = 2 * M_PI * j / n_around;
            s.vertices.push_back({radius * std::cos(a), radius * std::sin(a), z});
        }
    }
    auto id = [&](int i, int j) { return i * n_around + (j % n_around); };
    for (int i = 0; i + 1 < n_along; ++i)
        for (int j = 0; j < n_around; ++j) {
            s.triangles.push_back({id(i, j), id(i, j + 1), id(i + 1, j)});
            s.triangles.push_back({id(i, j + 1), id(i + 1, j + 1), id(i + 1, j)});
        }
    for (int j = 0; j < n_around; ++j) {
        s.end_rings[0].push_back(id(0, j));
        s.end_rings[1].push_back(id(n_along - 1, j));
    }
    return s;
}

inline double rms(const std::vector<float>& a, const std::vector<float>& b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        double d = double(a[i]) - double(b[i]);
        acc += d * d;
    }
    return std::sqrt(acc / a.size());
}

inline double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    return v.empty() ? 0.0 : v[v.size() / 2];
}

}  // namespace test_util
