#include "rsii/volume.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstring>
#include <deque>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <stdexcept>

namespace fs = std::filesystem;

namespace rsii {

VoxelGrid::VoxelGrid(std::array<int, 3> d, std::array<double, 3> sp,
                     std::array<double, 3> org)
    : dims(d), spacing(sp), origin(org) {
    data.assign(static_cast<std::size_t>(d[0]) * d[1] * d[2], 0.0f);
    validate();
}

void VoxelGrid::validate() const {
    for (int a = 0; a < 3; ++a) {
        if (dims[a] < 2)
            throw std::runtime_error("VoxelGrid: dims must be >= 2 per axis");
        if (!(spacing[a] > 0.0))
            throw std::runtime_error("VoxelGrid: spacing must be positive");
    }
    const std::size_t n = static_cast<std::size_t>(dims[0]) * dims[1] * dims[2];
    if (data.size() != n)
        throw std::runtime_error("VoxelGrid: data length does not match dims");
}

bool VoxelGrid::same_geometry(const VoxelGrid& other, double tol) const {
    if (dims != other.dims) return false;
    for (int a = 0; a < 3; ++a) {
        if (std::abs(spacing[a] - other.spacing[a]) > tol) return false;
        if (std::abs(origin[a] - other.origin[a]) > tol) return false;
    }
    return true;
}

// ---------------------------------------------------------------------------
// MetaImage I/O
// ---------------------------------------------------------------------------

namespace {

struct MhdHeader {
    std::array<int, 3> dims{};
    std::array<double, 3> spacing{1, 1, 1};
    std::array<double, 3> origin{0, 0, 0};
    ElementType type = ElementType::Float32;
    std::string data_file;
};

std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

template <typename T>
std::array<T, 3> parse_triple(const std::string& value, const std::string& key) {
    std::istringstream iss(value);
    std::array<T, 3> out{};
    for (int a = 0; a < 3; ++a) {
        if (!(iss >> out[a]))
            throw std::runtime_error("malformed header: expected 3 values for " + key);
    }
    return out;
}

MhdHeader parse_mhd(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open header: " + path);

    MhdHeader h;
    bool have_dims = false, have_type = false, have_file = false;
    std::string line;
    while (std::getline(in, line)) {
        line = trim(line);
        if (line.empty()) continue;
        std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw std::runtime_error("malformed header line in " + path + ": " + line);
        std::string key = trim(line.substr(0, eq));
        std::string value = trim(line.substr(eq + 1));
        for (unsigned char c : key) {
            if (c > 127)
                throw std::runtime_error("non-ASCII header key in " + path);
        }
        if (key == "NDims") {
            if (trim(value) != "3")
                throw std::runtime_error("only NDims = 3 is supported: " + path);
        } else if (key == "DimSize") {
            h.dims = parse_triple<int>(value, key);
            have_dims = true;
        } else if (key == "ElementSpacing") {
            h.spacing = parse_triple<double>(value, key);
        } else if (key == "Offset" || key == "Origin" || key == "Position") {
            h.origin = parse_triple<double>(value, key);
        } else if (key == "ElementType") {
            if (value == "MET_FLOAT")
                h.type = ElementType::Float32;
            else if (value == "MET_UCHAR")
                h.type = ElementType::UInt8;
            else
                throw std::runtime_error("unsupported ElementType " + value + " in " + path);
            have_type = true;
        } else if (key == "ElementDataFile") {
            if (value == "LOCAL" || value.find('%') != std::string::npos)
                throw std::runtime_error("only a single separate raw file is supported: " + path);
            h.data_file = value;
            have_file = true;
        } else if (key == "ElementByteOrderMSB" || key == "BinaryDataByteOrderMSB") {
            if (value == "True" || value == "true" || value == "1")
                throw std::runtime_error("big-endian raw data is not supported: " + path);
        } else if (key == "ObjectType" || key == "BinaryData" ||
                   key == "CompressedData" || key == "TransformMatrix" ||
                   key == "CenterOfRotation" || key == "AnatomicalOrientation") {
            // accepted, not used
        } else {
            std::cerr << "warning: ignoring unknown MetaImage key '" << key << "' in "
                      << path << "\n";
        }
    }
    if (!have_dims) throw std::runtime_error("header missing DimSize: " + path);
    if (!have_type) throw std::runtime_error("header missing ElementType: " + path);
    if (!have_file) throw std::runtime_error("header missing ElementDataFile: " + path);
    return h;
}

}  // namespace

VoxelGrid load_volume(const std::string& path) {
    MhdHeader h = parse_mhd(path);

    VoxelGrid grid;
    grid.dims = h.dims;
    grid.spacing = h.spacing;
    grid.origin = h.origin;
    const std::size_t n = static_cast<std::size_t>(h.dims[0]) * h.dims[1] * h.dims[2];

    fs::path raw_path = fs::path(path).parent_path() / h.data_file;
    std::ifstream raw(raw_path, std::ios::binary);
    if (!raw) throw std::runtime_error("cannot open raw file: " + raw_path.string());

    grid.data.resize(n);
    if (h.type == ElementType::Float32) {
        raw.read(reinterpret_cast<char*>(grid.data.data()),
                 static_cast<std::streamsize>(n * sizeof(float)));
    } else {
        std::vector<uint8_t> bytes(n);
        raw.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(n));
        for (std::size_t v = 0; v < n; ++v) grid.data[v] = static_cast<float>(bytes[v]);
    }
    if (!raw)
        throw std::runtime_error("raw file too short: " + raw_path.string());
    grid.validate();
    return grid;
}

LabelMap load_labels(const std::string& path) {
    LabelMap labels;
    labels.grid = load_volume(path);
    for (float v : labels.grid.data) {
        if (v != 0.0f && v != 1.0f && v != 2.0f)
            throw std::runtime_error("invalid label code " + std::to_string(v) +
                                     " in " + path);
    }
    if (!lumen_enclosed_by_wall(labels))
        throw std::runtime_error("label map invalid: lumen not enclosed by wall in " + path);
    return labels;
}

void save_volume(const VoxelGrid& grid, const std::string& path, ElementType type) {
    grid.validate();
    fs::path header_path(path);
    if (!header_path.parent_path().empty() && !fs::exists(header_path.parent_path()))
        throw std::runtime_error("directory does not exist: " +
                                 header_path.parent_path().string());
    fs::path raw_name = header_path.filename().replace_extension(".raw");
    fs::path raw_path = header_path.parent_path() / raw_name;

    std::ofstream out(header_path);
    if (!out) throw std::runtime_error("cannot write header: " + path);
    out << "ObjectType = Image\n";
    out << "NDims = 3\n";
    out << "BinaryData = True\n";
    out << "BinaryDataByteOrderMSB = False\n";
    out << "DimSize = " << grid.dims[0] << " " << grid.dims[1] << " " << grid.dims[2] << "\n";
    out.precision(17);
    out << "ElementSpacing = " << grid.spacing[0] << " " << grid.spacing[1] << " "
        << grid.spacing[2] << "\n";
    out << "Offset = " << grid.origin[0] << " " << grid.origin[1] << " "
        << grid.origin[2] << "\n";
    out << "ElementType = " << (type == ElementType::Float32 ? "MET_FLOAT" : "MET_UCHAR")
        << "\n";
    out << "ElementDataFile = " << raw_name.string() << "\n";
    if (!out) throw std::runtime_error("failed writing header: " + path);

    std::ofstream raw(raw_path, std::ios::binary);
    if (!raw) throw std::runtime_error("cannot write raw file: " + raw_path.string());
    if (type == ElementType::Float32) {
        raw.write(reinterpret_cast<const char*>(grid.data.data()),
                  static_cast<std::streamsize>(grid.data.size() * sizeof(float)));
    } else {
        std::vector<uint8_t> bytes(grid.data.size());
        for (std::size_t v = 0; v < grid.data.size(); ++v) {
            float x = grid.data[v];
            if (x < 0.0f || x > 255.0f || x != std::floor(x))
                throw std::runtime_error("value not representable as MET_UCHAR");
            bytes[v] = static_cast<uint8_t>(x);
        }
        raw.write(reinterpret_cast<const char*>(bytes.data()),
                  static_cast<std::streamsize>(bytes.size()));
    }
    if (!raw) throw std::runtime_error("failed writing raw file: " + raw_path.string());
}

void save_labels(const LabelMap& labels, const std::string& path) {
    save_volume(labels.grid, path, ElementType::UInt8);
}

bool lumen_enclosed_by_wall(const LabelMap& labels) {
    const VoxelGrid& g = labels.grid;
    const int nx = g.dims[0], ny = g.dims[1], nz = g.dims[2];
    std::vector<uint8_t> visited(g.size(), 0);
    std::deque<std::array<int, 3>> queue;

    auto push_if_open = [&](int i, int j, int k) {
        std::size_t idx = g.index(i, j, k);
        if (visited[idx]) return true;
        uint8_t code = static_cast<uint8_t>(g.data[idx]);
        if (code == kLabelWall) return true;  // wall blocks the fill
        if (code == kLabelLumen) return false;
        visited[idx] = 1;
        queue.push_back({i, j, k});
        return true;
    };

    for (int k = 0; k < nz; ++k)
        for (int j = 0; j < ny; ++j)
            for (int i = 0; i < nx; ++i) {
                if (i != 0 && i != nx - 1 && j != 0 && j != ny - 1 && k != 0 && k != nz - 1)
                    continue;
                if (!push_if_open(i, j, k)) return false;
            }

    const int di[6] = {1, -1, 0, 0, 0, 0};
    const int dj[6] = {0, 0, 1, -1, 0, 0};
    const int dk[6] = {0, 0, 0, 0, 1, -1};
    while (!queue.empty()) {
        auto [i, j, k] = queue.front();
        queue.pop_front();
        for (int d = 0; d < 6; ++d) {
            int ni = i + di[d], nj = j + dj[d], nk = k + dk[d];
            if (ni < 0 || ni >= nx || nj < 0 || nj >= ny || nk < 0 || nk >= nz) continue;
            if (!push_if_open(ni, nj, nk)) return false;
        }
    }
    return true;
}

// ---------------------------------------------------------------------------
// Sampling
// ---------------------------------------------------------------------------

namespace {

struct AxisSample {
    int i0, i1;
    double frac;     // in [0,1]
    double dfrac;    // d(frac)/d(mm); 0 where clamped
};

inline AxisSample axis_sample(double x_mm, double origin, double spacing, int n) {
    double c = (x_mm - origin) / spacing;
    AxisSample s;
    if (c <= 0.0) {
        s = {0, 0, 0.0, 0.0};
    } else if (c >= n - 1) {
        s = {n - 1, n - 1, 0.0, 0.0};
    } else {
        int i0 = static_cast<int>(c);
        s = {i0, i0 + 1, c - i0, 1.0 / spacing};
    }
    return s;
}

}  // namespace

double sample_trilinear(const VoxelGrid& grid, const std::array<double, 3>& p) {
    return sample_trilinear_grad(grid, p).value;
}

SampleGrad sample_trilinear_grad(const VoxelGrid& grid, const std::array<double, 3>& p) {
    AxisSample sx = axis_sample(p[0], grid.origin[0], grid.spacing[0], grid.dims[0]);
    AxisSample sy = axis_sample(p[1], grid.origin[1], grid.spacing[1], grid.dims[1]);
    AxisSample sz = axis_sample(p[2], grid.origin[2], grid.spacing[2], grid.dims[2]);

    double c[2][2][2];
    for (int a = 0; a < 2; ++a)
        for (int b = 0; b < 2; ++b)
            for (int d = 0; d < 2; ++d)
                c[a][b][d] = grid.at(a ? sx.i1 : sx.i0, b ? sy.i1 : sy.i0,
                                     d ? sz.i1 : sz.i0);

    const double fx = sx.frac, fy = sy.frac, fz = sz.frac;
    // collapse z, then y, keeping partials
    double cz[2][2], dz[2][2];
    for (int a = 0; a < 2; ++a)
        for (int b = 0; b < 2; ++b) {
            cz[a][b] = c[a][b][0] * (1 - fz) + c[a][b][1] * fz;
            dz[a][b] = c[a][b][1] - c[a][b][0];
        }
    double cy[2], dy_[2], dzy[2];
    for (int a = 0; a < 2; ++a) {
        cy[a] = cz[a][0] * (1 - fy) + cz[a][1] * fy;
        dy_[a] = cz[a][1] - cz[a][0];
        dzy[a] = dz[a][0] * (1 - fy) + dz[a][1] * fy;
    }
    SampleGrad out;
    out.value = cy[0] * (1 - fx) + cy[1] * fx;
    out.grad[0] = (cy[1] - cy[0]) * sx.dfrac;
    out.grad[1] = (dy_[0] * (1 - fx) + dy_[1] * fx) * sy.dfrac;
    out.grad[2] = (dzy[0] * (1 - fx) + dzy[1] * fx) * sz.dfrac;
    return out;
}

// ---------------------------------------------------------------------------
// Filtering
// ---------------------------------------------------------------------------

namespace {

std::vector<double> gaussian_kernel(double sigma) {
    int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
    std::vector<double> k(2 * radius + 1);
    double sum = 0.0;
    for (int t = -radius; t <= radius; ++t) {
        double w = std::exp(-0.5 * (t * t) / (sigma * sigma));
        k[t + radius] = w;
        sum += w;
    }
    for (double& w : k) w /= sum;
    return k;
}

void convolve_axis(const VoxelGrid& in, VoxelGrid& out, int axis,
                   const std::vector<double>& kernel) {
    const int radius = (static_cast<int>(kernel.size()) - 1) / 2;
    const int nx = in.dims[0], ny = in.dims[1], nz = in.dims[2];
    const int n_axis = in.dims[axis];
    for (int k = 0; k < nz; ++k)
        for (int j = 0; j < ny; ++j)
            for (int i = 0; i < nx; ++i) {
                int idx3[3] = {i, j, k};
                double acc = 0.0;
                for (int t = -radius; t <= radius; ++t) {
                    int q = std::clamp(idx3[axis] + t, 0, n_axis - 1);
                    int s[3] = {i, j, k};
                    s[axis] = q;
                    acc += kernel[t + radius] * in.at(s[0], s[1], s[2]);
                }
                out.at(i, j, k) = static_cast<float>(acc);
            }
}

}  // namespace

VoxelGrid gaussian_smooth_voxels(const VoxelGrid& grid, double sigma_voxels) {
    if (sigma_voxels <= 0.0) return grid;
    auto kernel = gaussian_kernel(sigma_voxels);
    VoxelGrid a = grid, b = grid;
    convolve_axis(a, b, 0, kernel);
    convolve_axis(b, a, 1, kernel);
    convolve_axis(a, b, 2, kernel);
    return b;
}

VoxelGrid downsample_by_two(const VoxelGrid& grid) {
    VoxelGrid smooth = gaussian_smooth_voxels(grid, 1.0);
    VoxelGrid out;
    for (int a = 0; a < 3; ++a) {
        out.dims[a] = (grid.dims[a] + 1) / 2;
        out.spacing[a] = grid.spacing[a] * 2.0;
        out.origin[a] = grid.origin[a];
    }
    out.data.resize(static_cast<std::size_t>(out.dims[0]) * out.dims[1] * out.dims[2]);
    for (int k = 0; k < out.dims[2]; ++k)
        for (int j = 0; j < out.dims[1]; ++j)
            for (int i = 0; i < out.dims[0]; ++i)
                out.at(i, j, k) = smooth.at(std::min(2 * i, grid.dims[0] - 1),
                                            std::min(2 * j, grid.dims[1] - 1),
                                            std::min(2 * k, grid.dims[2] - 1));
    return out;
}

}  // namespace rsii
