#include "voxgan/voxel.hpp"

#include <algorithm>
#include <array>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

namespace voxgan {

namespace {

[[noreturn]] void fail(const std::string& why) { throw std::runtime_error("binvox: " + why); }

void check_threshold(float t) {
    if (!(t > 0.0f && t < 1.0f))
        throw std::invalid_argument("threshold must lie in (0,1), got " + std::to_string(t));
}

}  // namespace

VoxelGrid VoxelGrid::empty(std::int64_t resolution) {
    if (resolution < 1) throw std::invalid_argument("VoxelGrid: resolution must be positive");
    VoxelGrid g;
    g.resolution = resolution;
    g.values.assign(static_cast<std::size_t>(resolution * resolution * resolution), 0.0f);
    return g;
}

void VoxelGrid::validate() const {
    if (resolution < 1) throw std::invalid_argument("VoxelGrid: resolution must be positive");
    if (static_cast<std::int64_t>(values.size()) != numel())
        throw std::invalid_argument("VoxelGrid: value count does not match resolution^3");
    for (float v : values)
        if (!(v >= 0.0f && v <= 1.0f))
            throw std::invalid_argument("VoxelGrid: values must lie in [0,1]");
}

VoxelGrid binarize(const VoxelGrid& g, float threshold) {
    check_threshold(threshold);
    VoxelGrid out = g;
    for (float& v : out.values) v = v > threshold ? 1.0f : 0.0f;
    return out;
}

std::int64_t occupied_count(const VoxelGrid& g, float threshold) {
    check_threshold(threshold);
    std::int64_t n = 0;
    for (float v : g.values) n += v > threshold ? 1 : 0;
    return n;
}

double voxel_iou(const VoxelGrid& a, const VoxelGrid& b, float threshold) {
    check_threshold(threshold);
    if (a.resolution != b.resolution)
        throw std::invalid_argument("voxel_iou: resolutions differ (" +
                                    std::to_string(a.resolution) + " vs " +
                                    std::to_string(b.resolution) + ")");
    std::int64_t inter = 0, uni = 0;
    for (std::size_t i = 0; i < a.values.size(); ++i) {
        bool oa = a.values[i] > threshold;
        bool ob = b.values[i] > threshold;
        inter += (oa && ob) ? 1 : 0;
        uni += (oa || ob) ? 1 : 0;
    }
    return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

std::vector<std::uint8_t> binvox_write(const VoxelGrid& g, float threshold) {
    check_threshold(threshold);
    g.validate();
    std::int64_t r = g.resolution;
    std::string header = "#binvox 1\ndim " + std::to_string(r) + " " + std::to_string(r) + " " +
                         std::to_string(r) + "\ntranslate " + g.translate + "\nscale " + g.scale +
                         "\ndata\n";
    std::vector<std::uint8_t> out(header.begin(), header.end());

    std::uint8_t run_value = 0;
    int run_length = 0;
    auto flush = [&] {
        if (run_length > 0) {
            out.push_back(run_value);
            out.push_back(static_cast<std::uint8_t>(run_length));
            run_length = 0;
        }
    };
    for (std::int64_t x = 0; x < r; ++x)
        for (std::int64_t z = 0; z < r; ++z)
            for (std::int64_t y = 0; y < r; ++y) {
                std::uint8_t v = g.at(x, y, z) > threshold ? 1 : 0;
                if (run_length > 0 && v == run_value && run_length < 255) {
                    ++run_length;
                } else {
                    flush();
                    run_value = v;
                    run_length = 1;
                }
            }
    flush();
    return out;
}

VoxelGrid binvox_read(const std::vector<std::uint8_t>& bytes) {
    std::size_t pos = 0;
    auto next_line = [&]() -> std::string {
        std::size_t start = pos;
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
        if (pos >= bytes.size()) fail("truncated header");
        std::string line(bytes.begin() + static_cast<std::ptrdiff_t>(start),
                         bytes.begin() + static_cast<std::ptrdiff_t>(pos));
        ++pos;  // consume newline
        return line;
    };

    if (next_line() != "#binvox 1") fail("bad magic (expected '#binvox 1')");

    std::int64_t r = -1;
    std::string translate = "0 0 0";
    std::string scale = "1";
    for (;;) {
        std::string line = next_line();
        if (line == "data") break;
        if (line.rfind("dim ", 0) == 0) {
            std::istringstream iss(line.substr(4));
            std::int64_t a = -1, b = -1, c = -1;
            if (!(iss >> a >> b >> c)) fail("unparseable dim line");
            if (a < 1 || a != b || b != c) fail("dim must be three equal positive extents");
            r = a;
        } else if (line.rfind("translate ", 0) == 0) {
            translate = line.substr(10);
        } else if (line.rfind("scale ", 0) == 0) {
            scale = line.substr(6);
        } else {
            fail("unrecognized header line '" + line + "'");
        }
    }
    if (r < 0) fail("header has no dim line");

    VoxelGrid g = VoxelGrid::empty(r);
    g.translate = translate;
    g.scale = scale;
    std::int64_t total = g.numel();
    std::int64_t filled = 0;
    while (pos < bytes.size()) {
        if (pos + 1 >= bytes.size()) fail("truncated run-length pair");
        std::uint8_t value = bytes[pos];
        std::uint8_t count = bytes[pos + 1];
        pos += 2;
        if (value > 1) fail("voxel value byte must be 0 or 1");
        if (count == 0) fail("zero run length");
        if (filled + count > total)
            fail("payload covers " + std::to_string(filled + count) + " voxels, dim promises " +
                 std::to_string(total));
        if (value == 1) {
            for (int i = 0; i < count; ++i) {
                std::int64_t b = filled + i;
                std::int64_t x = b / (r * r);
                std::int64_t rem = b % (r * r);
                std::int64_t z = rem / r;
                std::int64_t y = rem % r;
                g.at(x, y, z) = 1.0f;
            }
        }
        filled += count;
    }
    if (filled != total)
        fail("payload covers " + std::to_string(filled) + " voxels, dim promises " +
             std::to_string(total));
    return g;
}

void binvox_save(const VoxelGrid& g, const std::string& path, float threshold) {
    std::vector<std::uint8_t> bytes = binvox_write(g, threshold);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) fail("cannot open '" + path + "' for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) fail("write failed for '" + path + "'");
}

VoxelGrid binvox_load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail("cannot open '" + path + "'");
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
    return binvox_read(bytes);
}

VoxelGrid resample(const VoxelGrid& g, std::int64_t target_resolution) {
    if (target_resolution < 2)
        throw std::invalid_argument("resample: target resolution must be >= 2");
    g.validate();
    std::int64_t r = g.resolution, t = target_resolution;
    if (t == r) return g;
    VoxelGrid out = VoxelGrid::empty(t);
    out.translate = g.translate;
    out.scale = g.scale;
    // Output cell i spans [i*r/t, (i+1)*r/t) in source coordinates; take the
    // max over every source cell that range overlaps.
    auto lo = [&](std::int64_t i) { return (i * r) / t; };
    auto hi = [&](std::int64_t i) { return ((i + 1) * r - 1) / t; };
    for (std::int64_t x = 0; x < t; ++x)
        for (std::int64_t y = 0; y < t; ++y)
            for (std::int64_t z = 0; z < t; ++z) {
                float m = 0.0f;
                for (std::int64_t sx = lo(x); sx <= hi(x); ++sx)
                    for (std::int64_t sy = lo(y); sy <= hi(y); ++sy)
                        for (std::int64_t sz = lo(z); sz <= hi(z); ++sz)
                            m = std::max(m, g.at(sx, sy, sz));
                out.at(x, y, z) = m;
            }
    return out;
}

VoxelGrid pad_center(const VoxelGrid& g, std::int64_t target_resolution) {
    g.validate();
    if (target_resolution < g.resolution)
        throw std::invalid_argument("pad_center: target must be >= source resolution");
    if (target_resolution == g.resolution) return g;
    VoxelGrid out = VoxelGrid::empty(target_resolution);
    out.translate = g.translate;
    out.scale = g.scale;
    std::int64_t off = (target_resolution - g.resolution) / 2;
    for (std::int64_t x = 0; x < g.resolution; ++x)
        for (std::int64_t y = 0; y < g.resolution; ++y)
            for (std::int64_t z = 0; z < g.resolution; ++z)
                out.at(x + off, y + off, z + off) = g.at(x, y, z);
    return out;
}

VoxelGrid largest_connected_component(const VoxelGrid& g, float threshold) {
    check_threshold(threshold);
    g.validate();
    std::int64_t r = g.resolution;
    std::int64_t n = g.numel();
    std::vector<std::int32_t> comp(static_cast<std::size_t>(n), -1);
    std::vector<std::int64_t> stack;
    std::int64_t best_size = 0;
    std::int32_t best_id = -1;
    std::int32_t next_id = 0;

    for (std::int64_t seed = 0; seed < n; ++seed) {
        if (comp[static_cast<std::size_t>(seed)] != -1 || !(g.values[static_cast<std::size_t>(seed)] > threshold))
            continue;
        std::int32_t id = next_id++;
        std::int64_t size = 0;
        comp[static_cast<std::size_t>(seed)] = id;
        stack.push_back(seed);
        while (!stack.empty()) {
            std::int64_t cur = stack.back();
            stack.pop_back();
            ++size;
            std::int64_t x = cur / (r * r);
            std::int64_t y = (cur / r) % r;
            std::int64_t z = cur % r;
            const std::int64_t nbr[6][3] = {{x - 1, y, z}, {x + 1, y, z}, {x, y - 1, z},
                                            {x, y + 1, z}, {x, y, z - 1}, {x, y, z + 1}};
            for (const auto& nb : nbr) {
                if (nb[0] < 0 || nb[0] >= r || nb[1] < 0 || nb[1] >= r || nb[2] < 0 || nb[2] >= r)
                    continue;
                std::int64_t idx = g.index(nb[0], nb[1], nb[2]);
                if (comp[static_cast<std::size_t>(idx)] == -1 &&
                    g.values[static_cast<std::size_t>(idx)] > threshold) {
                    comp[static_cast<std::size_t>(idx)] = id;
                    stack.push_back(idx);
                }
            }
        }
        // Components are discovered in order of their smallest linear index,
        // so a strict comparison keeps the earliest one on ties.
        if (size > best_size) {
            best_size = size;
            best_id = id;
        }
    }

    VoxelGrid out = VoxelGrid::empty(r);
    out.translate = g.translate;
    out.scale = g.scale;
    if (best_id >= 0)
        for (std::int64_t i = 0; i < n; ++i)
            if (comp[static_cast<std::size_t>(i)] == best_id)
                out.values[static_cast<std::size_t>(i)] = 1.0f;
    return out;
}

std::string export_obj(const VoxelGrid& g, float threshold) {
    check_threshold(threshold);
    g.validate();
    std::int64_t r = g.resolution;
    std::int64_t c = r + 1;  // corner lattice extent
    std::vector<std::int64_t> vert_id(static_cast<std::size_t>(c * c * c), -1);
    std::int64_t n_verts = 0;

    auto occupied = [&](std::int64_t x, std::int64_t y, std::int64_t z) {
        if (x < 0 || x >= r || y < 0 || y >= r || z < 0 || z >= r) return false;
        return g.at(x, y, z) > threshold;
    };

    std::ostringstream verts, faces;
    auto corner = [&](std::int64_t x, std::int64_t y, std::int64_t z) -> std::int64_t {
        std::int64_t key = (x * c + y) * c + z;
        std::int64_t& id = vert_id[static_cast<std::size_t>(key)];
        if (id == -1) {
            id = ++n_verts;  // OBJ vertex indices are 1-based
            verts << "v " << x << " " << y << " " << z << "\n";
        }
        return id;
    };
    std::int64_t n_faces = 0;
    auto quad = [&](std::array<std::array<std::int64_t, 3>, 4> q) {
        std::int64_t a = corner(q[0][0], q[0][1], q[0][2]);
        std::int64_t b = corner(q[1][0], q[1][1], q[1][2]);
        std::int64_t cc = corner(q[2][0], q[2][1], q[2][2]);
        std::int64_t d = corner(q[3][0], q[3][1], q[3][2]);
        faces << "f " << a << " " << b << " " << cc << "\n";
        faces << "f " << a << " " << cc << " " << d << "\n";
        n_faces += 2;
    };

    for (std::int64_t x = 0; x < r; ++x)
        for (std::int64_t y = 0; y < r; ++y)
            for (std::int64_t z = 0; z < r; ++z) {
                if (!occupied(x, y, z)) continue;
                if (!occupied(x - 1, y, z))
                    quad({{{x, y, z}, {x, y, z + 1}, {x, y + 1, z + 1}, {x, y + 1, z}}});
                if (!occupied(x + 1, y, z))
                    quad({{{x + 1, y, z}, {x + 1, y + 1, z}, {x + 1, y + 1, z + 1}, {x + 1, y, z + 1}}});
                if (!occupied(x, y - 1, z))
                    quad({{{x, y, z}, {x + 1, y, z}, {x + 1, y, z + 1}, {x, y, z + 1}}});
                if (!occupied(x, y + 1, z))
                    quad({{{x, y + 1, z}, {x, y + 1, z + 1}, {x + 1, y + 1, z + 1}, {x + 1, y + 1, z}}});
                if (!occupied(x, y, z - 1))
                    quad({{{x, y, z}, {x, y + 1, z}, {x + 1, y + 1, z}, {x + 1, y, z}}});
                if (!occupied(x, y, z + 1))
                    quad({{{x, y, z + 1}, {x + 1, y, z + 1}, {x + 1, y + 1, z + 1}, {x, y + 1, z + 1}}});
            }

    std::ostringstream out;
    out << "# voxel surface mesh: " << n_verts << " vertices, " << n_faces << " triangles\n";
    out << verts.str() << faces.str();
    return out.str();
}

}  // namespace voxgan
