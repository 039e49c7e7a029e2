#include "voxgan/synthetic.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "json.hpp"

namespace voxgan {

namespace {

[[noreturn]] void fail(const std::string& why) {
    throw std::runtime_error("synthetic dataset: " + why);
}

std::int64_t class_index(const std::string& name) {
    for (std::size_t i = 0; i < kSyntheticClasses.size(); ++i)
        if (name == kSyntheticClasses[i]) return static_cast<std::int64_t>(i);
    fail("unknown class '" + name + "'");
}

// Inclusive uniform draw used by all shape parameters.
std::int64_t draw(RngStream& rng, std::int64_t lo, std::int64_t hi) {
    if (lo > hi) fail("internal: empty parameter range");
    return rng.uniform_int(lo, hi);
}

void fill_box(VoxelGrid& g, std::int64_t x0, std::int64_t y0, std::int64_t z0, std::int64_t ex,
              std::int64_t ey, std::int64_t ez) {
    for (std::int64_t x = x0; x < x0 + ex; ++x)
        for (std::int64_t y = y0; y < y0 + ey; ++y)
            for (std::int64_t z = z0; z < z0 + ez; ++z) g.at(x, y, z) = 1.0f;
}

// All shapes are confined to the open interior [1, r-1) so a one-voxel empty
// margin always survives position jitter.
VoxelGrid make_shape(std::int64_t label, const SyntheticSpec& sp, std::int64_t r,
                     RngStream& rng) {
    VoxelGrid g = VoxelGrid::empty(r);
    std::int64_t span = r - 2;  // usable interior extent
    auto place = [&](std::int64_t extent) {  // uniform origin with margin kept
        return 1 + draw(rng, 0, span - extent);
    };

    const std::string name = kSyntheticClasses[static_cast<std::size_t>(label)];
    if (name == "box") {
        std::int64_t ex = draw(rng, sp.min_extent, sp.max_extent);
        std::int64_t ey = draw(rng, sp.min_extent, sp.max_extent);
        std::int64_t ez = draw(rng, sp.min_extent, sp.max_extent);
        fill_box(g, place(ex), place(ey), place(ez), ex, ey, ez);
    } else if (name == "table") {
        std::int64_t fx = draw(rng, sp.min_extent, sp.max_extent);
        std::int64_t fz = draw(rng, sp.min_extent, sp.max_extent);
        std::int64_t hy = draw(rng, sp.min_extent, sp.max_extent);
        std::int64_t tt = std::min(draw(rng, sp.min_slab, sp.max_slab), hy - 1);
        std::int64_t lw = std::min(draw(rng, sp.min_leg, sp.max_leg),
                                   (std::min(fx, fz) - 1) / 2);
        lw = std::max<std::int64_t>(lw, 1);
        std::int64_t x0 = place(fx), y0 = place(hy), z0 = place(fz);
        std::int64_t leg_h = hy - tt;
        fill_box(g, x0, y0, z0, lw, leg_h, lw);
        fill_box(g, x0 + fx - lw, y0, z0, lw, leg_h, lw);
        fill_box(g, x0, y0, z0 + fz - lw, lw, leg_h, lw);
        fill_box(g, x0 + fx - lw, y0, z0 + fz - lw, lw, leg_h, lw);
        fill_box(g, x0, y0 + leg_h, z0, fx, tt, fz);
    } else if (name == "chair") {
        std::int64_t fx = draw(rng, sp.min_extent, sp.max_extent);
        std::int64_t fz = draw(rng, sp.min_extent, sp.max_extent);
        std::int64_t st = std::min(draw(rng, sp.min_slab, sp.max_slab), fx - 1);
        std::int64_t lw = std::min(draw(rng, sp.min_leg, sp.max_leg),
                                   (std::min(fx, fz) - 1) / 2);
        lw = std::max<std::int64_t>(lw, 1);
        // Legs + seat + back split the available height roughly in thirds.
        std::int64_t hy = draw(rng, sp.min_extent, sp.max_extent);
        std::int64_t lh = std::max<std::int64_t>(1, (hy - st) / 2);
        std::int64_t bh = std::max<std::int64_t>(1, hy - st - lh);
        std::int64_t bt = std::min<std::int64_t>(st, fx);
        std::int64_t x0 = place(fx), z0 = place(fz);
        std::int64_t y0 = 1 + draw(rng, 0, span - (lh + st + bh));
        fill_box(g, x0, y0, z0, lw, lh, lw);
        fill_box(g, x0 + fx - lw, y0, z0, lw, lh, lw);
        fill_box(g, x0, y0, z0 + fz - lw, lw, lh, lw);
        fill_box(g, x0 + fx - lw, y0, z0 + fz - lw, lw, lh, lw);
        fill_box(g, x0, y0 + lh, z0, fx, st, fz);
        fill_box(g, x0, y0 + lh + st, z0, bt, bh, fz);
    } else if (name == "cross") {
        // Three orthogonal bars sharing one w^3 hub that every bar contains.
        std::int64_t w = draw(rng, sp.min_arm, sp.max_arm);
        std::int64_t lx = std::max(w, draw(rng, sp.min_extent, sp.max_extent));
        std::int64_t ly = std::max(w, draw(rng, sp.min_extent, sp.max_extent));
        std::int64_t lz = std::max(w, draw(rng, sp.min_extent, sp.max_extent));
        std::int64_t bx0 = place(lx), hx = bx0 + draw(rng, 0, lx - w);
        std::int64_t by0 = place(ly), hy = by0 + draw(rng, 0, ly - w);
        std::int64_t bz0 = place(lz), hz = bz0 + draw(rng, 0, lz - w);
        fill_box(g, bx0, hy, hz, lx, w, w);
        fill_box(g, hx, by0, hz, w, ly, w);
        fill_box(g, hx, hy, bz0, w, w, lz);
    } else {  // sphere
        std::int64_t rad = draw(rng, sp.min_radius, sp.max_radius);
        std::int64_t cx = 1 + rad + draw(rng, 0, span - 2 * rad - 1);
        std::int64_t cy = 1 + rad + draw(rng, 0, span - 2 * rad - 1);
        std::int64_t cz = 1 + rad + draw(rng, 0, span - 2 * rad - 1);
        for (std::int64_t x = cx - rad; x <= cx + rad; ++x)
            for (std::int64_t y = cy - rad; y <= cy + rad; ++y)
                for (std::int64_t z = cz - rad; z <= cz + rad; ++z) {
                    std::int64_t d2 = (x - cx) * (x - cx) + (y - cy) * (y - cy) +
                                      (z - cz) * (z - cz);
                    if (d2 <= rad * rad) g.at(x, y, z) = 1.0f;
                }
    }
    return g;
}

}  // namespace

SyntheticSpec SyntheticSpec::defaults(std::int64_t resolution, std::uint64_t seed) {
    if (resolution < 8) fail("resolution must be >= 8 for the default shape ranges");
    SyntheticSpec sp;
    sp.seed = seed;
    sp.min_extent = std::max<std::int64_t>(3, resolution / 4);
    sp.max_extent = std::max(sp.min_extent, (3 * resolution) / 4);
    sp.min_leg = 1;
    sp.max_leg = std::max<std::int64_t>(1, resolution / 8);
    sp.min_slab = 1;
    sp.max_slab = std::max<std::int64_t>(1, resolution / 8);
    sp.min_arm = 1;
    sp.max_arm = std::max<std::int64_t>(1, resolution / 6);
    sp.min_radius = 2;
    sp.max_radius = std::max<std::int64_t>(2, resolution / 2 - 2);
    return sp;
}

void SyntheticSpec::validate(std::int64_t resolution) const {
    std::int64_t span = resolution - 2;
    if (span < 1) fail("resolution leaves no interior after the margin");
    auto range_ok = [](std::int64_t lo, std::int64_t hi) { return 1 <= lo && lo <= hi; };
    if (!range_ok(min_extent, max_extent) || !range_ok(min_leg, max_leg) ||
        !range_ok(min_slab, max_slab) || !range_ok(min_arm, max_arm) ||
        !range_ok(min_radius, max_radius))
        fail("parameter ranges must satisfy 1 <= min <= max");
    if (max_extent > span || max_arm > span)
        fail("extent range exceeds the grid interior");
    if (2 * max_radius + 1 > span) fail("sphere radius range exceeds the grid interior");
    if (min_extent < 3) fail("extents below 3 voxels degenerate the table/chair shapes");
    if (max_slab >= min_extent)
        fail("slab thickness range must stay below the minimum extent");
    if (max_leg > span || max_slab > span)
        fail("leg/slab ranges exceed the grid interior");
    if (kind != "all") class_index(kind);  // throws on unknown names
}

std::vector<float> project_orthographic(const VoxelGrid& g, std::int64_t image_size) {
    std::int64_t r = g.resolution;
    std::int64_t s = image_size;
    if (s < r || s % r != 0)
        fail("image size must be a positive multiple of the grid resolution");
    std::vector<float> img(static_cast<std::size_t>(3 * s * s), 0.0f);
    auto pixel = [&](std::int64_t c, std::int64_t i, std::int64_t j) -> float& {
        return img[static_cast<std::size_t>((c * s + i) * s + j)];
    };
    for (std::int64_t i = 0; i < s; ++i) {
        std::int64_t a = i * r / s;
        for (std::int64_t j = 0; j < s; ++j) {
            std::int64_t b = j * r / s;
            float m0 = 0.0f, m1 = 0.0f, m2 = 0.0f;
            for (std::int64_t k = 0; k < r; ++k) {
                m0 = std::max(m0, g.at(a, b, k));
                m1 = std::max(m1, g.at(a, k, b));
                m2 = std::max(m2, g.at(k, a, b));
            }
            pixel(0, i, j) = m0;
            pixel(1, i, j) = m1;
            pixel(2, i, j) = m2;
        }
    }
    return img;
}

SyntheticDataset make_synthetic_dataset(const SyntheticSpec& spec, std::int64_t n,
                                        std::int64_t resolution) {
    if (n < 1) fail("need at least one item");
    spec.validate(resolution);
    SyntheticDataset ds;
    ds.resolution = resolution;
    ds.image_size = 4 * resolution;
    ds.seed = spec.seed;
    for (const char* c : kSyntheticClasses) ds.class_names.emplace_back(c);

    for (std::int64_t i = 0; i < n; ++i) {
        RngStream rng = RngStream::substream(spec.seed, static_cast<std::uint64_t>(i));
        std::int64_t label = spec.kind == "all"
                                 ? i % static_cast<std::int64_t>(kSyntheticClasses.size())
                                 : class_index(spec.kind);
        SyntheticItem item;
        item.label = label;
        item.class_name = kSyntheticClasses[static_cast<std::size_t>(label)];
        item.grid = make_shape(label, spec, resolution, rng);
        item.image = project_orthographic(item.grid, ds.image_size);
        ds.items.push_back(std::move(item));
    }
    return ds;
}

void ppm_save(const std::vector<float>& image, std::int64_t size, const std::string& path) {
    if (static_cast<std::int64_t>(image.size()) != 3 * size * size)
        fail("image buffer does not match 3 channels of size^2");
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) fail("cannot open '" + path + "' for writing");
    out << "P6\n" << size << " " << size << "\n255\n";
    std::vector<std::uint8_t> row(static_cast<std::size_t>(3 * size));
    for (std::int64_t i = 0; i < size; ++i) {
        for (std::int64_t j = 0; j < size; ++j)
            for (std::int64_t c = 0; c < 3; ++c) {
                float v = image[static_cast<std::size_t>((c * size + i) * size + j)];
                v = std::min(1.0f, std::max(0.0f, v));
                row[static_cast<std::size_t>(3 * j + c)] =
                    static_cast<std::uint8_t>(v * 255.0f + 0.5f);
            }
        out.write(reinterpret_cast<const char*>(row.data()),
                  static_cast<std::streamsize>(row.size()));
    }
    if (!out) fail("write failed for '" + path + "'");
}

std::vector<float> ppm_load(const std::string& path, std::int64_t& size) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail("cannot open '" + path + "'");
    std::string magic;
    std::int64_t w = 0, h = 0, maxval = 0;
    in >> magic >> w >> h >> maxval;
    if (magic != "P6" || maxval != 255 || w != h || w < 1)
        fail("'" + path + "' is not a square 8-bit P6 image");
    in.get();  // single whitespace byte after the header
    size = w;
    std::vector<std::uint8_t> raw(static_cast<std::size_t>(3 * w * h));
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (in.gcount() != static_cast<std::streamsize>(raw.size()))
        fail("'" + path + "' payload is truncated");
    std::vector<float> img(raw.size());
    for (std::int64_t i = 0; i < h; ++i)
        for (std::int64_t j = 0; j < w; ++j)
            for (std::int64_t c = 0; c < 3; ++c)
                img[static_cast<std::size_t>((c * w + i) * w + j)] =
                    static_cast<float>(raw[static_cast<std::size_t>((i * w + j) * 3 + c)]) /
                    255.0f;
    return img;
}

void save_dataset(const SyntheticDataset& ds, const std::string& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    nlohmann::json manifest;
    manifest["resolution"] = ds.resolution;
    manifest["image_size"] = ds.image_size;
    manifest["seed"] = ds.seed;
    manifest["classes"] = ds.class_names;
    nlohmann::json items = nlohmann::json::array();
    char name[64];
    for (std::size_t i = 0; i < ds.items.size(); ++i) {
        const SyntheticItem& item = ds.items[i];
        std::snprintf(name, sizeof(name), "item_%05zu", i);
        std::string grid_file = std::string(name) + ".binvox";
        std::string image_file = std::string(name) + ".ppm";
        binvox_save(item.grid, dir + "/" + grid_file);
        ppm_save(item.image, ds.image_size, dir + "/" + image_file);
        items.push_back({{"label", item.label},
                         {"class", item.class_name},
                         {"grid", grid_file},
                         {"image", image_file}});
    }
    manifest["items"] = std::move(items);
    std::ofstream out(dir + "/manifest.json", std::ios::binary | std::ios::trunc);
    if (!out) fail("cannot write manifest in '" + dir + "'");
    out << manifest.dump(2) << "\n";
}

SyntheticDataset load_dataset(const std::string& dir) {
    std::ifstream in(dir + "/manifest.json");
    if (!in) fail("no manifest.json in '" + dir + "'");
    nlohmann::json manifest;
    try {
        in >> manifest;
    } catch (const nlohmann::json::exception& e) {
        fail(std::string("manifest.json is not valid JSON: ") + e.what());
    }
    SyntheticDataset ds;
    try {
        ds.resolution = manifest.at("resolution").get<std::int64_t>();
        ds.image_size = manifest.at("image_size").get<std::int64_t>();
        ds.seed = manifest.at("seed").get<std::uint64_t>();
        ds.class_names = manifest.at("classes").get<std::vector<std::string>>();
        for (const nlohmann::json& e : manifest.at("items")) {
            SyntheticItem item;
            item.label = e.at("label").get<std::int64_t>();
            item.class_name = e.at("class").get<std::string>();
            item.grid = binvox_load(dir + "/" + e.at("grid").get<std::string>());
            if (item.grid.resolution != ds.resolution)
                fail("item grid resolution disagrees with the manifest");
            std::int64_t isize = 0;
            item.image = ppm_load(dir + "/" + e.at("image").get<std::string>(), isize);
            if (isize != ds.image_size) fail("item image size disagrees with the manifest");
            ds.items.push_back(std::move(item));
        }
    } catch (const nlohmann::json::exception& e) {
        fail(std::string("manifest.json is missing fields: ") + e.what());
    }
    return ds;
}

}  // namespace voxgan
