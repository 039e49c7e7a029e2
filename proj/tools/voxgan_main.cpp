#include <cmath>
#include <cstdint>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "voxgan/analysis.hpp"
#include "voxgan/artifacts.hpp"
#include "voxgan/checkpoint.hpp"
#include "voxgan/evaluation.hpp"
#include "voxgan/features.hpp"
#include "voxgan/models.hpp"
#include "voxgan/synthetic.hpp"
#include "voxgan/training.hpp"
#include "voxgan/voxel.hpp"

namespace {

namespace fs = std::filesystem;
using nlohmann::json;
using namespace voxgan;

// One bag of flags for all subcommands; each command registers the subset it
// understands and echoes the resolved values to <out>/config.json.
struct RunConfig {
    std::string profile = "tiny";
    std::uint64_t seed = 0;
    std::int64_t epochs = 1;
    std::int64_t batch_size = 0;  // 0: profile default (100, tiny runs at 32)
    double lr_g = 0.0025;
    double lr_d = 1e-5;
    double alpha1 = 5.0;
    double alpha2 = 1e-4;
    double gate = 0.80;
    std::string out;
    std::string data;
    std::string checkpoint;
    std::string config;
    bool clean = true;
    double threshold = 0.5;

    std::string mode;  // train: gan | vaegan
    std::int64_t n = 1;
    std::int64_t n_data = 100;
    std::string kind = "all";
    std::int64_t steps = 10;
    std::int64_t sweep_steps = 5;
    std::int64_t dim = 0;
    std::string values_str;
    std::vector<double> values;
    std::string a, b, c;
    std::string test_data;
    double svm_c = 1.0;
    bool balanced = true;
    std::string layer = "last-1";
    std::int64_t top = 5;
    bool oracle = false;
};

json load_json_file(const std::string& path, const char* what) {
    if (!fs::exists(path))
        throw std::invalid_argument(std::string(what) + " file does not exist: " + path);
    try {
        return json::parse(read_text_file(path));
    } catch (const json::exception& e) {
        throw std::invalid_argument(std::string(what) + " file '" + path + "': " + e.what());
    }
}

// Fills a field from the config echo when the flag exists on this command and
// the user did not pass it explicitly.
template <typename T>
void take(const CLI::App* cmd, const json& j, const std::string& flag, const char* key,
          T& field) {
    const CLI::Option* opt = cmd->get_option_no_throw(flag);
    if (opt == nullptr || opt->count() > 0) return;
    if (!j.contains(key)) return;
    try {
        field = j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw std::invalid_argument(std::string("config key '") + key + "': " + e.what());
    }
}

void apply_config(const CLI::App* cmd, RunConfig& rc) {
    if (rc.config.empty()) return;
    json j = load_json_file(rc.config, "config");
    take(cmd, j, "mode", "mode", rc.mode);
    take(cmd, j, "--profile", "profile", rc.profile);
    take(cmd, j, "--seed", "seed", rc.seed);
    take(cmd, j, "--epochs", "epochs", rc.epochs);
    take(cmd, j, "--batch-size", "batch_size", rc.batch_size);
    take(cmd, j, "--lr-g", "lr_g", rc.lr_g);
    take(cmd, j, "--lr-d", "lr_d", rc.lr_d);
    take(cmd, j, "--alpha1", "alpha1", rc.alpha1);
    take(cmd, j, "--alpha2", "alpha2", rc.alpha2);
    take(cmd, j, "--gate", "gate", rc.gate);
    take(cmd, j, "--out", "out", rc.out);
    take(cmd, j, "--data", "data", rc.data);
    take(cmd, j, "--checkpoint", "checkpoint", rc.checkpoint);
    take(cmd, j, "--clean", "clean", rc.clean);
    take(cmd, j, "--threshold", "threshold", rc.threshold);
    if (cmd->get_name() == "make-data")
        take(cmd, j, "--n", "n", rc.n_data);
    else
        take(cmd, j, "--n", "n", rc.n);
    take(cmd, j, "--kind", "kind", rc.kind);
    if (cmd->get_name() == "sweep") {
        take(cmd, j, "--steps", "steps", rc.sweep_steps);
        take(cmd, j, "--values", "values", rc.values);
    } else {
        take(cmd, j, "--steps", "steps", rc.steps);
    }
    take(cmd, j, "--dim", "dim", rc.dim);
    take(cmd, j, "--a", "a", rc.a);
    take(cmd, j, "--b", "b", rc.b);
    take(cmd, j, "--c", "c", rc.c);
    take(cmd, j, "--test-data", "test_data", rc.test_data);
    take(cmd, j, "--svm-c", "svm_c", rc.svm_c);
    take(cmd, j, "--balanced", "balanced", rc.balanced);
    take(cmd, j, "--layer", "layer", rc.layer);
    take(cmd, j, "--top", "top", rc.top);
    take(cmd, j, "--oracle", "oracle", rc.oracle);
}

const std::string& require_flag(const std::string& v, const char* flag) {
    if (v.empty())
        throw std::invalid_argument(std::string(flag) + " is required");
    return v;
}

ScaleProfile resolve_profile(const std::string& name) {
    if (name == "full" || name == "tiny") return ScaleProfile::from_name(name);
    if (!fs::exists(name))
        throw std::invalid_argument("unknown profile '" + name +
                                    "' (expected full, tiny, or a profile file)");
    json j = load_json_file(name, "profile");
    ScaleProfile p;
    try {
        p.name = j.at("name").get<std::string>();
        p.resolution = j.at("resolution").get<std::int64_t>();
        p.base_channels = j.at("base_channels").get<std::int64_t>();
        p.latent_dim = j.value("latent_dim", std::int64_t{200});
    } catch (const json::exception& e) {
        throw std::invalid_argument("profile file '" + name + "': " + e.what());
    }
    p.validate();
    return p;
}

SyntheticDataset load_data_dir(const std::string& dir) {
    if (!fs::exists(dir + "/manifest.json"))
        throw std::invalid_argument("dataset manifest does not exist: " + dir +
                                    "/manifest.json");
    return load_dataset(dir);
}

TrainState load_state(const std::string& path) {
    if (!fs::exists(path))
        throw std::invalid_argument("checkpoint does not exist: " + path);
    return load_checkpoint(path);
}

void write_echo(const RunConfig& rc, json echo, const std::string& subcommand) {
    echo["subcommand"] = subcommand;
    fs::create_directories(rc.out);
    write_text_file(echo.dump(2) + "\n", rc.out + "/config.json");
}

std::vector<float> draw_latent(RngStream& rng, PriorKind prior, std::int64_t dim) {
    Tensor<float> z = sample_latent<float>(rng, prior, 1, dim);
    return z.values();
}

std::vector<float> read_latent(const std::string& path, std::int64_t dim) {
    if (!fs::exists(path))
        throw std::invalid_argument("latent vector file does not exist: " + path);
    std::vector<float> z = read_raw_f32(path);
    if (static_cast<std::int64_t>(z.size()) != dim)
        throw std::invalid_argument("latent vector '" + path + "' holds " +
                                    std::to_string(z.size()) + " values, expected " +
                                    std::to_string(dim));
    return z;
}

VoxelGrid generate(Generator<float>& g, const std::vector<float>& z) {
    NoGradGuard guard;
    bool was = g.training();
    g.set_training(false);
    Tensor<float> zt = Tensor<float>::from_vector(
        {1, static_cast<std::int64_t>(z.size())}, std::vector<float>(z));
    VoxelGrid out = grid_from_batch(g.forward(zt), 0);
    g.set_training(was);
    for (float v : out.values)
        if (!std::isfinite(v)) throw NumericError("generator produced a non-finite voxel");
    return out;
}

VoxelGrid postprocess(const VoxelGrid& g, const RunConfig& rc) {
    float t = static_cast<float>(rc.threshold);
    return rc.clean ? largest_connected_component(g, t) : binarize(g, t);
}

void write_grid(const VoxelGrid& g, const std::string& base) {
    write_raw_f32(g.values, base + ".f32");
    write_text_file(export_obj(g, 0.5f), base + ".obj");
}

std::string numbered(const std::string& stem, std::int64_t i) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "_%03lld", static_cast<long long>(i));
    return stem + buf;
}

json common_generation_echo(const RunConfig& rc) {
    json e;
    e["checkpoint"] = rc.checkpoint;
    e["out"] = rc.out;
    e["clean"] = rc.clean;
    e["threshold"] = rc.threshold;
    return e;
}

// ---------------------------------------------------------------------------

void cmd_make_data(const CLI::App* cmd, RunConfig& rc) {
    apply_config(cmd, rc);
    require_flag(rc.out, "--out");
    if (rc.n_data < 1) throw std::invalid_argument("--n must be >= 1");
    if (rc.kind != "all") {
        bool known = false;
        for (const char* name : kSyntheticClasses) known = known || rc.kind == name;
        if (!known)
            throw std::invalid_argument("--kind: unknown class '" + rc.kind +
                                        "' (expected a class name or 'all')");
    }
    ScaleProfile p = resolve_profile(rc.profile);

    SyntheticSpec spec = SyntheticSpec::defaults(p.resolution, rc.seed);
    spec.kind = rc.kind;
    SyntheticDataset ds = make_synthetic_dataset(spec, rc.n_data, p.resolution);

    json echo;
    echo["profile"] = rc.profile;
    echo["seed"] = rc.seed;
    echo["kind"] = rc.kind;
    echo["n"] = rc.n_data;
    echo["out"] = rc.out;
    write_echo(rc, echo, "make-data");
    save_dataset(ds, rc.out);
    std::printf("wrote %lld shapes (%s) at resolution %lld to %s\n",
                static_cast<long long>(rc.n_data), rc.kind.c_str(),
                static_cast<long long>(p.resolution), rc.out.c_str());
}

void cmd_train(const CLI::App* cmd, RunConfig& rc) {
    apply_config(cmd, rc);
    if (rc.mode != "gan" && rc.mode != "vaegan")
        throw std::invalid_argument("train: mode must be 'gan' or 'vaegan'");
    require_flag(rc.data, "--data");
    require_flag(rc.out, "--out");
    ScaleProfile p = resolve_profile(rc.profile);
    SyntheticDataset ds = load_data_dir(rc.data);
    if (ds.resolution != p.resolution)
        throw std::invalid_argument(
            "dataset resolution " + std::to_string(ds.resolution) +
            " does not match profile resolution " + std::to_string(p.resolution));

    std::int64_t batch = rc.batch_size > 0 ? rc.batch_size : (p.name == "tiny" ? 32 : 100);

    json echo;
    echo["mode"] = rc.mode;
    echo["profile"] = rc.profile;
    echo["seed"] = rc.seed;
    echo["epochs"] = rc.epochs;
    echo["batch_size"] = batch;
    echo["lr_g"] = rc.lr_g;
    echo["lr_d"] = rc.lr_d;
    echo["gate"] = rc.gate;
    echo["data"] = rc.data;
    echo["out"] = rc.out;

    auto finish = [&](const TrainResult& res) {
        std::printf(
            "trained %s for %lld epochs (%zu batches); checkpoint at %s/checkpoint.bin\n",
            rc.mode.c_str(), static_cast<long long>(rc.epochs), res.log.records.size(),
            rc.out.c_str());
    };
    if (rc.mode == "gan") {
        GanTrainConfig cfg;
        cfg.lr_g = rc.lr_g;
        cfg.lr_d = rc.lr_d;
        cfg.batch_size = batch;
        cfg.d_accuracy_gate = rc.gate;
        cfg.seed = rc.seed;
        cfg.epochs = rc.epochs;
        cfg.validate();
        write_echo(rc, echo, "train");
        finish(train_gan(ds, p, cfg, rc.out));
    } else {
        VaeGanTrainConfig cfg;
        cfg.lr_g = rc.lr_g;
        cfg.lr_d = rc.lr_d;
        cfg.batch_size = batch;
        cfg.d_accuracy_gate = rc.gate;
        cfg.seed = rc.seed;
        cfg.epochs = rc.epochs;
        cfg.alpha1 = rc.alpha1;
        cfg.alpha2 = rc.alpha2;
        cfg.validate();
        echo["alpha1"] = rc.alpha1;
        echo["alpha2"] = rc.alpha2;
        write_echo(rc, echo, "train");
        finish(train_vaegan(ds, p, cfg, rc.out));
    }
}

void cmd_sample(const CLI::App* cmd, RunConfig& rc) {
    apply_config(cmd, rc);
    require_flag(rc.checkpoint, "--checkpoint");
    require_flag(rc.out, "--out");
    if (rc.n < 1) throw std::invalid_argument("--n must be >= 1");
    TrainState st = load_state(rc.checkpoint);

    json echo = common_generation_echo(rc);
    echo["seed"] = rc.seed;
    echo["n"] = rc.n;
    write_echo(rc, echo, "sample");

    RngStream rng(rc.seed);
    for (std::int64_t i = 0; i < rc.n; ++i) {
        std::vector<float> z = draw_latent(rng, st.prior, st.profile.latent_dim);
        VoxelGrid grid = postprocess(generate(st.g, z), rc);
        std::string base = rc.out + "/" + numbered("sample", i);
        write_grid(grid, base);
        write_raw_f32(z, base + ".z.f32");
    }
    std::printf("wrote %lld objects to %s\n", static_cast<long long>(rc.n), rc.out.c_str());
}

void cmd_interpolate(const CLI::App* cmd, RunConfig& rc) {
    apply_config(cmd, rc);
    require_flag(rc.checkpoint, "--checkpoint");
    require_flag(rc.out, "--out");
    if (rc.a.empty() != rc.b.empty())
        throw std::invalid_argument("interpolate: pass both --a and --b, or neither");
    TrainState st = load_state(rc.checkpoint);

    std::vector<float> z1, z2;
    if (!rc.a.empty()) {
        z1 = read_latent(rc.a, st.profile.latent_dim);
        z2 = read_latent(rc.b, st.profile.latent_dim);
    } else {
        RngStream rng(rc.seed);
        z1 = draw_latent(rng, st.prior, st.profile.latent_dim);
        z2 = draw_latent(rng, st.prior, st.profile.latent_dim);
    }

    json echo = common_generation_echo(rc);
    echo["seed"] = rc.seed;
    echo["steps"] = rc.steps;
    echo["a"] = rc.a;
    echo["b"] = rc.b;
    write_echo(rc, echo, "interpolate");

    std::vector<VoxelGrid> walk = interpolate(st.g, z1, z2, rc.steps);
    for (std::size_t i = 0; i < walk.size(); ++i)
        write_grid(postprocess(walk[i], rc),
                   rc.out + "/" + numbered("step", static_cast<std::int64_t>(i)));
    write_raw_f32(z1, rc.out + "/z1.f32");
    write_raw_f32(z2, rc.out + "/z2.f32");
    std::printf("wrote %zu interpolation steps to %s\n", walk.size(), rc.out.c_str());
}

void cmd_arith(const CLI::App* cmd, RunConfig& rc) {
    apply_config(cmd, rc);
    require_flag(rc.checkpoint, "--checkpoint");
    require_flag(rc.out, "--out");
    require_flag(rc.a, "--a");
    require_flag(rc.b, "--b");
    require_flag(rc.c, "--c");
    TrainState st = load_state(rc.checkpoint);

    std::vector<float> za = read_latent(rc.a, st.profile.latent_dim);
    std::vector<float> zb = read_latent(rc.b, st.profile.latent_dim);
    std::vector<float> zc = read_latent(rc.c, st.profile.latent_dim);

    json echo = common_generation_echo(rc);
    echo["a"] = rc.a;
    echo["b"] = rc.b;
    echo["c"] = rc.c;
    write_echo(rc, echo, "arith");

    std::vector<float> z = arithmetic_latent(za, zb, zc, st.prior);
    VoxelGrid grid = postprocess(shape_arithmetic(st.g, za, zb, zc, st.prior), rc);
    write_grid(grid, rc.out + "/arith");
    write_raw_f32(z, rc.out + "/arith.z.f32");
    std::printf("wrote a - b + c object to %s\n", rc.out.c_str());
}

std::vector<double> parse_value_list(const std::string& s) {
    std::vector<double> out;
    std::size_t pos = 0;
    while (pos <= s.size()) {
        std::size_t comma = s.find(',', pos);
        std::string tok = s.substr(pos, comma == std::string::npos ? comma : comma - pos);
        try {
            std::size_t used = 0;
            out.push_back(std::stod(tok, &used));
            if (used != tok.size()) throw std::invalid_argument(tok);
        } catch (const std::exception&) {
            throw std::invalid_argument("--values: cannot parse '" + tok + "' as a number");
        }
        if (comma == std::string::npos) break;
        pos = comma + 1;
    }
    return out;
}

void cmd_sweep(const CLI::App* cmd, RunConfig& rc) {
    apply_config(cmd, rc);
    require_flag(rc.checkpoint, "--checkpoint");
    require_flag(rc.out, "--out");
    TrainState st = load_state(rc.checkpoint);

    if (!rc.values_str.empty()) rc.values = parse_value_list(rc.values_str);
    // An explicit --steps requests a fresh spacing, beating an echoed list.
    if (rc.values_str.empty() && cmd->get_option("--steps")->count() > 0) rc.values.clear();
    if (rc.values.empty()) {
        if (rc.sweep_steps < 2) throw std::invalid_argument("--steps must be >= 2");
        double lo = st.prior == PriorKind::uniform01 ? 0.0 : -2.0;
        double hi = st.prior == PriorKind::uniform01 ? 1.0 : 2.0;
        for (std::int64_t i = 0; i < rc.sweep_steps; ++i)
            rc.values.push_back(lo + (hi - lo) * static_cast<double>(i) /
                                         static_cast<double>(rc.sweep_steps - 1));
    }

    json echo = common_generation_echo(rc);
    echo["seed"] = rc.seed;
    echo["dim"] = rc.dim;
    echo["steps"] = rc.sweep_steps;
    echo["values"] = rc.values;
    write_echo(rc, echo, "sweep");

    RngStream rng(rc.seed);
    std::vector<float> z0 = draw_latent(rng, st.prior, st.profile.latent_dim);
    std::vector<float> vals(rc.values.begin(), rc.values.end());
    SweepResult res = sweep_dimension(st.g, z0, rc.dim, vals, st.prior,
                                      static_cast<float>(rc.threshold));
    for (std::size_t i = 0; i < res.grids.size(); ++i)
        write_grid(postprocess(res.grids[i], rc),
                   rc.out + "/" + numbered("sweep", static_cast<std::int64_t>(i)));
    write_grid(res.mask, rc.out + "/mask");
    write_raw_f32(z0, rc.out + "/z0.f32");
    std::printf("swept dimension %lld over %zu values; change mask covers %lld voxels\n",
                static_cast<long long>(rc.dim), res.values.size(),
                static_cast<long long>(occupied_count(res.mask, 0.5f)));
}

void cmd_classify(const CLI::App* cmd, RunConfig& rc) {
    apply_config(cmd, rc);
    require_flag(rc.checkpoint, "--checkpoint");
    require_flag(rc.data, "--data");
    require_flag(rc.out, "--out");
    TrainState st = load_state(rc.checkpoint);
    SyntheticDataset train = load_data_dir(rc.data);
    SyntheticDataset test = rc.test_data.empty() ? train : load_data_dir(rc.test_data);

    json echo;
    echo["checkpoint"] = rc.checkpoint;
    echo["data"] = rc.data;
    echo["test_data"] = rc.test_data;
    echo["svm_c"] = rc.svm_c;
    echo["balanced"] = rc.balanced;
    echo["out"] = rc.out;
    write_echo(rc, echo, "classify");

    auto grids_of = [](const SyntheticDataset& ds) {
        std::vector<VoxelGrid> g;
        g.reserve(ds.items.size());
        for (const SyntheticItem& it : ds.items) g.push_back(it.grid);
        return g;
    };
    auto labels_of = [](const SyntheticDataset& ds) {
        std::vector<int> l;
        l.reserve(ds.items.size());
        for (const SyntheticItem& it : ds.items) l.push_back(static_cast<int>(it.label));
        return l;
    };

    FeatureMatrix ftr = extract_feature_matrix(st.d, grids_of(train));
    SvmTrainReport report;
    LinearSvmModel model = svm_train(ftr, labels_of(train), rc.svm_c, rc.balanced, &report);
    save_svm(model, rc.out + "/svm.bin");

    FeatureMatrix fte = extract_feature_matrix(st.d, grids_of(test));
    std::vector<int> truth = labels_of(test);
    double overall = svm_accuracy(model, fte, truth);

    // Per-class accuracy over the classes the test set actually contains.
    std::vector<std::int64_t> correct(test.class_names.size(), 0);
    std::vector<std::int64_t> total(test.class_names.size(), 0);
    for (std::int64_t i = 0; i < fte.rows; ++i) {
        int label = truth[static_cast<std::size_t>(i)];
        if (label < 0 || label >= static_cast<int>(test.class_names.size()))
            throw std::invalid_argument("classify: dataset label outside its class table");
        ++total[static_cast<std::size_t>(label)];
        if (svm_predict(model, fte.row(i), fte.dim).label == label)
            ++correct[static_cast<std::size_t>(label)];
    }
    std::string table = "class,accuracy\n";
    for (std::size_t c = 0; c < test.class_names.size(); ++c) {
        if (total[c] == 0) continue;
        table += test.class_names[c] + "," +
                 format_g9(static_cast<double>(correct[c]) / static_cast<double>(total[c])) +
                 "\n";
    }
    table += "overall," + format_g9(overall) + "\n";
    write_text_file(table, rc.out + "/report.csv");
    std::printf("classification accuracy %s over %lld test shapes (solver %s)\n",
                format_g9(overall).c_str(), static_cast<long long>(fte.rows),
                report.converged ? "converged" : "hit the sweep cap");
}

void cmd_evaluate(const CLI::App* cmd, RunConfig& rc) {
    apply_config(cmd, rc);
    require_flag(rc.data, "--data");
    require_flag(rc.out, "--out");
    SyntheticDataset ds = load_data_dir(rc.data);

    json echo;
    echo["checkpoint"] = rc.checkpoint;
    echo["data"] = rc.data;
    echo["oracle"] = rc.oracle;
    echo["out"] = rc.out;
    write_echo(rc, echo, "evaluate");

    ApResult res;
    if (rc.oracle) {
        // Self-scoring sanity path: every prediction is its own ground truth.
        std::vector<std::string> present;
        std::vector<int> remap(ds.class_names.size(), -1);
        std::vector<VoxelGrid> grids;
        std::vector<int> labels;
        for (const SyntheticItem& it : ds.items) {
            if (it.label < 0 || it.label >= static_cast<std::int64_t>(ds.class_names.size()))
                throw std::invalid_argument("evaluate: dataset label outside its class table");
            std::size_t l = static_cast<std::size_t>(it.label);
            if (remap[l] < 0) {
                remap[l] = static_cast<int>(present.size());
                present.push_back(ds.class_names[l]);
            }
            labels.push_back(remap[l]);
            grids.push_back(it.grid);
        }
        res = evaluate_predictions(grids, grids, labels, present);
    } else {
        require_flag(rc.checkpoint, "--checkpoint");
        TrainState st = load_state(rc.checkpoint);
        if (!st.e.has_value())
            throw std::invalid_argument(
                "evaluate: checkpoint lacks an image encoder (needs 'train vaegan')");
        res = evaluate_reconstruction(*st.e, st.g, ds);
    }
    write_text_file(ap_table_csv(res), rc.out + "/ap_table.csv");
    write_text_file(ap_instances_csv(res), rc.out + "/ap_instances.csv");
    std::printf("mean AP %s over %zu classes (%zu instances)\n", format_g9(res.mean_ap).c_str(),
                res.class_names.size(), res.instance_ap.size());
}

std::int64_t parse_layer(const std::string& s, std::int64_t n_layers) {
    if (s == "last") return n_layers;
    if (s == "last-1") return n_layers - 1;
    try {
        std::size_t used = 0;
        std::int64_t v = std::stoll(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw std::invalid_argument("--layer: expected an index, 'last', or 'last-1'; got '" +
                                    s + "'");
    }
}

void cmd_visualize(const CLI::App* cmd, RunConfig& rc) {
    apply_config(cmd, rc);
    require_flag(rc.checkpoint, "--checkpoint");
    require_flag(rc.data, "--data");
    require_flag(rc.out, "--out");
    if (rc.top < 1) throw std::invalid_argument("--top must be >= 1");
    TrainState st = load_state(rc.checkpoint);
    SyntheticDataset ds = load_data_dir(rc.data);
    std::int64_t layer = parse_layer(rc.layer, st.profile.n_layers());

    json echo;
    echo["checkpoint"] = rc.checkpoint;
    echo["data"] = rc.data;
    echo["layer"] = rc.layer;
    echo["top"] = rc.top;
    echo["threshold"] = rc.threshold;
    echo["out"] = rc.out;
    write_echo(rc, echo, "visualize");

    std::vector<VoxelGrid> grids;
    grids.reserve(ds.items.size());
    for (const SyntheticItem& it : ds.items) grids.push_back(it.grid);

    std::vector<NeuronReport> reports = top_activating_objects(st.d, grids, layer, rc.top);
    json summary = json::array();
    for (const NeuronReport& r : reports) {
        json top_list = json::array();
        for (const NeuronActivation& a : r.top)
            top_list.push_back({{"object", a.object}, {"activation", a.activation}});
        summary.push_back({{"layer", r.layer}, {"channel", r.channel}, {"top", top_list}});
        for (std::size_t j = 0; j < r.top.size(); ++j) {
            char base[64];
            std::snprintf(base, sizeof(base), "layer%lld_channel%03lld_top%lld",
                          static_cast<long long>(r.layer), static_cast<long long>(r.channel),
                          static_cast<long long>(j));
            const VoxelGrid& object = grids[static_cast<std::size_t>(r.top[j].object)];
            save_scalar_overlay(object, r.saliency[j], static_cast<float>(rc.threshold),
                                rc.out + "/" + base);
        }
    }
    write_text_file(summary.dump(2) + "\n", rc.out + "/neuron_report.json");
    std::printf("wrote saliency bundles for %zu channels (top %lld each) to %s\n",
                reports.size(), static_cast<long long>(rc.top), rc.out.c_str());
}

// ---------------------------------------------------------------------------

void add_common_output_flags(CLI::App* cmd, RunConfig& rc) {
    cmd->add_flag("--clean,!--no-clean", rc.clean,
                  "keep only the largest connected component (default on)");
    cmd->add_option("--threshold", rc.threshold, "occupancy threshold");
}

}  // namespace

int main(int argc, char** argv) {
    RunConfig rc;
    CLI::App app{"volumetric shape GAN toolkit"};
    app.require_subcommand(1);

    auto with_config = [&](CLI::App* cmd) {
        cmd->add_option("--config", rc.config,
                        "config echo file; explicit flags override its values");
        return cmd;
    };

    CLI::App* mk = with_config(app.add_subcommand("make-data", "generate a procedural dataset"));
    mk->add_option("--profile", rc.profile, "full, tiny, or a profile file");
    mk->add_option("--seed", rc.seed, "rng seed");
    mk->add_option("--n", rc.n_data, "number of shapes");
    mk->add_option("--kind", rc.kind, "class name or 'all'");
    mk->add_option("--out", rc.out, "output directory");
    mk->callback([&] { cmd_make_data(mk, rc); });

    CLI::App* tr = with_config(app.add_subcommand("train", "train a model"));
    tr->add_option("mode", rc.mode, "gan | vaegan");
    tr->add_option("--profile", rc.profile, "full, tiny, or a profile file");
    tr->add_option("--seed", rc.seed, "rng seed");
    tr->add_option("--epochs", rc.epochs, "training epochs");
    tr->add_option("--batch-size", rc.batch_size, "batch size (0: profile default)");
    tr->add_option("--lr-g", rc.lr_g, "generator learning rate");
    tr->add_option("--lr-d", rc.lr_d, "discriminator learning rate (0 freezes D)");
    tr->add_option("--alpha1", rc.alpha1, "KL weight (vaegan)");
    tr->add_option("--alpha2", rc.alpha2, "reconstruction weight (vaegan)");
    tr->add_option("--gate", rc.gate, "discriminator accuracy gate");
    tr->add_option("--data", rc.data, "dataset directory");
    tr->add_option("--out", rc.out, "output directory");
    tr->callback([&] { cmd_train(tr, rc); });

    CLI::App* sa = with_config(app.add_subcommand("sample", "generate objects from the prior"));
    sa->add_option("--checkpoint", rc.checkpoint, "checkpoint file");
    sa->add_option("--n", rc.n, "number of objects");
    sa->add_option("--seed", rc.seed, "rng seed");
    sa->add_option("--out", rc.out, "output directory");
    add_common_output_flags(sa, rc);
    sa->callback([&] { cmd_sample(sa, rc); });

    CLI::App* in = with_config(app.add_subcommand("interpolate", "walk between two latents"));
    in->add_option("--checkpoint", rc.checkpoint, "checkpoint file");
    in->add_option("--steps", rc.steps, "number of grids, endpoints included");
    in->add_option("--seed", rc.seed, "rng seed for drawing endpoints");
    in->add_option("--a", rc.a, "first latent file (defaults to a seeded draw)");
    in->add_option("--b", rc.b, "second latent file");
    in->add_option("--out", rc.out, "output directory");
    add_common_output_flags(in, rc);
    in->callback([&] { cmd_interpolate(in, rc); });

    CLI::App* ar = with_config(app.add_subcommand("arith", "generate from a - b + c"));
    ar->add_option("--checkpoint", rc.checkpoint, "checkpoint file");
    ar->add_option("--a", rc.a, "latent file a");
    ar->add_option("--b", rc.b, "latent file b");
    ar->add_option("--c", rc.c, "latent file c");
    ar->add_option("--out", rc.out, "output directory");
    add_common_output_flags(ar, rc);
    ar->callback([&] { cmd_arith(ar, rc); });

    CLI::App* sw = with_config(app.add_subcommand("sweep", "vary one latent dimension"));
    sw->add_option("--checkpoint", rc.checkpoint, "checkpoint file");
    sw->add_option("--dim", rc.dim, "latent dimension to vary");
    sw->add_option("--values", rc.values_str, "comma-separated values to sweep");
    sw->add_option("--steps", rc.sweep_steps, "evenly spaced values when --values is absent");
    sw->add_option("--seed", rc.seed, "rng seed for the base latent");
    sw->add_option("--out", rc.out, "output directory");
    add_common_output_flags(sw, rc);
    sw->callback([&] { cmd_sweep(sw, rc); });

    CLI::App* cl = with_config(
        app.add_subcommand("classify", "train a linear SVM on discriminator features"));
    cl->add_option("--checkpoint", rc.checkpoint, "checkpoint providing the discriminator");
    cl->add_option("--data", rc.data, "training dataset directory");
    cl->add_option("--test-data", rc.test_data, "held-out dataset (defaults to --data)");
    cl->add_option("--svm-c", rc.svm_c, "SVM regularization strength");
    cl->add_flag("--balanced,!--no-balanced", rc.balanced, "class-frequency weighting");
    cl->add_option("--out", rc.out, "output directory");
    cl->callback([&] { cmd_classify(cl, rc); });

    CLI::App* ev = with_config(app.add_subcommand("evaluate", "aligned AP of reconstructions"));
    ev->add_option("--checkpoint", rc.checkpoint, "image-conditioned checkpoint");
    ev->add_option("--data", rc.data, "evaluation dataset directory");
    ev->add_flag("--oracle", rc.oracle, "score ground truth against itself (sanity path)");
    ev->add_option("--out", rc.out, "output directory");
    ev->callback([&] { cmd_evaluate(ev, rc); });

    CLI::App* vi = with_config(
        app.add_subcommand("visualize", "strongest objects and saliency per channel"));
    vi->add_option("--checkpoint", rc.checkpoint, "checkpoint providing the discriminator");
    vi->add_option("--data", rc.data, "dataset directory");
    vi->add_option("--layer", rc.layer, "layer index, 'last', or 'last-1'");
    vi->add_option("--top", rc.top, "objects per channel");
    vi->add_option("--threshold", rc.threshold, "overlay occupancy threshold");
    vi->add_option("--out", rc.out, "output directory");
    vi->callback([&] { cmd_visualize(vi, rc); });

    try {
        app.parse(argc, argv);
        return 0;
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    } catch (const voxgan::NumericError& e) {
        std::fprintf(stderr, "numeric failure: %s\n", e.what());
        return 4;
    } catch (const std::domain_error& e) {
        std::fprintf(stderr, "numeric failure: %s\n", e.what());
        return 4;
    } catch (const std::invalid_argument& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    }
}
