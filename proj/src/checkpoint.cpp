#include "voxgan/checkpoint.hpp"

#include <stdexcept>
#include <utility>
#include <vector>

namespace voxgan {

namespace {

std::vector<Tensor<float>> param_list(std::vector<std::pair<std::string, Tensor<float>>> named) {
    std::vector<Tensor<float>> out;
    out.reserve(named.size());
    for (auto& [name, p] : named) out.push_back(p);
    return out;
}

template <typename Net>
void write_net(Archive& ar, const std::string& prefix, Net& net) {
    for (auto& [name, p] : net.named_parameters())
        ar.add(prefix + "." + name, p.shape(), p.values());
    for (auto& [name, b] : net.named_buffers())
        ar.add(prefix + "." + name, b.shape(), b.values());
}

template <typename Net>
void read_net(const Archive& ar, const std::string& prefix, Net& net) {
    auto restore = [&](const std::string& name, Tensor<float>& t) {
        const ArchiveArray& a = ar.at(prefix + "." + name);
        if (a.shape != t.shape())
            throw std::runtime_error("checkpoint: array '" + prefix + "." + name + "' has shape " +
                                     shape_str(a.shape) + ", model expects " +
                                     shape_str(t.shape()));
        t.values() = a.values;
    };
    for (auto& [name, p] : net.named_parameters()) restore(name, p);
    for (auto& [name, b] : net.named_buffers()) restore(name, b);
}

void write_adam(Archive& ar, const std::string& prefix, Adam<float>& opt,
                const std::vector<std::pair<std::string, Tensor<float>>>& named) {
    for (std::size_t i = 0; i < named.size(); ++i) {
        const std::string& pname = named[i].first;
        Shape shape = named[i].second.shape();
        ar.add(prefix + "." + pname + ".m", shape, opt.moment1(i));
        ar.add(prefix + "." + pname + ".v", shape, opt.moment2(i));
    }
}

void read_adam(const Archive& ar, const std::string& prefix, Adam<float>& opt,
               const std::vector<std::pair<std::string, Tensor<float>>>& named) {
    for (std::size_t i = 0; i < named.size(); ++i) {
        const std::string& pname = named[i].first;
        opt.moment1(i) = ar.at(prefix + "." + pname + ".m").values;
        opt.moment2(i) = ar.at(prefix + "." + pname + ".v").values;
    }
}

void check_adam_meta(const nlohmann::json& j, const Adam<float>& opt, const std::string& which) {
    if (j.at("beta1").get<double>() != opt.beta1() || j.at("beta2").get<double>() != opt.beta2() ||
        j.at("eps").get<double>() != opt.eps())
        throw std::runtime_error("checkpoint: optimizer '" + which +
                                 "' records unsupported hyperparameters");
}

nlohmann::json adam_meta(const Adam<float>& opt) {
    return {{"lr", opt.lr()},
            {"beta1", opt.beta1()},
            {"beta2", opt.beta2()},
            {"eps", opt.eps()},
            {"t", opt.step_count()}};
}

}  // namespace

TrainState TrainState::fresh(const std::string& kind, const ScaleProfile& profile,
                             PriorKind prior, RngStream& init_rng, double lr_g, double lr_d,
                             double lr_e) {
    if (kind != "gan" && kind != "vaegan")
        throw std::invalid_argument("TrainState: kind must be gan or vaegan, got '" + kind + "'");
    Generator<float> g(profile, init_rng);
    Discriminator<float> d(profile, init_rng);
    std::optional<ImageEncoder<float>> e;
    std::optional<Adam<float>> opt_e;
    if (kind == "vaegan") {
        e.emplace(profile, init_rng);
        opt_e.emplace(param_list(e->named_parameters()), lr_e);
    }
    Adam<float> opt_g(param_list(g.named_parameters()), lr_g);
    Adam<float> opt_d(param_list(d.named_parameters()), lr_d);
    return TrainState{kind,         profile,          prior,
                      std::move(g), std::move(d),     std::move(e),
                      std::move(opt_g), std::move(opt_d), std::move(opt_e)};
}

void save_checkpoint(TrainState& state, const std::string& path) {
    Archive ar;
    nlohmann::json& meta = ar.meta();
    meta["kind"] = state.kind;
    meta["prior"] = prior_name(state.prior);
    meta["profile"] = {{"name", state.profile.name},
                       {"resolution", state.profile.resolution},
                       {"base_channels", state.profile.base_channels},
                       {"latent_dim", state.profile.latent_dim}};
    meta["adam"]["g"] = adam_meta(state.opt_g);
    meta["adam"]["d"] = adam_meta(state.opt_d);
    if (state.opt_e) meta["adam"]["e"] = adam_meta(*state.opt_e);

    write_net(ar, "g", state.g);
    write_net(ar, "d", state.d);
    if (state.e) write_net(ar, "e", *state.e);
    write_adam(ar, "adam.g", state.opt_g, state.g.named_parameters());
    write_adam(ar, "adam.d", state.opt_d, state.d.named_parameters());
    if (state.opt_e) write_adam(ar, "adam.e", *state.opt_e, state.e->named_parameters());
    ar.save(path);
}

TrainState load_checkpoint(const std::string& path) {
    Archive ar = Archive::load(path);
    const nlohmann::json& meta = ar.meta();
    if (!meta.contains("kind") || !meta.contains("profile") || !meta.contains("prior") ||
        !meta.contains("adam"))
        throw std::runtime_error("checkpoint: metadata block is incomplete");

    std::string kind = meta["kind"].get<std::string>();
    const nlohmann::json& pj = meta["profile"];
    ScaleProfile profile{pj.at("name").get<std::string>(),
                         pj.at("resolution").get<std::int64_t>(),
                         pj.at("base_channels").get<std::int64_t>(),
                         pj.at("latent_dim").get<std::int64_t>()};
    profile.validate();
    PriorKind prior = prior_from_name(meta["prior"].get<std::string>());

    double lr_e = meta["adam"].contains("e") ? meta["adam"]["e"].at("lr").get<double>() : 0.0;
    RngStream scratch(0);
    TrainState state = TrainState::fresh(kind, profile, prior, scratch,
                                         meta["adam"]["g"].at("lr").get<double>(),
                                         meta["adam"]["d"].at("lr").get<double>(), lr_e);

    read_net(ar, "g", state.g);
    read_net(ar, "d", state.d);
    if (state.e) read_net(ar, "e", *state.e);
    read_adam(ar, "adam.g", state.opt_g, state.g.named_parameters());
    read_adam(ar, "adam.d", state.opt_d, state.d.named_parameters());
    if (state.opt_e) read_adam(ar, "adam.e", *state.opt_e, state.e->named_parameters());
    check_adam_meta(meta["adam"]["g"], state.opt_g, "g");
    check_adam_meta(meta["adam"]["d"], state.opt_d, "d");
    if (state.opt_e) check_adam_meta(meta["adam"]["e"], *state.opt_e, "e");
    state.opt_g.set_step_count(meta["adam"]["g"].at("t").get<std::int64_t>());
    state.opt_d.set_step_count(meta["adam"]["d"].at("t").get<std::int64_t>());
    if (state.opt_e) state.opt_e->set_step_count(meta["adam"]["e"].at("t").get<std::int64_t>());
    return state;
}

}  // namespace voxgan
