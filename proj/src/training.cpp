#include "voxgan/training.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <numeric>
#include <utility>

#include "voxgan/artifacts.hpp"

namespace voxgan {

namespace {

double now_seconds() {
    return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

void check_finite(const char* what, double v) {
    if (!std::isfinite(v))
        throw NumericError(std::string("training: ") + what + " became non-finite");
}

std::string checkpoint_path(const std::string& out_dir, std::int64_t batch) {
    char name[64];
    if (batch < 0) {
        std::snprintf(name, sizeof(name), "checkpoint.bin");
    } else {
        std::snprintf(name, sizeof(name), "checkpoint_batch_%06lld.bin",
                      static_cast<long long>(batch));
    }
    return out_dir + "/" + name;
}

}  // namespace

std::string TrainLog::to_csv() const {
    std::string out =
        "epoch,batch,d_loss,d_accuracy,d_updated,g_adv_loss,g_loss,kl,recon,recon_weighted\n";
    for (const TrainRecord& r : records) {
        out += std::to_string(r.epoch) + "," + std::to_string(r.batch) + "," +
               format_g9(r.d_loss) + "," + format_g9(r.d_accuracy) + "," +
               (r.d_updated ? "1" : "0") + "," + format_g9(r.g_adv_loss) + "," +
               format_g9(r.g_loss) + "," + format_g9(r.kl) + "," + format_g9(r.recon) + "," +
               format_g9(r.recon_weighted) + "\n";
    }
    return out;
}

void shuffle_indices(std::vector<std::int64_t>& idx, RngStream& rng) {
    for (std::int64_t i = static_cast<std::int64_t>(idx.size()) - 1; i >= 1; --i) {
        std::int64_t j = rng.uniform_int(0, i);
        std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
    }
}

Tensor<float> batch_shapes(const SyntheticDataset& ds, const std::vector<std::int64_t>& idx) {
    std::int64_t r = ds.resolution;
    std::int64_t n = static_cast<std::int64_t>(idx.size());
    std::vector<float> v;
    v.reserve(static_cast<std::size_t>(n * r * r * r));
    for (std::int64_t i : idx) {
        const VoxelGrid& g = ds.items[static_cast<std::size_t>(i)].grid;
        v.insert(v.end(), g.values.begin(), g.values.end());
    }
    return Tensor<float>::from_vector({n, 1, r, r, r}, std::move(v));
}

Tensor<float> batch_images(const SyntheticDataset& ds, const std::vector<std::int64_t>& idx) {
    std::int64_t s = ds.image_size;
    std::int64_t n = static_cast<std::int64_t>(idx.size());
    std::vector<float> v;
    v.reserve(static_cast<std::size_t>(n * 3 * s * s));
    for (std::int64_t i : idx) {
        const std::vector<float>& img = ds.items[static_cast<std::size_t>(i)].image;
        v.insert(v.end(), img.begin(), img.end());
    }
    return Tensor<float>::from_vector({n, 3, s, s}, std::move(v));
}

GanStepResult gan_train_step(Generator<float>& g, Discriminator<float>& d, Adam<float>& opt_g,
                             Adam<float>& opt_d, const Tensor<float>& real, PriorKind prior,
                             const GanTrainConfig& cfg, double prev_d_accuracy,
                             RngStream& z_rng) {
    cfg.validate();
    if (real.shape().empty() || real.shape()[0] < 1)
        throw std::invalid_argument("gan_train_step: empty batch");
    std::int64_t batch = real.shape()[0];

    GanStepResult res;
    auto z = sample_latent<float>(z_rng, prior, batch, g.profile().latent_dim);

    // Discriminator view: fakes are constants, so the backward pass stops at
    // the generator boundary.
    auto fake_const = g.forward(z).detach();
    auto score_real = d.forward(real).score;
    auto score_fake = d.forward(fake_const).score;
    if (!all_finite(score_real) || !all_finite(score_fake))
        throw NumericError("training: discriminator scores became non-finite");
    auto loss_d = d_loss(score_real, score_fake);
    res.d_loss = static_cast<double>(loss_d.item());
    res.d_accuracy = d_accuracy(score_real, score_fake);
    check_finite("discriminator loss", res.d_loss);

    res.d_updated = prev_d_accuracy <= cfg.d_accuracy_gate;
    if (res.d_updated) {
        opt_d.zero_grad();
        loss_d.backward();
        opt_d.step();
    }

    // Generator update on freshly scored fakes against the (possibly just
    // updated) discriminator.
    auto score_fresh = d.forward(g.forward(z)).score;
    if (!all_finite(score_fresh))
        throw NumericError("training: generator-path scores became non-finite");
    auto loss_g = g_loss_nonsat(score_fresh);
    res.g_adv_loss = static_cast<double>(loss_g.item());
    check_finite("generator loss", res.g_adv_loss);
    opt_g.zero_grad();
    loss_g.backward();
    opt_g.step();
    return res;
}

VaeGanStepResult vaegan_train_step(ImageEncoder<float>& e, Generator<float>& g,
                                   Discriminator<float>& d, Adam<float>& opt_e,
                                   Adam<float>& opt_g, Adam<float>& opt_d,
                                   const Tensor<float>& images, const Tensor<float>& shapes,
                                   const VaeGanTrainConfig& cfg, double prev_d_accuracy,
                                   RngStream& z_rng, RngStream& eps_rng) {
    cfg.validate();
    if (images.shape().empty() || images.shape()[0] < 1)
        throw std::invalid_argument("vaegan_train_step: empty batch");
    if (images.shape()[0] != shapes.shape()[0])
        throw std::invalid_argument("vaegan_train_step: image/shape count mismatch (" +
                                    std::to_string(images.shape()[0]) + " vs " +
                                    std::to_string(shapes.shape()[0]) + ")");
    std::int64_t batch = images.shape()[0];
    std::int64_t latent = g.profile().latent_dim;

    VaeGanStepResult res;
    // The prior draw is shared by the two adversarial terms; the
    // reparameterization noise is shared by the two reconstruction terms.
    auto z_t = sample_latent<float>(z_rng, PriorKind::standard_normal, batch, latent);
    auto eps = normal_tensor<float>(eps_rng, {batch, latent});

    // Step 1: discriminator on real shapes vs prior samples, gated like the
    // plain adversarial loop.
    {
        auto fake_const = g.forward(z_t).detach();
        auto score_real = d.forward(shapes).score;
        auto score_fake = d.forward(fake_const).score;
        if (!all_finite(score_real) || !all_finite(score_fake))
            throw NumericError("training: discriminator scores became non-finite");
        auto loss_d = d_loss(score_real, score_fake);
        res.d_loss = static_cast<double>(loss_d.item());
        res.d_accuracy = d_accuracy(score_real, score_fake);
        check_finite("discriminator loss", res.d_loss);
        res.d_updated = prev_d_accuracy <= cfg.d_accuracy_gate;
        if (res.d_updated) {
            opt_d.zero_grad();
            loss_d.backward();
            opt_d.step();
        }
    }

    // Step 2: encoder on KL + reconstruction through the generator.
    {
        auto enc = e.forward(images);
        auto z_e = reparameterize(enc.mu, enc.log_var, eps);
        auto recon = recon_l2(g.forward(z_e), shapes);
        auto kl = kl_gaussian(enc.mu, enc.log_var);
        res.kl = static_cast<double>(kl.item());
        res.recon = static_cast<double>(recon.item());
        res.recon_weighted = cfg.alpha2 * res.recon;
        check_finite("KL term", res.kl);
        check_finite("reconstruction term", res.recon);
        auto loss_e = add(mul_scalar(kl, static_cast<float>(cfg.alpha1)),
                          mul_scalar(recon, static_cast<float>(cfg.alpha2)));
        opt_e.zero_grad();
        loss_e.backward();
        opt_e.step();
    }

    // Step 3: generator on the non-saturating adversarial term plus the
    // weighted reconstruction, all recomputed against current weights.
    {
        auto score_fake = d.forward(g.forward(z_t)).score;
        if (!all_finite(score_fake))
            throw NumericError("training: generator-path scores became non-finite");
        auto adv = g_loss_nonsat(score_fake);
        auto enc = e.forward(images);
        auto z_e = reparameterize(enc.mu, enc.log_var, eps);
        auto recon = recon_l2(g.forward(z_e), shapes);
        auto loss_g = add(adv, mul_scalar(recon, static_cast<float>(cfg.alpha2)));
        res.g_adv_loss = static_cast<double>(adv.item());
        res.g_loss = static_cast<double>(loss_g.item());
        check_finite("generator loss", res.g_loss);
        opt_g.zero_grad();
        loss_g.backward();
        opt_g.step();
    }
    return res;
}

namespace {

// Shared epoch driver. `step` consumes the index list of one batch and the
// previous discriminator accuracy, returning the record for this batch.
template <typename StepFn>
TrainLog run_epochs(const SyntheticDataset& ds, TrainState& state, std::int64_t batch_size,
                    std::int64_t epochs, std::uint64_t seed, const std::string& out_dir,
                    std::int64_t checkpoint_every, StepFn&& step) {
    std::int64_t n = static_cast<std::int64_t>(ds.items.size());
    if (n == 0) throw std::invalid_argument("training: dataset is empty");
    if (batch_size > n)
        throw std::invalid_argument("training: batch size " + std::to_string(batch_size) +
                                    " exceeds dataset size " + std::to_string(n));
    if (ds.resolution != state.profile.resolution)
        throw std::runtime_error("training: dataset resolution " +
                                 std::to_string(ds.resolution) + " does not match profile '" +
                                 state.profile.name + "'");
    if (!out_dir.empty()) std::filesystem::create_directories(out_dir);

    RngStream shuffle_rng = RngStream::substream(seed, 1);
    TrainLog log;
    std::vector<std::int64_t> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    // Out-of-range sentinel: the first batch always updates the
    // discriminator because no previous accuracy exists.
    double prev_acc = -1.0;
    std::int64_t global_batch = 0;

    for (std::int64_t epoch = 1; epoch <= epochs; ++epoch) {
        shuffle_indices(order, shuffle_rng);
        std::int64_t n_batches = n / batch_size;  // partial final batch dropped
        for (std::int64_t b = 0; b < n_batches; ++b) {
            std::vector<std::int64_t> idx(
                order.begin() + static_cast<std::ptrdiff_t>(b * batch_size),
                order.begin() + static_cast<std::ptrdiff_t>((b + 1) * batch_size));
            double t0 = now_seconds();
            TrainRecord rec = step(idx, prev_acc);
            rec.epoch = epoch;
            rec.batch = ++global_batch;
            rec.wall_seconds = now_seconds() - t0;
            prev_acc = rec.d_accuracy;
            log.records.push_back(rec);
            if (!out_dir.empty() && checkpoint_every > 0 && global_batch % checkpoint_every == 0)
                save_checkpoint(state, checkpoint_path(out_dir, global_batch));
        }
    }
    if (!out_dir.empty()) {
        save_checkpoint(state, checkpoint_path(out_dir, -1));
        write_text_file(log.to_csv(), out_dir + "/train_log.csv");
    }
    return log;
}

}  // namespace

TrainResult train_gan(const SyntheticDataset& ds, const ScaleProfile& profile,
                      const GanTrainConfig& cfg, const std::string& out_dir,
                      std::int64_t checkpoint_every) {
    cfg.validate();
    RngStream init_rng = RngStream::substream(cfg.seed, 0);
    TrainState state =
        TrainState::fresh("gan", profile, PriorKind::uniform01, init_rng, cfg.lr_g, cfg.lr_d, 0.0);
    RngStream z_rng = RngStream::substream(cfg.seed, 2);

    TrainLog log = run_epochs(
        ds, state, cfg.batch_size, cfg.epochs, cfg.seed, out_dir, checkpoint_every,
        [&](const std::vector<std::int64_t>& idx, double prev_acc) {
            auto real = batch_shapes(ds, idx);
            GanStepResult r = gan_train_step(state.g, state.d, state.opt_g, state.opt_d, real,
                                             state.prior, cfg, prev_acc, z_rng);
            TrainRecord rec;
            rec.d_loss = r.d_loss;
            rec.d_accuracy = r.d_accuracy;
            rec.d_updated = r.d_updated;
            rec.g_adv_loss = r.g_adv_loss;
            rec.g_loss = r.g_adv_loss;
            return rec;
        });
    return TrainResult{std::move(state), std::move(log)};
}

TrainResult train_vaegan(const SyntheticDataset& ds, const ScaleProfile& profile,
                         const VaeGanTrainConfig& cfg, const std::string& out_dir,
                         std::int64_t checkpoint_every) {
    cfg.validate();
    RngStream init_rng = RngStream::substream(cfg.seed, 0);
    // The encoder trains at the generator's rate; only G and D carry
    // separately tuned rates.
    TrainState state = TrainState::fresh("vaegan", profile, PriorKind::standard_normal, init_rng,
                                         cfg.lr_g, cfg.lr_d, cfg.lr_g);
    RngStream z_rng = RngStream::substream(cfg.seed, 2);
    RngStream eps_rng = RngStream::substream(cfg.seed, 3);

    TrainLog log = run_epochs(
        ds, state, cfg.batch_size, cfg.epochs, cfg.seed, out_dir, checkpoint_every,
        [&](const std::vector<std::int64_t>& idx, double prev_acc) {
            auto images = batch_images(ds, idx);
            auto shapes = batch_shapes(ds, idx);
            VaeGanStepResult r =
                vaegan_train_step(*state.e, state.g, state.d, *state.opt_e, state.opt_g,
                                  state.opt_d, images, shapes, cfg, prev_acc, z_rng, eps_rng);
            TrainRecord rec;
            rec.d_loss = r.d_loss;
            rec.d_accuracy = r.d_accuracy;
            rec.d_updated = r.d_updated;
            rec.g_adv_loss = r.g_adv_loss;
            rec.g_loss = r.g_loss;
            rec.kl = r.kl;
            rec.recon = r.recon;
            rec.recon_weighted = r.recon_weighted;
            return rec;
        });
    return TrainResult{std::move(state), std::move(log)};
}

}  // namespace voxgan
