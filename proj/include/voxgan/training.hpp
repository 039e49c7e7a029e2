#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "voxgan/checkpoint.hpp"
#include "voxgan/synthetic.hpp"

namespace voxgan {

// Raised when a loss or parameter stops being finite; the command line maps
// it to its own exit code so scripted runs can tell numeric blowups from bad
// inputs.
struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

struct GanTrainConfig {
    double lr_g = 0.0025;
    double lr_d = 1e-5;
    std::int64_t batch_size = 100;
    double d_accuracy_gate = 0.80;
    std::uint64_t seed = 0;
    std::int64_t epochs = 1;

    void validate() const {
        // A zero discriminator rate is the documented way to train against a
        // frozen D; the generator must actually move.
        if (!(lr_g > 0.0) || lr_d < 0.0)
            throw std::invalid_argument(
                "training: lr_g must be positive and lr_d non-negative");
        if (!(d_accuracy_gate > 0.0 && d_accuracy_gate <= 1.0))
            throw std::invalid_argument("training: accuracy gate must lie in (0,1]");
        if (batch_size < 1) throw std::invalid_argument("training: batch size must be >= 1");
        if (epochs < 1) throw std::invalid_argument("training: epochs must be >= 1");
    }
};

struct VaeGanTrainConfig : GanTrainConfig {
    double alpha1 = 5.0;    // KL weight
    double alpha2 = 1e-4;   // reconstruction weight

    void validate() const {
        GanTrainConfig::validate();
        if (alpha1 < 0.0 || alpha2 < 0.0)
            throw std::invalid_argument("training: alpha weights must be >= 0");
    }
};

// One row per batch. KL/reconstruction columns are zero for plain
// adversarial runs. Wall time is kept in memory for profiling but excluded
// from the serialized log so identical runs serialize identically.
struct TrainRecord {
    std::int64_t epoch = 0;
    std::int64_t batch = 0;  // global 1-based batch index
    double d_loss = 0.0;
    double d_accuracy = 0.0;
    bool d_updated = false;
    double g_adv_loss = 0.0;
    double g_loss = 0.0;
    double kl = 0.0;
    double recon = 0.0;
    double recon_weighted = 0.0;
    double wall_seconds = 0.0;
};

struct TrainLog {
    std::vector<TrainRecord> records;

    // Columns: epoch,batch,d_loss,d_accuracy,d_updated,g_adv_loss,g_loss,
    //          kl,recon,recon_weighted
    std::string to_csv() const;
};

struct GanStepResult {
    double d_loss = 0.0;
    double d_accuracy = 0.0;
    double g_adv_loss = 0.0;
    bool d_updated = false;
};

struct VaeGanStepResult {
    double d_loss = 0.0;
    double d_accuracy = 0.0;
    double g_adv_loss = 0.0;
    double g_loss = 0.0;
    double kl = 0.0;
    double recon = 0.0;
    double recon_weighted = 0.0;
    bool d_updated = false;
};

// One adversarial batch: score real against freshly generated fakes, update
// the discriminator only when its accuracy on the previous batch did not
// exceed the gate, then always update the generator on the non-saturating
// objective with freshly scored fakes.
GanStepResult gan_train_step(Generator<float>& g, Discriminator<float>& d, Adam<float>& opt_g,
                             Adam<float>& opt_d, const Tensor<float>& real, PriorKind prior,
                             const GanTrainConfig& cfg, double prev_d_accuracy,
                             RngStream& z_rng);

// One image-conditioned batch: sequential D / encoder / G updates, each on
// forward passes recomputed against current weights. The prior draw z used by
// the D and G adversarial terms is shared, as is the reparameterization
// noise of the two reconstruction terms.
VaeGanStepResult vaegan_train_step(ImageEncoder<float>& e, Generator<float>& g,
                                   Discriminator<float>& d, Adam<float>& opt_e,
                                   Adam<float>& opt_g, Adam<float>& opt_d,
                                   const Tensor<float>& images, const Tensor<float>& shapes,
                                   const VaeGanTrainConfig& cfg, double prev_d_accuracy,
                                   RngStream& z_rng, RngStream& eps_rng);

struct TrainResult {
    TrainState state;
    TrainLog log;
};

// Full training drivers: seeded shuffle per epoch, partial final batch
// dropped, optional periodic checkpoints under out_dir (always a final one
// when out_dir is set).
TrainResult train_gan(const SyntheticDataset& ds, const ScaleProfile& profile,
                      const GanTrainConfig& cfg, const std::string& out_dir = "",
                      std::int64_t checkpoint_every = 0);
TrainResult train_vaegan(const SyntheticDataset& ds, const ScaleProfile& profile,
                         const VaeGanTrainConfig& cfg, const std::string& out_dir = "",
                         std::int64_t checkpoint_every = 0);

// Assembles [n,1,r,r,r] / [n,3,s,s] batches from dataset items.
Tensor<float> batch_shapes(const SyntheticDataset& ds, const std::vector<std::int64_t>& idx);
Tensor<float> batch_images(const SyntheticDataset& ds, const std::vector<std::int64_t>& idx);

// In-place seeded Fisher-Yates.
void shuffle_indices(std::vector<std::int64_t>& idx, RngStream& rng);

}  // namespace voxgan
