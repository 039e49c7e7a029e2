#pragma once

#include <optional>
#include <string>

#include "voxgan/adam.hpp"
#include "voxgan/archive.hpp"
#include "voxgan/losses.hpp"
#include "voxgan/models.hpp"
#include "voxgan/rng.hpp"

namespace voxgan {

// Everything a training run needs to stop and resume: the networks, their
// batch-norm running statistics, the optimizer moments and step counts, the
// scale profile, and which latent prior the generator was trained against.
// The encoder and its optimizer are present only for image-conditioned runs.
struct TrainState {
    std::string kind;  // "gan" or "vaegan"
    ScaleProfile profile;
    PriorKind prior;
    Generator<float> g;
    Discriminator<float> d;
    std::optional<ImageEncoder<float>> e;
    Adam<float> opt_g;
    Adam<float> opt_d;
    std::optional<Adam<float>> opt_e;

    // Builds freshly initialized networks and zeroed optimizer state. The
    // encoder is constructed (and lr_e consumed) only when kind=="vaegan".
    static TrainState fresh(const std::string& kind, const ScaleProfile& profile,
                            PriorKind prior, RngStream& init_rng, double lr_g, double lr_d,
                            double lr_e);
};

void save_checkpoint(TrainState& state, const std::string& path);
TrainState load_checkpoint(const std::string& path);

}  // namespace voxgan
