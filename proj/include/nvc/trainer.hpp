#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "nvc/field_net.hpp"
#include "nvc/volume.hpp"

namespace nvc {

struct TrainConfig {
    int epochs = 75;
    int batch_size = 16384;
    double lambda = 0.0;       // gradient-regularization weight; 0 disables
    double lr_initial = 0.0;   // <= 0 means "auto" from the parameter count
    int decay_factor = 5;
    int decay_every = 20;      // epochs
    std::uint64_t seed = 0;
    bool probe_psnr = true;    // per-epoch PSNR estimate on a fixed probe set
};

struct EpochRecord {
    int epoch = 0;
    double lr = 0.0;
    double mean_loss = 0.0;
    double probe_psnr = 0.0;  // NaN when probing is off
    double seconds = 0.0;
};

struct TrainLog {
    std::vector<EpochRecord> epochs;
    void write_csv(const std::filesystem::path& path) const;
};

// Gradients with the same shapes as Parameters, accumulated in double.
struct GradBuffers {
    struct Block {
        std::vector<double> m1, m2, b1, b2;
    };
    std::vector<double> w_first, b_first;
    std::vector<Block> blocks;
    std::vector<double> w_last;
    double b_last = 0.0;

    explicit GradBuffers(const NetworkArch& arch);
    void zero();
};

// Learning rate interpolated between the anchors (800K, 1e-4) and (5M, 2e-5),
// clamped outside that range.
double auto_learning_rate(std::size_t param_count);

double lr_at_epoch(double lr0, int epoch, const TrainConfig& cfg);

// Mean over the batch of (f(p) - y)^2 + lambda*|grad_x f(p) - g|^2, plus the
// exact derivative of that scalar with respect to every parameter. The lambda
// term backpropagates through the input-gradient computation (second order).
double loss_and_gradients(const Parameters& params, const SampleBatch& batch,
                          double lambda, GradBuffers& grads);

struct AdamState {
    GradBuffers m, v;
    std::int64_t t = 0;
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;

    explicit AdamState(const NetworkArch& arch);
};

// Standard bias-corrected Adam update, elementwise over all tensors.
void adam_step(Parameters& params, const GradBuffers& grads, AdamState& state,
               double lr);

// Fits a fresh network to the volume: epochs * ceil(C/batch_size) steps, each
// on an independently seeded uniform batch. Sequential and deterministic.
std::pair<Parameters, TrainLog> train(const Volume& volume, const NetworkArch& arch,
                                      const TrainConfig& cfg);

}  // namespace nvc
