#pragma once

#include <optional>
#include <span>
#include <string>

#include "nvc/codec.hpp"
#include "nvc/volume.hpp"

namespace nvc {

// PSNR values use +infinity as the exact-match sentinel.
struct MetricReport {
    double psnr = 0.0;
    double fd_grad_psnr = 0.0;
    std::optional<double> net_grad_psnr;
    double mse = 0.0;
    double range = 0.0;

    std::string to_json() const;
};

// 10*log10(range^2 / MSE), range taken from the reference volume.
double psnr(const Volume& reference, const Volume& candidate);

// Same arithmetic over gradient components; the range is the joint min/max
// across all reference components.
double gradient_psnr(std::span<const double> reference_grads,
                     std::span<const double> candidate_grads);

// Reconstructs at the reference resolution and reports PSNR plus FD-Grad PSNR
// (central differences of the reconstruction) and, when requested, Net-Grad
// PSNR (analytic network gradients, denormalized to match the reference FD).
MetricReport evaluate_model(const QuantizedModel& qm, const Volume& reference,
                            bool with_net_grad, int threads = 0);

}  // namespace nvc
