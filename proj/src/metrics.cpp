#include "nvc/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "nvc/errors.hpp"
#include "nvc/field_net.hpp"

namespace nvc {

namespace {

double psnr_from(double range, double mse) {
    if (mse == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(range * range / mse);
}

std::string json_number(double v) {
    if (std::isinf(v)) return "\"inf\"";
    std::ostringstream os;
    os.precision(12);
    os << v;
    return os.str();
}

}  // namespace

std::string MetricReport::to_json() const {
    std::ostringstream os;
    os << "{\"psnr\":" << json_number(psnr)
       << ",\"fd_grad_psnr\":" << json_number(fd_grad_psnr);
    if (net_grad_psnr) os << ",\"net_grad_psnr\":" << json_number(*net_grad_psnr);
    os << ",\"mse\":" << json_number(mse) << ",\"range\":" << json_number(range) << "}";
    return os.str();
}

double psnr(const Volume& reference, const Volume& candidate) {
    if (reference.resolution != candidate.resolution)
        throw LogicError("psnr: resolution mismatch");
    double mse = 0.0;
    for (std::size_t i = 0; i < reference.values.size(); ++i) {
        const double e =
            static_cast<double>(reference.values[i]) - candidate.values[i];
        mse += e * e;
    }
    mse /= static_cast<double>(reference.values.size());
    const double range = static_cast<double>(reference.vmax) - reference.vmin;
    return psnr_from(range, mse);
}

double gradient_psnr(std::span<const double> reference_grads,
                     std::span<const double> candidate_grads) {
    if (reference_grads.size() != candidate_grads.size() || reference_grads.empty())
        throw LogicError("gradient_psnr: shape mismatch");
    double lo = reference_grads[0], hi = reference_grads[0];
    double mse = 0.0;
    for (std::size_t i = 0; i < reference_grads.size(); ++i) {
        lo = std::min(lo, reference_grads[i]);
        hi = std::max(hi, reference_grads[i]);
        const double e = reference_grads[i] - candidate_grads[i];
        mse += e * e;
    }
    mse /= static_cast<double>(reference_grads.size());
    return psnr_from(hi - lo, mse);
}

MetricReport evaluate_model(const QuantizedModel& qm, const Volume& reference,
                            bool with_net_grad, int threads) {
    if (qm.arch.dims != reference.dims())
        throw ConfigError("model/reference dimension mismatch");
    const Volume recon = reconstruct_volume(qm, reference.resolution, threads);

    MetricReport report;
    report.range = static_cast<double>(reference.vmax) - reference.vmin;
    double mse = 0.0;
    for (std::size_t i = 0; i < reference.values.size(); ++i) {
        const double e = static_cast<double>(reference.values[i]) - recon.values[i];
        mse += e * e;
    }
    mse /= static_cast<double>(reference.values.size());
    report.mse = mse;
    report.psnr = psnr_from(report.range, mse);

    const std::vector<double> ref_grads = gradient_field(reference);
    const std::vector<double> fd_grads = gradient_field(recon);
    report.fd_grad_psnr = gradient_psnr(ref_grads, fd_grads);

    if (with_net_grad) {
        const Parameters params = dequantize_model(qm);
        const auto res = std::span<const std::uint32_t>(reference.resolution);
        const std::size_t d = res.size();
        const std::size_t count = reference.cell_count();
        // network gradient is d(normalized value)/d(normalized coord); scale by
        // (vmax - vmin)/2 to land in the reference FD units
        const double scale = (static_cast<double>(qm.vmax) - qm.vmin) * 0.5;
        std::vector<double> net_grads(count * d);
        Evaluator ev(params);
        std::vector<std::uint32_t> idx(d);
        std::vector<double> coord(d), g(d);
        for (std::size_t f = 0; f < count; ++f) {
            unflatten_index(f, res, idx);
            grid_to_coord(idx, res, coord);
            ev.value_and_grad(coord, g);
            for (std::size_t e = 0; e < d; ++e) net_grads[f * d + e] = g[e] * scale;
        }
        report.net_grad_psnr = gradient_psnr(ref_grads, net_grads);
    }
    return report;
}

}  // namespace nvc
