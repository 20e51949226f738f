#include "nvc/field_net.hpp"

#include <cmath>
#include <string>

#include "nvc/errors.hpp"
#include "nvc/rng.hpp"

namespace nvc {

namespace {

void check_arch(const NetworkArch& arch) {
    if (arch.dims != 3 && arch.dims != 4)
        throw ConfigError("network input dimension must be 3 or 4");
    if (arch.width < 1) throw ConfigError("hidden width must be >= 1");
    if (arch.blocks < 1) throw ConfigError("block count must be >= 1");
}

}  // namespace

std::size_t param_count(const NetworkArch& arch) {
    check_arch(arch);
    const std::size_t k = static_cast<std::size_t>(arch.width);
    const std::size_t d = static_cast<std::size_t>(arch.dims);
    const std::size_t n = static_cast<std::size_t>(arch.blocks);
    return k * d + k + n * (2 * k * k + 2 * k) + k + 1;
}

std::size_t Parameters::scalar_count() const { return param_count(arch); }

int derive_layer_width(std::size_t budget, int dims, int blocks) {
    NetworkArch arch{dims, 1, blocks};
    if (param_count(arch) > budget)
        throw ConfigError("weight budget " + std::to_string(budget) +
                          " is below the minimum network size " +
                          std::to_string(param_count(arch)));
    int k = 1;
    for (;;) {
        arch.width = k + 1;
        if (param_count(arch) > budget) return k;
        ++k;
    }
}

Parameters init_params(const NetworkArch& arch, std::uint64_t rng_seed) {
    check_arch(arch);
    const int k = arch.width;
    const int d = arch.dims;
    Rng rng(rng_seed);

    auto fill_uniform = [&rng](std::vector<float>& v, std::size_t n, double bound) {
        v.resize(n);
        for (auto& x : v) x = static_cast<float>(rng.next_uniform(-bound, bound));
    };

    Parameters p;
    p.arch = arch;
    const double hidden_bound = std::sqrt(6.0 / k);
    fill_uniform(p.w_first, static_cast<std::size_t>(k) * d, 1.0 / d);
    fill_uniform(p.b_first, k, 1.0 / std::sqrt(static_cast<double>(d)));
    p.blocks.resize(arch.blocks);
    const double bias_bound = 1.0 / std::sqrt(static_cast<double>(k));
    for (auto& b : p.blocks) {
        fill_uniform(b.m1, static_cast<std::size_t>(k) * k, hidden_bound);
        fill_uniform(b.b1, k, bias_bound);
        fill_uniform(b.m2, static_cast<std::size_t>(k) * k, hidden_bound);
        fill_uniform(b.b2, k, bias_bound);
    }
    fill_uniform(p.w_last, k, hidden_bound);
    p.b_last = static_cast<float>(rng.next_uniform(-bias_bound, bias_bound));
    return p;
}

Evaluator::Evaluator(const Parameters& params) : params_(&params) {
    const std::size_t k = static_cast<std::size_t>(params.arch.width);
    const std::size_t d = static_cast<std::size_t>(params.arch.dims);
    act_.resize(k);
    tmp1_.resize(k);
    tmp2_.resize(k);
    jac_.resize(k * d);
    jtmp1_.resize(k * d);
    jtmp2_.resize(k * d);
}

double Evaluator::value(std::span<const double> x) {
    const Parameters& p = *params_;
    const int k = p.arch.width;
    const int d = p.arch.dims;
    const double omega = p.arch.omega0;

    for (int r = 0; r < k; ++r) {
        double z = p.b_first[r];
        for (int c = 0; c < d; ++c) z += static_cast<double>(p.w_first[r * d + c]) * x[c];
        act_[r] = std::sin(omega * z);
    }
    for (const auto& blk : p.blocks) {
        for (int r = 0; r < k; ++r) {
            double u = blk.b1[r];
            for (int c = 0; c < k; ++c)
                u += static_cast<double>(blk.m1[r * k + c]) * act_[c];
            tmp1_[r] = std::sin(u);
        }
        for (int r = 0; r < k; ++r) {
            double v = blk.b2[r];
            for (int c = 0; c < k; ++c)
                v += static_cast<double>(blk.m2[r * k + c]) * tmp1_[c];
            tmp2_[r] = std::sin(v);
        }
        for (int r = 0; r < k; ++r) act_[r] = 0.5 * (act_[r] + tmp2_[r]);
    }
    double out = p.b_last;
    for (int r = 0; r < k; ++r) out += static_cast<double>(p.w_last[r]) * act_[r];
    return out;
}

double Evaluator::value_and_grad(std::span<const double> x, std::span<double> grad) {
    const Parameters& p = *params_;
    const int k = p.arch.width;
    const int d = p.arch.dims;
    const double omega = p.arch.omega0;

    // first layer: a = sin(omega*(Wx+b)), J[r][c] = omega*cos(.)*W[r][c]
    for (int r = 0; r < k; ++r) {
        double z = p.b_first[r];
        for (int c = 0; c < d; ++c) z += static_cast<double>(p.w_first[r * d + c]) * x[c];
        act_[r] = std::sin(omega * z);
        const double dz = omega * std::cos(omega * z);
        for (int c = 0; c < d; ++c)
            jac_[r * d + c] = dz * static_cast<double>(p.w_first[r * d + c]);
    }
    for (const auto& blk : p.blocks) {
        // u = M1 a + b1; s = sin(u); Js = cos(u) * (M1 J)
        for (int r = 0; r < k; ++r) {
            double u = blk.b1[r];
            for (int c = 0; c < k; ++c)
                u += static_cast<double>(blk.m1[r * k + c]) * act_[c];
            const double cu = std::cos(u);
            tmp1_[r] = std::sin(u);
            for (int e = 0; e < d; ++e) {
                double ju = 0.0;
                for (int c = 0; c < k; ++c)
                    ju += static_cast<double>(blk.m1[r * k + c]) * jac_[c * d + e];
                jtmp1_[r * d + e] = cu * ju;
            }
        }
        // v = M2 s + b2; t = sin(v); Jt = cos(v) * (M2 Js)
        for (int r = 0; r < k; ++r) {
            double v = blk.b2[r];
            for (int c = 0; c < k; ++c)
                v += static_cast<double>(blk.m2[r * k + c]) * tmp1_[c];
            const double cv = std::cos(v);
            tmp2_[r] = std::sin(v);
            for (int e = 0; e < d; ++e) {
                double jv = 0.0;
                for (int c = 0; c < k; ++c)
                    jv += static_cast<double>(blk.m2[r * k + c]) * jtmp1_[c * d + e];
                jtmp2_[r * d + e] = cv * jv;
            }
        }
        for (int r = 0; r < k; ++r) {
            act_[r] = 0.5 * (act_[r] + tmp2_[r]);
            for (int e = 0; e < d; ++e)
                jac_[r * d + e] = 0.5 * (jac_[r * d + e] + jtmp2_[r * d + e]);
        }
    }
    double out = p.b_last;
    for (int e = 0; e < d; ++e) grad[e] = 0.0;
    for (int r = 0; r < k; ++r) {
        const double w = p.w_last[r];
        out += w * act_[r];
        for (int e = 0; e < d; ++e) grad[e] += w * jac_[r * d + e];
    }
    return out;
}

double forward(const Parameters& params, std::span<const double> x) {
    Evaluator ev(params);
    return ev.value(x);
}

std::vector<double> forward_batch(const Parameters& params,
                                  std::span<const double> xs, std::size_t n) {
    const std::size_t d = static_cast<std::size_t>(params.arch.dims);
    Evaluator ev(params);
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = ev.value(xs.subspan(i * d, d));
    return out;
}

std::vector<double> input_gradient(const Parameters& params, std::span<const double> x) {
    Evaluator ev(params);
    std::vector<double> g(params.arch.dims);
    ev.value_and_grad(x, g);
    return g;
}

}  // namespace nvc
