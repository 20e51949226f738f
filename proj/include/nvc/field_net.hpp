#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace nvc {

// Sinusoidal residual MLP topology. One residual block holds two k x k
// matrices; activations stay in [-1, 1] by construction of the block update.
struct NetworkArch {
    int dims = 3;        // input dimension d
    int width = 1;       // hidden width k
    int blocks = 8;      // residual block count
    float omega0 = 30.0f;  // first-layer frequency scale

    bool operator==(const NetworkArch&) const = default;
};

// All learnable tensors, 32-bit floats. Shapes are fixed by the arch.
struct Parameters {
    struct Block {
        std::vector<float> m1, m2;  // k x k, row-major
        std::vector<float> b1, b2;  // k
    };

    NetworkArch arch;
    std::vector<float> w_first;  // k x d, row-major
    std::vector<float> b_first;  // k
    std::vector<Block> blocks;
    std::vector<float> w_last;  // 1 x k
    float b_last = 0.0f;

    std::size_t scalar_count() const;
};

// k*d + k + blocks*(2k^2 + 2k) + k + 1
std::size_t param_count(const NetworkArch& arch);

// Largest k whose parameter count does not exceed the budget m.
int derive_layer_width(std::size_t budget, int dims, int blocks);

// SIREN-style init: first layer U(-1/d, 1/d), hidden layers U(-sqrt(6/k),
// sqrt(6/k)), biases U(-1/sqrt(fan_in), 1/sqrt(fan_in)). Deterministic per seed.
Parameters init_params(const NetworkArch& arch, std::uint64_t rng_seed);

// Evaluates the network and its exact input gradient. Holds scratch buffers,
// so each thread should own its own instance; the Parameters it references
// must stay alive and unmodified.
class Evaluator {
public:
    explicit Evaluator(const Parameters& params);

    // f(x), output in normalized value space. x has arch.dims entries.
    double value(std::span<const double> x);

    // f(x) and d f/d x (analytic, via Jacobian propagation through the blocks).
    double value_and_grad(std::span<const double> x, std::span<double> grad);

    const Parameters& params() const { return *params_; }

private:
    const Parameters* params_;
    std::vector<double> act_, tmp1_, tmp2_;
    std::vector<double> jac_, jtmp1_, jtmp2_;  // k x d
};

double forward(const Parameters& params, std::span<const double> x);

// Elementwise identical to forward (same code path).
std::vector<double> forward_batch(const Parameters& params,
                                  std::span<const double> xs, std::size_t n);

std::vector<double> input_gradient(const Parameters& params, std::span<const double> x);

}  // namespace nvc
