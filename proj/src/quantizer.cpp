#include "nvc/quantizer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "nvc/errors.hpp"

namespace nvc {

namespace {

// Nearest center in a sorted array; ties break toward the lower index.
std::uint32_t nearest_center(const std::vector<float>& centers, float v) {
    auto it = std::lower_bound(centers.begin(), centers.end(), v);
    if (it == centers.begin()) return 0;
    if (it == centers.end()) return static_cast<std::uint32_t>(centers.size() - 1);
    const auto hi = static_cast<std::uint32_t>(it - centers.begin());
    const auto lo = hi - 1;
    const double d_lo = static_cast<double>(v) - centers[lo];
    const double d_hi = static_cast<double>(centers[hi]) - v;
    return d_lo <= d_hi ? lo : hi;
}

// Lloyd's iterations from the given initial centers.
KMeansResult lloyd(std::span<const float> values, std::vector<float> init,
                   int iters) {
    const std::size_t n = values.size();
    const int k = static_cast<int>(init.size());

    KMeansResult res;
    res.centers = std::move(init);
    std::sort(res.centers.begin(), res.centers.end());
    res.assignments.assign(n, 0);
    std::vector<std::uint32_t> prev_assign;
    std::vector<double> sums(k);
    std::vector<std::size_t> counts(k);

    for (int pass = 0; pass < iters; ++pass) {
        double sse = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const std::uint32_t a = nearest_center(res.centers, values[i]);
            res.assignments[i] = a;
            const double dv = static_cast<double>(values[i]) - res.centers[a];
            sse += dv * dv;
        }
        res.objective.push_back(sse);
        if (res.assignments == prev_assign) break;
        prev_assign = res.assignments;

        std::fill(sums.begin(), sums.end(), 0.0);
        std::fill(counts.begin(), counts.end(), std::size_t{0});
        for (std::size_t i = 0; i < n; ++i) {
            sums[res.assignments[i]] += values[i];
            counts[res.assignments[i]] += 1;
        }
        for (int j = 0; j < k; ++j)
            if (counts[j] > 0)
                res.centers[j] = static_cast<float>(sums[j] / static_cast<double>(counts[j]));

        // empty clusters grab the value farthest from its current center
        for (int j = 0; j < k; ++j) {
            if (counts[j] > 0) continue;
            double best = -1.0;
            std::size_t best_i = 0;
            for (std::size_t i = 0; i < n; ++i) {
                const double dv =
                    std::abs(static_cast<double>(values[i]) -
                             res.centers[res.assignments[i]]);
                if (dv > best) {
                    best = dv;
                    best_i = i;
                }
            }
            if (best <= 0.0) break;  // every value already sits on a center
            res.centers[j] = values[best_i];
            res.assignments[best_i] = static_cast<std::uint32_t>(j);
            counts[j] = 1;
        }
        std::sort(res.centers.begin(), res.centers.end());
    }

    // canonical form: sorted centers, assignments re-derived against them
    std::sort(res.centers.begin(), res.centers.end());
    for (std::size_t i = 0; i < n; ++i)
        res.assignments[i] = nearest_center(res.centers, values[i]);
    return res;
}

double result_sse(std::span<const float> values, const KMeansResult& r) {
    double sse = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) {
        const double d = static_cast<double>(values[i]) - r.centers[r.assignments[i]];
        sse += d * d;
    }
    return sse;
}

// Exact 1-D clustering for small inputs: optimal clusters are contiguous in
// sorted order, so dynamic programming over partition boundaries is exact.
KMeansResult exact_1d(std::span<const float> values, int k) {
    const std::size_t n = values.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });

    // prefix sums over the sorted sequence for O(1) segment SSE
    std::vector<double> pre(n + 1, 0.0), pre2(n + 1, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const double v = values[order[i]];
        pre[i + 1] = pre[i] + v;
        pre2[i + 1] = pre2[i] + v * v;
    }
    auto seg_sse = [&](int lo, int hi) {  // [lo, hi)
        const double s = pre[hi] - pre[lo];
        const double s2 = pre2[hi] - pre2[lo];
        return std::max(0.0, s2 - s * s / (hi - lo));
    };

    const int c_max = static_cast<int>(std::min<std::size_t>(k, n));
    const int ni = static_cast<int>(n);
    std::vector<std::vector<double>> dp(c_max + 1,
                                        std::vector<double>(ni + 1, 1e300));
    std::vector<std::vector<int>> cut(c_max + 1, std::vector<int>(ni + 1, 0));
    dp[0][0] = 0.0;
    for (int c = 1; c <= c_max; ++c)
        for (int end = c; end <= ni; ++end)
            for (int start = c - 1; start < end; ++start) {
                const double cand = dp[c - 1][start] + seg_sse(start, end);
                if (cand < dp[c][end]) {
                    dp[c][end] = cand;
                    cut[c][end] = start;
                }
            }

    KMeansResult res;
    res.assignments.assign(n, 0);
    std::vector<float> centers;
    int end = ni;
    for (int c = c_max; c >= 1; --c) {
        const int start = cut[c][end];
        const double mean = (pre[end] - pre[start]) / (end - start);
        centers.push_back(static_cast<float>(mean));
        end = start;
    }
    std::reverse(centers.begin(), centers.end());
    // pad duplicate centers so exactly k come back, then canonicalize
    while (static_cast<int>(centers.size()) < k) centers.push_back(centers.back());
    res.centers = std::move(centers);
    for (std::size_t i = 0; i < n; ++i)
        res.assignments[i] = nearest_center(res.centers, values[i]);
    res.objective.push_back(result_sse(values, res));
    return res;
}

}  // namespace

KMeansResult kmeans_1d(std::span<const float> values, int k, int iters,
                       std::uint64_t /*seed*/) {
    if (values.empty()) throw ConfigError("kmeans_1d: empty input");
    if (k < 1) throw ConfigError("kmeans_1d: k must be >= 1");
    const std::size_t n = values.size();

    // small inputs: solve exactly (Lloyd stalls in local minima there)
    if (n <= 512) return exact_1d(values, k);

    std::vector<float> sorted(values.begin(), values.end());
    std::sort(sorted.begin(), sorted.end());

    // quantile initialization: center j at quantile (j+0.5)/k
    std::vector<float> quantile_init(k);
    for (int j = 0; j < k; ++j) {
        auto q = static_cast<std::size_t>((j + 0.5) / k * static_cast<double>(n));
        quantile_init[j] = sorted[std::min(q, n - 1)];
    }
    auto best = lloyd(values, std::move(quantile_init), iters);

    // second start from uniform-range levels; its first assignment equals the
    // uniform 2^b quantizer, so the winner is never worse than uniform
    const float lo = sorted.front(), hi = sorted.back();
    std::vector<float> uniform_init(k);
    for (int j = 0; j < k; ++j)
        uniform_init[j] = k > 1 ? lo + (hi - lo) * static_cast<float>(j) / (k - 1)
                                : (lo + hi) / 2;
    auto alt = lloyd(values, std::move(uniform_init), iters);
    if (result_sse(values, alt) < result_sse(values, best)) best = std::move(alt);
    return best;
}

QuantizedLayer quantize_layer(std::span<const float> matrix, std::uint32_t rows,
                              std::uint32_t cols, int bits, std::uint64_t seed) {
    if (bits < 1 || bits > 16) throw ConfigError("bits must be in [1, 16]");
    if (matrix.size() != static_cast<std::size_t>(rows) * cols)
        throw LogicError("matrix size does not match shape");
    const int k = 1 << bits;
    auto km = kmeans_1d(matrix, k, 50, seed);
    QuantizedLayer layer;
    layer.rows = rows;
    layer.cols = cols;
    layer.centers = std::move(km.centers);
    layer.codes = std::move(km.assignments);
    return layer;
}

QuantizedModel quantize_model(const Parameters& params, int bits, std::uint64_t seed,
                              std::span<const std::uint32_t> resolution, float vmin,
                              float vmax) {
    const int k = params.arch.width;
    QuantizedModel qm;
    qm.arch = params.arch;
    qm.bits = bits;
    qm.resolution.assign(resolution.begin(), resolution.end());
    qm.vmin = vmin;
    qm.vmax = vmax;
    qm.w_first = params.w_first;
    qm.b_first = params.b_first;
    qm.w_last = params.w_last;
    qm.b_last = params.b_last;
    for (const auto& blk : params.blocks) {
        std::vector<float> biases(blk.b1);
        biases.insert(biases.end(), blk.b2.begin(), blk.b2.end());
        qm.block_biases.push_back(std::move(biases));
        qm.layers.push_back(quantize_layer(blk.m1, static_cast<std::uint32_t>(k),
                                           static_cast<std::uint32_t>(k), bits, seed));
        qm.layers.push_back(quantize_layer(blk.m2, static_cast<std::uint32_t>(k),
                                           static_cast<std::uint32_t>(k), bits, seed));
    }
    return qm;
}

Parameters dequantize_model(const QuantizedModel& qm) {
    const std::uint32_t limit = 1u << qm.bits;
    const int k = qm.arch.width;
    Parameters p;
    p.arch = qm.arch;
    p.w_first = qm.w_first;
    p.b_first = qm.b_first;
    p.w_last = qm.w_last;
    p.b_last = qm.b_last;
    p.blocks.resize(qm.arch.blocks);
    for (int b = 0; b < qm.arch.blocks; ++b) {
        auto& blk = p.blocks[b];
        const auto& biases = qm.block_biases[b];
        blk.b1.assign(biases.begin(), biases.begin() + k);
        blk.b2.assign(biases.begin() + k, biases.end());
        for (int half = 0; half < 2; ++half) {
            const auto& layer = qm.layers[static_cast<std::size_t>(b) * 2 + half];
            auto& m = half == 0 ? blk.m1 : blk.m2;
            m.resize(layer.codes.size());
            for (std::size_t i = 0; i < layer.codes.size(); ++i) {
                if (layer.codes[i] >= limit)
                    throw FormatError("corrupt code " + std::to_string(layer.codes[i]) +
                                      " at layer " + std::to_string(b * 2 + half));
                m[i] = layer.centers[layer.codes[i]];
            }
        }
    }
    return p;
}

}  // namespace nvc
