#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "nvc/field_net.hpp"

namespace nvc {

struct KMeansResult {
    std::vector<float> centers;            // exactly k, sorted ascending
    std::vector<std::uint32_t> assignments;  // index into centers, per value
    std::vector<double> objective;         // within-cluster SSE after each Lloyd pass
};

// 1-D k-means. Small inputs (n <= 512) are solved exactly by dynamic
// programming over contiguous sorted partitions; larger inputs run Lloyd's
// algorithm twice, from quantile initialization (center j at quantile
// (j+0.5)/k) and from uniform-range levels, keeping the lower-SSE result, so
// the outcome is never worse than a uniform 2^b-level quantizer. Deterministic;
// the seed parameter is accepted for interface stability but the procedure has
// no random choices. Empty clusters are re-seeded to the value farthest from
// its current center.
KMeansResult kmeans_1d(std::span<const float> values, int k, int iters,
                       std::uint64_t seed);

// One intermediary matrix quantized to 2^bits cluster centers.
struct QuantizedLayer {
    std::uint32_t rows = 0, cols = 0;
    std::vector<float> centers;            // 2^bits, sorted ascending
    std::vector<std::uint32_t> codes;      // rows*cols entries, each < 2^bits
};

// Full model after quantization: intermediary matrices as cluster codes,
// first/last layers and all biases verbatim, plus the source value range.
struct QuantizedModel {
    NetworkArch arch;
    int bits = 9;
    std::vector<std::uint32_t> resolution;  // source volume resolution
    float vmin = 0.0f, vmax = 0.0f;
    std::vector<float> w_first, b_first;
    std::vector<std::vector<float>> block_biases;  // per block: b1 (k) then b2 (k)
    std::vector<float> w_last;
    float b_last = 0.0f;
    std::vector<QuantizedLayer> layers;  // 2 per block: m1 then m2, block order
};

QuantizedLayer quantize_layer(std::span<const float> matrix, std::uint32_t rows,
                              std::uint32_t cols, int bits, std::uint64_t seed);

QuantizedModel quantize_model(const Parameters& params, int bits, std::uint64_t seed,
                              std::span<const std::uint32_t> resolution, float vmin,
                              float vmax);

// Replaces every code by its center; first/last layers and biases come back
// bit-identical.
Parameters dequantize_model(const QuantizedModel& qm);

}  // namespace nvc
