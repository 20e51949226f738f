#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace nvc {

enum class RawPrecision { Float32, Uint8 };

// A scalar field sampled on a regular grid in 3 or 4 dimensions.
// Values are stored row-major, last index fastest. Immutable after load;
// every operation on it is read-only and thread-safe.
struct Volume {
    std::vector<std::uint32_t> resolution;  // s_1..s_d
    std::vector<float> values;              // flat, row-major
    float vmin = 0.0f;
    float vmax = 0.0f;
    int source_bits = 32;  // bits per sample of the source file (32 or 8)

    int dims() const { return static_cast<int>(resolution.size()); }

    std::size_t cell_count() const {
        std::size_t c = 1;
        for (auto s : resolution) c *= s;
        return c;
    }
};

// One point drawn from a volume: normalized coordinates, normalized target
// value, and (optionally) the normalized finite-difference gradient target.
struct SampleBatch {
    int dims = 0;
    std::vector<double> coords;        // n x d
    std::vector<double> targets;       // n, in [-1, 1]
    std::vector<double> grad_targets;  // n x d when requested, else empty

    std::size_t size() const { return targets.size(); }
};

// Reads a headerless little-endian raw file. File size must equal
// cell_count * bytes-per-sample exactly; NaN/Inf samples are rejected.
Volume load_raw(const std::filesystem::path& path,
                std::span<const std::uint32_t> resolution, RawPrecision precision);

// Builds a Volume from in-memory values (synthetic inputs, reconstructions).
Volume make_volume(std::vector<std::uint32_t> resolution, std::vector<float> values,
                   int source_bits = 32);

// Writes values as little-endian float32, row-major, via a temp file + rename.
void save_raw(const Volume& v, const std::filesystem::path& path);

// Maps grid index i_j to -1 + 2*i_j/(s_j - 1) per dimension; a dimension of
// extent 1 maps to 0.
void grid_to_coord(std::span<const std::uint32_t> idx,
                   std::span<const std::uint32_t> resolution, std::span<double> out);

// flat row-major index <-> multi-index
std::size_t flat_index(std::span<const std::uint32_t> idx,
                       std::span<const std::uint32_t> resolution);
void unflatten_index(std::size_t flat, std::span<const std::uint32_t> resolution,
                     std::span<std::uint32_t> out);

inline double normalize_value(double x, double vmin, double vmax) {
    return 2.0 * (x - vmin) / (vmax - vmin) - 1.0;
}
inline double denormalize_value(double x, double vmin, double vmax) {
    return (x + 1.0) * 0.5 * (vmax - vmin) + vmin;
}

// Maps all values into [-1, 1]. Rejects constant volumes (vmin == vmax).
std::vector<float> normalize_values(const Volume& v);

// Central differences in normalized-coordinate units: component j is
// (X[i+e_j] - X[i-e_j]) / (2 h_j) with h_j = 2/(s_j - 1), one-sided at the
// boundary, 0 where s_j == 1. Operates on the stored (raw) values.
void central_diff_gradient(const Volume& v, std::span<const std::uint32_t> idx,
                           std::span<double> out);

// Evaluates the gradient at every grid point; result is cell_count x d.
std::vector<double> gradient_field(const Volume& v);

// Draws n grid points uniformly at random (with replacement). Coordinates are
// normalized, targets are value-normalized, and gradient targets (when
// requested) are central differences scaled into normalized value space.
SampleBatch sample_batch(const Volume& v, std::size_t n, std::uint64_t rng_seed,
                         bool with_gradients);

}  // namespace nvc
