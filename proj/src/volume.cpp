#include "nvc/volume.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>

#include "nvc/errors.hpp"
#include "nvc/rng.hpp"

namespace nvc {

namespace {

void check_resolution(std::span<const std::uint32_t> resolution) {
    const auto d = resolution.size();
    if (d != 3 && d != 4)
        throw ConfigError("volume must be 3- or 4-dimensional, got d=" + std::to_string(d));
    for (auto s : resolution)
        if (s < 1) throw ConfigError("resolution entries must be >= 1");
}

void compute_range(Volume& v) {
    float lo = std::numeric_limits<float>::infinity();
    float hi = -std::numeric_limits<float>::infinity();
    for (float x : v.values) {
        lo = std::min(lo, x);
        hi = std::max(hi, x);
    }
    v.vmin = lo;
    v.vmax = hi;
}

}  // namespace

Volume load_raw(const std::filesystem::path& path,
                std::span<const std::uint32_t> resolution, RawPrecision precision) {
    check_resolution(resolution);
    Volume v;
    v.resolution.assign(resolution.begin(), resolution.end());
    const std::size_t count = v.cell_count();
    const std::size_t bytes_per = precision == RawPrecision::Float32 ? 4 : 1;

    std::ifstream in(path, std::ios::binary | std::ios::ate);
    if (!in) throw FormatError("cannot open raw file: " + path.string());
    const auto file_size = static_cast<std::size_t>(in.tellg());
    if (file_size != count * bytes_per)
        throw FormatError("raw file size mismatch for " + path.string() + ": expected " +
                          std::to_string(count * bytes_per) + " bytes, got " +
                          std::to_string(file_size));
    in.seekg(0);

    v.values.resize(count);
    if (precision == RawPrecision::Float32) {
        v.source_bits = 32;
        in.read(reinterpret_cast<char*>(v.values.data()),
                static_cast<std::streamsize>(count * 4));
    } else {
        v.source_bits = 8;
        std::vector<std::uint8_t> raw(count);
        in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(count));
        for (std::size_t i = 0; i < count; ++i)
            v.values[i] = static_cast<float>(raw[i]) / 255.0f;
    }
    if (!in) throw FormatError("short read on raw file: " + path.string());

    for (std::size_t i = 0; i < count; ++i)
        if (!std::isfinite(v.values[i]))
            throw DataError("non-finite sample at flat index " + std::to_string(i));

    compute_range(v);
    return v;
}

Volume make_volume(std::vector<std::uint32_t> resolution, std::vector<float> values,
                   int source_bits) {
    check_resolution(resolution);
    Volume v;
    v.resolution = std::move(resolution);
    v.values = std::move(values);
    v.source_bits = source_bits;
    if (v.values.size() != v.cell_count())
        throw LogicError("value count does not match resolution");
    for (std::size_t i = 0; i < v.values.size(); ++i)
        if (!std::isfinite(v.values[i]))
            throw DataError("non-finite sample at flat index " + std::to_string(i));
    compute_range(v);
    return v;
}

void save_raw(const Volume& v, const std::filesystem::path& path) {
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw FormatError("cannot open output file: " + tmp.string());
        out.write(reinterpret_cast<const char*>(v.values.data()),
                  static_cast<std::streamsize>(v.values.size() * 4));
        if (!out) {
            std::filesystem::remove(tmp);
            throw FormatError("write failed: " + tmp.string());
        }
    }
    std::filesystem::rename(tmp, path);
}

void grid_to_coord(std::span<const std::uint32_t> idx,
                   std::span<const std::uint32_t> resolution, std::span<double> out) {
    for (std::size_t j = 0; j < resolution.size(); ++j) {
        if (idx[j] >= resolution[j])
            throw LogicError("grid index out of bounds in dimension " + std::to_string(j));
        out[j] = resolution[j] == 1
                     ? 0.0
                     : -1.0 + 2.0 * static_cast<double>(idx[j]) /
                                  static_cast<double>(resolution[j] - 1);
    }
}

std::size_t flat_index(std::span<const std::uint32_t> idx,
                       std::span<const std::uint32_t> resolution) {
    std::size_t f = 0;
    for (std::size_t j = 0; j < resolution.size(); ++j) f = f * resolution[j] + idx[j];
    return f;
}

void unflatten_index(std::size_t flat, std::span<const std::uint32_t> resolution,
                     std::span<std::uint32_t> out) {
    for (std::size_t j = resolution.size(); j-- > 0;) {
        out[j] = static_cast<std::uint32_t>(flat % resolution[j]);
        flat /= resolution[j];
    }
}

std::vector<float> normalize_values(const Volume& v) {
    if (!(v.vmin < v.vmax))
        throw DataError("constant volume (vmin == vmax): nothing to learn");
    std::vector<float> out(v.values.size());
    for (std::size_t i = 0; i < v.values.size(); ++i)
        out[i] = static_cast<float>(normalize_value(v.values[i], v.vmin, v.vmax));
    return out;
}

void central_diff_gradient(const Volume& v, std::span<const std::uint32_t> idx,
                           std::span<double> out) {
    const auto res = std::span<const std::uint32_t>(v.resolution);
    const std::size_t base = flat_index(idx, res);
    // flat stride of dimension j
    std::size_t stride = 1;
    std::vector<std::size_t> strides(res.size());
    for (std::size_t j = res.size(); j-- > 0;) {
        strides[j] = stride;
        stride *= res[j];
    }
    for (std::size_t j = 0; j < res.size(); ++j) {
        const std::uint32_t s = res[j];
        if (s == 1) {
            out[j] = 0.0;
            continue;
        }
        const double h = 2.0 / static_cast<double>(s - 1);
        const std::uint32_t i = idx[j];
        double num;
        double denom;
        if (i == 0) {
            num = static_cast<double>(v.values[base + strides[j]]) - v.values[base];
            denom = h;
        } else if (i == s - 1) {
            num = static_cast<double>(v.values[base]) - v.values[base - strides[j]];
            denom = h;
        } else {
            num = static_cast<double>(v.values[base + strides[j]]) -
                  v.values[base - strides[j]];
            denom = 2.0 * h;
        }
        out[j] = num / denom;
    }
}

std::vector<double> gradient_field(const Volume& v) {
    const auto res = std::span<const std::uint32_t>(v.resolution);
    const std::size_t count = v.cell_count();
    const std::size_t d = res.size();
    std::vector<double> grads(count * d);
    std::vector<std::uint32_t> idx(d);
    for (std::size_t f = 0; f < count; ++f) {
        unflatten_index(f, res, idx);
        central_diff_gradient(v, idx, std::span<double>(grads).subspan(f * d, d));
    }
    return grads;
}

SampleBatch sample_batch(const Volume& v, std::size_t n, std::uint64_t rng_seed,
                         bool with_gradients) {
    if (n < 1) throw ConfigError("sample_batch requires n >= 1");
    if (!(v.vmin < v.vmax))
        throw DataError("constant volume (vmin == vmax): nothing to learn");

    const auto res = std::span<const std::uint32_t>(v.resolution);
    const std::size_t d = res.size();
    const std::size_t count = v.cell_count();
    const double grad_scale = 2.0 / (static_cast<double>(v.vmax) - v.vmin);

    SampleBatch batch;
    batch.dims = static_cast<int>(d);
    batch.coords.resize(n * d);
    batch.targets.resize(n);
    if (with_gradients) batch.grad_targets.resize(n * d);

    Rng rng(rng_seed);
    std::vector<std::uint32_t> idx(d);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t f = rng.next_below(count);
        unflatten_index(f, res, idx);
        grid_to_coord(idx, res, std::span<double>(batch.coords).subspan(i * d, d));
        batch.targets[i] = normalize_value(v.values[f], v.vmin, v.vmax);
        if (with_gradients) {
            auto g = std::span<double>(batch.grad_targets).subspan(i * d, d);
            central_diff_gradient(v, idx, g);
            for (auto& x : g) x *= grad_scale;
        }
    }
    return batch;
}

}  // namespace nvc
