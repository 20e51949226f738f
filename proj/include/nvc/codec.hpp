#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "nvc/quantizer.hpp"
#include "nvc/volume.hpp"

namespace nvc {

// NVCF container, version 1. Little-endian throughout.
//
//   magic      "NVCF"            4 bytes
//   version    u16               = 1
//   d          u8
//   bits       u8
//   n_blocks   u16
//   k          u32
//   omega0     f32
//   resolution u32 x d
//   vmin, vmax f32 each
//
// Payload: w_first, b_first, per-block biases (b1 then b2), w_last, b_last as
// f32 row-major; then per quantized layer (m1, m2 per block, block order):
// 2^bits centers (f32) followed by codes packed LSB-first, `bits` bits each,
// zero-padded to a byte boundary per layer.

constexpr std::uint16_t kFormatVersion = 1;

std::vector<std::uint8_t> serialize(const QuantizedModel& qm);
QuantizedModel deserialize(std::span<const std::uint8_t> bytes);

void write_model(const QuantizedModel& qm, const std::filesystem::path& path);
QuantizedModel read_model(const std::filesystem::path& path);

std::size_t header_size_bytes(int dims);  // 26 + 4d for version 1

// Exact serialized size in bits, from the header fields alone.
std::size_t file_size_bits(const QuantizedModel& qm);

// (C * source bits per sample) / (file size in bits)
double compression_ratio(const Volume& volume, std::size_t file_size_bytes);

// Evaluates the model at every grid vertex of the given resolution and
// denormalizes with the stored value range. Parallel over chunks; output
// placement is deterministic.
Volume reconstruct_volume(const QuantizedModel& qm,
                          std::span<const std::uint32_t> resolution, int threads = 0);

}  // namespace nvc
