#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <vector>

#include "nvc/codec.hpp"
#include "nvc/errors.hpp"
#include "nvc/rng.hpp"

using namespace nvc;

namespace {

QuantizedModel random_model(Rng& rng) {
    NetworkArch arch;
    arch.dims = rng.next_below(2) ? 4 : 3;
    arch.width = 1 + static_cast<int>(rng.next_below(8));
    arch.blocks = 1 + static_cast<int>(rng.next_below(4));
    const auto p = init_params(arch, rng.next_u64());
    const int bits_choices[4] = {1, 8, 9, 16};
    const int bits = bits_choices[rng.next_below(4)];
    std::vector<std::uint32_t> res(arch.dims);
    for (auto& s : res) s = 1 + static_cast<std::uint32_t>(rng.next_below(12));
    return quantize_model(p, bits, 0, res, -1.0f + static_cast<float>(rng.next_unit()),
                          1.0f + static_cast<float>(rng.next_unit()));
}

bool models_equal(const QuantizedModel& a, const QuantizedModel& b) {
    if (!(a.arch == b.arch) || a.bits != b.bits || a.resolution != b.resolution)
        return false;
    if (a.vmin != b.vmin || a.vmax != b.vmax) return false;
    if (a.w_first != b.w_first || a.b_first != b.b_first) return false;
    if (a.block_biases != b.block_biases) return false;
    if (a.w_last != b.w_last || a.b_last != b.b_last) return false;
    if (a.layers.size() != b.layers.size()) return false;
    for (std::size_t i = 0; i < a.layers.size(); ++i) {
        if (a.layers[i].centers != b.layers[i].centers) return false;
        if (a.layers[i].codes != b.layers[i].codes) return false;
    }
    return true;
}

}  // namespace

TEST_CASE("header size is 26 + 4d") {
    // 4 magic + 2 version + 1 d + 1 bits + 2 n_blocks + 4 k + 4 omega0
    // + 4d resolution + 4 vmin + 4 vmax
    CHECK(header_size_bytes(3) == 38);
    CHECK(header_size_bytes(4) == 42);
    Rng rng(1);
    const auto qm = random_model(rng);
    const auto bytes = serialize(qm);
    // header + 4 bytes of w_first must already be present
    CHECK(bytes.size() > header_size_bytes(qm.arch.dims));
}

TEST_CASE("serialize/deserialize round-trip, randomized") {
    Rng rng(77);
    for (int trial = 0; trial < 50; ++trial) {
        const auto qm = random_model(rng);
        const auto bytes = serialize(qm);
        const auto back = deserialize(bytes);
        CHECK(models_equal(qm, back));
        // byte-level: re-serializing reproduces the stream
        CHECK(serialize(back) == bytes);
    }
}

TEST_CASE("file size matches the closed-form bit formula") {
    Rng rng(78);
    for (int trial = 0; trial < 20; ++trial) {
        const auto qm = random_model(rng);
        const auto bytes = serialize(qm);
        CHECK(file_size_bits(qm) == bytes.size() * 8);
    }
}

TEST_CASE("packed code bytes: 16 entries at 9 bits is 18 bytes") {
    // layer payload = 2^b centers * 4 bytes + ceil(16*9/8) = 2048 + 18
    NetworkArch arch{3, 4, 1};
    const auto p = init_params(arch, 5);
    const std::uint32_t res[3] = {4, 4, 4};
    const auto qm = quantize_model(p, 9, 0, res, 0.0f, 1.0f);
    const std::size_t expect_per_layer = 512 * 4 + (16 * 9 + 7) / 8;
    // unquantized scalars: w_first 12, b_first 4, one block's b1+b2 8,
    // w_last 4, b_last 1
    const std::size_t fixed = header_size_bytes(3) +
                              4 * (4u * 3 + 4 + (4 + 4) + 4 + 1);
    CHECK(serialize(qm).size() == fixed + 2 * expect_per_layer);
    CHECK((16 * 9 + 7) / 8 == 18);
}

TEST_CASE("bad magic, bad version, truncation") {
    Rng rng(79);
    const auto qm = random_model(rng);
    auto bytes = serialize(qm);

    auto bad = bytes;
    bad[0] = 'X';
    CHECK_THROWS_AS(deserialize(bad), FormatError);

    bad = bytes;
    bad[4] = 99;  // version
    CHECK_THROWS_AS(deserialize(bad), FormatError);

    bad = bytes;
    bad.resize(bad.size() - 1);
    CHECK_THROWS_WITH_AS(deserialize(bad), doctest::Contains("truncated"), FormatError);

    bad = bytes;
    bad.push_back(0);
    CHECK_THROWS_WITH_AS(deserialize(bad), doctest::Contains("trailing"), FormatError);
}

TEST_CASE("single payload bit flip changes exactly one code or one float") {
    Rng rng(80);
    NetworkArch arch{3, 3, 2};
    const auto p = init_params(arch, 17);
    const std::uint32_t res[3] = {8, 8, 8};
    const auto qm = quantize_model(p, 9, 0, res, 0.0f, 1.0f);
    auto bytes = serialize(qm);

    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t byte_i =
            header_size_bytes(3) +
            rng.next_below(bytes.size() - header_size_bytes(3));
        const int bit_i = static_cast<int>(rng.next_below(8));
        auto flipped = bytes;
        flipped[byte_i] ^= static_cast<std::uint8_t>(1u << bit_i);
        QuantizedModel back;
        try {
            back = deserialize(flipped);
        } catch (const FormatError&) {
            continue;  // flip landed in padding that feeds a code >= 2^b; fine
        }
        int diffs = 0;
        auto count_f32 = [&](const std::vector<float>& a, const std::vector<float>& b) {
            for (std::size_t i = 0; i < a.size(); ++i) {
                if (std::memcmp(&a[i], &b[i], 4) != 0) ++diffs;
            }
        };
        count_f32(qm.w_first, back.w_first);
        count_f32(qm.b_first, back.b_first);
        for (std::size_t b = 0; b < qm.block_biases.size(); ++b)
            count_f32(qm.block_biases[b], back.block_biases[b]);
        count_f32(qm.w_last, back.w_last);
        if (std::memcmp(&qm.b_last, &back.b_last, 4) != 0) ++diffs;
        for (std::size_t l = 0; l < qm.layers.size(); ++l) {
            count_f32(qm.layers[l].centers, back.layers[l].centers);
            for (std::size_t c = 0; c < qm.layers[l].codes.size(); ++c)
                if (qm.layers[l].codes[c] != back.layers[l].codes[c]) ++diffs;
        }
        // padding bits decode to nothing; otherwise exactly one field changed
        CHECK(diffs <= 1);
    }
}

TEST_CASE("compression ratio accounting") {
    std::vector<float> vals(64 * 64 * 64, 0.0f);
    for (std::size_t i = 0; i < vals.size(); ++i)
        vals[i] = static_cast<float>(i % 97);
    const auto vol = make_volume({64, 64, 64}, std::move(vals));
    // file == volume size -> 1.0
    CHECK(compression_ratio(vol, vol.cell_count() * 4) == doctest::Approx(1.0));
    // 104858-byte file on a 64^3 float volume -> ~10:1
    CHECK(compression_ratio(vol, 104'858) == doctest::Approx(10.0).epsilon(1e-4));
}

TEST_CASE("zero model reconstructs the range midpoint") {
    NetworkArch arch{3, 2, 1};
    Parameters p = init_params(arch, 0);
    std::fill(p.w_first.begin(), p.w_first.end(), 0.0f);
    std::fill(p.b_first.begin(), p.b_first.end(), 0.0f);
    for (auto& b : p.blocks) {
        std::fill(b.m1.begin(), b.m1.end(), 0.0f);
        std::fill(b.m2.begin(), b.m2.end(), 0.0f);
        std::fill(b.b1.begin(), b.b1.end(), 0.0f);
        std::fill(b.b2.begin(), b.b2.end(), 0.0f);
    }
    std::fill(p.w_last.begin(), p.w_last.end(), 0.0f);
    p.b_last = 0.0f;
    const std::uint32_t res[3] = {4, 4, 4};
    const auto qm = quantize_model(p, 9, 0, res, 2.0f, 6.0f);
    const auto vol = reconstruct_volume(qm, res, 1);
    for (float v : vol.values) CHECK(v == doctest::Approx(4.0));
}

TEST_CASE("reconstruction is deterministic across thread counts") {
    Rng rng(81);
    const auto qm = random_model(rng);
    const auto v1 = reconstruct_volume(qm, qm.resolution, 1);
    const auto v4 = reconstruct_volume(qm, qm.resolution, 4);
    CHECK(v1.values == v4.values);
}

TEST_CASE("write_model/read_model file round-trip") {
    Rng rng(82);
    const auto qm = random_model(rng);
    const auto path = std::filesystem::temp_directory_path() / "nvc_model.nvcf";
    write_model(qm, path);
    const auto back = read_model(path);
    CHECK(models_equal(qm, back));
    CHECK(std::filesystem::file_size(path) * 8 == file_size_bits(qm));
    std::filesystem::remove(path);
}
