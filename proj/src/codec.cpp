#include "nvc/codec.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <string>
#include <thread>

#include "nvc/errors.hpp"
#include "nvc/field_net.hpp"

static_assert(std::endian::native == std::endian::little,
              "NVCF writer assumes a little-endian host");

namespace nvc {

namespace {

struct Writer {
    std::vector<std::uint8_t> bytes;

    template <class T>
    void put(T v) {
        const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
        bytes.insert(bytes.end(), p, p + sizeof(T));
    }
    void put_f32s(std::span<const float> v) {
        const auto* p = reinterpret_cast<const std::uint8_t*>(v.data());
        bytes.insert(bytes.end(), p, p + v.size() * 4);
    }
    void put_codes(std::span<const std::uint32_t> codes, int bits) {
        std::size_t acc = 0;
        int acc_bits = 0;
        for (auto c : codes) {
            acc |= static_cast<std::size_t>(c) << acc_bits;
            acc_bits += bits;
            while (acc_bits >= 8) {
                bytes.push_back(static_cast<std::uint8_t>(acc & 0xff));
                acc >>= 8;
                acc_bits -= 8;
            }
        }
        if (acc_bits > 0) bytes.push_back(static_cast<std::uint8_t>(acc & 0xff));
    }
};

struct Reader {
    std::span<const std::uint8_t> bytes;
    std::size_t pos = 0;

    void need(std::size_t n, const char* what) const {
        if (pos + n > bytes.size())
            throw FormatError(std::string("truncated stream reading ") + what +
                              " at byte offset " + std::to_string(pos) + ": need " +
                              std::to_string(n) + " more bytes, have " +
                              std::to_string(bytes.size() - pos));
    }
    template <class T>
    T get(const char* what) {
        need(sizeof(T), what);
        T v;
        std::memcpy(&v, bytes.data() + pos, sizeof(T));
        pos += sizeof(T);
        return v;
    }
    std::vector<float> get_f32s(std::size_t n, const char* what) {
        need(n * 4, what);
        std::vector<float> v(n);
        std::memcpy(v.data(), bytes.data() + pos, n * 4);
        pos += n * 4;
        return v;
    }
    std::vector<std::uint32_t> get_codes(std::size_t n, int bits, const char* what) {
        const std::size_t packed = (n * static_cast<std::size_t>(bits) + 7) / 8;
        need(packed, what);
        std::vector<std::uint32_t> codes(n);
        std::size_t acc = 0;
        int acc_bits = 0;
        std::size_t byte_i = 0;
        const std::uint32_t mask = (bits == 32) ? 0xffffffffu : ((1u << bits) - 1);
        for (std::size_t i = 0; i < n; ++i) {
            while (acc_bits < bits) {
                acc |= static_cast<std::size_t>(bytes[pos + byte_i]) << acc_bits;
                ++byte_i;
                acc_bits += 8;
            }
            codes[i] = static_cast<std::uint32_t>(acc) & mask;
            acc >>= bits;
            acc_bits -= bits;
        }
        pos += packed;
        return codes;
    }
};

}  // namespace

std::size_t header_size_bytes(int dims) {
    return 4 + 2 + 1 + 1 + 2 + 4 + 4 + 4 * static_cast<std::size_t>(dims) + 4 + 4;
}

std::size_t file_size_bits(const QuantizedModel& qm) {
    const std::size_t k = static_cast<std::size_t>(qm.arch.width);
    const std::size_t d = static_cast<std::size_t>(qm.arch.dims);
    const std::size_t nb = static_cast<std::size_t>(qm.arch.blocks);
    const std::size_t b = static_cast<std::size_t>(qm.bits);
    const std::size_t unquantized = k * d + k + nb * 2 * k + k + 1;
    const std::size_t per_layer =
        32 * (std::size_t{1} << b) + 8 * ((k * k * b + 7) / 8);
    return 8 * header_size_bytes(qm.arch.dims) + 32 * unquantized +
           2 * nb * per_layer;
}

std::vector<std::uint8_t> serialize(const QuantizedModel& qm) {
    Writer w;
    w.bytes.reserve(file_size_bits(qm) / 8);
    w.put<std::uint8_t>('N');
    w.put<std::uint8_t>('V');
    w.put<std::uint8_t>('C');
    w.put<std::uint8_t>('F');
    w.put<std::uint16_t>(kFormatVersion);
    w.put<std::uint8_t>(static_cast<std::uint8_t>(qm.arch.dims));
    w.put<std::uint8_t>(static_cast<std::uint8_t>(qm.bits));
    w.put<std::uint16_t>(static_cast<std::uint16_t>(qm.arch.blocks));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(qm.arch.width));
    w.put<float>(qm.arch.omega0);
    for (auto s : qm.resolution) w.put<std::uint32_t>(s);
    w.put<float>(qm.vmin);
    w.put<float>(qm.vmax);

    w.put_f32s(qm.w_first);
    w.put_f32s(qm.b_first);
    for (const auto& biases : qm.block_biases) w.put_f32s(biases);
    w.put_f32s(qm.w_last);
    w.put<float>(qm.b_last);

    for (const auto& layer : qm.layers) {
        w.put_f32s(layer.centers);
        w.put_codes(layer.codes, qm.bits);
    }
    return std::move(w.bytes);
}

QuantizedModel deserialize(std::span<const std::uint8_t> bytes) {
    Reader r{bytes};
    char magic[4];
    for (char& m : magic) m = static_cast<char>(r.get<std::uint8_t>("magic"));
    if (std::memcmp(magic, "NVCF", 4) != 0)
        throw FormatError("bad magic at byte offset 0: not an NVCF file");
    const auto version = r.get<std::uint16_t>("version");
    if (version != kFormatVersion)
        throw FormatError("unsupported NVCF version " + std::to_string(version));

    QuantizedModel qm;
    qm.arch.dims = r.get<std::uint8_t>("d");
    qm.bits = r.get<std::uint8_t>("bits");
    qm.arch.blocks = r.get<std::uint16_t>("n_blocks");
    qm.arch.width = static_cast<int>(r.get<std::uint32_t>("k"));
    qm.arch.omega0 = r.get<float>("omega0");
    if (qm.arch.dims != 3 && qm.arch.dims != 4)
        throw FormatError("invalid dimension " + std::to_string(qm.arch.dims));
    if (qm.bits < 1 || qm.bits > 16)
        throw FormatError("invalid bit width " + std::to_string(qm.bits));
    if (qm.arch.blocks < 1 || qm.arch.width < 1)
        throw FormatError("invalid architecture fields");
    qm.resolution.resize(qm.arch.dims);
    for (auto& s : qm.resolution) s = r.get<std::uint32_t>("resolution");
    qm.vmin = r.get<float>("vmin");
    qm.vmax = r.get<float>("vmax");

    const std::size_t k = static_cast<std::size_t>(qm.arch.width);
    const std::size_t d = static_cast<std::size_t>(qm.arch.dims);
    qm.w_first = r.get_f32s(k * d, "w_first");
    qm.b_first = r.get_f32s(k, "b_first");
    for (int b = 0; b < qm.arch.blocks; ++b)
        qm.block_biases.push_back(r.get_f32s(2 * k, "block biases"));
    qm.w_last = r.get_f32s(k, "w_last");
    qm.b_last = r.get<float>("b_last");

    const std::size_t n_centers = std::size_t{1} << qm.bits;
    for (int layer = 0; layer < 2 * qm.arch.blocks; ++layer) {
        QuantizedLayer ql;
        ql.rows = static_cast<std::uint32_t>(k);
        ql.cols = static_cast<std::uint32_t>(k);
        ql.centers = r.get_f32s(n_centers, "cluster centers");
        ql.codes = r.get_codes(k * k, qm.bits, "codes");
        qm.layers.push_back(std::move(ql));
    }
    if (r.pos != bytes.size())
        throw FormatError("trailing bytes: expected " + std::to_string(r.pos) +
                          " total, got " + std::to_string(bytes.size()));
    return qm;
}

void write_model(const QuantizedModel& qm, const std::filesystem::path& path) {
    const auto bytes = serialize(qm);
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw FormatError("cannot open output file: " + tmp.string());
        out.write(reinterpret_cast<const char*>(bytes.data()),
                  static_cast<std::streamsize>(bytes.size()));
        if (!out) {
            std::filesystem::remove(tmp);
            throw FormatError("write failed: " + tmp.string());
        }
    }
    std::filesystem::rename(tmp, path);
}

QuantizedModel read_model(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary | std::ios::ate);
    if (!in) throw FormatError("cannot open model file: " + path.string());
    const auto size = static_cast<std::size_t>(in.tellg());
    in.seekg(0);
    std::vector<std::uint8_t> bytes(size);
    in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(size));
    if (!in) throw FormatError("short read on model file: " + path.string());
    return deserialize(bytes);
}

double compression_ratio(const Volume& volume, std::size_t file_size_bytes) {
    const double source_bits =
        static_cast<double>(volume.cell_count()) * volume.source_bits;
    return source_bits / (8.0 * static_cast<double>(file_size_bytes));
}

Volume reconstruct_volume(const QuantizedModel& qm,
                          std::span<const std::uint32_t> resolution, int threads) {
    if (resolution.size() != static_cast<std::size_t>(qm.arch.dims))
        throw ConfigError("reconstruction resolution dimension mismatch");
    const Parameters params = dequantize_model(qm);
    const std::size_t d = resolution.size();
    std::size_t count = 1;
    for (auto s : resolution) count *= s;

    std::vector<float> values(count);
    const double vmin = qm.vmin, vmax = qm.vmax;

    int n_threads = threads > 0 ? threads
                                : static_cast<int>(std::thread::hardware_concurrency());
    if (n_threads < 1) n_threads = 1;
    n_threads = static_cast<int>(
        std::min<std::size_t>(static_cast<std::size_t>(n_threads), count));

    auto worker = [&](std::size_t lo, std::size_t hi) {
        Evaluator ev(params);
        std::vector<std::uint32_t> idx(d);
        std::vector<double> coord(d);
        for (std::size_t f = lo; f < hi; ++f) {
            unflatten_index(f, resolution, idx);
            grid_to_coord(idx, resolution, coord);
            values[f] =
                static_cast<float>(denormalize_value(ev.value(coord), vmin, vmax));
        }
    };
    if (n_threads == 1) {
        worker(0, count);
    } else {
        std::vector<std::thread> pool;
        const std::size_t chunk = (count + n_threads - 1) / n_threads;
        for (int t = 0; t < n_threads; ++t) {
            const std::size_t lo = chunk * t;
            const std::size_t hi = std::min(count, lo + chunk);
            if (lo < hi) pool.emplace_back(worker, lo, hi);
        }
        for (auto& th : pool) th.join();
    }

    return make_volume(std::vector<std::uint32_t>(resolution.begin(), resolution.end()),
                       std::move(values));
}

}  // namespace nvc
