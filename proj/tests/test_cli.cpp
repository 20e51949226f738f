#define DOCTEST_CONFIG_IMPLEMENT
#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "nvc/volume.hpp"

namespace fs = std::filesystem;

namespace {

std::string g_cli;
fs::path g_dir;

int run(const std::string& args) {
    const std::string cmd = g_cli + " " + args + " >/dev/null 2>&1";
    const int rc = std::system(cmd.c_str());
    return WEXITSTATUS(rc);
}

void write_synthetic(const fs::path& path, int n) {
    std::vector<float> vals;
    vals.reserve(static_cast<std::size_t>(n) * n * n);
    for (int x = 0; x < n; ++x)
        for (int y = 0; y < n; ++y)
            for (int z = 0; z < n; ++z)
                vals.push_back(static_cast<float>(
                    std::sin(0.5 * x) + std::cos(0.4 * y) + 0.3 * std::sin(0.6 * z)));
    std::ofstream out(path, std::ios::binary);
    out.write(reinterpret_cast<const char*>(vals.data()),
              static_cast<std::streamsize>(vals.size() * 4));
}

}  // namespace

TEST_CASE("encode/decode/metrics/inspect/render pipeline") {
    const auto raw = g_dir / "cli_vol.raw";
    const auto nvcf = g_dir / "cli_vol.nvcf";
    write_synthetic(raw, 12);

    // usage errors exit 2
    CHECK(run("encode " + raw.string() + " " + nvcf.string() +
              " --ratio 20 --epochs 1") == 2);  // missing --resolution
    CHECK(run("encode " + raw.string() + " " + nvcf.string() +
              " --resolution 12,12,12") == 2);  // neither --ratio nor --weights
    CHECK(run("bogus-subcommand") == 2);

    CHECK(run("encode " + raw.string() + " " + nvcf.string() +
              " --resolution 12,12,12 --ratio 20 --epochs 3 --batch 1728 --lr 0.005"
              " --blocks 2 --seed 5") == 0);
    CHECK(fs::exists(nvcf));

    // decode at stored resolution: C*4 bytes
    const auto out_raw = g_dir / "cli_out.raw";
    CHECK(run("decode " + nvcf.string() + " " + out_raw.string()) == 0);
    CHECK(fs::file_size(out_raw) == 12u * 12 * 12 * 4);

    // decode at doubled resolution: 8C*4 bytes
    const auto out_big = g_dir / "cli_out2.raw";
    CHECK(run("decode " + nvcf.string() + " " + out_big.string() +
              " --resolution 24,24,24") == 0);
    CHECK(fs::file_size(out_big) == 8u * 12 * 12 * 12 * 4);

    // metrics against the original
    CHECK(run("metrics " + nvcf.string() + " " + raw.string() +
              " --resolution 12,12,12 --net-grad") == 0);
    // resolution disagreeing with the model header is a usage error
    const auto raw_small = g_dir / "cli_small.raw";
    {
        std::vector<float> pad(12 * 12 * 11, 0.5f);
        std::ofstream out(raw_small, std::ios::binary);
        out.write(reinterpret_cast<const char*>(pad.data()),
                  static_cast<std::streamsize>(pad.size() * 4));
    }
    CHECK(run("metrics " + nvcf.string() + " " + raw_small.string() +
              " --resolution 12,12,11") == 2);

    CHECK(run("inspect " + nvcf.string()) == 0);

    // render
    const auto tf = g_dir / "cli_tf.txt";
    {
        std::ofstream t(tf);
        t << "0 0.2 0.3 0.9 0.0\n0.5 0.9 0.9 0.2 0.4\n1 1 0 0 0.8\n";
    }
    const auto ppm = g_dir / "cli_img.ppm";
    CHECK(run("render " + nvcf.string() + " " + ppm.string() + " --tf " + tf.string() +
              " --width 32 --height 32 --step 0.01") == 0);
    {
        std::ifstream in(ppm, std::ios::binary);
        std::string magic;
        in >> magic;
        CHECK(magic == "P6");
    }
    // --time on a 3D model is a usage error
    CHECK(run("render " + nvcf.string() + " " + ppm.string() + " --tf " + tf.string() +
              " --width 8 --height 8 --time 0.5") == 2);

    // corrupted file: runtime error, no partial decode output left behind
    const auto broken = g_dir / "cli_broken.nvcf";
    fs::copy_file(nvcf, broken, fs::copy_options::overwrite_existing);
    {
        std::fstream f(broken, std::ios::in | std::ios::out | std::ios::binary);
        f.seekp(0);
        f.write("XXXX", 4);
    }
    CHECK(run("inspect " + broken.string()) == 1);
    const auto never = g_dir / "cli_never.raw";
    CHECK(run("decode " + broken.string() + " " + never.string()) == 1);
    CHECK_FALSE(fs::exists(never));

    // truncated payload is also a clean failure
    const auto truncated = g_dir / "cli_trunc.nvcf";
    fs::copy_file(nvcf, truncated, fs::copy_options::overwrite_existing);
    fs::resize_file(truncated, fs::file_size(truncated) - 7);
    CHECK(run("decode " + truncated.string() + " " + never.string()) == 1);
    CHECK_FALSE(fs::exists(never));
}

int main(int argc, char** argv) {
    if (argc < 2) {
        std::fprintf(stderr, "usage: test_cli <path-to-nvc-binary>\n");
        return 1;
    }
    g_cli = argv[1];
    g_dir = fs::temp_directory_path() / "nvc_cli_test";
    fs::create_directories(g_dir);
    doctest::Context ctx;
    const int rc = ctx.run();
    fs::remove_all(g_dir);
    return rc;
}
