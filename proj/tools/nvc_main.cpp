#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "nvc/codec.hpp"
#include "nvc/errors.hpp"
#include "nvc/field_net.hpp"
#include "nvc/metrics.hpp"
#include "nvc/quantizer.hpp"
#include "nvc/renderer.hpp"
#include "nvc/trainer.hpp"
#include "nvc/volume.hpp"

namespace {

using nlohmann::json;

nvc::RawPrecision parse_precision(const std::string& s) {
    if (s == "float32") return nvc::RawPrecision::Float32;
    if (s == "uint8") return nvc::RawPrecision::Uint8;
    throw CLI::ValidationError("--precision", "must be float32 or uint8");
}

json finite_or_string(double v) {
    if (std::isinf(v)) return "inf";
    return v;
}

struct EncodeArgs {
    std::string in_path, out_path;
    std::vector<std::uint32_t> resolution;
    std::string precision = "float32";
    double ratio = 0.0;
    std::uint64_t weights = 0;
    int blocks = 8;
    double lambda = 0.0;
    int bits = 9;
    int epochs = 75;
    int batch = 16384;
    std::uint64_t seed = 0;
    double lr = 0.0;
    int threads = 0;
    std::string log_csv;
};

int run_encode(const EncodeArgs& a) {
    const auto t_start = std::chrono::steady_clock::now();
    const auto volume = nvc::load_raw(a.in_path, a.resolution, parse_precision(a.precision));
    const std::size_t cells = volume.cell_count();

    std::size_t budget;
    if (a.weights > 0)
        budget = a.weights;
    else
        budget = static_cast<std::size_t>(static_cast<double>(cells) / a.ratio);

    nvc::NetworkArch arch;
    arch.dims = volume.dims();
    arch.blocks = a.blocks;
    arch.width = nvc::derive_layer_width(budget, arch.dims, arch.blocks);

    nvc::TrainConfig cfg;
    cfg.epochs = a.epochs;
    cfg.batch_size = a.batch;
    cfg.lambda = a.lambda;
    cfg.lr_initial = a.lr;
    cfg.seed = a.seed;

    std::cerr << "encoding " << a.in_path << ": C=" << cells << " budget=" << budget
              << " k=" << arch.width << " params=" << nvc::param_count(arch) << "\n";

    auto [params, log] = nvc::train(volume, arch, cfg);
    if (!a.log_csv.empty()) log.write_csv(a.log_csv);

    const auto qm = nvc::quantize_model(params, a.bits, a.seed, volume.resolution,
                                        volume.vmin, volume.vmax);
    nvc::write_model(qm, a.out_path);
    const auto file_bytes = std::filesystem::file_size(a.out_path);

    const auto report = nvc::evaluate_model(qm, volume, false, a.threads);
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    const double achieved = nvc::compression_ratio(volume, file_bytes);

    json out{{"ratio", achieved},
             {"psnr", finite_or_string(report.psnr)},
             {"seconds", seconds},
             {"k", arch.width},
             {"param_count", nvc::param_count(arch)},
             {"file_bytes", file_bytes}};
    std::cout << out.dump() << "\n";
    std::cerr << "achieved ratio " << achieved << ":1, PSNR "
              << report.psnr << " dB in " << seconds << " s\n";
    return 0;
}

int run_decode(const std::string& in_path, const std::string& out_path,
               const std::vector<std::uint32_t>& resolution, int threads) {
    const auto qm = nvc::read_model(in_path);
    std::vector<std::uint32_t> res =
        resolution.empty() ? qm.resolution : resolution;
    if (res.size() != static_cast<std::size_t>(qm.arch.dims))
        throw nvc::ConfigError("resolution override has wrong dimension");
    const auto volume = nvc::reconstruct_volume(qm, res, threads);
    nvc::save_raw(volume, out_path);
    json out{{"cells", volume.cell_count()}, {"bytes", volume.cell_count() * 4}};
    std::cout << out.dump() << "\n";
    return 0;
}

int run_metrics(const std::string& in_path, const std::string& ref_path,
                const std::vector<std::uint32_t>& resolution,
                const std::string& precision, bool net_grad, int threads) {
    const auto qm = nvc::read_model(in_path);
    const auto reference =
        nvc::load_raw(ref_path, resolution, parse_precision(precision));
    if (reference.resolution != qm.resolution)
        throw nvc::ConfigError("reference resolution does not match the model header");
    const auto report = nvc::evaluate_model(qm, reference, net_grad, threads);
    std::cout << report.to_json() << "\n";
    return 0;
}

struct RenderArgs {
    std::string in_path, out_path, tf_path;
    std::vector<double> eye{0.0, 0.0, 3.0};
    std::vector<double> look_at{0.0, 0.0, 0.0};
    std::vector<double> up{0.0, 1.0, 0.0};
    double fov = 45.0;
    int width = 512, height = 512;
    double step = 0.005;
    bool shaded = false;
    std::optional<double> time;
    int threads = 0;
};

int run_render(const RenderArgs& a) {
    const auto qm = nvc::read_model(a.in_path);
    const auto tf = nvc::TransferFunction::load(a.tf_path);
    nvc::Camera cam;
    cam.eye = {a.eye[0], a.eye[1], a.eye[2]};
    cam.look_at = {a.look_at[0], a.look_at[1], a.look_at[2]};
    cam.up = {a.up[0], a.up[1], a.up[2]};
    cam.fov_deg = a.fov;
    cam.width = a.width;
    cam.height = a.height;
    nvc::RenderOptions opts;
    opts.step = a.step;
    opts.shaded = a.shaded;
    opts.time = a.time;
    opts.threads = a.threads;
    const auto img = nvc::raymarch_neural(qm, cam, tf, opts);
    nvc::write_image(img, a.out_path);
    json out{{"width", img.width}, {"height", img.height}, {"path", a.out_path}};
    std::cout << out.dump() << "\n";
    return 0;
}

int run_inspect(const std::string& in_path) {
    const auto qm = nvc::read_model(in_path);
    const auto bytes = std::filesystem::file_size(in_path);
    std::size_t cells = 1;
    for (auto s : qm.resolution) cells *= s;
    json layers = json::array();
    for (std::size_t i = 0; i < qm.layers.size(); ++i) {
        const auto& l = qm.layers[i];
        layers.push_back({{"index", i},
                          {"rows", l.rows},
                          {"cols", l.cols},
                          {"centers", l.centers.size()},
                          {"code_bits", l.codes.size() * qm.bits}});
    }
    json out{{"version", nvc::kFormatVersion},
             {"d", qm.arch.dims},
             {"resolution", qm.resolution},
             {"k", qm.arch.width},
             {"n_blocks", qm.arch.blocks},
             {"bits", qm.bits},
             {"omega0", qm.arch.omega0},
             {"vmin", qm.vmin},
             {"vmax", qm.vmax},
             {"param_count", nvc::param_count(qm.arch)},
             {"total_bits", nvc::file_size_bits(qm)},
             {"file_bytes", bytes},
             {"ratio_vs_float32", (static_cast<double>(cells) * 32.0) /
                                      (8.0 * static_cast<double>(bytes))},
             {"layers", layers}};
    std::cout << out.dump() << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"neural scalar-field volume codec"};
    app.require_subcommand(1);

    EncodeArgs enc;
    auto* encode = app.add_subcommand("encode", "train and compress a raw volume");
    encode->add_option("input", enc.in_path, "raw volume file")->required();
    encode->add_option("output", enc.out_path, "output .nvcf file")->required();
    encode->add_option("--resolution", enc.resolution, "grid resolution, e.g. 64,64,64")
        ->required()
        ->delimiter(',');
    encode->add_option("--precision", enc.precision, "float32 or uint8");
    auto* ratio_opt =
        encode->add_option("--ratio", enc.ratio, "target compression ratio C/m");
    auto* weights_opt =
        encode->add_option("--weights", enc.weights, "target weight budget m");
    ratio_opt->excludes(weights_opt);
    weights_opt->excludes(ratio_opt);
    encode->add_option("--blocks", enc.blocks, "residual block count");
    encode->add_option("--lambda", enc.lambda, "gradient regularization weight");
    encode->add_option("--bits", enc.bits, "quantization bits")->check(CLI::Range(1, 16));
    encode->add_option("--epochs", enc.epochs, "training epochs");
    encode->add_option("--batch", enc.batch, "batch size");
    encode->add_option("--seed", enc.seed, "rng seed");
    encode->add_option("--lr", enc.lr, "initial learning rate (0 = auto)");
    encode->add_option("--threads", enc.threads, "worker thread cap");
    encode->add_option("--log", enc.log_csv, "write per-epoch CSV log here");

    std::string dec_in, dec_out;
    std::vector<std::uint32_t> dec_res;
    int dec_threads = 0;
    auto* decode = app.add_subcommand("decode", "reconstruct a raw volume");
    decode->add_option("input", dec_in, "input .nvcf file")->required();
    decode->add_option("output", dec_out, "output raw float32 file")->required();
    decode->add_option("--resolution", dec_res, "override reconstruction resolution")
        ->delimiter(',');
    decode->add_option("--threads", dec_threads, "worker thread cap");

    std::string met_in, met_ref, met_prec = "float32";
    std::vector<std::uint32_t> met_res;
    bool met_net_grad = false;
    int met_threads = 0;
    auto* metrics = app.add_subcommand("metrics", "compare a model to a reference");
    metrics->add_option("input", met_in, "input .nvcf file")->required();
    metrics->add_option("reference", met_ref, "reference raw file")->required();
    metrics->add_option("--resolution", met_res, "reference resolution")
        ->required()
        ->delimiter(',');
    metrics->add_option("--precision", met_prec, "float32 or uint8");
    metrics->add_flag("--net-grad", met_net_grad, "also report analytic gradient PSNR");
    metrics->add_option("--threads", met_threads, "worker thread cap");

    RenderArgs ren;
    auto* render = app.add_subcommand("render", "neural volume rendering to PPM");
    render->add_option("input", ren.in_path, "input .nvcf file")->required();
    render->add_option("output", ren.out_path, "output .ppm file")->required();
    render->add_option("--tf", ren.tf_path, "transfer function file")->required();
    render->add_option("--eye", ren.eye, "camera position")->delimiter(',')->expected(3);
    render->add_option("--look-at", ren.look_at, "look-at point")
        ->delimiter(',')
        ->expected(3);
    render->add_option("--up", ren.up, "up vector")->delimiter(',')->expected(3);
    render->add_option("--fov", ren.fov, "vertical fov, degrees");
    render->add_option("--width", ren.width, "image width");
    render->add_option("--height", ren.height, "image height");
    render->add_option("--step", ren.step, "ray marching step");
    render->add_flag("--shaded", ren.shaded, "gradient-based shading");
    double time_val = 0.0;
    auto* time_opt =
        render->add_option("--time", time_val, "time coordinate for 4D models");
    render->add_option("--threads", ren.threads, "worker thread cap");

    std::string ins_in;
    auto* inspect = app.add_subcommand("inspect", "print header and size accounting");
    inspect->add_option("input", ins_in, "input .nvcf file")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (*encode) {
            if (enc.ratio <= 0.0 && enc.weights == 0)
                throw nvc::ConfigError("exactly one of --ratio/--weights is required");
            return run_encode(enc);
        }
        if (*decode) return run_decode(dec_in, dec_out, dec_res, dec_threads);
        if (*metrics)
            return run_metrics(met_in, met_ref, met_res, met_prec, met_net_grad,
                               met_threads);
        if (*render) {
            if (time_opt->count() > 0) ren.time = time_val;
            return run_render(ren);
        }
        if (*inspect) return run_inspect(ins_in);
    } catch (const CLI::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const nvc::ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
