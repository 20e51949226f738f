#include "nvc/renderer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <sstream>
#include <string>
#include <thread>

#include "nvc/errors.hpp"
#include "nvc/field_net.hpp"

namespace nvc {

namespace {

Vec3 operator-(const Vec3& a, const Vec3& b) {
    return {a[0] - b[0], a[1] - b[1], a[2] - b[2]};
}
Vec3 operator+(const Vec3& a, const Vec3& b) {
    return {a[0] + b[0], a[1] + b[1], a[2] + b[2]};
}
Vec3 operator*(double s, const Vec3& a) { return {s * a[0], s * a[1], s * a[2]}; }
double dot(const Vec3& a, const Vec3& b) {
    return a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
}
Vec3 cross(const Vec3& a, const Vec3& b) {
    return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2],
            a[0] * b[1] - a[1] * b[0]};
}
double norm(const Vec3& a) { return std::sqrt(dot(a, a)); }
Vec3 normalized(const Vec3& a) {
    const double n = norm(a);
    return {a[0] / n, a[1] / n, a[2] / n};
}

struct CameraFrame {
    Vec3 forward, right, up;
    double tan_half, aspect;
};

CameraFrame make_frame(const Camera& cam) {
    if (cam.width < 1 || cam.height < 1)
        throw ConfigError("image dimensions must be positive");
    if (!(cam.fov_deg > 0.0 && cam.fov_deg < 180.0))
        throw ConfigError("vertical fov must be in (0, 180) degrees");
    const Vec3 view = cam.look_at - cam.eye;
    if (norm(view) == 0.0) throw ConfigError("camera eye and look-at coincide");
    CameraFrame fr;
    fr.forward = normalized(view);
    const Vec3 r = cross(fr.forward, cam.up);
    if (norm(r) < 1e-12) throw ConfigError("camera up is parallel to the view direction");
    fr.right = normalized(r);
    fr.up = cross(fr.right, fr.forward);
    fr.tan_half = std::tan(cam.fov_deg * 0.5 * std::numbers::pi / 180.0);
    fr.aspect = static_cast<double>(cam.width) / cam.height;
    return fr;
}

Vec3 pixel_ray(const CameraFrame& fr, const Camera& cam, int px, int py) {
    const double nx = (2.0 * (px + 0.5) / cam.width - 1.0) * fr.aspect * fr.tan_half;
    const double ny = (1.0 - 2.0 * (py + 0.5) / cam.height) * fr.tan_half;
    return normalized(fr.forward + nx * fr.right + ny * fr.up);
}

// slab intersection with [-1,1]^3; false when the ray misses
bool box_range(const Vec3& origin, const Vec3& dir, double& t0, double& t1) {
    t0 = 0.0;
    t1 = std::numeric_limits<double>::infinity();
    for (int a = 0; a < 3; ++a) {
        if (dir[a] == 0.0) {
            if (origin[a] < -1.0 || origin[a] > 1.0) return false;
            continue;
        }
        double lo = (-1.0 - origin[a]) / dir[a];
        double hi = (1.0 - origin[a]) / dir[a];
        if (lo > hi) std::swap(lo, hi);
        t0 = std::max(t0, lo);
        t1 = std::min(t1, hi);
    }
    return t0 < t1;
}

constexpr double kStepRef = 0.01;
constexpr double kEarlyExit = 0.99;
constexpr double kGradEps = 1e-8;

// One field sample: raw value, and optionally a gradient for shading.
struct FieldSample {
    double value = 0.0;
    bool has_grad = false;
    Vec3 grad{0.0, 0.0, 0.0};
};

template <class FieldFn>
Rgba march_ray(const Vec3& origin, const Vec3& dir, FieldFn&& field,
               const TransferFunction& tf, double vmin, double vmax, double step,
               bool shaded, std::vector<double>* alpha_log) {
    Rgba out;  // premultiplied accumulation; out.a is accumulated opacity
    double t0, t1;
    if (!box_range(origin, dir, t0, t1)) return out;
    const Vec3 to_eye = {-dir[0], -dir[1], -dir[2]};  // headlight direction

    for (double t = t0 + 0.5 * step; t < t1; t += step) {
        const Vec3 pos = origin + t * dir;
        FieldSample s = field(pos, shaded);
        const double u =
            std::clamp((s.value - vmin) / (vmax - vmin), 0.0, 1.0);
        Rgba c = tf.sample(u);
        const double alpha = 1.0 - std::pow(1.0 - c.a, step / kStepRef);

        if (shaded && s.has_grad) {
            const double glen = norm(s.grad);
            if (glen >= kGradEps) {
                const Vec3 n = (-1.0 / glen) * s.grad;
                const double diffuse = std::max(0.0, dot(n, to_eye));
                // Blinn-Phong with the half vector equal to the light direction
                const double spec = 0.4 * std::pow(diffuse, 32.0);
                const double shade = 0.2 + 0.8 * diffuse;
                c.r = c.r * shade + spec;
                c.g = c.g * shade + spec;
                c.b = c.b * shade + spec;
            }
        }

        const double w = (1.0 - out.a) * alpha;
        out.r += w * c.r;
        out.g += w * c.g;
        out.b += w * c.b;
        out.a += w;
        if (alpha_log) alpha_log->push_back(out.a);
        if (out.a > kEarlyExit) break;
    }
    return out;
}

template <class MakeFieldFn>
Image render_image(const Camera& cam, const TransferFunction& tf, double vmin,
                   double vmax, double step, bool shaded, int threads,
                   MakeFieldFn&& make_field) {
    if (step <= 0.0) throw ConfigError("step must be positive");
    tf.validate();
    const CameraFrame fr = make_frame(cam);
    Image img(cam.width, cam.height);

    int n_threads = threads > 0 ? threads
                                : static_cast<int>(std::thread::hardware_concurrency());
    if (n_threads < 1) n_threads = 1;
    n_threads = std::min(n_threads, cam.height);

    auto worker = [&](int row_lo, int row_hi) {
        auto field = make_field();  // per-thread sampler state
        for (int py = row_lo; py < row_hi; ++py)
            for (int px = 0; px < cam.width; ++px) {
                const Vec3 dir = pixel_ray(fr, cam, px, py);
                const Rgba c = march_ray(cam.eye, dir, field, tf, vmin, vmax, step,
                                         shaded, nullptr);
                const std::size_t o =
                    (static_cast<std::size_t>(py) * cam.width + px) * 3;
                img.rgb[o + 0] = static_cast<std::uint8_t>(
                    std::clamp(c.r, 0.0, 1.0) * 255.0 + 0.5);
                img.rgb[o + 1] = static_cast<std::uint8_t>(
                    std::clamp(c.g, 0.0, 1.0) * 255.0 + 0.5);
                img.rgb[o + 2] = static_cast<std::uint8_t>(
                    std::clamp(c.b, 0.0, 1.0) * 255.0 + 0.5);
            }
    };
    if (n_threads == 1) {
        worker(0, cam.height);
    } else {
        std::vector<std::thread> pool;
        const int chunk = (cam.height + n_threads - 1) / n_threads;
        for (int t = 0; t < n_threads; ++t) {
            const int lo = chunk * t;
            const int hi = std::min(cam.height, lo + chunk);
            if (lo < hi) pool.emplace_back(worker, lo, hi);
        }
        for (auto& th : pool) th.join();
    }
    return img;
}

// Builds the per-thread neural sampler closure.
auto neural_field_factory(const Parameters& params, const QuantizedModel& qm,
                          std::optional<double> time) {
    const int d = qm.arch.dims;
    if (d == 4 && !time)
        throw ConfigError("a 4D model requires a time value to render");
    if (d == 3 && time) throw ConfigError("a 3D model does not take a time value");
    const double vmin = qm.vmin, vmax = qm.vmax;
    const double t = time.value_or(0.0);
    return [&params, d, t, vmin, vmax]() {
        return [ev = Evaluator(params), d, t, vmin,
                vmax](const Vec3& pos, bool want_grad) mutable {
            std::array<double, 4> x{pos[0], pos[1], pos[2], t};
            FieldSample s;
            if (want_grad) {
                std::array<double, 4> g{};
                s.value = denormalize_value(
                    ev.value_and_grad(std::span<const double>(x).first(d),
                                      std::span<double>(g).first(d)),
                    vmin, vmax);
                s.has_grad = true;
                s.grad = {g[0], g[1], g[2]};
            } else {
                s.value = denormalize_value(
                    ev.value(std::span<const double>(x).first(d)), vmin, vmax);
            }
            return s;
        };
    };
}

}  // namespace

Rgba TransferFunction::sample(double u) const {
    u = std::clamp(u, 0.0, 1.0);
    for (std::size_t i = 1; i < points.size(); ++i) {
        if (u <= points[i].pos) {
            const auto& a = points[i - 1];
            const auto& b = points[i];
            const double w = (u - a.pos) / (b.pos - a.pos);
            return {a.color.r + w * (b.color.r - a.color.r),
                    a.color.g + w * (b.color.g - a.color.g),
                    a.color.b + w * (b.color.b - a.color.b),
                    a.color.a + w * (b.color.a - a.color.a)};
        }
    }
    return points.back().color;
}

void TransferFunction::validate() const {
    if (points.size() < 2)
        throw ConfigError("transfer function needs at least 2 control points");
    if (points.front().pos != 0.0 || points.back().pos != 1.0)
        throw ConfigError("transfer function must start at 0 and end at 1");
    for (std::size_t i = 0; i < points.size(); ++i) {
        if (i > 0 && !(points[i].pos > points[i - 1].pos))
            throw ConfigError("transfer function positions must strictly increase");
        const auto& c = points[i].color;
        for (double v : {c.r, c.g, c.b, c.a})
            if (v < 0.0 || v > 1.0)
                throw ConfigError("transfer function components must be in [0, 1]");
    }
}

TransferFunction TransferFunction::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open transfer function: " + path.string());
    TransferFunction tf;
    std::string line;
    while (std::getline(in, line)) {
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        std::istringstream ls(line);
        Point p;
        if (ls >> p.pos >> p.color.r >> p.color.g >> p.color.b >> p.color.a)
            tf.points.push_back(p);
        else if (!line.empty() && line.find_first_not_of(" \t\r") != std::string::npos)
            throw FormatError("malformed transfer function line: " + line);
    }
    tf.validate();
    return tf;
}

void write_image(const Image& img, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("cannot open image file: " + path.string());
    out << "P6\n" << img.width << ' ' << img.height << "\n255\n";
    out.write(reinterpret_cast<const char*>(img.rgb.data()),
              static_cast<std::streamsize>(img.rgb.size()));
    if (!out) throw FormatError("image write failed: " + path.string());
}

Image read_image_ppm(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open image file: " + path.string());
    std::string magic;
    int w, h, maxval;
    in >> magic >> w >> h >> maxval;
    if (magic != "P6" || maxval != 255)
        throw FormatError("not a P6/255 PPM: " + path.string());
    in.get();  // single whitespace after the header
    Image img(w, h);
    in.read(reinterpret_cast<char*>(img.rgb.data()),
            static_cast<std::streamsize>(img.rgb.size()));
    if (!in) throw FormatError("short read on image: " + path.string());
    return img;
}

double trilinear_sample(const Volume& v, const Vec3& coord) {
    if (v.dims() != 3) throw LogicError("trilinear_sample expects a 3D volume");
    double w[3];
    std::size_t i0[3], i1[3];
    for (int a = 0; a < 3; ++a) {
        const std::uint32_t s = v.resolution[a];
        if (s == 1) {
            i0[a] = i1[a] = 0;
            w[a] = 0.0;
            continue;
        }
        double f = (std::clamp(coord[a], -1.0, 1.0) + 1.0) * 0.5 * (s - 1);
        const double fl = std::floor(f);
        i0[a] = static_cast<std::size_t>(fl);
        if (i0[a] >= s - 1) i0[a] = s - 2;
        i1[a] = i0[a] + 1;
        w[a] = f - static_cast<double>(i0[a]);
    }
    const std::size_t sy = v.resolution[1], sz = v.resolution[2];
    auto at = [&](std::size_t x, std::size_t y, std::size_t z) {
        return static_cast<double>(v.values[(x * sy + y) * sz + z]);
    };
    double out = 0.0;
    for (int cx = 0; cx < 2; ++cx)
        for (int cy = 0; cy < 2; ++cy)
            for (int cz = 0; cz < 2; ++cz) {
                const double weight = (cx ? w[0] : 1.0 - w[0]) *
                                      (cy ? w[1] : 1.0 - w[1]) *
                                      (cz ? w[2] : 1.0 - w[2]);
                out += weight * at(cx ? i1[0] : i0[0], cy ? i1[1] : i0[1],
                                   cz ? i1[2] : i0[2]);
            }
    return out;
}

Image raymarch_neural(const QuantizedModel& qm, const Camera& cam,
                      const TransferFunction& tf, const RenderOptions& opts) {
    const Parameters params = dequantize_model(qm);
    auto factory = neural_field_factory(params, qm, opts.time);
    return render_image(cam, tf, qm.vmin, qm.vmax, opts.step, opts.shaded,
                        opts.threads, factory);
}

Image raymarch_grid(const Volume& volume, const Camera& cam,
                    const TransferFunction& tf, double step, int threads) {
    if (volume.dims() != 3)
        throw ConfigError("grid raymarching expects a 3D volume");
    auto factory = [&volume]() {
        return [&volume](const Vec3& pos, bool /*want_grad*/) {
            FieldSample s;
            s.value = trilinear_sample(volume, pos);
            return s;
        };
    };
    return render_image(cam, tf, volume.vmin, volume.vmax, step, false, threads,
                        factory);
}

std::vector<double> trace_alpha(const QuantizedModel& qm, const Camera& cam, int px,
                                int py, const TransferFunction& tf,
                                const RenderOptions& opts) {
    tf.validate();
    const Parameters params = dequantize_model(qm);
    auto factory = neural_field_factory(params, qm, opts.time);
    auto field = factory();
    const CameraFrame fr = make_frame(cam);
    const Vec3 dir = pixel_ray(fr, cam, px, py);
    std::vector<double> alphas;
    march_ray(cam.eye, dir, field, tf, qm.vmin, qm.vmax, opts.step, opts.shaded,
              &alphas);
    return alphas;
}

}  // namespace nvc
