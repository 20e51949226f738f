#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "nvc/quantizer.hpp"
#include "nvc/volume.hpp"

namespace nvc {

using Vec3 = std::array<double, 3>;

struct Camera {
    Vec3 eye{0.0, 0.0, 3.0};
    Vec3 look_at{0.0, 0.0, 0.0};
    Vec3 up{0.0, 1.0, 0.0};
    double fov_deg = 45.0;
    int width = 256;
    int height = 256;
};

struct Rgba {
    double r = 0.0, g = 0.0, b = 0.0, a = 0.0;
};

// Piecewise-linear transfer function over normalized value position in [0, 1].
// Positions strictly increase, first must be 0 and last 1, components in [0, 1].
struct TransferFunction {
    struct Point {
        double pos;
        Rgba color;
    };
    std::vector<Point> points;

    Rgba sample(double u) const;
    void validate() const;

    // Plain text, one "position r g b a" line per control point; '#' comments.
    static TransferFunction load(const std::filesystem::path& path);
};

struct Image {
    int width = 0, height = 0;
    std::vector<std::uint8_t> rgb;  // row-major, top-to-bottom

    Image() = default;
    Image(int w, int h) : width(w), height(h), rgb(static_cast<std::size_t>(w) * h * 3) {}
};

// Binary PPM "P6".
void write_image(const Image& img, const std::filesystem::path& path);
Image read_image_ppm(const std::filesystem::path& path);  // test helper

struct RenderOptions {
    double step = 0.005;
    bool shaded = false;
    std::optional<double> time;  // required iff the model is 4D
    int threads = 0;
};

// Marches camera rays through the [-1,1]^3 box evaluating the network at each
// sample (random access, no grid reconstruction). Front-to-back compositing
// with opacity correction (reference step 0.01), early termination at A > 0.99.
// Shading uses the analytic network gradient with a directional headlight.
Image raymarch_neural(const QuantizedModel& qm, const Camera& cam,
                      const TransferFunction& tf, const RenderOptions& opts);

// Same compositing pipeline over trilinear interpolation of a sampled grid;
// the oracle renderer for comparisons against raymarch_neural.
Image raymarch_grid(const Volume& volume, const Camera& cam,
                    const TransferFunction& tf, double step, int threads = 0);

// Accumulated opacity after every sample along one pixel's ray (test hook).
std::vector<double> trace_alpha(const QuantizedModel& qm, const Camera& cam, int px,
                                int py, const TransferFunction& tf,
                                const RenderOptions& opts);

// Trilinear sample of a 3D volume at a normalized coordinate, edge-clamped.
double trilinear_sample(const Volume& v, const Vec3& coord);

}  // namespace nvc
