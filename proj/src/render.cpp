#include "vlx/render.hpp"

#include <algorithm>
#include <cmath>

#include "vlx/errors.hpp"

namespace vlx {

namespace {

struct Rgb {
    double r, g, b;
};

// t=0 blue, t=0.5 white, t=1 red.
Rgb diverging(double t) {
    if (t <= 0.5) {
        const double u = t / 0.5;
        return {255.0 * u, 255.0 * u, 255.0};
    }
    const double u = (t - 0.5) / 0.5;
    return {255.0, 255.0 * (1.0 - u), 255.0 * (1.0 - u)};
}

// Classic hot ramp from black through red and yellow to white.
Rgb black_hot(double t) {
    auto seg = [](double x) { return std::clamp(x, 0.0, 1.0) * 255.0; };
    return {seg(3.0 * t), seg(3.0 * t - 1.0), seg(3.0 * t - 2.0)};
}

std::uint8_t to_byte(double v) {
    return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 255.0)));
}

}  // namespace

void RenderSpec::validate() const {
    if (!(alpha >= 0.0 && alpha <= 1.0)) {
        throw Error(ErrorCode::Parameter, "render: alpha outside [0,1]");
    }
    if (colormap == Colormap::SignedDiverging && normalization != Normalization::SymmetricMax) {
        throw Error(ErrorCode::Parameter,
                    "render: the signed diverging colormap requires symmetric-max normalization");
    }
}

RgbImage render_heatmap(const std::vector<double>& values, std::size_t side,
                        const std::vector<double>& base_pixels, const RenderSpec& spec) {
    spec.validate();
    if (values.size() != side * side || base_pixels.size() != values.size()) {
        throw Error(ErrorCode::Dimension, "render: map/base size mismatch");
    }

    double lo = values[0], hi = values[0], max_abs = 0.0;
    for (double v : values) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
        max_abs = std::max(max_abs, std::fabs(v));
    }

    RgbImage out;
    out.width = out.height = side;
    out.pixels.resize(side * side * 3);
    for (std::size_t i = 0; i < values.size(); ++i) {
        double t = 0.5;  // defined degenerate case: constant map -> mid color
        if (spec.normalization == Normalization::SymmetricMax) {
            if (max_abs > 0.0) t = (values[i] + max_abs) / (2.0 * max_abs);
        } else {
            if (hi > lo) t = (values[i] - lo) / (hi - lo);
        }
        const Rgb heat =
            spec.colormap == Colormap::SignedDiverging ? diverging(t) : black_hot(t);
        const double base = std::clamp(base_pixels[i], 0.0, 1.0) * 255.0;
        out.pixels[3 * i] = to_byte(spec.alpha * heat.r + (1.0 - spec.alpha) * base);
        out.pixels[3 * i + 1] = to_byte(spec.alpha * heat.g + (1.0 - spec.alpha) * base);
        out.pixels[3 * i + 2] = to_byte(spec.alpha * heat.b + (1.0 - spec.alpha) * base);
    }
    return out;
}

}  // namespace vlx
