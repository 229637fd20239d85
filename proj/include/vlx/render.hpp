#pragma once

#include <vector>

#include "vlx/image_io.hpp"

namespace vlx {

enum class Colormap {
    SignedDiverging,  // blue-white-red
    Magnitude,        // black-hot
};

enum class Normalization { SymmetricMax, MinMax };

struct RenderSpec {
    Colormap colormap = Colormap::SignedDiverging;
    double alpha = 0.6;  // heat opacity over the grayscale base
    Normalization normalization = Normalization::SymmetricMax;

    void validate() const;
};

// Maps values through the colormap and blends over the grayscale base image.
// Symmetric-max sends [-max|v|, +max|v|] across the diverging ramp; a
// constant map renders as the uniform mid color.
RgbImage render_heatmap(const std::vector<double>& values, std::size_t side,
                        const std::vector<double>& base_pixels, const RenderSpec& spec);

}  // namespace vlx
