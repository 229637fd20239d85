#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vlx/errors.hpp"

namespace vlx {

// Grayscale square image with pixels in [0,1], plus an optional object mask
// and class id carried through dataset plumbing.
struct ImageInput {
    std::size_t side = 0;
    std::vector<double> pixels;             // side*side, row-major
    std::vector<std::uint8_t> object_mask;  // empty, or side*side of {0,1}
    int class_id = -1;

    void validate() const {
        if (side == 0 || pixels.size() != side * side) {
            throw Error(ErrorCode::Input, "image: expected " + std::to_string(side * side) +
                                              " pixels, got " + std::to_string(pixels.size()));
        }
        for (double p : pixels) {
            if (!(p >= 0.0 && p <= 1.0)) {
                throw Error(ErrorCode::Input, "image: pixel out of [0,1] range");
            }
        }
        if (!object_mask.empty() && object_mask.size() != pixels.size()) {
            throw Error(ErrorCode::Input, "image: mask shape differs from pixels");
        }
    }
};

struct TextInput {
    std::string raw;
    std::vector<std::size_t> tokens;  // indices into the model vocab; 0 = UNK
};

struct PromptSet {
    std::string label;
    std::vector<std::string> prompts;
};

struct Sample {
    ImageInput image;
    std::string caption;
    int class_id = -1;
};

}  // namespace vlx
