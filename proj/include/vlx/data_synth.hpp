#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "vlx/types.hpp"

namespace vlx {

enum class ShapeKind { Circle, Square, Triangle, Cross };

inline constexpr std::array<ShapeKind, 4> kAllShapes = {ShapeKind::Circle, ShapeKind::Square,
                                                        ShapeKind::Triangle, ShapeKind::Cross};

const char* shape_name(ShapeKind kind);
ShapeKind shape_from_name(const std::string& name);

// Geometry plus the caption words derived from it. `size` is the extent from
// the center in pixels; every shape fits inside center +/- size.
struct ShapeSpec {
    ShapeKind shape = ShapeKind::Circle;
    std::size_t row = 0;
    std::size_t col = 0;
    std::size_t size = 0;
    double intensity = 1.0;
    std::string size_word;
    std::string location_word;
};

struct DatasetConfig {
    std::size_t n = 2000;
    std::size_t image_side = 64;
    std::size_t n_classes = 4;  // prefix of kAllShapes
    double background_level = 0.2;
    double noise_sigma = 0.05;

    std::size_t min_shape_size() const;
    std::size_t max_shape_size() const;
    void validate() const;
};

struct Corpus {
    DatasetConfig config;
    std::vector<std::string> class_names;
    std::vector<Sample> samples;
    std::vector<ShapeSpec> specs;  // parallel to samples
    std::vector<std::string> vocab;
    double mean_pixel = 0.0;
};

// Caption template: "<size-word> <shape> at the <location-word>".
std::string render_caption(const ShapeSpec& spec);
std::string location_word_for(std::size_t row, std::size_t col, std::size_t side);
std::string size_word_for(std::size_t size, std::size_t side);

// Paints the shape at its intensity and sets mask bits on painted pixels.
void paint_shape(std::vector<double>& pixels, std::vector<std::uint8_t>& mask, std::size_t side,
                 const ShapeSpec& spec);

// Draws a spec uniformly (class, size, center) with caption words derived
// from the geometry. Exposed for composing multi-shape test images.
ShapeSpec sample_shape_spec(const DatasetConfig& config, std::uint64_t sample_seed);

// Deterministic corpus: shapes on Gaussian background noise, quantized to
// 8-bit levels so the in-memory corpus matches its on-disk PGM form exactly.
Corpus generate_dataset(const DatasetConfig& config, std::uint64_t seed);

struct PromptCollection {
    std::vector<PromptSet> descriptive;  // k templated sentences per class
    std::vector<PromptSet> labels;       // bare class label as the only prompt
};

// Template pool: 2 size words x 5 location words = 10 sentences per class,
// canonical sentence first. k beyond the pool is a parameter error.
PromptCollection build_prompt_sets(const std::vector<std::string>& classes,
                                   std::size_t k_prompts = 10, std::uint64_t seed = 0);

// Directory layout: img_<idx>.pgm, mask_<idx>.pgm, corpus.json manifest.
void save_corpus(const Corpus& corpus, const std::filesystem::path& dir);
Corpus load_corpus(const std::filesystem::path& dir);

}  // namespace vlx
