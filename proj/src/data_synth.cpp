#include "vlx/data_synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include <json.hpp>

#include "vlx/image_io.hpp"
#include "vlx/model.hpp"
#include "vlx/rng.hpp"

namespace vlx {

namespace {

using nlohmann::json;

constexpr const char* kSizeWords[2] = {"small", "large"};
constexpr const char* kLocationWords[5] = {"center", "upper left", "upper right", "lower left",
                                           "lower right"};

std::uint64_t per_index_seed(std::uint64_t seed, std::uint64_t index) {
    return seed + 0x9e3779b97f4a7c15ull * (index + 1);
}

double quantize8(double v) {
    const double clipped = std::clamp(v, 0.0, 1.0);
    return std::round(clipped * 255.0) / 255.0;
}

}  // namespace

const char* shape_name(ShapeKind kind) {
    switch (kind) {
        case ShapeKind::Circle: return "circle";
        case ShapeKind::Square: return "square";
        case ShapeKind::Triangle: return "triangle";
        case ShapeKind::Cross: return "cross";
    }
    return "circle";
}

ShapeKind shape_from_name(const std::string& name) {
    for (ShapeKind k : kAllShapes) {
        if (name == shape_name(k)) return k;
    }
    throw Error(ErrorCode::Input, "unknown shape '" + name + "'");
}

std::size_t DatasetConfig::min_shape_size() const {
    return std::max<std::size_t>(3, image_side / 12);
}

std::size_t DatasetConfig::max_shape_size() const {
    return image_side / 4 + image_side / 12;
}

void DatasetConfig::validate() const {
    if (n < 1) throw Error(ErrorCode::Config, "dataset: n must be >= 1");
    if (n_classes < 1 || n_classes > kAllShapes.size()) {
        throw Error(ErrorCode::Config, "dataset: class count must be in [1, 4]");
    }
    if (max_shape_size() >= image_side || 2 * max_shape_size() + 1 > image_side ||
        min_shape_size() > max_shape_size()) {
        throw Error(ErrorCode::Config, "dataset: image side " + std::to_string(image_side) +
                                           " cannot place shapes of size " +
                                           std::to_string(min_shape_size()) + ".." +
                                           std::to_string(max_shape_size()));
    }
    if (noise_sigma < 0.0) throw Error(ErrorCode::Config, "dataset: noise sigma must be >= 0");
    if (!(background_level >= 0.0 && background_level <= 1.0)) {
        throw Error(ErrorCode::Config, "dataset: background level must be in [0,1]");
    }
}

std::string location_word_for(std::size_t row, std::size_t col, std::size_t side) {
    const double half = (double(side) - 1.0) / 2.0;
    const double box = double(side) / 8.0;
    if (std::fabs(double(row) - half) <= box && std::fabs(double(col) - half) <= box) {
        return "center";
    }
    const bool upper = double(row) < half;
    const bool left = double(col) < half;
    if (upper) return left ? "upper left" : "upper right";
    return left ? "lower left" : "lower right";
}

std::string size_word_for(std::size_t size, std::size_t side) {
    return size >= side / 4 ? "large" : "small";
}

std::string render_caption(const ShapeSpec& spec) {
    return spec.size_word + " " + shape_name(spec.shape) + " at the " + spec.location_word;
}

void paint_shape(std::vector<double>& pixels, std::vector<std::uint8_t>& mask, std::size_t side,
                 const ShapeSpec& spec) {
    if (pixels.size() != side * side) {
        throw Error(ErrorCode::Input, "paint_shape: pixel buffer does not match side");
    }
    if (spec.row < spec.size || spec.col < spec.size || spec.row + spec.size >= side ||
        spec.col + spec.size >= side) {
        throw Error(ErrorCode::Input, "paint_shape: shape extends outside the image");
    }
    if (mask.size() != pixels.size()) mask.assign(pixels.size(), 0);

    const std::int64_t r0 = static_cast<std::int64_t>(spec.row);
    const std::int64_t c0 = static_cast<std::int64_t>(spec.col);
    const std::int64_t s = static_cast<std::int64_t>(spec.size);
    auto put = [&](std::int64_t r, std::int64_t c) {
        const std::size_t idx = std::size_t(r) * side + std::size_t(c);
        pixels[idx] = spec.intensity;
        mask[idx] = 1;
    };

    switch (spec.shape) {
        case ShapeKind::Circle: {
            for (std::int64_t dr = -s; dr <= s; ++dr) {
                for (std::int64_t dc = -s; dc <= s; ++dc) {
                    if (dr * dr + dc * dc <= s * s) put(r0 + dr, c0 + dc);
                }
            }
            break;
        }
        case ShapeKind::Square: {
            for (std::int64_t dr = -s; dr <= s; ++dr) {
                for (std::int64_t dc = -s; dc <= s; ++dc) put(r0 + dr, c0 + dc);
            }
            break;
        }
        case ShapeKind::Triangle: {
            // Apex at the top, full-width base at the bottom.
            for (std::int64_t dr = -s; dr <= s; ++dr) {
                const double t = double(dr + s) / double(2 * s);
                const std::int64_t half_width = static_cast<std::int64_t>(std::floor(t * double(s)));
                for (std::int64_t dc = -half_width; dc <= half_width; ++dc) put(r0 + dr, c0 + dc);
            }
            break;
        }
        case ShapeKind::Cross: {
            const std::int64_t half_thick = std::max<std::int64_t>(1, s / 3);
            for (std::int64_t dr = -s; dr <= s; ++dr) {
                for (std::int64_t dc = -half_thick; dc <= half_thick; ++dc) put(r0 + dr, c0 + dc);
            }
            for (std::int64_t dc = -s; dc <= s; ++dc) {
                for (std::int64_t dr = -half_thick; dr <= half_thick; ++dr) put(r0 + dr, c0 + dc);
            }
            break;
        }
    }
}

ShapeSpec sample_shape_spec(const DatasetConfig& config, std::uint64_t sample_seed) {
    Rng rng(sample_seed);
    ShapeSpec spec;
    spec.shape = kAllShapes[static_cast<std::size_t>(
        rng.uniform_int(0, static_cast<std::int64_t>(config.n_classes) - 1))];
    spec.size = static_cast<std::size_t>(rng.uniform_int(
        static_cast<std::int64_t>(config.min_shape_size()),
        static_cast<std::int64_t>(config.max_shape_size())));
    const std::int64_t lo = static_cast<std::int64_t>(spec.size);
    const std::int64_t hi = static_cast<std::int64_t>(config.image_side - 1 - spec.size);
    spec.row = static_cast<std::size_t>(rng.uniform_int(lo, hi));
    spec.col = static_cast<std::size_t>(rng.uniform_int(lo, hi));
    spec.intensity = rng.uniform(0.65, 1.0);
    spec.size_word = size_word_for(spec.size, config.image_side);
    spec.location_word = location_word_for(spec.row, spec.col, config.image_side);
    return spec;
}

Corpus generate_dataset(const DatasetConfig& config, std::uint64_t seed) {
    config.validate();
    Corpus corpus;
    corpus.config = config;
    for (std::size_t k = 0; k < config.n_classes; ++k) {
        corpus.class_names.push_back(shape_name(kAllShapes[k]));
    }

    const std::size_t side = config.image_side;
    double pixel_sum = 0.0;
    std::set<std::string> tokens;
    for (std::size_t i = 0; i < config.n; ++i) {
        const std::uint64_t sample_seed = per_index_seed(seed, i);
        ShapeSpec spec = sample_shape_spec(config, sample_seed);

        // Background noise drawn after the spec from the same per-sample
        // stream, so spec and pixels stay a pure function of (seed, index).
        Rng rng(sample_seed ^ 0xabcdef0123456789ull);
        Sample sample;
        sample.image.side = side;
        sample.image.pixels.resize(side * side);
        for (auto& p : sample.image.pixels) {
            p = config.background_level + rng.normal(0.0, config.noise_sigma);
        }
        paint_shape(sample.image.pixels, sample.image.object_mask, side, spec);
        for (auto& p : sample.image.pixels) {
            p = quantize8(p);
            pixel_sum += p;
        }
        sample.caption = render_caption(spec);
        sample.class_id = static_cast<int>(
            std::find(kAllShapes.begin(), kAllShapes.end(), spec.shape) - kAllShapes.begin());
        sample.image.class_id = sample.class_id;

        for (const std::string& w : {spec.size_word, std::string(shape_name(spec.shape)),
                                     std::string("at"), std::string("the")}) {
            tokens.insert(w);
        }
        // Location words are one or two tokens.
        std::string word;
        for (char c : spec.location_word + " ") {
            if (c == ' ') {
                if (!word.empty()) tokens.insert(word);
                word.clear();
            } else {
                word.push_back(c);
            }
        }

        corpus.samples.push_back(std::move(sample));
        corpus.specs.push_back(std::move(spec));
    }

    corpus.vocab.push_back(kUnkToken);
    corpus.vocab.insert(corpus.vocab.end(), tokens.begin(), tokens.end());
    corpus.mean_pixel = pixel_sum / double(config.n * side * side);
    return corpus;
}

PromptCollection build_prompt_sets(const std::vector<std::string>& classes,
                                   std::size_t k_prompts, std::uint64_t seed) {
    if (classes.empty()) throw Error(ErrorCode::Input, "prompts: no classes");
    constexpr std::size_t kPoolSize = 2 * 5;
    if (k_prompts < 1 || k_prompts > kPoolSize) {
        throw Error(ErrorCode::Parameter, "prompts: template pool has " +
                                              std::to_string(kPoolSize) + " entries, cannot pick " +
                                              std::to_string(k_prompts));
    }

    PromptCollection out;
    for (const auto& cls : classes) {
        std::vector<std::string> pool;
        for (const char* location : kLocationWords) {
            for (const char* size : kSizeWords) {
                pool.push_back(std::string(size) + " " + cls + " at the " + location);
            }
        }
        // Canonical sentence stays first; the tail order is seeded.
        if (k_prompts < pool.size()) {
            Rng rng(seed ^ Sha256::hash(cls)[0]);
            std::vector<std::string> tail(pool.begin() + 1, pool.end());
            rng.shuffle(tail);
            const std::string canonical = pool[0];
            pool.clear();
            pool.push_back(canonical);
            pool.insert(pool.end(), tail.begin(), tail.end());
        }
        pool.resize(k_prompts);
        out.descriptive.push_back({cls, pool});
        out.labels.push_back({cls, {cls}});
    }
    return out;
}

void save_corpus(const Corpus& corpus, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    json manifest;
    manifest["n"] = corpus.samples.size();
    manifest["side"] = corpus.config.image_side;
    manifest["classes"] = corpus.class_names;
    manifest["vocab"] = corpus.vocab;
    manifest["mean_pixel"] = corpus.mean_pixel;
    manifest["background_level"] = corpus.config.background_level;
    manifest["noise_sigma"] = corpus.config.noise_sigma;

    json samples = json::array();
    for (std::size_t i = 0; i < corpus.samples.size(); ++i) {
        const Sample& s = corpus.samples[i];
        const ShapeSpec& spec = corpus.specs[i];
        const std::string img_name = "img_" + std::to_string(i) + ".pgm";
        const std::string mask_name = "mask_" + std::to_string(i) + ".pgm";

        GrayImage img;
        img.width = img.height = s.image.side;
        img.pixels.resize(s.image.pixels.size());
        for (std::size_t p = 0; p < img.pixels.size(); ++p) {
            img.pixels[p] = static_cast<std::uint8_t>(std::lround(s.image.pixels[p] * 255.0));
        }
        write_pgm(dir / img_name, img);

        GrayImage mask;
        mask.width = mask.height = s.image.side;
        mask.pixels.resize(s.image.object_mask.size());
        for (std::size_t p = 0; p < mask.pixels.size(); ++p) {
            mask.pixels[p] = s.image.object_mask[p] ? 255 : 0;
        }
        write_pgm(dir / mask_name, mask);

        samples.push_back({{"index", i},
                           {"image", img_name},
                           {"mask", mask_name},
                           {"caption", s.caption},
                           {"class", s.class_id},
                           {"spec",
                            {{"shape", shape_name(spec.shape)},
                             {"row", spec.row},
                             {"col", spec.col},
                             {"size", spec.size},
                             {"intensity", spec.intensity},
                             {"size_word", spec.size_word},
                             {"location_word", spec.location_word}}}});
    }
    manifest["samples"] = std::move(samples);

    std::ofstream f(dir / "corpus.json", std::ios::trunc);
    if (!f) throw Error(ErrorCode::Io, "cannot write manifest in " + dir.string());
    f << manifest.dump(2) << "\n";
}

Corpus load_corpus(const std::filesystem::path& dir) {
    std::ifstream f(dir / "corpus.json");
    if (!f) throw Error(ErrorCode::Io, "cannot open manifest: " + (dir / "corpus.json").string());
    json manifest;
    try {
        f >> manifest;
    } catch (const json::exception& e) {
        throw Error(ErrorCode::Format, "corpus manifest: " + std::string(e.what()));
    }

    Corpus corpus;
    corpus.config.image_side = manifest.at("side").get<std::size_t>();
    corpus.config.n = manifest.at("n").get<std::size_t>();
    corpus.class_names = manifest.at("classes").get<std::vector<std::string>>();
    corpus.config.n_classes = corpus.class_names.size();
    corpus.vocab = manifest.at("vocab").get<std::vector<std::string>>();
    corpus.mean_pixel = manifest.at("mean_pixel").get<double>();
    if (manifest.contains("background_level")) {
        corpus.config.background_level = manifest["background_level"].get<double>();
    }
    if (manifest.contains("noise_sigma")) {
        corpus.config.noise_sigma = manifest["noise_sigma"].get<double>();
    }

    for (const auto& entry : manifest.at("samples")) {
        Sample s;
        const auto img = read_pgm(dir / entry.at("image").get<std::string>());
        if (img.width != corpus.config.image_side || img.height != corpus.config.image_side) {
            throw Error(ErrorCode::Format, "corpus: image size mismatch for sample " +
                                               entry.at("index").dump());
        }
        s.image.side = img.width;
        s.image.pixels.resize(img.pixels.size());
        for (std::size_t p = 0; p < img.pixels.size(); ++p) {
            s.image.pixels[p] = double(img.pixels[p]) / 255.0;
        }
        const auto mask = read_pgm(dir / entry.at("mask").get<std::string>());
        s.image.object_mask.resize(mask.pixels.size());
        for (std::size_t p = 0; p < mask.pixels.size(); ++p) {
            s.image.object_mask[p] = mask.pixels[p] ? 1 : 0;
        }
        s.caption = entry.at("caption").get<std::string>();
        s.class_id = entry.at("class").get<int>();
        s.image.class_id = s.class_id;

        ShapeSpec spec;
        const auto& j = entry.at("spec");
        spec.shape = shape_from_name(j.at("shape").get<std::string>());
        spec.row = j.at("row").get<std::size_t>();
        spec.col = j.at("col").get<std::size_t>();
        spec.size = j.at("size").get<std::size_t>();
        spec.intensity = j.at("intensity").get<double>();
        spec.size_word = j.at("size_word").get<std::string>();
        spec.location_word = j.at("location_word").get<std::string>();

        corpus.samples.push_back(std::move(s));
        corpus.specs.push_back(std::move(spec));
    }
    return corpus;
}

}  // namespace vlx
