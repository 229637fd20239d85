#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "vlx/data_synth.hpp"
#include "vlx/image_io.hpp"
#include "vlx/model.hpp"

using namespace vlx;

namespace {

struct TempDir {
    std::filesystem::path path;
    explicit TempDir(const std::string& name)
        : path(std::filesystem::temp_directory_path() / name) {
        std::filesystem::remove_all(path);
        std::filesystem::create_directories(path);
    }
    ~TempDir() { std::filesystem::remove_all(path); }
};

DatasetConfig small_config(std::size_t n = 16) {
    DatasetConfig cfg;
    cfg.n = n;
    cfg.image_side = 48;
    return cfg;
}

}  // namespace

TEST_CASE("generation is bitwise deterministic") {
    auto a = generate_dataset(small_config(1), 123);
    auto b = generate_dataset(small_config(1), 123);
    CHECK(a.samples[0].image.pixels == b.samples[0].image.pixels);
    CHECK(a.samples[0].image.object_mask == b.samples[0].image.object_mask);
    CHECK(a.samples[0].caption == b.samples[0].caption);
    CHECK(a.vocab == b.vocab);

    auto c = generate_dataset(small_config(1), 124);
    CHECK(a.samples[0].image.pixels != c.samples[0].image.pixels);
}

TEST_CASE("masks stay in bounds and meet the constructive pixel bound") {
    auto corpus = generate_dataset(small_config(64), 7);
    const double min_size = double(corpus.config.min_shape_size());
    const double bound = 3.14159265358979 * min_size * min_size / 8.0;
    for (std::size_t i = 0; i < corpus.samples.size(); ++i) {
        const auto& mask = corpus.samples[i].image.object_mask;
        REQUIRE(!mask.empty());
        std::size_t count = 0;
        for (auto m : mask) count += m ? 1 : 0;
        CAPTURE(i);
        CHECK(double(count) >= bound);
        // fully inside bounds: border pixels untouched by construction
        const auto& spec = corpus.specs[i];
        CHECK(spec.row >= spec.size);
        CHECK(spec.col >= spec.size);
        CHECK(spec.row + spec.size < corpus.config.image_side);
        CHECK(spec.col + spec.size < corpus.config.image_side);
    }
}

TEST_CASE("class frequencies over n=2000 are within 5% of uniform") {
    DatasetConfig cfg;  // defaults: n=2000, 4 classes, side 64
    auto corpus = generate_dataset(cfg, 424242);
    std::array<std::size_t, 4> counts{};
    for (const auto& s : corpus.samples) counts[std::size_t(s.class_id)]++;
    for (std::size_t k = 0; k < 4; ++k) {
        CHECK(std::fabs(double(counts[k]) / 2000.0 - 0.25) <= 0.05);
    }
}

TEST_CASE("caption faithfulness: words match the painted geometry") {
    auto corpus = generate_dataset(small_config(48), 99);
    for (std::size_t i = 0; i < corpus.samples.size(); ++i) {
        const auto& spec = corpus.specs[i];
        const auto& caption = corpus.samples[i].caption;
        CHECK(caption == spec.size_word + " " + shape_name(spec.shape) + " at the " +
                             spec.location_word);
        CHECK(spec.size_word == size_word_for(spec.size, corpus.config.image_side));
        CHECK(spec.location_word ==
              location_word_for(spec.row, spec.col, corpus.config.image_side));
        // size threshold stated by the contract
        if (spec.size >= corpus.config.image_side / 4) CHECK(spec.size_word == "large");
        if (spec.size < corpus.config.image_side / 4) CHECK(spec.size_word == "small");
    }
}

TEST_CASE("vocabulary closure: captions and prompts have zero UNK hits") {
    auto corpus = generate_dataset(small_config(32), 5);
    CHECK(corpus.vocab[0] == kUnkToken);
    for (const auto& s : corpus.samples) {
        for (std::size_t t : tokenize(s.caption, corpus.vocab).tokens) CHECK(t != 0);
    }
    auto prompts = build_prompt_sets(corpus.class_names, 10, 1);
    for (const auto& set : prompts.descriptive) {
        for (const auto& p : set.prompts) {
            for (std::size_t t : tokenize(p, corpus.vocab).tokens) CHECK(t != 0);
        }
    }
    for (const auto& set : prompts.labels) {
        for (const auto& p : set.prompts) {
            for (std::size_t t : tokenize(p, corpus.vocab).tokens) CHECK(t != 0);
        }
    }
}

TEST_CASE("prompt sets: canonical single, distinct ten, pool limit") {
    const std::vector<std::string> classes = {"circle", "square"};
    auto single = build_prompt_sets(classes, 1, 0);
    CHECK(single.descriptive[0].prompts ==
          std::vector<std::string>{"small circle at the center"});
    CHECK(single.descriptive[1].prompts ==
          std::vector<std::string>{"small square at the center"});

    auto full = build_prompt_sets(classes, 10, 3);
    for (const auto& set : full.descriptive) {
        CHECK(set.prompts.size() == 10);
        std::set<std::string> distinct(set.prompts.begin(), set.prompts.end());
        CHECK(distinct.size() == 10);
        for (const auto& p : set.prompts) {
            CHECK(p.find(set.label) != std::string::npos);
        }
    }
    CHECK(full.labels[0].prompts == std::vector<std::string>{"circle"});

    CHECK_THROWS_AS(build_prompt_sets(classes, 11, 0), Error);
    CHECK_THROWS_AS(build_prompt_sets({}, 10, 0), Error);
}

TEST_CASE("unplaceable shapes are a config error") {
    DatasetConfig cfg;
    cfg.image_side = 8;  // max size would not fit
    CHECK_THROWS_AS(cfg.validate(), Error);
}

TEST_CASE("corpus round trip through the directory layout") {
    auto corpus = generate_dataset(small_config(6), 11);
    TempDir tmp("vlx_corpus_io");
    save_corpus(corpus, tmp.path);
    CHECK(std::filesystem::exists(tmp.path / "corpus.json"));
    CHECK(std::filesystem::exists(tmp.path / "img_0.pgm"));
    CHECK(std::filesystem::exists(tmp.path / "mask_5.pgm"));

    auto loaded = load_corpus(tmp.path);
    REQUIRE(loaded.samples.size() == corpus.samples.size());
    CHECK(loaded.vocab == corpus.vocab);
    CHECK(loaded.mean_pixel == corpus.mean_pixel);
    CHECK(loaded.class_names == corpus.class_names);
    for (std::size_t i = 0; i < corpus.samples.size(); ++i) {
        CHECK(loaded.samples[i].image.pixels == corpus.samples[i].image.pixels);  // bitwise
        CHECK(loaded.samples[i].image.object_mask == corpus.samples[i].image.object_mask);
        CHECK(loaded.samples[i].caption == corpus.samples[i].caption);
        CHECK(loaded.samples[i].class_id == corpus.samples[i].class_id);
        CHECK(loaded.specs[i].size == corpus.specs[i].size);
        CHECK(loaded.specs[i].location_word == corpus.specs[i].location_word);
    }
}

TEST_CASE("pgm byte scaling") {
    TempDir tmp("vlx_pgm");
    GrayImage img;
    img.width = 2;
    img.height = 2;
    img.pixels = {0, 255, 0, 255};
    write_pgm(tmp.path / "t.pgm", img);
    auto input = load_image(tmp.path / "t.pgm", 2);
    CHECK(input.pixels == std::vector<double>{0.0, 1.0, 0.0, 1.0});
}

TEST_CASE("load_image passthrough without resampling") {
    TempDir tmp("vlx_pass");
    GrayImage img;
    img.width = 3;
    img.height = 3;
    img.pixels = {10, 20, 30, 40, 50, 60, 70, 80, 90};
    write_pgm(tmp.path / "t.pgm", img);
    auto input = load_image(tmp.path / "t.pgm", 3);
    for (std::size_t i = 0; i < 9; ++i) {
        CHECK(input.pixels[i] == double(img.pixels[i]) / 255.0);
    }
}

TEST_CASE("nearest-neighbor downsize follows the index map") {
    TempDir tmp("vlx_resize");
    GrayImage img;
    img.width = 4;
    img.height = 4;
    // checkerboard
    img.pixels = {0, 255, 0, 255, 255, 0, 255, 0, 0, 255, 0, 255, 255, 0, 255, 0};
    write_pgm(tmp.path / "t.pgm", img);
    auto input = load_image(tmp.path / "t.pgm", 2);
    // out(i,j) = in(floor(i*4/2), floor(j*4/2)) = in(2i, 2j)
    CHECK(input.pixels[0] == double(img.pixels[0]) / 255.0);
    CHECK(input.pixels[1] == double(img.pixels[2]) / 255.0);
    CHECK(input.pixels[2] == double(img.pixels[8]) / 255.0);
    CHECK(input.pixels[3] == double(img.pixels[10]) / 255.0);
}

TEST_CASE("png gray round trip and grayscale-only contract") {
    TempDir tmp("vlx_png");
    GrayImage img;
    img.width = 5;
    img.height = 3;
    img.pixels = {0, 10, 20, 30, 40, 50, 60, 70, 80, 90, 250, 251, 252, 253, 255};
    write_png_gray(tmp.path / "t.png", img);
    auto back = read_png_gray(tmp.path / "t.png");
    CHECK(back.width == 5);
    CHECK(back.height == 3);
    CHECK(back.pixels == img.pixels);

    auto via_loader = load_image(tmp.path / "t.png", 3);
    CHECK(via_loader.side == 3);

    RgbImage rgb;
    rgb.width = rgb.height = 2;
    rgb.pixels.assign(12, 128);
    write_png_rgb(tmp.path / "rgb.png", rgb);
    try {
        read_png_gray(tmp.path / "rgb.png");
        FAIL("expected format error");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::Format);
        CHECK(std::string(e.what()).find("color type") != std::string::npos);
    }
}

TEST_CASE("unsupported image formats name the offender") {
    TempDir tmp("vlx_badfmt");
    {
        std::ofstream f(tmp.path / "ascii.pgm");
        f << "P2\n2 2\n255\n0 0 0 0\n";
    }
    try {
        load_image(tmp.path / "ascii.pgm", 2);
        FAIL("expected format error");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::Format);
        CHECK(std::string(e.what()).find("P2") != std::string::npos);
    }
    {
        std::ofstream f(tmp.path / "deep.pgm");
        f << "P5\n1 1\n65535\n";
        f.put(0);
        f.put(0);
    }
    CHECK_THROWS_AS(load_image(tmp.path / "deep.pgm", 1), Error);
    {
        std::ofstream f(tmp.path / "junk.img", std::ios::binary);
        f << "PLAINTEXT";
    }
    CHECK_THROWS_AS(load_image(tmp.path / "junk.img", 2), Error);
    CHECK_THROWS_AS(load_image(tmp.path / "missing.pgm", 2), Error);
}

TEST_CASE("composite shape painting keeps masks disjoint when placed apart") {
    DatasetConfig cfg = small_config();
    ShapeSpec a;
    a.shape = ShapeKind::Circle;
    a.row = a.col = 12;
    a.size = 6;
    a.intensity = 0.9;
    a.size_word = size_word_for(a.size, cfg.image_side);
    a.location_word = location_word_for(a.row, a.col, cfg.image_side);
    ShapeSpec b = a;
    b.shape = ShapeKind::Square;
    b.row = b.col = 34;

    std::vector<double> pixels(cfg.image_side * cfg.image_side, 0.1);
    std::vector<std::uint8_t> mask_a, mask_b;
    paint_shape(pixels, mask_a, cfg.image_side, a);
    paint_shape(pixels, mask_b, cfg.image_side, b);
    for (std::size_t i = 0; i < mask_a.size(); ++i) CHECK(!(mask_a[i] && mask_b[i]));
}
