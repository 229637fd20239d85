#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "fd_check.hpp"
#include "graph_gen.hpp"
#include "vlx/attribution.hpp"
#include "vlx/data_synth.hpp"
#include "vlx/rng.hpp"

using namespace vlx;
using namespace vlx::testing;

namespace {

// f(x) = w . x over the flattened pixels.
TargetFn linear_target(std::vector<double> w) {
    return [w](Tape& tape, const Tensor& x) {
        Tensor weights = Tensor::from_data(x.cols(), 1, w);
        return tape.matmul(x, weights);
    };
}

ModelConfig tiny_config(std::size_t side = 8, std::size_t patch = 4) {
    ModelConfig cfg;
    cfg.image_side = side;
    cfg.patch_size = patch;
    cfg.vision_hidden = 12;
    cfg.text_hidden = 8;
    cfg.embed_dim = 5;
    cfg.vocab = {kUnkToken, "circle", "square", "small", "large", "at", "the", "center"};
    cfg.seed = 31;
    return cfg;
}

ImageInput random_image(std::size_t side, std::uint64_t seed) {
    Rng rng(seed);
    ImageInput img;
    img.side = side;
    img.pixels.resize(side * side);
    for (auto& p : img.pixels) p = rng.uniform01();
    return img;
}

}  // namespace

TEST_CASE("saliency of a linear map returns its weights") {
    const std::vector<double> w = {1.0, -2.0, 3.0};
    auto g = saliency_values(linear_target(w), {0.4, 0.1, 0.9});
    CHECK(g == w);
}

TEST_CASE("saliency of a constant target is identically zero") {
    TargetFn constant = [](Tape& tape, const Tensor& x) {
        (void)x;
        return tape.scale(Tensor::scalar(3.0), 1.0);
    };
    auto g = saliency_values(constant, {0.1, 0.2, 0.3, 0.4});
    CHECK(g == std::vector<double>{0, 0, 0, 0});
}

TEST_CASE("saliency on a model matches finite differences") {
    auto model = DualEncoderModel::init(tiny_config());
    auto img = random_image(8, 3);
    auto text = model.encode_text(tokenize("small circle", model.config().vocab));
    auto map = saliency(model, img, ScalarTarget::similarity_logit(text));
    CHECK(map.method == "saliency");
    CHECK(map.side == 8);

    const TargetFn f = make_target_fn(model, ScalarTarget::similarity_logit(text));
    auto value = [&](const std::vector<double>& px) {
        Tape t(Tape::kNoGrad);
        return f(t, Tensor::from_data(1, px.size(), px)).item();
    };
    CHECK(rel_err(map.values, central_diff(value, img.pixels, 1e-4)) <= 1e-4);
}

TEST_CASE("occlusion of pixel sum with unit windows") {
    TargetFn sum_target = [](Tape& tape, const Tensor& x) { return tape.sum(x); };
    ImageInput img;
    img.side = 2;
    img.pixels = {1, 1, 1, 1};

    const auto windows = occlusion_windows(2, 1, 1);
    REQUIRE(windows.size() == 4);
    VectorFn vf = [&](const std::vector<double>& px) {
        Tape t(Tape::kNoGrad);
        return std::vector<double>{t.sum(Tensor::from_data(1, px.size(), px)).item()};
    };
    auto sweep = occlusion_sweep(vf, img.pixels, 2, windows, 0.0);
    std::vector<double> deltas(windows.size());
    for (std::size_t w = 0; w < windows.size(); ++w) deltas[w] = sweep.deltas[w][0];
    auto map = occlusion_reduce(windows, deltas, 2);
    CHECK(map == std::vector<double>{1, 1, 1, 1});
}

TEST_CASE("occlusion with a single full window is uniform") {
    auto model = DualEncoderModel::init(tiny_config());
    auto img = random_image(8, 5);
    auto text = model.encode_text(tokenize("large square", model.config().vocab));
    auto target = ScalarTarget::similarity_logit(text);

    OcclusionParams params;
    params.window = 8;
    params.stride = 8;
    params.fill = 0.25;
    auto map = occlusion(model, img, target, params);

    const TargetFn f = make_target_fn(model, target);
    Tape t(Tape::kNoGrad);
    const double fx = f(t, Tensor::from_data(1, img.pixels.size(), img.pixels)).item();
    Tape t2(Tape::kNoGrad);
    const double f_fill =
        f(t2, Tensor::from_data(1, img.pixels.size(), std::vector<double>(64, 0.25))).item();
    for (double v : map.values) CHECK(v == doctest::Approx(fx - f_fill).epsilon(1e-12));
}

TEST_CASE("occlusion deltas match brute-force recomputation") {
    auto model = DualEncoderModel::init(tiny_config());
    auto img = random_image(8, 7);
    auto text = model.encode_text(tokenize("circle at the center", model.config().vocab));
    const TargetFn f = make_target_fn(model, ScalarTarget::similarity_logit(text));

    const auto windows = occlusion_windows(8, 2, 2);
    VectorFn vf = [&](const std::vector<double>& px) {
        Tape t(Tape::kNoGrad);
        return std::vector<double>{f(t, Tensor::from_data(1, px.size(), px)).item()};
    };
    auto sweep = occlusion_sweep(vf, img.pixels, 8, windows, 0.5);

    // Independent recomputation of every delta by direct forward passes.
    Tape tb(Tape::kNoGrad);
    const double base = f(tb, Tensor::from_data(1, 64, img.pixels)).item();
    for (std::size_t w = 0; w < windows.size(); ++w) {
        auto patched = img.pixels;
        for (std::size_t r = windows[w].row; r < windows[w].row + 2; ++r)
            for (std::size_t c = windows[w].col; c < windows[w].col + 2; ++c)
                patched[r * 8 + c] = 0.5;
        Tape t(Tape::kNoGrad);
        const double fw = f(t, Tensor::from_data(1, 64, patched)).item();
        CHECK(std::fabs((base - fw) - sweep.deltas[w][0]) <= 1e-12);
    }
}

TEST_CASE("occlusion window grid clamps to the edge") {
    auto windows = occlusion_windows(7, 3, 2);
    // starts: 0, 2, 4 then clamped 4 == side-window → no duplicate
    std::size_t max_start = 0;
    for (const auto& w : windows) max_start = std::max(max_start, w.row);
    CHECK(max_start == 4);
    for (const auto& w : windows) {
        CHECK(w.row + w.size <= 7);
        CHECK(w.col + w.size <= 7);
    }

    CHECK_THROWS_AS(occlusion_windows(8, 9, 1), Error);   // window > side
    CHECK_THROWS_AS(occlusion_windows(8, 4, 5), Error);   // stride > window
    CHECK_THROWS_AS(occlusion_windows(8, 4, 0), Error);   // stride < 1
}

TEST_CASE("integrated gradients closed form on a linear map") {
    const std::vector<double> w = {2.0, 5.0};
    auto values = ig_values(linear_target(w), {1.0, 0.0}, {0.0, 0.0}, 16);
    CHECK(values[0] == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(values[1] == 0.0);  // (x - x') factor is exactly zero
}

TEST_CASE("integrated gradients at the baseline is all zero") {
    const std::vector<double> w = {2.0, 5.0};
    auto values = ig_values(linear_target(w), {0.3, 0.7}, {0.3, 0.7}, 8);
    CHECK(values == std::vector<double>{0.0, 0.0});
}

TEST_CASE("integrated gradients completeness on x squared") {
    TargetFn square = [](Tape& tape, const Tensor& x) { return tape.mul(tape.sum(x), tape.sum(x)); };
    auto values = ig_values(square, {2.0}, {0.0}, 256);
    CHECK(std::fabs(values[0] - 4.0) <= 1e-3);
}

TEST_CASE("integrated gradients rejects fewer than two steps") {
    CHECK_THROWS_AS(ig_values(linear_target({1.0}), {1.0}, {0.0}, 1), Error);
}

TEST_CASE("ig completeness property on smooth model targets") {
    auto model = DualEncoderModel::init(tiny_config());
    auto text = model.encode_text(tokenize("small square at the center", model.config().vocab));
    const TargetFn f = make_target_fn(model, ScalarTarget::similarity_logit(text));

    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        auto img = random_image(8, seed);
        const auto baseline = BaselineSpec::constant(0.0).materialize(8);
        auto value = [&](const std::vector<double>& px) {
            Tape t(Tape::kNoGrad);
            return f(t, Tensor::from_data(1, px.size(), px)).item();
        };
        const double expected = value(img.pixels) - value(baseline);
        for (std::size_t steps : {32, 64}) {
            auto attr = ig_values(f, img.pixels, baseline, steps);
            double total = 0.0;
            for (double v : attr) total += v;
            const double tol = std::max(1e-3, 10.0 / double(steps * steps)) *
                               std::max(1.0, std::fabs(expected));
            CAPTURE(seed);
            CAPTURE(steps);
            CHECK(std::fabs(total - expected) <= tol);
        }
    }
}

TEST_CASE("gradient shap alpha-one hook degenerates to input-times-gradient") {
    auto model = DualEncoderModel::init(tiny_config());
    auto img = random_image(8, 11);
    auto text = model.encode_text(tokenize("large circle", model.config().vocab));
    auto target = ScalarTarget::similarity_logit(text);

    GradShapParams params;
    params.samples = 1;
    params.stddev = 0.0;
    params.mean = 0.25;  // fixed baseline b = 0.25 everywhere
    params.seed = 42;
    params.alpha_override = 1.0;
    auto map = gradient_shap(model, img, target, params);

    auto sal = saliency(model, img, target);
    for (std::size_t p = 0; p < map.values.size(); ++p) {
        const double expected = (img.pixels[p] - 0.25) * sal.values[p];
        CHECK(map.values[p] == doctest::Approx(expected).epsilon(1e-12));
    }
}

TEST_CASE("gradient shap on a linear map matches the per-sample closed form") {
    const std::vector<double> w = {1.5, -0.5, 2.0, 0.25};
    GradShapParams params;
    params.samples = 8;
    params.mean = 0.5;
    params.stddev = 0.2;
    params.seed = 7;
    const auto draws = gradshap_draws(params, 4);
    const std::vector<double> x = {0.9, 0.1, 0.6, 0.3};
    auto values = gradshap_values(linear_target(w), x, draws);

    std::vector<double> expected(4, 0.0);
    for (const auto& d : draws) {
        for (std::size_t p = 0; p < 4; ++p) expected[p] += (x[p] - d.baseline[p]) * w[p];
    }
    for (auto& v : expected) v /= double(draws.size());
    CHECK(max_abs_diff(values, expected) <= 1e-12);
}

TEST_CASE("gradient shap determinism and cross-seed consistency") {
    auto model = DualEncoderModel::init(tiny_config());
    auto img = random_image(8, 13);
    auto text = model.encode_text(tokenize("small circle", model.config().vocab));
    auto target = ScalarTarget::similarity_logit(text);

    GradShapParams params;
    params.samples = 64;
    params.mean = 0.5;
    params.stddev = 0.2;
    params.seed = 99;
    auto m1 = gradient_shap(model, img, target, params);
    auto m2 = gradient_shap(model, img, target, params);
    CHECK(m1.values == m2.values);  // bit-identical

    // Different seeds agree within Monte-Carlo tolerance. Per-pixel sample
    // stds are estimated from the per-draw contributions of the first run.
    const TargetFn f = make_target_fn(model, target);
    const auto draws1 = gradshap_draws(params, img.pixels.size());
    std::vector<std::vector<double>> contributions;
    for (const auto& d : draws1) {
        std::vector<double> point(img.pixels.size());
        for (std::size_t p = 0; p < point.size(); ++p) {
            point[p] = d.baseline[p] + d.alpha * (img.pixels[p] - d.baseline[p]);
        }
        auto g = saliency_values(f, point);
        for (std::size_t p = 0; p < g.size(); ++p) g[p] *= (img.pixels[p] - d.baseline[p]);
        contributions.push_back(std::move(g));
    }
    GradShapParams params2 = params;
    params2.seed = 123456;
    auto m3 = gradient_shap(model, img, target, params2);
    const double n = double(params.samples);
    for (std::size_t p = 0; p < m1.values.size(); ++p) {
        double mean = 0.0;
        for (const auto& c : contributions) mean += c[p];
        mean /= n;
        double var = 0.0;
        for (const auto& c : contributions) var += (c[p] - mean) * (c[p] - mean);
        const double sd = std::sqrt(var / (n - 1.0));
        // Difference of two independent sample means; 4 sigma of the
        // combined spread plus a small absolute floor.
        CHECK(std::fabs(m1.values[p] - m3.values[p]) <=
              4.0 * sd * std::sqrt(2.0) / std::sqrt(n) + 1e-9);
    }
}

TEST_CASE("gradient shap rejects zero samples") {
    GradShapParams params;
    params.samples = 0;
    CHECK_THROWS_AS(gradshap_draws(params, 16), Error);
}

TEST_CASE("attribution is linear in the target function") {
    // Shared stochastic choices, random smooth targets f and g.
    for (std::uint64_t seed = 300; seed < 304; ++seed) {
        GraphPlan plan_f = make_graph_plan(seed, 1, 16);
        GraphPlan plan_g = make_graph_plan(seed + 5000, 1, 16, &plan_f.input);
        const double alpha = 1.25, beta = -0.75;

        TargetFn f = [&](Tape& t, const Tensor& x) { return plan_f.run(t, x); };
        TargetFn g = [&](Tape& t, const Tensor& x) { return plan_g.run(t, x); };
        TargetFn combo = [&](Tape& t, const Tensor& x) {
            return t.add(t.scale(plan_f.run(t, x), alpha), t.scale(plan_g.run(t, x), beta));
        };

        std::vector<double> pixels(16);
        Rng rng(seed);
        for (auto& p : pixels) p = rng.uniform01();

        auto combine = [&](const std::vector<double>& a, const std::vector<double>& b) {
            std::vector<double> out(a.size());
            for (std::size_t i = 0; i < a.size(); ++i) out[i] = alpha * a[i] + beta * b[i];
            return out;
        };

        CAPTURE(seed);
        // saliency
        CHECK(max_abs_diff(saliency_values(combo, pixels),
                           combine(saliency_values(f, pixels), saliency_values(g, pixels))) <=
              1e-10);
        // integrated gradients, shared constant baseline
        const std::vector<double> baseline(16, 0.0);
        CHECK(max_abs_diff(ig_values(combo, pixels, baseline, 16),
                           combine(ig_values(f, pixels, baseline, 16),
                                   ig_values(g, pixels, baseline, 16))) <= 1e-10);
        // gradient shap, shared draws
        GradShapParams gs;
        gs.samples = 4;
        gs.seed = seed;
        const auto draws = gradshap_draws(gs, 16);
        CHECK(max_abs_diff(gradshap_values(combo, pixels, draws),
                           combine(gradshap_values(f, pixels, draws),
                                   gradshap_values(g, pixels, draws))) <= 1e-10);
        // occlusion, shared windows and fill
        const auto windows = occlusion_windows(4, 2, 2);
        auto occ = [&](const TargetFn& fn) {
            VectorFn vf = [&](const std::vector<double>& px) {
                Tape t(Tape::kNoGrad);
                return std::vector<double>{fn(t, Tensor::from_data(1, px.size(), px)).item()};
            };
            auto sweep = occlusion_sweep(vf, pixels, 4, windows, 0.5);
            std::vector<double> deltas(windows.size());
            for (std::size_t w = 0; w < windows.size(); ++w) deltas[w] = sweep.deltas[w][0];
            return occlusion_reduce(windows, deltas, 4);
        };
        CHECK(max_abs_diff(occ(combo), combine(occ(f), occ(g))) <= 1e-10);
    }
}

TEST_CASE("class probability target: single class gives zero saliency") {
    auto model = DualEncoderModel::init(tiny_config());
    auto img = random_image(8, 17);
    std::vector<PromptSet> one_class = {{"circle", {"small circle", "large circle"}}};
    auto map = saliency(model, img, ScalarTarget::class_probability(0, one_class));
    for (double v : map.values) CHECK(v == 0.0);
}

TEST_CASE("class probability target: identical prompt sets give identical maps") {
    auto model = DualEncoderModel::init(tiny_config());
    auto img = random_image(8, 19);
    std::vector<PromptSet> twins = {{"a", {"small circle at the center"}},
                                    {"b", {"small circle at the center"}}};
    auto m0 = saliency(model, img, ScalarTarget::class_probability(0, twins));
    auto m1 = saliency(model, img, ScalarTarget::class_probability(1, twins));
    CHECK(m0.values == m1.values);
}

TEST_CASE("noise baselines materialize deterministically and respect bounds") {
    auto spec = BaselineSpec::noise(0.5, 0.3, 77);
    auto a = spec.materialize(6);
    auto b = spec.materialize(6);
    CHECK(a == b);
    for (double v : a) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }
    CHECK_THROWS_AS(BaselineSpec::constant(1.5), Error);
    CHECK_THROWS_AS(BaselineSpec::noise(0.5, -1.0, 0), Error);
}

TEST_CASE("embedding-dim target validates the index") {
    auto model = DualEncoderModel::init(tiny_config());
    CHECK_THROWS_AS(make_target_fn(model, ScalarTarget::embedding_dim(99)), Error);
}
