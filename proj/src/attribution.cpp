#include "vlx/attribution.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "vlx/rng.hpp"
#include "vlx/sha256.hpp"

namespace vlx {

namespace {

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace

BaselineSpec BaselineSpec::constant(double v) {
    BaselineSpec b;
    b.kind = Kind::Constant;
    b.value = v;
    b.validate();
    return b;
}

BaselineSpec BaselineSpec::noise(double mean, double stddev, std::uint64_t seed) {
    BaselineSpec b;
    b.kind = Kind::Noise;
    b.mean = mean;
    b.stddev = stddev;
    b.seed = seed;
    b.validate();
    return b;
}

BaselineSpec BaselineSpec::dataset_mean(double resolved_mean) {
    BaselineSpec b;
    b.kind = Kind::DatasetMean;
    b.value = resolved_mean;
    b.validate();
    return b;
}

void BaselineSpec::validate() const {
    if (kind != Kind::Noise && !(value >= 0.0 && value <= 1.0)) {
        throw Error(ErrorCode::Parameter,
                    "baseline: constant value " + fmt_double(value) + " outside [0,1]");
    }
    if (kind == Kind::Noise && stddev < 0.0) {
        throw Error(ErrorCode::Parameter, "baseline: noise stddev must be >= 0");
    }
}

std::vector<double> BaselineSpec::materialize(std::size_t side) const {
    std::vector<double> img(side * side, value);
    if (kind == Kind::Noise) {
        Rng rng(seed);
        for (auto& p : img) p = std::clamp(mean + rng.normal(0.0, stddev), 0.0, 1.0);
    }
    return img;
}

std::string BaselineSpec::describe() const {
    switch (kind) {
        case Kind::Constant: return "constant:" + fmt_double(value);
        case Kind::Noise:
            return "noise:" + fmt_double(mean) + "," + fmt_double(stddev) + "," +
                   std::to_string(seed);
        case Kind::DatasetMean: return "dataset-mean:" + fmt_double(value);
    }
    return "";
}

ScalarTarget ScalarTarget::embedding_dim(std::size_t i) {
    ScalarTarget t;
    t.kind = Kind::EmbeddingDim;
    t.index = i;
    return t;
}

ScalarTarget ScalarTarget::similarity_logit(std::vector<double> text_embedding) {
    ScalarTarget t;
    t.kind = Kind::SimilarityLogit;
    t.text_embedding = std::move(text_embedding);
    return t;
}

ScalarTarget ScalarTarget::class_probability(std::size_t class_index,
                                             std::vector<PromptSet> prompt_sets) {
    ScalarTarget t;
    t.kind = Kind::ClassProbability;
    t.index = class_index;
    t.prompt_sets = std::move(prompt_sets);
    return t;
}

std::string ScalarTarget::describe() const {
    switch (kind) {
        case Kind::EmbeddingDim: return "embedding_dim:" + std::to_string(index);
        case Kind::SimilarityLogit: return "similarity_logit";
        case Kind::ClassProbability: return "class_probability:" + std::to_string(index);
    }
    return "";
}

TargetFn make_target_fn(const DualEncoderModel& model, const ScalarTarget& target) {
    switch (target.kind) {
        case ScalarTarget::Kind::EmbeddingDim: {
            const std::size_t i = target.index;
            if (i >= model.config().embed_dim) {
                throw Error(ErrorCode::Parameter,
                            "target: embedding dimension " + std::to_string(i) +
                                " out of range for M=" + std::to_string(model.config().embed_dim));
            }
            return [&model, i](Tape& tape, const Tensor& pixels) {
                Tensor embed = model.image_embedding_on(tape, pixels);
                return tape.gather(embed, {i}, 1, 1);
            };
        }
        case ScalarTarget::Kind::SimilarityLogit: {
            std::vector<double> text = target.text_embedding;
            if (text.size() != model.config().embed_dim) {
                throw Error(ErrorCode::Dimension,
                            "target: text embedding length " + std::to_string(text.size()) +
                                " != M=" + std::to_string(model.config().embed_dim));
            }
            return [&model, text](Tape& tape, const Tensor& pixels) {
                return model.similarity_on(tape, pixels, text);
            };
        }
        case ScalarTarget::Kind::ClassProbability: {
            if (target.index >= target.prompt_sets.size()) {
                throw Error(ErrorCode::Parameter,
                            "target: class index " + std::to_string(target.index) +
                                " out of range for " + std::to_string(target.prompt_sets.size()) +
                                " classes");
            }
            // Text embeddings are constants of the target; encode once.
            auto embeds = model.encode_prompt_sets(target.prompt_sets);
            const std::size_t k = target.index;
            return [&model, embeds, k](Tape& tape, const Tensor& pixels) {
                return model.class_probability_on(tape, pixels, embeds, k);
            };
        }
    }
    throw Error(ErrorCode::Internal, "target: unknown kind");
}

std::vector<double> saliency_values(const TargetFn& f, const std::vector<double>& pixels) {
    Tape tape;
    Tensor x = Tensor::from_data(1, pixels.size(), pixels, true);
    Tensor out = f(tape, x);
    if (out.numel() != 1) {
        throw Error(ErrorCode::Contract, "attribution target must be scalar");
    }
    if (!out.requires_grad()) {
        return std::vector<double>(pixels.size(), 0.0);  // constant target
    }
    tape.backward(out);
    return x.grad();
}

std::vector<Window> occlusion_windows(std::size_t side, std::size_t window, std::size_t stride) {
    if (window < 1 || window > side) {
        throw Error(ErrorCode::Parameter, "occlusion: window " + std::to_string(window) +
                                              " outside [1, " + std::to_string(side) + "]");
    }
    if (stride < 1 || stride > window) {
        throw Error(ErrorCode::Parameter, "occlusion: stride " + std::to_string(stride) +
                                              " outside [1, window]");
    }
    std::vector<std::size_t> starts;
    for (std::size_t r = 0; r + window <= side; r += stride) starts.push_back(r);
    if (starts.back() + window < side) starts.push_back(side - window);  // clamp to edge

    std::vector<Window> out;
    out.reserve(starts.size() * starts.size());
    for (std::size_t r : starts) {
        for (std::size_t c : starts) out.push_back({r, c, window});
    }
    return out;
}

OcclusionSweep occlusion_sweep(const VectorFn& f, const std::vector<double>& pixels,
                               std::size_t side, const std::vector<Window>& windows, double fill) {
    if (!(fill >= 0.0 && fill <= 1.0)) {
        throw Error(ErrorCode::Parameter, "occlusion: fill value outside [0,1]");
    }
    OcclusionSweep sweep;
    sweep.base = f(pixels);
    sweep.deltas.reserve(windows.size());
    std::vector<double> work;
    for (const Window& w : windows) {
        work = pixels;
        for (std::size_t r = w.row; r < w.row + w.size; ++r) {
            for (std::size_t c = w.col; c < w.col + w.size; ++c) work[r * side + c] = fill;
        }
        std::vector<double> occluded = f(work);
        if (occluded.size() != sweep.base.size()) {
            throw Error(ErrorCode::Contract, "occlusion: output arity changed between calls");
        }
        std::vector<double> delta(occluded.size());
        for (std::size_t j = 0; j < occluded.size(); ++j) delta[j] = sweep.base[j] - occluded[j];
        sweep.deltas.push_back(std::move(delta));
    }
    return sweep;
}

std::vector<double> occlusion_reduce(const std::vector<Window>& windows,
                                     const std::vector<double>& window_deltas, std::size_t side) {
    if (windows.size() != window_deltas.size()) {
        throw Error(ErrorCode::Contract, "occlusion: window/delta count mismatch");
    }
    std::vector<double> acc(side * side, 0.0);
    std::vector<std::uint32_t> cover(side * side, 0);
    for (std::size_t w = 0; w < windows.size(); ++w) {
        const Window& win = windows[w];
        for (std::size_t r = win.row; r < win.row + win.size; ++r) {
            for (std::size_t c = win.col; c < win.col + win.size; ++c) {
                acc[r * side + c] += window_deltas[w];
                cover[r * side + c] += 1;
            }
        }
    }
    for (std::size_t i = 0; i < acc.size(); ++i) {
        if (cover[i] > 0) acc[i] /= double(cover[i]);
    }
    return acc;
}

std::vector<double> ig_values(const TargetFn& f, const std::vector<double>& pixels,
                              const std::vector<double>& baseline, std::size_t steps) {
    if (steps < 2) {
        throw Error(ErrorCode::Parameter, "integrated gradients: steps must be >= 2");
    }
    if (baseline.size() != pixels.size()) {
        throw Error(ErrorCode::Dimension, "integrated gradients: baseline size mismatch");
    }
    const std::size_t n = pixels.size();
    std::vector<double> grad_sum(n, 0.0);
    std::vector<double> point(n);
    for (std::size_t k = 1; k <= steps; ++k) {
        const double t = (double(k) - 0.5) / double(steps);  // midpoint rule
        for (std::size_t p = 0; p < n; ++p) {
            point[p] = baseline[p] + t * (pixels[p] - baseline[p]);
        }
        const auto g = saliency_values(f, point);
        for (std::size_t p = 0; p < n; ++p) grad_sum[p] += g[p];
    }
    std::vector<double> out(n);
    for (std::size_t p = 0; p < n; ++p) {
        out[p] = (pixels[p] - baseline[p]) * grad_sum[p] / double(steps);
    }
    return out;
}

std::vector<GradShapDraw> gradshap_draws(const GradShapParams& params,
                                          std::size_t pixel_count) {
    if (params.samples < 1) {
        throw Error(ErrorCode::Parameter, "gradient shap: need at least one sample");
    }
    if (params.stddev < 0.0) {
        throw Error(ErrorCode::Parameter, "gradient shap: stddev must be >= 0");
    }
    std::vector<GradShapDraw> draws;
    draws.reserve(params.samples);
    for (std::size_t j = 0; j < params.samples; ++j) {
        Rng rng(params.seed ^ static_cast<std::uint64_t>(j));
        GradShapDraw draw;
        draw.baseline.resize(pixel_count);
        for (auto& p : draw.baseline) {
            p = std::clamp(params.mean + rng.normal(0.0, params.stddev), 0.0, 1.0);
        }
        draw.alpha = params.alpha_override ? *params.alpha_override : rng.uniform01();
        draws.push_back(std::move(draw));
    }
    return draws;
}

std::vector<double> gradshap_values(const TargetFn& f, const std::vector<double>& pixels,
                                    const std::vector<GradShapDraw>& draws) {
    if (draws.empty()) {
        throw Error(ErrorCode::Parameter, "gradient shap: need at least one sample");
    }
    const std::size_t n = pixels.size();
    std::vector<double> acc(n, 0.0);
    std::vector<double> point(n);
    for (const auto& draw : draws) {
        if (draw.baseline.size() != n) {
            throw Error(ErrorCode::Dimension, "gradient shap: baseline size mismatch");
        }
        for (std::size_t p = 0; p < n; ++p) {
            point[p] = draw.baseline[p] + draw.alpha * (pixels[p] - draw.baseline[p]);
        }
        const auto g = saliency_values(f, point);
        for (std::size_t p = 0; p < n; ++p) acc[p] += (pixels[p] - draw.baseline[p]) * g[p];
    }
    for (auto& v : acc) v /= double(draws.size());
    return acc;
}

std::string image_content_id(const ImageInput& img) {
    Sha256 h;
    const std::uint64_t side = img.side;
    h.update(&side, sizeof(side));
    h.update(img.pixels.data(), img.pixels.size() * sizeof(double));
    return to_hex(h.finish()).substr(0, 16);
}

std::string occlusion_params_string(const OcclusionParams& p) {
    return "window=" + std::to_string(p.window) + ";stride=" + std::to_string(p.stride) +
           ";fill=" + fmt_double(p.fill);
}

std::string ig_params_string(const IgParams& p) {
    return "steps=" + std::to_string(p.steps) + ";baseline=" + p.baseline.describe();
}

std::string gradshap_params_string(const GradShapParams& p) {
    std::string s = "samples=" + std::to_string(p.samples) + ";mean=" + fmt_double(p.mean) +
                    ";stddev=" + fmt_double(p.stddev) + ";seed=" + std::to_string(p.seed);
    if (p.alpha_override) s += ";alpha=" + fmt_double(*p.alpha_override);
    return s;
}

namespace {

AttributionMap finish_map(std::vector<double> values, const ImageInput& img,
                          const ScalarTarget& target, std::string method, std::string params) {
    AttributionMap map;
    map.side = img.side;
    map.values = std::move(values);
    map.method = std::move(method);
    map.target = target.describe();
    map.image_id = image_content_id(img);
    map.params = std::move(params);
    return map;
}

}  // namespace

AttributionMap saliency(const DualEncoderModel& model, const ImageInput& img,
                        const ScalarTarget& target) {
    img.validate();
    const TargetFn f = make_target_fn(model, target);
    return finish_map(saliency_values(f, img.pixels), img, target, "saliency", "");
}

AttributionMap occlusion(const DualEncoderModel& model, const ImageInput& img,
                         const ScalarTarget& target, const OcclusionParams& params) {
    img.validate();
    const TargetFn f = make_target_fn(model, target);
    const auto windows = occlusion_windows(img.side, params.window, params.stride);
    VectorFn scalar_as_vector = [&f](const std::vector<double>& px) {
        Tape tape(Tape::kNoGrad);
        Tensor x = Tensor::from_data(1, px.size(), px);
        return std::vector<double>{f(tape, x).item()};
    };
    const auto sweep = occlusion_sweep(scalar_as_vector, img.pixels, img.side, windows, params.fill);
    std::vector<double> deltas(windows.size());
    for (std::size_t w = 0; w < windows.size(); ++w) deltas[w] = sweep.deltas[w][0];
    return finish_map(occlusion_reduce(windows, deltas, img.side), img, target, "occlusion",
                      occlusion_params_string(params));
}

AttributionMap integrated_gradients(const DualEncoderModel& model, const ImageInput& img,
                                    const ScalarTarget& target, const IgParams& params) {
    img.validate();
    params.baseline.validate();
    const TargetFn f = make_target_fn(model, target);
    const auto baseline = params.baseline.materialize(img.side);
    return finish_map(ig_values(f, img.pixels, baseline, params.steps), img, target, "ig",
                      ig_params_string(params));
}

AttributionMap gradient_shap(const DualEncoderModel& model, const ImageInput& img,
                             const ScalarTarget& target, const GradShapParams& params) {
    img.validate();
    const TargetFn f = make_target_fn(model, target);
    const auto draws = gradshap_draws(params, img.pixels.size());
    return finish_map(gradshap_values(f, img.pixels, draws), img, target, "gradshap",
                      gradshap_params_string(params));
}

}  // namespace vlx
