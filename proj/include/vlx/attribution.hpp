#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "vlx/model.hpp"
#include "vlx/types.hpp"

namespace vlx {

// Signed per-pixel importance scores for one scalar target. Values keep their
// sign; magnitude is applied only at render time.
struct AttributionMap {
    std::size_t side = 0;
    std::vector<double> values;  // side*side, row-major
    std::string method;
    std::string target;
    std::string image_id;
    std::string params;
};

struct BaselineSpec {
    enum class Kind { Constant, Noise, DatasetMean };
    Kind kind = Kind::Constant;
    double value = 0.0;   // Constant level, or the resolved dataset mean
    double mean = 0.0;    // Noise
    double stddev = 0.0;  // Noise
    std::uint64_t seed = 0;

    static BaselineSpec constant(double v);
    static BaselineSpec noise(double mean, double stddev, std::uint64_t seed);
    static BaselineSpec dataset_mean(double resolved_mean);

    void validate() const;
    // Concrete baseline image in [0,1]; Noise materializes once from its seed.
    std::vector<double> materialize(std::size_t side) const;
    std::string describe() const;
};

// The scalar model outputs an attribution can explain.
struct ScalarTarget {
    enum class Kind { EmbeddingDim, SimilarityLogit, ClassProbability };
    Kind kind = Kind::EmbeddingDim;
    std::size_t index = 0;                  // embedding dim, or class index
    std::vector<double> text_embedding;     // SimilarityLogit
    std::vector<PromptSet> prompt_sets;     // ClassProbability

    static ScalarTarget embedding_dim(std::size_t i);
    static ScalarTarget similarity_logit(std::vector<double> text_embedding);
    static ScalarTarget class_probability(std::size_t class_index,
                                          std::vector<PromptSet> prompt_sets);
    std::string describe() const;
};

// A differentiable scalar function of the flattened pixel row (1 x A*A).
using TargetFn = std::function<Tensor(Tape&, const Tensor& pixels)>;
// Value-only multi-output evaluation (used by the shared occlusion sweep).
using VectorFn = std::function<std::vector<double>(const std::vector<double>& pixels)>;

TargetFn make_target_fn(const DualEncoderModel& model, const ScalarTarget& target);

struct OcclusionParams {
    std::size_t window = 8;
    std::size_t stride = 8;
    double fill = 0.0;
};

struct IgParams {
    BaselineSpec baseline = BaselineSpec::constant(0.0);
    std::size_t steps = 64;
};

struct GradShapParams {
    double mean = 0.5;
    double stddev = 0.25;
    std::size_t samples = 16;
    std::uint64_t seed = 0;
    // Test hook: pins the path position instead of drawing alpha ~ U(0,1).
    std::optional<double> alpha_override;
};

// ---- function-level cores ----
// Stochastic ingredients (windows, baselines, alpha draws) are materialized
// by the caller so one draw can be shared across many targets.

std::vector<double> saliency_values(const TargetFn& f, const std::vector<double>& pixels);

struct Window {
    std::size_t row = 0, col = 0, size = 0;
};
// Stride-s grid; a final clamped-to-edge position is added per axis when the
// grid does not land exactly on the border.
std::vector<Window> occlusion_windows(std::size_t side, std::size_t window, std::size_t stride);

struct OcclusionSweep {
    std::vector<double> base;                 // f(x), one entry per output
    std::vector<std::vector<double>> deltas;  // deltas[w][j] = base[j] - f_j(occluded at w)
};
OcclusionSweep occlusion_sweep(const VectorFn& f, const std::vector<double>& pixels,
                               std::size_t side, const std::vector<Window>& windows, double fill);

// Per-pixel mean of the deltas of every window covering that pixel.
std::vector<double> occlusion_reduce(const std::vector<Window>& windows,
                                     const std::vector<double>& window_deltas, std::size_t side);

// Midpoint-rule path integral from baseline to input.
std::vector<double> ig_values(const TargetFn& f, const std::vector<double>& pixels,
                              const std::vector<double>& baseline, std::size_t steps);

struct GradShapDraw {
    std::vector<double> baseline;
    double alpha = 1.0;
};
std::vector<GradShapDraw> gradshap_draws(const GradShapParams& params,
                                          std::size_t pixel_count);

std::vector<double> gradshap_values(const TargetFn& f, const std::vector<double>& pixels,
                                    const std::vector<GradShapDraw>& draws);

// ---- model-level operations ----

AttributionMap saliency(const DualEncoderModel& model, const ImageInput& img,
                        const ScalarTarget& target);
AttributionMap occlusion(const DualEncoderModel& model, const ImageInput& img,
                         const ScalarTarget& target, const OcclusionParams& params);
AttributionMap integrated_gradients(const DualEncoderModel& model, const ImageInput& img,
                                    const ScalarTarget& target, const IgParams& params);
AttributionMap gradient_shap(const DualEncoderModel& model, const ImageInput& img,
                             const ScalarTarget& target, const GradShapParams& params);

std::string image_content_id(const ImageInput& img);

std::string occlusion_params_string(const OcclusionParams& p);
std::string ig_params_string(const IgParams& p);
std::string gradshap_params_string(const GradShapParams& p);

}  // namespace vlx
