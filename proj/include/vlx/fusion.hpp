#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "vlx/attribution.hpp"
#include "vlx/model.hpp"
#include "vlx/sha256.hpp"

namespace vlx {

// One attribution method plus its parameters, as used for stack construction.
struct MethodSpec {
    enum class Kind { Saliency, Occlusion, IntegratedGradients, GradientShap };
    Kind kind = Kind::Saliency;
    OcclusionParams occlusion;
    IgParams ig;
    GradShapParams gradshap;

    static MethodSpec saliency();
    static MethodSpec occlusion_method(OcclusionParams p);
    static MethodSpec ig_method(IgParams p);
    static MethodSpec gradshap_method(GradShapParams p);
    // Accepts the CLI names: saliency | occlusion | ig | gradshap.
    static MethodSpec named(const std::string& name);

    std::string name() const;
    std::string canonical_params() const;
};

// The M per-embedding-dimension attribution maps for one image under one
// method. All stochastic method choices are shared across the M targets.
struct MapStack {
    std::size_t embed_dim = 0;  // M
    std::size_t side = 0;       // A
    std::vector<double> maps;   // M * side * side, map i at offset i*side*side
    std::string method;
    std::string params;
    std::string image_id;
    Digest256 model_fingerprint{};

    const double* map(std::size_t i) const { return maps.data() + i * side * side; }
    void validate() const;
};

struct FusedMap {
    std::size_t side = 0;
    std::vector<double> values;
    std::string prompt;
    std::vector<double> text_embedding;
    double tau = 1.0;
    std::string method;
    std::string params;
    std::string image_id;
};

// The embedding seam: production passes the model's post-normalization image
// embedding; tests can substitute any pixels -> (1,M) function.
using EmbedFn = std::function<Tensor(Tape&, const Tensor& pixels)>;

MapStack per_dimension_maps(const DualEncoderModel& model, const ImageInput& img,
                            const MethodSpec& method);
MapStack per_dimension_maps_fn(const EmbedFn& embed, std::size_t embed_dim, const ImageInput& img,
                               const MethodSpec& method, const std::string& image_id,
                               const Digest256& fingerprint);

// F_out = sum_i (tau * weights[i]) * stack.maps[i], ascending i. When an
// expected fingerprint is given, a stack built under different weights is a
// staleness error.
FusedMap fuse(const MapStack& stack, const std::vector<double>& text_weights, double tau,
              const std::optional<Digest256>& expected_fingerprint = std::nullopt);

// Disk-backed stack cache keyed by (image content, method, params, model
// fingerprint). Concurrent duplicate builds are benign: content is
// deterministic, last write wins.
class StackCache {
  public:
    explicit StackCache(std::filesystem::path dir);

    const std::filesystem::path& dir() const { return dir_; }
    std::size_t hits() const { return hits_; }
    std::size_t misses() const { return misses_; }

    MapStack get_or_build(const std::string& image_id, const MethodSpec& method,
                          const Digest256& fingerprint, const std::function<MapStack()>& build);

    static std::filesystem::path default_dir();

  private:
    std::filesystem::path key_path(const std::string& image_id, const MethodSpec& method,
                                   const Digest256& fingerprint) const;
    std::filesystem::path dir_;
    std::size_t hits_ = 0;
    std::size_t misses_ = 0;
};

// tokenize -> encode_text -> per_dimension_maps (or cache hit) -> fuse.
FusedMap explain_fused(const DualEncoderModel& model, const ImageInput& img,
                       const std::string& prompt, const MethodSpec& method,
                       StackCache* cache = nullptr);

// The conventional baseline: attribution of the post-softmax class
// probability of the zero-shot prompt classifier.
AttributionMap explain_conventional(const DualEncoderModel& model, const ImageInput& img,
                                    const std::vector<PromptSet>& prompt_sets,
                                    std::size_t class_index, const MethodSpec& method);

void save_stack(const MapStack& stack, const std::filesystem::path& path);
MapStack load_stack(const std::filesystem::path& path);

std::string fused_map_to_json(const FusedMap& map);
FusedMap fused_map_from_json(const std::string& text);

}  // namespace vlx
