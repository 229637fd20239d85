#include "vlx/fusion.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>

#include <json.hpp>

#include "vlx/wire.hpp"

namespace vlx {

namespace {

constexpr char kStackMagic[4] = {'V', 'L', 'X', 'S'};
constexpr std::uint32_t kStackVersion = 1;

using nlohmann::json;

}  // namespace

MethodSpec MethodSpec::saliency() { return MethodSpec{}; }

MethodSpec MethodSpec::occlusion_method(OcclusionParams p) {
    MethodSpec m;
    m.kind = Kind::Occlusion;
    m.occlusion = p;
    return m;
}

MethodSpec MethodSpec::ig_method(IgParams p) {
    MethodSpec m;
    m.kind = Kind::IntegratedGradients;
    m.ig = p;
    return m;
}

MethodSpec MethodSpec::gradshap_method(GradShapParams p) {
    MethodSpec m;
    m.kind = Kind::GradientShap;
    m.gradshap = p;
    return m;
}

MethodSpec MethodSpec::named(const std::string& name) {
    MethodSpec m;
    if (name == "saliency") {
        m.kind = Kind::Saliency;
    } else if (name == "occlusion") {
        m.kind = Kind::Occlusion;
    } else if (name == "ig") {
        m.kind = Kind::IntegratedGradients;
    } else if (name == "gradshap") {
        m.kind = Kind::GradientShap;
    } else {
        throw Error(ErrorCode::Method, "unknown method '" + name +
                                           "' (expected saliency, occlusion, ig or gradshap)");
    }
    return m;
}

std::string MethodSpec::name() const {
    switch (kind) {
        case Kind::Saliency: return "saliency";
        case Kind::Occlusion: return "occlusion";
        case Kind::IntegratedGradients: return "ig";
        case Kind::GradientShap: return "gradshap";
    }
    return "saliency";
}

std::string MethodSpec::canonical_params() const {
    switch (kind) {
        case Kind::Saliency: return "";
        case Kind::Occlusion: return occlusion_params_string(occlusion);
        case Kind::IntegratedGradients: return ig_params_string(ig);
        case Kind::GradientShap: return gradshap_params_string(gradshap);
    }
    return "";
}

void MapStack::validate() const {
    if (embed_dim == 0 || side == 0 || maps.size() != embed_dim * side * side) {
        throw Error(ErrorCode::Contract, "stack: buffer of " + std::to_string(maps.size()) +
                                             " does not hold " + std::to_string(embed_dim) +
                                             " maps of " + std::to_string(side * side));
    }
    for (double v : maps) {
        if (!std::isfinite(v)) throw Error(ErrorCode::Contract, "stack: non-finite value");
    }
}

MapStack per_dimension_maps_fn(const EmbedFn& embed, std::size_t embed_dim, const ImageInput& img,
                               const MethodSpec& method, const std::string& image_id,
                               const Digest256& fingerprint) {
    img.validate();
    const std::size_t pixel_count = img.pixels.size();

    MapStack stack;
    stack.embed_dim = embed_dim;
    stack.side = img.side;
    stack.maps.resize(embed_dim * pixel_count);
    stack.method = method.name();
    stack.params = method.canonical_params();
    stack.image_id = image_id;
    stack.model_fingerprint = fingerprint;

    auto dim_target = [&](std::size_t i) -> TargetFn {
        return [&embed, i](Tape& tape, const Tensor& pixels) {
            Tensor e = embed(tape, pixels);
            return tape.gather(e, {i}, 1, 1);
        };
    };
    auto run_dim = [&](std::size_t i, const std::function<std::vector<double>()>& body) {
        try {
            const auto values = body();
            std::copy(values.begin(), values.end(), stack.maps.begin() + i * pixel_count);
        } catch (const Error& e) {
            throw Error(e.code(), "per_dimension_maps: dimension " + std::to_string(i) + ": " +
                                      e.what());
        }
    };

    switch (method.kind) {
        case MethodSpec::Kind::Saliency: {
            for (std::size_t i = 0; i < embed_dim; ++i) {
                run_dim(i, [&] { return saliency_values(dim_target(i), img.pixels); });
            }
            break;
        }
        case MethodSpec::Kind::IntegratedGradients: {
            method.ig.baseline.validate();
            // One baseline serves every dimension.
            const auto baseline = method.ig.baseline.materialize(img.side);
            for (std::size_t i = 0; i < embed_dim; ++i) {
                run_dim(i, [&] {
                    return ig_values(dim_target(i), img.pixels, baseline, method.ig.steps);
                });
            }
            break;
        }
        case MethodSpec::Kind::GradientShap: {
            // One set of (baseline, alpha) draws serves every dimension.
            const auto draws = gradshap_draws(method.gradshap, pixel_count);
            for (std::size_t i = 0; i < embed_dim; ++i) {
                run_dim(i, [&] { return gradshap_values(dim_target(i), img.pixels, draws); });
            }
            break;
        }
        case MethodSpec::Kind::Occlusion: {
            // One forward sweep; every dimension reads its deltas from it.
            const auto windows =
                occlusion_windows(img.side, method.occlusion.window, method.occlusion.stride);
            VectorFn vector_embed = [&embed](const std::vector<double>& px) {
                Tape tape(Tape::kNoGrad);
                Tensor x = Tensor::from_data(1, px.size(), px);
                return embed(tape, x).data();
            };
            const auto sweep = occlusion_sweep(vector_embed, img.pixels, img.side, windows,
                                               method.occlusion.fill);
            if (sweep.base.size() != embed_dim) {
                throw Error(ErrorCode::Contract, "per_dimension_maps: embedding has " +
                                                     std::to_string(sweep.base.size()) +
                                                     " dims, expected " +
                                                     std::to_string(embed_dim));
            }
            std::vector<double> deltas(windows.size());
            for (std::size_t i = 0; i < embed_dim; ++i) {
                run_dim(i, [&] {
                    for (std::size_t w = 0; w < windows.size(); ++w) {
                        deltas[w] = sweep.deltas[w][i];
                    }
                    return occlusion_reduce(windows, deltas, img.side);
                });
            }
            break;
        }
    }
    stack.validate();
    return stack;
}

MapStack per_dimension_maps(const DualEncoderModel& model, const ImageInput& img,
                            const MethodSpec& method) {
    EmbedFn embed = [&model](Tape& tape, const Tensor& pixels) {
        return model.image_embedding_on(tape, pixels);
    };
    return per_dimension_maps_fn(embed, model.config().embed_dim, img, method,
                                 image_content_id(img), model.fingerprint());
}

FusedMap fuse(const MapStack& stack, const std::vector<double>& text_weights, double tau,
              const std::optional<Digest256>& expected_fingerprint) {
    stack.validate();
    if (text_weights.size() != stack.embed_dim) {
        throw Error(ErrorCode::Dimension, "fuse: weight vector of " +
                                              std::to_string(text_weights.size()) +
                                              " does not match M=" +
                                              std::to_string(stack.embed_dim));
    }
    if (expected_fingerprint && *expected_fingerprint != stack.model_fingerprint) {
        throw Error(ErrorCode::Stale,
                    "fuse: stack was built under a different model checkpoint");
    }

    FusedMap out;
    out.side = stack.side;
    out.values.assign(stack.side * stack.side, 0.0);
    out.text_embedding = text_weights;
    out.tau = tau;
    out.method = stack.method;
    out.params = stack.params;
    out.image_id = stack.image_id;
    // Accumulate sum_i w_i * map_i in ascending i, then apply tau once: the
    // same value as sum_i (tau*w_i)*map_i, but rescaling tau rescales the
    // output bit-exactly.
    const std::size_t pixel_count = out.values.size();
    for (std::size_t i = 0; i < stack.embed_dim; ++i) {
        const double w = text_weights[i];
        const double* m = stack.map(i);
        for (std::size_t p = 0; p < pixel_count; ++p) out.values[p] += w * m[p];
    }
    for (std::size_t p = 0; p < pixel_count; ++p) out.values[p] *= tau;
    return out;
}

StackCache::StackCache(std::filesystem::path dir) : dir_(std::move(dir)) {
    std::filesystem::create_directories(dir_);
}

std::filesystem::path StackCache::default_dir() {
    if (const char* env = std::getenv("VLX_CACHE_DIR"); env && *env) {
        return std::filesystem::path(env);
    }
    return std::filesystem::path(".vlx_cache");
}

std::filesystem::path StackCache::key_path(const std::string& image_id, const MethodSpec& method,
                                           const Digest256& fingerprint) const {
    Sha256 h;
    const std::string key = image_id + "\n" + method.name() + "\n" + method.canonical_params();
    h.update(key.data(), key.size());
    h.update(fingerprint.data(), fingerprint.size());
    return dir_ / (to_hex(h.finish()) + ".vlxs");
}

MapStack StackCache::get_or_build(const std::string& image_id, const MethodSpec& method,
                                  const Digest256& fingerprint,
                                  const std::function<MapStack()>& build) {
    const auto path = key_path(image_id, method, fingerprint);
    if (std::filesystem::exists(path)) {
        MapStack stack = load_stack(path);
        if (stack.image_id == image_id && stack.model_fingerprint == fingerprint &&
            stack.method == method.name() && stack.params == method.canonical_params()) {
            ++hits_;
            return stack;
        }
        // Key collision or corruption: fall through and rebuild.
    }
    ++misses_;
    MapStack stack = build();
    save_stack(stack, path);
    return stack;
}

FusedMap explain_fused(const DualEncoderModel& model, const ImageInput& img,
                       const std::string& prompt, const MethodSpec& method, StackCache* cache) {
    const TextInput text = tokenize(prompt, model.config().vocab);
    const auto text_embedding = model.encode_text(text);
    const auto fingerprint = model.fingerprint();
    const std::string image_id = image_content_id(img);

    MapStack stack =
        cache ? cache->get_or_build(image_id, method, fingerprint,
                                    [&] { return per_dimension_maps(model, img, method); })
              : per_dimension_maps(model, img, method);

    FusedMap fused = fuse(stack, text_embedding, model.temperature(), fingerprint);
    fused.prompt = prompt;
    return fused;
}

AttributionMap explain_conventional(const DualEncoderModel& model, const ImageInput& img,
                                    const std::vector<PromptSet>& prompt_sets,
                                    std::size_t class_index, const MethodSpec& method) {
    const ScalarTarget target = ScalarTarget::class_probability(class_index, prompt_sets);
    switch (method.kind) {
        case MethodSpec::Kind::Saliency: return saliency(model, img, target);
        case MethodSpec::Kind::Occlusion: return occlusion(model, img, target, method.occlusion);
        case MethodSpec::Kind::IntegratedGradients:
            return integrated_gradients(model, img, target, method.ig);
        case MethodSpec::Kind::GradientShap:
            return gradient_shap(model, img, target, method.gradshap);
    }
    throw Error(ErrorCode::Internal, "explain_conventional: unknown method");
}

void save_stack(const MapStack& stack, const std::filesystem::path& path) {
    stack.validate();
    std::vector<std::uint8_t> out;
    out.insert(out.end(), kStackMagic, kStackMagic + 4);
    wire::put_u32(out, kStackVersion);
    wire::put_u32(out, static_cast<std::uint32_t>(stack.embed_dim));
    wire::put_u32(out, static_cast<std::uint32_t>(stack.side));
    wire::put_string(out, stack.method);
    wire::put_string(out, stack.params);
    wire::put_string(out, stack.image_id);
    out.insert(out.end(), stack.model_fingerprint.begin(), stack.model_fingerprint.end());
    for (double v : stack.maps) wire::put_f64(out, v);

    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw Error(ErrorCode::Io, "cannot open for writing: " + path.string());
    f.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
    if (!f) throw Error(ErrorCode::Io, "write failed: " + path.string());
}

MapStack load_stack(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw Error(ErrorCode::Io, "cannot open: " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                                    std::istreambuf_iterator<char>());
    wire::Reader r(bytes);
    r.expect_magic(kStackMagic, "map stack");
    const std::uint32_t version = r.u32();
    if (version != kStackVersion) {
        throw Error(ErrorCode::Format, "map stack: unsupported version " + std::to_string(version));
    }
    MapStack stack;
    stack.embed_dim = r.u32();
    stack.side = r.u32();
    stack.method = r.str();
    stack.params = r.str();
    stack.image_id = r.str();
    r.raw(stack.model_fingerprint.data(), stack.model_fingerprint.size());
    stack.maps.resize(stack.embed_dim * stack.side * stack.side);
    for (auto& v : stack.maps) v = r.f64();
    stack.validate();
    return stack;
}

std::string fused_map_to_json(const FusedMap& map) {
    json j;
    j["prompt"] = map.prompt;
    j["tau"] = map.tau;
    j["a"] = map.side;
    j["values"] = map.values;
    j["method"] = map.method;
    j["params"] = map.params;
    j["image_id"] = map.image_id;
    return j.dump(2) + "\n";
}

FusedMap fused_map_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw Error(ErrorCode::Format, "fused map json: " + std::string(e.what()));
    }
    FusedMap map;
    map.prompt = j.at("prompt").get<std::string>();
    map.tau = j.at("tau").get<double>();
    map.side = j.at("a").get<std::size_t>();
    map.values = j.at("values").get<std::vector<double>>();
    map.method = j.at("method").get<std::string>();
    map.params = j.at("params").get<std::string>();
    map.image_id = j.at("image_id").get<std::string>();
    if (map.values.size() != map.side * map.side) {
        throw Error(ErrorCode::Format, "fused map json: values length does not match side");
    }
    return map;
}

}  // namespace vlx
