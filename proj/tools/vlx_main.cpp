// vlx: generate a shapes corpus, train the dual encoder, build per-dimension
// attribution stacks, fuse them against text prompts, and compare the fused
// explanations with the conventional prompt-classifier baseline.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "vlx/data_synth.hpp"
#include "vlx/fusion.hpp"
#include "vlx/image_io.hpp"
#include "vlx/metrics.hpp"
#include "vlx/model.hpp"
#include "vlx/render.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct MethodFlags {
    std::string method = "saliency";
    std::size_t window = 8;
    std::size_t stride = 8;
    std::string fill = "auto";  // number, or "auto" (= corpus mean, else 0)
    std::size_t steps = 64;
    std::string baseline = "const:0";
    std::size_t samples = 16;
    std::uint64_t seed = 0;
    std::string corpus_dir;  // resolves dataset-mean defaults when given

    void add_to(CLI::App* cmd, bool with_method_name = true) {
        if (with_method_name) {
            cmd->add_option("--method", method, "saliency | occlusion | ig | gradshap");
        }
        cmd->add_option("--window", window, "occlusion window size (default 8)");
        cmd->add_option("--stride", stride, "occlusion stride (default 8)");
        cmd->add_option("--fill", fill,
                        "occlusion fill value; 'auto' = corpus mean when --corpus is given");
        cmd->add_option("--steps", steps, "integrated-gradients steps (default 64)");
        cmd->add_option("--baseline", baseline,
                        "ig baseline: const:V | noise:MEAN,STD[,SEED] | mean (needs --corpus); "
                        "gradshap noise distribution reuses noise:MEAN,STD");
        cmd->add_option("--samples", samples, "gradient-shap sample count (default 16)");
        cmd->add_option("--seed", seed, "gradient-shap sampling seed");
        cmd->add_option("--corpus", corpus_dir, "corpus dir for dataset-mean defaults");
    }

    double resolve_corpus_mean() const {
        if (corpus_dir.empty()) {
            throw vlx::Error(vlx::ErrorCode::Parameter,
                             "dataset-mean baseline/fill needs --corpus");
        }
        std::ifstream f(fs::path(corpus_dir) / "corpus.json");
        if (!f) {
            throw vlx::Error(vlx::ErrorCode::Io,
                             "cannot open corpus manifest in " + corpus_dir);
        }
        json manifest;
        f >> manifest;
        return manifest.at("mean_pixel").get<double>();
    }

    vlx::BaselineSpec parse_baseline() const {
        if (baseline == "mean") return vlx::BaselineSpec::dataset_mean(resolve_corpus_mean());
        if (baseline.rfind("const:", 0) == 0) {
            return vlx::BaselineSpec::constant(std::stod(baseline.substr(6)));
        }
        if (baseline.rfind("noise:", 0) == 0) {
            const std::string body = baseline.substr(6);
            double mean = 0.0, stddev = 0.0;
            std::uint64_t noise_seed = seed;
            const auto c1 = body.find(',');
            if (c1 == std::string::npos) {
                throw vlx::Error(vlx::ErrorCode::Parameter,
                                 "baseline noise needs MEAN,STD[,SEED]");
            }
            mean = std::stod(body.substr(0, c1));
            const auto c2 = body.find(',', c1 + 1);
            if (c2 == std::string::npos) {
                stddev = std::stod(body.substr(c1 + 1));
            } else {
                stddev = std::stod(body.substr(c1 + 1, c2 - c1 - 1));
                noise_seed = std::stoull(body.substr(c2 + 1));
            }
            return vlx::BaselineSpec::noise(mean, stddev, noise_seed);
        }
        try {
            return vlx::BaselineSpec::constant(std::stod(baseline));
        } catch (const std::invalid_argument&) {
            throw vlx::Error(vlx::ErrorCode::Parameter, "unrecognized baseline '" + baseline + "'");
        }
    }

    vlx::MethodSpec build(const std::string& name) const {
        vlx::MethodSpec spec = vlx::MethodSpec::named(name);
        switch (spec.kind) {
            case vlx::MethodSpec::Kind::Saliency: break;
            case vlx::MethodSpec::Kind::Occlusion: {
                vlx::OcclusionParams p;
                p.window = window;
                p.stride = stride;
                if (fill == "auto") {
                    p.fill = corpus_dir.empty() ? 0.0 : resolve_corpus_mean();
                } else {
                    p.fill = std::stod(fill);
                }
                spec = vlx::MethodSpec::occlusion_method(p);
                break;
            }
            case vlx::MethodSpec::Kind::IntegratedGradients: {
                vlx::IgParams p;
                p.steps = steps;
                p.baseline = parse_baseline();
                spec = vlx::MethodSpec::ig_method(p);
                break;
            }
            case vlx::MethodSpec::Kind::GradientShap: {
                vlx::GradShapParams p;
                p.samples = samples;
                p.seed = seed;
                if (baseline.rfind("noise:", 0) == 0) {
                    const auto noise = parse_baseline();
                    p.mean = noise.mean;
                    p.stddev = noise.stddev;
                } else {
                    p.mean = 0.5;
                    p.stddev = 0.25;
                }
                spec = vlx::MethodSpec::gradshap_method(p);
                break;
            }
        }
        return spec;
    }
};

struct RenderFlags {
    std::string colormap = "auto";  // diverging | magnitude | auto (per method)
    std::string normalization = "auto";
    double alpha = 0.6;

    void add_to(CLI::App* cmd) {
        cmd->add_option("--colormap", colormap, "diverging | magnitude (default per method)");
        cmd->add_option("--norm", normalization, "symmetric | minmax (default per colormap)");
        cmd->add_option("--alpha", alpha, "heat overlay opacity in [0,1]");
    }

    vlx::RenderSpec build(const std::string& method) const {
        vlx::RenderSpec spec;
        std::string cm = colormap;
        if (cm == "auto") cm = (method == "occlusion") ? "magnitude" : "diverging";
        if (cm == "diverging") {
            spec.colormap = vlx::Colormap::SignedDiverging;
        } else if (cm == "magnitude") {
            spec.colormap = vlx::Colormap::Magnitude;
        } else {
            throw vlx::Error(vlx::ErrorCode::Parameter, "unknown colormap '" + cm + "'");
        }
        std::string nm = normalization;
        if (nm == "auto") nm = (cm == "diverging") ? "symmetric" : "minmax";
        if (nm == "symmetric") {
            spec.normalization = vlx::Normalization::SymmetricMax;
        } else if (nm == "minmax") {
            spec.normalization = vlx::Normalization::MinMax;
        } else {
            throw vlx::Error(vlx::ErrorCode::Parameter, "unknown normalization '" + nm + "'");
        }
        spec.alpha = alpha;
        spec.validate();
        return spec;
    }
};

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw vlx::Error(vlx::ErrorCode::Io, "cannot write " + path.string());
    f << text;
}

void write_map_png(const fs::path& path, const std::vector<double>& values, std::size_t side,
                   const std::vector<double>& base, const vlx::RenderSpec& spec) {
    vlx::write_png_rgb(path, vlx::render_heatmap(values, side, base, spec));
}

int run_gen(const std::string& out_dir, std::size_t n, std::size_t side, std::size_t classes,
            std::uint64_t seed) {
    vlx::DatasetConfig cfg;
    cfg.n = n;
    cfg.image_side = side;
    cfg.n_classes = classes;
    auto corpus = vlx::generate_dataset(cfg, seed);
    vlx::save_corpus(corpus, out_dir);

    auto prompts = vlx::build_prompt_sets(corpus.class_names, 10, seed);
    json pj;
    pj["classes"] = corpus.class_names;
    pj["prompt_sets"] = json::array();
    for (const auto& set : prompts.descriptive) {
        pj["prompt_sets"].push_back({{"label", set.label}, {"prompts", set.prompts}});
    }
    pj["label_sets"] = json::array();
    for (const auto& set : prompts.labels) {
        pj["label_sets"].push_back({{"label", set.label}, {"prompts", set.prompts}});
    }
    write_text(fs::path(out_dir) / "prompts.json", pj.dump(2) + "\n");

    std::printf("corpus: %s (n=%zu, side=%zu, classes=%zu, mean_pixel=%.6f)\n", out_dir.c_str(),
                corpus.samples.size(), side, classes, corpus.mean_pixel);
    return 0;
}

int run_train(const std::string& corpus_dir, const std::string& out_path, std::size_t epochs,
              std::size_t batch, double lr, std::uint64_t seed, const std::string& loss_csv) {
    auto corpus = vlx::load_corpus(corpus_dir);
    vlx::ModelConfig cfg;
    cfg.image_side = corpus.config.image_side;
    cfg.vocab = corpus.vocab;
    cfg.seed = seed;
    auto model = vlx::DualEncoderModel::init(cfg);

    vlx::TrainOptions opt;
    opt.epochs = epochs;
    opt.batch_size = batch;
    opt.learning_rate = lr;
    opt.seed = seed;

    const auto t0 = std::chrono::steady_clock::now();
    auto result = vlx::train_contrastive(model, corpus.samples, opt);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    model.save(out_path);
    std::string csv = "epoch,loss\n";
    for (std::size_t e = 0; e < result.epoch_loss.size(); ++e) {
        char line[64];
        std::snprintf(line, sizeof(line), "%zu,%.17g\n", e + 1, result.epoch_loss[e]);
        csv += line;
    }
    const fs::path csv_path = loss_csv.empty() ? fs::path(out_path + ".loss.csv") : fs::path(loss_csv);
    write_text(csv_path, csv);

    std::printf("model: %s (epochs=%zu, final loss=%.6f, tau=%.4f, %.1fs)\n", out_path.c_str(),
                epochs, result.epoch_loss.empty() ? 0.0 : result.epoch_loss.back(),
                model.temperature(), secs);
    std::printf("loss log: %s\n", csv_path.string().c_str());
    return 0;
}

int run_stack(const std::string& model_path, const std::string& image_path,
              const MethodFlags& flags, const std::string& out_path) {
    auto model = vlx::DualEncoderModel::load(model_path);
    auto img = vlx::load_image(image_path, model.config().image_side);
    auto spec = flags.build(flags.method);
    auto stack = vlx::per_dimension_maps(model, img, spec);
    vlx::save_stack(stack, out_path);
    std::printf("stack: %s (M=%zu, A=%zu, method=%s)\n", out_path.c_str(), stack.embed_dim,
                stack.side, stack.method.c_str());
    return 0;
}

int run_fuse(const std::string& stack_path, const std::string& model_path,
             const std::string& prompt, const std::string& out_path, const std::string& png_path,
             const std::string& image_path, const RenderFlags& render) {
    auto model = vlx::DualEncoderModel::load(model_path);
    auto stack = vlx::load_stack(stack_path);
    const auto text = vlx::tokenize(prompt, model.config().vocab);
    const auto embedding = model.encode_text(text);
    auto fused = vlx::fuse(stack, embedding, model.temperature(), model.fingerprint());
    fused.prompt = prompt;
    write_text(out_path, vlx::fused_map_to_json(fused));
    std::printf("stack: loaded\nfused: %s\n", out_path.c_str());

    if (!png_path.empty()) {
        std::vector<double> base(fused.side * fused.side, 0.0);
        auto spec = render.build(fused.method);
        if (!image_path.empty()) {
            base = vlx::load_image(image_path, fused.side).pixels;
        } else {
            spec.alpha = 1.0;  // no base image: pure heat layer
        }
        write_map_png(png_path, fused.values, fused.side, base, spec);
        std::printf("png: %s\n", png_path.c_str());
    }
    return 0;
}

int run_explain(const std::string& model_path, const std::string& image_path,
                const std::string& prompt, const MethodFlags& flags, const std::string& out_path,
                const std::string& png_path, const std::string& cache_dir,
                const RenderFlags& render) {
    auto model = vlx::DualEncoderModel::load(model_path);
    auto img = vlx::load_image(image_path, model.config().image_side);
    auto spec = flags.build(flags.method);

    vlx::StackCache cache(cache_dir.empty() ? vlx::StackCache::default_dir()
                                            : fs::path(cache_dir));
    const std::size_t misses_before = cache.misses();
    auto fused = vlx::explain_fused(model, img, prompt, spec, &cache);
    std::printf("stack: %s\n", cache.misses() > misses_before ? "built" : "cached");

    write_text(out_path, vlx::fused_map_to_json(fused));
    std::printf("fused: %s\n", out_path.c_str());
    if (!png_path.empty()) {
        write_map_png(png_path, fused.values, fused.side, img.pixels, render.build(fused.method));
        std::printf("png: %s\n", png_path.c_str());
    }
    return 0;
}

std::vector<vlx::PromptSet> parse_prompt_sets(const json& arr) {
    std::vector<vlx::PromptSet> out;
    for (const auto& e : arr) {
        vlx::PromptSet set;
        set.label = e.at("label").get<std::string>();
        set.prompts = e.at("prompts").get<std::vector<std::string>>();
        out.push_back(std::move(set));
    }
    return out;
}

int run_compare(const std::string& model_path, const std::string& image_path,
                const std::string& prompts_path, const std::string& methods_csv,
                const std::string& out_dir, const std::string& mask_path,
                const MethodFlags& flags, const RenderFlags& render) {
    auto model = vlx::DualEncoderModel::load(model_path);
    auto img = vlx::load_image(image_path, model.config().image_side);
    const std::size_t side = img.side;

    std::ifstream pf(prompts_path);
    if (!pf) throw vlx::Error(vlx::ErrorCode::Io, "cannot open prompts file " + prompts_path);
    json pj;
    try {
        pf >> pj;
    } catch (const json::exception& e) {
        throw vlx::Error(vlx::ErrorCode::Format, "prompts file: " + std::string(e.what()));
    }
    std::vector<vlx::PromptSet> prompt_sets, label_sets;
    if (pj.is_array()) {
        prompt_sets = parse_prompt_sets(pj);
    } else {
        prompt_sets = parse_prompt_sets(pj.at("prompt_sets"));
        if (pj.contains("label_sets")) label_sets = parse_prompt_sets(pj.at("label_sets"));
    }
    if (label_sets.empty()) {
        for (const auto& set : prompt_sets) label_sets.push_back({set.label, {set.label}});
    }

    std::vector<std::uint8_t> mask;
    if (!mask_path.empty()) {
        auto m = vlx::load_image(mask_path, side);
        mask.resize(m.pixels.size());
        for (std::size_t i = 0; i < m.pixels.size(); ++i) mask[i] = m.pixels[i] > 0.5 ? 1 : 0;
    }

    fs::create_directories(out_dir);
    vlx::StackCache cache(fs::path(out_dir) / ".vlx_cache");

    std::vector<std::string> methods;
    {
        std::string token;
        for (char c : methods_csv + ",") {
            if (c == ',') {
                if (!token.empty()) methods.push_back(token);
                token.clear();
            } else {
                token.push_back(c);
            }
        }
    }
    if (methods.empty()) throw vlx::Error(vlx::ErrorCode::Parameter, "no methods given");

    json report;
    report["image"] = image_path;
    report["classes"] = json::array();
    for (const auto& set : prompt_sets) report["classes"].push_back(set.label);
    report["methods"] = json::object();

    for (const auto& method_name : methods) {
        auto spec = flags.build(method_name);
        const auto render_spec = render.build(method_name);

        std::vector<std::vector<double>> conventional, fused_prompt, fused_label;
        json method_json;
        for (std::size_t k = 0; k < prompt_sets.size(); ++k) {
            const std::string& label = prompt_sets[k].label;
            auto conv = vlx::explain_conventional(model, img, prompt_sets, k, spec);
            auto fp = vlx::explain_fused(model, img, prompt_sets[k].prompts.front(), spec, &cache);
            auto fl = vlx::explain_fused(model, img, label_sets[k].prompts.front(), spec, &cache);

            write_map_png(fs::path(out_dir) / ("conventional_" + method_name + "_" + label + ".png"),
                          conv.values, side, img.pixels, render_spec);
            write_map_png(fs::path(out_dir) / ("fused_" + method_name + "_" + label + ".png"),
                          fp.values, side, img.pixels, render_spec);
            write_map_png(fs::path(out_dir) / ("fused_label_" + method_name + "_" + label + ".png"),
                          fl.values, side, img.pixels, render_spec);

            json class_json = json::object();
            if (!mask.empty()) {
                class_json["conventional_mass"] = vlx::top_decile_mass_in_mask(conv.values, mask);
                class_json["fused_mass"] = vlx::top_decile_mass_in_mask(fp.values, mask);
                class_json["fused_label_mass"] = vlx::top_decile_mass_in_mask(fl.values, mask);
            }
            method_json["per_class"][label] = class_json;

            conventional.push_back(conv.values);
            fused_prompt.push_back(fp.values);
            fused_label.push_back(fl.values);
        }
        if (prompt_sets.size() >= 2) {
            method_json["conventional_interclass_corr"] =
                vlx::mean_pairwise_abs_correlation(conventional);
            method_json["fused_interclass_corr"] = vlx::mean_pairwise_abs_correlation(fused_prompt);
            method_json["fused_label_interclass_corr"] =
                vlx::mean_pairwise_abs_correlation(fused_label);
        }
        report["methods"][method_name] = method_json;
    }

    write_text(fs::path(out_dir) / "metrics.json", report.dump(2) + "\n");
    std::printf("report: %s\n", (fs::path(out_dir) / "metrics.json").string().c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"embedding-space attribution for a dual-encoder vision-language model"};
    app.require_subcommand(1);

    // gen
    auto* gen = app.add_subcommand("gen", "generate a synthetic shapes corpus");
    std::string gen_out;
    std::size_t gen_n = 2000, gen_side = 64, gen_classes = 4;
    std::uint64_t gen_seed = 1;
    gen->add_option("--out", gen_out, "output directory")->required();
    gen->add_option("--n", gen_n, "sample count (default 2000)");
    gen->add_option("--side", gen_side, "image side in pixels (default 64)");
    gen->add_option("--classes", gen_classes, "class count, 1..4 (default 4)");
    gen->add_option("--seed", gen_seed, "generation seed");

    // train
    auto* train = app.add_subcommand("train", "train the dual encoder on a corpus");
    std::string train_corpus, train_out, train_loss_csv;
    std::size_t train_epochs = 30, train_batch = 32;
    double train_lr = 2e-3;
    std::uint64_t train_seed = 1;
    train->add_option("--corpus", train_corpus, "corpus directory")->required();
    train->add_option("--out", train_out, "checkpoint path (model.vlxm)")->required();
    train->add_option("--epochs", train_epochs, "training epochs (default 30)");
    train->add_option("--batch", train_batch, "batch size (default 32)");
    train->add_option("--lr", train_lr, "Adam learning rate (default 2e-3)");
    train->add_option("--seed", train_seed, "init + shuffle seed");
    train->add_option("--loss-csv", train_loss_csv, "loss log path (default <out>.loss.csv)");

    // stack
    auto* stack = app.add_subcommand("stack", "build the per-dimension map stack");
    std::string stack_model, stack_image, stack_out;
    MethodFlags stack_flags;
    stack->add_option("--model", stack_model, "checkpoint path")->required();
    stack->add_option("--image", stack_image, "input image (PGM/PNG)")->required();
    stack->add_option("--out", stack_out, "output stack path (stack.vlxs)")->required();
    stack_flags.add_to(stack);

    // fuse
    auto* fuse_cmd = app.add_subcommand("fuse", "fuse a stack with a text prompt");
    std::string fuse_stack, fuse_model, fuse_prompt, fuse_out, fuse_png, fuse_image;
    RenderFlags fuse_render;
    fuse_cmd->add_option("--stack", fuse_stack, "stack path")->required();
    fuse_cmd->add_option("--model", fuse_model, "checkpoint path")->required();
    fuse_cmd->add_option("--prompt", fuse_prompt, "text prompt")->required();
    fuse_cmd->add_option("--out", fuse_out, "output map JSON")->required();
    fuse_cmd->add_option("--png", fuse_png, "optional rendered heatmap");
    fuse_cmd->add_option("--image", fuse_image, "base image for the overlay");
    fuse_render.add_to(fuse_cmd);

    // explain
    auto* explain = app.add_subcommand("explain", "one-shot stack+fuse with caching");
    std::string ex_model, ex_image, ex_prompt, ex_out, ex_png, ex_cache;
    MethodFlags ex_flags;
    RenderFlags ex_render;
    explain->add_option("--model", ex_model, "checkpoint path")->required();
    explain->add_option("--image", ex_image, "input image (PGM/PNG)")->required();
    explain->add_option("--prompt", ex_prompt, "text prompt")->required();
    explain->add_option("--out", ex_out, "output map JSON")->required();
    explain->add_option("--png", ex_png, "optional rendered heatmap");
    explain->add_option("--cache-dir", ex_cache, "stack cache dir (default VLX_CACHE_DIR)");
    ex_flags.add_to(explain);
    ex_render.add_to(explain);

    // compare
    auto* compare = app.add_subcommand("compare", "conventional vs fused explanation report");
    std::string cmp_model, cmp_image, cmp_prompts, cmp_methods = "saliency", cmp_out, cmp_mask;
    MethodFlags cmp_flags;
    RenderFlags cmp_render;
    compare->add_option("--model", cmp_model, "checkpoint path")->required();
    compare->add_option("--image", cmp_image, "input image (PGM/PNG)")->required();
    compare->add_option("--prompts-file", cmp_prompts, "prompt sets JSON")->required();
    compare->add_option("--methods", cmp_methods, "comma-separated method list");
    compare->add_option("--out", cmp_out, "report directory")->required();
    compare->add_option("--mask", cmp_mask, "object mask for localization metrics");
    cmp_flags.add_to(compare, false);
    cmp_render.add_to(compare);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "E_USAGE: " << e.what() << "\n";
        return 2;
    }

    try {
        if (*gen) return run_gen(gen_out, gen_n, gen_side, gen_classes, gen_seed);
        if (*train) {
            return run_train(train_corpus, train_out, train_epochs, train_batch, train_lr,
                             train_seed, train_loss_csv);
        }
        if (*stack) return run_stack(stack_model, stack_image, stack_flags, stack_out);
        if (*fuse_cmd) {
            return run_fuse(fuse_stack, fuse_model, fuse_prompt, fuse_out, fuse_png, fuse_image,
                            fuse_render);
        }
        if (*explain) {
            return run_explain(ex_model, ex_image, ex_prompt, ex_flags, ex_out, ex_png, ex_cache,
                               ex_render);
        }
        if (*compare) {
            return run_compare(cmp_model, cmp_image, cmp_prompts, cmp_methods, cmp_out, cmp_mask,
                               cmp_flags, cmp_render);
        }
    } catch (const vlx::Error& e) {
        std::cerr << e.code_name() << ": " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "E_INTERNAL: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
