#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "vlx/sha256.hpp"
#include "vlx/tensor.hpp"
#include "vlx/types.hpp"

namespace vlx {

inline constexpr const char* kUnkToken = "<unk>";

struct ModelConfig {
    std::size_t image_side = 64;   // A
    std::size_t patch_size = 8;    // must divide image_side
    std::size_t vision_hidden = 128;
    std::size_t text_hidden = 64;
    std::size_t embed_dim = 32;    // M, shared by both projection heads
    std::vector<std::string> vocab;  // index 0 reserved for UNK
    double init_temperature = 1.0;
    std::uint64_t seed = 1;

    void validate() const;
};

// Lowercase, split on whitespace/punctuation, map to vocab indices with
// unknown words falling back to UNK (index 0).
TextInput tokenize(const std::string& raw, const std::vector<std::string>& vocab);

// Dual-encoder similarity model: patch-MLP vision encoder and
// bag-of-embeddings text encoder, each followed by a linear projection into a
// shared M-dimensional space; embeddings are L2-normalized and compared by a
// temperature-scaled dot product.
class DualEncoderModel {
  public:
    static DualEncoderModel init(ModelConfig cfg);

    const ModelConfig& config() const { return cfg_; }
    double temperature() const { return temperature_.item(); }

    // Tape-level encoders; `pixels` is a 1 x A*A row. Outputs are unit rows
    // of length M.
    Tensor image_embedding_on(Tape& tape, const Tensor& pixels) const;
    Tensor text_embedding_on(Tape& tape, const std::vector<std::size_t>& tokens) const;

    // Temperature-scaled similarity logit built on the tape from pixels
    // against a fixed text embedding.
    Tensor similarity_on(Tape& tape, const Tensor& pixels,
                         const std::vector<double>& text_embedding) const;

    // Zero-shot classifier probability for one class, on tape. Class logits
    // are the per-set mean of prompt similarities; probabilities are their
    // softmax.
    Tensor class_probability_on(Tape& tape, const Tensor& pixels,
                                const std::vector<std::vector<std::vector<double>>>& class_prompt_embeds,
                                std::size_t class_index) const;

    std::vector<double> encode_image(const ImageInput& img) const;
    std::vector<double> encode_text(const TextInput& txt) const;
    double similarity(const std::vector<double>& image_embedding,
                      const std::vector<double>& text_embedding) const;
    std::vector<double> prompt_classify(const ImageInput& img,
                                        const std::vector<PromptSet>& prompt_sets) const;

    // Encodes every prompt of every set; shared by classification and the
    // conventional-attribution target.
    std::vector<std::vector<std::vector<double>>> encode_prompt_sets(
        const std::vector<PromptSet>& prompt_sets) const;

    // All learnable tensors, temperature last. Handles share storage with the
    // model, so optimizer updates through mutable_data() are visible.
    std::vector<Tensor> parameters();
    Tensor temperature_tensor() { return temperature_; }
    void clamp_temperature(double lo, double hi);

    std::vector<std::uint8_t> serialize() const;
    static DualEncoderModel deserialize(const std::uint8_t* data, std::size_t size);
    void save(const std::filesystem::path& path) const;
    static DualEncoderModel load(const std::filesystem::path& path);

    // SHA-256 of the serialized checkpoint; identifies the exact weights a
    // map stack was built against.
    Digest256 fingerprint() const;

  private:
    DualEncoderModel() = default;
    Tensor mlp_block_on(Tape& tape, const Tensor& x, const Tensor& w1, const Tensor& b1,
                        const Tensor& w2, const Tensor& b2) const;

    ModelConfig cfg_;
    std::vector<std::size_t> patch_index_;  // flattens A*A pixels into patch rows

    Tensor patch_embed_w_, patch_embed_b_, patch_pos_embed_;
    Tensor v_mlp_w1_, v_mlp_b1_, v_mlp_w2_, v_mlp_b2_;
    Tensor proj_v_;
    Tensor token_embed_;
    Tensor t_mlp_w1_, t_mlp_b1_, t_mlp_w2_, t_mlp_b2_;
    Tensor proj_t_;
    Tensor temperature_;
};

struct TrainOptions {
    std::size_t epochs = 30;
    std::size_t batch_size = 32;
    double learning_rate = 2e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_epsilon = 1e-8;
    double weight_decay = 0.0;
    // Stepwise schedule: lr * lr_decay_factor^(epoch / lr_decay_every).
    std::size_t lr_decay_every = 15;
    double lr_decay_factor = 0.5;
    std::uint64_t seed = 1;
    double temperature_min = 0.05;
    double temperature_max = 100.0;
};

struct TrainResult {
    std::vector<double> epoch_loss;  // mean batch loss per epoch
};

// Symmetric in-batch InfoNCE over image-caption pairs, optimized with Adam.
// Batches never contain duplicate captions; colliding samples wait for a
// later batch. Deterministic given the seed.
TrainResult train_contrastive(DualEncoderModel& model, const std::vector<Sample>& dataset,
                              const TrainOptions& options);

// Fraction of samples whose zero-shot argmax matches their class id.
double evaluate_zero_shot(const DualEncoderModel& model, const std::vector<Sample>& samples,
                          const std::vector<PromptSet>& prompt_sets);

}  // namespace vlx
