#include "vlx/model.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <unordered_set>

#include "vlx/rng.hpp"
#include "vlx/wire.hpp"

namespace vlx {

namespace {

constexpr char kModelMagic[4] = {'V', 'L', 'X', 'M'};
constexpr std::uint32_t kModelVersion = 1;

Tensor random_matrix(Rng& rng, std::size_t rows, std::size_t cols, double stddev) {
    std::vector<double> v(rows * cols);
    for (auto& x : v) x = rng.normal(0.0, stddev);
    return Tensor::from_data(rows, cols, std::move(v), true);
}

}  // namespace

void ModelConfig::validate() const {
    if (image_side == 0 || patch_size == 0 || image_side % patch_size != 0) {
        throw Error(ErrorCode::Config,
                    "model config: patch size " + std::to_string(patch_size) +
                        " must divide image side " + std::to_string(image_side));
    }
    if (embed_dim < 1) throw Error(ErrorCode::Config, "model config: embed_dim must be >= 1");
    if (vision_hidden < 1 || text_hidden < 1) {
        throw Error(ErrorCode::Config, "model config: hidden sizes must be >= 1");
    }
    if (vocab.empty() || vocab[0] != kUnkToken) {
        throw Error(ErrorCode::Config,
                    std::string("model config: vocab must reserve index 0 for ") + kUnkToken);
    }
    if (!(init_temperature > 0.0)) {
        throw Error(ErrorCode::Config, "model config: init_temperature must be positive");
    }
}

TextInput tokenize(const std::string& raw, const std::vector<std::string>& vocab) {
    TextInput out;
    out.raw = raw;
    std::string word;
    std::vector<std::string> words;
    for (char ch : raw) {
        const unsigned char c = static_cast<unsigned char>(ch);
        if (std::isalnum(c)) {
            word.push_back(static_cast<char>(std::tolower(c)));
        } else if (!word.empty()) {
            words.push_back(std::move(word));
            word.clear();
        }
    }
    if (!word.empty()) words.push_back(std::move(word));
    if (words.empty()) {
        throw Error(ErrorCode::Input, "tokenize: empty text");
    }
    for (const auto& w : words) {
        std::size_t idx = 0;  // UNK
        for (std::size_t i = 1; i < vocab.size(); ++i) {
            if (vocab[i] == w) {
                idx = i;
                break;
            }
        }
        out.tokens.push_back(idx);
    }
    return out;
}

DualEncoderModel DualEncoderModel::init(ModelConfig cfg) {
    cfg.validate();
    DualEncoderModel m;
    m.cfg_ = cfg;

    const std::size_t a = cfg.image_side, p = cfg.patch_size;
    const std::size_t patches_per_side = a / p;
    m.patch_index_.reserve(a * a);
    for (std::size_t pr = 0; pr < patches_per_side; ++pr) {
        for (std::size_t pc = 0; pc < patches_per_side; ++pc) {
            for (std::size_t i = 0; i < p; ++i) {
                for (std::size_t j = 0; j < p; ++j) {
                    m.patch_index_.push_back((pr * p + i) * a + (pc * p + j));
                }
            }
        }
    }

    const std::size_t d = cfg.vision_hidden, e = cfg.text_hidden, mm = cfg.embed_dim;
    const std::size_t patch_dim = p * p;
    Rng rng(cfg.seed);
    m.patch_embed_w_ = random_matrix(rng, patch_dim, d, 1.0 / std::sqrt(double(patch_dim)));
    m.patch_embed_b_ = Tensor::zeros(1, d, true);
    const std::size_t n_patches = patches_per_side * patches_per_side;
    m.patch_pos_embed_ = random_matrix(rng, n_patches, d, 0.1);
    m.v_mlp_w1_ = random_matrix(rng, d, d, 1.0 / std::sqrt(double(d)));
    m.v_mlp_b1_ = Tensor::zeros(1, d, true);
    m.v_mlp_w2_ = random_matrix(rng, d, d, 1.0 / std::sqrt(double(d)));
    m.v_mlp_b2_ = Tensor::zeros(1, d, true);
    m.proj_v_ = random_matrix(rng, d, mm, 1.0 / std::sqrt(double(d)));
    m.token_embed_ = random_matrix(rng, cfg.vocab.size(), e, 0.1);
    m.t_mlp_w1_ = random_matrix(rng, e, e, 1.0 / std::sqrt(double(e)));
    m.t_mlp_b1_ = Tensor::zeros(1, e, true);
    m.t_mlp_w2_ = random_matrix(rng, e, e, 1.0 / std::sqrt(double(e)));
    m.t_mlp_b2_ = Tensor::zeros(1, e, true);
    m.proj_t_ = random_matrix(rng, e, mm, 1.0 / std::sqrt(double(e)));
    m.temperature_ = Tensor::scalar(cfg.init_temperature, true);
    return m;
}

Tensor DualEncoderModel::mlp_block_on(Tape& tape, const Tensor& x, const Tensor& w1,
                                      const Tensor& b1, const Tensor& w2,
                                      const Tensor& b2) const {
    Tensor h = tape.gelu(tape.add(tape.matmul(x, w1), b1));
    return tape.add(tape.matmul(h, w2), b2);
}

Tensor DualEncoderModel::image_embedding_on(Tape& tape, const Tensor& pixels) const {
    const std::size_t a = cfg_.image_side, p = cfg_.patch_size;
    if (pixels.numel() != a * a) {
        throw Error(ErrorCode::Dimension, "encode_image: expected " + std::to_string(a * a) +
                                              " pixels, got " + std::to_string(pixels.numel()));
    }
    const std::size_t n_patches = (a / p) * (a / p);
    // Per-image mean centering: removes the background level common to all
    // inputs, which otherwise dominates the pooled features and collapses
    // the embedding geometry.
    Tensor pixel_mean = tape.mean_pool_rows(tape.transpose(pixels));
    Tensor centered = tape.scale(tape.sub(pixels, pixel_mean), 2.0);
    Tensor patches = tape.gather(centered, patch_index_, n_patches, p * p);
    Tensor embedded = tape.add(tape.add(tape.matmul(patches, patch_embed_w_), patch_embed_b_),
                               patch_pos_embed_);
    Tensor features = mlp_block_on(tape, embedded, v_mlp_w1_, v_mlp_b1_, v_mlp_w2_, v_mlp_b2_);
    Tensor pooled = tape.mean_pool_rows(features);
    return tape.l2_normalize_rows(tape.matmul(pooled, proj_v_));
}

Tensor DualEncoderModel::text_embedding_on(Tape& tape, const std::vector<std::size_t>& tokens) const {
    if (tokens.empty()) throw Error(ErrorCode::Input, "encode_text: no tokens");
    const std::size_t e = cfg_.text_hidden;
    // Canonical bag order: sorting the indices makes the mean-pool exactly
    // permutation-invariant, not just up to float reassociation.
    std::vector<std::size_t> bag(tokens);
    std::sort(bag.begin(), bag.end());
    std::vector<std::size_t> idx;
    idx.reserve(bag.size() * e);
    for (std::size_t t : bag) {
        if (t >= cfg_.vocab.size()) {
            throw Error(ErrorCode::Input, "encode_text: token index " + std::to_string(t) +
                                              " outside vocab of " +
                                              std::to_string(cfg_.vocab.size()));
        }
        for (std::size_t j = 0; j < e; ++j) idx.push_back(t * e + j);
    }
    Tensor rows = tape.gather(token_embed_, idx, bag.size(), e);
    Tensor pooled = tape.mean_pool_rows(rows);
    Tensor features = mlp_block_on(tape, pooled, t_mlp_w1_, t_mlp_b1_, t_mlp_w2_, t_mlp_b2_);
    return tape.l2_normalize_rows(tape.matmul(features, proj_t_));
}

Tensor DualEncoderModel::similarity_on(Tape& tape, const Tensor& pixels,
                                       const std::vector<double>& text_embedding) const {
    if (text_embedding.size() != cfg_.embed_dim) {
        throw Error(ErrorCode::Dimension,
                    "similarity: text embedding length " + std::to_string(text_embedding.size()) +
                        " != M=" + std::to_string(cfg_.embed_dim));
    }
    Tensor image_embed = image_embedding_on(tape, pixels);
    Tensor text_col = Tensor::from_data(cfg_.embed_dim, 1, text_embedding);
    Tensor dot = tape.matmul(image_embed, text_col);
    return tape.mul(dot, temperature_);
}

Tensor DualEncoderModel::class_probability_on(
    Tape& tape, const Tensor& pixels,
    const std::vector<std::vector<std::vector<double>>>& class_prompt_embeds,
    std::size_t class_index) const {
    if (class_prompt_embeds.empty()) {
        throw Error(ErrorCode::Input, "classify: no classes");
    }
    if (class_index >= class_prompt_embeds.size()) {
        throw Error(ErrorCode::Input, "classify: class index " + std::to_string(class_index) +
                                          " out of range");
    }
    const std::size_t m = cfg_.embed_dim;
    Tensor image_embed = image_embedding_on(tape, pixels);

    std::vector<Tensor> logits;  // each 1x1, stacked to (K,1)
    for (const auto& prompts : class_prompt_embeds) {
        if (prompts.empty()) {
            throw Error(ErrorCode::Input, "classify: empty prompt set");
        }
        // Columns are prompt embeddings: (M, P)
        std::vector<double> cols(m * prompts.size());
        for (std::size_t pi = 0; pi < prompts.size(); ++pi) {
            if (prompts[pi].size() != m) {
                throw Error(ErrorCode::Dimension, "classify: prompt embedding length mismatch");
            }
            for (std::size_t r = 0; r < m; ++r) cols[r * prompts.size() + pi] = prompts[pi][r];
        }
        Tensor prompt_matrix = Tensor::from_data(m, prompts.size(), std::move(cols));
        Tensor sims = tape.matmul(image_embed, prompt_matrix);  // (1,P) cosines
        Tensor mean_sim = tape.scale(tape.sum(sims), 1.0 / double(prompts.size()));
        logits.push_back(tape.mul(mean_sim, temperature_));
    }
    Tensor logits_col = tape.concat_rows(logits);            // (K,1)
    Tensor probs = tape.softmax_rows(tape.transpose(logits_col));  // (1,K)
    return tape.gather(probs, {class_index}, 1, 1);
}

std::vector<double> DualEncoderModel::encode_image(const ImageInput& img) const {
    img.validate();
    if (img.side != cfg_.image_side) {
        throw Error(ErrorCode::Dimension, "encode_image: image side " + std::to_string(img.side) +
                                              " != configured " + std::to_string(cfg_.image_side));
    }
    Tape tape(Tape::kNoGrad);
    Tensor pixels = Tensor::from_data(1, img.pixels.size(), img.pixels);
    return image_embedding_on(tape, pixels).data();
}

std::vector<double> DualEncoderModel::encode_text(const TextInput& txt) const {
    Tape tape(Tape::kNoGrad);
    return text_embedding_on(tape, txt.tokens).data();
}

double DualEncoderModel::similarity(const std::vector<double>& image_embedding,
                                    const std::vector<double>& text_embedding) const {
    if (image_embedding.size() != cfg_.embed_dim || text_embedding.size() != cfg_.embed_dim) {
        throw Error(ErrorCode::Dimension,
                    "similarity: embedding lengths " + std::to_string(image_embedding.size()) +
                        " and " + std::to_string(text_embedding.size()) +
                        " must both equal M=" + std::to_string(cfg_.embed_dim));
    }
    double dot = 0.0;
    for (std::size_t i = 0; i < image_embedding.size(); ++i) {
        dot += image_embedding[i] * text_embedding[i];
    }
    return temperature_.item() * dot;
}

std::vector<std::vector<std::vector<double>>> DualEncoderModel::encode_prompt_sets(
    const std::vector<PromptSet>& prompt_sets) const {
    std::vector<std::vector<std::vector<double>>> out;
    out.reserve(prompt_sets.size());
    for (const auto& set : prompt_sets) {
        if (set.prompts.empty()) {
            throw Error(ErrorCode::Input, "prompt set '" + set.label + "' is empty");
        }
        std::vector<std::vector<double>> embeds;
        embeds.reserve(set.prompts.size());
        for (const auto& prompt : set.prompts) {
            embeds.push_back(encode_text(tokenize(prompt, cfg_.vocab)));
        }
        out.push_back(std::move(embeds));
    }
    return out;
}

std::vector<double> DualEncoderModel::prompt_classify(
    const ImageInput& img, const std::vector<PromptSet>& prompt_sets) const {
    if (prompt_sets.empty()) throw Error(ErrorCode::Input, "classify: no classes");
    img.validate();
    const auto embeds = encode_prompt_sets(prompt_sets);
    const auto image_embed = encode_image(img);

    std::vector<double> logits(prompt_sets.size());
    for (std::size_t k = 0; k < embeds.size(); ++k) {
        double acc = 0.0;
        for (const auto& t : embeds[k]) acc += similarity(image_embed, t);
        logits[k] = acc / double(embeds[k].size());
    }
    double mx = logits[0];
    for (double v : logits) mx = std::max(mx, v);
    double z = 0.0;
    std::vector<double> probs(logits.size());
    for (std::size_t k = 0; k < logits.size(); ++k) {
        probs[k] = std::exp(logits[k] - mx);
        z += probs[k];
    }
    for (auto& v : probs) v /= z;
    return probs;
}

std::vector<Tensor> DualEncoderModel::parameters() {
    return {patch_embed_w_, patch_embed_b_, patch_pos_embed_, v_mlp_w1_, v_mlp_b1_,
            v_mlp_w2_,      v_mlp_b2_,      proj_v_,          token_embed_, t_mlp_w1_,
            t_mlp_b1_,      t_mlp_w2_,      t_mlp_b2_,        proj_t_,      temperature_};
}

void DualEncoderModel::clamp_temperature(double lo, double hi) {
    double& tau = temperature_.mutable_data()[0];
    tau = std::clamp(tau, lo, hi);
}

namespace {

const char* const kParamNames[] = {
    "patch_embed_w", "patch_embed_b", "patch_pos_embed", "v_mlp_w1", "v_mlp_b1",
    "v_mlp_w2",      "v_mlp_b2",      "proj_v",          "token_embed", "t_mlp_w1",
    "t_mlp_b1",      "t_mlp_w2",      "t_mlp_b2",        "proj_t",
};

}  // namespace

std::vector<std::uint8_t> DualEncoderModel::serialize() const {
    std::vector<std::uint8_t> out;
    out.insert(out.end(), kModelMagic, kModelMagic + 4);
    wire::put_u32(out, kModelVersion);
    wire::put_u32(out, static_cast<std::uint32_t>(cfg_.image_side));
    wire::put_u32(out, static_cast<std::uint32_t>(cfg_.patch_size));
    wire::put_u32(out, static_cast<std::uint32_t>(cfg_.vision_hidden));
    wire::put_u32(out, static_cast<std::uint32_t>(cfg_.text_hidden));
    wire::put_u32(out, static_cast<std::uint32_t>(cfg_.embed_dim));
    wire::put_f64(out, cfg_.init_temperature);
    wire::put_u64(out, cfg_.seed);
    wire::put_u32(out, static_cast<std::uint32_t>(cfg_.vocab.size()));
    for (const auto& token : cfg_.vocab) wire::put_string(out, token);

    const DualEncoderModel& self = *this;
    const Tensor tensors[] = {self.patch_embed_w_, self.patch_embed_b_, self.patch_pos_embed_,
                              self.v_mlp_w1_,      self.v_mlp_b1_,      self.v_mlp_w2_,
                              self.v_mlp_b2_,      self.proj_v_,        self.token_embed_,
                              self.t_mlp_w1_,      self.t_mlp_b1_,      self.t_mlp_w2_,
                              self.t_mlp_b2_,      self.proj_t_};
    wire::put_u32(out, 14);
    for (std::size_t i = 0; i < 14; ++i) {
        wire::put_string(out, kParamNames[i]);
        wire::put_u32(out, static_cast<std::uint32_t>(tensors[i].rows()));
        wire::put_u32(out, static_cast<std::uint32_t>(tensors[i].cols()));
        for (double v : tensors[i].data()) wire::put_f64(out, v);
    }
    wire::put_f64(out, temperature_.item());
    return out;
}

DualEncoderModel DualEncoderModel::deserialize(const std::uint8_t* data, std::size_t size) {
    wire::Reader r(data, size);
    r.expect_magic(kModelMagic, "model checkpoint");
    const std::uint32_t version = r.u32();
    if (version != kModelVersion) {
        throw Error(ErrorCode::Format,
                    "model checkpoint: unsupported version " + std::to_string(version));
    }
    ModelConfig cfg;
    cfg.image_side = r.u32();
    cfg.patch_size = r.u32();
    cfg.vision_hidden = r.u32();
    cfg.text_hidden = r.u32();
    cfg.embed_dim = r.u32();
    cfg.init_temperature = r.f64();
    cfg.seed = r.u64();
    const std::uint32_t vocab_size = r.u32();
    cfg.vocab.reserve(vocab_size);
    for (std::uint32_t i = 0; i < vocab_size; ++i) cfg.vocab.push_back(r.str());

    DualEncoderModel m = DualEncoderModel::init(cfg);
    const std::uint32_t n_tensors = r.u32();
    if (n_tensors != 14) {
        throw Error(ErrorCode::Format,
                    "model checkpoint: expected 14 tensors, found " + std::to_string(n_tensors));
    }
    Tensor* slots[] = {&m.patch_embed_w_, &m.patch_embed_b_, &m.patch_pos_embed_, &m.v_mlp_w1_,
                       &m.v_mlp_b1_,      &m.v_mlp_w2_,      &m.v_mlp_b2_,        &m.proj_v_,
                       &m.token_embed_,   &m.t_mlp_w1_,      &m.t_mlp_b1_,        &m.t_mlp_w2_,
                       &m.t_mlp_b2_,      &m.proj_t_};
    for (std::size_t i = 0; i < 14; ++i) {
        const std::string name = r.str();
        if (name != kParamNames[i]) {
            throw Error(ErrorCode::Format, "model checkpoint: unexpected tensor '" + name +
                                               "', wanted '" + kParamNames[i] + "'");
        }
        const std::size_t rows = r.u32(), cols = r.u32();
        if (rows != slots[i]->rows() || cols != slots[i]->cols()) {
            throw Error(ErrorCode::Format, "model checkpoint: tensor '" + name + "' has shape " +
                                               std::to_string(rows) + "x" + std::to_string(cols) +
                                               ", config implies " +
                                               std::to_string(slots[i]->rows()) + "x" +
                                               std::to_string(slots[i]->cols()));
        }
        std::vector<double> values(rows * cols);
        for (auto& v : values) v = r.f64();
        *slots[i] = Tensor::from_data(rows, cols, std::move(values), true);
    }
    m.temperature_ = Tensor::scalar(r.f64(), true);
    if (!(m.temperature_.item() > 0.0)) {
        throw Error(ErrorCode::Format, "model checkpoint: non-positive temperature");
    }
    return m;
}

void DualEncoderModel::save(const std::filesystem::path& path) const {
    const auto bytes = serialize();
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw Error(ErrorCode::Io, "cannot open for writing: " + path.string());
    f.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
    if (!f) throw Error(ErrorCode::Io, "write failed: " + path.string());
}

DualEncoderModel DualEncoderModel::load(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw Error(ErrorCode::Io, "cannot open: " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                                    std::istreambuf_iterator<char>());
    return deserialize(bytes.data(), bytes.size());
}

Digest256 DualEncoderModel::fingerprint() const {
    const auto bytes = serialize();
    return Sha256::hash(bytes.data(), bytes.size());
}

namespace {

// Drains indices in shuffled order into caption-distinct batches; colliding
// samples stay queued for later batches.
class BatchQueue {
  public:
    BatchQueue(std::vector<std::size_t> order) : pending_(std::move(order)) {}

    std::vector<std::size_t> next(std::size_t batch_size, const std::vector<Sample>& data) {
        std::vector<std::size_t> batch;
        std::unordered_set<std::string> captions;
        std::vector<std::size_t> keep;
        keep.reserve(pending_.size());
        for (std::size_t idx : pending_) {
            if (batch.size() < batch_size && captions.insert(data[idx].caption).second) {
                batch.push_back(idx);
            } else {
                keep.push_back(idx);
            }
        }
        if (batch.size() < batch_size) {
            return {};  // epoch exhausted
        }
        pending_ = std::move(keep);
        return batch;
    }

  private:
    std::vector<std::size_t> pending_;
};

}  // namespace

TrainResult train_contrastive(DualEncoderModel& model, const std::vector<Sample>& dataset,
                              const TrainOptions& options) {
    if (options.batch_size < 1) {
        throw Error(ErrorCode::Parameter, "train: batch size must be >= 1");
    }
    if (dataset.size() < options.batch_size) {
        throw Error(ErrorCode::Input, "train: dataset of " + std::to_string(dataset.size()) +
                                          " is smaller than batch size " +
                                          std::to_string(options.batch_size));
    }

    // Pre-tokenize captions once.
    std::vector<std::vector<std::size_t>> caption_tokens;
    caption_tokens.reserve(dataset.size());
    for (const auto& s : dataset) {
        caption_tokens.push_back(tokenize(s.caption, model.config().vocab).tokens);
    }

    auto params = model.parameters();
    std::vector<std::vector<double>> adam_m(params.size()), adam_v(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
        adam_m[i].assign(params[i].numel(), 0.0);
        adam_v[i].assign(params[i].numel(), 0.0);
    }
    std::uint64_t step = 0;

    Rng rng(options.seed);
    TrainResult result;
    const std::size_t b = options.batch_size;

    for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
        const double lr =
            options.lr_decay_every == 0
                ? options.learning_rate
                : options.learning_rate *
                      std::pow(options.lr_decay_factor, double(epoch / options.lr_decay_every));
        std::vector<std::size_t> order(dataset.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        rng.shuffle(order);
        BatchQueue queue(std::move(order));

        double loss_sum = 0.0;
        std::size_t batch_count = 0;
        while (true) {
            const auto batch = queue.next(b, dataset);
            if (batch.empty()) break;

            Tape tape;
            std::vector<Tensor> image_rows, text_rows;
            image_rows.reserve(b);
            text_rows.reserve(b);
            for (std::size_t idx : batch) {
                Tensor pixels =
                    Tensor::from_data(1, dataset[idx].image.pixels.size(), dataset[idx].image.pixels);
                image_rows.push_back(model.image_embedding_on(tape, pixels));
                text_rows.push_back(model.text_embedding_on(tape, caption_tokens[idx]));
            }
            Tensor images = tape.concat_rows(image_rows);  // (B, M)
            Tensor texts = tape.concat_rows(text_rows);    // (B, M)
            Tensor logits = tape.mul(tape.matmul(images, tape.transpose(texts)),
                                     model.temperature_tensor());  // (B, B)

            std::vector<std::size_t> diag(b);
            for (std::size_t i = 0; i < b; ++i) diag[i] = i * b + i;
            Tensor image_nll = tape.gather(tape.log_softmax_rows(logits), diag, b, 1);
            Tensor text_nll = tape.gather(tape.log_softmax_rows(tape.transpose(logits)), diag, b, 1);
            Tensor loss =
                tape.scale(tape.add(tape.sum(image_nll), tape.sum(text_nll)), -0.5 / double(b));

            const double loss_value = loss.item();
            if (!std::isfinite(loss_value)) {
                throw Error(ErrorCode::Train,
                            "train: non-finite loss at epoch " + std::to_string(epoch) +
                                ", batch " + std::to_string(batch_count) + ", lr " +
                                std::to_string(options.learning_rate));
            }
            tape.backward(loss);

            ++step;
            const double bias1 = 1.0 - std::pow(options.beta1, double(step));
            const double bias2 = 1.0 - std::pow(options.beta2, double(step));
            for (std::size_t i = 0; i < params.size(); ++i) {
                const auto grad = params[i].grad();
                auto& m = adam_m[i];
                auto& v = adam_v[i];
                auto& values = params[i].mutable_data();
                for (std::size_t j = 0; j < m.size(); ++j) {
                    m[j] = options.beta1 * m[j] + (1.0 - options.beta1) * grad[j];
                    v[j] = options.beta2 * v[j] + (1.0 - options.beta2) * grad[j] * grad[j];
                    if (options.learning_rate != 0.0) {
                        values[j] -= lr * ((m[j] / bias1) /
                                               (std::sqrt(v[j] / bias2) + options.adam_epsilon) +
                                           options.weight_decay * values[j]);
                    }
                }
            }
            model.clamp_temperature(options.temperature_min, options.temperature_max);

            loss_sum += loss_value;
            ++batch_count;
        }
        if (batch_count == 0) {
            throw Error(ErrorCode::Train,
                        "train: no caption-distinct batch of size " + std::to_string(b) +
                            " could be formed at epoch " + std::to_string(epoch));
        }
        result.epoch_loss.push_back(loss_sum / double(batch_count));
    }
    return result;
}

double evaluate_zero_shot(const DualEncoderModel& model, const std::vector<Sample>& samples,
                          const std::vector<PromptSet>& prompt_sets) {
    if (samples.empty()) throw Error(ErrorCode::Input, "evaluate: no samples");
    const auto embeds = model.encode_prompt_sets(prompt_sets);
    std::size_t correct = 0;
    for (const auto& s : samples) {
        const auto image_embed = model.encode_image(s.image);
        std::size_t best = 0;
        double best_logit = -1e300;
        for (std::size_t k = 0; k < embeds.size(); ++k) {
            double acc = 0.0;
            for (const auto& t : embeds[k]) acc += model.similarity(image_embed, t);
            acc /= double(embeds[k].size());
            if (acc > best_logit) {
                best_logit = acc;
                best = k;
            }
        }
        if (static_cast<int>(best) == s.class_id) ++correct;
    }
    return double(correct) / double(samples.size());
}

}  // namespace vlx
