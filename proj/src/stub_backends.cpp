#include "mmc/stub_backends.hpp"

#include <bit>
#include <fstream>
#include <sstream>

#include "mmc/errors.hpp"
#include "mmc/priorkit.hpp"
#include "mmc/rng.hpp"
#include "mmc/strings.hpp"

#include "json.hpp"

namespace mmc {
namespace {

std::vector<std::string> split_tokens(const std::string& condition) {
    std::vector<std::string> tokens;
    std::istringstream in(condition);
    std::string tok;
    while (in >> tok) tokens.push_back(tok);
    return tokens;
}

nlohmann::json float_bits(std::span<const float> values) {
    auto arr = nlohmann::json::array();
    for (float v : values) arr.push_back(std::bit_cast<std::uint32_t>(v));
    return arr;
}

void float_bits_load(const nlohmann::json& arr, std::span<float> out) {
    if (!arr.is_array() || arr.size() != out.size())
        throw Error(ErrorCode::unknown_model_handle, "checkpoint field has wrong arity");
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = std::bit_cast<float>(arr[i].get<std::uint32_t>());
}

constexpr const char* kCheckpointFormat = "stub-diffusion/1";

} // namespace

StubDiffusion::StubDiffusion(std::uint64_t seed) : seed_(seed) {
    Rng rng(hash_mix(seed, 0x5d1f));
    for (int c = 0; c < kChannels; ++c) {
        input_gain_[c] = static_cast<float>(rng.uniform(0.6, 1.0));
        bias_[c] = static_cast<float>(rng.uniform(-0.1, 0.1));
    }
    for (int c = 0; c < kChannels; ++c)
        for (int k = 0; k < kEmbedDim; ++k)
            cross_attention_(c, k) = static_cast<float>(0.15 * rng.normal());
}

std::string StubDiffusion::id() const { return "stub-diffusion/" + std::to_string(seed_); }

NoiseSchedule StubDiffusion::schedule() const {
    NoiseSchedule sched;
    sched.alpha.resize(kTotalSteps);
    sched.sigma.resize(kTotalSteps);
    for (int t = 1; t <= kTotalSteps; ++t) {
        const double a = 1.0 - static_cast<double>(t) / kTotalSteps;
        sched.alpha[t - 1] = a;
        sched.sigma[t - 1] = std::sqrt(1.0 - a * a);
    }
    return sched;
}

StubDiffusion::TokenEmbedding StubDiffusion::initial_embedding(const std::string& token) const {
    Rng rng(hash_mix(hash_mix(seed_, 0xe3b0), fnv1a64(token)));
    TokenEmbedding e;
    for (int k = 0; k < kEmbedDim; ++k) e[k] = static_cast<float>(0.5 * rng.normal());
    return e;
}

StubDiffusion::TokenEmbedding StubDiffusion::token_embedding(const std::string& token) const {
    if (auto it = tuned_embeddings_.find(token); it != tuned_embeddings_.end()) return it->second;
    return initial_embedding(token);
}

Eigen::Vector3f StubDiffusion::condition_response(const std::string& condition) const {
    const auto tokens = split_tokens(condition);
    TokenEmbedding mean = TokenEmbedding::Zero();
    for (const auto& tok : tokens) mean += token_embedding(tok);
    if (!tokens.empty()) mean /= static_cast<float>(tokens.size());
    return cross_attention_ * mean;
}

Image StubDiffusion::predict_noise(const Image& x_t, int timestep, const std::string& condition) {
    ++predict_calls_;
    if (x_t.shape != native_shape())
        throw Error(ErrorCode::shape_mismatch, "predict_noise input not at native resolution");
    if (timestep < 1 || timestep > kTotalSteps)
        throw Error(ErrorCode::timestep_out_of_range, "timestep " + std::to_string(timestep));

    const Eigen::Vector3f response = condition_response(condition);
    Image out(native_shape());
    for (int c = 0; c < kChannels; ++c)
        out.plane(c).array() = input_gain_[c] * x_t.plane(c).array() + (response[c] + bias_[c]);
    return out;
}

Image StubDiffusion::sample(const std::string& prompt, int steps, double guidance,
                            std::uint64_t seed) {
    ++sample_calls_;
    std::uint64_t h = fnv1a64(prompt);
    h = hash_mix(h, seed);
    h = hash_mix(h, static_cast<std::uint64_t>(steps));
    h = hash_mix(h, std::bit_cast<std::uint64_t>(guidance));
    h = hash_mix(h, params_fingerprint());
    h = hash_mix(h, seed_);
    Rng rng(h);
    Image img(native_shape());
    for (Eigen::Index i = 0; i < img.data.size(); ++i)
        img.data[i] = static_cast<float>(rng.uniform());
    return img;
}

double StubDiffusion::step_optimizer(std::span<const TrainTerm> terms,
                                     std::span<const ParamSubset> subsets, double learning_rate) {
    ++step_calls_;
    if (terms.empty()) throw Error(ErrorCode::invalid_config, "step_optimizer needs at least one term");

    bool step_backbone = false, step_attention = false, step_embeddings = false;
    for (ParamSubset s : subsets) {
        if (s == ParamSubset::all) step_backbone = step_attention = true;
        if (s == ParamSubset::cross_attention) step_attention = true;
        if (s == ParamSubset::token_embedding) step_embeddings = true;
    }

    const NoiseSchedule sched = schedule();
    Eigen::Vector3d grad_gain = Eigen::Vector3d::Zero();
    Eigen::Vector3d grad_bias = Eigen::Vector3d::Zero();
    Eigen::Matrix<double, kChannels, kEmbedDim> grad_attention =
        Eigen::Matrix<double, kChannels, kEmbedDim>::Zero();
    std::map<std::string, Eigen::Matrix<double, kEmbedDim, 1>> grad_embeddings;

    double loss = 0.0;
    const double n = static_cast<double>(native_shape().elements());
    for (const auto& term : terms) {
        const Image x_t = noise_image(term.x, term.timestep, term.eps, sched);
        const Image predicted = predict_noise(x_t, term.timestep, term.condition);
        --predict_calls_; // internal forward pass, not a caller-visible call

        const auto tokens = split_tokens(term.condition);
        TokenEmbedding mean_embed = TokenEmbedding::Zero();
        for (const auto& tok : tokens) mean_embed += token_embedding(tok);
        if (!tokens.empty()) mean_embed /= static_cast<float>(tokens.size());

        Eigen::Vector3d channel_residual_sum = Eigen::Vector3d::Zero();
        double sq = 0.0;
        for (int c = 0; c < kChannels; ++c) {
            const auto residual =
                (predicted.plane(c).array() - term.eps.plane(c).array()).cast<double>().eval();
            sq += residual.square().sum();
            channel_residual_sum[c] = residual.sum();
            grad_gain[c] += term.weight * (2.0 / n) *
                            (residual * x_t.plane(c).array().cast<double>()).sum();
        }
        loss += term.weight * (sq / n);
        grad_bias += term.weight * (2.0 / n) * channel_residual_sum;
        grad_attention +=
            term.weight * (2.0 / n) * channel_residual_sum * mean_embed.cast<double>().transpose();

        if (!tokens.empty()) {
            const Eigen::Matrix<double, kEmbedDim, 1> grad_mean_embed =
                (2.0 / n) * cross_attention_.cast<double>().transpose() * channel_residual_sum;
            const double share = term.weight / static_cast<double>(tokens.size());
            for (const auto& tok : tokens) {
                auto [it, inserted] =
                    grad_embeddings.try_emplace(tok, Eigen::Matrix<double, kEmbedDim, 1>::Zero());
                it->second += share * grad_mean_embed;
            }
        }
    }

    if (step_backbone) {
        input_gain_ = (input_gain_.cast<double>() - learning_rate * grad_gain).cast<float>();
        bias_ = (bias_.cast<double>() - learning_rate * grad_bias).cast<float>();
    }
    if (step_attention)
        cross_attention_ =
            (cross_attention_.cast<double>() - learning_rate * grad_attention).cast<float>();
    if (step_embeddings) {
        for (const auto& [tok, grad] : grad_embeddings) {
            TokenEmbedding current = token_embedding(tok);
            tuned_embeddings_[tok] = (current.cast<double>() - learning_rate * grad).cast<float>();
        }
    }
    return loss;
}

std::uint64_t StubDiffusion::params_fingerprint() const {
    std::uint64_t h = fnv1a64(input_gain_.data(), sizeof(float) * 3);
    h = fnv1a64(bias_.data(), sizeof(float) * 3, h);
    h = fnv1a64(cross_attention_.data(), sizeof(float) * kChannels * kEmbedDim, h);
    for (const auto& [tok, emb] : tuned_embeddings_) {
        // Tuned entries that still equal their derived init are not a change.
        const TokenEmbedding init = initial_embedding(tok);
        if (std::memcmp(emb.data(), init.data(), sizeof(float) * kEmbedDim) == 0) continue;
        h = fnv1a64(tok, h);
        h = fnv1a64(emb.data(), sizeof(float) * kEmbedDim, h);
    }
    return h;
}

std::string StubDiffusion::save_checkpoint(const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    nlohmann::json doc;
    doc["format"] = kCheckpointFormat;
    doc["seed"] = seed_;
    doc["gain"] = float_bits({input_gain_.data(), 3});
    doc["bias"] = float_bits({bias_.data(), 3});
    doc["attention"] = float_bits({cross_attention_.data(), kChannels * kEmbedDim});
    auto embeddings = nlohmann::json::object();
    for (const auto& [tok, emb] : tuned_embeddings_)
        embeddings[tok] = float_bits({emb.data(), kEmbedDim});
    doc["embeddings"] = embeddings;

    const auto path = dir / "stub-diffusion.json";
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error(ErrorCode::io_error, "cannot write checkpoint " + path.string());
    out << doc.dump(2) << '\n';
    return path.string();
}

void StubDiffusion::load_checkpoint(const std::string& locator) {
    std::ifstream in(locator);
    if (!in)
        throw Error(ErrorCode::unknown_model_handle, "checkpoint not found: " + locator);
    nlohmann::json doc;
    try {
        in >> doc;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::unknown_model_handle,
                    "unreadable checkpoint " + locator + ": " + e.what());
    }
    if (doc.value("format", "") != kCheckpointFormat)
        throw Error(ErrorCode::unknown_model_handle, "incompatible checkpoint format in " + locator);

    float_bits_load(doc.at("gain"), {input_gain_.data(), 3});
    float_bits_load(doc.at("bias"), {bias_.data(), 3});
    float_bits_load(doc.at("attention"), {cross_attention_.data(), kChannels * kEmbedDim});
    tuned_embeddings_.clear();
    for (const auto& [tok, arr] : doc.at("embeddings").items()) {
        TokenEmbedding emb;
        float_bits_load(arr, {emb.data(), kEmbedDim});
        tuned_embeddings_[tok] = emb;
    }
    seed_ = doc.value("seed", seed_);
}

// ---- ScriptedLanguageModel ----------------------------------------------------

std::string ScriptedLanguageModel::complete(const std::string& prompt, double /*temperature*/,
                                            std::uint64_t /*seed*/) {
    ++calls_;
    if (next_ < responses_.size()) return responses_[next_++];
    if (!echo_when_exhausted_)
        throw Error(ErrorCode::backend_unavailable, "scripted language model has no responses left");

    constexpr std::string_view marker = "I will give you a sentence \"";
    const auto begin = prompt.rfind(marker);
    std::string sentence = "an object";
    if (begin != std::string::npos) {
        const auto start = begin + marker.size();
        const auto end = prompt.find("\" here", start);
        if (end != std::string::npos) sentence = prompt.substr(start, end - start);
    }
    for (std::string_view lead : {"there is ", "there are ", "There is ", "There are "}) {
        if (starts_with(sentence, lead)) {
            sentence = sentence.substr(lead.size());
            break;
        }
    }
    return "the foreground is \"" + sentence +
           "\", the background is \"None\" and the action is \"None\"";
}

// ---- FixedCaptioner -----------------------------------------------------------

namespace {
const char* kCaptionBank[] = {
    "there is a red toy car on a wooden table",
    "there is a blue backpack sitting on a rock",
    "there is a small dog standing in the grass",
    "there is a yellow flower in a white vase",
    "there is a wooden chair next to a window",
    "there is a green mug on a desk",
    "there is a plush bear lying on a bed",
    "there is a striped cat sitting on a ledge",
};
} // namespace

void FixedCaptioner::register_caption(const Image& image, std::string caption) {
    register_caption(image_content_hash(image), std::move(caption));
}

void FixedCaptioner::register_caption(std::uint64_t image_hash, std::string caption) {
    canned_[image_hash] = std::move(caption);
}

std::string FixedCaptioner::caption(const Image& image) {
    ++calls_;
    const std::uint64_t h = image_content_hash(image);
    if (auto it = canned_.find(h); it != canned_.end()) return it->second;
    return kCaptionBank[hash_mix(h, 0xcafe) % (sizeof(kCaptionBank) / sizeof(kCaptionBank[0]))];
}

// ---- HashingEmbedder ----------------------------------------------------------

int HashingEmbedder::dimension(EmbeddingSpace space) const {
    return space == EmbeddingSpace::dino_image ? 384 : 512;
}

EmbeddingVector HashingEmbedder::from_hash(std::uint64_t content_hash, EmbeddingSpace space) {
    const int dim = dimension(space);
    // dino lives in its own space; clip text/image share one joint space.
    const std::uint64_t space_tag = space == EmbeddingSpace::dino_image ? 0xd1 : 0xc1;
    Rng rng(hash_mix(hash_mix(seed_, space_tag), content_hash));
    EmbeddingVector out;
    out.space = space;
    out.values.resize(dim);
    for (int i = 0; i < dim; ++i) out.values[i] = static_cast<float>(rng.normal());
    out.values.normalize();
    return out;
}

EmbeddingVector HashingEmbedder::embed_image(const Image& image, EmbeddingSpace space) {
    ++calls_;
    if (space == EmbeddingSpace::clip_text)
        throw Error(ErrorCode::space_mismatch, "images cannot embed into the text space");
    return from_hash(image_content_hash(image), space);
}

EmbeddingVector HashingEmbedder::embed_text(const std::string& text) {
    ++calls_;
    return from_hash(fnv1a64(text), EmbeddingSpace::clip_text);
}

} // namespace mmc
