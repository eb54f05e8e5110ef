#pragma once

#include <map>
#include <vector>

#include "mmc/backends.hpp"

namespace mmc {

/// Deterministic in-process stand-ins for the four model roles. Every stub is
/// bit-reproducible under a fixed seed, which is what makes desk-scale runs
/// and the oracle tests possible.

/// Seeded linear denoiser over 3x16x16 tensors. The "network" is
///   predicted[ch, p] = gain[ch] * x_t[ch, p] + (attention * embed(cond))[ch] + bias[ch]
/// where embed(cond) is the mean of per-token embedding vectors. Parameters
/// split into the backbone (gain, bias, attention; subset `all`), the
/// cross-attention matrix alone, and the token-embedding table. Optimization
/// is a plain gradient step with analytic gradients.
class StubDiffusion : public DiffusionBackend {
public:
    static constexpr int kChannels = 3;
    static constexpr int kHeight = 16;
    static constexpr int kWidth = 16;
    static constexpr int kEmbedDim = 8;
    static constexpr int kTotalSteps = 10;

    using TokenEmbedding = Eigen::Matrix<float, kEmbedDim, 1>;
    using AttentionMatrix = Eigen::Matrix<float, kChannels, kEmbedDim>;

    explicit StubDiffusion(std::uint64_t seed = 42);

    std::string id() const override;
    ImageShape native_shape() const override { return {kChannels, kHeight, kWidth}; }
    NoiseSchedule schedule() const override;
    Image predict_noise(const Image& x_t, int timestep, const std::string& condition) override;
    Image sample(const std::string& prompt, int steps, double guidance, std::uint64_t seed) override;
    double step_optimizer(std::span<const TrainTerm> terms, std::span<const ParamSubset> subsets,
                          double learning_rate) override;
    std::string save_checkpoint(const std::filesystem::path& dir) override;
    void load_checkpoint(const std::string& locator) override;
    std::uint64_t params_fingerprint() const override;

    // introspection used by the contract tests
    const Eigen::Vector3f& input_gain() const { return input_gain_; }
    const Eigen::Vector3f& bias() const { return bias_; }
    const AttentionMatrix& cross_attention() const { return cross_attention_; }
    /// Effective embedding for a token: the tuned value if training touched
    /// it, otherwise the deterministic seed-derived initial value.
    TokenEmbedding token_embedding(const std::string& token) const;

    std::size_t predict_calls() const { return predict_calls_; }
    std::size_t sample_calls() const { return sample_calls_; }
    std::size_t step_calls() const { return step_calls_; }

private:
    TokenEmbedding initial_embedding(const std::string& token) const;
    Eigen::Vector3f condition_response(const std::string& condition) const;

    std::uint64_t seed_;
    Eigen::Vector3f input_gain_;
    Eigen::Vector3f bias_;
    AttentionMatrix cross_attention_;
    std::map<std::string, TokenEmbedding> tuned_embeddings_;

    std::size_t predict_calls_ = 0;
    std::size_t sample_calls_ = 0;
    std::size_t step_calls_ = 0;
};

/// Replays a scripted response list in arrival order; entries may be
/// deliberately malformed for vote-filtering tests. With echo_when_exhausted
/// (or an empty script) it answers any analysis prompt by echoing the
/// embedded sentence back as the foreground, which is enough to drive the
/// desk pipeline end to end.
class ScriptedLanguageModel final : public LanguageModelBackend {
public:
    ScriptedLanguageModel() : echo_when_exhausted_(true) {}
    explicit ScriptedLanguageModel(std::vector<std::string> responses,
                                   bool echo_when_exhausted = false)
        : responses_(std::move(responses)), echo_when_exhausted_(echo_when_exhausted) {}

    std::string id() const override { return "scripted-llm"; }
    std::string complete(const std::string& prompt, double temperature, std::uint64_t seed) override;
    std::size_t calls() const { return calls_; }

private:
    std::vector<std::string> responses_;
    std::size_t next_ = 0;
    bool echo_when_exhausted_;
    std::size_t calls_ = 0;
};

/// Maps image content hash to a canned caption; unregistered images fall back
/// to a fixed bank indexed by hash, so any fixture gets a stable caption.
class FixedCaptioner final : public CaptionerBackend {
public:
    std::string id() const override { return "fixed-captioner"; }
    void register_caption(const Image& image, std::string caption);
    void register_caption(std::uint64_t image_hash, std::string caption);
    std::string caption(const Image& image) override;
    std::size_t calls() const { return calls_; }

private:
    std::map<std::uint64_t, std::string> canned_;
    std::size_t calls_ = 0;
};

/// Content hash -> pseudo-random unit vector; equal content gives the exact
/// same embedding, distinct content is near-orthogonal in expectation.
class HashingEmbedder final : public EmbedderBackend {
public:
    explicit HashingEmbedder(std::uint64_t seed = 7) : seed_(seed) {}

    std::string id() const override { return "hashing-embedder"; }
    int dimension(EmbeddingSpace space) const override;
    EmbeddingVector embed_image(const Image& image, EmbeddingSpace space) override;
    EmbeddingVector embed_text(const std::string& text) override;
    std::size_t calls() const { return calls_; }

private:
    EmbeddingVector from_hash(std::uint64_t content_hash, EmbeddingSpace space);

    std::uint64_t seed_;
    std::size_t calls_ = 0;
};

} // namespace mmc
