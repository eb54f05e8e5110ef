#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>

#include "mmc/tensor.hpp"

namespace mmc {

// ---- shared math types -------------------------------------------------------

/// Forward-noising schedule: arrays indexed by timestep-1 for t in [1, T].
struct NoiseSchedule {
    Eigen::ArrayXd alpha;
    Eigen::ArrayXd sigma;

    int total_steps() const { return static_cast<int>(alpha.size()); }

    /// Lengths match, entries finite, alpha non-increasing, sigma non-decreasing.
    void validate() const;
};

enum class EmbeddingSpace { dino_image, clip_image, clip_text };

const char* to_string(EmbeddingSpace space);

struct EmbeddingVector {
    Eigen::VectorXf values;
    EmbeddingSpace space = EmbeddingSpace::clip_image;
};

/// clip_text and clip_image embeddings live in one joint space; everything
/// else only compares against itself.
bool spaces_comparable(EmbeddingSpace a, EmbeddingSpace b);

// ---- diffusion ---------------------------------------------------------------

/// Named trainable-parameter groups. `all` covers every backbone weight
/// (cross-attention included) but never the token-embedding table, which is
/// its own subset; that split is what lets one strategy freeze the rare
/// token's embedding while another updates it.
enum class ParamSubset { all, cross_attention, token_embedding };

/// One weighted term of a training objective: the backend noises x with the
/// given draw, predicts the noise under `condition`, and accumulates
/// weight * mean squared error.
struct TrainTerm {
    Image x;
    std::string condition;
    int timestep = 1;
    Image eps;
    double weight = 1.0;
};

class DiffusionBackend {
public:
    virtual ~DiffusionBackend() = default;

    virtual std::string id() const = 0;
    virtual ImageShape native_shape() const = 0;
    virtual NoiseSchedule schedule() const = 0;

    /// Predicted noise for the already-noised input; output shaped like x_t.
    virtual Image predict_noise(const Image& x_t, int timestep, const std::string& condition) = 0;

    /// Draw one image for the prompt; deterministic per seed for stubs.
    virtual Image sample(const std::string& prompt, int steps, double guidance,
                         std::uint64_t seed) = 0;

    /// One optimizer step against the summed weighted terms, touching only the
    /// listed parameter subsets. Returns the pre-step loss value.
    virtual double step_optimizer(std::span<const TrainTerm> terms,
                                  std::span<const ParamSubset> subsets, double learning_rate) = 0;

    /// Persist trainable state; returns an opaque locator usable with
    /// load_checkpoint on a compatible instance.
    virtual std::string save_checkpoint(const std::filesystem::path& dir) = 0;
    virtual void load_checkpoint(const std::string& locator) = 0;

    /// Changes iff any trainable parameter changed.
    virtual std::uint64_t params_fingerprint() const = 0;

    virtual bool concurrent_calls_safe() const { return false; }
};

// ---- captioner ---------------------------------------------------------------

class CaptionerBackend {
public:
    virtual ~CaptionerBackend() = default;
    virtual std::string id() const = 0;
    /// Full-image text description; non-empty for decodable images.
    virtual std::string caption(const Image& image) = 0;
    virtual bool concurrent_calls_safe() const { return false; }
};

// ---- language model ------------------------------------------------------------

class LanguageModelBackend {
public:
    virtual ~LanguageModelBackend() = default;
    virtual std::string id() const = 0;
    virtual std::string complete(const std::string& prompt, double temperature,
                                 std::uint64_t seed) = 0;
    virtual bool concurrent_calls_safe() const { return false; }
};

// ---- embedder ------------------------------------------------------------------

class EmbedderBackend {
public:
    virtual ~EmbedderBackend() = default;
    virtual std::string id() const = 0;
    virtual int dimension(EmbeddingSpace space) const = 0;
    virtual EmbeddingVector embed_image(const Image& image, EmbeddingSpace space) = 0;
    virtual EmbeddingVector embed_text(const std::string& text) = 0;
    virtual bool concurrent_calls_safe() const { return false; }
};

} // namespace mmc
