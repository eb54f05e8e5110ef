#pragma once

#include <array>
#include <memory>

#include "mmc/backends.hpp"

#include "json.hpp"

namespace mmc {

/// Connection settings for a remote model service. The adapters speak a small
/// JSON-over-HTTP protocol and never know which vendor sits behind the
/// endpoint; model ids and auth are pass-through strings.
struct RemoteOptions {
    std::string endpoint;  // http://host:port
    std::string model;     // opaque model id forwarded in every request
    std::string auth_env;  // env var holding a bearer token, optional
    int timeout_ms = 30000;
    int max_retries = 3;       // retries after the first attempt
    int backoff_base_ms = 200; // doubled per retry, plus jitter
    std::uint64_t jitter_seed = 1;
};

nlohmann::json image_to_json(const Image& image);
Image image_from_json(const nlohmann::json& doc);

/// Shared HTTP plumbing: POST JSON, retry transient failures (connect errors,
/// timeouts, 5xx) with exponential backoff and jitter, surface everything
/// else as BackendUnavailable.
class RemoteClient {
public:
    explicit RemoteClient(RemoteOptions options);
    ~RemoteClient();

    nlohmann::json post(const std::string& path, nlohmann::json body);
    const RemoteOptions& options() const { return options_; }

private:
    RemoteOptions options_;
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

class RemoteCaptioner final : public CaptionerBackend {
public:
    explicit RemoteCaptioner(RemoteOptions options) : client_(std::move(options)) {}
    std::string id() const override { return "remote-captioner/" + client_.options().model; }
    std::string caption(const Image& image) override;
    bool concurrent_calls_safe() const override { return true; }

private:
    RemoteClient client_;
};

class RemoteLanguageModel final : public LanguageModelBackend {
public:
    explicit RemoteLanguageModel(RemoteOptions options) : client_(std::move(options)) {}
    std::string id() const override { return "remote-llm/" + client_.options().model; }
    std::string complete(const std::string& prompt, double temperature,
                         std::uint64_t seed) override;
    bool concurrent_calls_safe() const override { return true; }

private:
    RemoteClient client_;
};

class RemoteEmbedder final : public EmbedderBackend {
public:
    explicit RemoteEmbedder(RemoteOptions options) : client_(std::move(options)) {}
    std::string id() const override { return "remote-embedder/" + client_.options().model; }
    int dimension(EmbeddingSpace space) const override;
    EmbeddingVector embed_image(const Image& image, EmbeddingSpace space) override;
    EmbeddingVector embed_text(const std::string& text) override;
    bool concurrent_calls_safe() const override { return true; }

private:
    mutable RemoteClient client_;
    mutable std::array<int, 3> cached_dims_{0, 0, 0};
};

class RemoteDiffusion final : public DiffusionBackend {
public:
    explicit RemoteDiffusion(RemoteOptions options) : client_(std::move(options)) {}
    std::string id() const override { return "remote-diffusion/" + client_.options().model; }
    ImageShape native_shape() const override;
    NoiseSchedule schedule() const override;
    Image predict_noise(const Image& x_t, int timestep, const std::string& condition) override;
    Image sample(const std::string& prompt, int steps, double guidance,
                 std::uint64_t seed) override;
    double step_optimizer(std::span<const TrainTerm> terms, std::span<const ParamSubset> subsets,
                          double learning_rate) override;
    std::string save_checkpoint(const std::filesystem::path& dir) override;
    void load_checkpoint(const std::string& locator) override;
    std::uint64_t params_fingerprint() const override;
    bool concurrent_calls_safe() const override { return false; } // one training owner at a time

private:
    mutable RemoteClient client_;
};

} // namespace mmc
