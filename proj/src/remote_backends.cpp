#include "mmc/remote_backends.hpp"

#include <cstdlib>
#include <limits>
#include <thread>

#include "mmc/errors.hpp"
#include "mmc/rng.hpp"

#include "httplib.h"

namespace mmc {
namespace {

const char* subset_name(ParamSubset subset) {
    switch (subset) {
        case ParamSubset::all: return "all";
        case ParamSubset::cross_attention: return "cross-attention";
        case ParamSubset::token_embedding: return "token-embedding";
    }
    return "unknown";
}

int space_index(EmbeddingSpace space) { return static_cast<int>(space); }

} // namespace

nlohmann::json image_to_json(const Image& image) {
    nlohmann::json doc{{"channels", image.shape.channels},
                       {"height", image.shape.height},
                       {"width", image.shape.width}};
    auto data = nlohmann::json::array();
    for (Eigen::Index i = 0; i < image.data.size(); ++i) data.push_back(image.data[i]);
    doc["data"] = std::move(data);
    return doc;
}

Image image_from_json(const nlohmann::json& doc) {
    Image image(doc.value("channels", 0), doc.value("height", 0), doc.value("width", 0));
    const auto& data = doc.at("data");
    if (static_cast<Eigen::Index>(data.size()) != image.data.size())
        throw Error(ErrorCode::backend_unavailable, "remote image payload has wrong size");
    for (Eigen::Index i = 0; i < image.data.size(); ++i)
        image.data[i] = data[static_cast<std::size_t>(i)].get<float>();
    return image;
}

struct RemoteClient::Impl {
    httplib::Client http;
    Rng jitter;

    Impl(const std::string& endpoint, const RemoteOptions& options)
        : http(endpoint), jitter(options.jitter_seed) {
        http.set_connection_timeout(0, options.timeout_ms * 1000);
        http.set_read_timeout(options.timeout_ms / 1000, (options.timeout_ms % 1000) * 1000);
        if (!options.auth_env.empty()) {
            if (const char* token = std::getenv(options.auth_env.c_str()))
                http.set_bearer_token_auth(token);
        }
    }
};

RemoteClient::RemoteClient(RemoteOptions options)
    : options_(std::move(options)), impl_(std::make_unique<Impl>(options_.endpoint, options_)) {}

RemoteClient::~RemoteClient() = default;

nlohmann::json RemoteClient::post(const std::string& path, nlohmann::json body) {
    body["model"] = options_.model;
    const std::string payload = body.dump();

    std::string last_error;
    for (int attempt = 0; attempt <= options_.max_retries; ++attempt) {
        if (attempt > 0) {
            const int base = options_.backoff_base_ms << (attempt - 1);
            const int jitter = static_cast<int>(impl_->jitter.uniform_int(0, base));
            std::this_thread::sleep_for(std::chrono::milliseconds(base + jitter));
        }
        auto result = impl_->http.Post(path, payload, "application/json");
        if (!result) {
            last_error = "connection failed: " + httplib::to_string(result.error());
            continue;
        }
        if (result->status >= 500) {
            last_error = "server error " + std::to_string(result->status);
            continue; // transient by convention
        }
        if (result->status == 404 && path == "/v1/load_checkpoint")
            throw Error(ErrorCode::unknown_model_handle, "remote checkpoint not found");
        if (result->status != 200)
            throw Error(ErrorCode::backend_unavailable,
                        options_.endpoint + path + " answered " + std::to_string(result->status) +
                            ": " + result->body);
        try {
            return nlohmann::json::parse(result->body);
        } catch (const nlohmann::json::exception& e) {
            throw Error(ErrorCode::backend_unavailable,
                        options_.endpoint + path + " returned unparsable JSON: " + e.what());
        }
    }
    throw Error(ErrorCode::backend_unavailable, options_.endpoint + path + " unreachable after " +
                                                    std::to_string(options_.max_retries + 1) +
                                                    " attempts (" + last_error + ")");
}

// ---- captioner -----------------------------------------------------------------

std::string RemoteCaptioner::caption(const Image& image) {
    auto reply = client_.post("/v1/caption", {{"image", image_to_json(image)}});
    return reply.value("caption", "");
}

// ---- language model --------------------------------------------------------------

std::string RemoteLanguageModel::complete(const std::string& prompt, double temperature,
                                          std::uint64_t seed) {
    auto reply = client_.post(
        "/v1/complete", {{"prompt", prompt}, {"temperature", temperature}, {"seed", seed}});
    return reply.value("text", "");
}

// ---- embedder --------------------------------------------------------------------

int RemoteEmbedder::dimension(EmbeddingSpace space) const {
    auto& cached = cached_dims_[static_cast<std::size_t>(space_index(space))];
    if (cached == 0) {
        auto reply = client_.post("/v1/embed_info", {{"space", to_string(space)}});
        cached = reply.value("dimension", 0);
    }
    return cached;
}

EmbeddingVector RemoteEmbedder::embed_image(const Image& image, EmbeddingSpace space) {
    auto reply = client_.post(
        "/v1/embed_image", {{"space", to_string(space)}, {"image", image_to_json(image)}});
    EmbeddingVector out;
    out.space = space;
    const auto& values = reply.at("values");
    out.values.resize(static_cast<Eigen::Index>(values.size()));
    for (Eigen::Index i = 0; i < out.values.size(); ++i)
        out.values[i] = values[static_cast<std::size_t>(i)].get<float>();
    return out;
}

EmbeddingVector RemoteEmbedder::embed_text(const std::string& text) {
    auto reply = client_.post("/v1/embed_text", {{"text", text}});
    EmbeddingVector out;
    out.space = EmbeddingSpace::clip_text;
    const auto& values = reply.at("values");
    out.values.resize(static_cast<Eigen::Index>(values.size()));
    for (Eigen::Index i = 0; i < out.values.size(); ++i)
        out.values[i] = values[static_cast<std::size_t>(i)].get<float>();
    return out;
}

// ---- diffusion --------------------------------------------------------------------

ImageShape RemoteDiffusion::native_shape() const {
    auto reply = client_.post("/v1/shape", nlohmann::json::object());
    return {reply.value("channels", 0), reply.value("height", 0), reply.value("width", 0)};
}

NoiseSchedule RemoteDiffusion::schedule() const {
    auto reply = client_.post("/v1/schedule", nlohmann::json::object());
    const auto& alpha = reply.at("alpha");
    const auto& sigma = reply.at("sigma");
    NoiseSchedule sched;
    sched.alpha.resize(static_cast<Eigen::Index>(alpha.size()));
    sched.sigma.resize(static_cast<Eigen::Index>(sigma.size()));
    for (Eigen::Index i = 0; i < sched.alpha.size(); ++i) {
        sched.alpha[i] = alpha[static_cast<std::size_t>(i)].get<double>();
        sched.sigma[i] = sigma[static_cast<std::size_t>(i)].get<double>();
    }
    return sched;
}

Image RemoteDiffusion::predict_noise(const Image& x_t, int timestep, const std::string& condition) {
    auto reply = client_.post("/v1/predict_noise", {{"image", image_to_json(x_t)},
                                                    {"timestep", timestep},
                                                    {"condition", condition}});
    return image_from_json(reply.at("image"));
}

Image RemoteDiffusion::sample(const std::string& prompt, int steps, double guidance,
                              std::uint64_t seed) {
    auto reply = client_.post(
        "/v1/sample",
        {{"prompt", prompt}, {"steps", steps}, {"guidance", guidance}, {"seed", seed}});
    return image_from_json(reply.at("image"));
}

double RemoteDiffusion::step_optimizer(std::span<const TrainTerm> terms,
                                       std::span<const ParamSubset> subsets,
                                       double learning_rate) {
    auto term_docs = nlohmann::json::array();
    for (const auto& term : terms)
        term_docs.push_back({{"x", image_to_json(term.x)},
                             {"condition", term.condition},
                             {"timestep", term.timestep},
                             {"eps", image_to_json(term.eps)},
                             {"weight", term.weight}});
    auto subset_docs = nlohmann::json::array();
    for (ParamSubset s : subsets) subset_docs.push_back(subset_name(s));
    auto reply = client_.post("/v1/train_step", {{"terms", std::move(term_docs)},
                                                 {"subsets", std::move(subset_docs)},
                                                 {"learning_rate", learning_rate}});
    return reply.value("loss", std::numeric_limits<double>::quiet_NaN());
}

std::string RemoteDiffusion::save_checkpoint(const std::filesystem::path& dir) {
    auto reply = client_.post("/v1/save_checkpoint", {{"hint", dir.string()}});
    return reply.value("locator", "");
}

void RemoteDiffusion::load_checkpoint(const std::string& locator) {
    client_.post("/v1/load_checkpoint", {{"locator", locator}});
}

std::uint64_t RemoteDiffusion::params_fingerprint() const {
    auto reply = client_.post("/v1/fingerprint", nlohmann::json::object());
    return reply.value("fingerprint", std::uint64_t{0});
}

} // namespace mmc
