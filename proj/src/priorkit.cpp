#include "mmc/priorkit.hpp"

#include <cctype>

#include "mmc/errors.hpp"
#include "mmc/strings.hpp"

namespace mmc {
namespace {

bool has_whitespace(const std::string& s) {
    for (unsigned char c : s)
        if (std::isspace(c)) return true;
    return false;
}

Image draw_standard_normal(const ImageShape& shape, Rng& rng) {
    Image eps(shape);
    for (Eigen::Index i = 0; i < eps.data.size(); ++i)
        eps.data[i] = static_cast<float>(rng.normal());
    return eps;
}

} // namespace

CompositeDescriptor make_composite(const std::string& token, const std::string& object_description) {
    if (token.empty() || has_whitespace(token))
        throw Error(ErrorCode::invalid_token, "token must be non-empty and whitespace-free: '" + token + "'");
    if (object_description.empty())
        throw Error(ErrorCode::invalid_token, "object description must be non-empty");
    return CompositeDescriptor{token, object_description, token + " " + object_description};
}

ConceptSpec make_concept(std::string image_ref, Image source_image, SemanticTriple triple,
                         CompositeDescriptor descriptor, std::vector<PriorSample> priors) {
    if (descriptor.object_description != triple.foreground)
        throw Error(ErrorCode::invalid_config,
                    "descriptor object description must equal the extracted foreground");
    ConceptSpec spec;
    spec.image_ref = std::move(image_ref);
    spec.source_image = std::move(source_image);
    spec.triple = std::move(triple);
    spec.descriptor = std::move(descriptor);
    spec.priors = std::move(priors);
    return spec;
}

std::vector<PriorSample> generate_priors(DiffusionBackend& backend, const std::string& object_description,
                                         int count, std::uint64_t base_seed, int inference_steps,
                                         double guidance_scale) {
    if (count < 1) throw Error(ErrorCode::invalid_config, "prior count must be at least 1");
    if (object_description.empty())
        throw Error(ErrorCode::invalid_config, "prior prompt must be non-empty");
    std::vector<PriorSample> priors;
    priors.reserve(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) {
        const std::uint64_t seed = base_seed + static_cast<std::uint64_t>(i);
        priors.push_back(
            {backend.sample(object_description, inference_steps, guidance_scale, seed),
             object_description, seed});
    }
    return priors;
}

Image noise_image(const Image& x, int timestep, const Image& eps, const NoiseSchedule& schedule) {
    if (timestep < 1 || timestep > schedule.total_steps())
        throw Error(ErrorCode::timestep_out_of_range,
                    "timestep " + std::to_string(timestep) + " outside [1, " +
                        std::to_string(schedule.total_steps()) + "]");
    require_same_shape(x, eps, "noise_image");
    const auto a = static_cast<float>(schedule.alpha[timestep - 1]);
    const auto s = static_cast<float>(schedule.sigma[timestep - 1]);
    Image out;
    out.shape = x.shape;
    out.data = a * x.data + s * eps.data;
    return out;
}

double denoise_loss(DiffusionBackend& backend, const Image& x, const std::string& condition,
                    const NoiseSchedule& schedule, Rng& rng, int batch_draws,
                    DenoiseRecord* record) {
    if (batch_draws < 1) throw Error(ErrorCode::invalid_config, "batch_draws must be at least 1");
    double total = 0.0;
    for (int d = 0; d < batch_draws; ++d) {
        const int t = rng.uniform_int(1, schedule.total_steps());
        Image eps = draw_standard_normal(x.shape, rng);
        const Image x_t = noise_image(x, t, eps, schedule);
        const Image predicted = backend.predict_noise(x_t, t, condition);
        require_same_shape(eps, predicted, "denoise_loss");
        const double mse =
            (eps.data.cast<double>() - predicted.data.cast<double>()).square().mean();
        total += mse;
        if (record) record->draws.push_back({t, std::move(eps)});
    }
    const double value = total / batch_draws;
    if (record) record->value = value;
    return value;
}

double single_concept_loss(DiffusionBackend& backend, const ConceptSpec& spec, double lambda,
                           const NoiseSchedule& schedule, Rng& rng,
                           std::vector<LossTermRecord>* log, std::size_t concept_index,
                           int batch_draws) {
    if (lambda < 0.0) throw Error(ErrorCode::invalid_config, "lambda must be non-negative");

    DenoiseRecord source_record;
    const double source_loss = denoise_loss(backend, spec.source_image,
                                            spec.descriptor.rendered, schedule, rng, batch_draws,
                                            log ? &source_record : nullptr);
    if (log)
        log->push_back({concept_index, false, 0, spec.source_image, spec.descriptor.rendered,
                        1.0, std::move(source_record)});

    if (lambda == 0.0) return source_loss;
    if (spec.priors.empty())
        throw Error(ErrorCode::empty_priors,
                    "concept '" + spec.image_ref + "' has no prior samples and lambda > 0");

    const double prior_weight = lambda / static_cast<double>(spec.priors.size());
    double prior_total = 0.0;
    for (std::size_t g = 0; g < spec.priors.size(); ++g) {
        const auto& prior = spec.priors[g];
        DenoiseRecord prior_record;
        prior_total += denoise_loss(backend, prior.image, prior.prompt, schedule, rng, batch_draws,
                                    log ? &prior_record : nullptr);
        if (log)
            log->push_back({concept_index, true, g, prior.image, prior.prompt, prior_weight,
                            std::move(prior_record)});
    }
    return source_loss + lambda * (prior_total / static_cast<double>(spec.priors.size()));
}

std::uint64_t concept_stream_id(const ConceptSpec& spec) {
    return hash_mix(image_content_hash(spec.source_image), fnv1a64(spec.descriptor.rendered));
}

double combined_loss(DiffusionBackend& backend, std::span<const ConceptSpec> concepts, double lambda,
                     Rng& rng, std::vector<LossTermRecord>* log, int batch_draws) {
    if (concepts.empty()) throw Error(ErrorCode::invalid_config, "at least one concept required");
    const NoiseSchedule schedule = backend.schedule();
    schedule.validate();

    // One parent advance per evaluation; per-concept streams come off the
    // pre-advance snapshot, keyed by concept identity rather than position,
    // so neither evaluation order nor list membership changes a concept's
    // draws.
    const Rng base = rng;
    rng.next_u64();
    double total = 0.0;
    for (std::size_t j = 0; j < concepts.size(); ++j) {
        Rng child = base.split(concept_stream_id(concepts[j]));
        total +=
            single_concept_loss(backend, concepts[j], lambda, schedule, child, log, j, batch_draws);
    }
    return total;
}

} // namespace mmc
