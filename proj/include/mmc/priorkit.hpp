#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mmc/backends.hpp"
#include "mmc/extraction.hpp"
#include "mmc/rng.hpp"

namespace mmc {

/// Rare-token handle plus the extracted object description; rendered as
/// `token` + single space + description, and that rendered form is what
/// conditions the model on the customized concept.
struct CompositeDescriptor {
    std::string token;
    std::string object_description;
    std::string rendered;

    bool operator==(const CompositeDescriptor&) const = default;
};

/// Throws Error{invalid_token} when the token is empty or contains whitespace,
/// or the description is empty.
CompositeDescriptor make_composite(const std::string& token, const std::string& object_description);

/// One image drawn from the pretrained model for the bare object description;
/// these anchor the prior-preservation term during finetuning.
struct PriorSample {
    Image image;
    std::string prompt;
    std::uint64_t seed = 0;
};

/// Everything finetuning needs to know about one customized concept.
struct ConceptSpec {
    std::string image_ref;
    Image source_image;
    SemanticTriple triple;
    CompositeDescriptor descriptor;
    std::vector<PriorSample> priors;
};

/// Throws Error{invalid_config} when descriptor and triple disagree on the
/// object description.
ConceptSpec make_concept(std::string image_ref, Image source_image, SemanticTriple triple,
                         CompositeDescriptor descriptor, std::vector<PriorSample> priors = {});

/// Draw `count` prior samples from the (pretrained) backend for the bare
/// description, seeds base_seed, base_seed+1, ...
std::vector<PriorSample> generate_priors(DiffusionBackend& backend, const std::string& object_description,
                                         int count, std::uint64_t base_seed, int inference_steps = 200,
                                         double guidance_scale = 7.5);

/// Forward noising x_t = alpha_t * x + sigma_t * eps, elementwise.
/// Throws Error{timestep_out_of_range} unless 1 <= t <= T.
Image noise_image(const Image& x, int timestep, const Image& eps, const NoiseSchedule& schedule);

/// Record of everything a loss evaluation drew, sufficient to recompute the
/// value independently.
struct DenoiseDraw {
    int timestep = 1;
    Image eps;
};

struct DenoiseRecord {
    std::vector<DenoiseDraw> draws;
    double value = 0.0;
};

/// Monte-Carlo denoising loss: draw t uniform in [1, T] and eps standard
/// normal, return mean over elements of (eps - predicted)^2, averaged over
/// `batch_draws` independent draws.
double denoise_loss(DiffusionBackend& backend, const Image& x, const std::string& condition,
                    const NoiseSchedule& schedule, Rng& rng, int batch_draws = 1,
                    DenoiseRecord* record = nullptr);

struct LossTermRecord {
    std::size_t concept_index = 0;
    bool prior_term = false;
    std::size_t prior_index = 0;
    Image x;
    std::string condition;
    double weight = 1.0;
    DenoiseRecord denoise;
};

/// Loss for one concept: denoising loss on (source image, rendered composite)
/// plus lambda times the mean denoising loss over the prior set, each prior
/// conditioned on the bare description. lambda == 0 skips the prior terms
/// entirely (no draws consumed). batch_draws widens every term's Monte-Carlo
/// estimate.
/// Throws Error{empty_priors} when lambda > 0 and the concept has no priors.
double single_concept_loss(DiffusionBackend& backend, const ConceptSpec& spec, double lambda,
                           const NoiseSchedule& schedule, Rng& rng,
                           std::vector<LossTermRecord>* log = nullptr, std::size_t concept_index = 0,
                           int batch_draws = 1);

/// Stream index a concept's draws come from inside combined_loss; derived
/// from the source image content and the rendered descriptor.
std::uint64_t concept_stream_id(const ConceptSpec& spec);

/// Sum of single_concept_loss over all concepts. Each concept draws from an
/// independent child stream split off the caller's generator and keyed by
/// concept_stream_id, so neither evaluation order nor the surrounding concept
/// set changes a concept's contribution.
double combined_loss(DiffusionBackend& backend, std::span<const ConceptSpec> concepts, double lambda,
                     Rng& rng, std::vector<LossTermRecord>* log = nullptr, int batch_draws = 1);

} // namespace mmc
