#include "mmc/generate.hpp"

namespace mmc {

const char* to_string(PromptMode mode) {
    switch (mode) {
        case PromptMode::full: return "full";
        case PromptMode::extraction_directly: return "extraction-directly";
        case PromptMode::finetuning_directly: return "finetuning-directly";
    }
    return "unknown";
}

std::optional<PromptMode> parse_prompt_mode(const std::string& name) {
    if (name == "full") return PromptMode::full;
    if (name == "extract" || name == "extraction-directly") return PromptMode::extraction_directly;
    if (name == "token" || name == "finetuning-directly") return PromptMode::finetuning_directly;
    return std::nullopt;
}

ResolvedTextPrompt build_output_prompt(const MultiModalPrompt& prompt,
                                       const std::map<std::string, ConceptSpec>& concepts,
                                       PromptMode mode) {
    std::map<std::string, std::string> descriptors;
    for (const auto& ref : prompt.image_refs()) {
        auto it = concepts.find(ref);
        if (it == concepts.end())
            throw Error(ErrorCode::missing_descriptor, "no concept for image '" + ref + "'");
        const ConceptSpec& spec = it->second;
        switch (mode) {
            case PromptMode::full: descriptors[ref] = spec.descriptor.rendered; break;
            case PromptMode::extraction_directly:
                descriptors[ref] = spec.descriptor.object_description;
                break;
            case PromptMode::finetuning_directly: descriptors[ref] = spec.descriptor.token; break;
        }
    }
    return substitute(prompt, descriptors);
}

GenerationRequest make_request(const MultiModalPrompt& prompt,
                               const std::map<std::string, ConceptSpec>& concepts, PromptMode mode,
                               std::optional<FinetunedModelHandle> finetuned, int num_images,
                               std::uint64_t seed) {
    GenerationRequest request;
    request.resolved_prompt = build_output_prompt(prompt, concepts, mode);
    // Bare-description prompts are meant for the model as it shipped.
    if (mode != PromptMode::extraction_directly) request.model = std::move(finetuned);
    request.num_images = num_images;
    request.seed = seed;
    return request;
}

SampleResult sample(const GenerationRequest& request, DiffusionBackend& backend) {
    if (request.num_images < 1)
        throw Error(ErrorCode::invalid_config, "num_images must be at least 1");
    if (request.effective_steps() < 1)
        throw Error(ErrorCode::invalid_config, "inference_steps must be at least 1");

    if (request.model) backend.load_checkpoint(request.model->checkpoint_locator);

    SampleResult result;
    result.steps = request.effective_steps();
    result.guidance = request.effective_guidance();
    result.images.reserve(static_cast<std::size_t>(request.num_images));
    for (int i = 0; i < request.num_images; ++i) {
        const std::uint64_t seed = request.seed + static_cast<std::uint64_t>(i);
        result.images.push_back(backend.sample(request.resolved_prompt.text, result.steps,
                                               result.guidance, seed));
        result.seeds.push_back(seed);
    }
    return result;
}

} // namespace mmc
