#pragma once

#include <map>
#include <optional>

#include "mmc/finetune.hpp"
#include "mmc/prompt.hpp"

namespace mmc {

/// How image segments turn into text when building the generation prompt:
///  - full: the rendered composite descriptor (token + object description);
///  - extraction_directly: the bare object description, no token, paired with
///    the pretrained model;
///  - finetuning_directly: the bare token, no description.
enum class PromptMode { full, extraction_directly, finetuning_directly };

const char* to_string(PromptMode mode);
std::optional<PromptMode> parse_prompt_mode(const std::string& name); // "full" | "extract" | "token"

/// Substitute every image segment according to the mode.
/// Throws Error{missing_descriptor} when a segment has no concept entry.
ResolvedTextPrompt build_output_prompt(const MultiModalPrompt& prompt,
                                       const std::map<std::string, ConceptSpec>& concepts,
                                       PromptMode mode);

struct GenerationRequest {
    ResolvedTextPrompt resolved_prompt;
    std::optional<FinetunedModelHandle> model; // nullopt: pretrained backend as-is
    int num_images = 1;
    std::optional<int> inference_steps;   // default 200
    std::optional<double> guidance_scale; // default 7.5
    std::uint64_t seed = 0;

    int effective_steps() const { return inference_steps.value_or(200); }
    double effective_guidance() const { return guidance_scale.value_or(7.5); }
};

/// Helper that pins the mode/model pairing: extraction_directly always runs
/// against the pretrained backend, the other modes take the finetuned handle.
GenerationRequest make_request(const MultiModalPrompt& prompt,
                               const std::map<std::string, ConceptSpec>& concepts, PromptMode mode,
                               std::optional<FinetunedModelHandle> finetuned, int num_images,
                               std::uint64_t seed);

struct SampleResult {
    std::vector<Image> images;
    std::vector<std::uint64_t> seeds; // seed .. seed + num_images - 1
    int steps = 0;
    double guidance = 0.0;
};

/// Draw num_images samples with consecutive recorded seeds. When the request
/// carries a model handle, its checkpoint is loaded into the backend first.
/// Throws Error{unknown_model_handle} when the locator cannot be resolved.
SampleResult sample(const GenerationRequest& request, DiffusionBackend& backend);

} // namespace mmc
