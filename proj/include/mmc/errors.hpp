#pragma once

#include <stdexcept>
#include <string>

namespace mmc {

enum class ErrorCode {
    // prompt
    empty_prompt,
    malformed_embed,
    missing_descriptor,
    // extraction
    undecodable_image,
    all_responses_malformed,
    // priors / losses
    invalid_token,
    timestep_out_of_range,
    shape_mismatch,
    empty_priors,
    // finetune
    missing_priors,
    diverged_loss,
    // generate
    unknown_model_handle,
    // evalkit
    zero_vector,
    space_mismatch,
    empty_set,
    inconsistent_run,
    // config / plumbing
    invalid_config,
    backend_unavailable,
    io_error,
    stage_failure,
};

const char* to_string(ErrorCode code);

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

inline const char* to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::empty_prompt: return "EmptyPrompt";
        case ErrorCode::malformed_embed: return "MalformedEmbed";
        case ErrorCode::missing_descriptor: return "MissingDescriptor";
        case ErrorCode::undecodable_image: return "UndecodableImage";
        case ErrorCode::all_responses_malformed: return "AllResponsesMalformed";
        case ErrorCode::invalid_token: return "InvalidToken";
        case ErrorCode::timestep_out_of_range: return "TimestepOutOfRange";
        case ErrorCode::shape_mismatch: return "ShapeMismatch";
        case ErrorCode::empty_priors: return "EmptyPriors";
        case ErrorCode::missing_priors: return "MissingPriors";
        case ErrorCode::diverged_loss: return "DivergedLoss";
        case ErrorCode::unknown_model_handle: return "UnknownModelHandle";
        case ErrorCode::zero_vector: return "ZeroVector";
        case ErrorCode::space_mismatch: return "SpaceMismatch";
        case ErrorCode::empty_set: return "EmptySet";
        case ErrorCode::inconsistent_run: return "InconsistentRun";
        case ErrorCode::invalid_config: return "InvalidConfig";
        case ErrorCode::backend_unavailable: return "BackendUnavailable";
        case ErrorCode::io_error: return "IoError";
        case ErrorCode::stage_failure: return "StageFailure";
    }
    return "UnknownError";
}

} // namespace mmc
