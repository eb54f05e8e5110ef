#include "mmc/backends.hpp"

#include <cmath>

#include "mmc/errors.hpp"

namespace mmc {

void NoiseSchedule::validate() const {
    if (alpha.size() == 0 || alpha.size() != sigma.size())
        throw Error(ErrorCode::invalid_config, "noise schedule arrays must be non-empty and equal length");
    for (Eigen::Index i = 0; i < alpha.size(); ++i) {
        if (!std::isfinite(alpha[i]) || !std::isfinite(sigma[i]))
            throw Error(ErrorCode::invalid_config, "noise schedule entries must be finite");
        if (i > 0 && (alpha[i] > alpha[i - 1] || sigma[i] < sigma[i - 1]))
            throw Error(ErrorCode::invalid_config,
                        "alpha must be non-increasing and sigma non-decreasing");
    }
}

const char* to_string(EmbeddingSpace space) {
    switch (space) {
        case EmbeddingSpace::dino_image: return "dino-image";
        case EmbeddingSpace::clip_image: return "clip-image";
        case EmbeddingSpace::clip_text: return "clip-text";
    }
    return "unknown";
}

bool spaces_comparable(EmbeddingSpace a, EmbeddingSpace b) {
    if (a == b) return true;
    auto is_clip = [](EmbeddingSpace s) {
        return s == EmbeddingSpace::clip_image || s == EmbeddingSpace::clip_text;
    };
    return is_clip(a) && is_clip(b);
}

} // namespace mmc
