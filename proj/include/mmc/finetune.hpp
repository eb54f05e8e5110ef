#pragma once

#include <filesystem>
#include <optional>

#include "mmc/priorkit.hpp"

namespace mmc {

/// Two finetuning strategies over the backend's parameter subsets:
///  - full_backbone: every backbone weight trains, the rare token's embedding
///    stays frozen;
///  - cross_attention: only the cross-attention block and the token-embedding
///    table train, and resize augmentation is on by default.
enum class FinetuneStrategy { full_backbone, cross_attention };

const char* to_string(FinetuneStrategy strategy);
std::optional<FinetuneStrategy> parse_strategy(const std::string& name); // "db" | "cd"

struct AugmentationConfig {
    double ratio_lo = 0.4;
    double ratio_hi = 1.4;
    double small_below = 0.8; // ratios under this prepend a "very small"-class word
    double large_above = 1.2; // ratios over this prepend a "zoomed in"-class word
};

struct FinetunePlan {
    FinetuneStrategy strategy = FinetuneStrategy::full_backbone;
    double learning_rate = 0.0;
    int max_steps = 0;
    double lambda = 1.0;
    std::string token = "sks";
    bool augmentation = false;
    AugmentationConfig augmentation_config;
    std::vector<ConceptSpec> concepts;
    std::uint64_t seed = 42;
    int checkpoint_every = 100;

    /// Content hash over every field that affects training, including concept
    /// images and priors; the resume logic keys on it.
    std::uint64_t fingerprint(const std::string& backend_id) const;
};

/// Knobs the caller may pin; anything unset is filled per strategy.
struct FinetuneOptions {
    FinetuneStrategy strategy = FinetuneStrategy::full_backbone;
    std::optional<double> learning_rate; // default 2e-6 (full) / 1e-5 (cross-attention)
    std::optional<int> max_steps;        // default 800 (full) / 500 (cross-attention)
    double lambda = 1.0;
    std::string token = "sks";
    std::optional<bool> augmentation;    // default: on iff cross-attention
    AugmentationConfig augmentation_config;
    std::uint64_t seed = 42;
    int checkpoint_every = 100;
};

/// Throws Error{missing_priors} when lambda > 0 and a concept has no priors,
/// Error{invalid_config} for inconsistent knobs (augmentation with the
/// full-backbone strategy, non-positive rate or steps).
FinetunePlan plan_finetune(const FinetuneOptions& options, std::vector<ConceptSpec> concepts);

struct FinetunedModelHandle {
    std::string backend_id;
    std::string checkpoint_locator;
    std::filesystem::path run_dir;
    FinetunePlan plan;
    std::vector<double> loss_trace; // one entry per executed step
    bool reused = false;            // true when a completed run was served as-is
};

/// Run (or resume) the optimization: max_steps gradient steps against the
/// combined prior-preservation objective, one backend step per iteration.
/// Artifacts land in output_dir: plan.json (snapshot + environment
/// fingerprint), trace.csv, checkpoints/, state.json. A completed run in
/// output_dir with a matching plan fingerprint is returned as-is.
/// Throws Error{diverged_loss} on a non-finite loss, after persisting the
/// partial trace.
FinetunedModelHandle run_finetune(DiffusionBackend& backend, const FinetunePlan& plan,
                                  const std::filesystem::path& output_dir);

/// Reload a handle previously produced by run_finetune (scalar plan fields
/// and trace only; concept tensors are not round-tripped).
FinetunedModelHandle load_model_handle(const std::filesystem::path& run_dir);

struct Augmented {
    Image image;
    std::string prompt;
};

/// Resize augmentation: draw a ratio in [ratio_lo, ratio_hi], rescale the
/// image by it (padding or center-cropping back to the original size), and
/// prepend a size cue to the prompt for extreme ratios. Ratio 1 is the
/// identity on both image and prompt.
Augmented cd_augment(const Image& image, const std::string& prompt, Rng& rng,
                     const AugmentationConfig& config = {});

/// Same, with the ratio forced by the caller; rng only picks the cue word.
Augmented cd_augment_with_ratio(const Image& image, const std::string& prompt, double ratio,
                                Rng& rng, const AugmentationConfig& config = {});

std::span<const std::string_view> small_ratio_modifiers();
std::span<const std::string_view> large_ratio_modifiers();

std::string environment_fingerprint();

} // namespace mmc
