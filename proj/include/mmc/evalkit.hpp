#pragma once

#include <string>
#include <vector>

#include "mmc/backends.hpp"

namespace mmc {

/// Alignment scoring: mean cosine similarity in a reference feature space.
/// The dino-image and clip-image scores compare generated images against the
/// given ones; the clip-text score compares generated images against the
/// object-description form of the prompt.

/// Cosine similarity, clamped into [-1, 1] so accumulated rounding can never
/// push a score out of range.
/// Throws Error{space_mismatch} for incomparable spaces and
/// Error{zero_vector} when either input has zero norm.
double cosine(const EmbeddingVector& a, const EmbeddingVector& b);

/// Mean cosine over all (generated, reference) pairs in the given image space.
/// Throws Error{empty_set} when either list is empty.
double set_alignment_score(std::span<const Image> generated, std::span<const Image> references,
                           EmbedderBackend& embedder, EmbeddingSpace space);

/// Mean cosine between the prompt's text embedding and each generated image.
double text_alignment_score(std::span<const Image> generated, const std::string& pure_text_prompt,
                            EmbedderBackend& embedder);

// ---- report assembly ---------------------------------------------------------

struct PromptRun {
    std::string prompt_key;   // joins the same prompt across methods
    std::string clip_t_text;  // object-description substituted prompt text
    std::vector<Image> generated;
    std::vector<Image> references;
};

struct MethodRun {
    std::string label;
    std::vector<PromptRun> prompts;
};

struct MethodScores {
    std::string label;
    double dino_score = 0.0;
    double clip_i_score = 0.0;
    double clip_t_score = 0.0;
    std::size_t num_prompts = 0;
    std::size_t num_images = 0;
};

struct PromptScores {
    std::string method;
    std::string prompt_key;
    double dino_score = 0.0;
    double clip_i_score = 0.0;
    double clip_t_score = 0.0;
};

struct EvalReport {
    std::vector<MethodScores> methods;
    std::vector<PromptScores> per_prompt;
    std::string footer;
};

/// Score every (method, prompt) cell, then aggregate per method as the mean
/// over prompts of per-prompt scores (pairs are averaged within a prompt
/// first). All methods must cover the same prompt-key set.
/// Throws Error{inconsistent_run} otherwise.
EvalReport build_report(std::span<const MethodRun> runs, EmbedderBackend& embedder);

/// Fixed-width text table plus the footer.
std::string render_report_table(const EvalReport& report);

/// Machine-readable form: per-method aggregates plus per-(method, prompt) rows.
std::string render_report_json(const EvalReport& report);

} // namespace mmc
