#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mmc/backends.hpp"

namespace mmc {

/// Main-object extraction: caption the prompt image, then ask a language
/// model to split the caption into foreground / background / action. Model
/// responses vary in wording, so the same inquiry is issued k times,
/// unparseable replies are dropped, and the modal answer wins.

struct Caption {
    std::string text;
    std::string image_ref;
    std::string backend_id;
};

struct SemanticTriple {
    std::string foreground;                // required, non-empty
    std::optional<std::string> background; // absent when the model answered "None"
    std::optional<std::string> action;

    bool operator==(const SemanticTriple&) const = default;
};

struct VoteTally {
    std::vector<std::string> responses;     // raw, in arrival order
    std::vector<SemanticTriple> parsed;     // malformed responses filtered out
    SemanticTriple winner;                  // original surface form
    std::map<std::string, int> counts;      // normalized triple key -> votes
};

/// The few-shot analysis prompt sent to the language model, with the caption
/// inserted at its single slot.
std::string build_analysis_prompt(const Caption& caption);

/// The template with its placeholder slot still in place.
const std::string& analysis_prompt_template();

/// Tolerant field extraction: looks for `foreground is "..."` (and background
/// / action) case-insensitively anywhere in the reply; "None" maps to absent.
/// Returns nullopt when no foreground can be located.
std::optional<SemanticTriple> parse_analysis_response(const std::string& raw);

/// Key used to count votes: casefolded, whitespace-collapsed, terminal
/// punctuation stripped, per field.
std::string normalized_triple_key(const SemanticTriple& triple);

/// Count parsed responses by normalized key. The winner is the most frequent
/// triple; ties go to the one whose first vote arrived earliest. Surface form
/// of the winner is taken from that earliest vote.
/// Throws Error{all_responses_malformed} when nothing parses.
VoteTally tally_votes(const std::vector<std::string>& responses);

/// Caption via the captioner backend; result trimmed, never empty.
Caption caption_image(const Image& image, const std::string& image_ref, CaptionerBackend& captioner);

struct ExtractionResult {
    Caption caption;
    VoteTally tally;
    SemanticTriple winner;
};

/// Full pipeline for one image: caption, build the analysis prompt, issue
/// inquiry_count independent completions, tally.
ExtractionResult extract_main_object(const Image& image, const std::string& image_ref,
                                     int inquiry_count, CaptionerBackend& captioner,
                                     LanguageModelBackend& llm, double temperature = 1.0,
                                     std::uint64_t seed = 0);

} // namespace mmc
