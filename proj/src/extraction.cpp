#include "mmc/extraction.hpp"

#include <regex>

#include "mmc/errors.hpp"
#include "mmc/strings.hpp"

namespace mmc {
namespace {

// Five worked examples teach the model the task; "None" marks an absent
// background or action. No strict reply format is demanded on purpose --
// the tolerant parser below copes with free-form phrasing instead.
const std::string kAnalysisTemplate =
    "I will give you some examples.\n"
    "\n"
    "Given a sentence \"arafed dog sitting on the beach with its tongue out\", the foreground is "
    "\"arafed dog with its tongue out\", the background is \"beach\" and the action is \"sitting\".\n"
    "\n"
    "Given a sentence \"there is a cat and a dog that are playing together\", the foreground is "
    "\"a cat and a dog\", the background is \"None\" and the action is \"playing\".\n"
    "\n"
    "Given a sentence \"there are two cats that are playing with each other\", the foreground is "
    "\"two cats\", the background is \"None\" and the action is \"playing with each other\".\n"
    "\n"
    "Given a sentence \"there is a cat on the bench\", the foreground is \"a cat\", the background "
    "is \"bench\" and the action is \"None\".\n"
    "\n"
    "Given a sentence \"there is a white sandy beach with cat\", the foreground is \"a white sandy "
    "beach with cat\", the background is \"None\" and the action is \"None\".\n"
    "\n"
    "Now imitate these, I will give you a sentence \"xxx\" here, and you need to give me the "
    "foreground, background and action.";

constexpr std::string_view kSlot = "\"xxx\"";

std::optional<std::string> find_quoted_field(const std::string& raw, const char* field) {
    const std::regex pattern(std::string(field) + R"re(\s+is\s*[:]?\s*"([^"]*)")re",
                             std::regex::icase);
    std::smatch m;
    if (!std::regex_search(raw, m, pattern)) return std::nullopt;
    return m[1].str();
}

bool means_none(const std::string& value) { return to_lower_ascii(trim(value)) == "none"; }

std::string normalize_field(const std::string& value) {
    std::string s = collapse_whitespace(to_lower_ascii(value));
    while (!s.empty() && (s.back() == '.' || s.back() == '!' || s.back() == '?' ||
                          s.back() == ',' || s.back() == ';' || s.back() == ':'))
        s.pop_back();
    return trim(s);
}

} // namespace

const std::string& analysis_prompt_template() { return kAnalysisTemplate; }

std::string build_analysis_prompt(const Caption& caption) {
    if (trim(caption.text).empty())
        throw Error(ErrorCode::invalid_config, "caption text must be non-empty");
    std::string out = kAnalysisTemplate;
    const auto slot = out.find(kSlot);
    out.replace(slot + 1, kSlot.size() - 2, caption.text);
    return out;
}

std::optional<SemanticTriple> parse_analysis_response(const std::string& raw) {
    auto fg = find_quoted_field(raw, "foreground");
    if (!fg || trim(*fg).empty() || means_none(*fg)) return std::nullopt;

    SemanticTriple triple;
    triple.foreground = trim(*fg);
    if (auto bg = find_quoted_field(raw, "background"); bg && !means_none(*bg))
        triple.background = trim(*bg);
    if (auto act = find_quoted_field(raw, "action"); act && !means_none(*act))
        triple.action = trim(*act);
    return triple;
}

std::string normalized_triple_key(const SemanticTriple& triple) {
    auto field = [](const std::optional<std::string>& v) {
        return v ? normalize_field(*v) : std::string("\x01");
    };
    return normalize_field(triple.foreground) + '\x1f' + field(triple.background) + '\x1f' +
           field(triple.action);
}

VoteTally tally_votes(const std::vector<std::string>& responses) {
    VoteTally tally;
    tally.responses = responses;
    std::vector<std::string> keys;
    for (const auto& raw : responses) {
        if (auto triple = parse_analysis_response(raw)) {
            tally.parsed.push_back(*triple);
            keys.push_back(normalized_triple_key(*triple));
        }
    }
    if (tally.parsed.empty())
        throw Error(ErrorCode::all_responses_malformed,
                    "none of " + std::to_string(responses.size()) + " responses parsed");

    for (const auto& key : keys) ++tally.counts[key];

    // Highest count wins; among tied keys the one seen first in arrival order.
    std::size_t winner_index = 0;
    int winner_count = 0;
    for (std::size_t i = 0; i < keys.size(); ++i) {
        const int count = tally.counts[keys[i]];
        if (count > winner_count) {
            winner_count = count;
            winner_index = i;
        }
    }
    tally.winner = tally.parsed[winner_index];
    return tally;
}

Caption caption_image(const Image& image, const std::string& image_ref,
                      CaptionerBackend& captioner) {
    Caption caption;
    caption.text = trim(captioner.caption(image));
    caption.image_ref = image_ref;
    caption.backend_id = captioner.id();
    if (caption.text.empty())
        throw Error(ErrorCode::backend_unavailable,
                    "captioner " + captioner.id() + " returned an empty caption");
    return caption;
}

ExtractionResult extract_main_object(const Image& image, const std::string& image_ref,
                                     int inquiry_count, CaptionerBackend& captioner,
                                     LanguageModelBackend& llm, double temperature,
                                     std::uint64_t seed) {
    if (inquiry_count < 1)
        throw Error(ErrorCode::invalid_config, "inquiry count must be at least 1");

    ExtractionResult result;
    result.caption = caption_image(image, image_ref, captioner);
    const std::string prompt = build_analysis_prompt(result.caption);

    // Inquiries are issued sequentially; the tally depends only on this
    // recorded arrival order.
    std::vector<std::string> responses;
    responses.reserve(static_cast<std::size_t>(inquiry_count));
    for (int i = 0; i < inquiry_count; ++i)
        responses.push_back(llm.complete(prompt, temperature, seed + static_cast<std::uint64_t>(i)));

    result.tally = tally_votes(responses);
    result.winner = result.tally.winner;
    return result;
}

} // namespace mmc
