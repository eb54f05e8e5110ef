#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "mmc/errors.hpp"

namespace mmc {

/// Multi-modal prompts interleave plain text with inline image references.
/// Embed syntax: `<img:PATH>` places the image at PATH into the prompt;
/// `\<` escapes a literal `<` and `\\` a literal backslash. Any other `<`
/// is ordinary text. Whitespace around embeds is preserved verbatim.

struct Segment {
    enum class Kind { text, image };

    Kind kind = Kind::text;
    std::string text;      // kind == text
    std::string image_ref; // kind == image

    static Segment make_text(std::string t) { return {Kind::text, std::move(t), {}}; }
    static Segment make_image(std::string ref) { return {Kind::image, {}, std::move(ref)}; }

    bool operator==(const Segment&) const = default;
};

struct MultiModalPrompt {
    std::vector<Segment> segments;
    std::string source_text;

    std::size_t image_count() const;
    std::vector<std::string> image_refs() const; // in segment order, duplicates kept

    bool operator==(const MultiModalPrompt& other) const { return segments == other.segments; }
};

/// Pure-text form of a prompt after every image segment has been replaced.
struct ResolvedTextPrompt {
    std::string text;
    std::vector<std::pair<std::string, std::string>> substitutions; // (image_ref, descriptor)
};

/// Parse the authored form into segments. Adjacent text runs are merged, so
/// no two text segments are ever neighbors. Image files are not touched here;
/// use validate_prompt for that.
/// Throws Error{empty_prompt} on empty/whitespace input and
/// Error{malformed_embed} on an unterminated or empty `<img:` embed.
MultiModalPrompt parse_prompt(const std::string& raw);

/// Canonical authored form: parse_prompt(serialize_prompt(p)) == p.
std::string serialize_prompt(const MultiModalPrompt& p);

/// Merge adjacent text segments and drop empty ones; for programmatically
/// assembled prompts (parse_prompt output is already normalized).
MultiModalPrompt normalize_prompt(std::vector<Segment> segments);

/// Replace every image segment with its descriptor string, in place, leaving
/// authored text and whitespace untouched.
/// Throws Error{missing_descriptor} when an image_ref has no entry.
ResolvedTextPrompt substitute(const MultiModalPrompt& p,
                              const std::map<std::string, std::string>& descriptors);

struct PromptIssue {
    std::string image_ref;
    std::string message;
};

/// Check that every image reference resolves to a readable, decodable raster
/// file. Relative refs are resolved against base_dir. Empty result == valid.
std::vector<PromptIssue> validate_prompt(const MultiModalPrompt& p,
                                         const std::filesystem::path& base_dir);

/// Load prompts from a UTF-8 text file: one prompt per line; blank lines and
/// lines starting with `#` are skipped. A single-prompt file is the
/// one-line special case.
std::vector<std::string> load_prompt_lines(const std::filesystem::path& path);

} // namespace mmc
