#include "mmc/prompt.hpp"

#include <cctype>
#include <fstream>

#include "mmc/image_io.hpp"

namespace mmc {
namespace {

constexpr std::string_view kEmbedOpen = "<img:";

bool all_whitespace(const std::string& s) {
    for (unsigned char c : s)
        if (!std::isspace(c)) return false;
    return true;
}

std::string escape_text(const std::string& s) {
    std::string out;
    out.reserve(s.size());
    for (char c : s) {
        if (c == '\\' || c == '<') out.push_back('\\');
        out.push_back(c);
    }
    return out;
}

} // namespace

std::size_t MultiModalPrompt::image_count() const {
    std::size_t n = 0;
    for (const auto& s : segments)
        if (s.kind == Segment::Kind::image) ++n;
    return n;
}

std::vector<std::string> MultiModalPrompt::image_refs() const {
    std::vector<std::string> refs;
    for (const auto& s : segments)
        if (s.kind == Segment::Kind::image) refs.push_back(s.image_ref);
    return refs;
}

MultiModalPrompt parse_prompt(const std::string& raw) {
    if (raw.empty() || all_whitespace(raw))
        throw Error(ErrorCode::empty_prompt, "prompt is empty or whitespace only");

    MultiModalPrompt p;
    p.source_text = raw;
    std::string text;
    auto flush_text = [&] {
        if (!text.empty()) {
            p.segments.push_back(Segment::make_text(std::move(text)));
            text.clear();
        }
    };

    std::size_t i = 0;
    while (i < raw.size()) {
        const char c = raw[i];
        if (c == '\\' && i + 1 < raw.size() && (raw[i + 1] == '<' || raw[i + 1] == '\\')) {
            text.push_back(raw[i + 1]);
            i += 2;
        } else if (c == '<' && raw.compare(i, kEmbedOpen.size(), kEmbedOpen) == 0) {
            const std::size_t close = raw.find('>', i + kEmbedOpen.size());
            if (close == std::string::npos)
                throw Error(ErrorCode::malformed_embed,
                            "unterminated image embed at offset " + std::to_string(i));
            std::string ref = raw.substr(i + kEmbedOpen.size(), close - i - kEmbedOpen.size());
            if (ref.empty())
                throw Error(ErrorCode::malformed_embed,
                            "empty image reference at offset " + std::to_string(i));
            flush_text();
            p.segments.push_back(Segment::make_image(std::move(ref)));
            i = close + 1;
        } else {
            text.push_back(c);
            ++i;
        }
    }
    flush_text();
    return p;
}

std::string serialize_prompt(const MultiModalPrompt& p) {
    std::string out;
    for (const auto& seg : p.segments) {
        if (seg.kind == Segment::Kind::text) {
            out += escape_text(seg.text);
        } else {
            if (seg.image_ref.empty() || seg.image_ref.find('>') != std::string::npos)
                throw Error(ErrorCode::malformed_embed,
                            "image reference not serializable: '" + seg.image_ref + "'");
            out += "<img:";
            out += seg.image_ref;
            out += '>';
        }
    }
    return out;
}

MultiModalPrompt normalize_prompt(std::vector<Segment> segments) {
    MultiModalPrompt p;
    for (auto& seg : segments) {
        if (seg.kind == Segment::Kind::text) {
            if (seg.text.empty()) continue;
            if (!p.segments.empty() && p.segments.back().kind == Segment::Kind::text) {
                p.segments.back().text += seg.text;
                continue;
            }
        }
        p.segments.push_back(std::move(seg));
    }
    p.source_text = serialize_prompt(p);
    return p;
}

ResolvedTextPrompt substitute(const MultiModalPrompt& p,
                              const std::map<std::string, std::string>& descriptors) {
    ResolvedTextPrompt out;
    for (const auto& seg : p.segments) {
        if (seg.kind == Segment::Kind::text) {
            out.text += seg.text;
        } else {
            auto it = descriptors.find(seg.image_ref);
            if (it == descriptors.end())
                throw Error(ErrorCode::missing_descriptor,
                            "no descriptor for image '" + seg.image_ref + "'");
            out.text += it->second;
            out.substitutions.emplace_back(seg.image_ref, it->second);
        }
    }
    return out;
}

std::vector<PromptIssue> validate_prompt(const MultiModalPrompt& p,
                                         const std::filesystem::path& base_dir) {
    std::vector<PromptIssue> issues;
    for (const auto& ref : p.image_refs()) {
        std::filesystem::path path(ref);
        if (path.is_relative()) path = base_dir / path;
        std::error_code ec;
        if (!std::filesystem::exists(path, ec)) {
            issues.push_back({ref, "file not found: " + path.string()});
            continue;
        }
        // a full decode, so truncated or corrupt files surface here and not
        // halfway through a run
        try {
            read_image(path);
        } catch (const Error& e) {
            issues.push_back({ref, e.what()});
        }
    }
    return issues;
}

std::vector<std::string> load_prompt_lines(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::io_error, "cannot open prompt file " + path.string());
    std::vector<std::string> prompts;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        prompts.push_back(line);
    }
    return prompts;
}

} // namespace mmc
