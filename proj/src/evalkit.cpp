#include "mmc/evalkit.hpp"

#include <algorithm>
#include <cstring>
#include <cstdio>
#include <set>

#include "json.hpp"

namespace mmc {
namespace {

const char* kAggregationNote =
    "scores are cosine similarities averaged over pairs within each prompt, "
    "then averaged over prompts";

std::vector<EmbeddingVector> embed_all(std::span<const Image> images, EmbedderBackend& embedder,
                                       EmbeddingSpace space) {
    std::vector<EmbeddingVector> out;
    out.reserve(images.size());
    for (const auto& img : images) out.push_back(embedder.embed_image(img, space));
    return out;
}

} // namespace

double cosine(const EmbeddingVector& a, const EmbeddingVector& b) {
    if (!spaces_comparable(a.space, b.space))
        throw Error(ErrorCode::space_mismatch, std::string(to_string(a.space)) + " vs " +
                                                   to_string(b.space));
    if (a.values.size() != b.values.size())
        throw Error(ErrorCode::space_mismatch, "embedding lengths differ");
    const double na = a.values.cast<double>().norm();
    const double nb = b.values.cast<double>().norm();
    if (na == 0.0 || nb == 0.0)
        throw Error(ErrorCode::zero_vector, "cosine of a zero-norm embedding is undefined");
    // Self-similarity is exactly 1 by definition; skip the rounding detour.
    if (std::memcmp(a.values.data(), b.values.data(),
                    sizeof(float) * static_cast<std::size_t>(a.values.size())) == 0)
        return 1.0;
    const double dot = a.values.cast<double>().dot(b.values.cast<double>());
    return std::clamp(dot / (na * nb), -1.0, 1.0);
}

double set_alignment_score(std::span<const Image> generated, std::span<const Image> references,
                           EmbedderBackend& embedder, EmbeddingSpace space) {
    if (generated.empty() || references.empty())
        throw Error(ErrorCode::empty_set, "alignment scoring needs non-empty image sets");
    const auto gen = embed_all(generated, embedder, space);
    const auto ref = embed_all(references, embedder, space);
    std::vector<double> sims;
    sims.reserve(gen.size() * ref.size());
    for (const auto& g : gen)
        for (const auto& r : ref) sims.push_back(cosine(g, r));
    return pairwise_mean(sims);
}

double text_alignment_score(std::span<const Image> generated, const std::string& pure_text_prompt,
                            EmbedderBackend& embedder) {
    if (generated.empty()) throw Error(ErrorCode::empty_set, "no generated images to score");
    if (pure_text_prompt.empty()) throw Error(ErrorCode::empty_set, "prompt text is empty");
    const EmbeddingVector text = embedder.embed_text(pure_text_prompt);
    std::vector<double> sims;
    sims.reserve(generated.size());
    for (const auto& img : generated)
        sims.push_back(cosine(text, embedder.embed_image(img, EmbeddingSpace::clip_image)));
    return pairwise_mean(sims);
}

EvalReport build_report(std::span<const MethodRun> runs, EmbedderBackend& embedder) {
    if (runs.empty()) throw Error(ErrorCode::inconsistent_run, "no method runs given");

    std::set<std::string> expected_keys;
    for (const auto& p : runs.front().prompts) expected_keys.insert(p.prompt_key);
    for (const auto& run : runs) {
        std::set<std::string> keys;
        for (const auto& p : run.prompts) keys.insert(p.prompt_key);
        if (keys != expected_keys)
            throw Error(ErrorCode::inconsistent_run,
                        "method '" + run.label + "' covers a different prompt set");
        if (keys.size() != run.prompts.size())
            throw Error(ErrorCode::inconsistent_run,
                        "method '" + run.label + "' repeats a prompt key");
    }

    EvalReport report;
    report.footer = kAggregationNote;
    for (const auto& run : runs) {
        MethodScores method;
        method.label = run.label;
        method.num_prompts = run.prompts.size();
        std::vector<double> dino, clip_i, clip_t;
        for (const auto& prompt : run.prompts) {
            PromptScores cell;
            cell.method = run.label;
            cell.prompt_key = prompt.prompt_key;
            cell.dino_score = set_alignment_score(prompt.generated, prompt.references, embedder,
                                                  EmbeddingSpace::dino_image);
            cell.clip_i_score = set_alignment_score(prompt.generated, prompt.references, embedder,
                                                    EmbeddingSpace::clip_image);
            cell.clip_t_score = text_alignment_score(prompt.generated, prompt.clip_t_text, embedder);
            dino.push_back(cell.dino_score);
            clip_i.push_back(cell.clip_i_score);
            clip_t.push_back(cell.clip_t_score);
            method.num_images += prompt.generated.size();
            report.per_prompt.push_back(std::move(cell));
        }
        method.dino_score = pairwise_mean(dino);
        method.clip_i_score = pairwise_mean(clip_i);
        method.clip_t_score = pairwise_mean(clip_t);
        report.methods.push_back(std::move(method));
    }
    return report;
}

std::string render_report_table(const EvalReport& report) {
    std::size_t label_width = std::string("Method").size();
    for (const auto& m : report.methods) label_width = std::max(label_width, m.label.size());

    std::string out;
    char line[256];
    std::snprintf(line, sizeof(line), "%-*s  %10s  %12s  %12s\n", static_cast<int>(label_width),
                  "Method", "DINO score", "CLIP-I score", "CLIP-T score");
    out += line;
    out += std::string(label_width + 40, '-') + "\n";
    for (const auto& m : report.methods) {
        std::snprintf(line, sizeof(line), "%-*s  %10.4f  %12.4f  %12.4f\n",
                      static_cast<int>(label_width), m.label.c_str(), m.dino_score, m.clip_i_score,
                      m.clip_t_score);
        out += line;
    }
    out += "\n# " + report.footer + "\n";
    return out;
}

std::string render_report_json(const EvalReport& report) {
    nlohmann::json doc;
    doc["aggregation"] = report.footer;
    auto methods = nlohmann::json::array();
    for (const auto& m : report.methods)
        methods.push_back({{"method", m.label},
                           {"dino_score", m.dino_score},
                           {"clip_i_score", m.clip_i_score},
                           {"clip_t_score", m.clip_t_score},
                           {"num_prompts", m.num_prompts},
                           {"num_images", m.num_images}});
    doc["methods"] = methods;
    auto cells = nlohmann::json::array();
    for (const auto& c : report.per_prompt)
        cells.push_back({{"method", c.method},
                         {"prompt", c.prompt_key},
                         {"dino_score", c.dino_score},
                         {"clip_i_score", c.clip_i_score},
                         {"clip_t_score", c.clip_t_score}});
    doc["per_prompt"] = cells;
    return doc.dump(2) + "\n";
}

} // namespace mmc
