#pragma once

#include <filesystem>
#include <map>
#include <optional>

#include "mmc/extraction.hpp"
#include "mmc/priorkit.hpp"

namespace mmc {

/// Line-delimited extraction cache: one JSON record per (image content hash,
/// captioner, language model, inquiry count). Model calls are expensive and
/// nondeterministic, so hits replay the recorded winner instead.
struct ExtractionRecord {
    std::string image_hash; // hex64 of the image content
    std::string captioner_id;
    std::string llm_id;
    int inquiry_count = 0;
    std::string caption;
    std::vector<std::string> responses;
    SemanticTriple winner;
};

class ExtractionCache {
public:
    explicit ExtractionCache(std::filesystem::path file);

    std::optional<ExtractionRecord> lookup(const std::string& image_hash,
                                           const std::string& captioner_id,
                                           const std::string& llm_id, int inquiry_count) const;

    /// Appends to the backing file and the in-memory index.
    void store(const ExtractionRecord& record);

    const std::filesystem::path& file() const { return file_; }

private:
    static std::string key(const ExtractionRecord& record);

    std::filesystem::path file_;
    std::map<std::string, ExtractionRecord> entries_;
};

/// Content-addressed prior sample store: one directory per (description,
/// backend, count, seed, sampler settings) holding the images plus a
/// manifest with the prompt, seeds, and backend id.
struct PriorStoreResult {
    std::vector<PriorSample> priors;
    std::filesystem::path dir;
    bool cache_hit = false;
};

PriorStoreResult load_or_generate_priors(const std::filesystem::path& store_root,
                                         DiffusionBackend& pretrained,
                                         const std::string& object_description, int count,
                                         std::uint64_t base_seed, int inference_steps,
                                         double guidance_scale, bool use_cache = true);

} // namespace mmc
