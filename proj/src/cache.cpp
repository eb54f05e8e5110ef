#include "mmc/cache.hpp"

#include <fstream>

#include "mmc/image_io.hpp"

#include "json.hpp"

namespace mmc {
namespace {

nlohmann::json triple_to_json(const SemanticTriple& t) {
    nlohmann::json doc{{"foreground", t.foreground}};
    if (t.background) doc["background"] = *t.background;
    if (t.action) doc["action"] = *t.action;
    return doc;
}

SemanticTriple triple_from_json(const nlohmann::json& doc) {
    SemanticTriple t;
    t.foreground = doc.value("foreground", "");
    if (doc.contains("background")) t.background = doc["background"].get<std::string>();
    if (doc.contains("action")) t.action = doc["action"].get<std::string>();
    return t;
}

} // namespace

ExtractionCache::ExtractionCache(std::filesystem::path file) : file_(std::move(file)) {
    std::ifstream in(file_);
    if (!in) return;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        nlohmann::json doc;
        try {
            doc = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception&) {
            continue; // tolerate torn writes; the record is simply recomputed
        }
        ExtractionRecord record;
        record.image_hash = doc.value("image_hash", "");
        record.captioner_id = doc.value("captioner_id", "");
        record.llm_id = doc.value("llm_id", "");
        record.inquiry_count = doc.value("k", 0);
        record.caption = doc.value("caption", "");
        if (doc.contains("responses"))
            record.responses = doc["responses"].get<std::vector<std::string>>();
        if (doc.contains("winner")) record.winner = triple_from_json(doc["winner"]);
        if (record.image_hash.empty() || record.winner.foreground.empty()) continue;
        entries_[key(record)] = std::move(record);
    }
}

std::string ExtractionCache::key(const ExtractionRecord& record) {
    return record.image_hash + "|" + record.captioner_id + "|" + record.llm_id + "|" +
           std::to_string(record.inquiry_count);
}

std::optional<ExtractionRecord> ExtractionCache::lookup(const std::string& image_hash,
                                                        const std::string& captioner_id,
                                                        const std::string& llm_id,
                                                        int inquiry_count) const {
    ExtractionRecord probe;
    probe.image_hash = image_hash;
    probe.captioner_id = captioner_id;
    probe.llm_id = llm_id;
    probe.inquiry_count = inquiry_count;
    if (auto it = entries_.find(key(probe)); it != entries_.end()) return it->second;
    return std::nullopt;
}

void ExtractionCache::store(const ExtractionRecord& record) {
    entries_[key(record)] = record;
    if (file_.has_parent_path()) std::filesystem::create_directories(file_.parent_path());
    std::ofstream out(file_, std::ios::app);
    if (!out) throw Error(ErrorCode::io_error, "cannot append to cache " + file_.string());
    nlohmann::json doc{{"image_hash", record.image_hash}, {"captioner_id", record.captioner_id},
                       {"llm_id", record.llm_id},         {"k", record.inquiry_count},
                       {"caption", record.caption},       {"responses", record.responses},
                       {"winner", triple_to_json(record.winner)}};
    out << doc.dump() << '\n';
}

PriorStoreResult load_or_generate_priors(const std::filesystem::path& store_root,
                                         DiffusionBackend& pretrained,
                                         const std::string& object_description, int count,
                                         std::uint64_t base_seed, int inference_steps,
                                         double guidance_scale, bool use_cache) {
    std::uint64_t h = fnv1a64(object_description);
    h = fnv1a64(pretrained.id(), h);
    h = hash_mix(h, static_cast<std::uint64_t>(count));
    h = hash_mix(h, base_seed);
    h = hash_mix(h, static_cast<std::uint64_t>(inference_steps));
    h = hash_mix(h, static_cast<std::uint64_t>(guidance_scale * 1024));

    PriorStoreResult result;
    result.dir = store_root / hex64(h);
    const auto manifest_path = result.dir / "manifest.json";

    if (use_cache && std::filesystem::exists(manifest_path)) {
        std::ifstream in(manifest_path);
        nlohmann::json doc;
        bool ok = true;
        try {
            in >> doc;
        } catch (const nlohmann::json::exception&) {
            ok = false;
        }
        if (ok && doc.value("prompt", "") == object_description &&
            doc.value("count", -1) == count) {
            std::vector<PriorSample> priors;
            for (const auto& item : doc.value("samples", nlohmann::json::array())) {
                const auto file = result.dir / item.value("file", "");
                if (!std::filesystem::exists(file)) {
                    ok = false;
                    break;
                }
                PriorSample sample;
                sample.image = read_image(file);
                sample.prompt = object_description;
                sample.seed = item.value("seed", std::uint64_t{0});
                priors.push_back(std::move(sample));
            }
            if (ok && static_cast<int>(priors.size()) == count) {
                result.priors = std::move(priors);
                result.cache_hit = true;
                return result;
            }
        }
    }

    result.priors = generate_priors(pretrained, object_description, count, base_seed,
                                    inference_steps, guidance_scale);
    std::filesystem::create_directories(result.dir);
    nlohmann::json samples = nlohmann::json::array();
    for (std::size_t i = 0; i < result.priors.size(); ++i) {
        char name[32];
        std::snprintf(name, sizeof(name), "prior_%04zu.png", i);
        write_png(result.dir / name, result.priors[i].image);
        // hand back the quantized on-disk pixels so training sees the same
        // tensors whether this call generated or cache-served
        result.priors[i].image = read_image(result.dir / name);
        samples.push_back({{"file", name}, {"seed", result.priors[i].seed}});
    }
    nlohmann::json manifest{{"prompt", object_description},
                            {"backend_id", pretrained.id()},
                            {"count", count},
                            {"base_seed", base_seed},
                            {"inference_steps", inference_steps},
                            {"guidance_scale", guidance_scale},
                            {"samples", samples}};
    std::ofstream out(manifest_path, std::ios::trunc);
    out << manifest.dump(2) << '\n';
    return result;
}

} // namespace mmc
