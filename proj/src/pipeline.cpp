#include "mmc/pipeline.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "mmc/image_io.hpp"
#include "mmc/remote_backends.hpp"
#include "mmc/stub_backends.hpp"
#include "mmc/strings.hpp"

namespace mmc {
namespace {

struct PromptEntry {
    std::string raw;
    MultiModalPrompt parsed;
    std::string key;
};

struct SourceImage {
    std::string ref;
    Image original;
    Image native; // resized to the diffusion backend's resolution
    std::string hash;
};

RemoteOptions remote_options(const BackendConfig& backend) {
    RemoteOptions options;
    options.endpoint = backend.endpoint;
    options.model = backend.model;
    options.auth_env = backend.auth_env;
    options.jitter_seed = backend.seed;
    return options;
}

std::string prompt_key_of(const MultiModalPrompt& prompt) {
    return hex64(fnv1a64(serialize_prompt(prompt)));
}

nlohmann::json read_json_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) return nlohmann::json();
    try {
        nlohmann::json doc;
        in >> doc;
        return doc;
    } catch (const nlohmann::json::exception&) {
        return nlohmann::json();
    }
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error(ErrorCode::io_error, "cannot write " + path.string());
    out << text;
}

EvalReport report_from_json(const nlohmann::json& doc) {
    EvalReport report;
    report.footer = doc.value("aggregation", "");
    for (const auto& m : doc.value("methods", nlohmann::json::array())) {
        MethodScores scores;
        scores.label = m.value("method", "");
        scores.dino_score = m.value("dino_score", 0.0);
        scores.clip_i_score = m.value("clip_i_score", 0.0);
        scores.clip_t_score = m.value("clip_t_score", 0.0);
        scores.num_prompts = m.value("num_prompts", std::size_t{0});
        scores.num_images = m.value("num_images", std::size_t{0});
        report.methods.push_back(std::move(scores));
    }
    for (const auto& c : doc.value("per_prompt", nlohmann::json::array())) {
        PromptScores cell;
        cell.method = c.value("method", "");
        cell.prompt_key = c.value("prompt", "");
        cell.dino_score = c.value("dino_score", 0.0);
        cell.clip_i_score = c.value("clip_i_score", 0.0);
        cell.clip_t_score = c.value("clip_t_score", 0.0);
        report.per_prompt.push_back(std::move(cell));
    }
    return report;
}

std::vector<std::filesystem::path> list_images_sorted(const std::filesystem::path& dir) {
    std::vector<std::filesystem::path> files;
    std::error_code ec;
    for (const auto& entry : std::filesystem::directory_iterator(dir, ec)) {
        if (!entry.is_regular_file()) continue;
        const auto ext = entry.path().extension();
        if (ext == ".png" || ext == ".ppm") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    return files;
}

} // namespace

BackendSet make_backend_set(const Config& config) {
    BackendSet set;
    if (config.resolved_kind(config.diffusion) == "stub") {
        const std::uint64_t seed = config.diffusion.seed;
        set.make_diffusion = [seed] { return std::make_unique<StubDiffusion>(seed); };
    } else {
        const RemoteOptions options = remote_options(config.diffusion);
        set.make_diffusion = [options] { return std::make_unique<RemoteDiffusion>(options); };
    }
    if (config.resolved_kind(config.captioner) == "stub") {
        set.captioner = std::make_shared<FixedCaptioner>();
    } else {
        set.captioner = std::make_shared<RemoteCaptioner>(remote_options(config.captioner));
    }
    if (config.resolved_kind(config.llm) == "stub") {
        set.llm = std::make_shared<ScriptedLanguageModel>();
    } else {
        set.llm = std::make_shared<RemoteLanguageModel>(remote_options(config.llm));
    }
    if (config.resolved_kind(config.embedder) == "stub") {
        set.embedder = std::make_shared<HashingEmbedder>(config.embedder.seed);
    } else {
        set.embedder = std::make_shared<RemoteEmbedder>(remote_options(config.embedder));
    }
    return set;
}

const StageRecord* PipelineResult::stage(const std::string& name) const {
    for (const auto& record : stages)
        if (record.stage == name) return &record;
    return nullptr;
}

PipelineResult run_pipeline(const Config& config, const std::filesystem::path& prompt_file,
                            const PipelineOptions& options, const BackendSet* injected) {
    // ---- parse and validate the corpus ------------------------------------
    const auto lines = load_prompt_lines(prompt_file);
    if (lines.empty())
        throw Error(ErrorCode::empty_prompt, prompt_file.string() + " contains no prompts");

    const std::filesystem::path base_dir =
        options.prompt_base_dir.empty() ? prompt_file.parent_path() : options.prompt_base_dir;

    std::vector<PromptEntry> prompts;
    for (const auto& raw : lines) {
        PromptEntry entry;
        entry.raw = raw;
        entry.parsed = parse_prompt(raw);
        entry.key = prompt_key_of(entry.parsed);
        prompts.push_back(std::move(entry));
    }
    for (const auto& entry : prompts) {
        const auto issues = validate_prompt(entry.parsed, base_dir);
        if (!issues.empty())
            throw Error(ErrorCode::undecodable_image,
                        "prompt '" + entry.raw + "': " + issues.front().message);
    }

    // ---- run identity -------------------------------------------------------
    std::uint64_t corpus_hash = fnv1a64(config.fingerprint());
    for (const auto& entry : prompts) corpus_hash = fnv1a64(entry.raw, corpus_hash);

    PipelineResult result;
    result.run_id = hex64(corpus_hash);
    result.run_dir = options.workdir / "runs" / result.run_id;

    RunLock lock(result.run_dir);
    RunManifest manifest(result.run_dir, result.run_id);
    {
        nlohmann::json meta{{"prompt_file", prompt_file.string()},
                            {"config_fingerprint", config.fingerprint()},
                            {"profile", config.profile}};
        auto prompt_docs = nlohmann::json::array();
        for (const auto& entry : prompts) prompt_docs.push_back(entry.raw);
        meta["prompts"] = prompt_docs;
        manifest.begin(meta);
    }

    const BackendSet backends = injected ? *injected : make_backend_set(config);
    auto pretrained = backends.make_diffusion();
    const ImageShape native = pretrained->native_shape();

    bool stop_requested = false;
    auto run_stage = [&](const std::string& name, auto&& body) {
        if (stop_requested) return;
        try {
            StageRecord record = body();
            record.stage = name;
            manifest.record_stage(record);
            result.stages.push_back(record);
            if (options.stop_after == name) stop_requested = true;
        } catch (const std::exception& e) {
            StageRecord record;
            record.stage = name;
            record.status = "failed";
            record.detail = e.what();
            manifest.record_stage(record);
            result.stages.push_back(record);
            manifest.finish(false, {{"failed_stage", name}});
            throw;
        }
    };

    // ---- unique source images, in first-appearance order -------------------
    std::vector<SourceImage> sources;
    for (const auto& entry : prompts) {
        for (const auto& ref : entry.parsed.image_refs()) {
            if (std::any_of(sources.begin(), sources.end(),
                            [&](const SourceImage& s) { return s.ref == ref; }))
                continue;
            SourceImage source;
            source.ref = ref;
            std::filesystem::path path(ref);
            if (path.is_relative()) path = base_dir / path;
            source.original = read_image(path);
            source.native = resize_bilinear(source.original, native.height, native.width);
            source.hash = hex64(image_content_hash(source.original));
            sources.push_back(std::move(source));
        }
    }

    // ---- stage: extract ------------------------------------------------------
    std::map<std::string, ExtractionRecord> extractions; // by ref
    run_stage("extract", [&] {
        StageRecord record;
        if (sources.empty()) {
            record.status = "skipped";
            record.detail = "prompt corpus has no image segments";
            return record;
        }
        ExtractionCache cache(options.workdir / "cache" / "extraction.jsonl");
        std::size_t hits = 0;
        auto triples = nlohmann::json::object();
        for (const auto& source : sources) {
            std::optional<ExtractionRecord> cached;
            if (options.use_cache)
                cached = cache.lookup(source.hash, backends.captioner->id(), backends.llm->id(),
                                      config.inquiry_count);
            if (cached) {
                ++hits;
                extractions[source.ref] = *cached;
            } else {
                const auto extracted = extract_main_object(
                    source.original, source.ref, config.inquiry_count, *backends.captioner,
                    *backends.llm, config.temperature, hash_mix(config.seed, fnv1a64(source.hash)));
                ExtractionRecord fresh;
                fresh.image_hash = source.hash;
                fresh.captioner_id = backends.captioner->id();
                fresh.llm_id = backends.llm->id();
                fresh.inquiry_count = config.inquiry_count;
                fresh.caption = extracted.caption.text;
                fresh.responses = extracted.tally.responses;
                fresh.winner = extracted.winner;
                cache.store(fresh);
                extractions[source.ref] = std::move(fresh);
            }
            const SemanticTriple& winner = extractions[source.ref].winner;
            nlohmann::json triple{{"foreground", winner.foreground}};
            if (winner.background) triple["background"] = *winner.background;
            if (winner.action) triple["action"] = *winner.action;
            triples[source.ref] = std::move(triple);
        }
        record.status = hits == sources.size() ? "cached" : "done";
        record.detail = std::to_string(hits) + "/" + std::to_string(sources.size()) + " cache hits";
        record.artifacts.push_back(cache.file().string());
        record.data["triples"] = triples;
        record.data["cache_hits"] = hits;
        record.data["cache_served"] = hits == sources.size();
        return record;
    });

    // ---- stage: priors ---------------------------------------------------------
    std::map<std::string, PriorStoreResult> prior_sets; // by ref
    run_stage("priors", [&] {
        StageRecord record;
        if (sources.empty()) {
            record.status = "skipped";
            record.detail = "no concepts to anchor";
            return record;
        }
        if (config.lambda == 0.0) {
            record.status = "skipped";
            record.detail = "lambda is zero; the prior term is off";
            return record;
        }
        std::size_t hits = 0;
        for (const auto& source : sources) {
            const std::string& description = extractions.at(source.ref).winner.foreground;
            auto stored = load_or_generate_priors(
                options.workdir / "cache" / "priors", *pretrained, description,
                config.resolved_prior_count(),
                hash_mix(config.seed ^ 0x9e37u, fnv1a64(description)), config.inference_steps,
                config.guidance_scale, options.use_cache);
            if (stored.cache_hit) ++hits;
            record.artifacts.push_back((stored.dir / "manifest.json").string());
            prior_sets.emplace(source.ref, std::move(stored));
        }
        record.status = hits == sources.size() ? "cached" : "done";
        record.detail = std::to_string(hits) + "/" + std::to_string(sources.size()) + " cache hits";
        record.data["cache_served"] = hits == sources.size();
        return record;
    });

    // ---- assemble concepts -------------------------------------------------------
    std::map<std::string, ConceptSpec> concepts; // by ref
    {
        const auto tokens = config.rare_tokens(sources.size());
        for (std::size_t i = 0; i < sources.size(); ++i) {
            const auto& source = sources[i];
            const SemanticTriple& triple = extractions.at(source.ref).winner;
            auto spec = make_concept(source.ref, source.native, triple,
                                     make_composite(tokens[i], triple.foreground));
            if (auto it = prior_sets.find(source.ref); it != prior_sets.end())
                spec.priors = it->second.priors;
            concepts.emplace(source.ref, std::move(spec));
        }
    }

    // ---- stage: finetune ------------------------------------------------------------
    std::optional<FinetunedModelHandle> handle;
    run_stage("finetune", [&] {
        StageRecord record;
        if (concepts.empty()) {
            record.status = "skipped";
            record.detail = "nothing to customize; sampling stays on the pretrained model";
            return record;
        }
        std::vector<ConceptSpec> list;
        for (const auto& source : sources) list.push_back(concepts.at(source.ref));
        const auto plan = plan_finetune(config.finetune_options(), std::move(list));
        auto trainee = backends.make_diffusion();
        if (!options.use_cache) {
            std::error_code ec;
            std::filesystem::remove_all(result.run_dir / "finetune", ec);
        }
        handle = run_finetune(*trainee, plan, result.run_dir / "finetune");
        record.status = handle->reused ? "cached" : "done";
        record.detail = "strategy " + std::string(to_string(plan.strategy)) + ", " +
                        std::to_string(handle->loss_trace.size()) + " steps";
        record.artifacts = {handle->checkpoint_locator,
                            (result.run_dir / "finetune" / "trace.csv").string(),
                            (result.run_dir / "finetune" / "plan.json").string()};
        record.data["final_loss"] = handle->loss_trace.empty() ? 0.0 : handle->loss_trace.back();
        record.data["cache_served"] = handle->reused;
        return record;
    });

    // ---- stage: generate ---------------------------------------------------------------
    const std::vector<PromptMode> modes =
        concepts.empty() ? std::vector<PromptMode>{PromptMode::full}
                         : std::vector<PromptMode>{PromptMode::full, PromptMode::extraction_directly,
                                                   PromptMode::finetuning_directly};
    const auto outputs_dir = result.run_dir / "outputs";
    const auto gen_manifest_path = outputs_dir / "generation_manifest.json";

    run_stage("generate", [&] {
        StageRecord record;

        // a complete manifest whose files all exist serves the rerun
        if (options.use_cache) {
            const auto existing = read_json_file(gen_manifest_path);
            if (existing.is_object() && existing.value("complete", false)) {
                bool intact = true;
                for (const auto& entry : existing.value("entries", nlohmann::json::array()))
                    for (const auto& file : entry.value("files", nlohmann::json::array()))
                        if (!std::filesystem::exists(outputs_dir / file.get<std::string>()))
                            intact = false;
                if (intact) {
                    record.status = "cached";
                    record.detail = "all sampled images already on disk";
                    record.artifacts.push_back(gen_manifest_path.string());
                    record.data["cache_served"] = true;
                    return record;
                }
            }
        }

        auto gen_backend = backends.make_diffusion();
        auto entries = nlohmann::json::array();
        for (const PromptMode mode : modes) {
            for (const auto& entry : prompts) {
                const auto request =
                    make_request(entry.parsed, concepts, mode, handle, config.resolved_num_images(),
                                 hash_mix(config.seed, fnv1a64(std::string(to_string(mode)) + "|" +
                                                               entry.key)));
                // requests without a handle run on the untouched instance
                auto& backend = request.model ? *gen_backend : *pretrained;
                const auto sampled = sample(request, backend);

                const auto method_dir = outputs_dir / to_string(mode) / entry.key;
                auto files = nlohmann::json::array();
                for (std::size_t i = 0; i < sampled.images.size(); ++i) {
                    const std::string name = std::to_string(sampled.seeds[i]) + ".png";
                    write_png(method_dir / name, sampled.images[i]);
                    files.push_back((std::filesystem::path(to_string(mode)) / entry.key / name)
                                        .generic_string());
                }
                entries.push_back(
                    {{"method", to_string(mode)},
                     {"prompt_key", entry.key},
                     {"prompt", entry.raw},
                     {"text", request.resolved_prompt.text},
                     {"clip_t_text",
                      build_output_prompt(entry.parsed, concepts, PromptMode::extraction_directly)
                          .text},
                     {"image_refs", entry.parsed.image_refs()},
                     {"seeds", sampled.seeds},
                     {"steps", sampled.steps},
                     {"guidance", sampled.guidance},
                     {"files", files}});
            }
        }

        // reference images, one directory per prompt, for evaluate joins
        for (const auto& entry : prompts) {
            const auto refs_dir = result.run_dir / "refs" / entry.key;
            std::size_t index = 0;
            for (const auto& ref : entry.parsed.image_refs()) {
                const auto src = std::find_if(sources.begin(), sources.end(),
                                              [&](const SourceImage& s) { return s.ref == ref; });
                write_png(refs_dir / ("ref_" + std::to_string(index++) + ".png"), src->native);
            }
        }

        nlohmann::json doc{{"complete", true}, {"entries", std::move(entries)}};
        write_text_file(gen_manifest_path, doc.dump(2) + "\n");
        record.status = "done";
        record.detail = std::to_string(modes.size()) + " methods x " +
                        std::to_string(prompts.size()) + " prompts x " +
                        std::to_string(config.resolved_num_images()) + " images";
        record.artifacts.push_back(gen_manifest_path.string());
        record.data["cache_served"] = false;
        return record;
    });

    // ---- stage: evaluate ----------------------------------------------------------------
    result.report_txt = result.run_dir / "report.txt";
    result.report_json = result.run_dir / "report.json";
    run_stage("evaluate", [&] {
        StageRecord record;
        const bool any_refs = !sources.empty();
        if (!any_refs) {
            record.status = "skipped";
            record.detail = "no reference images; image-alignment scores are undefined";
            return record;
        }

        const auto gen_doc = read_json_file(gen_manifest_path);
        const std::string eval_key =
            hex64(fnv1a64(gen_doc.dump() + "|" + backends.embedder->id()));
        const auto key_path = result.run_dir / "eval.key";

        if (options.use_cache && std::filesystem::exists(key_path) &&
            std::filesystem::exists(result.report_json)) {
            std::ifstream key_in(key_path);
            std::string stored;
            std::getline(key_in, stored);
            if (stored == eval_key) {
                result.report = report_from_json(read_json_file(result.report_json));
                record.status = "cached";
                record.detail = "report matches the recorded inputs";
                record.artifacts = {result.report_txt.string(), result.report_json.string()};
                record.data["cache_served"] = true;
                return record;
            }
        }

        result.report = evaluate_run(outputs_dir, result.run_dir / "refs", result.report_txt,
                                     *backends.embedder);
        write_text_file(key_path, eval_key + "\n");
        record.status = "done";
        record.detail = std::to_string(result.report.methods.size()) + " methods scored";
        record.artifacts = {result.report_txt.string(), result.report_json.string()};
        record.data["cache_served"] = false;
        return record;
    });

    nlohmann::json summary{{"run_dir", result.run_dir.string()}};
    if (!result.report.methods.empty()) {
        summary["report_txt"] = result.report_txt.string();
        summary["report_json"] = result.report_json.string();
    }
    manifest.finish(true, summary);
    return result;
}

EvalReport evaluate_run(const std::filesystem::path& run_outputs_dir,
                        const std::filesystem::path& refs_dir,
                        const std::filesystem::path& report_path, EmbedderBackend& embedder) {
    const auto gen_doc = read_json_file(run_outputs_dir / "generation_manifest.json");
    if (!gen_doc.is_object())
        throw Error(ErrorCode::io_error,
                    "no generation_manifest.json under " + run_outputs_dir.string());

    std::map<std::string, MethodRun> by_method;
    std::vector<std::string> method_order;
    for (const auto& entry : gen_doc.value("entries", nlohmann::json::array())) {
        const std::string method = entry.value("method", "");
        const std::string prompt_key = entry.value("prompt_key", "");
        if (!by_method.count(method)) {
            method_order.push_back(method);
            by_method[method].label = method;
        }
        PromptRun prompt_run;
        prompt_run.prompt_key = prompt_key;
        prompt_run.clip_t_text = entry.value("clip_t_text", "");
        for (const auto& file : entry.value("files", nlohmann::json::array()))
            prompt_run.generated.push_back(read_image(run_outputs_dir / file.get<std::string>()));
        for (const auto& ref_file : list_images_sorted(refs_dir / prompt_key))
            prompt_run.references.push_back(read_image(ref_file));
        if (prompt_run.references.empty())
            throw Error(ErrorCode::empty_set,
                        "no reference images under " + (refs_dir / prompt_key).string());
        by_method[method].prompts.push_back(std::move(prompt_run));
    }

    std::vector<MethodRun> runs;
    for (const auto& m : method_order) runs.push_back(std::move(by_method[m]));
    EvalReport report = build_report(runs, embedder);

    auto txt_path = report_path;
    if (txt_path.extension() != ".txt") txt_path += ".txt";
    write_text_file(txt_path, render_report_table(report));
    auto json_path = txt_path;
    json_path.replace_extension(".json");
    write_text_file(json_path, render_report_json(report));
    return report;
}

std::string render_ballots_csv(const std::filesystem::path& run_outputs_dir) {
    const auto gen_doc = read_json_file(run_outputs_dir / "generation_manifest.json");
    if (!gen_doc.is_object())
        throw Error(ErrorCode::io_error,
                    "no generation_manifest.json under " + run_outputs_dir.string());
    std::ostringstream out;
    out << "method,prompt_key,prompt,image_path\n";
    auto escape = [](std::string field) {
        if (field.find_first_of(",\"\n") == std::string::npos) return field;
        std::string quoted = "\"";
        for (char c : field) {
            if (c == '"') quoted += '"';
            quoted += c;
        }
        return quoted + "\"";
    };
    for (const auto& entry : gen_doc.value("entries", nlohmann::json::array())) {
        for (const auto& file : entry.value("files", nlohmann::json::array())) {
            out << escape(entry.value("method", "")) << ',' << entry.value("prompt_key", "") << ','
                << escape(entry.value("prompt", "")) << ','
                << escape((run_outputs_dir / file.get<std::string>()).string()) << '\n';
        }
    }
    return out.str();
}

std::string render_ablation_comparison(const EvalReport& report) {
    const MethodScores* full = nullptr;
    for (const auto& m : report.methods)
        if (m.label == "full") full = &m;
    std::ostringstream out;
    out << "Ablation deltas against the full pathway (positive favors full)\n";
    if (!full) {
        out << "  (no 'full' method present)\n";
        return out.str();
    }
    char line[160];
    for (const auto& m : report.methods) {
        if (m.label == "full") continue;
        std::snprintf(line, sizeof(line),
                      "  %-22s  dDINO %+0.4f  dCLIP-I %+0.4f  dCLIP-T %+0.4f\n", m.label.c_str(),
                      full->dino_score - m.dino_score, full->clip_i_score - m.clip_i_score,
                      full->clip_t_score - m.clip_t_score);
        out << line;
    }
    return out.str();
}

} // namespace mmc
