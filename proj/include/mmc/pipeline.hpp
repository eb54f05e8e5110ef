#pragma once

#include <functional>
#include <memory>

#include "mmc/cache.hpp"
#include "mmc/config.hpp"
#include "mmc/evalkit.hpp"
#include "mmc/generate.hpp"
#include "mmc/manifest.hpp"

namespace mmc {

/// Backend instances for one run. make_diffusion hands out fresh instances so
/// the pipeline can keep a pristine pretrained model next to the finetuned
/// one; the other roles are shared.
struct BackendSet {
    std::function<std::unique_ptr<DiffusionBackend>()> make_diffusion;
    std::shared_ptr<CaptionerBackend> captioner;
    std::shared_ptr<LanguageModelBackend> llm;
    std::shared_ptr<EmbedderBackend> embedder;
};

/// Build the backend set the config names (stubs or remote adapters).
BackendSet make_backend_set(const Config& config);

struct PipelineOptions {
    std::filesystem::path workdir = "mmc-work";
    std::filesystem::path prompt_base_dir; // image refs resolve against this
    bool use_cache = true;
    std::string stop_after; // "extract" | "priors" | "finetune"; empty runs everything
};

struct PipelineResult {
    std::string run_id;
    std::filesystem::path run_dir;
    std::vector<StageRecord> stages;
    EvalReport report;
    std::filesystem::path report_txt;
    std::filesystem::path report_json;

    const StageRecord* stage(const std::string& name) const;
};

/// The full paradigm over a prompt corpus: extract main-object descriptions,
/// prepare prior samples, finetune, generate under all three prompt modes,
/// and score. Every stage is content-addressed; a rerun with identical inputs
/// is served from the artifacts on disk. A prompt corpus without any image
/// segments degrades to plain text-to-image sampling with the model-touching
/// stages marked skipped.
PipelineResult run_pipeline(const Config& config, const std::filesystem::path& prompt_file,
                            const PipelineOptions& options, const BackendSet* injected = nullptr);

/// Standalone scoring over a finished generation run directory: reads
/// generation_manifest.json from run_dir, reference images from refs_dir,
/// writes the table next to report_path (.txt) and machine-readable .json.
EvalReport evaluate_run(const std::filesystem::path& run_outputs_dir,
                        const std::filesystem::path& refs_dir,
                        const std::filesystem::path& report_path, EmbedderBackend& embedder);

/// Comparative text block: each ablation method against the full pathway.
std::string render_ablation_comparison(const EvalReport& report);

/// CSV listing of every generated image by method and prompt, for handing to
/// an external preference-study tool. Columns: method, prompt_key, prompt,
/// image_path.
std::string render_ballots_csv(const std::filesystem::path& run_outputs_dir);

} // namespace mmc
