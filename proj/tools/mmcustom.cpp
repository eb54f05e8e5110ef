// mmcustom: customized text-to-image generation driven by multi-modal
// prompts. Subcommands cover the individual stages (extract, priors,
// finetune, generate, evaluate) plus the end-to-end pipeline and its
// ablation comparison.

#include <iostream>

#include "CLI11.hpp"

#include "mmc/cache.hpp"
#include "mmc/image_io.hpp"
#include "mmc/pipeline.hpp"

using namespace mmc;

namespace {

int exit_code_for(const Error& error) {
    switch (error.code()) {
        case ErrorCode::backend_unavailable: return 3;
        case ErrorCode::diverged_loss:
        case ErrorCode::io_error:
        case ErrorCode::stage_failure: return 4;
        default: return 2; // validation-class failures
    }
}

struct GlobalArgs {
    std::string config_path;
    std::string profile;
    std::string workdir = "mmc-work";
    bool no_cache = false;
};

Config load_config_or_exit(const GlobalArgs& args) {
    const ConfigResult result =
        args.config_path.empty()
            ? parse_config_text("", args.profile)
            : validate_config(args.config_path, args.profile);
    if (!result.ok()) {
        for (const auto& issue : result.issues)
            std::cerr << "config error: " << issue.key << ": " << issue.message << "\n";
        std::exit(2);
    }
    return result.config;
}

std::string field_or_none(const std::optional<std::string>& value) {
    return value ? *value : std::string("None");
}

void print_stages(const PipelineResult& result) {
    for (const auto& stage : result.stages)
        std::cout << "  [" << stage.status << "] " << stage.stage
                  << (stage.detail.empty() ? "" : " - " + stage.detail) << "\n";
}

ExtractionResult extract_with_cache(const Config& config, const GlobalArgs& args,
                                    const std::filesystem::path& image_path, BackendSet& backends) {
    const Image image = read_image(image_path);
    const std::string hash = hex64(image_content_hash(image));
    ExtractionCache cache(std::filesystem::path(args.workdir) / "cache" / "extraction.jsonl");

    if (!args.no_cache) {
        if (auto cached = cache.lookup(hash, backends.captioner->id(), backends.llm->id(),
                                       config.inquiry_count)) {
            ExtractionResult result;
            result.caption = {cached->caption, image_path.string(), cached->captioner_id};
            result.winner = cached->winner;
            result.tally.responses = cached->responses;
            result.tally.winner = cached->winner;
            return result;
        }
    }
    auto result = extract_main_object(image, image_path.string(), config.inquiry_count,
                                      *backends.captioner, *backends.llm, config.temperature,
                                      hash_mix(config.seed, fnv1a64(hash)));
    ExtractionRecord record;
    record.image_hash = hash;
    record.captioner_id = backends.captioner->id();
    record.llm_id = backends.llm->id();
    record.inquiry_count = config.inquiry_count;
    record.caption = result.caption.text;
    record.responses = result.tally.responses;
    record.winner = result.winner;
    cache.store(record);
    return result;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"customized text-to-image generation with multi-modal prompts"};
    app.require_subcommand(1);
    app.fallthrough(); // global flags may follow the subcommand

    GlobalArgs global;
    app.add_option("--config", global.config_path, "configuration file");
    app.add_option("--profile", global.profile, "desk (stub backends) or full (remote backends)")
        ->check(CLI::IsMember({"desk", "full"}));
    app.add_option("--workdir", global.workdir, "cache and run directory root");
    app.add_flag("--no-cache", global.no_cache, "recompute instead of reading caches");

    // ---- extract ----
    auto* cmd_extract = app.add_subcommand("extract", "main-object description for one image");
    std::string extract_image;
    int extract_k = 0;
    cmd_extract->add_option("image", extract_image, "image file")->required();
    cmd_extract->add_option("--k", extract_k, "number of language-model inquiries");

    // ---- priors ----
    auto* cmd_priors = app.add_subcommand("priors", "prepare prior samples for a prompt corpus");
    std::string priors_prompt_file;
    int priors_count = 0;
    cmd_priors->add_option("--prompt", priors_prompt_file, "prompt file")->required();
    cmd_priors->add_option("--count", priors_count, "prior samples per concept");

    // ---- finetune ----
    auto* cmd_finetune = app.add_subcommand("finetune", "finetune the diffusion backend");
    std::string ft_prompt_file, ft_strategy;
    double ft_lambda = -1.0;
    int ft_steps = 0;
    std::uint64_t ft_seed = 0;
    bool ft_seed_set = false;
    cmd_finetune->add_option("--prompt", ft_prompt_file, "prompt file")->required();
    cmd_finetune->add_option("--strategy", ft_strategy, "db (full backbone) or cd (cross-attention)")
        ->check(CLI::IsMember({"db", "cd"}));
    cmd_finetune->add_option("--lambda", ft_lambda, "prior-preservation weight");
    cmd_finetune->add_option("--steps", ft_steps, "optimization steps");
    cmd_finetune->add_option("--seed", ft_seed, "training seed")->each([&](const std::string&) {
        ft_seed_set = true;
    });

    // ---- generate ----
    auto* cmd_generate = app.add_subcommand("generate", "sample images for a prompt corpus");
    std::string gen_prompt_file, gen_model = "pretrained", gen_mode = "full", gen_out;
    int gen_n = 0, gen_steps = 0;
    double gen_guidance = 0.0;
    std::uint64_t gen_seed = 0;
    cmd_generate->add_option("--prompt", gen_prompt_file, "prompt file")->required();
    cmd_generate->add_option("--model", gen_model,
                             "finetune run directory, or 'pretrained'");
    cmd_generate->add_option("--mode", gen_mode, "full, extract, or token")
        ->check(CLI::IsMember({"full", "extract", "token"}));
    cmd_generate->add_option("-n,--num-images", gen_n, "images per prompt");
    cmd_generate->add_option("--steps", gen_steps, "inference steps");
    cmd_generate->add_option("--guidance", gen_guidance, "guidance scale");
    cmd_generate->add_option("--seed", gen_seed, "base sampling seed");
    cmd_generate->add_option("--out", gen_out, "output directory");

    // ---- evaluate ----
    auto* cmd_evaluate = app.add_subcommand("evaluate", "score a generation run");
    std::string eval_run, eval_refs, eval_report, eval_ballots;
    cmd_evaluate->add_option("--run", eval_run, "generation outputs directory")->required();
    cmd_evaluate->add_option("--refs", eval_refs, "reference image directory")->required();
    cmd_evaluate->add_option("--report", eval_report, "report output path")->required();
    cmd_evaluate->add_option("--ballots", eval_ballots,
                             "also dump a per-image CSV for preference studies");

    // ---- pipeline / ablate ----
    auto* cmd_pipeline = app.add_subcommand("pipeline", "run every stage end to end");
    std::string pipe_prompt_file;
    cmd_pipeline->add_option("--prompt", pipe_prompt_file, "prompt file")->required();

    auto* cmd_ablate =
        app.add_subcommand("ablate", "pipeline plus the ablation pathway comparison");
    std::string ablate_prompt_file;
    cmd_ablate->add_option("--prompt", ablate_prompt_file, "prompt file")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        Config config = load_config_or_exit(global);
        BackendSet backends = make_backend_set(config);

        for (const std::string* file : {&priors_prompt_file, &ft_prompt_file, &gen_prompt_file,
                                        &pipe_prompt_file, &ablate_prompt_file}) {
            if (!file->empty() && !std::filesystem::exists(*file)) {
                std::cerr << "error: prompt file not found: " << *file << "\n";
                return 2;
            }
        }

        if (*cmd_extract) {
            if (extract_k > 0) config.inquiry_count = extract_k;
            const auto result = extract_with_cache(config, global, extract_image, backends);
            std::cout << "foreground: " << result.winner.foreground << "\n"
                      << "background: " << field_or_none(result.winner.background) << "\n"
                      << "action: " << field_or_none(result.winner.action) << "\n";
            return 0;
        }

        if (*cmd_priors) {
            if (priors_count > 0) config.prior_count = priors_count;
            auto pretrained = backends.make_diffusion();
            const auto base_dir = std::filesystem::path(priors_prompt_file).parent_path();
            std::size_t concepts = 0;
            for (const auto& line : load_prompt_lines(priors_prompt_file)) {
                const auto prompt = parse_prompt(line);
                for (const auto& ref : prompt.image_refs()) {
                    std::filesystem::path path(ref);
                    if (path.is_relative()) path = base_dir / path;
                    const auto extraction = extract_with_cache(config, global, path, backends);
                    const auto stored = load_or_generate_priors(
                        std::filesystem::path(global.workdir) / "cache" / "priors", *pretrained,
                        extraction.winner.foreground, config.resolved_prior_count(),
                        hash_mix(config.seed ^ 0x9e37u, fnv1a64(extraction.winner.foreground)),
                        config.inference_steps, config.guidance_scale);
                    ++concepts;
                    std::cout << (stored.cache_hit ? "[cached] " : "[generated] ") << ref << " -> "
                              << stored.dir.string() << " (" << stored.priors.size()
                              << " samples)\n";
                }
            }
            std::cout << concepts << " concept(s) prepared\n";
            return 0;
        }

        if (*cmd_finetune || *cmd_pipeline || *cmd_ablate) {
            if (*cmd_finetune) {
                if (!ft_strategy.empty()) config.strategy = ft_strategy;
                if (ft_lambda >= 0.0) config.lambda = ft_lambda;
                if (ft_steps > 0) config.max_steps = ft_steps;
                if (ft_seed_set) config.seed = ft_seed;
            }
            PipelineOptions options;
            options.workdir = global.workdir;
            options.use_cache = !global.no_cache;
            if (*cmd_finetune) options.stop_after = "finetune";
            const std::string prompt_file = *cmd_finetune  ? ft_prompt_file
                                            : *cmd_pipeline ? pipe_prompt_file
                                                            : ablate_prompt_file;
            const auto result = run_pipeline(config, prompt_file, options, &backends);

            if (*cmd_finetune) {
                std::cout << "finetune run: " << (result.run_dir / "finetune").string() << "\n";
                print_stages(result);
                return 0;
            }

            std::cout << "run " << result.run_id << " in " << result.run_dir.string() << "\n";
            print_stages(result);
            if (!result.report.methods.empty()) {
                std::cout << "\n" << render_report_table(result.report);
                if (*cmd_ablate) {
                    const std::string comparison = render_ablation_comparison(result.report);
                    std::cout << "\n" << comparison;
                    std::ofstream out(result.run_dir / "ablation.txt", std::ios::trunc);
                    out << comparison;
                    std::cout << "ablation comparison: "
                              << (result.run_dir / "ablation.txt").string() << "\n";
                }
            }
            return 0;
        }

        if (*cmd_generate) {
            const auto mode = parse_prompt_mode(gen_mode);
            std::optional<FinetunedModelHandle> handle;
            if (gen_model != "pretrained") handle = load_model_handle(gen_model);

            auto backend = backends.make_diffusion();
            const auto base_dir = std::filesystem::path(gen_prompt_file).parent_path();
            const std::filesystem::path out_dir =
                gen_out.empty() ? std::filesystem::path(global.workdir) / "generate"
                                : std::filesystem::path(gen_out);

            for (const auto& line : load_prompt_lines(gen_prompt_file)) {
                const auto prompt = parse_prompt(line);

                std::map<std::string, ConceptSpec> concepts;
                std::size_t index = 0;
                for (const auto& ref : prompt.image_refs()) {
                    if (concepts.count(ref)) continue;
                    std::filesystem::path path(ref);
                    if (path.is_relative()) path = base_dir / path;
                    const auto extraction = extract_with_cache(config, global, path, backends);
                    const std::string token =
                        index == 0 ? config.token : config.token + std::to_string(index + 1);
                    ++index;
                    concepts.emplace(ref, make_concept(ref, read_image(path), extraction.winner,
                                                       make_composite(token,
                                                                      extraction.winner.foreground)));
                }

                GenerationRequest request = make_request(
                    prompt, concepts, *mode, handle,
                    gen_n > 0 ? gen_n : config.resolved_num_images(),
                    gen_seed != 0 ? gen_seed : hash_mix(config.seed, fnv1a64(line)));
                if (gen_steps > 0) request.inference_steps = gen_steps;
                else request.inference_steps = config.inference_steps;
                if (gen_guidance > 0) request.guidance_scale = gen_guidance;
                else request.guidance_scale = config.guidance_scale;

                const auto sampled = sample(request, *backend);
                const std::string key = hex64(fnv1a64(serialize_prompt(prompt)));
                for (std::size_t i = 0; i < sampled.images.size(); ++i) {
                    const auto file =
                        out_dir / key / (std::to_string(sampled.seeds[i]) + ".png");
                    write_png(file, sampled.images[i]);
                    std::cout << file.string() << "\n";
                }
            }
            return 0;
        }

        if (*cmd_evaluate) {
            const auto report = evaluate_run(eval_run, eval_refs, eval_report, *backends.embedder);
            std::cout << render_report_table(report);
            if (!eval_ballots.empty()) {
                std::ofstream out(eval_ballots, std::ios::trunc);
                out << render_ballots_csv(eval_run);
                std::cout << "ballots: " << eval_ballots << "\n";
            }
            return 0;
        }
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_code_for(e);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 4;
    }
    return 0;
}
