#include "mmc/finetune.hpp"

#include <Eigen/Core>

#include <bit>
#include <cmath>
#include <fstream>
#include <sstream>

#include "mmc/strings.hpp"

#include "json.hpp"

namespace mmc {
namespace {

constexpr std::string_view kSmallWords[] = {"very small", "far away"};
constexpr std::string_view kLargeWords[] = {"zoomed in", "close up"};

std::uint64_t hash_double(std::uint64_t h, double v) {
    return hash_mix(h, std::bit_cast<std::uint64_t>(v));
}

std::vector<ParamSubset> subsets_for(FinetuneStrategy strategy) {
    if (strategy == FinetuneStrategy::full_backbone) return {ParamSubset::all};
    return {ParamSubset::cross_attention, ParamSubset::token_embedding};
}

void write_trace_csv(const std::filesystem::path& path, const std::vector<double>& trace) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error(ErrorCode::io_error, "cannot write " + path.string());
    out << "step,loss\n";
    char buf[64];
    for (std::size_t i = 0; i < trace.size(); ++i) {
        std::snprintf(buf, sizeof(buf), "%zu,%.17g\n", i, trace[i]);
        out << buf;
    }
}

std::vector<double> read_trace_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    std::vector<double> trace;
    std::string line;
    std::getline(in, line); // header
    while (std::getline(in, line)) {
        const auto comma = line.find(',');
        if (comma == std::string::npos) continue;
        trace.push_back(std::stod(line.substr(comma + 1)));
    }
    return trace;
}

nlohmann::json plan_snapshot(const FinetunePlan& plan, const std::string& backend_id) {
    nlohmann::json concepts = nlohmann::json::array();
    for (const auto& c : plan.concepts) {
        concepts.push_back({{"image_ref", c.image_ref},
                            {"source_hash", hex64(image_content_hash(c.source_image))},
                            {"descriptor", c.descriptor.rendered},
                            {"prior_prompt", c.triple.foreground},
                            {"prior_count", c.priors.size()}});
    }
    return {{"strategy", to_string(plan.strategy)},
            {"learning_rate", plan.learning_rate},
            {"max_steps", plan.max_steps},
            {"lambda", plan.lambda},
            {"token", plan.token},
            {"augmentation", plan.augmentation},
            {"augmentation_config",
             {{"ratio_lo", plan.augmentation_config.ratio_lo},
              {"ratio_hi", plan.augmentation_config.ratio_hi},
              {"small_below", plan.augmentation_config.small_below},
              {"large_above", plan.augmentation_config.large_above}}},
            {"seed", plan.seed},
            {"checkpoint_every", plan.checkpoint_every},
            {"concepts", concepts},
            {"fingerprint", hex64(plan.fingerprint(backend_id))},
            {"environment", environment_fingerprint()},
            {"backend_id", backend_id}};
}

struct RunState {
    int executed_steps = 0;
    std::string checkpoint_locator;
    bool complete = false;
};

void write_state(const std::filesystem::path& dir, const RunState& state) {
    nlohmann::json doc{{"executed_steps", state.executed_steps},
                       {"checkpoint", state.checkpoint_locator},
                       {"complete", state.complete}};
    std::ofstream out(dir / "state.json", std::ios::trunc);
    out << doc.dump(2) << '\n';
}

std::optional<RunState> read_state(const std::filesystem::path& dir) {
    std::ifstream in(dir / "state.json");
    if (!in) return std::nullopt;
    nlohmann::json doc;
    try {
        in >> doc;
    } catch (const nlohmann::json::exception&) {
        return std::nullopt;
    }
    RunState state;
    state.executed_steps = doc.value("executed_steps", 0);
    state.checkpoint_locator = doc.value("checkpoint", "");
    state.complete = doc.value("complete", false);
    return state;
}

} // namespace

const char* to_string(FinetuneStrategy strategy) {
    return strategy == FinetuneStrategy::full_backbone ? "full-backbone" : "cross-attention";
}

std::optional<FinetuneStrategy> parse_strategy(const std::string& name) {
    if (name == "db" || name == "full-backbone") return FinetuneStrategy::full_backbone;
    if (name == "cd" || name == "cross-attention") return FinetuneStrategy::cross_attention;
    return std::nullopt;
}

std::uint64_t FinetunePlan::fingerprint(const std::string& backend_id) const {
    std::uint64_t h = fnv1a64(backend_id);
    h = hash_mix(h, static_cast<std::uint64_t>(strategy));
    h = hash_double(h, learning_rate);
    h = hash_mix(h, static_cast<std::uint64_t>(max_steps));
    h = hash_double(h, lambda);
    h = fnv1a64(token, h);
    h = hash_mix(h, augmentation ? 1 : 0);
    h = hash_double(h, augmentation_config.ratio_lo);
    h = hash_double(h, augmentation_config.ratio_hi);
    h = hash_double(h, augmentation_config.small_below);
    h = hash_double(h, augmentation_config.large_above);
    h = hash_mix(h, seed);
    for (const auto& c : concepts) {
        h = fnv1a64(c.descriptor.rendered, h);
        h = hash_mix(h, image_content_hash(c.source_image));
        for (const auto& p : c.priors) {
            h = hash_mix(h, image_content_hash(p.image));
            h = fnv1a64(p.prompt, h);
        }
    }
    return h;
}

FinetunePlan plan_finetune(const FinetuneOptions& options, std::vector<ConceptSpec> concepts) {
    if (concepts.empty())
        throw Error(ErrorCode::invalid_config, "finetuning needs at least one concept");

    FinetunePlan plan;
    plan.strategy = options.strategy;
    const bool cross = options.strategy == FinetuneStrategy::cross_attention;
    plan.learning_rate = options.learning_rate.value_or(cross ? 1e-5 : 2e-6);
    plan.max_steps = options.max_steps.value_or(cross ? 500 : 800);
    plan.lambda = options.lambda;
    plan.token = options.token;
    plan.augmentation = options.augmentation.value_or(cross);
    plan.augmentation_config = options.augmentation_config;
    plan.seed = options.seed;
    plan.checkpoint_every = options.checkpoint_every;

    if (plan.learning_rate <= 0.0)
        throw Error(ErrorCode::invalid_config, "learning rate must be positive");
    if (plan.max_steps <= 0) throw Error(ErrorCode::invalid_config, "max_steps must be positive");
    if (plan.lambda < 0.0) throw Error(ErrorCode::invalid_config, "lambda must be non-negative");
    if (plan.checkpoint_every <= 0)
        throw Error(ErrorCode::invalid_config, "checkpoint cadence must be positive");
    if (plan.augmentation && !cross)
        throw Error(ErrorCode::invalid_config,
                    "resize augmentation is tied to the cross-attention strategy");

    for (const auto& c : concepts) {
        if (c.descriptor.rendered.empty())
            throw Error(ErrorCode::invalid_config,
                        "concept '" + c.image_ref + "' has no composite descriptor");
        if (plan.lambda > 0.0 && c.priors.empty())
            throw Error(ErrorCode::missing_priors,
                        "concept '" + c.image_ref + "' has no prior samples");
    }
    plan.concepts = std::move(concepts);
    return plan;
}

Augmented cd_augment_with_ratio(const Image& image, const std::string& prompt, double ratio,
                                Rng& rng, const AugmentationConfig& config) {
    Augmented out{image, prompt};
    if (ratio == 1.0) return out;

    if (ratio < config.small_below) {
        out.prompt = std::string(kSmallWords[rng.uniform_int(0, 1)]) + " " + prompt;
    } else if (ratio > config.large_above) {
        out.prompt = std::string(kLargeWords[rng.uniform_int(0, 1)]) + " " + prompt;
    }

    const int h = image.shape.height, w = image.shape.width;
    const int rh = std::max(1, static_cast<int>(std::lround(h * ratio)));
    const int rw = std::max(1, static_cast<int>(std::lround(w * ratio)));
    if (rh == h && rw == w) return out;
    const Image resized = resize_bilinear(image, rh, rw);
    out.image = ratio < 1.0 ? pad_center(resized, h, w) : crop_center(resized, h, w);
    return out;
}

Augmented cd_augment(const Image& image, const std::string& prompt, Rng& rng,
                     const AugmentationConfig& config) {
    const double ratio = rng.uniform(config.ratio_lo, config.ratio_hi);
    return cd_augment_with_ratio(image, prompt, ratio, rng, config);
}

std::span<const std::string_view> small_ratio_modifiers() { return kSmallWords; }
std::span<const std::string_view> large_ratio_modifiers() { return kLargeWords; }

std::string environment_fingerprint() {
    std::ostringstream out;
    out << "cxx=" << __VERSION__ << ";eigen=" << EIGEN_WORLD_VERSION << '.' << EIGEN_MAJOR_VERSION
        << '.' << EIGEN_MINOR_VERSION;
    return out.str();
}

FinetunedModelHandle run_finetune(DiffusionBackend& backend, const FinetunePlan& plan,
                                  const std::filesystem::path& output_dir) {
    const NoiseSchedule sched = backend.schedule();
    sched.validate();
    std::filesystem::create_directories(output_dir);

    const std::string plan_fp = hex64(plan.fingerprint(backend.id()));
    const auto plan_path = output_dir / "plan.json";
    if (std::filesystem::exists(plan_path)) {
        std::ifstream in(plan_path);
        nlohmann::json existing;
        try {
            in >> existing;
        } catch (const nlohmann::json::exception&) {
            existing = nlohmann::json::object();
        }
        if (existing.value("fingerprint", "") != plan_fp)
            throw Error(ErrorCode::invalid_config,
                        output_dir.string() + " holds artifacts of a different plan");
    } else {
        std::ofstream out(plan_path, std::ios::trunc);
        out << plan_snapshot(plan, backend.id()).dump(2) << '\n';
    }

    FinetunedModelHandle handle;
    handle.backend_id = backend.id();
    handle.run_dir = output_dir;
    handle.plan = plan;

    int start_step = 0;
    if (auto state = read_state(output_dir)) {
        if (state->complete && state->executed_steps == plan.max_steps) {
            backend.load_checkpoint(state->checkpoint_locator);
            handle.checkpoint_locator = state->checkpoint_locator;
            handle.loss_trace = read_trace_csv(output_dir / "trace.csv");
            handle.reused = true;
            return handle;
        }
        if (state->executed_steps > 0 && state->executed_steps < plan.max_steps) {
            backend.load_checkpoint(state->checkpoint_locator);
            handle.loss_trace = read_trace_csv(output_dir / "trace.csv");
            handle.loss_trace.resize(static_cast<std::size_t>(state->executed_steps));
            start_step = state->executed_steps;
        }
    }

    const auto subsets = subsets_for(plan.strategy);
    const ImageShape native = backend.native_shape();

    auto persist = [&](int executed, bool complete) {
        const auto ckpt_dir =
            output_dir / "checkpoints" / ("step_" + std::to_string(executed));
        RunState state;
        state.executed_steps = executed;
        state.checkpoint_locator = backend.save_checkpoint(ckpt_dir);
        state.complete = complete;
        write_trace_csv(output_dir / "trace.csv", handle.loss_trace);
        write_state(output_dir, state);
        handle.checkpoint_locator = state.checkpoint_locator;
    };

    for (int step = start_step; step < plan.max_steps; ++step) {
        // Per-step draws come from a seed derived from (plan seed, step), so a
        // resumed run replays exactly the trace a straight-through run produces.
        Rng step_rng(hash_mix(plan.seed, static_cast<std::uint64_t>(step)));
        std::vector<TrainTerm> terms;
        terms.reserve(plan.concepts.size() * 2);

        for (std::size_t j = 0; j < plan.concepts.size(); ++j) {
            const auto& cspec = plan.concepts[j];
            Rng crng = step_rng.split(j);

            TrainTerm term;
            term.timestep = crng.uniform_int(1, sched.total_steps());
            term.eps = Image(native);
            for (Eigen::Index i = 0; i < term.eps.data.size(); ++i)
                term.eps.data[i] = static_cast<float>(crng.normal());
            term.weight = 1.0;
            if (plan.augmentation) {
                auto aug =
                    cd_augment(cspec.source_image, cspec.descriptor.rendered, crng,
                               plan.augmentation_config);
                term.x = std::move(aug.image);
                term.condition = std::move(aug.prompt);
            } else {
                term.x = cspec.source_image;
                term.condition = cspec.descriptor.rendered;
            }
            terms.push_back(std::move(term));

            if (plan.lambda > 0.0) {
                // One prior sampled uniformly per step stands in for the
                // expectation over the concept's prior set.
                const auto& prior =
                    cspec.priors[static_cast<std::size_t>(crng.uniform_int(
                        0, static_cast<int>(cspec.priors.size()) - 1))];
                TrainTerm pterm;
                pterm.timestep = crng.uniform_int(1, sched.total_steps());
                pterm.eps = Image(native);
                for (Eigen::Index i = 0; i < pterm.eps.data.size(); ++i)
                    pterm.eps.data[i] = static_cast<float>(crng.normal());
                pterm.weight = plan.lambda;
                if (plan.augmentation) {
                    auto aug = cd_augment(prior.image, prior.prompt, crng, plan.augmentation_config);
                    pterm.x = std::move(aug.image);
                    pterm.condition = std::move(aug.prompt);
                } else {
                    pterm.x = prior.image;
                    pterm.condition = prior.prompt;
                }
                terms.push_back(std::move(pterm));
            }
        }

        const double loss = backend.step_optimizer(terms, subsets, plan.learning_rate);
        if (!std::isfinite(loss)) {
            persist(step, false);
            throw Error(ErrorCode::diverged_loss,
                        "non-finite loss at step " + std::to_string(step));
        }
        handle.loss_trace.push_back(loss);

        const int executed = step + 1;
        if (executed % plan.checkpoint_every == 0 && executed < plan.max_steps)
            persist(executed, false);
    }

    persist(plan.max_steps, true);
    return handle;
}

FinetunedModelHandle load_model_handle(const std::filesystem::path& run_dir) {
    auto state = read_state(run_dir);
    if (!state || !state->complete)
        throw Error(ErrorCode::unknown_model_handle,
                    run_dir.string() + " does not hold a completed finetuning run");

    std::ifstream in(run_dir / "plan.json");
    nlohmann::json plan_doc;
    try {
        in >> plan_doc;
    } catch (const nlohmann::json::exception&) {
        throw Error(ErrorCode::unknown_model_handle, "unreadable plan.json in " + run_dir.string());
    }

    FinetunedModelHandle handle;
    handle.backend_id = plan_doc.value("backend_id", "");
    handle.checkpoint_locator = state->checkpoint_locator;
    handle.run_dir = run_dir;
    if (auto strategy = parse_strategy(plan_doc.value("strategy", "")))
        handle.plan.strategy = *strategy;
    handle.plan.learning_rate = plan_doc.value("learning_rate", 0.0);
    handle.plan.max_steps = plan_doc.value("max_steps", 0);
    handle.plan.lambda = plan_doc.value("lambda", 1.0);
    handle.plan.token = plan_doc.value("token", "");
    handle.plan.augmentation = plan_doc.value("augmentation", false);
    handle.plan.seed = plan_doc.value("seed", std::uint64_t{0});
    handle.loss_trace = read_trace_csv(run_dir / "trace.csv");
    return handle;
}

} // namespace mmc
