#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "mmc/finetune.hpp"

namespace mmc {

/// One backend role in the config file ([backend.diffusion] etc.).
struct BackendConfig {
    std::string kind;     // "stub" | "remote"; empty means profile default
    std::string endpoint; // remote only
    std::string model;    // remote model id
    std::string auth_env; // name of the env var holding the bearer token
    std::uint64_t seed = 42;
};

/// Typed configuration with profile-aware defaults. The desk profile runs
/// everything against the deterministic stubs at test scale; the full profile
/// targets remote backends at production scale.
struct Config {
    std::string profile = "desk"; // "desk" | "full"

    // extraction
    int inquiry_count = 5;
    double temperature = 1.0;

    // priors
    std::optional<int> prior_count; // default 4 (desk) / 200 (full)

    // finetune
    std::string strategy = "db"; // "db" | "cd"
    double lambda = 1.0;
    std::optional<double> learning_rate; // default 2e-6 (db) / 1e-5 (cd)
    std::optional<int> max_steps;        // default 50 (desk) / 800 db, 500 cd (full)
    std::string token = "sks";
    // concept j takes the j-th entry; the configured token always leads
    std::vector<std::string> token_bank = {"sks", "zwx", "olis", "ohwx", "uxj", "ktn", "pqd", "vbq"};
    std::optional<bool> augmentation; // default: on iff strategy == cd
    AugmentationConfig augmentation_config;
    int checkpoint_every = 100;
    std::uint64_t seed = 42;

    // generate
    int inference_steps = 200;
    double guidance_scale = 7.5;
    std::optional<int> num_images; // per prompt and method; default 4 (desk) / 10 (full)

    // backends
    BackendConfig diffusion;
    BackendConfig captioner;
    BackendConfig llm;
    BackendConfig embedder;

    bool desk() const { return profile == "desk"; }
    FinetuneStrategy resolved_strategy() const;
    int resolved_prior_count() const { return prior_count.value_or(desk() ? 4 : 200); }
    int resolved_max_steps() const;
    int resolved_num_images() const { return num_images.value_or(desk() ? 4 : 10); }
    std::string resolved_kind(const BackendConfig& backend) const {
        return backend.kind.empty() ? (desk() ? "stub" : "remote") : backend.kind;
    }

    /// Options block consumed by plan_finetune.
    FinetuneOptions finetune_options() const;

    /// Distinct rare tokens for `count` concepts: the configured token first,
    /// then the bank, then numbered fallbacks.
    std::vector<std::string> rare_tokens(std::size_t count) const;

    /// Hash over every resolved field; cache keys and run ids derive from it.
    std::string fingerprint() const;
};

struct ConfigIssue {
    std::string key;
    std::string message;
};

struct ConfigResult {
    Config config;
    std::vector<ConfigIssue> issues;
    bool ok() const { return issues.empty(); }
};

/// Built-in defaults for a profile, no file involved.
Config default_config(const std::string& profile = "desk");

/// Parse the key-value config format: `[section]` headers, `key = value`
/// lines, `#` comments, ${ENV} interpolation in values. Unknown sections or
/// keys and out-of-range values are reported as issues, not exceptions.
/// profile_override, when non-empty, wins over the file's `profile` key.
ConfigResult parse_config_text(const std::string& text, const std::string& profile_override = "");

/// parse_config_text over a file. A missing file with allow_missing yields
/// pure defaults.
ConfigResult validate_config(const std::filesystem::path& path,
                             const std::string& profile_override = "", bool allow_missing = false);

} // namespace mmc
