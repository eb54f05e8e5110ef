#include "mmc/config.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "mmc/strings.hpp"
#include "mmc/tensor.hpp"

namespace mmc {
namespace {

struct Entry {
    std::string key; // "section.key"
    std::string value;
    int line = 0;
};

std::optional<std::string> interpolate_env(const std::string& value, std::string& missing) {
    std::string out;
    std::size_t pos = 0;
    while (pos < value.size()) {
        const auto open = value.find("${", pos);
        if (open == std::string::npos) {
            out += value.substr(pos);
            break;
        }
        const auto close = value.find('}', open + 2);
        if (close == std::string::npos) {
            out += value.substr(pos);
            break;
        }
        out += value.substr(pos, open - pos);
        const std::string name = value.substr(open + 2, close - open - 2);
        const char* env = std::getenv(name.c_str());
        if (!env) {
            missing = name;
            return std::nullopt;
        }
        out += env;
        pos = close + 1;
    }
    return out;
}

std::vector<Entry> tokenize(const std::string& text, std::vector<ConfigIssue>& issues) {
    std::vector<Entry> entries;
    std::istringstream in(text);
    std::string line, section;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::string stripped = trim(line);
        if (stripped.empty() || stripped[0] == '#' || stripped[0] == ';') continue;
        if (stripped.front() == '[') {
            if (stripped.back() != ']') {
                issues.push_back({"line " + std::to_string(line_no), "unterminated section header"});
                continue;
            }
            section = trim(stripped.substr(1, stripped.size() - 2));
            continue;
        }
        auto sep = stripped.find_first_of("=:");
        if (sep == std::string::npos) {
            issues.push_back({"line " + std::to_string(line_no), "expected key = value"});
            continue;
        }
        std::string key = trim(stripped.substr(0, sep));
        std::string value = trim(stripped.substr(sep + 1));
        if (auto hash = value.find(" #"); hash != std::string::npos)
            value = trim(value.substr(0, hash));
        const std::string full_key = section.empty() ? key : section + "." + key;

        std::string missing;
        auto resolved = interpolate_env(value, missing);
        if (!resolved) {
            issues.push_back({full_key, "environment variable '" + missing + "' is not set"});
            continue;
        }
        entries.push_back({full_key, *resolved, line_no});
    }
    return entries;
}

class Applier {
public:
    Applier(Config& config, std::vector<ConfigIssue>& issues) : config_(config), issues_(issues) {}

    void apply(const Entry& entry) {
        const std::string& k = entry.key;
        if (k == "profile") {
            set_choice(entry, {"desk", "full"}, config_.profile);
        } else if (k == "extraction.k") {
            set_int(entry, 1, 1000, config_.inquiry_count);
        } else if (k == "extraction.temperature") {
            set_double(entry, 0.0, 10.0, config_.temperature);
        } else if (k == "priors.count") {
            set_optional_int(entry, 1, 1'000'000, config_.prior_count);
        } else if (k == "finetune.strategy") {
            if (!parse_strategy(entry.value)) {
                issues_.push_back({k, "expected db or cd, got '" + entry.value + "'"});
            } else {
                config_.strategy = entry.value;
            }
        } else if (k == "finetune.lambda") {
            set_double(entry, 0.0, 1e9, config_.lambda);
        } else if (k == "finetune.learning_rate") {
            double v = 0;
            if (parse_double(entry, v) && check_range(entry, v, 1e-12, 1e9))
                config_.learning_rate = v;
        } else if (k == "finetune.steps") {
            set_optional_int(entry, 1, 10'000'000, config_.max_steps);
        } else if (k == "finetune.token") {
            if (entry.value.empty() || entry.value.find(' ') != std::string::npos) {
                issues_.push_back({k, "token must be non-empty and whitespace-free"});
            } else {
                config_.token = entry.value;
            }
        } else if (k == "finetune.token_bank") {
            std::vector<std::string> bank;
            std::istringstream list(entry.value);
            std::string item;
            bool bad = false;
            while (std::getline(list, item, ',')) {
                item = trim(item);
                if (item.empty() || item.find(' ') != std::string::npos) bad = true;
                else bank.push_back(item);
            }
            if (bad || bank.empty()) {
                issues_.push_back({k, "expected comma-separated whitespace-free tokens"});
            } else {
                config_.token_bank = std::move(bank);
            }
        } else if (k == "finetune.augmentation") {
            bool v = false;
            if (parse_bool(entry, v)) config_.augmentation = v;
        } else if (k == "finetune.ratio_lo") {
            set_double(entry, 0.01, 10.0, config_.augmentation_config.ratio_lo);
        } else if (k == "finetune.ratio_hi") {
            set_double(entry, 0.01, 10.0, config_.augmentation_config.ratio_hi);
        } else if (k == "finetune.small_below") {
            set_double(entry, 0.01, 10.0, config_.augmentation_config.small_below);
        } else if (k == "finetune.large_above") {
            set_double(entry, 0.01, 10.0, config_.augmentation_config.large_above);
        } else if (k == "finetune.checkpoint_every") {
            set_int(entry, 1, 1'000'000, config_.checkpoint_every);
        } else if (k == "finetune.seed" || k == "seed") {
            set_seed(entry, config_.seed);
        } else if (k == "generate.steps") {
            set_int(entry, 1, 100'000, config_.inference_steps);
        } else if (k == "generate.guidance") {
            set_double(entry, 0.0, 1000.0, config_.guidance_scale);
        } else if (k == "generate.num_images") {
            set_optional_int(entry, 1, 10'000, config_.num_images);
        } else if (starts_with(k, "backend.")) {
            apply_backend(entry);
        } else {
            issues_.push_back({k, "unknown configuration key"});
        }
    }

private:
    void apply_backend(const Entry& entry) {
        const auto second = entry.key.find('.', 8);
        if (second == std::string::npos) {
            issues_.push_back({entry.key, "unknown configuration key"});
            return;
        }
        const std::string role = entry.key.substr(8, second - 8);
        const std::string field = entry.key.substr(second + 1);
        BackendConfig* backend = nullptr;
        if (role == "diffusion") backend = &config_.diffusion;
        else if (role == "captioner") backend = &config_.captioner;
        else if (role == "llm") backend = &config_.llm;
        else if (role == "embedder") backend = &config_.embedder;
        if (!backend) {
            issues_.push_back({entry.key, "unknown backend role '" + role + "'"});
            return;
        }
        if (field == "kind") {
            if (entry.value != "stub" && entry.value != "remote") {
                issues_.push_back({entry.key, "expected stub or remote"});
            } else {
                backend->kind = entry.value;
            }
        } else if (field == "endpoint") {
            backend->endpoint = entry.value;
        } else if (field == "model") {
            backend->model = entry.value;
        } else if (field == "auth_env") {
            backend->auth_env = entry.value;
        } else if (field == "seed") {
            set_seed(entry, backend->seed);
        } else {
            issues_.push_back({entry.key, "unknown configuration key"});
        }
    }

    bool parse_double(const Entry& entry, double& out) {
        try {
            std::size_t used = 0;
            out = std::stod(entry.value, &used);
            if (used != entry.value.size()) throw std::invalid_argument("trailing characters");
            return true;
        } catch (const std::exception&) {
            issues_.push_back({entry.key, "not a number: '" + entry.value + "'"});
            return false;
        }
    }

    bool parse_int(const Entry& entry, long long& out) {
        try {
            std::size_t used = 0;
            out = std::stoll(entry.value, &used);
            if (used != entry.value.size()) throw std::invalid_argument("trailing characters");
            return true;
        } catch (const std::exception&) {
            issues_.push_back({entry.key, "not an integer: '" + entry.value + "'"});
            return false;
        }
    }

    bool parse_bool(const Entry& entry, bool& out) {
        const std::string v = to_lower_ascii(entry.value);
        if (v == "on" || v == "true" || v == "1" || v == "yes") {
            out = true;
            return true;
        }
        if (v == "off" || v == "false" || v == "0" || v == "no") {
            out = false;
            return true;
        }
        issues_.push_back({entry.key, "not a boolean: '" + entry.value + "'"});
        return false;
    }

    bool check_range(const Entry& entry, double v, double lo, double hi) {
        if (v < lo || v > hi) {
            issues_.push_back({entry.key, "value " + entry.value + " outside [" +
                                              std::to_string(lo) + ", " + std::to_string(hi) + "]"});
            return false;
        }
        return true;
    }

    void set_double(const Entry& entry, double lo, double hi, double& target) {
        double v = 0;
        if (parse_double(entry, v) && check_range(entry, v, lo, hi)) target = v;
    }

    void set_int(const Entry& entry, long long lo, long long hi, int& target) {
        long long v = 0;
        if (parse_int(entry, v) && check_range(entry, static_cast<double>(v),
                                               static_cast<double>(lo), static_cast<double>(hi)))
            target = static_cast<int>(v);
    }

    void set_optional_int(const Entry& entry, long long lo, long long hi,
                          std::optional<int>& target) {
        long long v = 0;
        if (parse_int(entry, v) && check_range(entry, static_cast<double>(v),
                                               static_cast<double>(lo), static_cast<double>(hi)))
            target = static_cast<int>(v);
    }

    void set_seed(const Entry& entry, std::uint64_t& target) {
        try {
            target = std::stoull(entry.value);
        } catch (const std::exception&) {
            issues_.push_back({entry.key, "not an unsigned integer: '" + entry.value + "'"});
        }
    }

    void set_choice(const Entry& entry, std::initializer_list<const char*> choices,
                    std::string& target) {
        for (const char* c : choices) {
            if (entry.value == c) {
                target = entry.value;
                return;
            }
        }
        issues_.push_back({entry.key, "unsupported value '" + entry.value + "'"});
    }

    Config& config_;
    std::vector<ConfigIssue>& issues_;
};

} // namespace

FinetuneStrategy Config::resolved_strategy() const {
    return parse_strategy(strategy).value_or(FinetuneStrategy::full_backbone);
}

int Config::resolved_max_steps() const {
    if (max_steps) return *max_steps;
    if (desk()) return 50;
    return resolved_strategy() == FinetuneStrategy::cross_attention ? 500 : 800;
}

std::vector<std::string> Config::rare_tokens(std::size_t count) const {
    std::vector<std::string> tokens{token};
    for (const auto& t : token_bank) {
        if (tokens.size() >= count) break;
        if (t != token) tokens.push_back(t);
    }
    std::size_t suffix = 2;
    while (tokens.size() < count) tokens.push_back(token + std::to_string(suffix++));
    return tokens;
}

FinetuneOptions Config::finetune_options() const {
    FinetuneOptions options;
    options.strategy = resolved_strategy();
    options.learning_rate = learning_rate;
    options.max_steps = resolved_max_steps();
    options.lambda = lambda;
    options.token = token;
    options.augmentation = augmentation;
    options.augmentation_config = augmentation_config;
    options.seed = seed;
    options.checkpoint_every = checkpoint_every;
    return options;
}

std::string Config::fingerprint() const {
    std::ostringstream out;
    out << profile << '|' << inquiry_count << '|' << temperature << '|' << resolved_prior_count()
        << '|' << strategy << '|' << lambda << '|'
        << learning_rate.value_or(resolved_strategy() == FinetuneStrategy::cross_attention ? 1e-5
                                                                                           : 2e-6)
        << '|' << resolved_max_steps() << '|' << token << '|'
        << (augmentation ? (*augmentation ? "on" : "off") : "auto") << '|'
        << augmentation_config.ratio_lo << ':' << augmentation_config.ratio_hi << ':'
        << augmentation_config.small_below << ':' << augmentation_config.large_above << '|'
        << checkpoint_every << '|' << seed << '|' << inference_steps << '|' << guidance_scale << '|'
        << resolved_num_images();
    for (const auto& t : token_bank) out << ',' << t;
    for (const BackendConfig* b : {&diffusion, &captioner, &llm, &embedder})
        out << '|' << resolved_kind(*b) << ',' << b->endpoint << ',' << b->model << ',' << b->seed;
    return hex64(fnv1a64(out.str()));
}

Config default_config(const std::string& profile) {
    Config config;
    config.profile = profile.empty() ? "desk" : profile;
    return config;
}

ConfigResult parse_config_text(const std::string& text, const std::string& profile_override) {
    ConfigResult result;
    auto entries = tokenize(text, result.issues);
    Applier applier(result.config, result.issues);
    for (const auto& entry : entries) applier.apply(entry);
    if (!profile_override.empty()) {
        if (profile_override != "desk" && profile_override != "full") {
            result.issues.push_back({"profile", "unsupported profile '" + profile_override + "'"});
        } else {
            result.config.profile = profile_override;
        }
    }
    if (result.config.augmentation_config.ratio_lo > result.config.augmentation_config.ratio_hi)
        result.issues.push_back({"finetune.ratio_lo", "ratio_lo exceeds ratio_hi"});
    if (!result.config.desk()) {
        for (const auto& [role, backend] :
             {std::pair{"diffusion", &result.config.diffusion},
              std::pair{"captioner", &result.config.captioner},
              std::pair{"llm", &result.config.llm},
              std::pair{"embedder", &result.config.embedder}}) {
            if (result.config.resolved_kind(*backend) == "remote" && backend->endpoint.empty())
                result.issues.push_back({std::string("backend.") + role + ".endpoint",
                                         "remote backends need an endpoint"});
        }
    }
    return result;
}

ConfigResult validate_config(const std::filesystem::path& path, const std::string& profile_override,
                             bool allow_missing) {
    std::ifstream in(path);
    if (!in) {
        if (allow_missing) return parse_config_text("", profile_override);
        ConfigResult result;
        result.issues.push_back({path.string(), "cannot open config file"});
        return result;
    }
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return parse_config_text(buffer.str(), profile_override);
}

} // namespace mmc
