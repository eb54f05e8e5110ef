#include <doctest.h>

#include <fstream>

#include "mmc/finetune.hpp"
#include "mmc/stub_backends.hpp"

#include "test_helpers.hpp"

using namespace mmc;

namespace {

constexpr ImageShape kShape{3, 16, 16};

ConceptSpec stub_concept(const std::string& name, std::uint64_t seed, DiffusionBackend& backend) {
    const std::string description = "a " + name;
    auto spec = make_concept(name + ".png", testutil::random_image(kShape, seed),
                             SemanticTriple{description, std::nullopt, std::nullopt},
                             make_composite("sks", description));
    spec.priors = generate_priors(backend, description, 2, seed * 7);
    return spec;
}

FinetunePlan desk_plan(FinetuneStrategy strategy, DiffusionBackend& backend, std::uint64_t seed,
                       int steps = 50) {
    FinetuneOptions options;
    options.strategy = strategy;
    options.learning_rate = 0.05; // stub-scale rate; production defaults stay per strategy
    options.max_steps = steps;
    options.seed = seed;
    options.checkpoint_every = 20;
    return plan_finetune(options, {stub_concept("car", 101, backend)});
}

bool same_vec(const Eigen::Vector3f& a, const Eigen::Vector3f& b) {
    return std::memcmp(a.data(), b.data(), sizeof(float) * 3) == 0;
}

} // namespace

TEST_CASE("plan defaults follow the strategy") {
    StubDiffusion backend(1);
    auto concepts = [&] { return std::vector<ConceptSpec>{stub_concept("car", 1, backend)}; };

    FinetuneOptions db;
    db.strategy = FinetuneStrategy::full_backbone;
    const auto db_plan = plan_finetune(db, concepts());
    CHECK(db_plan.learning_rate == 2e-6);
    CHECK(db_plan.max_steps == 800);
    CHECK_FALSE(db_plan.augmentation);

    FinetuneOptions cd;
    cd.strategy = FinetuneStrategy::cross_attention;
    const auto cd_plan = plan_finetune(cd, concepts());
    CHECK(cd_plan.learning_rate == 1e-5);
    CHECK(cd_plan.max_steps == 500);
    CHECK(cd_plan.augmentation);

    FinetuneOptions custom;
    custom.strategy = FinetuneStrategy::full_backbone;
    custom.learning_rate = 3e-6;
    CHECK(plan_finetune(custom, concepts()).learning_rate == 3e-6);
}

TEST_CASE("plan validation") {
    StubDiffusion backend(2);
    auto concepts = [&] { return std::vector<ConceptSpec>{stub_concept("car", 2, backend)}; };

    FinetuneOptions bad_steps;
    bad_steps.max_steps = 0;
    CHECK_THROWS_AS(plan_finetune(bad_steps, concepts()), Error);

    FinetuneOptions aug_on_db;
    aug_on_db.strategy = FinetuneStrategy::full_backbone;
    aug_on_db.augmentation = true;
    CHECK_THROWS_AS(plan_finetune(aug_on_db, concepts()), Error);

    auto no_priors = concepts();
    no_priors[0].priors.clear();
    FinetuneOptions defaults;
    try {
        plan_finetune(defaults, std::move(no_priors));
        FAIL("expected MissingPriors");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::missing_priors);
    }

    CHECK_THROWS_AS(plan_finetune(defaults, {}), Error);
}

TEST_CASE("augmentation at the neutral ratio is the identity") {
    const Image img = testutil::random_image(kShape, 3);
    Rng rng(1);
    const auto out = cd_augment_with_ratio(img, "a photo of sks a cat", 1.0, rng);
    CHECK(out.image.bitwise_equal(img));
    CHECK(out.prompt == "a photo of sks a cat");
}

TEST_CASE("small ratios prepend a smallness cue") {
    const Image img = testutil::random_image(kShape, 4);
    Rng rng(2);
    const auto out = cd_augment_with_ratio(img, "a photo of sks a cat", 0.5, rng);
    const bool prefixed = out.prompt == "very small a photo of sks a cat" ||
                          out.prompt == "far away a photo of sks a cat";
    CHECK(prefixed);
    CHECK(out.image.shape == img.shape);
    CHECK_FALSE(out.image.bitwise_equal(img));
}

TEST_CASE("large ratios prepend a closeness cue") {
    const Image img = testutil::random_image(kShape, 5);
    Rng rng(3);
    const auto out = cd_augment_with_ratio(img, "a photo of sks a cat", 1.35, rng);
    const bool prefixed = out.prompt == "zoomed in a photo of sks a cat" ||
                          out.prompt == "close up a photo of sks a cat";
    CHECK(prefixed);
    CHECK(out.image.shape == img.shape);
}

TEST_CASE("mid-range ratios leave the prompt alone") {
    const Image img = testutil::random_image(kShape, 6);
    Rng rng(4);
    const auto out = cd_augment_with_ratio(img, "prompt", 0.9, rng);
    CHECK(out.prompt == "prompt");
    CHECK(out.image.shape == img.shape);
}

TEST_CASE("drawn ratios stay in range and only extremes touch the prompt") {
    const Image img = testutil::random_image(kShape, 7);
    Rng rng(5);
    for (int i = 0; i < 100; ++i) {
        const auto out = cd_augment(img, "p", rng);
        if (out.prompt != "p") {
            bool known = false;
            for (auto w : small_ratio_modifiers())
                if (out.prompt == std::string(w) + " p") known = true;
            for (auto w : large_ratio_modifiers())
                if (out.prompt == std::string(w) + " p") known = true;
            CHECK(known);
        }
        CHECK(out.image.shape == img.shape);
    }
}

TEST_CASE("finetuning reduces the fixed-draw objective") {
    StubDiffusion backend(10);
    const auto plan = desk_plan(FinetuneStrategy::full_backbone, backend, 500);

    Rng probe_before(4242);
    const double before = combined_loss(backend, plan.concepts, plan.lambda, probe_before);

    testutil::TempDir dir("ft-descent");
    const auto handle = run_finetune(backend, plan, dir.path());
    CHECK(handle.loss_trace.size() == 50);
    for (double v : handle.loss_trace) CHECK(std::isfinite(v));

    Rng probe_after(4242);
    const double after = combined_loss(backend, plan.concepts, plan.lambda, probe_after);
    CHECK(after < before);
}

TEST_CASE("identical plans and seeds give identical traces") {
    StubDiffusion b1(11), b2(11);
    const auto plan1 = desk_plan(FinetuneStrategy::cross_attention, b1, 7);
    const auto plan2 = desk_plan(FinetuneStrategy::cross_attention, b2, 7);

    testutil::TempDir d1("ft-det1"), d2("ft-det2");
    const auto h1 = run_finetune(b1, plan1, d1.path());
    const auto h2 = run_finetune(b2, plan2, d2.path());
    REQUIRE(h1.loss_trace.size() == h2.loss_trace.size());
    for (std::size_t i = 0; i < h1.loss_trace.size(); ++i)
        CHECK(h1.loss_trace[i] == h2.loss_trace[i]);
    CHECK(b1.params_fingerprint() == b2.params_fingerprint());
}

TEST_CASE("a resumed run replays the straight-through trace") {
    StubDiffusion full_run(12);
    const auto plan = desk_plan(FinetuneStrategy::full_backbone, full_run, 9, 50);

    testutil::TempDir d_full("ft-full"), d_resume("ft-resume");
    const auto h_full = run_finetune(full_run, plan, d_full.path());

    // run once, then rewind state.json to the 20-step checkpoint to simulate a
    // crash right after that checkpoint was written
    StubDiffusion crashed(12);
    run_finetune(crashed, plan, d_resume.path());
    {
        std::ofstream state(d_resume.path() / "state.json", std::ios::trunc);
        state << "{\"executed_steps\": 20, \"checkpoint\": \""
              << (d_resume.path() / "checkpoints" / "step_20" / "stub-diffusion.json").string()
              << "\", \"complete\": false}\n";
    }

    StubDiffusion resumed(12);
    const auto h_resumed = run_finetune(resumed, plan, d_resume.path());
    REQUIRE(h_resumed.loss_trace.size() == h_full.loss_trace.size());
    for (std::size_t i = 0; i < h_full.loss_trace.size(); ++i)
        CHECK(h_resumed.loss_trace[i] == h_full.loss_trace[i]);
    CHECK(resumed.params_fingerprint() == full_run.params_fingerprint());
}

TEST_CASE("cross-attention runs leave the backbone untouched") {
    StubDiffusion backend(13);
    const auto plan = desk_plan(FinetuneStrategy::cross_attention, backend, 21);

    const Eigen::Vector3f gain_before = backend.input_gain();
    const Eigen::Vector3f bias_before = backend.bias();
    const auto attention_before = backend.cross_attention();
    const auto token_before = backend.token_embedding("sks");

    testutil::TempDir dir("ft-isolation");
    run_finetune(backend, plan, dir.path());

    CHECK(same_vec(backend.input_gain(), gain_before));
    CHECK(same_vec(backend.bias(), bias_before));
    CHECK(std::memcmp(backend.cross_attention().data(), attention_before.data(),
                      sizeof(float) * 3 * StubDiffusion::kEmbedDim) != 0);
    CHECK(std::memcmp(backend.token_embedding("sks").data(), token_before.data(),
                      sizeof(float) * StubDiffusion::kEmbedDim) != 0);
}

TEST_CASE("full-backbone runs keep the rare token embedding frozen") {
    StubDiffusion backend(14);
    const auto plan = desk_plan(FinetuneStrategy::full_backbone, backend, 22);

    const Eigen::Vector3f gain_before = backend.input_gain();
    const auto token_before = backend.token_embedding("sks");

    testutil::TempDir dir("ft-freeze");
    run_finetune(backend, plan, dir.path());

    CHECK_FALSE(same_vec(backend.input_gain(), gain_before));
    CHECK(std::memcmp(backend.token_embedding("sks").data(), token_before.data(),
                      sizeof(float) * StubDiffusion::kEmbedDim) == 0);
}

TEST_CASE("diverging loss aborts with the partial trace persisted") {
    StubDiffusion backend(15);
    FinetuneOptions options;
    options.strategy = FinetuneStrategy::full_backbone;
    options.learning_rate = 1e9; // deliberately unstable on the stub's scale
    options.max_steps = 200;
    options.seed = 23;
    const auto plan = plan_finetune(options, {stub_concept("car", 201, backend)});

    testutil::TempDir dir("ft-diverge");
    try {
        run_finetune(backend, plan, dir.path());
        FAIL("expected DivergedLoss");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::diverged_loss);
    }
    CHECK(std::filesystem::exists(dir.path() / "trace.csv"));
}

TEST_CASE("completed runs are returned as-is and load as handles") {
    StubDiffusion backend(16);
    const auto plan = desk_plan(FinetuneStrategy::full_backbone, backend, 31, 10);
    testutil::TempDir dir("ft-handle");
    const auto first = run_finetune(backend, plan, dir.path());

    StubDiffusion second_backend(16);
    const auto second = run_finetune(second_backend, plan, dir.path());
    CHECK(second.loss_trace == first.loss_trace);
    CHECK(second_backend.params_fingerprint() == backend.params_fingerprint());

    const auto handle = load_model_handle(dir.path());
    CHECK(handle.backend_id == backend.id());
    CHECK(handle.checkpoint_locator == first.checkpoint_locator);
    CHECK(handle.loss_trace.size() == 10);
    CHECK(handle.plan.strategy == FinetuneStrategy::full_backbone);

    testutil::TempDir empty("ft-empty");
    CHECK_THROWS_AS(load_model_handle(empty.path()), Error);
}
