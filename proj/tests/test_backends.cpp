#include <doctest.h>

#include "mmc/priorkit.hpp"
#include "mmc/stub_backends.hpp"

#include "test_helpers.hpp"

using namespace mmc;

namespace {
constexpr ImageShape kShape{3, 16, 16};
}

TEST_CASE("stub schedule matches its closed form") {
    StubDiffusion backend(1);
    const auto sched = backend.schedule();
    sched.validate();
    REQUIRE(sched.total_steps() == 10);
    CHECK(sched.alpha[0] == 1.0 - 1.0 / 10.0);
    for (int t = 1; t <= 10; ++t) {
        const double a = 1.0 - static_cast<double>(t) / 10.0;
        CHECK(sched.alpha[t - 1] == doctest::Approx(a).epsilon(1e-15));
        CHECK(sched.sigma[t - 1] * sched.sigma[t - 1] ==
              doctest::Approx(1.0 - a * a).epsilon(1e-12));
    }
}

TEST_CASE("stub prediction and sampling are deterministic") {
    StubDiffusion backend(2);
    const Image x = testutil::normal_image(kShape, 1);
    const Image p1 = backend.predict_noise(x, 3, "sks a cat");
    const Image p2 = backend.predict_noise(x, 3, "sks a cat");
    CHECK(p1.bitwise_equal(p2));

    const Image s1 = backend.sample("a prompt", 200, 7.5, 9);
    const Image s2 = backend.sample("a prompt", 200, 7.5, 9);
    CHECK(s1.bitwise_equal(s2));
    CHECK_FALSE(s1.bitwise_equal(backend.sample("a prompt", 200, 7.5, 10)));
    CHECK_FALSE(s1.bitwise_equal(backend.sample("another prompt", 200, 7.5, 9)));
}

TEST_CASE("identically seeded stubs agree") {
    StubDiffusion a(7), b(7), c(8);
    const Image x = testutil::normal_image(kShape, 2);
    CHECK(a.predict_noise(x, 1, "z").bitwise_equal(b.predict_noise(x, 1, "z")));
    CHECK_FALSE(a.predict_noise(x, 1, "z").bitwise_equal(c.predict_noise(x, 1, "z")));
    CHECK(a.params_fingerprint() == b.params_fingerprint());
}

TEST_CASE("token-embedding steps touch only the embeddings involved") {
    StubDiffusion backend(3);
    const auto gain = backend.input_gain();
    const auto bias = backend.bias();
    const auto attention = backend.cross_attention();
    const auto sks_before = backend.token_embedding("sks");
    const auto cat_before = backend.token_embedding("cat");
    const auto idle_before = backend.token_embedding("idle");

    TrainTerm term;
    term.x = testutil::random_image(kShape, 3);
    term.condition = "sks cat";
    term.timestep = 4;
    term.eps = testutil::normal_image(kShape, 4);
    const ParamSubset subsets[] = {ParamSubset::token_embedding};
    backend.step_optimizer(std::span(&term, 1), subsets, 0.1);

    CHECK(std::memcmp(backend.input_gain().data(), gain.data(), sizeof(float) * 3) == 0);
    CHECK(std::memcmp(backend.bias().data(), bias.data(), sizeof(float) * 3) == 0);
    CHECK(std::memcmp(backend.cross_attention().data(), attention.data(),
                      sizeof(float) * 3 * StubDiffusion::kEmbedDim) == 0);
    CHECK(std::memcmp(backend.token_embedding("sks").data(), sks_before.data(),
                      sizeof(float) * StubDiffusion::kEmbedDim) != 0);
    CHECK(std::memcmp(backend.token_embedding("cat").data(), cat_before.data(),
                      sizeof(float) * StubDiffusion::kEmbedDim) != 0);
    CHECK(std::memcmp(backend.token_embedding("idle").data(), idle_before.data(),
                      sizeof(float) * StubDiffusion::kEmbedDim) == 0);
}

TEST_CASE("optimizer steps reduce the loss they report") {
    StubDiffusion backend(4);
    TrainTerm term;
    term.x = testutil::random_image(kShape, 5);
    term.condition = "sks thing";
    term.timestep = 2;
    term.eps = testutil::normal_image(kShape, 6);
    const ParamSubset subsets[] = {ParamSubset::all, ParamSubset::token_embedding};

    double previous = backend.step_optimizer(std::span(&term, 1), subsets, 0.05);
    for (int i = 0; i < 20; ++i) {
        const double loss = backend.step_optimizer(std::span(&term, 1), subsets, 0.05);
        CHECK(loss <= previous);
        previous = loss;
    }
}

TEST_CASE("fingerprint tracks trainable state only") {
    StubDiffusion backend(5);
    const auto before = backend.params_fingerprint();

    const Image x = testutil::normal_image(kShape, 7);
    backend.predict_noise(x, 1, "brand new tokens here");
    backend.sample("prompt", 10, 1.0, 3);
    CHECK(backend.params_fingerprint() == before);

    TrainTerm term;
    term.x = testutil::random_image(kShape, 8);
    term.condition = "sks";
    term.timestep = 1;
    term.eps = testutil::normal_image(kShape, 9);
    const ParamSubset subsets[] = {ParamSubset::all};
    backend.step_optimizer(std::span(&term, 1), subsets, 0.1);
    CHECK(backend.params_fingerprint() != before);
}

TEST_CASE("checkpoints round-trip bitwise") {
    testutil::TempDir dir("ckpt");
    StubDiffusion backend(6);
    TrainTerm term;
    term.x = testutil::random_image(kShape, 10);
    term.condition = "sks bag";
    term.timestep = 3;
    term.eps = testutil::normal_image(kShape, 11);
    const ParamSubset subsets[] = {ParamSubset::all, ParamSubset::token_embedding};
    backend.step_optimizer(std::span(&term, 1), subsets, 0.05);

    const auto locator = backend.save_checkpoint(dir.path());
    StubDiffusion restored(99);
    restored.load_checkpoint(locator);
    CHECK(restored.params_fingerprint() == backend.params_fingerprint());

    const Image x = testutil::normal_image(kShape, 12);
    CHECK(restored.predict_noise(x, 2, "sks bag").bitwise_equal(
        backend.predict_noise(x, 2, "sks bag")));

    StubDiffusion other(1);
    try {
        other.load_checkpoint((dir.path() / "missing.json").string());
        FAIL("expected UnknownModelHandle");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::unknown_model_handle);
    }
}

TEST_CASE("scripted language model replays then optionally echoes") {
    ScriptedLanguageModel scripted({"first", "second"});
    CHECK(scripted.complete("p", 1.0, 0) == "first");
    CHECK(scripted.complete("p", 1.0, 1) == "second");
    CHECK_THROWS_AS(scripted.complete("p", 1.0, 2), Error);

    ScriptedLanguageModel echo;
    const std::string reply = echo.complete(
        "preamble... Now imitate these, I will give you a sentence \"there is a mug on a desk\" "
        "here, and you need to give me the foreground, background and action.",
        1.0, 0);
    CHECK(reply == "the foreground is \"a mug on a desk\", the background is \"None\" and the "
                   "action is \"None\"");
}

TEST_CASE("fixed captioner prefers registered captions and stays deterministic") {
    FixedCaptioner captioner;
    const Image a = testutil::random_image(kShape, 13);
    const Image b = testutil::random_image(kShape, 14);

    const std::string default_caption = captioner.caption(a);
    CHECK(captioner.caption(a) == default_caption);
    CHECK_FALSE(default_caption.empty());

    captioner.register_caption(a, "there is a cartoon orange with a leaf on its head");
    CHECK(captioner.caption(a) == "there is a cartoon orange with a leaf on its head");
    CHECK_FALSE(captioner.caption(b).empty());
}

TEST_CASE("hashing embedder is content-addressed and unit norm") {
    HashingEmbedder embedder;
    const Image img = testutil::random_image(kShape, 15);
    Image copy = img;

    const auto e1 = embedder.embed_image(img, EmbeddingSpace::clip_image);
    const auto e2 = embedder.embed_image(copy, EmbeddingSpace::clip_image);
    CHECK(e1.values == e2.values);
    CHECK(e1.values.size() == 512);
    CHECK(embedder.embed_image(img, EmbeddingSpace::dino_image).values.size() == 384);
    CHECK(e1.values.norm() == doctest::Approx(1.0f).epsilon(1e-5));

    const auto t1 = embedder.embed_text("hello");
    const auto t2 = embedder.embed_text("hello");
    CHECK(t1.values == t2.values);
    CHECK(t1.space == EmbeddingSpace::clip_text);

    CHECK_THROWS_AS(embedder.embed_image(img, EmbeddingSpace::clip_text), Error);
}
