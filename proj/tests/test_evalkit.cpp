#include <doctest.h>

#include "mmc/evalkit.hpp"
#include "mmc/stub_backends.hpp"

#include "oracles.hpp"
#include "test_helpers.hpp"

using namespace mmc;

namespace {

EmbeddingVector basis(int index, int dim, EmbeddingSpace space, float scale = 1.0f) {
    EmbeddingVector v;
    v.space = space;
    v.values = Eigen::VectorXf::Zero(dim);
    v.values[index] = scale;
    return v;
}

/// Test-only embedder mapping everything to a single fixed vector.
struct ConstantEmbedder : EmbedderBackend {
    std::string id() const override { return "constant-embedder"; }
    int dimension(EmbeddingSpace) const override { return 4; }
    EmbeddingVector embed_image(const Image&, EmbeddingSpace space) override {
        auto v = basis(1, 4, space);
        return v;
    }
    EmbeddingVector embed_text(const std::string&) override {
        return basis(1, 4, EmbeddingSpace::clip_text);
    }
};

std::vector<Image> some_images(int n, std::uint64_t seed) {
    std::vector<Image> images;
    for (int i = 0; i < n; ++i)
        images.push_back(testutil::random_image({3, 8, 8}, seed + static_cast<std::uint64_t>(i)));
    return images;
}

} // namespace

TEST_CASE("cosine basics") {
    const auto a = basis(0, 8, EmbeddingSpace::clip_image);
    const auto b = basis(1, 8, EmbeddingSpace::clip_image);
    auto minus_a = a;
    minus_a.values = -a.values;

    CHECK(cosine(a, a) == 1.0);
    CHECK(cosine(a, b) == 0.0);
    CHECK(cosine(a, minus_a) == -1.0);
}

TEST_CASE("cosine rejects incomparable spaces and zero vectors") {
    const auto dino = basis(0, 8, EmbeddingSpace::dino_image);
    const auto clip = basis(0, 8, EmbeddingSpace::clip_image);
    const auto text = basis(0, 8, EmbeddingSpace::clip_text);
    CHECK_THROWS_AS(cosine(dino, clip), Error);
    CHECK_NOTHROW(cosine(clip, text)); // joint space

    EmbeddingVector zero;
    zero.space = EmbeddingSpace::clip_image;
    zero.values = Eigen::VectorXf::Zero(8);
    try {
        cosine(zero, clip);
        FAIL("expected ZeroVector");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::zero_vector);
    }

    EmbeddingVector longer = clip;
    longer.values = Eigen::VectorXf::Ones(9);
    CHECK_THROWS_AS(cosine(clip, longer), Error);
}

TEST_CASE("cosine is scale invariant") {
    HashingEmbedder embedder;
    const auto imgs = some_images(2, 11);
    auto a = embedder.embed_image(imgs[0], EmbeddingSpace::clip_image);
    auto b = embedder.embed_image(imgs[1], EmbeddingSpace::clip_image);
    const double base = cosine(a, b);
    a.values *= 37.5f;
    b.values *= 0.01f;
    // scaling float-stored coordinates rounds each entry, so exactness is
    // bounded by single precision
    CHECK(std::abs(cosine(a, b) - base) < 1e-6);
}

TEST_CASE("identical sets score exactly one") {
    HashingEmbedder embedder;
    const auto imgs = some_images(1, 21);
    CHECK(set_alignment_score(imgs, imgs, embedder, EmbeddingSpace::dino_image) == 1.0);
}

TEST_CASE("set alignment equals the brute-force pairwise mean") {
    HashingEmbedder embedder;
    const auto generated = some_images(2, 31);
    const auto references = some_images(2, 41);
    const double got =
        set_alignment_score(generated, references, embedder, EmbeddingSpace::clip_image);
    const double want =
        oracle::set_score_by_hand(generated, references, embedder, EmbeddingSpace::clip_image);
    CHECK(got == doctest::Approx(want).epsilon(1e-12));
    CHECK(std::abs(got - want) < 1e-9);
}

TEST_CASE("set alignment ignores ordering") {
    HashingEmbedder embedder;
    auto generated = some_images(3, 51);
    auto references = some_images(4, 61);
    const double base =
        set_alignment_score(generated, references, embedder, EmbeddingSpace::dino_image);
    std::swap(generated[0], generated[2]);
    std::swap(references[1], references[3]);
    const double shuffled =
        set_alignment_score(generated, references, embedder, EmbeddingSpace::dino_image);
    CHECK(base == doctest::Approx(shuffled).epsilon(1e-12));
}

TEST_CASE("empty sets raise") {
    HashingEmbedder embedder;
    const auto imgs = some_images(1, 71);
    try {
        set_alignment_score({}, imgs, embedder, EmbeddingSpace::clip_image);
        FAIL("expected EmptySet");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::empty_set);
    }
    CHECK_THROWS_AS(text_alignment_score({}, "text", embedder), Error);
}

TEST_CASE("text alignment with a constant embedder is one") {
    ConstantEmbedder embedder;
    const auto imgs = some_images(3, 81);
    CHECK(text_alignment_score(imgs, "any prompt", embedder) == 1.0);
}

TEST_CASE("text alignment equals the brute-force mean") {
    HashingEmbedder embedder;
    const auto imgs = some_images(3, 91);
    const double got = text_alignment_score(imgs, "a cat on a bench", embedder);
    const double want = oracle::text_score_by_hand(imgs, "a cat on a bench", embedder);
    CHECK(std::abs(got - want) < 1e-9);
}

TEST_CASE("scores stay within bounds on random content") {
    HashingEmbedder embedder;
    Rng rng(5);
    for (int i = 0; i < 100; ++i) {
        const auto a = some_images(1, rng.next_u64());
        const auto b = some_images(1, rng.next_u64());
        const double s = set_alignment_score(a, b, embedder, EmbeddingSpace::clip_image);
        CHECK(s >= -1.0);
        CHECK(s <= 1.0);
    }
}

TEST_CASE("report aggregates per prompt then per method") {
    HashingEmbedder embedder;
    MethodRun run;
    run.label = "full";
    run.prompts.push_back({"p1", "a cat", some_images(2, 100), some_images(2, 200)});
    run.prompts.push_back({"p2", "a dog", some_images(3, 300), some_images(1, 400)});

    const auto report = build_report(std::span(&run, 1), embedder);
    REQUIRE(report.methods.size() == 1);
    REQUIRE(report.per_prompt.size() == 2);
    const auto& m = report.methods[0];
    CHECK(m.num_prompts == 2);
    CHECK(m.num_images == 5);
    CHECK(m.dino_score ==
          doctest::Approx((report.per_prompt[0].dino_score + report.per_prompt[1].dino_score) / 2)
              .epsilon(1e-12));
    CHECK(m.clip_t_score ==
          doctest::Approx((report.per_prompt[0].clip_t_score + report.per_prompt[1].clip_t_score) / 2)
              .epsilon(1e-12));

    // single prompt: aggregate equals the per-prompt scores
    MethodRun single;
    single.label = "solo";
    single.prompts.push_back(run.prompts[0]);
    const auto solo = build_report(std::span(&single, 1), embedder);
    CHECK(solo.methods[0].dino_score == solo.per_prompt[0].dino_score);
    CHECK(solo.methods[0].clip_i_score == solo.per_prompt[0].clip_i_score);
    CHECK(solo.methods[0].clip_t_score == solo.per_prompt[0].clip_t_score);
}

TEST_CASE("mismatched prompt sets are inconsistent") {
    HashingEmbedder embedder;
    MethodRun a;
    a.label = "full";
    a.prompts.push_back({"p1", "t", some_images(1, 1), some_images(1, 2)});
    MethodRun b;
    b.label = "other";
    b.prompts.push_back({"p2", "t", some_images(1, 3), some_images(1, 4)});
    const MethodRun runs[] = {a, b};
    try {
        build_report(runs, embedder);
        FAIL("expected InconsistentRun");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::inconsistent_run);
    }
}

TEST_CASE("report renders a table and json") {
    HashingEmbedder embedder;
    MethodRun run;
    run.label = "full";
    run.prompts.push_back({"p1", "a cat", some_images(2, 100), some_images(2, 200)});
    const auto report = build_report(std::span(&run, 1), embedder);

    const auto table = render_report_table(report);
    CHECK(table.find("Method") != std::string::npos);
    CHECK(table.find("DINO score") != std::string::npos);
    CHECK(table.find("CLIP-I score") != std::string::npos);
    CHECK(table.find("CLIP-T score") != std::string::npos);
    CHECK(table.find("full") != std::string::npos);

    const auto json_text = render_report_json(report);
    CHECK(json_text.find("\"dino_score\"") != std::string::npos);
    CHECK(json_text.find("\"per_prompt\"") != std::string::npos);
}
