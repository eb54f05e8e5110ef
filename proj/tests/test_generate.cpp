#include <doctest.h>

#include "mmc/generate.hpp"
#include "mmc/stub_backends.hpp"

#include "test_helpers.hpp"

using namespace mmc;

namespace {

constexpr ImageShape kShape{3, 16, 16};

std::map<std::string, ConceptSpec> orange_concepts() {
    std::map<std::string, ConceptSpec> concepts;
    concepts.emplace(
        "orange.png",
        make_concept("orange.png", testutil::random_image(kShape, 1),
                     SemanticTriple{"a cartoon orange with a leaf on its head", "road", std::nullopt},
                     make_composite("sks", "a cartoon orange with a leaf on its head")));
    return concepts;
}

const std::string kPrompt = "A photo of <img:orange.png> on the beach";

} // namespace

TEST_CASE("the three prompt modes substitute as specified") {
    const auto prompt = parse_prompt(kPrompt);
    const auto concepts = orange_concepts();

    CHECK(build_output_prompt(prompt, concepts, PromptMode::full).text ==
          "A photo of sks a cartoon orange with a leaf on its head on the beach");
    CHECK(build_output_prompt(prompt, concepts, PromptMode::extraction_directly).text ==
          "A photo of a cartoon orange with a leaf on its head on the beach");
    CHECK(build_output_prompt(prompt, concepts, PromptMode::finetuning_directly).text ==
          "A photo of sks on the beach");
}

TEST_CASE("mode soundness: token and description presence") {
    const auto prompt = parse_prompt(kPrompt);
    const auto concepts = orange_concepts();
    const std::string token = "sks";
    const std::string description = "a cartoon orange with a leaf on its head";

    const auto full = build_output_prompt(prompt, concepts, PromptMode::full).text;
    CHECK(full.find(token) != std::string::npos);
    CHECK(full.find(description) != std::string::npos);

    const auto extract = build_output_prompt(prompt, concepts, PromptMode::extraction_directly).text;
    CHECK(extract.find(token + " ") == std::string::npos);
    CHECK(extract.find(description) != std::string::npos);

    const auto tok = build_output_prompt(prompt, concepts, PromptMode::finetuning_directly).text;
    CHECK(tok.find(token) != std::string::npos);
    CHECK(tok.find(description) == std::string::npos);
}

TEST_CASE("missing concept raises") {
    const auto prompt = parse_prompt("Both <img:orange.png> and <img:other.png>");
    try {
        build_output_prompt(prompt, orange_concepts(), PromptMode::full);
        FAIL("expected MissingDescriptor");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::missing_descriptor);
    }
}

TEST_CASE("extraction-directly requests always target the pretrained model") {
    const auto prompt = parse_prompt(kPrompt);
    FinetunedModelHandle handle;
    handle.backend_id = "stub";
    handle.checkpoint_locator = "somewhere";

    const auto full = make_request(prompt, orange_concepts(), PromptMode::full, handle, 2, 7);
    CHECK(full.model.has_value());

    const auto extract =
        make_request(prompt, orange_concepts(), PromptMode::extraction_directly, handle, 2, 7);
    CHECK_FALSE(extract.model.has_value());
}

TEST_CASE("sampling applies the documented defaults") {
    StubDiffusion backend(3);
    GenerationRequest request;
    request.resolved_prompt.text = "a cat on a mat";
    request.num_images = 1;
    CHECK(request.effective_steps() == 200);
    CHECK(request.effective_guidance() == 7.5);

    const auto result = sample(request, backend);
    CHECK(result.steps == 200);
    CHECK(result.guidance == 7.5);
}

TEST_CASE("sampling yields the requested count with consecutive seeds") {
    StubDiffusion backend(4);
    GenerationRequest request;
    request.resolved_prompt.text = "a dog";
    request.num_images = 10;
    request.seed = 100;

    const auto result = sample(request, backend);
    REQUIRE(result.images.size() == 10);
    REQUIRE(result.seeds.size() == 10);
    for (std::size_t i = 0; i < 10; ++i) CHECK(result.seeds[i] == 100 + i);
}

TEST_CASE("sampling is deterministic for a fixed request") {
    StubDiffusion backend(5);
    GenerationRequest request;
    request.resolved_prompt.text = "a dog";
    request.num_images = 3;
    request.seed = 41;

    const auto a = sample(request, backend);
    const auto b = sample(request, backend);
    for (std::size_t i = 0; i < a.images.size(); ++i)
        CHECK(a.images[i].bitwise_equal(b.images[i]));
}

TEST_CASE("unresolvable model handles raise") {
    StubDiffusion backend(6);
    GenerationRequest request;
    request.resolved_prompt.text = "a dog";
    FinetunedModelHandle handle;
    handle.checkpoint_locator = "/nonexistent/checkpoint.json";
    request.model = handle;
    try {
        sample(request, backend);
        FAIL("expected UnknownModelHandle");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::unknown_model_handle);
    }
}

TEST_CASE("request validation") {
    StubDiffusion backend(7);
    GenerationRequest request;
    request.resolved_prompt.text = "x";
    request.num_images = 0;
    CHECK_THROWS_AS(sample(request, backend), Error);
    request.num_images = 1;
    request.inference_steps = 0;
    CHECK_THROWS_AS(sample(request, backend), Error);
}
