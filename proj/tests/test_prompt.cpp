#include <doctest.h>

#include <fstream>

#include "mmc/image_io.hpp"
#include "mmc/prompt.hpp"
#include "mmc/rng.hpp"

#include "test_helpers.hpp"

using namespace mmc;

TEST_CASE("parse splits text and image segments in authoring order") {
    const auto p = parse_prompt("A photo of <img:car.png> on the beach");
    REQUIRE(p.segments.size() == 3);
    CHECK(p.segments[0] == Segment::make_text("A photo of "));
    CHECK(p.segments[1] == Segment::make_image("car.png"));
    CHECK(p.segments[2] == Segment::make_text(" on the beach"));
}

TEST_CASE("parse handles multiple images") {
    const auto p = parse_prompt("<img:a.png> next to <img:b.png> in the jungle");
    REQUIRE(p.segments.size() == 4);
    CHECK(p.segments[0] == Segment::make_image("a.png"));
    CHECK(p.segments[1] == Segment::make_text(" next to "));
    CHECK(p.segments[2] == Segment::make_image("b.png"));
    CHECK(p.segments[3] == Segment::make_text(" in the jungle"));
    CHECK(p.image_count() == 2);
}

TEST_CASE("empty and whitespace-only prompts are rejected") {
    CHECK_THROWS_AS(parse_prompt(""), Error);
    CHECK_THROWS_AS(parse_prompt("   \t\n"), Error);
    try {
        parse_prompt("");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::empty_prompt);
    }
}

TEST_CASE("unterminated or empty embeds are malformed") {
    CHECK_THROWS_AS(parse_prompt("broken <img:foo"), Error);
    CHECK_THROWS_AS(parse_prompt("empty <img:> ref"), Error);
    try {
        parse_prompt("broken <img:foo");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::malformed_embed);
    }
}

TEST_CASE("escapes and lone angle brackets stay literal") {
    const auto p = parse_prompt(R"(compare a \< b with a \\ b and a < b)");
    REQUIRE(p.segments.size() == 1);
    CHECK(p.segments[0].text == R"(compare a < b with a \ b and a < b)");

    // an escaped embed opener is plain text
    const auto q = parse_prompt(R"(not an image: \<img:x.png>)");
    CHECK(q.image_count() == 0);
    CHECK(q.segments[0].text == "not an image: <img:x.png>");
}

TEST_CASE("serialize is the parse inverse") {
    CHECK(serialize_prompt(normalize_prompt({Segment::make_text("A "),
                                             Segment::make_image("x.png")})) == "A <img:x.png>");

    const auto p = parse_prompt("alpha <img:one.ppm> beta < gamma \\\\ delta");
    const auto round = parse_prompt(serialize_prompt(p));
    CHECK(round == p);
}

TEST_CASE("serialize escapes angle brackets in text") {
    const auto p = normalize_prompt({Segment::make_text("a < b")});
    CHECK(serialize_prompt(p) == "a \\< b");
}

TEST_CASE("serialize rejects image refs the grammar cannot carry") {
    MultiModalPrompt bad;
    bad.segments.push_back(Segment::make_image("we>ird"));
    CHECK_THROWS_AS(serialize_prompt(bad), Error);
}

TEST_CASE("round-trip property over a random corpus") {
    // random prompts assembled from text fragments (with escapes and stray
    // brackets) and image embeds
    const char* fragments[] = {"a photo of",   " on the beach", "<",    "\\",  " x ",
                               "hello world ", "< img:",        "\\\\", "\\<", " "};
    Rng rng(2024);
    int checked = 0;
    for (int i = 0; i < 500; ++i) {
        std::string raw;
        const int parts = rng.uniform_int(1, 8);
        for (int k = 0; k < parts; ++k) {
            if (rng.uniform() < 0.3) {
                raw += "<img:ref" + std::to_string(rng.uniform_int(0, 9)) + ".png>";
            } else {
                raw += fragments[rng.uniform_int(0, 9)];
            }
        }
        MultiModalPrompt parsed;
        try {
            parsed = parse_prompt(raw);
        } catch (const Error&) {
            continue; // raw happened to be empty/whitespace or a malformed embed
        }
        const std::string canonical = serialize_prompt(parsed);
        const auto reparsed = parse_prompt(canonical);
        CHECK(reparsed == parsed);
        // serialization of the reparse is a fixed point
        CHECK(serialize_prompt(reparsed) == canonical);
        ++checked;
    }
    CHECK(checked > 300);
}

TEST_CASE("substitution replaces each image in place") {
    const auto p = parse_prompt("A photo of <img:orange.png> on the road");
    const auto resolved =
        substitute(p, {{"orange.png", "[V] a cartoon orange with a leaf on its head"}});
    CHECK(resolved.text == "A photo of [V] a cartoon orange with a leaf on its head on the road");
    REQUIRE(resolved.substitutions.size() == 1);
    CHECK(resolved.substitutions[0].first == "orange.png");
}

TEST_CASE("substitution keeps order over multiple images") {
    const auto p = parse_prompt("<img:a.png> next to <img:b.png>");
    const auto resolved = substitute(p, {{"a.png", "d1"}, {"b.png", "d2"}});
    CHECK(resolved.text == "d1 next to d2");
    REQUIRE(resolved.substitutions.size() == 2);
    CHECK(resolved.substitutions[0].second == "d1");
    CHECK(resolved.substitutions[1].second == "d2");
}

TEST_CASE("missing descriptor raises") {
    const auto p = parse_prompt("<img:a.png> and <img:b.png>");
    try {
        substitute(p, {{"a.png", "d1"}});
        FAIL("expected MissingDescriptor");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::missing_descriptor);
    }
}

TEST_CASE("substitution count equals image count on random prompts") {
    Rng rng(7);
    for (int i = 0; i < 50; ++i) {
        std::string raw = "start";
        const int images = rng.uniform_int(0, 5);
        std::map<std::string, std::string> descriptors;
        for (int k = 0; k < images; ++k) {
            const std::string ref = "img" + std::to_string(k) + ".png";
            raw += " <img:" + ref + "> mid";
            descriptors[ref] = "desc" + std::to_string(k);
        }
        const auto p = parse_prompt(raw);
        const auto resolved = substitute(p, descriptors);
        CHECK(resolved.substitutions.size() == p.image_count());
    }
}

TEST_CASE("adjacent text segments never survive normalization") {
    const auto p = normalize_prompt({Segment::make_text("a"), Segment::make_text("b"),
                                     Segment::make_image("i.png"), Segment::make_text(""),
                                     Segment::make_text("c")});
    REQUIRE(p.segments.size() == 3);
    CHECK(p.segments[0].text == "ab");
    CHECK(p.segments[2].text == "c");
}

TEST_CASE("validate_prompt reports missing, undecodable and truncated refs") {
    testutil::TempDir dir("prompt-validate");
    write_ppm(dir.path() / "ok.ppm", testutil::random_image({3, 4, 4}, 1));
    std::ofstream(dir.path() / "junk.png") << "not a png";
    std::ofstream(dir.path() / "cut.ppm") << "P6\n100 100\n255\nshort"; // header lies

    const auto p = parse_prompt("<img:ok.ppm> vs <img:junk.png> vs <img:gone.png> vs <img:cut.ppm>");
    const auto issues = validate_prompt(p, dir.path());
    REQUIRE(issues.size() == 3);
    CHECK(issues[0].image_ref == "junk.png");
    CHECK(issues[1].image_ref == "gone.png");
    CHECK(issues[2].image_ref == "cut.ppm");
}

TEST_CASE("prompt files skip comments and blank lines") {
    testutil::TempDir dir("prompt-file");
    std::ofstream(dir.path() / "batch.txt")
        << "# corpus\n\nfirst prompt\n# interlude\nsecond <img:x.png> prompt\n";
    const auto lines = load_prompt_lines(dir.path() / "batch.txt");
    REQUIRE(lines.size() == 2);
    CHECK(lines[0] == "first prompt");
    CHECK(lines[1] == "second <img:x.png> prompt");
}
