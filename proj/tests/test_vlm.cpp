#include <doctest.h>

#include <string>
#include <vector>

#include "autolora/vlm.hpp"

using namespace autolora::vlm;

TEST_CASE("render_prompt substitutes the payload into the presence template") {
    const std::string p = render_prompt(PromptTemplate::CharacterPresence, "PAYLOAD-123");
    CHECK(p.find("PAYLOAD-123") == 0);
    CHECK(p.find("<IMAGE DATA>") == std::string::npos);
    CHECK(p.find("Princess Anna") != std::string::npos);
    CHECK(p.find("Reply only with a JSON with no extra text") != std::string::npos);
}

TEST_CASE("render_prompt substitutes payload and generation prompt for PC/SA") {
    const std::string p = render_prompt(PromptTemplate::PromptCorrespondenceStyle, "IMG",
                                        "a cat wearing a hat");
    CHECK(p.find("IMG") == 0);
    CHECK(p.find("a cat wearing a hat") != std::string::npos);
    CHECK(p.find("<IMAGE DATA>") == std::string::npos);
    CHECK(p.find("<PROMPT USED FOR THE IMAGE GENERATION>") == std::string::npos);
    CHECK(p.find("pixel art style") != std::string::npos);
    CHECK(p.find("prompt_correspondence") != std::string::npos);
    CHECK(p.find("style_adherence") != std::string::npos);
}

TEST_CASE("extract_json_object handles prose wrapping and nesting") {
    SUBCASE("bare object") {
        const auto j = extract_json_object(R"({"score": 4, "reason": ["dress"]})");
        REQUIRE(j.has_value());
        CHECK((*j)["score"] == 4);
    }
    SUBCASE("prose before and after") {
        const auto j = extract_json_object(
            "Sure! Here is my evaluation:\n{\"score\": 2, \"reason\": []}\nHope that helps.");
        REQUIRE(j.has_value());
        CHECK((*j)["score"] == 2);
    }
    SUBCASE("nested braces and braces inside strings") {
        const auto j = extract_json_object(
            R"(note {"score": 3, "reason": ["curly { inside \" string }"], "extra": {"a": 1}} tail)");
        REQUIRE(j.has_value());
        CHECK((*j)["extra"]["a"] == 1);
        CHECK((*j)["reason"][0] == "curly { inside \" string }");
    }
    SUBCASE("no object present") {
        CHECK_FALSE(extract_json_object("no json here").has_value());
        CHECK_FALSE(extract_json_object("{unbalanced").has_value());
        CHECK_FALSE(extract_json_object("{not: valid json}").has_value());
    }
}

TEST_CASE("parse_reply enforces the presence schema") {
    VlmScore out;
    CHECK(parse_reply(PromptTemplate::CharacterPresence,
                      R"({"score": 5, "reason": ["unmistakably Anna"]})", out));
    CHECK(out.score == 5);
    REQUIRE(out.reasons.size() == 1);
    CHECK(out.reasons[0] == "unmistakably Anna");

    CHECK_FALSE(parse_reply(PromptTemplate::CharacterPresence, R"({"score": 6, "reason": []})", out));
    CHECK_FALSE(parse_reply(PromptTemplate::CharacterPresence, R"({"score": -1, "reason": []})", out));
    CHECK_FALSE(parse_reply(PromptTemplate::CharacterPresence, R"({"score": 2.5, "reason": []})", out));
    CHECK_FALSE(parse_reply(PromptTemplate::CharacterPresence, R"({"score": 3})", out));
    CHECK_FALSE(parse_reply(PromptTemplate::CharacterPresence, R"({"score": 3, "reason": "x"})", out));
    CHECK_FALSE(parse_reply(PromptTemplate::CharacterPresence, R"({"reason": []})", out));
}

TEST_CASE("parse_reply enforces the PC/SA schema") {
    VlmScore out;
    CHECK(parse_reply(PromptTemplate::PromptCorrespondenceStyle,
                      R"({"prompt_correspondence": 4, "style_adherence": 3})", out));
    CHECK(out.prompt_correspondence == 4);
    CHECK(out.style_adherence == 3);

    CHECK_FALSE(parse_reply(PromptTemplate::PromptCorrespondenceStyle,
                            R"({"prompt_correspondence": 4})", out));
    CHECK_FALSE(parse_reply(PromptTemplate::PromptCorrespondenceStyle,
                            R"({"prompt_correspondence": 7, "style_adherence": 3})", out));
    CHECK_FALSE(parse_reply(PromptTemplate::PromptCorrespondenceStyle,
                            R"({"prompt_correspondence": 4, "style_adherence": "3"})", out));
}

TEST_CASE("vlm_score retries malformed replies then marks the item invalid") {
    int calls = 0;
    Transport flaky = [&](const std::string&, const std::string&) -> std::string {
        ++calls;
        if (calls < 3) return "garbled output";
        return R"({"score": 1, "reason": ["vague resemblance"]})";
    };
    const auto good = vlm_score({"img"}, PromptTemplate::CharacterPresence, flaky, 3);
    REQUIRE(good.size() == 1);
    CHECK(good[0].valid);
    CHECK(good[0].score == 1);
    CHECK(good[0].attempts == 3);

    Transport broken = [](const std::string&, const std::string&) { return std::string("nope"); };
    const auto bad = vlm_score({"img"}, PromptTemplate::CharacterPresence, broken, 2);
    REQUIRE(bad.size() == 1);
    CHECK_FALSE(bad[0].valid);
    CHECK(bad[0].attempts == 3);  // 1 + 2 retries
    CHECK(bad[0].raw_reply == "nope");
}

TEST_CASE("vlm_score preserves input order and passes both prompt and payload") {
    std::vector<std::pair<std::string, std::string>> seen;
    Transport echo = [&](const std::string& prompt, const std::string& payload) {
        seen.emplace_back(prompt, payload);
        const int n = static_cast<int>(seen.size());
        return std::string("{\"score\": ") + std::to_string(n) + ", \"reason\": []}";
    };
    const auto r = vlm_score({"a", "b", "c"}, PromptTemplate::CharacterPresence, echo, 0);
    REQUIRE(r.size() == 3);
    CHECK(r[0].score == 1);
    CHECK(r[1].score == 2);
    CHECK(r[2].score == 3);
    REQUIRE(seen.size() == 3);
    for (int i = 0; i < 3; ++i) {
        const std::string payload(1, static_cast<char>('a' + i));
        CHECK(seen[i].second == payload);
        CHECK(seen[i].first.find(payload) == 0);  // rendered prompt starts with the payload
    }

    CHECK_THROWS_AS(vlm_score({"x"}, PromptTemplate::CharacterPresence, nullptr, 0),
                    std::invalid_argument);
}

TEST_CASE("split_endpoint separates host from path") {
    const auto a = split_endpoint("http://localhost:8080/score");
    CHECK(a.host_and_scheme == "http://localhost:8080");
    CHECK(a.path == "/score");
    const auto b = split_endpoint("https://vlm.example.com");
    CHECK(b.host_and_scheme == "https://vlm.example.com");
    CHECK(b.path == "/");
    const auto c = split_endpoint("http://h/v1/judge");
    CHECK(c.host_and_scheme == "http://h");
    CHECK(c.path == "/v1/judge");
}
