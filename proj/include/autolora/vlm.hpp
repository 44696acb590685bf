#pragma once

#include <cstdlib>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

namespace autolora::vlm {

using json = nlohmann::json;

enum class PromptTemplate { CharacterPresence, PromptCorrespondenceStyle };

inline const char* kCharacterPresenceTemplate =
    "<IMAGE DATA>\n"
    "Evaluate the presence of Princess Anna from Disney's Frozen movie in the image. "
    "Output a score between 0 and 5, where:\n"
    "* 0: Princess Anna is not present in the image.\n"
    "* 1: The image contains a character with a vague resemblance to Princess Anna, but it's "
    "not clear if it's her. (e.g., a character with a similar hairstyle or dress color)\n"
    "* 2: The image contains a character that shares some similarities with Princess Anna, "
    "but it's not a clear match. (e.g., a character with a similar face shape or clothing style)\n"
    "* 3: The image contains a character that is similar to Princess Anna, but with some "
    "noticeable differences. (e.g., a character with a similar dress and hairstyle, but "
    "different facial features)\n"
    "* 4: The image contains a character that is very likely to be Princess Anna, but with "
    "some minor differences. (e.g., a character with a similar face, dress, and hairstyle, "
    "but with a slightly different expression or pose)\n"
    "* 5: The image contains a character that is unmistakably Princess Anna from Frozen.\n"
    "\n"
    "Output the score in following JSON format:\n"
    "{\n"
    "    \"score\": [score between 0 and 5],\n"
    "    \"reason\": [use keywords to describe the reason of the score, e.g., [\"dress\", "
    "\"hairstyle\", \"no Anna character\"] ]\n"
    "}\n"
    "Reply only with a JSON with no extra text";

inline const char* kPromptCorrespondenceStyleTemplate =
    "<IMAGE DATA>\n"
    "Evaluate the given image for the prompt <PROMPT USED FOR THE IMAGE GENERATION> and the "
    "pixel art style\n"
    "Access the following metrics:\n"
    "Prompt correspondence: How well does the image capture the essence, objects, and scenes "
    "described in the prompt? Scale: 0-5, where:\n"
    "0: Not at all (the image does not relate to the prompt in any way)\n"
    "1: Very poorly (the image vaguely relates to the prompt, but most key elements are "
    "missing or incorrect)\n"
    "2: Somewhat (the image captures some key elements of the prompt, but others are missing "
    "or incorrect)\n"
    "3: Fairly well (the image captures most key elements of the prompt, but some details may "
    "be off)\n"
    "4: Very well (the image accurately captures the essence and most key elements of the "
    "prompt)\n"
    "5: Exactly (the image perfectly captures the essence, objects, and scenes described in "
    "the prompt)\n"
    "Style adherence: How well does the image adhere to the specified style? If the style is "
    "pixel art, does the image truly resemble pixel art, or is it just a low-quality image? "
    "Scale: 0-5, where: \n"
    "1: Very poorly (the image attempts to mimic pixel art, but lacks clear pixelation, has "
    "excessive aliasing, or uses too many colors)\n"
    "2: Somewhat (the image shows some pixel art characteristics, such as pixelation, but "
    "lacks consistency in pixel size, color palette, or has noticeable artifacts)\n"
    "3: Fairly well (the image generally adheres to pixel art principles, with clear "
    "pixelation, a limited color palette, and minimal aliasing, but may have some minor "
    "flaws)\n"
    "4: Very well (the image strongly adheres to pixel art principles, with crisp pixelation, "
    "a well-chosen color palette, and minimal to no aliasing or artifacts)\n"
    "5: Perfectly (the image perfectly captures the pixel art style, with precise pixelation, "
    "a masterfully chosen color palette, and no noticeable flaws or artifacts)\n"
    "Provide the evaluation scores in the following JSON format:\n"
    "{\n"
    "  \"prompt_correspondence\": [the prompt correspondence score from 0 to 5],\n"
    "  \"style_adherence\": [the style adherence score from 0 to 5],\n"
    "}\n"
    "Reply only with a JSON with no extra text";

inline std::string replace_all(std::string text, const std::string& from, const std::string& to) {
    std::size_t pos = 0;
    while ((pos = text.find(from, pos)) != std::string::npos) {
        text.replace(pos, from.size(), to);
        pos += to.size();
    }
    return text;
}

// Substitute the payload (and, for PC/SA, the generation prompt) into the
// template placeholders.
inline std::string render_prompt(PromptTemplate tmpl, const std::string& payload,
                                 const std::string& generation_prompt = "") {
    std::string text = tmpl == PromptTemplate::CharacterPresence
                           ? kCharacterPresenceTemplate
                           : kPromptCorrespondenceStyleTemplate;
    text = replace_all(std::move(text), "<IMAGE DATA>", payload);
    if (tmpl == PromptTemplate::PromptCorrespondenceStyle)
        text = replace_all(std::move(text), "<PROMPT USED FOR THE IMAGE GENERATION>", generation_prompt);
    return text;
}

struct VlmScore {
    bool valid = false;
    int score = -1;                 // CharacterPresence
    std::vector<std::string> reasons;
    int prompt_correspondence = -1;  // PromptCorrespondenceStyle
    int style_adherence = -1;
    std::string raw_reply;  // last raw reply, retained for Invalid items
    int attempts = 0;
};

// Extract the first balanced JSON object embedded in (possibly prose-wrapped)
// text. Returns nullopt if none parses.
inline std::optional<json> extract_json_object(const std::string& text) {
    const std::size_t start = text.find('{');
    if (start == std::string::npos) return std::nullopt;
    int depth = 0;
    bool in_string = false;
    bool escaped = false;
    for (std::size_t i = start; i < text.size(); ++i) {
        const char c = text[i];
        if (in_string) {
            if (escaped) escaped = false;
            else if (c == '\\') escaped = true;
            else if (c == '"') in_string = false;
            continue;
        }
        if (c == '"') in_string = true;
        else if (c == '{') ++depth;
        else if (c == '}') {
            if (--depth == 0) {
                const json parsed =
                    json::parse(text.substr(start, i - start + 1), nullptr, /*allow_exceptions=*/false);
                if (parsed.is_discarded()) return std::nullopt;
                return parsed;
            }
        }
    }
    return std::nullopt;
}

inline bool in_score_range(const json& v) {
    return v.is_number_integer() && v.get<int>() >= 0 && v.get<int>() <= 5;
}

// Validate and unpack one reply against the template's schema. Returns false
// on any schema violation, including out-of-range scores.
inline bool parse_reply(PromptTemplate tmpl, const std::string& text, VlmScore& out) {
    const auto obj = extract_json_object(text);
    if (!obj) return false;
    if (tmpl == PromptTemplate::CharacterPresence) {
        if (!obj->contains("score") || !in_score_range((*obj)["score"])) return false;
        if (!obj->contains("reason") || !(*obj)["reason"].is_array()) return false;
        out.score = (*obj)["score"].get<int>();
        out.reasons.clear();
        for (const auto& r : (*obj)["reason"])
            out.reasons.push_back(r.is_string() ? r.get<std::string>() : r.dump());
        return true;
    }
    if (!obj->contains("prompt_correspondence") || !in_score_range((*obj)["prompt_correspondence"]))
        return false;
    if (!obj->contains("style_adherence") || !in_score_range((*obj)["style_adherence"])) return false;
    out.prompt_correspondence = (*obj)["prompt_correspondence"].get<int>();
    out.style_adherence = (*obj)["style_adherence"].get<int>();
    return true;
}

// Transport takes the fully rendered prompt plus the raw payload and returns
// the model's reply text. Throwing signals a transport failure.
using Transport =
    std::function<std::string(const std::string& rendered_prompt, const std::string& payload)>;

// Score a list of payloads, retrying each up to `retries` extra times on a
// malformed reply, then marking the item Invalid with the raw reply retained.
// Output order matches input order.
inline std::vector<VlmScore> vlm_score(const std::vector<std::string>& payloads, PromptTemplate tmpl,
                                       const Transport& transport, int retries,
                                       const std::string& generation_prompt = "") {
    if (!transport) throw std::invalid_argument("vlm_score: no transport configured");
    std::vector<VlmScore> results;
    results.reserve(payloads.size());
    for (const auto& payload : payloads) {
        const std::string prompt = render_prompt(tmpl, payload, generation_prompt);
        VlmScore item;
        for (int attempt = 0; attempt <= retries; ++attempt) {
            ++item.attempts;
            item.raw_reply = transport(prompt, payload);
            if (parse_reply(tmpl, item.raw_reply, item)) {
                item.valid = true;
                break;
            }
        }
        results.push_back(std::move(item));
    }
    return results;
}

struct Endpoint {
    std::string host_and_scheme;  // e.g. http://localhost:8080
    std::string path;             // e.g. /score
};

inline Endpoint split_endpoint(const std::string& url) {
    const auto scheme_end = url.find("://");
    const auto path_start = url.find('/', scheme_end == std::string::npos ? 0 : scheme_end + 3);
    if (path_start == std::string::npos) return {url, "/"};
    return {url.substr(0, path_start), url.substr(path_start)};
}

inline std::string env_or(const char* name, const std::string& fallback) {
    const char* v = std::getenv(name);
    return v ? std::string(v) : fallback;
}

}  // namespace autolora::vlm
