#pragma once

#include <stdexcept>
#include <string>

#include <httplib.h>
#include <json.hpp>

#include "autolora/vlm.hpp"

namespace autolora::vlm {

// JSON-over-HTTP transport: POSTs {"prompt": ..., "payload": ...} to the
// configured endpoint. Endpoint and bearer token come from the
// AUTOLORA_VLM_ENDPOINT / AUTOLORA_VLM_TOKEN environment variables unless
// given explicitly.
inline Transport make_http_transport(std::string endpoint_url = "", std::string token = "") {
    if (endpoint_url.empty()) endpoint_url = env_or("AUTOLORA_VLM_ENDPOINT", "");
    if (token.empty()) token = env_or("AUTOLORA_VLM_TOKEN", "");
    if (endpoint_url.empty())
        throw std::runtime_error("remote VLM scoring requires AUTOLORA_VLM_ENDPOINT");
    const Endpoint ep = split_endpoint(endpoint_url);

    return [ep, token](const std::string& prompt, const std::string& payload) -> std::string {
        httplib::Client client(ep.host_and_scheme);
        httplib::Headers headers;
        if (!token.empty()) headers.emplace("Authorization", "Bearer " + token);
        nlohmann::json body{{"prompt", prompt}, {"payload", payload}};
        auto res = client.Post(ep.path, headers, body.dump(), "application/json");
        if (!res)
            throw std::runtime_error("VLM transport failure: " + httplib::to_string(res.error()));
        if (res->status != 200)
            throw std::runtime_error("VLM endpoint returned HTTP " + std::to_string(res->status));
        return res->body;
    };
}

}  // namespace autolora::vlm
