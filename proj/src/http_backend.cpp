#include <httplib.h>

#include <cstdlib>
#include <regex>

#include "finest/gateway.hpp"

namespace finest {

namespace {

struct ParsedUrl {
    std::string scheme_host_port;  // "https://api.openai.com"
    std::string path_prefix;       // "/v1"
};

ParsedUrl parse_base_url(const std::string& url) {
    static const std::regex kUrl(R"(^(https?://[^/]+)(/.*)?$)", std::regex::icase);
    std::smatch m;
    if (!std::regex_match(url, m, kUrl)) {
        throw BackendError(Errc::backend_unavailable, "malformed base_url '" + url + "'", false);
    }
    ParsedUrl out{m[1].str(), m[2].matched ? m[2].str() : std::string{}};
    while (!out.path_prefix.empty() && out.path_prefix.back() == '/') out.path_prefix.pop_back();
    return out;
}

}  // namespace

HttpBackend::HttpBackend(HttpBackendConfig config) : config_(std::move(config)) {}

std::string HttpBackend::complete(const ChatRequest& req) {
    const char* key = config_.api_key_env.empty() ? nullptr : std::getenv(config_.api_key_env.c_str());
    if (!config_.api_key_env.empty() && (key == nullptr || *key == '\0')) {
        throw BackendError(Errc::backend_unavailable,
                           "credential variable " + config_.api_key_env + " is not set for backend " + config_.name,
                           false);
    }

    const ParsedUrl url = parse_base_url(config_.base_url);
    httplib::Client client(url.scheme_host_port);
    client.set_connection_timeout(config_.timeout_seconds, 0);
    client.set_read_timeout(config_.timeout_seconds, 0);
    client.set_write_timeout(config_.timeout_seconds, 0);

    json body;
    body["model"] = config_.model_id.empty() ? req.model_id : config_.model_id;
    body["temperature"] = req.temperature;
    body["top_p"] = req.top_p;
    body["max_tokens"] = req.max_tokens;
    body["messages"] = json::array();
    for (const auto& m : req.messages) {
        body["messages"].push_back({{"role", std::string(to_string(m.role))}, {"content", m.text}});
    }

    httplib::Headers headers;
    if (key != nullptr) headers.emplace("Authorization", std::string("Bearer ") + key);

    auto res = client.Post(url.path_prefix + "/chat/completions", headers, body.dump(), "application/json");
    if (!res) {
        throw BackendError(Errc::backend_unavailable,
                           config_.name + ": transport error " + httplib::to_string(res.error()), true);
    }
    if (res->status == 429) {
        throw BackendError(Errc::rate_limited, config_.name + ": throttled (HTTP 429)", true);
    }
    if (res->status >= 500) {
        throw BackendError(Errc::backend_unavailable, config_.name + ": HTTP " + std::to_string(res->status), true);
    }
    if (res->status != 200) {
        throw BackendError(Errc::backend_unavailable,
                           config_.name + ": HTTP " + std::to_string(res->status) + ": " + res->body.substr(0, 300),
                           false);
    }

    json reply = json::parse(res->body, nullptr, false);
    if (reply.is_discarded()) {
        throw BackendError(Errc::backend_unavailable, config_.name + ": response body is not JSON", true);
    }
    try {
        const auto& content = reply.at("choices").at(0).at("message").at("content");
        return content.is_string() ? content.get<std::string>() : std::string{};
    } catch (const json::exception&) {
        return {};
    }
}

}  // namespace finest
