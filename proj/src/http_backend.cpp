#include <atomic>
#include <cstdlib>

#include <httplib.h>
#include <spdlog/spdlog.h>

#include "ipi/backends.hpp"
#include "ipi/error.hpp"

namespace ipi {

using nlohmann::json;

namespace {

std::atomic<std::size_t> g_http_requests{0};

/// "https://api.example.com/v1" -> ("https://api.example.com", "/v1")
std::pair<std::string, std::string> split_base_url(const std::string& url) {
    const auto scheme_end = url.find("://");
    const auto path_start = url.find('/', scheme_end == std::string::npos ? 0 : scheme_end + 3);
    if (path_start == std::string::npos) return {url, ""};
    auto path = url.substr(path_start);
    while (!path.empty() && path.back() == '/') path.pop_back();
    return {url.substr(0, path_start), path};
}

/// One OpenAI-compatible endpoint: POSTs JSON, classifies failures.
class HttpTransport {
public:
    HttpTransport(const EndpointConfig& endpoint, std::chrono::seconds timeout)
        : endpoint_(endpoint), timeout_(timeout) {
        std::tie(origin_, prefix_) = split_base_url(endpoint.base_url);
        if (!endpoint.api_key_env.empty()) {
            if (const char* key = std::getenv(endpoint.api_key_env.c_str())) api_key_ = key;
        }
    }

    json post(const std::string& path, const json& body) const {
        auto client = make_client();
        ++g_http_requests;
        httplib::Headers headers;
        if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);
        auto res = client.Post(prefix_ + path, headers, body.dump(), "application/json");
        if (!res) {
            throw TransientError("request to " + endpoint_.base_url + path + " failed: " +
                                 httplib::to_string(res.error()));
        }
        if (res->status == 429 || res->status >= 500) {
            throw TransientError("HTTP " + std::to_string(res->status) + " from " +
                                 endpoint_.base_url + path);
        }
        if (res->status >= 400) {
            throw ConfigError("HTTP " + std::to_string(res->status) + " from " +
                              endpoint_.base_url + path + ": " + res->body);
        }
        try {
            return json::parse(res->body);
        } catch (const json::exception& e) {
            throw TransientError(std::string("malformed JSON response: ") + e.what());
        }
    }

    bool reachable() const {
        auto client = make_client();
        client.set_connection_timeout(std::chrono::seconds(2));
        ++g_http_requests;
        auto res = client.Get(prefix_ + "/models");
        return static_cast<bool>(res);
    }

private:
    httplib::Client make_client() const {
        httplib::Client client(origin_);
        client.set_connection_timeout(timeout_);
        client.set_read_timeout(timeout_);
        client.set_write_timeout(timeout_);
        return client;
    }

    EndpointConfig endpoint_;
    std::chrono::seconds timeout_;
    std::string origin_;
    std::string prefix_;
    std::string api_key_;
};

json message_content(const ChatMessage& message) {
    if (message.attachments.empty()) return message.text;
    json parts = json::array();
    parts.push_back({{"type", "text"}, {"text", message.text}});
    for (const auto& frame : message.attachments) {
        parts.push_back({{"type", "image_url"}, {"image_url", {{"url", frame_data_uri(frame)}}}});
    }
    return parts;
}

class HttpChatBackend : public ChatBackend {
public:
    HttpChatBackend(const BackendConfig& config, std::shared_ptr<RequestLimiter> limiter)
        : transport_(config.chat, config.timeout),
          model_(config.chat.model),
          retry_(config.retry),
          limiter_(std::move(limiter)) {}

    bool healthy() const override { return transport_.reachable(); }

protected:
    std::string do_chat(const ChatRequest& request) override {
        json body;
        body["model"] = model_;
        body["temperature"] = 0;
        body["messages"] = json::array();
        for (const auto& m : request.messages) {
            body["messages"].push_back({{"role", m.role}, {"content", message_content(m)}});
        }
        return with_retry(retry_, [&] {
            RequestLimiter::Permit permit(*limiter_);
            const auto res = transport_.post("/chat/completions", body);
            try {
                const auto& content = res.at("choices").at(0).at("message").at("content");
                return content.is_string() ? content.get<std::string>() : content.dump();
            } catch (const json::exception& e) {
                throw TransientError(std::string("unexpected chat response shape: ") + e.what());
            }
        });
    }

private:
    HttpTransport transport_;
    std::string model_;
    RetryPolicy retry_;
    std::shared_ptr<RequestLimiter> limiter_;
};

class HttpEmbeddingBackend : public EmbeddingBackend {
public:
    HttpEmbeddingBackend(const BackendConfig& config, std::shared_ptr<RequestLimiter> limiter)
        : EmbeddingBackend(config.embedding.dimension),
          transport_(config.embedding, config.timeout),
          model_(config.embedding.model),
          retry_(config.retry),
          limiter_(std::move(limiter)) {}

    bool healthy() const override { return transport_.reachable(); }

protected:
    Vector do_embed(const EmbedRequest& request) override {
        json body;
        body["model"] = model_;
        if (request.kind == EmbedRequest::Kind::text) {
            body["input"] = request.text;
        } else {
            json parts = json::array();
            for (const auto& frame : request.window.frames) {
                parts.push_back(
                    {{"type", "image_url"}, {"image_url", {{"url", frame_data_uri(frame)}}}});
            }
            body["input"] = parts;
        }
        const auto raw = with_retry(retry_, [&] {
            RequestLimiter::Permit permit(*limiter_);
            const auto res = transport_.post("/embeddings", body);
            try {
                return res.at("data").at(0).at("embedding").dump();
            } catch (const json::exception& e) {
                throw TransientError(std::string("unexpected embedding response shape: ") +
                                     e.what());
            }
        });
        return json::parse(raw).get<Vector>();
    }

private:
    HttpTransport transport_;
    std::string model_;
    RetryPolicy retry_;
    std::shared_ptr<RequestLimiter> limiter_;
};

}  // namespace

Backends make_http_backends(const BackendConfig& config) {
    if (config.kind != BackendConfig::Kind::http) {
        throw ConfigError("make_http_backends called with a non-http config");
    }
    auto limiter = std::make_shared<RequestLimiter>(config.limiter_width);
    Backends b;
    b.chat = std::make_shared<HttpChatBackend>(config, limiter);
    b.embedding =
        std::make_shared<CachingEmbedder>(std::make_shared<HttpEmbeddingBackend>(config, limiter));
    return b;
}

std::size_t http_request_count() { return g_http_requests.load(); }

}  // namespace ipi
