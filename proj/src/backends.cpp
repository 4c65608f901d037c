#include "ipi/backends.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <thread>

#include <spdlog/spdlog.h>

#include "ipi/error.hpp"
#include "ipi/text.hpp"

namespace ipi {

namespace fs = std::filesystem;
using nlohmann::json;

std::string to_string(ChatPurpose purpose) {
    switch (purpose) {
        case ChatPurpose::classify: return "classify";
        case ChatPurpose::proposals: return "proposals";
        case ChatPurpose::enhance: return "enhance";
        case ChatPurpose::raw_trigger: return "raw_trigger";
        case ChatPurpose::proactive_response: return "proactive_response";
        case ChatPurpose::reactive_answer: return "reactive_answer";
        case ChatPurpose::passthrough: return "passthrough";
    }
    return "unknown";
}

std::string with_retry(const RetryPolicy& policy, const std::function<std::string()>& fn,
                       int* attempts_used) {
    const int attempts = std::max(1, policy.attempts);
    auto backoff = policy.initial_backoff;
    std::string last_error;
    for (int attempt = 1; attempt <= attempts; ++attempt) {
        if (attempts_used) *attempts_used = attempt;
        try {
            return fn();
        } catch (const TransientError& e) {
            last_error = e.what();
            spdlog::warn("backend attempt {}/{} failed: {}", attempt, attempts, last_error);
            if (attempt == attempts) break;
            std::this_thread::sleep_for(backoff);
            backoff = std::chrono::milliseconds(
                static_cast<long long>(static_cast<double>(backoff.count()) * policy.multiplier));
        }
    }
    throw BackendUnavailable("backend unavailable after " + std::to_string(attempts) +
                             " attempts: " + last_error);
}

RequestLimiter::RequestLimiter(int width) : width_(width), slots_(width) {
    if (width < 1 || width > 1024) throw ConfigError("limiter width must be in [1, 1024]");
}

RequestLimiter::Permit::Permit(RequestLimiter& owner) : owner_(owner) {
    owner_.slots_.acquire();
    const int now = ++owner_.in_flight_;
    int peak = owner_.peak_.load();
    while (now > peak && !owner_.peak_.compare_exchange_weak(peak, now)) {
    }
}

RequestLimiter::Permit::~Permit() {
    --owner_.in_flight_;
    owner_.slots_.release();
}

std::string ChatBackend::chat(const ChatRequest& request) {
    if (request.messages.empty()) throw ValidationError("chat request has no messages");
    for (const auto& message : request.messages) {
        for (const auto& frame : message.attachments) {
            if (frame.index > request.current_tick) {
                throw CausalityError("attachment frame " + std::to_string(frame.index) +
                                     " is beyond current tick " +
                                     std::to_string(request.current_tick));
            }
        }
    }
    return do_chat(request);
}

double norm(const Vector& v) {
    double sum = 0.0;
    for (double x : v) sum += x * x;
    return std::sqrt(sum);
}

Vector EmbeddingBackend::embed(const EmbedRequest& request) {
    if (request.kind == EmbedRequest::Kind::text && text::trim(request.text).empty()) {
        throw ValidationError("embedding payload is empty");
    }
    if (request.kind == EmbedRequest::Kind::window) {
        if (request.window.empty()) throw ValidationError("embedding window is empty");
        if (request.window.end_tick > request.current_tick) {
            throw CausalityError("window ending at " + std::to_string(request.window.end_tick) +
                                 " is beyond current tick " + std::to_string(request.current_tick));
        }
    }
    Vector v = do_embed(request);
    if (v.empty()) throw ConfigError("embedding backend returned an empty vector");
    {
        std::lock_guard lock(mutex_);
        if (!dimension_) {
            dimension_ = v.size();
        } else if (*dimension_ != v.size()) {
            throw ConfigError("embedding dimension drift: expected " + std::to_string(*dimension_) +
                              ", got " + std::to_string(v.size()));
        }
    }
    const double n = norm(v);
    if (!std::isfinite(n) || n == 0.0) throw ConfigError("embedding has zero or non-finite norm");
    if (std::abs(n - 1.0) > 1e-6) {
        for (auto& x : v) x /= n;
    }
    return v;
}

std::optional<std::size_t> EmbeddingBackend::dimension() const {
    std::lock_guard lock(mutex_);
    return dimension_;
}

std::string embed_payload_key(const EmbedRequest& request) {
    std::ostringstream key;
    if (request.kind == EmbedRequest::Kind::text) {
        key << "text|" << request.task_key << '|' << request.proposal_index << '|' << request.text;
    } else {
        key << "window|" << request.window.end_tick;
        for (const auto& f : request.window.frames) key << '|' << f.index << '=' << f.source;
    }
    return key.str();
}

CachingEmbedder::CachingEmbedder(std::shared_ptr<EmbeddingBackend> inner)
    : EmbeddingBackend(inner ? inner->dimension() : std::nullopt), inner_(std::move(inner)) {
    if (!inner_) throw ValidationError("caching embedder needs a backend");
}

Vector CachingEmbedder::do_embed(const EmbedRequest& request) {
    const auto key = embed_payload_key(request);
    {
        std::lock_guard lock(mutex_);
        if (auto it = cache_.find(key); it != cache_.end()) {
            ++hits_;
            return it->second;
        }
    }
    ++misses_;
    auto v = inner_->embed(request);
    std::lock_guard lock(mutex_);
    cache_.emplace(key, v);
    return v;
}

namespace {

EndpointConfig endpoint_from(const json& j, const std::string& default_env) {
    EndpointConfig e;
    e.base_url = j.at("base_url").get<std::string>();
    e.model = j.at("model").get<std::string>();
    e.api_key_env = j.value("api_key_env", default_env);
    if (j.contains("dimension")) e.dimension = j.at("dimension").get<std::size_t>();
    if (e.base_url.rfind("http://", 0) != 0 && e.base_url.rfind("https://", 0) != 0) {
        throw ConfigError("base_url must start with http:// or https://: " + e.base_url);
    }
    return e;
}

}  // namespace

BackendConfig BackendConfig::from_json(const json& j, const fs::path& base_dir) {
    BackendConfig c;
    try {
        const auto kind = j.at("kind").get<std::string>();
        if (kind == "scripted") {
            c.kind = Kind::scripted;
            if (j.contains("trace")) {
                fs::path p = j.at("trace").get<std::string>();
                c.trace = p.is_relative() && !base_dir.empty() ? base_dir / p : p;
            }
        } else if (kind == "http") {
            c.kind = Kind::http;
            c.chat = endpoint_from(j.at("chat"), "IPI_CHAT_API_KEY");
            c.embedding = endpoint_from(j.at("embedding"), "IPI_EMBED_API_KEY");
        } else {
            throw ConfigError("unknown backend kind '" + kind + "'");
        }
        if (j.contains("retry")) {
            const auto& r = j.at("retry");
            c.retry.attempts = r.value("attempts", c.retry.attempts);
            c.retry.initial_backoff =
                std::chrono::milliseconds(r.value("initial_backoff_ms", 500));
            c.retry.multiplier = r.value("multiplier", c.retry.multiplier);
        }
        c.limiter_width = j.value("limiter_width", c.limiter_width);
        c.timeout = std::chrono::seconds(j.value("timeout_s", 60));
    } catch (const json::exception& e) {
        throw ConfigError(std::string("backend config: ") + e.what());
    }
    if (c.retry.attempts < 1) throw ConfigError("retry.attempts must be >= 1");
    if (c.limiter_width < 1) throw ConfigError("limiter_width must be >= 1");
    return c;
}

BackendConfig BackendConfig::load(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open backend config " + path.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ConfigError("backend config " + path.string() + ": " + e.what());
    }
    return from_json(j, path.parent_path());
}

std::string frame_data_uri(const Frame& frame) {
    const auto& ref = frame.source;
    if (ref.rfind("data:", 0) == 0) return ref;
    if (ref.rfind("base64:", 0) == 0) return "data:image/jpeg;base64," + ref.substr(7);
    if (ref.rfind("synthetic://", 0) == 0) {
        throw ConfigError("frame " + std::to_string(frame.index) +
                          " is synthetic and has no pixels; use the scripted backend");
    }
    std::ifstream in(ref, std::ios::binary);
    if (!in) throw ConfigError("cannot read frame file " + ref);
    std::ostringstream bytes;
    bytes << in.rdbuf();
    const auto ext = text::lower(fs::path(ref).extension().string());
    const std::string mime = ext == ".png" ? "image/png" : ext == ".webp" ? "image/webp" : "image/jpeg";
    return "data:" + mime + ";base64," + text::base64_encode(bytes.str());
}

}  // namespace ipi
