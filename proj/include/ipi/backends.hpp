#pragma once

#include <atomic>
#include <chrono>
#include <cstddef>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "ipi/timeline.hpp"

namespace ipi {

using Vector = std::vector<double>;

/// What a chat call is for. Live backends ignore it; the scripted backend
/// uses it (with the lookup keys below) to find the answer in its trace.
enum class ChatPurpose {
    classify,
    proposals,
    enhance,
    raw_trigger,
    proactive_response,
    reactive_answer,
    passthrough,
};

std::string to_string(ChatPurpose purpose);

struct ChatMessage {
    std::string role;
    std::string text;
    std::vector<Frame> attachments;
};

struct ChatRequest {
    ChatPurpose purpose = ChatPurpose::reactive_answer;
    std::vector<ChatMessage> messages;
    /// Causality horizon: no attachment may have an index beyond it.
    Tick current_tick = 0;

    // Trace lookup keys.
    std::string event_id;
    std::string task_key;
    Tick tick = 0;
    /// A reminder turn is in the prompt (the "with instruction" variant).
    bool reminder = false;
};

struct EmbedRequest {
    enum class Kind { text, window };

    Kind kind = Kind::text;
    std::string text;
    FrameWindow window;
    Tick current_tick = 0;

    // Trace lookup keys for proposal embeddings.
    std::string task_key;
    int proposal_index = 0;
};

struct RetryPolicy {
    int attempts = 3;
    std::chrono::milliseconds initial_backoff{500};
    double multiplier = 2.0;
};

/// Thrown by transports for failures worth retrying (429, 5xx, I/O).
class TransientError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Runs `fn` up to policy.attempts times with exponential backoff between
/// transient failures. Exhaustion raises BackendUnavailable. Returns the
/// number of attempts consumed through `attempts_used` when non-null.
std::string with_retry(const RetryPolicy& policy, const std::function<std::string()>& fn,
                       int* attempts_used = nullptr);

/// Bounds the number of in-flight backend calls.
class RequestLimiter {
public:
    explicit RequestLimiter(int width = 4);

    int width() const { return width_; }
    int peak_in_flight() const { return peak_.load(); }

    class Permit {
    public:
        explicit Permit(RequestLimiter& owner);
        ~Permit();
        Permit(const Permit&) = delete;
        Permit& operator=(const Permit&) = delete;

    private:
        RequestLimiter& owner_;
    };

private:
    int width_;
    std::counting_semaphore<1024> slots_;
    std::atomic<int> in_flight_{0};
    std::atomic<int> peak_{0};
};

class ChatBackend {
public:
    virtual ~ChatBackend() = default;

    /// Validates the request (non-empty, attachments within the causality
    /// horizon) before anything leaves the process.
    std::string chat(const ChatRequest& request);

    virtual bool healthy() const { return true; }

protected:
    virtual std::string do_chat(const ChatRequest& request) = 0;
};

class EmbeddingBackend {
public:
    explicit EmbeddingBackend(std::optional<std::size_t> dimension = std::nullopt)
        : dimension_(dimension) {}
    virtual ~EmbeddingBackend() = default;

    /// Unit-normalized vector. Vectors already within 1e-6 of unit norm
    /// are returned untouched; a dimension change across calls is a
    /// configuration error.
    Vector embed(const EmbedRequest& request);

    std::optional<std::size_t> dimension() const;
    virtual bool healthy() const { return true; }

protected:
    virtual Vector do_embed(const EmbedRequest& request) = 0;

private:
    mutable std::mutex mutex_;
    std::optional<std::size_t> dimension_;
};

/// Memoizes an embedding backend by payload.
class CachingEmbedder : public EmbeddingBackend {
public:
    explicit CachingEmbedder(std::shared_ptr<EmbeddingBackend> inner);

    std::size_t hits() const { return hits_.load(); }
    std::size_t misses() const { return misses_.load(); }
    bool healthy() const override { return inner_->healthy(); }

protected:
    Vector do_embed(const EmbedRequest& request) override;

private:
    std::shared_ptr<EmbeddingBackend> inner_;
    std::mutex mutex_;
    std::unordered_map<std::string, Vector> cache_;
    std::atomic<std::size_t> hits_{0};
    std::atomic<std::size_t> misses_{0};
};

/// Cache key covering everything that determines an embedding.
std::string embed_payload_key(const EmbedRequest& request);

double norm(const Vector& v);

// ---------------------------------------------------------------------------
// Configuration

struct EndpointConfig {
    std::string base_url;
    std::string model;
    std::string api_key_env;
    std::optional<std::size_t> dimension;
};

struct BackendConfig {
    enum class Kind { scripted, http };

    Kind kind = Kind::scripted;
    /// Scripted: optional session trace (eval uses per-instance traces).
    std::optional<std::filesystem::path> trace;
    EndpointConfig chat;
    EndpointConfig embedding;
    RetryPolicy retry;
    int limiter_width = 4;
    std::chrono::seconds timeout{60};

    static BackendConfig from_json(const nlohmann::json& j,
                                   const std::filesystem::path& base_dir = {});
    static BackendConfig load(const std::filesystem::path& path);
    static BackendConfig scripted_default() { return {}; }
};

struct Backends {
    std::shared_ptr<ChatBackend> chat;
    std::shared_ptr<EmbeddingBackend> embedding;
};

/// Live OpenAI-compatible clients for an http config.
Backends make_http_backends(const BackendConfig& config);

/// Number of HTTP requests issued by this process. The scripted backend
/// must leave it untouched.
std::size_t http_request_count();

/// Resolves a frame reference to a data URI (reads files, wraps base64).
std::string frame_data_uri(const Frame& frame);

}  // namespace ipi
