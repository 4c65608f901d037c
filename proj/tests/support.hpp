#pragma once

#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <random>
#include <sstream>
#include <string>

#include <json.hpp>

#include "ipi/backends.hpp"
#include "ipi/error.hpp"
#include "ipi/manifest.hpp"
#include "ipi/scripted.hpp"

namespace ipi::testing {

inline std::filesystem::path source_dir() { return IPI_SOURCE_DIR; }
inline std::filesystem::path data_dir() { return source_dir() / "data"; }

inline nlohmann::json read_json(const std::filesystem::path& p) {
    std::ifstream in(p);
    if (!in) throw std::runtime_error("cannot open " + p.string());
    return nlohmann::json::parse(in);
}

inline std::string read_text(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream s;
    s << in.rdbuf();
    return s.str();
}

/// Unique scratch directory removed on destruction.
struct TempDir {
    std::filesystem::path path;
    TempDir() {
        std::random_device rd;
        path = std::filesystem::temp_directory_path() /
               ("ipi-test-" + std::to_string(rd()) + std::to_string(rd()));
        std::filesystem::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path, ec);
    }
};

/// Chat backend answering through a callback.
class FnChat : public ChatBackend {
public:
    explicit FnChat(std::function<std::string(const ChatRequest&)> fn) : fn_(std::move(fn)) {}
    std::size_t calls = 0;

protected:
    std::string do_chat(const ChatRequest& r) override {
        ++calls;
        return fn_(r);
    }

private:
    std::function<std::string(const ChatRequest&)> fn_;
};

class FnEmbed : public EmbeddingBackend {
public:
    explicit FnEmbed(std::function<Vector(const EmbedRequest&)> fn) : fn_(std::move(fn)) {}

protected:
    Vector do_embed(const EmbedRequest& r) override { return fn_(r); }

private:
    std::function<Vector(const EmbedRequest&)> fn_;
};

/// Scripted backends whose chat fails with BackendUnavailable for one purpose.
inline Backends failing_backends(std::shared_ptr<const ScriptedTrace> trace, ChatPurpose purpose) {
    auto inner = make_scripted_backends(trace);
    auto chat = inner.chat;
    Backends b;
    b.embedding = inner.embedding;
    b.chat = std::make_shared<FnChat>([chat, purpose](const ChatRequest& r) -> std::string {
        if (r.purpose == purpose) throw BackendUnavailable("injected outage");
        return chat->chat(r);
    });
    return b;
}

inline const Manifest& scripted_manifest() {
    static const Manifest m = load_manifest(data_dir() / "scripted" / "manifest.json");
    return m;
}

inline const EvalInstance& instance(const std::string& id) {
    for (const auto& in : scripted_manifest().instances) {
        if (in.instance_id == id) return in;
    }
    throw std::runtime_error("no instance " + id);
}

}  // namespace ipi::testing
