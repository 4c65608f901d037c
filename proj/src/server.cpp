#include "ipi/server.hpp"

#include <chrono>
#include <fstream>
#include <list>
#include <sstream>

#include <boost/asio/ip/tcp.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>
#include <spdlog/spdlog.h>

#include "ipi/error.hpp"

namespace ipi {

namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
namespace net = boost::asio;
using tcp = net::ip::tcp;
using nlohmann::json;

std::pair<std::string, unsigned short> parse_listen(const std::string& listen) {
    std::string host = "127.0.0.1";
    std::string port = listen;
    if (const auto colon = listen.rfind(':'); colon != std::string::npos) {
        if (colon > 0) host = listen.substr(0, colon);
        port = listen.substr(colon + 1);
    }
    try {
        std::size_t used = 0;
        const int p = std::stoi(port, &used);
        if (used != port.size() || p < 0 || p > 65535) throw std::out_of_range("port");
        return {host, static_cast<unsigned short>(p)};
    } catch (const std::exception&) {
        throw ConfigError("bad listen address '" + listen + "' (expected host:port)");
    }
}

namespace {

std::string url_decode(const std::string& s) {
    std::string out;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (s[i] == '+') {
            out += ' ';
        } else if (s[i] == '%' && i + 2 < s.size()) {
            out += static_cast<char>(std::stoi(s.substr(i + 1, 2), nullptr, 16));
            i += 2;
        } else {
            out += s[i];
        }
    }
    return out;
}

std::pair<std::string, std::map<std::string, std::string>> split_target(const std::string& target) {
    std::map<std::string, std::string> query;
    const auto q = target.find('?');
    const auto path = target.substr(0, q);
    if (q != std::string::npos) {
        std::stringstream in(target.substr(q + 1));
        std::string pair;
        while (std::getline(in, pair, '&')) {
            const auto eq = pair.find('=');
            if (eq == std::string::npos) {
                query[url_decode(pair)] = "";
            } else {
                query[url_decode(pair.substr(0, eq))] = url_decode(pair.substr(eq + 1));
            }
        }
    }
    return {path, query};
}

/// Session overrides from the upgrade query string.
json overrides_from_query(const std::map<std::string, std::string>& q) {
    json o = json::object();
    for (const char* key : {"theta_low", "theta_high"}) {
        if (auto it = q.find(key); it != q.end()) o[key] = parse_threshold(it->second);
    }
    if (auto it = q.find("mode"); it != q.end()) o["mode"] = it->second;
    if (auto it = q.find("with_reminder"); it != q.end()) o["with_reminder"] = it->second == "1" || it->second == "true";
    if (auto it = q.find("frames"); it != q.end()) {
        json f = {{"kind", it->second}};
        if (auto len = q.find("length"); len != q.end()) f["length"] = std::stoi(len->second);
        if (auto path = q.find("path"); path != q.end()) f["path"] = path->second;
        o["frames"] = f;
    }
    return o;
}

std::string mime_type(const std::filesystem::path& p) {
    const auto ext = p.extension().string();
    if (ext == ".jpg" || ext == ".jpeg") return "image/jpeg";
    if (ext == ".png") return "image/png";
    if (ext == ".gif") return "image/gif";
    if (ext == ".webp") return "image/webp";
    if (ext == ".bmp") return "image/bmp";
    return "application/octet-stream";
}

}  // namespace

struct Server::Connection {
    tcp::socket socket;
    std::thread thread;
    std::mutex busy;
    std::atomic<bool> done{false};

    explicit Connection(tcp::socket s) : socket(std::move(s)) {}
};

struct Server::Impl {
    net::io_context ioc;
    tcp::acceptor acceptor{ioc};
    std::thread accept_thread;
    std::atomic<bool> stopping{false};
    std::mutex connections_mutex;
    std::list<std::shared_ptr<Connection>> connections;
};

Server::Server(ServerConfig config, SessionManager::BackendProvider backends, HealthProbe health)
    : config_(std::move(config)),
      manager_(config_.session, std::move(backends)),
      health_(std::move(health)),
      impl_(std::make_unique<Impl>()) {}

Server::~Server() { stop(); }

void Server::start() {
    beast::error_code ec;
    const auto address = net::ip::make_address(config_.host, ec);
    if (ec) throw ConfigError("bad listen host '" + config_.host + "'");
    const tcp::endpoint endpoint(address, config_.port);
    auto& acc = impl_->acceptor;
    acc.open(endpoint.protocol(), ec);
    if (!ec) acc.set_option(net::socket_base::reuse_address(true), ec);
    if (!ec) acc.bind(endpoint, ec);
    if (!ec) acc.listen(net::socket_base::max_listen_connections, ec);
    if (ec) {
        throw ConfigError("cannot listen on " + config_.host + ":" + std::to_string(config_.port) +
                          ": " + ec.message());
    }
    acc.non_blocking(true);
    bound_port_ = acc.local_endpoint().port();
    spdlog::info("listening on {}:{}", config_.host, bound_port_);

    impl_->accept_thread = std::thread([this] {
        auto& impl = *impl_;
        while (!impl.stopping) {
            tcp::socket socket(impl.ioc);
            beast::error_code aec;
            impl.acceptor.accept(socket, aec);
            if (aec == net::error::would_block || aec == net::error::try_again) {
                std::this_thread::sleep_for(std::chrono::milliseconds(10));
            } else if (!aec) {
                socket.non_blocking(false);
                auto conn = std::make_shared<Connection>(std::move(socket));
                std::lock_guard lock(impl.connections_mutex);
                impl.connections.push_back(conn);
                conn->thread = std::thread([this, conn] {
                    serve_connection(conn);
                    conn->done = true;
                });
            }
            std::lock_guard lock(impl.connections_mutex);
            for (auto it = impl.connections.begin(); it != impl.connections.end();) {
                if ((*it)->done) {
                    (*it)->thread.join();
                    it = impl.connections.erase(it);
                } else {
                    ++it;
                }
            }
        }
    });
}

void Server::stop() {
    if (!impl_ || impl_->stopping.exchange(true)) return;
    if (impl_->accept_thread.joinable()) impl_->accept_thread.join();
    beast::error_code ec;
    impl_->acceptor.close(ec);
    std::list<std::shared_ptr<Connection>> open;
    {
        std::lock_guard lock(impl_->connections_mutex);
        open.swap(impl_->connections);
    }
    for (auto& c : open) {
        {
            std::lock_guard busy(c->busy);
            c->socket.shutdown(tcp::socket::shutdown_receive, ec);
        }
        if (c->thread.joinable()) c->thread.join();
    }
    spdlog::info("server stopped; {} sessions drained", manager_.size());
}

void Server::serve_connection(const std::shared_ptr<Connection>& conn) {
    beast::flat_buffer buffer;
    http::request<http::string_body> req;
    beast::error_code ec;
    http::read(conn->socket, buffer, req, ec);
    if (ec) return;
    const auto [path, query] = split_target(std::string(req.target()));

    auto respond = [&](http::status status, const std::string& type, std::string body) {
        http::response<http::string_body> res{status, req.version()};
        res.set(http::field::content_type, type);
        res.set(http::field::access_control_allow_origin, "*");
        res.keep_alive(false);
        res.body() = std::move(body);
        res.prepare_payload();
        http::write(conn->socket, res, ec);
        conn->socket.shutdown(tcp::socket::shutdown_send, ec);
    };

    if (websocket::is_upgrade(req)) {
        if (path != "/session") {
            respond(http::status::not_found, "application/json", json{{"error", "no such endpoint"}}.dump());
            return;
        }
        std::string id;
        if (auto it = query.find("session_id"); it != query.end()) {
            id = it->second;
            if (!manager_.contains(id)) {
                respond(http::status::not_found, "application/json",
                        json{{"error", "unknown session " + id}}.dump());
                return;
            }
        } else {
            try {
                id = manager_.open(overrides_from_query(query));
            } catch (const std::exception& e) {
                respond(http::status::bad_request, "application/json",
                        json{{"error", "session refused"}, {"detail", e.what()}}.dump());
                return;
            }
        }
        websocket::stream<tcp::socket&> ws(conn->socket);
        ws.text(true);
        ws.accept(req, ec);
        if (ec) return;
        auto send_all = [&](const std::vector<json>& messages) {
            for (const auto& m : messages) {
                ws.write(net::buffer(m.dump()), ec);
                if (ec) return;
            }
        };
        {
            std::lock_guard busy(conn->busy);
            std::vector<json> hello;
            manager_.with_session(id, [&](Session& s) { hello.push_back(s.hello()); });
            send_all(hello);
        }
        while (!ec) {
            beast::flat_buffer in;
            ws.read(in, ec);
            if (ec) break;
            std::lock_guard busy(conn->busy);
            const auto text = beast::buffers_to_string(in.data());
            auto message = json::parse(text, nullptr, false);
            std::vector<json> replies;
            manager_.with_session(id, [&](Session& s) {
                replies = s.handle(message.is_discarded() ? json("not json") : message);
            });
            send_all(replies);
        }
        if (impl_->stopping) ws.close(websocket::close_code::going_away, ec);
        return;
    }

    if (req.method() != http::verb::get) {
        respond(http::status::method_not_allowed, "application/json", json{{"error", "GET only"}}.dump());
        return;
    }
    if (path == "/healthz") {
        const bool ok = !health_ || health_();
        respond(ok ? http::status::ok : http::status::service_unavailable, "application/json",
                json{{"status", ok ? "ok" : "degraded"},
                     {"sessions", manager_.size()},
                     {"wire", kWireVersion}}
                    .dump());
        return;
    }
    if (path.rfind("/frames/", 0) == 0) {
        const auto name = url_decode(path.substr(8));
        const std::filesystem::path file = config_.frames_dir / name;
        if (config_.frames_dir.empty() || name.empty() || name.find('/') != std::string::npos ||
            name.find("..") != std::string::npos || !std::filesystem::is_regular_file(file)) {
            respond(http::status::not_found, "application/json", json{{"error", "no such frame"}}.dump());
            return;
        }
        std::ifstream in(file, std::ios::binary);
        std::stringstream body;
        body << in.rdbuf();
        respond(http::status::ok, mime_type(file), body.str());
        return;
    }
    respond(http::status::not_found, "application/json", json{{"error", "no such endpoint"}}.dump());
}

}  // namespace ipi
