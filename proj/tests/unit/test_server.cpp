#include <boost/asio/connect.hpp>
#include <boost/asio/ip/tcp.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>
#include <gtest/gtest.h>

#include "ipi/error.hpp"
#include "ipi/server.hpp"
#include "support.hpp"

using namespace ipi;
using nlohmann::json;

namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
namespace net = boost::asio;
using tcp = net::ip::tcp;

namespace {

std::shared_ptr<const ScriptedTrace> demo_trace() {
    static const auto t =
        std::make_shared<const ScriptedTrace>(load_trace(ipi::testing::data_dir() / "demo" / "trace.json"));
    return t;
}

struct Fixture {
    ipi::testing::TempDir frames;
    std::atomic<bool> healthy{true};
    std::unique_ptr<Server> server;

    Fixture() {
        std::ofstream(frames.path / "1.jpg", std::ios::binary) << "JPEGDATA";
        std::ofstream(frames.path / "2.jpg", std::ios::binary) << "JPEGDAT2";
        ServerConfig c;
        c.port = 0;
        c.frames_dir = frames.path;
        server = std::make_unique<Server>(c, [] { return make_scripted_backends(demo_trace()); },
                                          [this] { return healthy.load(); });
        server->start();
    }
};

http::response<http::string_body> get(unsigned short port, const std::string& target) {
    net::io_context ioc;
    tcp::socket socket(ioc);
    socket.connect({net::ip::make_address("127.0.0.1"), port});
    http::request<http::string_body> req{http::verb::get, target, 11};
    req.set(http::field::host, "127.0.0.1");
    http::write(socket, req);
    beast::flat_buffer buffer;
    http::response<http::string_body> res;
    http::read(socket, buffer, res);
    return res;
}

struct WsClient {
    net::io_context ioc;
    websocket::stream<tcp::socket> ws{ioc};

    void connect(unsigned short port, const std::string& target) {
        ws.next_layer().connect({net::ip::make_address("127.0.0.1"), port});
        ws.handshake("127.0.0.1", target);
    }
    json read() {
        beast::flat_buffer b;
        ws.read(b);
        return json::parse(beast::buffers_to_string(b.data()));
    }
    void write(const json& j) { ws.write(net::buffer(j.dump())); }
};

}  // namespace

TEST(Server, Healthz) {
    Fixture f;
    auto res = get(f.server->port(), "/healthz");
    EXPECT_EQ(res.result(), http::status::ok);
    auto body = json::parse(res.body());
    EXPECT_EQ(body["status"], "ok");
    EXPECT_EQ(body["wire"], kWireVersion);
    f.healthy = false;
    res = get(f.server->port(), "/healthz");
    EXPECT_EQ(res.result(), http::status::service_unavailable);
    EXPECT_EQ(json::parse(res.body())["status"], "degraded");
}

TEST(Server, FramesRoute) {
    Fixture f;
    auto res = get(f.server->port(), "/frames/1.jpg");
    EXPECT_EQ(res.result(), http::status::ok);
    EXPECT_EQ(res.body(), "JPEGDATA");
    EXPECT_EQ(res[http::field::content_type], "image/jpeg");
    EXPECT_EQ(get(f.server->port(), "/frames/..%2F..%2Fetc%2Fpasswd").result(), http::status::not_found);
    EXPECT_EQ(get(f.server->port(), "/frames/../1.jpg").result(), http::status::not_found);
    EXPECT_EQ(get(f.server->port(), "/frames/9.jpg").result(), http::status::not_found);
    EXPECT_EQ(get(f.server->port(), "/nothing").result(), http::status::not_found);
}

TEST(Server, WebSocketSession) {
    Fixture f;
    WsClient c;
    c.connect(f.server->port(), "/session?mode=no_gating&frames=synthetic&length=300");
    const auto hello = c.read();
    EXPECT_EQ(hello["type"], "session_config");
    EXPECT_EQ(hello["payload"]["mode"], "no_gating");
    const auto id = hello["payload"]["session_id"].get<std::string>();
    c.write({{"type", "tick"}, {"seq", 1}, {"payload", {{"tick", 1}}}});
    auto m = c.read();
    EXPECT_EQ(m["type"], "gate_telemetry");
    EXPECT_EQ(m["ack"], 1);
    c.write({{"type", "utterance"}, {"seq", 2}, {"payload", {{"text", "Kettle."}, {"event_id", "demo-1"}}}});
    m = c.read();
    EXPECT_EQ(m["type"], "task_state");
    c.write(json("garbage"));
    m = c.read();
    EXPECT_EQ(m["payload"]["code"], "malformed");
    c.ws.close(websocket::close_code::normal);

    // Reattach to the same session.
    WsClient again;
    again.connect(f.server->port(), "/session?session_id=" + id);
    auto h2 = again.read();
    EXPECT_EQ(h2["payload"]["tick"], 1);
    again.write({{"type", "tick"}, {"seq", 3}});
    EXPECT_EQ(again.read()["payload"]["tick"], 2);
    again.ws.close(websocket::close_code::normal);
}

TEST(Server, RefusesUnknownSessionAndBadOverrides) {
    Fixture f;
    WsClient c;
    try {
        c.connect(f.server->port(), "/session?session_id=s-999");
        FAIL() << "handshake should be refused";
    } catch (const beast::system_error& e) {
        EXPECT_EQ(e.code(), websocket::error::upgrade_declined);
    }
    WsClient d;
    EXPECT_THROW(d.connect(f.server->port(), "/session?theta_low=0.9&theta_high=0.1"), beast::system_error);
    WsClient e;
    EXPECT_THROW(e.connect(f.server->port(), "/elsewhere"), beast::system_error);
}

TEST(Server, PortInUseIsConfigError) {
    Fixture f;
    ServerConfig c;
    c.port = f.server->port();
    Server second(c, [] { return make_scripted_backends(demo_trace()); }, nullptr);
    EXPECT_THROW(second.start(), ConfigError);
}

TEST(Server, StopDrainsOpenConnections) {
    Fixture f;
    WsClient c;
    c.connect(f.server->port(), "/session");
    c.read();
    c.write({{"type", "tick"}, {"seq", 1}});
    c.read();
    f.server->stop();
    beast::flat_buffer b;
    beast::error_code ec;
    c.ws.read(b, ec);
    EXPECT_TRUE(ec);
    EXPECT_EQ(f.server->sessions().size(), 1u);
}

TEST(Server, ListenParsing) {
    EXPECT_EQ(parse_listen("0.0.0.0:9000"), (std::pair<std::string, unsigned short>{"0.0.0.0", 9000}));
    EXPECT_EQ(parse_listen(":81"), (std::pair<std::string, unsigned short>{"127.0.0.1", 81}));
    EXPECT_EQ(parse_listen("8080").second, 8080);
    EXPECT_THROW(parse_listen("host:port"), ConfigError);
    EXPECT_THROW(parse_listen("h:70000"), ConfigError);
}
