#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cstdio>
#include <json.hpp>
#include <string>
#include <thread>

#include "lads/error.hpp"
#include "lads/server.hpp"

using namespace lads;
using json = nlohmann::json;

namespace {

// Minimal line-oriented client for the tests.
class Client {
  public:
    explicit Client(std::uint16_t port) {
        fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
        REQUIRE(fd_ >= 0);
        sockaddr_in addr{};
        addr.sin_family = AF_INET;
        addr.sin_port = htons(port);
        REQUIRE(::inet_pton(AF_INET, "127.0.0.1", &addr.sin_addr) == 1);
        REQUIRE(::connect(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) == 0);
    }
    ~Client() {
        if (fd_ >= 0) ::close(fd_);
    }

    json call(const json& req) { return call_raw(req.dump()); }

    json call_raw(const std::string& payload) {
        std::string line = payload + "\n";
        std::size_t sent = 0;
        while (sent < line.size()) {
            ssize_t n = ::send(fd_, line.data() + sent, line.size() - sent, 0);
            REQUIRE(n > 0);
            sent += static_cast<std::size_t>(n);
        }
        while (buf_.find('\n') == std::string::npos) {
            char chunk[512];
            ssize_t n = ::recv(fd_, chunk, sizeof(chunk), 0);
            REQUIRE(n > 0);
            buf_.append(chunk, static_cast<std::size_t>(n));
        }
        std::size_t pos = buf_.find('\n');
        std::string reply = buf_.substr(0, pos);
        buf_.erase(0, pos + 1);
        return json::parse(reply);
    }

  private:
    int fd_ = -1;
    std::string buf_;
};

GatewayConfig test_cfg() {
    GatewayConfig cfg;
    cfg.mode = GatewayMode::conditional;
    cfg.seed_spec = SeedSpec(0xfeedbeefcafe1234ull, perm_id::keyed_mix);
    cfg.noise_dim = 3;
    cfg.alpha = 1.0;
    cfg.fresh_key = 7;
    cfg.bucket_model =
        BucketModel::nearest_center({{2.0, 0.0}, {-2.0, 0.0}}, 1.0);
    return cfg;
}

}  // namespace

TEST_CASE("serve over the wire matches direct gateway calls") {
    Gateway direct(test_cfg());
    Gateway served(test_cfg());
    Server server(served, "127.0.0.1", 0);
    server.start();
    REQUIRE(server.port() != 0);

    Client cli(server.port());
    CHECK(cli.call({{"op", "ping"}})["ok"] == true);

    json r = cli.call({{"op", "serve"}, {"account", "alice"}, {"embedding", {1.8, 0.2}}});
    ServeResult want = direct.serve_conditional("alice", {1.8, 0.2});
    CHECK(r["bucket"] == want.bucket);
    CHECK(r["depth"] == want.depth);
    CHECK(r["seed_hex"] == seed_to_hex(want.seed));
    REQUIRE(r["noise"].size() == want.noise.size());
    for (std::size_t i = 0; i < want.noise.size(); ++i)
        CHECK(r["noise"][static_cast<int>(i)].get<double>() == want.noise[i]);

    // Depth advances across separate connections (state lives in the gateway).
    Client cli2(server.port());
    json r2 = cli2.call({{"op", "serve"}, {"account", "alice"}, {"embedding", {2.2, -0.2}}});
    CHECK(r2["depth"] == 2);

    server.stop();
}

TEST_CASE("errors come back as JSON and keep the connection usable") {
    Gateway gw(test_cfg());
    Server server(gw, "127.0.0.1", 0);
    server.start();
    Client cli(server.port());

    json bad = cli.call_raw("this is not json");
    CHECK(bad.contains("error"));
    CHECK(bad["code"] == "invalid_argument");

    json wrong_mode = cli.call({{"op", "serve_simple"}, {"account", "alice"}});
    CHECK(wrong_mode["code"] == "unknown_mode");

    json no_dim = cli.call({{"op", "serve"}, {"account", "alice"}, {"embedding", {1.0}}});
    CHECK(no_dim["code"] == "dimension_mismatch");

    json unknown = cli.call({{"op", "frobnicate"}});
    CHECK(unknown["code"] == "invalid_argument");

    // The same connection still serves real requests afterwards.
    json ok = cli.call({{"op", "serve"}, {"account", "alice"}, {"embedding", {2.0, 0.0}}});
    CHECK(ok["depth"] == 1);
    server.stop();
}

TEST_CASE("reset_stage and snapshot ops work over the wire") {
    std::string snap_path = "test_server_op.snap";
    Gateway gw(test_cfg());
    Server server(gw, "127.0.0.1", 0);
    server.start();
    Client cli(server.port());

    cli.call({{"op", "serve"}, {"account", "alice"}, {"embedding", {2.0, 0.0}}});
    json snap = cli.call({{"op", "snapshot"}, {"path", snap_path}});
    CHECK(snap["ok"] == true);

    json reset = cli.call({{"op", "reset_stage"}});
    CHECK(reset["stage_id"] == 2);
    json after = cli.call({{"op", "serve"}, {"account", "alice"}, {"embedding", {2.0, 0.0}}});
    CHECK(after["depth"] == 1);

    // The snapshot taken before the reset restores depth 2 for alice.
    Gateway restored = Gateway::restore_file(snap_path, test_cfg().bucket_model);
    CHECK(restored.serve_conditional("alice", {2.0, 0.0}).depth == 2);
    std::remove(snap_path.c_str());
    server.stop();
}

TEST_CASE("shutdown op wakes wait() and the stop snapshot restores state") {
    std::string snap_path = "test_server_stop.snap";
    std::remove(snap_path.c_str());
    {
        Gateway gw(test_cfg());
        Server server(gw, "127.0.0.1", 0, snap_path);
        server.start();
        std::uint16_t port = server.port();
        std::thread requester([port] {
            Client cli(port);
            cli.call({{"op", "serve"}, {"account", "alice"}, {"embedding", {2.0, 0.0}}});
            cli.call({{"op", "serve"}, {"account", "alice"}, {"embedding", {2.0, 0.0}}});
            json bye = cli.call({{"op", "shutdown"}});
            CHECK(bye["ok"] == true);
        });
        server.wait();
        server.stop();
        requester.join();
    }
    // Restart path: a fresh server over the restored gateway continues depths.
    ServeAppConfig app;
    app.gateway = test_cfg();
    app.restore_from = snap_path;
    Gateway gw2 = make_gateway(app);
    Server server2(gw2, "127.0.0.1", 0);
    server2.start();
    Client cli(server2.port());
    json r = cli.call({{"op", "serve"}, {"account", "alice"}, {"embedding", {2.0, 0.0}}});
    CHECK(r["depth"] == 3);
    server2.stop();
    std::remove(snap_path.c_str());
}

TEST_CASE("serve config parsing") {
    ServeAppConfig app = parse_serve_config(R"({
        "mode": "conditional",
        "seed_spec": "000000000000002a0000000000000001",
        "noise_dim": 5,
        "alpha": 0.9,
        "stage_cap": 100,
        "fresh_seed": 9,
        "snapshot_path": "out.snap",
        "bucket_model": {"mode":"nearest_center","radius":1.0,
                         "centers":[[2.0,0.0],[-2.0,0.0]]}
    })");
    CHECK(app.gateway.mode == GatewayMode::conditional);
    CHECK(app.gateway.seed_spec.key() == 42);
    CHECK(app.gateway.noise_dim == 5);
    CHECK(app.gateway.alpha == 0.9);
    CHECK(app.gateway.stage_cap == 100);
    CHECK(app.gateway.fresh_key == 9);
    CHECK(app.snapshot_path == "out.snap");
    REQUIRE(app.gateway.bucket_model.has_value());
    CHECK(app.gateway.bucket_model->bucket_space() == 2);

    const std::string spec_hex = "00000000000000010000000000000001";
    CHECK_THROWS_AS(parse_serve_config("{}"), error);
    CHECK_THROWS_AS(parse_serve_config(R"({"mode":"simple","seed_spec":")" + spec_hex +
                                       R"(","noise_dim":1,"alpha":2.0})"),
                    error);
    CHECK_THROWS_AS(parse_serve_config(R"({"mode":"conditional","seed_spec":")" + spec_hex +
                                       R"(","noise_dim":1,"alpha":1.0})"),
                    error);
    CHECK_THROWS_AS(parse_serve_config("not json"), error);

    ServeAppConfig simple = parse_serve_config(
        R"({"mode":"simple","seed_spec":")" + spec_hex + R"(","noise_dim":1,"alpha":0.7})");
    CHECK(simple.gateway.mode == GatewayMode::simple);
    CHECK(simple.gateway.noise_dim == 1);
    CHECK(!simple.gateway.bucket_model.has_value());
}
