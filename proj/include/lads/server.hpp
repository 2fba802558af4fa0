#pragma once

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "lads/gateway.hpp"

namespace lads {

// Service-side configuration: the gateway parameters plus persistence paths.
struct ServeAppConfig {
    GatewayConfig gateway;
    std::string snapshot_path;  // written on graceful shutdown when non-empty
    std::string restore_from;   // restored at startup when the file exists
};

// Parses the `lads serve` JSON config text.
ServeAppConfig parse_serve_config(const std::string& text);
ServeAppConfig load_serve_config(const std::string& path);

// Builds the gateway a config describes, restoring from `restore_from`
// when that snapshot file exists.
Gateway make_gateway(const ServeAppConfig& cfg);

// Newline-delimited JSON over TCP. Requests:
//   {"op":"serve","account":A,"embedding":[...]}
//   {"op":"serve_simple","account":A}
//   {"op":"reset_stage"} | {"op":"snapshot","path":P} | {"op":"ping"} | {"op":"shutdown"}
// Responses: {"bucket","depth","seed_hex","noise"} or {"stage_id"} or
// {"ok":true,...} or {"error","code"}. A malformed line answers an error and
// keeps the connection open.
class Server {
  public:
    Server(Gateway& gateway, std::string host, std::uint16_t port,
           std::string snapshot_on_stop = "");
    ~Server();

    Server(const Server&) = delete;
    Server& operator=(const Server&) = delete;

    // Binds and starts accepting; throws on bind failure. Port 0 binds an
    // ephemeral port, readable via port() afterwards.
    void start();
    std::uint16_t port() const noexcept { return port_; }
    // Stops accepting, drains connections, writes the shutdown snapshot.
    // Must not be called from a connection handler; a "shutdown" op instead
    // wakes wait() so the owning thread can stop the server.
    void stop();
    // Blocks until stop() completes or a client requests shutdown.
    void wait();

  private:
    void accept_loop();
    void client_loop(int fd);
    std::string handle_line(const std::string& line);

    Gateway& gateway_;
    std::string host_;
    std::uint16_t port_;
    std::string snapshot_on_stop_;
    int listen_fd_ = -1;
    std::thread accept_thread_;
    std::mutex clients_mu_;
    std::vector<int> client_fds_;
    std::vector<std::thread> client_threads_;
    std::atomic<bool> running_{false};
    std::atomic<bool> stop_requested_{false};
    std::mutex cleanup_mu_;
    std::mutex stop_mu_;
    std::condition_variable stop_cv_;
    bool stopped_ = false;
};

std::string seed_to_hex(Seed seed);

}  // namespace lads
