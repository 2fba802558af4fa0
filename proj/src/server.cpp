#include "lads/server.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>

#include <json.hpp>

#include "lads/error.hpp"

namespace lads {
namespace {

nlohmann::json error_json(errc code, const std::string& what) {
    return nlohmann::json{{"error", what}, {"code", error::code_name(code)}};
}

nlohmann::json serve_json(const ServeResult& r) {
    return nlohmann::json{{"bucket", r.bucket},
                          {"depth", r.depth},
                          {"seed_hex", seed_to_hex(r.seed)},
                          {"noise", r.noise}};
}

}  // namespace

std::string seed_to_hex(Seed seed) {
    static const char* digits = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 0; i < 16; ++i) out[i] = digits[(seed.value >> (60 - 4 * i)) & 0xf];
    return out;
}

ServeAppConfig parse_serve_config(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw error(errc::config_invalid, std::string("serve config parse: ") + e.what());
    }
    try {
        ServeAppConfig cfg;
        std::string mode = j.value("mode", "simple");
        if (mode == "simple") cfg.gateway.mode = GatewayMode::simple;
        else if (mode == "conditional") cfg.gateway.mode = GatewayMode::conditional;
        else throw error(errc::unknown_mode, "mode must be simple or conditional");
        cfg.gateway.seed_spec = SeedSpec::from_hex(j.at("seed_spec").get<std::string>());
        cfg.gateway.noise_dim = j.at("noise_dim").get<std::size_t>();
        cfg.gateway.alpha = j.at("alpha").get<double>();
        cfg.gateway.stage_cap = j.value("stage_cap", std::uint64_t{0});
        if (j.contains("fresh_seed"))
            cfg.gateway.fresh_key = j.at("fresh_seed").get<std::uint64_t>();
        else {
            std::random_device rd;
            cfg.gateway.fresh_key =
                (static_cast<std::uint64_t>(rd()) << 32) ^ static_cast<std::uint64_t>(rd());
        }
        if (j.contains("bucket_model"))
            cfg.gateway.bucket_model = BucketModel::from_text(j.at("bucket_model").dump());
        else if (j.contains("bucket_model_file"))
            cfg.gateway.bucket_model =
                BucketModel::load(j.at("bucket_model_file").get<std::string>());
        cfg.snapshot_path = j.value("snapshot_path", "");
        cfg.restore_from = j.value("restore_from", "");
        cfg.gateway.validate();
        return cfg;
    } catch (const nlohmann::json::exception& e) {
        throw error(errc::config_invalid, std::string("serve config fields: ") + e.what());
    }
}

ServeAppConfig load_serve_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw error(errc::io_error, "cannot open serve config: " + path);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return parse_serve_config(text);
}

Gateway make_gateway(const ServeAppConfig& cfg) {
    if (!cfg.restore_from.empty() && std::filesystem::exists(cfg.restore_from))
        return Gateway::restore_file(cfg.restore_from, cfg.gateway.bucket_model);
    return Gateway(cfg.gateway);
}

Server::Server(Gateway& gateway, std::string host, std::uint16_t port,
               std::string snapshot_on_stop)
    : gateway_(gateway),
      host_(std::move(host)),
      port_(port),
      snapshot_on_stop_(std::move(snapshot_on_stop)) {}

Server::~Server() { stop(); }

void Server::start() {
    listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
    if (listen_fd_ < 0) throw error(errc::io_error, "socket() failed");
    int one = 1;
    ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(port_);
    if (::inet_pton(AF_INET, host_.c_str(), &addr.sin_addr) != 1) {
        ::close(listen_fd_);
        listen_fd_ = -1;
        throw error(errc::config_invalid, "listen address must be an IPv4 literal: " + host_);
    }
    if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
        ::close(listen_fd_);
        listen_fd_ = -1;
        throw error(errc::io_error, "bind failed on " + host_ + ":" + std::to_string(port_));
    }
    if (::listen(listen_fd_, 64) != 0) {
        ::close(listen_fd_);
        listen_fd_ = -1;
        throw error(errc::io_error, "listen failed");
    }
    socklen_t len = sizeof(addr);
    ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&addr), &len);
    port_ = ntohs(addr.sin_port);
    running_.store(true);
    accept_thread_ = std::thread([this] { accept_loop(); });
}

void Server::accept_loop() {
    while (running_.load()) {
        int fd = ::accept(listen_fd_, nullptr, nullptr);
        if (fd < 0) {
            if (!running_.load()) break;
            continue;
        }
        std::lock_guard<std::mutex> lock(clients_mu_);
        if (!running_.load()) {
            ::close(fd);
            break;
        }
        client_fds_.push_back(fd);
        client_threads_.emplace_back([this, fd] { client_loop(fd); });
    }
}

void Server::client_loop(int fd) {
    std::string buf;
    char chunk[4096];
    for (;;) {
        ssize_t n = ::recv(fd, chunk, sizeof(chunk), 0);
        if (n <= 0) break;
        buf.append(chunk, static_cast<std::size_t>(n));
        std::size_t pos;
        while ((pos = buf.find('\n')) != std::string::npos) {
            std::string line = buf.substr(0, pos);
            buf.erase(0, pos + 1);
            if (line.empty()) continue;
            std::string reply = handle_line(line);
            reply.push_back('\n');
            const char* p = reply.data();
            std::size_t left = reply.size();
            while (left > 0) {
                ssize_t w = ::send(fd, p, left, 0);
                if (w <= 0) return;
                p += w;
                left -= static_cast<std::size_t>(w);
            }
            if (stop_requested_.load()) {
                // Reply is flushed; wake the owner so it can stop the server.
                stop_cv_.notify_all();
                return;
            }
        }
    }
}

std::string Server::handle_line(const std::string& line) {
    nlohmann::json req;
    try {
        req = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
        return error_json(errc::invalid_argument, std::string("bad request line: ") + e.what())
            .dump();
    }
    try {
        std::string op = req.at("op").get<std::string>();
        if (op == "serve") {
            ServeResult r = gateway_.serve_conditional(
                req.at("account").get<std::string>(),
                req.at("embedding").get<QueryEmbedding>());
            return serve_json(r).dump();
        }
        if (op == "serve_simple") {
            ServeResult r = gateway_.serve_simple(req.at("account").get<std::string>());
            return serve_json(r).dump();
        }
        if (op == "reset_stage")
            return nlohmann::json{{"stage_id", gateway_.reset_stage()}}.dump();
        if (op == "snapshot") {
            std::string path = req.at("path").get<std::string>();
            gateway_.write_snapshot(path);
            return nlohmann::json{{"ok", true}, {"path", path}}.dump();
        }
        if (op == "ping") return nlohmann::json{{"ok", true}}.dump();
        if (op == "shutdown") {
            stop_requested_.store(true);
            return nlohmann::json{{"ok", true}}.dump();
        }
        return error_json(errc::invalid_argument, "unknown op: " + op).dump();
    } catch (const error& e) {
        return error_json(e.code(), e.what()).dump();
    } catch (const nlohmann::json::exception& e) {
        return error_json(errc::invalid_argument, std::string("bad request fields: ") + e.what())
            .dump();
    }
}

void Server::stop() {
    std::lock_guard<std::mutex> cleanup(cleanup_mu_);
    if (running_.exchange(false)) {
        if (listen_fd_ >= 0) {
            ::shutdown(listen_fd_, SHUT_RDWR);
            ::close(listen_fd_);
        }
        {
            std::lock_guard<std::mutex> lock(clients_mu_);
            for (int fd : client_fds_) ::shutdown(fd, SHUT_RDWR);
        }
        if (accept_thread_.joinable()) accept_thread_.join();
        std::vector<std::thread> threads;
        {
            std::lock_guard<std::mutex> lock(clients_mu_);
            threads.swap(client_threads_);
        }
        for (std::thread& t : threads)
            if (t.joinable()) t.join();
        {
            std::lock_guard<std::mutex> lock(clients_mu_);
            for (int fd : client_fds_) ::close(fd);
            client_fds_.clear();
        }
        listen_fd_ = -1;
        if (!snapshot_on_stop_.empty()) gateway_.write_snapshot(snapshot_on_stop_);
    }
    {
        std::lock_guard<std::mutex> lock(stop_mu_);
        stopped_ = true;
    }
    stop_cv_.notify_all();
}

void Server::wait() {
    std::unique_lock<std::mutex> lock(stop_mu_);
    stop_cv_.wait(lock, [this] { return stopped_ || stop_requested_.load(); });
}

}  // namespace lads
