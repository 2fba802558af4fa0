#include <netdb.h>
#include <sys/socket.h>
#include <unistd.h>

#include <atomic>
#include <cmath>
#include <csignal>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "lads/error.hpp"
#include "lads/pipeline.hpp"
#include "lads/server.hpp"
#include "lads/stats.hpp"
#include "lads/verify.hpp"

namespace {

enum class LogLevel { debug = 0, info = 1, warn = 2, error = 3, silent = 4 };

LogLevel g_log_level = LogLevel::info;

LogLevel log_level_from_env() {
    const char* raw = std::getenv("LADS_LOG_LEVEL");
    if (!raw) return LogLevel::info;
    std::string v(raw);
    if (v == "debug") return LogLevel::debug;
    if (v == "info") return LogLevel::info;
    if (v == "warn") return LogLevel::warn;
    if (v == "error") return LogLevel::error;
    if (v == "silent") return LogLevel::silent;
    return LogLevel::info;
}

void log_at(LogLevel level, const std::string& msg) {
    static const char* names[] = {"debug", "info", "warn", "error"};
    if (level < g_log_level || level == LogLevel::silent) return;
    std::cerr << "lads [" << names[static_cast<int>(level)] << "] " << msg << "\n";
}

// host:port with the port after the last colon, so bare IPv6 needs brackets.
std::pair<std::string, std::uint16_t> parse_addr(const std::string& addr) {
    auto pos = addr.rfind(':');
    if (pos == std::string::npos || pos + 1 == addr.size())
        throw lads::error(lads::errc::invalid_argument, "address must be host:port");
    std::string host = addr.substr(0, pos);
    if (host.size() >= 2 && host.front() == '[' && host.back() == ']')
        host = host.substr(1, host.size() - 2);
    unsigned long port = std::stoul(addr.substr(pos + 1));
    if (port == 0 || port > 65535)
        throw lads::error(lads::errc::invalid_argument, "port out of range");
    return {host, static_cast<std::uint16_t>(port)};
}

// Self-pipe so the signal handler stays async-signal-safe; a helper thread
// turns the byte into a proper Server::stop().
int g_signal_pipe[2] = {-1, -1};

extern "C" void forward_signal(int) {
    char byte = 1;
    [[maybe_unused]] ssize_t n = ::write(g_signal_pipe[1], &byte, 1);
}

int cmd_serve(const std::string& config_path, const std::string& listen) {
    lads::ServeAppConfig cfg = lads::load_serve_config(config_path);
    lads::Gateway gateway = lads::make_gateway(cfg);
    auto [host, port] = parse_addr(listen);

    lads::Server server(gateway, host, port, cfg.snapshot_path);
    server.start();
    log_at(LogLevel::info, "listening on " + host + ":" + std::to_string(server.port()));

    if (::pipe(g_signal_pipe) != 0)
        throw lads::error(lads::errc::io_error, "cannot create signal pipe");
    std::signal(SIGINT, forward_signal);
    std::signal(SIGTERM, forward_signal);
    std::thread stopper([&server] {
        char byte = 0;
        if (::read(g_signal_pipe[0], &byte, 1) == 1 && byte == 1) {
            log_at(LogLevel::info, "signal received, shutting down");
            server.stop();
        }
    });

    server.wait();   // returns on signal-driven stop or client shutdown op
    server.stop();   // idempotent; covers the client-initiated path
    char done = 0;   // unblock the stopper if no signal ever arrived
    [[maybe_unused]] ssize_t n = ::write(g_signal_pipe[1], &done, 1);
    stopper.join();
    ::close(g_signal_pipe[0]);
    ::close(g_signal_pipe[1]);
    if (!cfg.snapshot_path.empty())
        log_at(LogLevel::info, "state snapshot written to " + cfg.snapshot_path);
    return 0;
}

int cmd_simulate(const std::string& config_path, const std::string& preset,
                 const std::string& out_dir, std::int64_t seed, std::size_t parallelism) {
    lads::SimulateSpec spec;
    std::string note;
    if (!config_path.empty()) {
        std::ifstream in(config_path);
        if (!in) throw lads::error(lads::errc::io_error, "cannot read " + config_path);
        std::ostringstream buf;
        buf << in.rdbuf();
        nlohmann::json parsed = nlohmann::json::parse(buf.str(), nullptr, false);
        if (parsed.is_discarded())
            throw lads::error(lads::errc::config_invalid, "sweep spec is not valid JSON");
        spec = lads::SimulateSpec::from_json(parsed);
        note = config_path;
    } else {
        spec = lads::SimulateSpec::preset(preset);
        note = "preset:" + preset;
    }
    if (seed >= 0) spec.sweep.base.master_seed = static_cast<std::uint64_t>(seed);
    if (parallelism > 0) spec.sweep.parallelism = parallelism;

    lads::SimulateOutcome outcome = lads::simulate_to_dir(spec, out_dir, note);
    log_at(LogLevel::info, "results: " + outcome.csv_path);
    log_at(LogLevel::info, "summary: " + outcome.summary_path);
    std::cout << outcome.report.summary_json() << "\n";
    for (const std::string& failure : outcome.failures)
        log_at(LogLevel::error, "assertion failed: " + failure);
    return outcome.failures.empty() ? 0 : 1;
}

int cmd_verify(const std::vector<std::string>& only, std::size_t parallelism,
               const std::string& out_path, bool collapse_seeds) {
    lads::VerifyOptions opts;
    opts.only = only;
    opts.parallelism = parallelism;
    if (collapse_seeds) opts.seed_permutation = lads::perm_id::collapse_for_tests;

    lads::VerifySuite suite(opts);
    std::vector<lads::CheckResult> results = suite.run();
    std::cout << lads::render_report(results) << std::flush;
    if (!out_path.empty()) {
        std::ofstream out(out_path, std::ios::binary);
        out << lads::report_json(results) << "\n";
        if (!out) throw lads::error(lads::errc::io_error, "cannot write " + out_path);
        log_at(LogLevel::info, "report written to " + out_path);
    }
    return lads::all_passed(results) ? 0 : 1;
}

int cmd_verify_lossless(const std::string& config_path, std::size_t samples) {
    lads::ServeAppConfig cfg = lads::load_serve_config(config_path);
    lads::Gateway gateway = lads::make_gateway(cfg);

    std::vector<double> coords;
    coords.reserve(samples);
    while (coords.size() < samples) {
        lads::ServeResult res = gateway.serve_simple("verify-lossless");
        for (double v : res.noise) {
            if (coords.size() == samples) break;
            coords.push_back(v);
        }
    }
    lads::stats::TestResult ks =
        lads::stats::ks_test(coords, lads::stats::Reference::std_normal, 0.01);
    double limit = 3.0 / std::sqrt(static_cast<double>(coords.size()));
    nlohmann::json lags = nlohmann::json::array();
    bool autocorr_ok = true;
    for (std::size_t lag = 1; lag <= 5; ++lag) {
        double ac = lads::stats::autocorrelation(coords, lag);
        autocorr_ok = autocorr_ok && std::fabs(ac) <= limit;
        lags.push_back(ac);
    }
    bool pass = ks.pass && autocorr_ok;
    nlohmann::json record = {
        {"alpha", cfg.gateway.alpha},
        {"samples", coords.size()},
        {"ks", {{"statistic", ks.statistic}, {"critical", ks.critical}, {"pass", ks.pass}}},
        {"autocorrelation", {{"lags", lags}, {"limit", limit}, {"pass", autocorr_ok}}},
        {"pass", pass},
    };
    std::cout << record.dump(2) << "\n";
    return pass ? 0 : 1;
}

int cmd_snapshot(const std::string& out_path, const std::string& connect) {
    auto [host, port] = parse_addr(connect);
    struct addrinfo hints = {};
    hints.ai_family = AF_UNSPEC;
    hints.ai_socktype = SOCK_STREAM;
    struct addrinfo* res = nullptr;
    if (::getaddrinfo(host.c_str(), std::to_string(port).c_str(), &hints, &res) != 0 || !res)
        throw lads::error(lads::errc::io_error, "cannot resolve " + connect);
    int fd = ::socket(res->ai_family, res->ai_socktype, res->ai_protocol);
    if (fd < 0 || ::connect(fd, res->ai_addr, res->ai_addrlen) != 0) {
        ::freeaddrinfo(res);
        if (fd >= 0) ::close(fd);
        throw lads::error(lads::errc::io_error, "cannot connect to " + connect);
    }
    ::freeaddrinfo(res);

    nlohmann::json request = {{"op", "snapshot"}, {"path", out_path}};
    std::string line = request.dump() + "\n";
    if (::write(fd, line.data(), line.size()) != static_cast<ssize_t>(line.size())) {
        ::close(fd);
        throw lads::error(lads::errc::io_error, "request write failed");
    }
    std::string reply;
    char c;
    while (::read(fd, &c, 1) == 1 && c != '\n') reply += c;
    ::close(fd);

    nlohmann::json parsed = nlohmann::json::parse(reply, nullptr, false);
    if (parsed.is_discarded() || parsed.contains("error")) {
        log_at(LogLevel::error, "snapshot failed: " + reply);
        return 1;
    }
    log_at(LogLevel::info, "snapshot written to " + out_path);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    g_log_level = log_level_from_env();

    CLI::App app{"deterministic anti-distillation sampling toolkit"};
    app.require_subcommand(1);

    auto* serve = app.add_subcommand("serve", "run the sampling gateway service");
    std::string serve_config;
    std::string listen = "127.0.0.1:8787";
    serve->add_option("--config", serve_config, "service config file")->required();
    serve->add_option("--listen", listen, "host:port to bind");

    auto* simulate = app.add_subcommand("simulate", "run a distillation scaling sweep");
    std::string sim_config, sim_preset = "prop1", sim_out = "out";
    std::int64_t sim_seed = -1;
    std::size_t sim_par = 0;
    simulate->add_option("--config", sim_config, "sweep spec file (overrides --preset)");
    simulate->add_option("--preset", sim_preset, "named built-in sweep (default prop1)");
    simulate->add_option("--out-dir", sim_out, "output directory");
    simulate->add_option("--seed", sim_seed, "master seed override");
    simulate->add_option("--parallelism", sim_par, "worker threads (0 = cores)");

    auto* verify = app.add_subcommand("verify", "run the acceptance suite");
    std::vector<std::string> only;
    std::string verify_out;
    std::size_t verify_par = 0;
    bool collapse_seeds = false;
    verify->add_option("--only", only, "substring filter on check ids (repeatable)");
    verify->add_option("--out", verify_out, "write the JSON report here");
    verify->add_option("--parallelism", verify_par, "worker threads (0 = cores)");
    verify->add_flag("--collapse-seeds", collapse_seeds,
                     "sabotage the seed generator; the suite must then fail")
        ->group("");  // self-test hook, hidden from help

    auto* lossless = app.add_subcommand("verify-lossless", "marginal tests on served noise");
    std::string lossless_config;
    std::size_t lossless_samples = 100000;
    lossless->add_option("--config", lossless_config, "service config file")->required();
    lossless->add_option("--samples", lossless_samples, "noise coordinates to draw");

    auto* snapshot = app.add_subcommand("snapshot", "ask a running service to persist state");
    std::string snap_out;
    std::string snap_connect = "127.0.0.1:8787";
    snapshot->add_option("--out", snap_out, "snapshot file path (server side)")->required();
    snapshot->add_option("--connect", snap_connect, "service address");

    CLI11_PARSE(app, argc, argv);

    try {
        if (serve->parsed()) return cmd_serve(serve_config, listen);
        if (simulate->parsed())
            return cmd_simulate(sim_config, sim_preset, sim_out, sim_seed, sim_par);
        if (verify->parsed()) return cmd_verify(only, verify_par, verify_out, collapse_seeds);
        if (lossless->parsed()) return cmd_verify_lossless(lossless_config, lossless_samples);
        if (snapshot->parsed()) return cmd_snapshot(snap_out, snap_connect);
    } catch (const lads::error& e) {
        log_at(LogLevel::error, e.what());
        return 2;
    } catch (const std::exception& e) {
        log_at(LogLevel::error, e.what());
        return 2;
    }
    return 0;
}
