// Command-line front end. Everything goes through the C API in mimosce.h;
// this file only handles flags, config files, and byte transports.
//
// Exit codes: 0 ok, 1 usage, 2 data error, 3 protocol error, 4 numeric.

#include <arpa/inet.h>
#include <csignal>
#include <fcntl.h>
#include <netdb.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "mimosce.h"

using nlohmann::json;

namespace {

constexpr int kExitUsage = 1;

int report_failure(int status) {
    std::fprintf(stderr, "mimosce: %s\n", msce_last_error());
    return status;
}

std::string take_string(char* s) {
    std::string out = s ? s : "";
    msce_string_free(s);
    return out;
}

json load_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw CLI::ValidationError("--config", "cannot open " + path);
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        std::fprintf(stderr, "mimosce: %s: %s\n", path.c_str(), e.what());
        std::exit(2);
    }
}

// ---- byte transports ----------------------------------------------------

struct Endpoint {
    std::string path;     // file path ("" = stdio)
    std::string host;     // TCP peer/interface
    int port = 0;
    bool tcp = false;
};

void split_host_port(const std::string& spec, Endpoint& ep) {
    const auto colon = spec.rfind(':');
    if (colon == std::string::npos || colon + 1 == spec.size())
        throw CLI::ValidationError("endpoint", "expected HOST:PORT, got " + spec);
    ep.host = spec.substr(0, colon);
    try {
        ep.port = std::stoi(spec.substr(colon + 1));
    } catch (const std::exception&) {
        ep.port = 0;
    }
    if (ep.port < 1 || ep.port > 65535)
        throw CLI::ValidationError("endpoint", "bad port in " + spec);
    ep.tcp = true;
}

struct Fd {
    int fd = -1;
    bool owned = false;
    ~Fd() {
        if (owned && fd >= 0) ::close(fd);
    }
};

int tcp_connect(const std::string& host, int port) {
    addrinfo hints{};
    hints.ai_family = AF_UNSPEC;
    hints.ai_socktype = SOCK_STREAM;
    addrinfo* res = nullptr;
    const std::string service = std::to_string(port);
    if (getaddrinfo(host.c_str(), service.c_str(), &hints, &res) != 0 || !res) {
        std::fprintf(stderr, "mimosce: cannot resolve %s\n", host.c_str());
        return -1;
    }
    std::unique_ptr<addrinfo, void (*)(addrinfo*)> guard(res, &freeaddrinfo);
    // The server may still be starting; retry briefly before giving up.
    for (int attempt = 0; attempt < 40; ++attempt) {
        for (addrinfo* ai = res; ai; ai = ai->ai_next) {
            int fd = ::socket(ai->ai_family, ai->ai_socktype, ai->ai_protocol);
            if (fd < 0) continue;
            if (::connect(fd, ai->ai_addr, ai->ai_addrlen) == 0) {
                // Small send buffer: backpressure from a stalled or dead
                // server surfaces here instead of vanishing into the kernel.
                int sndbuf = 64 * 1024;
                ::setsockopt(fd, SOL_SOCKET, SO_SNDBUF, &sndbuf, sizeof sndbuf);
                return fd;
            }
            ::close(fd);
        }
        std::this_thread::sleep_for(std::chrono::milliseconds(250));
    }
    std::fprintf(stderr, "mimosce: cannot connect to %s:%d\n", host.c_str(), port);
    return -1;
}

int tcp_accept_one(const std::string& host, int port) {
    addrinfo hints{};
    hints.ai_family = AF_UNSPEC;
    hints.ai_socktype = SOCK_STREAM;
    hints.ai_flags = AI_PASSIVE;
    addrinfo* res = nullptr;
    const std::string service = std::to_string(port);
    if (getaddrinfo(host.empty() ? nullptr : host.c_str(), service.c_str(), &hints, &res) != 0 ||
        !res) {
        std::fprintf(stderr, "mimosce: cannot resolve %s\n", host.c_str());
        return -1;
    }
    std::unique_ptr<addrinfo, void (*)(addrinfo*)> guard(res, &freeaddrinfo);
    int listener = -1;
    for (addrinfo* ai = res; ai; ai = ai->ai_next) {
        listener = ::socket(ai->ai_family, ai->ai_socktype, ai->ai_protocol);
        if (listener < 0) continue;
        int one = 1;
        ::setsockopt(listener, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
        if (::bind(listener, ai->ai_addr, ai->ai_addrlen) == 0 && ::listen(listener, 1) == 0)
            break;
        ::close(listener);
        listener = -1;
    }
    if (listener < 0) {
        std::fprintf(stderr, "mimosce: cannot listen on %s:%d\n", host.c_str(), port);
        return -1;
    }
    int fd = ::accept(listener, nullptr, nullptr);
    ::close(listener);
    if (fd < 0) std::fprintf(stderr, "mimosce: accept failed: %s\n", std::strerror(errno));
    return fd;
}

int64_t fd_sink(void* user, const void* data, int64_t count) {
    int fd = static_cast<Fd*>(user)->fd;
    for (;;) {
        ssize_t n = ::write(fd, data, static_cast<std::size_t>(count));
        if (n >= 0) return n;
        if (errno != EINTR) return -1;
    }
}

int64_t fd_source(void* user, void* buf, int64_t cap) {
    int fd = static_cast<Fd*>(user)->fd;
    for (;;) {
        ssize_t n = ::read(fd, buf, static_cast<std::size_t>(cap));
        if (n >= 0) return n;
        if (errno != EINTR) return -1;
    }
}

// Opens the sink described by --out/--connect; stdout when neither is set.
bool open_sink(const Endpoint& ep, Fd& fd) {
    if (ep.tcp) {
        fd.fd = tcp_connect(ep.host, ep.port);
        fd.owned = true;
        return fd.fd >= 0;
    }
    if (!ep.path.empty()) {
        fd.fd = ::open(ep.path.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
        fd.owned = true;
        if (fd.fd < 0) std::fprintf(stderr, "mimosce: cannot open %s\n", ep.path.c_str());
        return fd.fd >= 0;
    }
    fd.fd = STDOUT_FILENO;
    return true;
}

bool open_source(const Endpoint& ep, Fd& fd) {
    if (ep.tcp) {
        fd.fd = tcp_accept_one(ep.host, ep.port);
        fd.owned = true;
        return fd.fd >= 0;
    }
    if (!ep.path.empty()) {
        fd.fd = ::open(ep.path.c_str(), O_RDONLY);
        fd.owned = true;
        if (fd.fd < 0) std::fprintf(stderr, "mimosce: cannot open %s\n", ep.path.c_str());
        return fd.fd >= 0;
    }
    fd.fd = STDIN_FILENO;
    return true;
}

// ---- model loading ------------------------------------------------------

struct ModelHandle {
    msce_model* model = nullptr;
    ~ModelHandle() { msce_model_free(model); }
};

}  // namespace

int main(int argc, char** argv) {
    // A dropped peer surfaces as a write error, not a fatal signal.
    std::signal(SIGPIPE, SIG_IGN);

    CLI::App app{"mimosce: multichannel speech compression and enhancement"};
    app.require_subcommand(1);

    // Shared option storage; each subcommand binds the flags it uses.
    std::string config_path, model_path, in_path, out_path, noise_path, geometry, manifest_path,
        pesq_path, listen_spec, connect_spec;
    std::uint64_t seed = 0;
    double snr_db = 0.0;
    int chunk = 4096;
    bool quantize = false, resume = false;
    long long steps_override = -1;

    auto* sim = app.add_subcommand("simulate", "Mono WAV -> simulated microphone-array WAV");
    sim->add_option("--in", in_path, "mono source WAV")->required();
    sim->add_option("--out", out_path, "multichannel output WAV")->required();
    sim->add_option("--geometry", geometry, "geometry JSON or @file (default: built-in array)");

    auto* mix = app.add_subcommand("mix", "Mix clean and noise at a target SNR");
    mix->add_option("--in", in_path, "clean WAV (single-pair mode)");
    mix->add_option("--noise", noise_path, "mono noise WAV (single-pair mode)");
    mix->add_option("--snr", snr_db, "target SNR in dB");
    mix->add_option("--out", out_path, "output WAV, or directory in manifest mode")->required();
    mix->add_option("--manifest", manifest_path, "dataset manifest (manifest mode)");
    mix->add_option("--seed", seed, "mixing seed");

    auto* train = app.add_subcommand("train", "Train a model from a run config");
    train->add_option("--config", config_path, "run config JSON")->required();
    auto* train_seed = train->add_option("--seed", seed, "override train.seed");
    auto* train_out = train->add_option("--out", out_path, "override checkpoint path");
    auto* train_steps = train->add_option("--steps", steps_override, "override train.steps");
    train->add_flag("--resume", resume, "resume from the checkpoint in the config");

    auto* enhance = app.add_subcommand("enhance", "Offline enhancement of a WAV");
    enhance->add_option("--model", model_path, "model checkpoint")->required();
    enhance->add_option("--in", in_path, "noisy multichannel WAV")->required();
    enhance->add_option("--out", out_path, "enhanced WAV")->required();

    auto* encode = app.add_subcommand("encode", "Edge endpoint: WAV -> latent stream");
    encode->add_option("--model", model_path, "model checkpoint")->required();
    encode->add_option("--in", in_path, "input WAV")->required();
    encode->add_option("--out", out_path, "stream file (default: stdout)");
    encode->add_option("--connect", connect_spec, "stream to a listening server (HOST:PORT)");
    encode->add_option("--chunk", chunk, "samples per frame (default 4096)");
    encode->add_flag("--quantize", quantize, "16-bit payloads instead of float32");

    auto* decode = app.add_subcommand("decode", "Server endpoint: latent stream -> WAV");
    decode->add_option("--model", model_path, "model checkpoint")->required();
    decode->add_option("--out", out_path, "enhanced output WAV")->required();
    decode->add_option("--in", in_path, "stream file (default: stdin)");
    decode->add_option("--listen", listen_spec, "accept one edge connection (HOST:PORT)");

    auto* eval = app.add_subcommand("eval", "Score processed audio against references");
    eval->add_option("--manifest", manifest_path, "eval manifest JSON")->required();
    eval->add_option("--out", out_path, "report path prefix")->required();
    eval->add_option("--pesq", pesq_path, "external PESQ CSV to merge");

    auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference gradient verification");
    (void)gradcheck;

    auto* info = app.add_subcommand("info", "Describe a checkpoint");
    info->add_option("--model", model_path, "model checkpoint")->required();

    std::string forced;
#ifdef MSCE_FORCED_SUBCOMMAND
    forced = MSCE_FORCED_SUBCOMMAND;
#endif
    std::vector<char*> args(argv, argv + argc);
    std::vector<char> forced_buf;
    if (!forced.empty()) {
        forced_buf.assign(forced.begin(), forced.end());
        forced_buf.push_back('\0');
        args.insert(args.begin() + 1, forced_buf.data());
    }

    try {
        app.parse(static_cast<int>(args.size()), args.data());
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : kExitUsage;
    }

    if (*sim) {
        int rc = msce_simulate_array(in_path.c_str(), geometry.empty() ? nullptr : geometry.c_str(),
                                     out_path.c_str());
        if (rc != MSCE_OK) return report_failure(rc);
        std::printf("{\"out\":\"%s\"}\n", out_path.c_str());
        return 0;
    }

    if (*mix) {
        if (!manifest_path.empty()) {
            char* listing = nullptr;
            int rc = msce_mix_manifest(manifest_path.c_str(), out_path.c_str(), seed, &listing);
            if (rc != MSCE_OK) return report_failure(rc);
            std::printf("%s\n", take_string(listing).c_str());
            return 0;
        }
        if (in_path.empty() || noise_path.empty()) {
            std::fprintf(stderr, "mimosce: mix needs either --manifest or --in plus --noise\n");
            return kExitUsage;
        }
        int rc = msce_mix_wav(in_path.c_str(), noise_path.c_str(), snr_db, seed, out_path.c_str());
        if (rc != MSCE_OK) return report_failure(rc);
        std::printf("{\"out\":\"%s\",\"snr_db\":%g}\n", out_path.c_str(), snr_db);
        return 0;
    }

    if (*train) {
        json cfg = load_json_file(config_path);
        if (!train_seed->empty()) cfg["train"]["seed"] = seed;
        if (!train_out->empty()) cfg["checkpoint"] = out_path;
        if (!train_steps->empty()) cfg["train"]["steps"] = steps_override;
        if (resume) cfg["resume"] = true;
        // The effective config (file + flag overrides) is preserved next to
        // the checkpoint so a run can be reproduced without the flags.
        if (cfg.contains("checkpoint")) {
            std::ofstream run_log(cfg["checkpoint"].get<std::string>() + ".run.json");
            run_log << cfg.dump(2) << "\n";
        }
        char* summary = nullptr;
        int rc = msce_train(cfg.dump().c_str(), &summary);
        if (rc != MSCE_OK) return report_failure(rc);
        std::printf("%s\n", take_string(summary).c_str());
        return 0;
    }

    if (*enhance) {
        ModelHandle m;
        int rc = msce_model_load(model_path.c_str(), &m.model);
        if (rc != MSCE_OK) return report_failure(rc);
        rc = msce_enhance_wav(m.model, in_path.c_str(), out_path.c_str());
        if (rc != MSCE_OK) return report_failure(rc);
        std::printf("{\"out\":\"%s\"}\n", out_path.c_str());
        return 0;
    }

    if (*encode) {
        ModelHandle m;
        int rc = msce_model_load(model_path.c_str(), &m.model);
        if (rc != MSCE_OK) return report_failure(rc);
        Endpoint ep;
        ep.path = out_path;
        try {
            if (!connect_spec.empty()) split_host_port(connect_spec, ep);
        } catch (const CLI::ParseError& e) {
            std::fprintf(stderr, "mimosce: %s\n", e.what());
            return kExitUsage;
        }
        Fd sink;
        if (!open_sink(ep, sink)) return 2;
        char* stats = nullptr;
        rc = msce_encode_wav(m.model, in_path.c_str(), chunk, quantize ? 1 : 0, &fd_sink, &sink,
                             &stats);
        if (rc != MSCE_OK) return report_failure(rc);
        // Keep stdout clean when it carries the stream itself.
        const bool stream_on_stdout = !ep.tcp && ep.path.empty();
        std::fprintf(stream_on_stdout ? stderr : stdout, "%s\n", take_string(stats).c_str());
        return 0;
    }

    if (*decode) {
        ModelHandle m;
        int rc = msce_model_load(model_path.c_str(), &m.model);
        if (rc != MSCE_OK) return report_failure(rc);
        Endpoint ep;
        ep.path = in_path;
        try {
            if (!listen_spec.empty()) split_host_port(listen_spec, ep);
        } catch (const CLI::ParseError& e) {
            std::fprintf(stderr, "mimosce: %s\n", e.what());
            return kExitUsage;
        }
        Fd source;
        if (!open_source(ep, source)) return 2;
        char* stats = nullptr;
        rc = msce_decode_to_wav(m.model, &fd_source, &source, out_path.c_str(), &stats);
        std::string stats_text = take_string(stats);
        if (rc != MSCE_OK) return report_failure(rc);
        std::printf("%s\n", stats_text.c_str());
        return 0;
    }

    if (*eval) {
        char* summary = nullptr;
        int rc = msce_eval(manifest_path.c_str(), out_path.c_str(),
                           pesq_path.empty() ? nullptr : pesq_path.c_str(), &summary);
        if (rc != MSCE_OK) return report_failure(rc);
        std::printf("%s\n", take_string(summary).c_str());
        return 0;
    }

    if (*gradcheck) {
        char* report = nullptr;
        int rc = msce_gradcheck(&report);
        std::printf("%s\n", take_string(report).c_str());
        if (rc != MSCE_OK) return report_failure(rc);
        return 0;
    }

    if (*info) {
        ModelHandle m;
        int rc = msce_model_load(model_path.c_str(), &m.model);
        if (rc != MSCE_OK) return report_failure(rc);
        char* text = nullptr;
        rc = msce_model_info(m.model, &text);
        if (rc != MSCE_OK) return report_failure(rc);
        std::printf("%s\n", take_string(text).c_str());
        return 0;
    }

    return kExitUsage;
}
