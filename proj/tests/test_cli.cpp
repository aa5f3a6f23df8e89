#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "core/checkpoint.hpp"
#include "core/common.hpp"
#include "core/model.hpp"
#include "core/wav.hpp"
#include "support/synth.hpp"

using nlohmann::json;

namespace {

const std::string kCli = MSCE_CLI_BIN;
const std::string kEdge = MSCE_EDGE_BIN;
const std::string kServer = MSCE_SERVER_BIN;

struct CmdResult {
    int status = -1;
    std::string out;
};

// Runs a shell command, capturing stdout and the exit code.
CmdResult run_cmd(const std::string& cmd) {
    CmdResult r;
    FILE* p = popen(cmd.c_str(), "r");
    REQUIRE(p != nullptr);
    char buf[4096];
    std::size_t n;
    while ((n = std::fread(buf, 1, sizeof buf, p)) > 0) r.out.append(buf, n);
    const int st = pclose(p);
    r.status = WIFEXITED(st) ? WEXITSTATUS(st) : -1;
    return r;
}

json parse_stdout(const CmdResult& r) {
    REQUIRE(!r.out.empty());
    return json::parse(r.out);
}

// Fixture shared by the pipeline tests: a tiny two-mic corpus, a run config,
// and one CLI-trained checkpoint.
struct Workbench {
    testsup::TempDir dir;
    std::string manifest_path;
    std::string run_config_path;
    std::string ckpt;

    Workbench() {
        json entries = json::array();
        for (int i = 0; i < 4; ++i) {
            char name[32];
            std::snprintf(name, sizeof name, "train_%03d.wav", i);
            testsup::write_mono_wav(dir.file(name), testsup::utterance(i, 16000, 16000), 16000);
            entries.push_back({{"clean", name},
                               {"noise", "noise_white.wav"},
                               {"snr_db", i % 2 ? 0.0 : 5.0},
                               {"split", "train"}});
        }
        testsup::write_mono_wav(dir.file("noise_white.wav"), testsup::white_noise(0, 32000),
                                16000);
        json manifest{
            {"version", 1},
            {"geometry",
             {{"microphones",
               json::array({{{"mic_id", 1}, {"distance_m", 1.0}},
                            {{"mic_id", 2}, {"distance_m", 1.5}}})}}},
            {"entries", entries}};
        manifest_path = dir.file("manifest.json");
        msce::write_file(manifest_path, manifest.dump(2));

        ckpt = dir.file("model.ckpt");
        json run{{"version", 1},
                 {"model",
                  {{"input_channels", 2},
                   {"bottleneck_channels", 1},
                   {"hidden_filters", 4},
                   {"filter_length", 5}}},
                 {"train",
                  {{"steps", 6}, {"batch_size", 1}, {"segment_length", 4096}, {"lr", 1e-3},
                   {"seed", 11}}},
                 {"manifest", manifest_path},
                 {"checkpoint", ckpt},
                 {"log", ckpt + ".log"}};
        run_config_path = dir.file("run.json");
        msce::write_file(run_config_path, run.dump(2));

        CmdResult r = run_cmd(kCli + " train --config " + run_config_path);
        REQUIRE(r.status == 0);
        REQUIRE(parse_stdout(r).at("steps").get<long long>() == 6);
    }

    // simulate + mix: a noisy two-channel capture for the enhancement tests.
    std::string make_noisy(const std::string& stem) {
        const std::string mono = dir.file(stem + "_src.wav");
        testsup::write_mono_wav(mono, testsup::utterance(9, 12000, 16000), 16000);
        const std::string geom =
            R"('{"microphones":[{"mic_id":1,"distance_m":1.0},{"mic_id":2,"distance_m":1.5}]}')";
        const std::string cap = dir.file(stem + "_cap.wav");
        CmdResult sim = run_cmd(kCli + " simulate --in " + mono + " --out " + cap +
                                " --geometry " + geom);
        REQUIRE(sim.status == 0);
        const std::string noisy = dir.file(stem + "_noisy.wav");
        CmdResult mix = run_cmd(kCli + " mix --in " + cap + " --noise " +
                                dir.file("noise_white.wav") + " --snr 0 --seed 5 --out " + noisy);
        REQUIRE(mix.status == 0);
        return noisy;
    }
};

// Accepts one connection on an ephemeral port, reads a little, then drops it.
struct OneShotCloser {
    int listener = -1;
    int port = 0;
    std::thread th;

    OneShotCloser() {
        listener = ::socket(AF_INET, SOCK_STREAM, 0);
        REQUIRE(listener >= 0);
        int one = 1;
        ::setsockopt(listener, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
        sockaddr_in addr{};
        addr.sin_family = AF_INET;
        addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
        REQUIRE(::bind(listener, reinterpret_cast<sockaddr*>(&addr), sizeof addr) == 0);
        socklen_t len = sizeof addr;
        REQUIRE(::getsockname(listener, reinterpret_cast<sockaddr*>(&addr), &len) == 0);
        port = ntohs(addr.sin_port);
        REQUIRE(::listen(listener, 1) == 0);
        th = std::thread([this] {
            int fd = ::accept(listener, nullptr, nullptr);
            if (fd >= 0) {
                char b[1024];
                (void)!::read(fd, b, sizeof b);
                ::close(fd);
            }
        });
    }
    ~OneShotCloser() {
        if (th.joinable()) th.join();
        if (listener >= 0) ::close(listener);
    }
};

}  // namespace

TEST_CASE("usage errors exit with code 1") {
    CHECK(run_cmd(kCli + " 2>/dev/null").status == 1);
    CHECK(run_cmd(kCli + " frobnicate 2>/dev/null").status == 1);
    CHECK(run_cmd(kCli + " simulate 2>/dev/null").status == 1);
    CHECK(run_cmd(kCli + " enhance --model x 2>/dev/null").status == 1);
    CHECK(run_cmd(kCli + " --help >/dev/null").status == 0);
    CHECK(run_cmd(kEdge + " --help >/dev/null").status == 0);
    CHECK(run_cmd(kServer + " --help >/dev/null").status == 0);

    testsup::TempDir dir;
    // mix needs either a manifest or an in/noise pair.
    CHECK(run_cmd(kCli + " mix --out " + dir.file("x.wav") + " 2>/dev/null").status == 1);
}

TEST_CASE("missing and malformed inputs exit with code 2") {
    testsup::TempDir dir;
    CHECK(run_cmd(kCli + " info --model " + dir.file("none.ckpt") + " 2>/dev/null").status == 2);
    CHECK(run_cmd(kCli + " simulate --in " + dir.file("none.wav") + " --out " +
                  dir.file("o.wav") + " 2>/dev/null")
              .status == 2);
    msce::write_file(dir.file("junk.ckpt"), "junk");
    CHECK(run_cmd(kCli + " enhance --model " + dir.file("junk.ckpt") + " --in x --out y" +
                  " 2>/dev/null")
              .status == 2);
}

TEST_CASE("train pipeline: artifacts, overrides, resume, determinism") {
    Workbench wb;

    // The effective config is preserved next to the checkpoint.
    CHECK(std::filesystem::exists(wb.ckpt + ".run.json"));
    CHECK(std::filesystem::exists(wb.ckpt + ".opt"));
    CHECK(std::filesystem::exists(wb.ckpt + ".log"));
    json preserved = json::parse(msce::read_file(wb.ckpt + ".run.json"));
    CHECK(preserved.at("train").at("steps").get<long long>() == 6);

    // Same config, different output path: byte-identical checkpoint.
    const std::string ckpt_b = wb.dir.file("b.ckpt");
    CmdResult again = run_cmd(kCli + " train --config " + wb.run_config_path + " --out " + ckpt_b);
    REQUIRE(again.status == 0);
    CHECK(msce::read_file(ckpt_b) == msce::read_file(wb.ckpt));
    json preserved_b = json::parse(msce::read_file(ckpt_b + ".run.json"));
    CHECK(preserved_b.at("checkpoint").get<std::string>() == ckpt_b);

    // Step override, then resume to the full run.
    const std::string ckpt_c = wb.dir.file("c.ckpt");
    REQUIRE(run_cmd(kCli + " train --config " + wb.run_config_path + " --out " + ckpt_c +
                    " --steps 3")
                .status == 0);
    CHECK(msce::read_file(ckpt_c) != msce::read_file(wb.ckpt));
    CmdResult resumed = run_cmd(kCli + " train --config " + wb.run_config_path + " --out " +
                                ckpt_c + " --steps 6 --resume");
    REQUIRE(resumed.status == 0);
    CHECK(parse_stdout(resumed).at("steps").get<long long>() == 3);
    CHECK(msce::read_file(ckpt_c) == msce::read_file(wb.ckpt));

    // A different seed changes the weights.
    const std::string ckpt_d = wb.dir.file("d.ckpt");
    REQUIRE(run_cmd(kCli + " train --config " + wb.run_config_path + " --out " + ckpt_d +
                    " --seed 12")
                .status == 0);
    CHECK(msce::read_file(ckpt_d) != msce::read_file(wb.ckpt));

    // Bad run config is a data error.
    msce::write_file(wb.dir.file("bad.json"), "{\"bogus\":1}");
    CHECK(run_cmd(kCli + " train --config " + wb.dir.file("bad.json") + " 2>/dev/null").status ==
          2);
}

TEST_CASE("info prints the model summary") {
    Workbench wb;
    CmdResult r = run_cmd(kCli + " info --model " + wb.ckpt);
    REQUIRE(r.status == 0);
    json j = parse_stdout(r);
    CHECK(j.at("compression_ratio").get<double>() == 2.0);
    CHECK(j.at("config").at("input_channels").get<int>() == 2);

    // The stock seven-microphone configuration reports a 7:1 channel ratio.
    msce::ModelConfig cfg;
    cfg.hidden_filters = 4;
    cfg.filter_length = 5;
    msce::Model<float> seven(cfg, 1);
    seven.init_running_stats();
    const std::string path = wb.dir.file("seven.ckpt");
    msce::save_checkpoint(seven, path);
    json j7 = parse_stdout(run_cmd(kCli + " info --model " + path));
    CHECK(j7.at("compression_ratio").get<double>() == 7.0);
    CHECK(j7.at("config").at("input_channels").get<int>() == 7);
}

TEST_CASE("simulate, mix and enhance round trip through files") {
    Workbench wb;
    const std::string noisy = wb.make_noisy("p");

    msce::Audio noisy_audio = msce::read_wav(noisy);
    REQUIRE(noisy_audio.num_channels() == 2);

    const std::string enh = wb.dir.file("enh.wav");
    CmdResult r = run_cmd(kCli + " enhance --model " + wb.ckpt + " --in " + noisy + " --out " +
                          enh);
    REQUIRE(r.status == 0);
    CHECK(parse_stdout(r).at("out").get<std::string>() == enh);
    msce::Audio enhanced = msce::read_wav(enh);
    CHECK(enhanced.num_channels() == 2);
    CHECK(enhanced.length() == noisy_audio.length());

    // Channel mismatch surfaces as a data error.
    const std::string mono = wb.dir.file("p_src.wav");
    CHECK(run_cmd(kCli + " enhance --model " + wb.ckpt + " --in " + mono + " --out " +
                  wb.dir.file("x.wav") + " 2>/dev/null")
              .status == 2);
}

TEST_CASE("mix manifest mode materializes pairs") {
    Workbench wb;
    const std::string out_dir = wb.dir.file("pairs");
    CmdResult r = run_cmd(kCli + " mix --manifest " + wb.manifest_path + " --out " + out_dir +
                          " --seed 42");
    REQUIRE(r.status == 0);
    json j = parse_stdout(r);
    REQUIRE(j.at("pairs").size() == 4);
    for (const auto& p : j.at("pairs")) {
        CHECK(std::filesystem::exists(p.at("clean").get<std::string>()));
        CHECK(std::filesystem::exists(p.at("noisy").get<std::string>()));
    }
}

TEST_CASE("gradcheck subcommand verifies gradients and exits 0") {
    CmdResult r = run_cmd(kCli + " gradcheck");
    REQUIRE(r.status == 0);
    json j = parse_stdout(r);
    CHECK(j.at("pass").get<bool>());
    CHECK(j.at("checks").size() >= 7);
}

TEST_CASE("eval subcommand writes report files") {
    Workbench wb;
    const auto clean = testsup::utterance(6, 32000, 16000);
    std::vector<float> proc(clean);
    const auto noise = testsup::lcg_noise(static_cast<int>(proc.size()), 13);
    for (std::size_t i = 0; i < proc.size(); ++i) proc[i] += 0.1f * static_cast<float>(noise[i]);
    testsup::write_mono_wav(wb.dir.file("c.wav"), clean, 16000);
    testsup::write_mono_wav(wb.dir.file("p.wav"), proc, 16000);
    json manifest{{"entries",
                   json::array({{{"system", "fcn"},
                                 {"clean", wb.dir.file("c.wav")},
                                 {"processed", wb.dir.file("p.wav")},
                                 {"noise", "white"},
                                 {"snr_db", 0.0}}})}};
    msce::write_file(wb.dir.file("eval.json"), manifest.dump(2));

    CmdResult r = run_cmd(kCli + " eval --manifest " + wb.dir.file("eval.json") + " --out " +
                          wb.dir.file("rep"));
    REQUIRE(r.status == 0);
    CHECK(parse_stdout(r).at("rows").get<int>() == 1);
    for (const char* suffix :
         {"_results.csv", "_summary.csv", "_summary.txt", "_by_snr.csv", "_by_snr.txt"})
        CHECK(std::filesystem::exists(wb.dir.file("rep") + suffix));
}

TEST_CASE("encode and decode agree with offline enhancement through files and pipes") {
    Workbench wb;
    const std::string noisy = wb.make_noisy("s");
    const std::string enh = wb.dir.file("enh.wav");
    REQUIRE(run_cmd(kCli + " enhance --model " + wb.ckpt + " --in " + noisy + " --out " + enh)
                .status == 0);
    msce::Audio offline = msce::read_wav(enh);

    // File-based stream with an explicit chunk size.
    const std::string stream = wb.dir.file("latents.bin");
    CmdResult enc = run_cmd(kEdge + " --model " + wb.ckpt + " --in " + noisy + " --out " +
                            stream + " --chunk 1000");
    REQUIRE(enc.status == 0);
    json enc_stats = parse_stdout(enc);
    CHECK(enc_stats.at("ratio").get<double>() == 2.0);
    REQUIRE(std::filesystem::exists(stream));

    const std::string dec_wav = wb.dir.file("dec.wav");
    CmdResult dec = run_cmd(kServer + " --model " + wb.ckpt + " --in " + stream + " --out " +
                            dec_wav);
    REQUIRE(dec.status == 0);
    json dec_stats = parse_stdout(dec);
    CHECK(dec_stats.at("payload_bytes").get<std::uint64_t>() > 0);
    msce::Audio decoded = msce::read_wav(dec_wav);
    REQUIRE(decoded.length() == offline.length());
    for (int c = 0; c < 2; ++c) CHECK(decoded.channels[c] == offline.channels[c]);

    // Same thing over a stdio pipe; encoder stats move to stderr.
    const std::string piped_wav = wb.dir.file("piped.wav");
    const std::string edge_err = wb.dir.file("edge_stats.json");
    CmdResult piped = run_cmd(kEdge + " --model " + wb.ckpt + " --in " + noisy + " 2> " +
                              edge_err + " | " + kServer + " --model " + wb.ckpt + " --out " +
                              piped_wav);
    REQUIRE(piped.status == 0);
    msce::Audio piped_audio = msce::read_wav(piped_wav);
    REQUIRE(piped_audio.length() == offline.length());
    for (int c = 0; c < 2; ++c) CHECK(piped_audio.channels[c] == offline.channels[c]);
    CHECK(json::parse(msce::read_file(edge_err)).at("ratio").get<double>() == 2.0);

    // Quantized pipe: smaller payload, close output.
    const std::string q_wav = wb.dir.file("q.wav");
    CmdResult quant = run_cmd(kEdge + " --model " + wb.ckpt + " --in " + noisy +
                              " --quantize 2>/dev/null | " + kServer + " --model " + wb.ckpt +
                              " --out " + q_wav);
    REQUIRE(quant.status == 0);
    json q_stats = parse_stdout(quant);
    CHECK(q_stats.at("payload_bytes").get<std::uint64_t>() <
          dec_stats.at("payload_bytes").get<std::uint64_t>());
    msce::Audio q_audio = msce::read_wav(q_wav);
    REQUIRE(q_audio.length() == offline.length());
    float max_diff = 0.0f;
    for (int c = 0; c < 2; ++c)
        for (long long t = 0; t < q_audio.length(); ++t)
            max_diff = std::max(max_diff,
                                std::abs(q_audio.channels[c][t] - offline.channels[c][t]));
    CHECK(max_diff > 0.0f);
    CHECK(max_diff < 1e-2f);
}

TEST_CASE("decode rejects garbage and mismatched streams with exit code 3") {
    Workbench wb;
    const std::string junk = wb.dir.file("junk.bin");
    msce::write_file(junk, std::string(100, 'x'));
    CHECK(run_cmd(kServer + " --model " + wb.ckpt + " --in " + junk + " --out " +
                  wb.dir.file("j.wav") + " 2>/dev/null")
              .status == 3);

    // Stream produced by a different model.
    const std::string noisy = wb.make_noisy("w");
    const std::string stream = wb.dir.file("w.bin");
    REQUIRE(run_cmd(kEdge + " --model " + wb.ckpt + " --in " + noisy + " --out " + stream)
                .status == 0);
    const std::string other = wb.dir.file("d.ckpt");
    REQUIRE(run_cmd(kCli + " train --config " + wb.run_config_path + " --out " + other +
                    " --seed 99 >/dev/null")
                .status == 0);
    CHECK(run_cmd(kServer + " --model " + other + " --in " + stream + " --out " +
                  wb.dir.file("w.wav") + " 2>/dev/null")
              .status == 3);
}

TEST_CASE("edge streams to a listening server over tcp") {
    Workbench wb;
    const std::string noisy = wb.make_noisy("t");
    const std::string enh = wb.dir.file("enh.wav");
    REQUIRE(run_cmd(kCli + " enhance --model " + wb.ckpt + " --in " + noisy + " --out " + enh)
                .status == 0);
    msce::Audio offline = msce::read_wav(enh);

    const std::string tcp_wav = wb.dir.file("tcp.wav");
    bool ok = false;
    for (int attempt = 0; attempt < 3 && !ok; ++attempt) {
        const int port = 21000 + static_cast<int>((getpid() + attempt * 131) % 20000);
        FILE* server = popen((kServer + " --model " + wb.ckpt + " --listen 127.0.0.1:" +
                              std::to_string(port) + " --out " + tcp_wav)
                                 .c_str(),
                             "r");
        REQUIRE(server != nullptr);
        CmdResult edge = run_cmd(kEdge + " --model " + wb.ckpt + " --in " + noisy +
                                 " --connect 127.0.0.1:" + std::to_string(port));
        char buf[4096];
        while (std::fread(buf, 1, sizeof buf, server) > 0) {}
        const int st = pclose(server);
        ok = edge.status == 0 && WIFEXITED(st) && WEXITSTATUS(st) == 0;
    }
    REQUIRE(ok);
    msce::Audio via_tcp = msce::read_wav(tcp_wav);
    REQUIRE(via_tcp.length() == offline.length());
    for (int c = 0; c < 2; ++c) CHECK(via_tcp.channels[c] == offline.channels[c]);
}

TEST_CASE("edge fails cleanly when the server goes away") {
    Workbench wb;
    // Long input so the stream outgrows the socket buffers.
    const std::string big = wb.dir.file("big.wav");
    msce::Audio a;
    a.sample_rate = 16000;
    a.channels.resize(2);
    const auto base = testsup::utterance(3, 500000, 16000);
    a.channels[0].assign(base.begin(), base.end());
    a.channels[1] = a.channels[0];
    msce::write_wav(a, big);

    OneShotCloser closer;
    CmdResult edge = run_cmd(kEdge + " --model " + wb.ckpt + " --in " + big +
                             " --connect 127.0.0.1:" + std::to_string(closer.port) +
                             " 2>/dev/null");
    CHECK(edge.status == 2);

    // And when nothing ever listens: connect gives up with a data error.
    CmdResult refused = run_cmd(kEdge + " --model " + wb.ckpt + " --in " + big +
                                " --connect 127.0.0.1:1 2>/dev/null");
    CHECK(refused.status == 2);

    // Malformed endpoint specs are usage errors, not crashes.
    CHECK(run_cmd(kEdge + " --model " + wb.ckpt + " --in " + big +
                  " --connect nonsense 2>/dev/null")
              .status == 1);
    CHECK(run_cmd(kEdge + " --model " + wb.ckpt + " --in " + big +
                  " --connect 127.0.0.1:zap 2>/dev/null")
              .status == 1);
    CHECK(run_cmd(kServer + " --model " + wb.ckpt + " --out " + wb.dir.file("y.wav") +
                  " --listen :0 2>/dev/null")
              .status == 1);
}
