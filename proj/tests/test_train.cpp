#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <fstream>
#include <string>
#include <vector>

#include "core/checkpoint.hpp"
#include "core/dataset.hpp"
#include "core/loss.hpp"
#include "core/optimizer.hpp"
#include "core/rng.hpp"
#include "core/trainer.hpp"
#include "support/synth.hpp"

using namespace msce;

namespace {

ModelConfig tiny_config() {
    ModelConfig cfg;
    cfg.variant = Variant::fcn;
    cfg.mode = Mode::mimo;
    cfg.input_channels = 7;
    cfg.hidden_filters = 4;
    cfg.filter_length = 5;
    cfg.bottleneck_channels = 1;
    return cfg;
}

std::vector<std::vector<float>> snapshot(Model<float>& model) {
    std::vector<std::vector<float>> out;
    for (auto* p : model.parameters()) out.push_back(p->value.data);
    return out;
}

int count_lines(const std::string& path) {
    std::ifstream in(path);
    int n = 0;
    std::string line;
    while (std::getline(in, line))
        if (!line.empty()) ++n;
    return n;
}

}  // namespace

TEST_CASE("mse of identical tensors is zero") {
    Tensor<float> x(1, 3, 9);
    Rng rng(2);
    for (auto& v : x.data) v = static_cast<float>(rng.uniform(-1, 1));
    Tensor<float> y = x;
    CHECK(mse_loss(y, x, static_cast<Tensor<float>*>(nullptr)) == 0.0);
}

TEST_CASE("mse of an everywhere-off-by-one estimate is exactly one") {
    Tensor<float> x(2, 2, 5);
    Rng rng(3);
    for (auto& v : x.data) v = static_cast<float>(rng.uniform(-1, 1));
    Tensor<float> y = x;
    for (auto& v : y.data) v += 1.0f;
    CHECK(mse_loss(y, x, static_cast<Tensor<float>*>(nullptr)) == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("mse matches the elementwise double loop") {
    Tensor<double> target(1, 2, 4), est(1, 2, 4);
    Rng rng(4);
    for (auto& v : target.data) v = rng.uniform(-1, 1);
    for (auto& v : est.data) v = rng.uniform(-1, 1);
    double want = 0.0;
    for (int c = 0; c < 2; ++c)
        for (int t = 0; t < 4; ++t) {
            const double d = est.at(0, c, t) - target.at(0, c, t);
            want += d * d;
        }
    want /= 8.0;
    Tensor<double> grad;
    const double got = mse_loss(est, target, &grad);
    CHECK(std::abs(got - want) <= 1e-12);
    // gradient of the mean of squares: 2 * (est - target) / numel
    for (std::size_t i = 0; i < grad.data.size(); ++i)
        CHECK(grad.data[i] ==
              doctest::Approx(2.0 * (est.data[i] - target.data[i]) / 8.0).epsilon(1e-12));
}

TEST_CASE("mse rejects shape mismatches") {
    Tensor<float> a(1, 2, 4), b(1, 2, 5);
    CHECK_THROWS_AS(mse_loss(a, b, static_cast<Tensor<float>*>(nullptr)), Error);
}

TEST_CASE("first adam update moves every coordinate against its gradient") {
    Tensor<float> v(1, 1, 6);
    v.data = {0.5f, -0.5f, 1.0f, -1.0f, 0.25f, 2.0f};
    Parameter<float> p("p", v);
    p.grad.data = {0.3f, -0.2f, 0.0f, 0.7f, -1.5f, 0.001f};
    std::vector<Parameter<float>*> params{&p};
    Adam<float> opt(params);
    const std::vector<float> before = p.value.data;
    opt.step(1e-3);
    for (int i = 0; i < 6; ++i) {
        const double delta = static_cast<double>(p.value.data[i]) - before[i];
        const double g = p.grad.data[i];
        if (g > 0) CHECK(delta < 0.0);
        if (g < 0) CHECK(delta > 0.0);
        if (g == 0.0f) CHECK(delta == 0.0);
        // with fresh moments m_hat = g, v_hat = g^2, so |delta| ~ lr
        if (g != 0.0f) CHECK(std::abs(delta) == doctest::Approx(1e-3).epsilon(1e-2));
    }
    CHECK(opt.step_count() == 1);
}

TEST_CASE("adam state round trips through serialize and restore") {
    Rng rng(5);
    Tensor<float> v(1, 1, 8);
    for (auto& x : v.data) x = static_cast<float>(rng.uniform(-1, 1));
    Parameter<float> p("p", v);
    std::vector<Parameter<float>*> params{&p};
    Adam<float> opt(params);
    for (int s = 0; s < 3; ++s) {
        for (auto& g : p.grad.data) g = static_cast<float>(rng.uniform(-1, 1));
        opt.step(1e-2);
    }
    const std::string blob = opt.serialize();
    const std::vector<float> grads_next = [&] {
        std::vector<float> g(8);
        for (auto& x : g) x = static_cast<float>(rng.uniform(-1, 1));
        return g;
    }();

    Parameter<float> p2("p", p.value);
    std::vector<Parameter<float>*> params2{&p2};
    Adam<float> opt2(params2);
    opt2.restore(blob);
    CHECK(opt2.step_count() == 3);

    p.grad.data = grads_next;
    p2.grad.data = grads_next;
    opt.step(1e-2);
    opt2.step(1e-2);
    CHECK(p.value.data == p2.value.data);

    std::string junk = blob;
    junk[0] = 'X';
    Adam<float> opt3(params2);
    CHECK_THROWS_AS(opt3.restore(junk), Error);
}

TEST_CASE("training on a fixed batch decreases the loss over every early 50-step window") {
    ModelConfig cfg = tiny_config();
    cfg.input_channels = 2;
    Model<float> model(cfg, 11);
    model.init_running_stats();
    TrainConfig tc;
    tc.lr = 1e-3;
    Rng rng(12);
    Tensor<float> clean(2, 2, 128), noisy(2, 2, 128);
    for (std::size_t i = 0; i < clean.data.size(); ++i) {
        clean.data[i] = static_cast<float>(0.6 * std::sin(0.05 * static_cast<double>(i)));
        noisy.data[i] = clean.data[i] + static_cast<float>(0.2 * rng.uniform(-1, 1));
    }
    std::vector<Parameter<float>*> params = model.parameters();
    Adam<float> opt(params);
    std::vector<double> losses;
    for (int s = 0; s < 120; ++s) losses.push_back(train_step(model, opt, noisy, clean, tc));
    for (std::size_t k = 0; k + 50 < losses.size(); ++k) CHECK(losses[k + 50] < losses[k]);
}

TEST_CASE("a zero learning rate leaves parameters bit-exact") {
    ModelConfig cfg = tiny_config();
    Model<float> model(cfg, 21);
    TrainConfig tc;
    tc.lr = 0.0;  // bypasses validate(): direct train_step call
    Tensor<float> clean(1, 7, 64), noisy(1, 7, 64);
    Rng rng(22);
    for (std::size_t i = 0; i < clean.data.size(); ++i) {
        clean.data[i] = static_cast<float>(rng.uniform(-0.5, 0.5));
        noisy.data[i] = clean.data[i] + static_cast<float>(0.1 * rng.uniform(-1, 1));
    }
    const auto before = snapshot(model);
    std::vector<Parameter<float>*> params = model.parameters();
    Adam<float> opt(params);
    const double loss = train_step(model, opt, noisy, clean, tc);
    CHECK(loss > 0.0);
    const auto after = snapshot(model);
    REQUIRE(before.size() == after.size());
    for (std::size_t i = 0; i < before.size(); ++i) CHECK(before[i] == after[i]);
}

TEST_CASE("select_target keeps channel 0 for miso and everything for mimo") {
    Tensor<float> clean(2, 3, 4);
    Rng rng(31);
    for (auto& v : clean.data) v = static_cast<float>(rng.uniform(-1, 1));
    Tensor<float> miso = select_target(clean, Mode::miso);
    REQUIRE(miso.channels == 1);
    REQUIRE(miso.batch == 2);
    for (int b = 0; b < 2; ++b)
        for (int t = 0; t < 4; ++t) CHECK(miso.at(b, 0, t) == clean.at(b, 0, t));
    Tensor<float> mimo = select_target(clean, Mode::mimo);
    CHECK(mimo.data == clean.data);
}

TEST_CASE("checkpoint bytes round trip bit-exact and carry the trailing crc") {
    ModelConfig cfg = tiny_config();
    cfg.variant = Variant::sfcn;
    cfg.sinc_filters = 3;
    cfg.sinc_length = 9;
    Model<float> model(cfg, 77);
    model.init_running_stats();
    std::string bytes = serialize_model(model);
    auto back = model_from_bytes(bytes);
    CHECK(back->config().to_json() == cfg.to_json());
    auto a = model.named_tensors();
    auto b = back->named_tensors();
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].name == b[i].name);
        CHECK(*a[i].data == *b[i].data);
    }
    CHECK(checkpoint_crc(bytes) == model_crc(model));
    CHECK(checkpoint_crc(bytes) == model_crc(*back));
    CHECK(serialize_model(*back) == bytes);
}

TEST_CASE("checkpoint corruption and format violations are rejected") {
    Model<float> model(tiny_config(), 5);
    model.init_running_stats();
    std::string bytes = serialize_model(model);

    std::string flipped = bytes;
    flipped[bytes.size() / 2] ^= 0x20;
    CHECK_THROWS_AS(model_from_bytes(flipped), Error);

    CHECK_THROWS_AS(model_from_bytes(bytes.substr(0, bytes.size() - 9)), Error);

    std::string magic = bytes;
    magic[0] = 'X';
    CHECK_THROWS_AS(model_from_bytes(magic), Error);

    std::string version = bytes;
    version[4] = 9;
    CHECK_THROWS_AS(model_from_bytes(version), Error);

    CHECK_THROWS_AS(load_checkpoint("/nonexistent/model.ckpt"), Error);
}

TEST_CASE("train config json round trip and validation") {
    TrainConfig tc;
    tc.lr = 5e-4;
    tc.batch_size = 2;
    tc.steps = 12;
    tc.seed = 99;
    tc.segment_length = 4096;
    tc.hop = 2048;
    TrainConfig back = TrainConfig::from_json(tc.to_json());
    CHECK(back.to_json() == tc.to_json());

    auto bad = tc.to_json();
    bad["momentum"] = 0.9;
    CHECK_THROWS_AS(TrainConfig::from_json(bad), Error);

    TrainConfig zero_lr = tc;
    zero_lr.lr = 0.0;
    CHECK_THROWS_AS(zero_lr.validate(), Error);
    TrainConfig junk_precision = tc;
    junk_precision.precision = "float16";
    CHECK_THROWS_AS(junk_precision.validate(), Error);
}

TEST_CASE("train loop writes checkpoints and logs, deterministically per seed") {
    testsup::TempDir dir;
    const std::string manifest_path = testsup::build_corpus(dir.path, 3, 0, 4000, 16000);
    Manifest manifest = Manifest::load(manifest_path);
    ModelConfig cfg = tiny_config();
    TrainConfig tc;
    tc.lr = 1e-3;
    tc.batch_size = 2;
    tc.steps = 6;
    tc.seed = 7;
    tc.segment_length = 1024;
    tc.hop = 512;
    tc.checkpoint_every = 3;

    const std::string ck1 = dir.file("a.ckpt"), log1 = dir.file("a.ndjson");
    TrainResult r1 = train_loop(manifest, cfg, tc, ck1, log1);
    CHECK(r1.steps == 6);
    CHECK(std::isfinite(r1.first_loss));
    CHECK(std::isfinite(r1.final_loss));
    CHECK(r1.first_loss > 0.0);
    CHECK(count_lines(log1) == 6);
    CHECK(std::ifstream(ck1).good());
    CHECK(std::ifstream(ck1 + ".opt").good());

    // same seed: byte-identical artifacts
    const std::string ck2 = dir.file("b.ckpt"), log2 = dir.file("b.ndjson");
    TrainResult r2 = train_loop(manifest, cfg, tc, ck2, log2);
    CHECK(r1.final_loss == r2.final_loss);
    CHECK(read_file(ck1) == read_file(ck2));

    // different seed: different parameters
    TrainConfig other = tc;
    other.seed = 8;
    const std::string ck3 = dir.file("c.ckpt");
    train_loop(manifest, cfg, other, ck3, dir.file("c.ndjson"));
    CHECK(read_file(ck1) != read_file(ck3));

    // log lines are json with the documented keys
    std::ifstream in(log1);
    std::string line;
    long long expect_step = 1;
    while (std::getline(in, line)) {
        auto j = nlohmann::json::parse(line);
        CHECK(j["step"].get<long long>() == expect_step++);
        CHECK(j["loss"].is_number());
        CHECK(j["wallclock"].is_number());
    }
}

TEST_CASE("resume reproduces the uninterrupted run exactly") {
    testsup::TempDir dir;
    Manifest manifest = Manifest::load(testsup::build_corpus(dir.path, 3, 0, 4000, 16000));
    ModelConfig cfg = tiny_config();
    TrainConfig tc;
    tc.lr = 1e-3;
    tc.batch_size = 2;
    tc.steps = 8;
    tc.seed = 3;
    tc.segment_length = 1024;
    tc.hop = 512;

    // uninterrupted 8 steps, logging every loss
    const std::string full_ck = dir.file("full.ckpt");
    train_loop(manifest, cfg, tc, full_ck, dir.file("full.ndjson"));

    // 4 steps, then resume to 8
    TrainConfig half = tc;
    half.steps = 4;
    const std::string part_ck = dir.file("part.ckpt");
    train_loop(manifest, cfg, half, part_ck, dir.file("part1.ndjson"));
    train_loop(manifest, cfg, tc, part_ck, dir.file("part2.ndjson"), true);

    CHECK(read_file(part_ck) == read_file(full_ck));
    CHECK(read_file(part_ck + ".opt") == read_file(full_ck + ".opt"));

    // the resumed log's first line is step 5 with the same loss as the full run
    std::ifstream full_log(dir.file("full.ndjson")), part_log(dir.file("part2.ndjson"));
    std::string line;
    double full_step5 = 0.0;
    for (int i = 0; i < 5; ++i) {
        REQUIRE(std::getline(full_log, line));
    }
    full_step5 = nlohmann::json::parse(line)["loss"].get<double>();
    REQUIRE(std::getline(part_log, line));
    auto j = nlohmann::json::parse(line);
    CHECK(j["step"].get<long long>() == 5);
    CHECK(j["loss"].get<double>() == full_step5);
}

TEST_CASE("resume refuses a mismatched architecture") {
    testsup::TempDir dir;
    Manifest manifest = Manifest::load(testsup::build_corpus(dir.path, 2, 0, 3000, 16000));
    ModelConfig cfg = tiny_config();
    TrainConfig tc;
    tc.lr = 1e-3;
    tc.batch_size = 1;
    tc.steps = 2;
    tc.segment_length = 512;
    tc.hop = 256;
    const std::string ck = dir.file("m.ckpt");
    train_loop(manifest, cfg, tc, ck, dir.file("m.ndjson"));
    ModelConfig wider = cfg;
    wider.hidden_filters = 6;
    CHECK_THROWS_AS(train_loop(manifest, wider, tc, ck, dir.file("m2.ndjson"), true), Error);
}

TEST_CASE("train loop rejects an empty manifest") {
    Manifest manifest;
    TrainConfig tc;
    tc.steps = 1;
    CHECK_THROWS_AS(train_loop(manifest, tiny_config(), tc, "/tmp/x.ckpt", "/tmp/x.ndjson"),
                    Error);
}

TEST_CASE("progress callback can stop training early") {
    testsup::TempDir dir;
    Manifest manifest = Manifest::load(testsup::build_corpus(dir.path, 2, 0, 3000, 16000));
    TrainConfig tc;
    tc.lr = 1e-3;
    tc.batch_size = 1;
    tc.steps = 50;
    tc.segment_length = 512;
    tc.hop = 256;
    long long seen = 0;
    TrainResult r = train_loop(manifest, tiny_config(), tc, dir.file("s.ckpt"),
                               dir.file("s.ndjson"), false, [&](long long step, double) {
                                   seen = step;
                                   return step < 3;
                               });
    CHECK(r.steps == 3);
    CHECK(seen == 3);
}

TEST_CASE("dataset channel count must match the model") {
    testsup::TempDir dir;
    Manifest manifest = Manifest::load(testsup::build_corpus(dir.path, 2, 0, 3000, 16000));
    ModelConfig cfg = tiny_config();
    cfg.input_channels = 3;  // corpus simulates 7 mics
    TrainConfig tc;
    tc.lr = 1e-3;
    tc.steps = 1;
    tc.segment_length = 512;
    tc.hop = 256;
    CHECK_THROWS_AS(train_loop(manifest, cfg, tc, "/tmp/y.ckpt", "/tmp/y.ndjson"), Error);
}
