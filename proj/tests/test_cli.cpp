#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "tiered/cli.hpp"
#include "tiered/device_models.hpp"
#include "tiered/rng.hpp"
#include "tiered/workload.hpp"

using namespace tiered;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Result {
    int code = 0;
    std::string out;
    std::string err;
};

Result cli(std::initializer_list<std::string> args) {
    std::vector<std::string> owned{"tiersim"};
    owned.insert(owned.end(), args);
    std::vector<const char*> argv;
    for (const auto& a : owned) argv.push_back(a.c_str());
    std::ostringstream out, err;
    Result r;
    r.code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
    r.out = out.str();
    r.err = err.str();
    return r;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / ("tiersim-test-" + name)) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string str(const std::string& leaf = "") const { return (leaf.empty() ? path : path / leaf).string(); }
};

}  // namespace

TEST_CASE("simulate writes metrics, resolved config and manifest") {
    TempDir d("sim");
    std::ofstream(d.path / "c.yaml") << "version: 1\ntraffic:\n  n_requests: 500\n";
    const Result r = cli({"--config", d.str("c.yaml"), "--out-dir", d.str(), "simulate", "--format", "json"});
    REQUIRE(r.code == kExitOk);
    const json m = json::parse(slurp(d.path / "metrics.json"));
    CHECK(m["schema_version"] == 1);
    CHECK(json::parse(r.out) == m);
    CHECK(fs::exists(d.path / "metrics.csv"));
    const json manifest = json::parse(slurp(d.path / "manifest.json"));
    CHECK(manifest["command"] == "simulate");
    CHECK(manifest.contains("seed"));
    CHECK(manifest["outputs"].size() >= 3);
    const json resolved = json::parse(slurp(d.path / "config.resolved.json"));
    CHECK(resolved["traffic"]["n_requests"] == 500);
}

TEST_CASE("simulate with the same seed is byte-identical") {
    TempDir a("det-a"), b("det-b");
    for (const TempDir* d : {&a, &b}) {
        const Result r = cli({"--seed", "7", "--out-dir", d->str(), "simulate", "--set", "traffic.n_requests=800",
                              "--set", "cache.n_processes=2"});
        REQUIRE(r.code == kExitOk);
    }
    CHECK(slurp(a.path / "metrics.json") == slurp(b.path / "metrics.json"));
    CHECK(slurp(a.path / "metrics.csv") == slurp(b.path / "metrics.csv"));
}

TEST_CASE("simulate sweep and analytic comparison") {
    TempDir d("sweep");
    Result r = cli({"--out-dir", d.str(), "simulate", "--set", "sweep.sizes=[4,16,64]", "--set",
                    "traffic.n_requests=600"});
    REQUIRE(r.code == kExitOk);
    const json s = json::parse(slurp(d.path / "sweep.json"));
    CHECK(s["sweep"].size() == 3);
    r = cli({"--out-dir", d.str(), "simulate", "--set", "output.compare_analytic=true", "--set",
             "output.timeseries=true", "--set", "traffic.n_requests=600"});
    REQUIRE(r.code == kExitOk);
    CHECK(json::parse(slurp(d.path / "metrics.json")).contains("analytic_comparison"));
    CHECK(fs::exists(d.path / "timeseries.csv"));
}

TEST_CASE("configuration problems exit 2") {
    TempDir d("bad");
    CHECK(cli({"--config", d.str("missing.yaml"), "--out-dir", d.str(), "simulate"}).code == kExitConfig);
    const Result r = cli({"--out-dir", d.str(), "simulate", "--set", "cache.bogus=1"});
    CHECK(r.code == kExitConfig);
    CHECK(r.err.find("cache.bogus") != std::string::npos);
    CHECK(cli({"--out-dir", d.str(), "simulate", "--format", "xml"}).code == kExitConfig);
    CHECK(cli({"--no-such-flag"}).code == kExitConfig);
    CHECK(cli({"--help"}).code == kExitOk);
}

TEST_CASE("analyze reproduces the worked example") {
    const Result r = cli({"analyze", "--paper-example"});
    REQUIRE(r.code == kExitOk);
    CHECK(r.out.find("rho1=0.0866") != std::string::npos);
    CHECK(r.out.find("response time=2.5 s") != std::string::npos);
    const Result j = cli({"--format", "json", "analyze", "--paper-example"});
    const json doc = json::parse(j.out);
    CHECK(doc["as_printed"]["rho2"].get<double>() == doctest::Approx(20.0 / 33.0));
}

TEST_CASE("analyze validates and warns") {
    CHECK(cli({"analyze", "--lambda", "100", "--p12", "1.5", "--mu1", "1000", "--mu2", "33"}).code == kExitConfig);
    const Result r = cli({"analyze", "--lambda", "100", "--p12", "0.5", "--mu1", "1000", "--mu2", "33"});
    CHECK(r.code == kExitOk);
    CHECK(r.out.find("warning") != std::string::npos);
    const Result j = cli({"--format", "json", "analyze", "--lambda", "10", "--p12", "0.5", "--mu1", "1000", "--mu2",
                          "20", "--processes", "2", "--reads", "100"});
    REQUIRE(j.code == kExitOk);
    const json doc = json::parse(j.out);
    CHECK(doc["rho2"].get<double>() == doctest::Approx(0.25));
    CHECK(doc["L2"].get<double>() == doctest::Approx(0.25 * 0.25 / 0.75));
}

TEST_CASE("fit recovers an exact model and rejects too little data") {
    TempDir d("fit");
    const DeviceModel truth = load_paper_model(Device::NvmeRead);
    Rng rng(3);
    std::vector<TrainingSample> samples;
    const double threads[] = {8, 16, 32, 64};
    for (int tries = 0; samples.size() < 60 && tries < 100000; ++tries) {
        TrainingSample s;
        s.x = {threads[rng.below(4)], 1000.0 + rng.below(1000), 512.0 * (1u << rng.below(8)),
               1000.0 + 1000.0 * rng.below(1000), 1e9 * (0.5 + 100 * rng.uniform())};
        const Prediction p = predict(truth, s.x);
        if (p.seconds <= 0.0) continue;
        s.observed_time = p.seconds;
        samples.push_back(s);
    }
    REQUIRE(samples.size() == 60);
    {
        std::ofstream out(d.path / "train.csv");
        write_training(out, samples);
    }
    Result r = cli({"--out-dir", d.str(), "--format", "json", "fit", "--training", d.str("train.csv"), "--device",
                    "nvme-read"});
    REQUIRE(r.code == kExitOk);
    const json model = json::parse(slurp(d.path / "model-nvme-read.json"));
    const auto coef = model["coefficients"].get<std::vector<double>>();
    REQUIRE(coef.size() == truth.coefficients.size());
    for (std::size_t i = 0; i < coef.size(); ++i)
        CHECK(coef[i] == doctest::Approx(truth.coefficients[i]).epsilon(1e-6));

    samples.resize(2);
    {
        std::ofstream out(d.path / "tiny.csv");
        write_training(out, samples);
    }
    r = cli({"--out-dir", d.str(), "fit", "--training", d.str("tiny.csv"), "--device", "nvme-read"});
    CHECK(r.code == kExitRuntime);
    CHECK(cli({"--out-dir", d.str(), "fit", "--device", "nvme-read"}).code == kExitConfig);
    CHECK(cli({"--out-dir", d.str(), "fit", "--paper-coefficients", "hdd-write"}).code == kExitOk);
    CHECK(fs::exists(d.path / "model-hdd-write.json"));
}

TEST_CASE("gen-trace is reproducible and loads back") {
    TempDir d("gen");
    for (const char* name : {"a.csv", "b.csv"}) {
        const Result r = cli({"--seed", "11", "gen-trace", "--model", "irm", "--n", "300", "--pages", "50", "--zipf",
                              "0.8", "--out", d.str(name)});
        REQUIRE(r.code == kExitOk);
    }
    CHECK(slurp(d.path / "a.csv") == slurp(d.path / "b.csv"));
    CHECK(load_trace(d.path / "a.csv").size() == 300);

    REQUIRE(cli({"gen-trace", "--n", "0", "--out", d.str("empty.csv")}).code == kExitOk);
    CHECK(slurp(d.path / "empty.csv") == "arrival_time,file_id,offset,size,kind\n");

    CHECK(cli({"gen-trace", "--model", "poisson", "--zipf", "0.5", "--out", d.str("x.csv")}).code == kExitConfig);
    CHECK(cli({"gen-trace", "--model", "irm", "--lifetime", "2", "--out", d.str("x.csv")}).code == kExitConfig);
    CHECK(cli({"gen-trace", "--model", "trace", "--out", d.str("x.csv")}).code == kExitConfig);
}
