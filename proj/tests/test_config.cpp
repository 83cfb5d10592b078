#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "tiered/config.hpp"
#include "tiered/errors.hpp"

using namespace tiered;

namespace {

std::string field_of(const std::string& text, std::vector<std::string> overrides = {}) {
    try {
        parse_run_config(text, overrides);
    } catch (const ConfigError& e) {
        return e.field();
    }
    return "";
}

}  // namespace

TEST_CASE("minimal file gives the defaults") {
    const RunConfig c = parse_run_config("version: 1\n");
    const SimConfig d;
    CHECK(c.sim.cache.n_lines == d.cache.n_lines);
    CHECK(c.sim.hit_service_rate == d.hit_service_rate);
    CHECK(c.sim.eviction == d.eviction);
    CHECK(c.sweep_sizes.empty());
    CHECK_FALSE(c.write_timeseries);
}

TEST_CASE("full file is read into the simulation config") {
    const std::string yaml = R"(
version: 1
seed: 42
traffic:
  model: irm
  n_requests: 5000
  n_pages: 300
  zipf_exponent: 0.7
  read_fraction: 0.5
cache:
  n_lines: 32
  n_processes: 2
  mapping: block_cyclic
  block_size: 4
eviction:
  policy: ws
  experts: [lfu, lru]
  alpha: 0.25
  mode: literal
  poll_requests: 8
prefetch:
  enabled: true
  width: 2
tier2:
  service_rate: 50
  mode: shared
  servers: 2
run:
  timing: functional
  warmup_fraction: 0.2
output:
  timeseries: true
)";
    const RunConfig c = parse_run_config(yaml);
    CHECK(c.sim.seed == 42);
    CHECK(c.sim.traffic.model == TrafficModel::Irm);
    CHECK(c.sim.traffic.n_requests == 5000);
    CHECK(c.sim.traffic.zipf_exponent == 0.7);
    CHECK(c.sim.cache.n_processes == 2);
    CHECK(c.sim.cache.mapping == Mapping::BlockCyclic);
    CHECK(c.sim.eviction == EvictionPolicy::WeightSharing);
    REQUIRE(c.sim.ensemble.experts.size() == 2);
    CHECK(c.sim.ensemble.experts[0] == Expert::Lfu);
    CHECK(c.sim.ensemble.mode == PenaltyMode::Literal);
    CHECK(c.sim.poll_requests == 8);
    CHECK(c.sim.prefetch_enabled);
    CHECK(c.sim.prefetch_width == 2);
    CHECK(c.sim.miss_service_rate == 50.0);
    CHECK(c.sim.tier2_mode == Tier2Mode::Shared);
    CHECK(c.sim.shared_tier2_servers == 2);
    CHECK(c.sim.timing == Timing::Functional);
    CHECK(c.write_timeseries);
}

TEST_CASE("schema errors name the key") {
    CHECK(field_of("seed: 1\n") == "version");
    CHECK(field_of("version: 2\n") == "version");
    CHECK(field_of("version: 1\ncache:\n  n_line: 3\n") == "cache.n_line");
    CHECK(field_of("version: 1\nbogus: 1\n") == "bogus");
    CHECK(field_of("version: 1\ncache:\n  n_lines: -3\n") == "cache.n_lines");
    CHECK(field_of("version: 1\ntier1:\n  service_rate: 0\n") == "tier1.service_rate");
    CHECK(field_of("version: 1\neviction:\n  experts: [lru, mru]\n") == "eviction.experts");
    CHECK(field_of("version: 1\nsweep:\n  sizes: [16, 8]\n") == "sweep.sizes");
    CHECK(field_of("version: 1\nrun:\n  timing: fast\n") == "run.timing");
    CHECK(field_of("version: [1\n") == "config");
    CHECK(field_of("- 1\n- 2\n") == "config");
}

TEST_CASE("overrides apply before validation") {
    const std::vector<std::string> set{"cache.n_lines=128", "sweep.sizes=[8,16,32]", "eviction.policy=lru"};
    const RunConfig c = parse_run_config("version: 1\ncache:\n  n_lines: 4\n", set);
    CHECK(c.sim.cache.n_lines == 128);
    CHECK(c.sweep_sizes == std::vector<std::size_t>{8, 16, 32});
    CHECK(c.sim.eviction == EvictionPolicy::Lru);

    CHECK(field_of("version: 1\n", {"cache.nope=1"}) == "cache.nope");
    CHECK(field_of("version: 1\n", {"no_equals_sign"}) == "--set");
    CHECK(field_of("version: 1\n", {"tier2.service_rate=-1"}) == "tier2.service_rate");
}

TEST_CASE("resolved JSON reloads to the same configuration") {
    const std::vector<std::string> set{"seed=9",           "eviction.policy=ws",
                                       "prefetch.enabled=true", "tier1.model=nvme_read",
                                       "tier1.x=[16,1000,4096,10000,1e10]", "sweep.sizes=[4,8]",
                                       "run.horizon_time=12.5"};
    const RunConfig a = parse_run_config("version: 1\n", set);
    const nlohmann::json ja = to_json(a);
    CHECK(ja["version"] == kConfigVersion);
    const RunConfig b = parse_run_config(ja.dump(2));
    CHECK(to_json(b) == ja);
    CHECK(b.sim.seed == 9);
    CHECK(b.sim.horizon_time == 12.5);
    CHECK(b.sim.tier1_model.has_value());
}

TEST_CASE("missing file is a config error naming the path") {
    const auto path = std::filesystem::temp_directory_path() / "tiered-no-such-config.yaml";
    std::filesystem::remove(path);
    try {
        load_run_config(path);
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find(path.string()) != std::string::npos);
    }
    std::ofstream(path) << "version: 1\nseed: 5\n";
    CHECK(load_run_config(path).sim.seed == 5);
    std::filesystem::remove(path);
}

TEST_CASE("enum names round-trip") {
    for (Timing t : {Timing::Event, Timing::Functional}) CHECK(timing_from_string(to_string(t)) == t);
    for (Tier2Mode m : {Tier2Mode::PerProcess, Tier2Mode::Shared}) CHECK(tier2_mode_from_string(to_string(m)) == m);
    CHECK_THROWS_AS(tier2_mode_from_string("pooled"), ConfigError);
}
