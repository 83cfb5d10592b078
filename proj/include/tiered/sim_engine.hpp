#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "tiered/device_models.hpp"
#include "tiered/eviction.hpp"
#include "tiered/queue_analyzer.hpp"
#include "tiered/tier1_cache.hpp"
#include "tiered/workload.hpp"

namespace tiered {

/// Event: requests flow through timed tier-1/tier-2 queues, fills land when
/// the tier-2 fetch completes. Functional: the cache state machine alone,
/// fills are immediate and no time passes; miss counts depend only on the
/// access order.
enum class Timing : std::uint8_t { Event, Functional };

/// PerProcess: one IO server per process. Shared: every process's tier-2 work
/// goes through one pool of `shared_tier2_servers`.
enum class Tier2Mode : std::uint8_t { PerProcess, Shared };

struct SimConfig {
    TrafficSpec traffic;  // traffic.rng_seed is replaced by `seed`
    CacheConfig cache;
    EvictionPolicy eviction = EvictionPolicy::WeightSharing;
    EnsembleParams ensemble;

    bool prefetch_enabled = false;
    std::size_t prefetch_width = 4;
    std::size_t prefetch_history = 4;

    double hit_service_rate = 1000.0;  // mu1, exponential service
    std::optional<Device> tier1_model;  // constant service time from the model instead
    Predictors tier1_model_x{};
    double miss_service_rate = 33.0;   // mu2, exponential service
    std::optional<Device> tier2_model;  // mean service time from the model instead
    Predictors tier2_model_x{};
    double service_floor = 1e-6;       // seconds

    std::uint32_t k_service_threads = 1;
    Tier2Mode tier2_mode = Tier2Mode::PerProcess;
    std::uint32_t shared_tier2_servers = 1;
    bool coalesce = true;
    std::size_t poll_requests = 16;  // requests per polling iteration of the learner
    Timing timing = Timing::Event;
    bool prewarm = false;  // fill caches with the first distinct pages before the run

    double horizon_time = std::numeric_limits<double>::infinity();
    std::size_t horizon_requests = 0;  // 0: whole trace
    double warmup_fraction = 0.1;
    double sample_interval = 0.0;  // 0: 1/256 of the arrival span
    bool check_invariants = false;

    std::uint64_t seed = 1;
};

/// Throws ConfigError on the first invalid field.
void validate(const SimConfig& config);

/// Log2-spaced response-time histogram; bin i covers [2^i, 2^(i+1)) microseconds,
/// bin 0 also takes everything below 2 us, the last bin everything above.
struct Histogram {
    static constexpr std::size_t kBins = 40;
    std::array<std::uint64_t, kBins> counts{};
    void add(double seconds);
    std::uint64_t total() const;
};

struct ProcessMetrics {
    std::uint64_t requests = 0;
    std::uint64_t hits = 0;
    std::uint64_t misses = 0;
    std::uint64_t prefetch_hits = 0;
    std::uint64_t evictions = 0;
    std::uint64_t dirty_writebacks = 0;
    std::uint64_t tier2_fetches = 0;   // demand fetches actually issued
    std::uint64_t coalesced = 0;       // misses folded into a pending demand fetch
    std::uint64_t prefetches_issued = 0;
    std::uint64_t prefetches_landed = 0;
    std::uint64_t reads = 0;
    std::uint64_t writes = 0;
    std::uint64_t completed = 0;

    double mean_response = 0.0;  // seconds
    double max_response = 0.0;
    double hit_service_time = 0.0;   // observed T_h: summed tier-1 service
    double miss_service_time = 0.0;  // observed T_m: summed tier-2 demand service
    double completion_time = 0.0;    // last completion
    double tier2_busy_time = 0.0;

    // Steady state (after warm-up).
    double mean_miss_queue_length = 0.0;  // time-average number waiting
    double mean_miss_wait = 0.0;          // seconds waiting before service
    double steady_miss_rate = 0.0;
    std::uint64_t steady_requests = 0;

    double miss_rate() const {
        return requests == 0 ? 0.0 : static_cast<double>(misses) / static_cast<double>(requests);
    }
};

struct QueueSample {
    double t = 0.0;
    std::size_t process = 0;
    std::uint64_t miss_queue_length = 0;
};

struct SimMetrics {
    std::vector<ProcessMetrics> processes;
    ProcessMetrics aggregate;
    Histogram response_histogram;
    std::vector<QueueSample> miss_queue_series;
    double arrival_span = 0.0;  // first to last arrival
    double warmup_end = 0.0;    // start of the steady-state window
    double throughput = 0.0;    // completed requests / completion time
    bool unbounded_queue_growth = false;
    std::vector<std::vector<double>> final_expert_probs;  // per process, WS only
};

/// Runs one simulation on the trace the configuration generates.
SimMetrics run(const SimConfig& config);

/// Runs one simulation on an explicit trace (config.traffic is ignored).
SimMetrics run(const SimConfig& config, std::span<const Request> trace);

/// Trace generated by `run(config)`.
std::vector<Request> make_trace(const SimConfig& config);

struct SweepPoint {
    std::size_t n_lines = 0;
    double miss_rate = 0.0;
    std::uint64_t misses = 0;
};

/// One run per cache size on one shared trace. Sizes must be strictly increasing.
std::vector<SweepPoint> sweep_cache_size(const SimConfig& config, std::span<const std::size_t> sizes);

/// Queue-network inputs matching a run: per-process arrival rate, configured
/// service rates, measured miss rate and per-process counts.
QueueNetworkParams queue_params_for(const SimConfig& config, const SimMetrics& metrics);

struct ComparisonRow {
    std::string quantity;
    double simulated = 0.0;
    double analytic = 0.0;
    double relative_error = 0.0;
};

struct AnalyticComparison {
    bool empty = false;
    bool equilibrium = false;
    double measured_miss_rate = 0.0;
    QueueNetworkReport analytic;
    std::vector<ComparisonRow> rows;
    // Non-equilibrium: minimum completion time from the service-time bounds.
    double bound_total = 0.0;
    double observed_completion = 0.0;
    bool bound_respected = true;
};

/// Simulated steady-state miss-queue figures against the closed forms,
/// averaged over processes. `params.miss_rate` is replaced by the measured one.
AnalyticComparison compare_to_analytic(const SimMetrics& metrics, QueueNetworkParams params);

nlohmann::json to_json(const SimMetrics& metrics);
nlohmann::json to_json(const AnalyticComparison& comparison);
/// One row per process plus an aggregate row.
void write_metrics_csv(std::ostream& out, const SimMetrics& metrics);
/// Long format: t,process,metric,value
void write_timeseries_csv(std::ostream& out, const SimMetrics& metrics);

}  // namespace tiered
