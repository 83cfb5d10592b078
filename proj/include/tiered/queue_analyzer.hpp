#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

namespace tiered {

/// Request counts seen by one process.
struct ProcessCounts {
    double reads = 0.0;   // n_r, served by tier 1
    double writes = 0.0;  // n_w, served by tier 1
    double misses = 0.0;  // n_m, served by tier 2
};

struct QueueNetworkParams {
    double arrival_rate = 0.0;       // lambda, requests / second
    double hit_service_rate = 0.0;   // mu1
    std::optional<double> hit_read_rate;   // mu1 for reads, defaults to mu1
    std::optional<double> hit_write_rate;  // mu1 for writes, defaults to mu1
    double miss_service_rate = 0.0;  // mu2
    double miss_rate = 0.0;          // p12
    std::uint32_t servers = 1;       // k
    std::vector<ProcessCounts> processes;

    double read_rate() const { return hit_read_rate.value_or(hit_service_rate); }
    double write_rate() const { return hit_write_rate.value_or(hit_service_rate); }
};

/// Throws ConfigError naming the offending field.
void validate(const QueueNetworkParams& params);

/// Per-process lower bounds on completion time and their maximum.
struct ServiceTimeBounds {
    std::vector<double> hit_time;      // T_h,i = n_r/mu1r + n_w/mu1w
    std::vector<double> miss_time;     // T_m,i = n_m/mu2
    std::vector<double> process_time;  // T_i = max(T_h,i, T_m,i)
    double total = 0.0;                // T = max_i T_i
};

ServiceTimeBounds service_time_bounds(const QueueNetworkParams& params);

/// Mean service time of one queue fed by both populations:
/// (1 - p12)/mu1 + p12/mu2.
double merged_service_time(double miss_rate, double mu1, double mu2);

/// Empty-system probability of an M/M/k queue with offered load a = lambda/mu.
/// Requires a < k.
double mmk_empty_probability(std::uint32_t k, double offered_load);

/// Mean number waiting in an M/M/k queue in the product form
/// P0 * a^(k+1) / ((k-1)! (k-a)^2).
double mmk_queue_length(std::uint32_t k, double offered_load);

/// Erlang C probability of waiting.
double erlang_c(std::uint32_t k, double offered_load);

/// Mean number waiting in an M/M/k queue via Erlang C: C(k,a) * a / (k - a).
double mmk_queue_length_erlang(std::uint32_t k, double offered_load);

/// Mean number waiting in an M/M/1 queue: rho^2 / (1 - rho).
double mm1_queue_length(double rho);

struct QueueNetworkReport {
    std::optional<ServiceTimeBounds> bounds;  // when per-process counts were given
    double effective_arrival = 0.0;  // (1-p12)*lambda + mu2 into the k-server queue
    double rho1 = 0.0;               // effective_arrival / mu1
    double rho1_per_server = 0.0;    // rho1 / k
    double rho2 = 0.0;               // p12*lambda / mu2
    std::optional<double> L1;         // product form, needs rho1 < k
    std::optional<double> L1_erlang;  // Erlang C form of the same quantity
    std::optional<double> W1;
    std::optional<double> L2;  // needs rho2 < 1
    std::optional<double> W2;
    double merged_service_time = 0.0;
    bool in_equilibrium = false;
    std::vector<std::string> warnings;
};

/// Hits through a k-server queue, misses through a single-server IO queue
/// whose output re-enters the k-server queue.
QueueNetworkReport analyze_separate_queues(const QueueNetworkParams& params);

/// Allen-Cunneen approximation for a G/G/k queue:
/// Lq ~= Lq(M/M/k) * (ca2 + cs2) / 2, with ca2/cs2 the squared coefficients
/// of variation of interarrival and service times.
struct GgkApproximation {
    double Lq = 0.0;
    double Wq = 0.0;
    bool approximate = true;
};
GgkApproximation ggk_allen_cunneen(std::uint32_t k, double arrival_rate, double mean_service_time,
                                   double arrival_scv, double service_scv);

/// The four-process worked example: 10000 reads over 2000 pages of 512 KiB,
/// lambda = 100, p12 = 0.2, mu1 = 1000, mu2 = 33. The "as printed" figures use
/// an effective arrival of 86.6 req/s; the formula gives (1-p12)*lambda + mu2 = 113.
struct WorkedExample {
    QueueNetworkParams params;
    QueueNetworkReport report;      // from the formulas
    double requests_per_process = 0.0;
    double misses_per_process = 0.0;
    double printed_effective_arrival = 86.6;
    double printed_rho1 = 0.0;      // printed_effective_arrival / mu1
    double arrival_duration = 0.0;  // T with printed_effective_arrival * T = requests_per_process
    double response_time = 0.0;     // requests_per_process / mu1
};

WorkedExample example_walkthrough();

nlohmann::json to_json(const QueueNetworkReport& report);
nlohmann::json to_json(const WorkedExample& example);
void print_table(std::ostream& out, const QueueNetworkReport& report);
void print_table(std::ostream& out, const WorkedExample& example);

}  // namespace tiered
