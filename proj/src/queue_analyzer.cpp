#include "tiered/queue_analyzer.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <ostream>
#include <stdexcept>

#include "tiered/errors.hpp"

namespace tiered {

namespace {

void require_positive(double v, const char* field) {
    if (!(v > 0.0) || !std::isfinite(v)) throw ConfigError(field, "must be positive");
}

void require_stable(std::uint32_t k, double a) {
    if (k == 0) throw std::invalid_argument("queue needs at least one server");
    if (!(a >= 0.0) || !(a < static_cast<double>(k)))
        throw std::domain_error("offered load must lie in [0, k)");
}

// a^n / n!, built incrementally to stay finite for large n.
double poisson_term(double a, std::uint32_t n) {
    double t = 1.0;
    for (std::uint32_t i = 1; i <= n; ++i) t *= a / static_cast<double>(i);
    return t;
}

nlohmann::json optional_json(const std::optional<double>& v) {
    return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

}  // namespace

void validate(const QueueNetworkParams& params) {
    if (!(params.arrival_rate >= 0.0) || !std::isfinite(params.arrival_rate))
        throw ConfigError("lambda", "must be non-negative");
    require_positive(params.hit_service_rate, "mu1");
    if (params.hit_read_rate) require_positive(*params.hit_read_rate, "mu1_read");
    if (params.hit_write_rate) require_positive(*params.hit_write_rate, "mu1_write");
    require_positive(params.miss_service_rate, "mu2");
    if (!(params.miss_rate >= 0.0 && params.miss_rate <= 1.0))
        throw ConfigError("p12", "must lie in [0, 1]");
    if (params.servers == 0) throw ConfigError("k", "must be at least 1");
    for (const auto& p : params.processes) {
        if (p.reads < 0 || p.writes < 0 || p.misses < 0)
            throw ConfigError("processes", "request counts must be non-negative");
    }
}

ServiceTimeBounds service_time_bounds(const QueueNetworkParams& params) {
    require_positive(params.read_rate(), "mu1_read");
    require_positive(params.write_rate(), "mu1_write");
    require_positive(params.miss_service_rate, "mu2");
    ServiceTimeBounds b;
    for (const auto& p : params.processes) {
        const double th = p.reads / params.read_rate() + p.writes / params.write_rate();
        const double tm = p.misses / params.miss_service_rate;
        b.hit_time.push_back(th);
        b.miss_time.push_back(tm);
        b.process_time.push_back(std::max(th, tm));
        b.total = std::max(b.total, b.process_time.back());
    }
    return b;
}

double merged_service_time(double miss_rate, double mu1, double mu2) {
    if (!(mu1 > 0.0) || !(mu2 > 0.0)) throw std::invalid_argument("service rates must be positive");
    return (1.0 - miss_rate) / mu1 + miss_rate / mu2;
}

double mmk_empty_probability(std::uint32_t k, double offered_load) {
    require_stable(k, offered_load);
    const double a = offered_load;
    double sum = 0.0;
    double term = 1.0;
    for (std::uint32_t n = 0; n < k; ++n) {
        sum += term;
        term *= a / static_cast<double>(n + 1);
    }
    // term is now a^k / k!
    sum += term / (1.0 - a / static_cast<double>(k));
    return 1.0 / sum;
}

double mmk_queue_length(std::uint32_t k, double offered_load) {
    require_stable(k, offered_load);
    const double a = offered_load;
    const double gap = static_cast<double>(k) - a;
    // a^(k+1) / (k-1)! = a^2 * a^(k-1)/(k-1)!
    return mmk_empty_probability(k, a) * a * a * poisson_term(a, k - 1) / (gap * gap);
}

double erlang_c(std::uint32_t k, double offered_load) {
    require_stable(k, offered_load);
    const double a = offered_load;
    const double u = a / static_cast<double>(k);
    double partial = 0.0;
    double term = 1.0;
    for (std::uint32_t n = 0; n < k; ++n) {
        partial += term;
        term *= a / static_cast<double>(n + 1);
    }
    const double tail = term / (1.0 - u);
    return tail / (partial + tail);
}

double mmk_queue_length_erlang(std::uint32_t k, double offered_load) {
    const double a = offered_load;
    return erlang_c(k, a) * a / (static_cast<double>(k) - a);
}

double mm1_queue_length(double rho) {
    if (!(rho >= 0.0 && rho < 1.0)) throw std::domain_error("M/M/1 utilization must lie in [0, 1)");
    return rho * rho / (1.0 - rho);
}

QueueNetworkReport analyze_separate_queues(const QueueNetworkParams& params) {
    validate(params);
    QueueNetworkReport r;
    const double lambda = params.arrival_rate;
    const double p = params.miss_rate;
    const double mu1 = params.hit_service_rate;
    const double mu2 = params.miss_service_rate;
    const std::uint32_t k = params.servers;

    if (!params.processes.empty()) r.bounds = service_time_bounds(params);
    r.merged_service_time = merged_service_time(p, mu1, mu2);
    r.effective_arrival = (1.0 - p) * lambda + mu2;
    r.rho1 = r.effective_arrival / mu1;
    r.rho1_per_server = r.rho1 / static_cast<double>(k);
    r.rho2 = p * lambda / mu2;
    r.in_equilibrium = r.rho1 < 1.0 && r.rho2 < 1.0;

    if (r.rho1 < static_cast<double>(k)) {
        r.L1 = mmk_queue_length(k, r.rho1);
        r.L1_erlang = mmk_queue_length_erlang(k, r.rho1);
        r.W1 = *r.L1 / r.effective_arrival;
    } else {
        r.warnings.push_back("tier-1 queue saturated: rho1 >= k, L1/W1 undefined");
    }
    if (r.rho2 < 1.0) {
        r.L2 = mm1_queue_length(r.rho2);
        const double miss_arrivals = lambda * p;
        r.W2 = miss_arrivals > 0.0 ? *r.L2 / miss_arrivals : 0.0;
    } else {
        r.warnings.push_back("miss queue saturated: rho2 >= 1, L2/W2 undefined");
    }
    if (!r.in_equilibrium)
        r.warnings.push_back("system not in equilibrium; use the service-time bounds as minimum times");
    return r;
}

GgkApproximation ggk_allen_cunneen(std::uint32_t k, double arrival_rate, double mean_service_time,
                                   double arrival_scv, double service_scv) {
    if (!(mean_service_time > 0.0)) throw std::invalid_argument("mean service time must be positive");
    if (!(arrival_scv >= 0.0) || !(service_scv >= 0.0))
        throw std::invalid_argument("squared coefficients of variation must be non-negative");
    const double a = arrival_rate * mean_service_time;
    GgkApproximation g;
    g.Lq = mmk_queue_length_erlang(k, a) * (arrival_scv + service_scv) / 2.0;
    g.Wq = arrival_rate > 0.0 ? g.Lq / arrival_rate : 0.0;
    return g;
}

WorkedExample example_walkthrough() {
    constexpr double kRequests = 10000;
    constexpr double kProcesses = 4;
    WorkedExample ex;
    ex.params.arrival_rate = 100.0;
    ex.params.miss_rate = 0.2;
    ex.params.hit_service_rate = 1000.0;
    ex.params.miss_service_rate = 33.0;
    ex.params.servers = 1;
    ex.requests_per_process = kRequests / kProcesses;
    ex.misses_per_process = ex.params.miss_rate * ex.requests_per_process;
    // Every request, hit or refilled miss, is answered by tier 1.
    for (int i = 0; i < static_cast<int>(kProcesses); ++i)
        ex.params.processes.push_back({ex.requests_per_process, 0.0, ex.misses_per_process});
    ex.report = analyze_separate_queues(ex.params);
    ex.printed_rho1 = ex.printed_effective_arrival / ex.params.hit_service_rate;
    ex.arrival_duration = ex.requests_per_process / ex.printed_effective_arrival;
    ex.response_time = ex.requests_per_process / ex.params.hit_service_rate;
    return ex;
}

nlohmann::json to_json(const QueueNetworkReport& r) {
    nlohmann::json j;
    if (r.bounds) {
        j["bounds"] = {{"T_h", r.bounds->hit_time},
                       {"T_m", r.bounds->miss_time},
                       {"T_i", r.bounds->process_time},
                       {"T", r.bounds->total}};
    }
    j["effective_arrival"] = r.effective_arrival;
    j["rho1"] = r.rho1;
    j["rho1_per_server"] = r.rho1_per_server;
    j["rho2"] = r.rho2;
    j["L1"] = optional_json(r.L1);
    j["L1_erlang"] = optional_json(r.L1_erlang);
    j["W1"] = optional_json(r.W1);
    j["L2"] = optional_json(r.L2);
    j["W2"] = optional_json(r.W2);
    j["merged_service_time"] = r.merged_service_time;
    j["in_equilibrium"] = r.in_equilibrium;
    j["warnings"] = r.warnings;
    return j;
}

nlohmann::json to_json(const WorkedExample& ex) {
    return {{"from_formulas", to_json(ex.report)},
            {"as_printed",
             {{"effective_arrival", ex.printed_effective_arrival},
              {"rho1", ex.printed_rho1},
              {"rho2", ex.report.rho2},
              {"arrival_duration", ex.arrival_duration},
              {"response_time", ex.response_time}}},
            {"requests_per_process", ex.requests_per_process},
            {"misses_per_process", ex.misses_per_process}};
}

void print_table(std::ostream& out, const QueueNetworkReport& r) {
    auto row = [&](const char* name, const std::optional<double>& v, const char* unit) {
        out << std::left << std::setw(26) << name;
        if (v) {
            out << std::setprecision(6) << *v << ' ' << unit << '\n';
        } else {
            out << "n/a\n";
        }
    };
    if (r.bounds) {
        for (std::size_t i = 0; i < r.bounds->process_time.size(); ++i) {
            out << "process " << i << ": T_h=" << r.bounds->hit_time[i] << " s  T_m="
                << r.bounds->miss_time[i] << " s  T_i=" << r.bounds->process_time[i] << " s\n";
        }
        row("T (all processes)", r.bounds->total, "s");
    }
    row("effective arrival", r.effective_arrival, "req/s");
    row("rho1", r.rho1, "");
    row("rho1 per server", r.rho1_per_server, "");
    row("rho2", r.rho2, "");
    row("L1", r.L1, "requests");
    row("L1 (Erlang C)", r.L1_erlang, "requests");
    row("W1", r.W1, "s");
    row("L2", r.L2, "requests");
    row("W2", r.W2, "s");
    row("merged service time", r.merged_service_time, "s");
    out << std::left << std::setw(26) << "equilibrium" << (r.in_equilibrium ? "yes" : "NO") << '\n';
    for (const auto& w : r.warnings) out << "warning: " << w << '\n';
}

void print_table(std::ostream& out, const WorkedExample& ex) {
    out << "worked example: lambda=" << ex.params.arrival_rate << " p12=" << ex.params.miss_rate
        << " mu1=" << ex.params.hit_service_rate << " mu2=" << ex.params.miss_service_rate
        << ", 4 processes\n";
    out << "requests per process     " << ex.requests_per_process << '\n';
    out << "misses per process       " << ex.misses_per_process << '\n';
    out << "-- as printed --\n";
    out << "effective arrival        " << ex.printed_effective_arrival << " req/s\n";
    out << "rho1=" << std::setprecision(6) << ex.printed_rho1 << '\n';
    out << "rho2=" << ex.report.rho2 << '\n';
    out << "arrival duration T=" << ex.arrival_duration << " s\n";
    out << "response time=" << ex.response_time << " s\n";
    out << "-- from formulas --\n";
    print_table(out, ex.report);
}

}  // namespace tiered
