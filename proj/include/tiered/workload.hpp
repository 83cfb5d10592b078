#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace tiered {

enum class RequestKind : std::uint8_t { Read, Write };

struct Request {
    double arrival_time = 0.0;  // seconds
    std::uint64_t file_id = 0;
    std::uint64_t offset = 0;   // bytes
    std::uint64_t size = 1;     // bytes
    RequestKind kind = RequestKind::Read;

    bool operator==(const Request&) const = default;
};

enum class TrafficModel : std::uint8_t { Poisson, Irm, Trace };

std::string_view to_string(TrafficModel model);
TrafficModel traffic_model_from_string(std::string_view name);

struct TrafficSpec {
    TrafficModel model = TrafficModel::Poisson;
    std::size_t n_requests = 1000;
    std::uint64_t page_size = 8192;
    std::uint64_t request_size = 512;
    std::size_t n_pages = 256;
    double arrival_rate = 100.0;  // requests / second
    double read_fraction = 1.0;

    // IRM: page rank r (0-based) is drawn with probability proportional to
    // (r + 1)^-zipf_exponent. A page expires after popularity_cap requests and
    // its rank is taken over by a fresh page. 0 disables expiry.
    double zipf_exponent = 1.0;
    std::size_t popularity_cap = 0;

    // Poisson: a page's selection weight decays as exp(-age / mean_lifetime),
    // age measured from its introduction. One page is introduced every
    // page_intro_interval requests (0 means n_requests / n_pages).
    double mean_lifetime = 1.0;  // seconds
    std::size_t page_intro_interval = 0;

    std::string trace_path;  // Trace only
    std::uint64_t rng_seed = 1;
};

/// Throws ConfigError naming the first invalid field.
void validate(const TrafficSpec& spec);

/// Slow-evolving recency workload: a new page every 4 requests, 6 s mean lifetime.
TrafficSpec poisson_recency_preset(std::size_t n_requests, std::uint64_t seed);
/// Popularity workload: 5000 pages, Zipf exponent 0.9, no expiry.
TrafficSpec irm_popularity_preset(std::size_t n_requests, std::uint64_t seed);

std::vector<Request> generate_poisson(const TrafficSpec& spec);
std::vector<Request> generate_irm(const TrafficSpec& spec);

/// Dispatches on spec.model; Trace loads spec.trace_path whole (n_requests is ignored).
std::vector<Request> generate(const TrafficSpec& spec);

/// Normalized Zipf law over n ranks: p[r] = (r+1)^-s / H(n, s).
std::vector<double> zipf_probabilities(std::size_t n, double exponent);

// Trace CSV: header `arrival_time,file_id,offset,size,kind`, kind R or W.
std::vector<Request> parse_trace(std::istream& in);
std::vector<Request> load_trace(const std::filesystem::path& path);
void write_trace(std::ostream& out, std::span<const Request> requests);
void save_trace(const std::filesystem::path& path, std::span<const Request> requests);

}  // namespace tiered
